// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ugda/attention.hpp"
#include "ugda/layers.hpp"

namespace ugda {

struct VariantConfig {
  std::string backbone = "unet";  // unet | linknet
  bool use_attention = false;
  bool use_entropy_loss = false;
  bool use_deep_supervision = false;
  bool pretrained_encoder = false;
};

/// The five ablation variants in canonical declaration order. `token` is the
/// CLI name, `display` the table name.
struct VariantInfo {
  std::string token;
  std::string display;
  bool use_attention;
  bool use_entropy_loss;
  bool use_deep_supervision;
};

const std::vector<VariantInfo>& variant_table();
const VariantInfo& variant_info(const std::string& token);
const VariantInfo& variant_info_for(const VariantConfig& cfg);
VariantConfig make_variant(const std::string& backbone, const std::string& token);

template <typename S>
struct ModelOutputs {
  Var<S> main_logits;
  std::vector<Var<S>> aux_logits;  // (shallower, deeper) in train mode with DS
};

/// Two conv3x3+BN+ReLU blocks plus an identity or projected skip.
template <typename S>
struct ResidualBlock {
  Conv2d<S> conv1;
  BatchNorm2d<S> bn1;
  Conv2d<S> conv2;
  BatchNorm2d<S> bn2;
  bool projected = false;
  Conv2d<S> down_conv;
  BatchNorm2d<S> down_bn;

  ResidualBlock() = default;
  ResidualBlock(const std::string& name, Index in_ch, Index out_ch, int stride,
                std::mt19937_64& rng);
  Var<S> forward(Tape<S>& t, Var<S> x, bool training);
  void collect(std::vector<Parameter<S>*>& ps);
  void collect_buffers(std::vector<BufferRef<S>>& bs);
};

/// 34-layer residual encoder: 7x7/2 stem, 3x3/2 max pool, then block stacks
/// of depth 3/4/6/3 at widths 64/128/256/512.
template <typename S>
struct Encoder {
  ConvBnRelu<S> stem;
  std::vector<ResidualBlock<S>> layers[4];

  Encoder() = default;
  Encoder(const std::string& name, std::mt19937_64& rng);
  Var<S> forward_stem(Tape<S>& t, Var<S> x, bool training);
  Var<S> forward_layer(Tape<S>& t, int i, Var<S> x, bool training);
  void collect(std::vector<Parameter<S>*>& ps);
  void collect_buffers(std::vector<BufferRef<S>>& bs);
};

/// Upsample x2, concat skip when present, two conv3x3+BN+ReLU.
template <typename S>
struct UNetDecoderBlock {
  ConvBnRelu<S> c1;
  ConvBnRelu<S> c2;

  UNetDecoderBlock() = default;
  UNetDecoderBlock(const std::string& name, Index in_ch, Index skip_ch, Index out_ch,
                   std::mt19937_64& rng);
  Var<S> forward(Tape<S>& t, Var<S> x, Var<S> skip, bool training);
  void collect(std::vector<Parameter<S>*>& ps);
  void collect_buffers(std::vector<BufferRef<S>>& bs);
};

/// 1x1 reduce to C/4, upsample x2, 3x3, 1x1 expand; caller adds the skip.
template <typename S>
struct LinkNetDecoderBlock {
  ConvBnRelu<S> reduce;
  ConvBnRelu<S> conv;
  ConvBnRelu<S> expand;

  LinkNetDecoderBlock() = default;
  LinkNetDecoderBlock(const std::string& name, Index in_ch, Index out_ch, std::mt19937_64& rng);
  Var<S> forward(Tape<S>& t, Var<S> x, bool training);
  void collect(std::vector<Parameter<S>*>& ps);
  void collect_buffers(std::vector<BufferRef<S>>& bs);
};

/// Encoder-decoder segmentation model with optional per-stage attention
/// refinement and optional auxiliary heads on the two deepest stages.
template <typename S>
class SegModel {
 public:
  SegModel() = default;
  SegModel(const VariantConfig& cfg, std::uint64_t seed);

  /// batch is (N,3,S,S) with S divisible by 32. Training mode with deep
  /// supervision yields two aux logit maps upsampled to (S,S).
  ModelOutputs<S> forward(Tape<S>& t, Var<S> batch, bool training);

  std::vector<Parameter<S>*> parameters();
  std::vector<BufferRef<S>> buffers();
  const VariantConfig& config() const { return cfg_; }
  Index num_attention_modules() const { return static_cast<Index>(attn_.size()); }
  Index num_aux_heads() const { return static_cast<Index>(aux_heads_.size()); }

 private:
  VariantConfig cfg_;
  Encoder<S> encoder_;
  std::vector<UGDAModule<S>> attn_;            // stages 2..5 when enabled
  std::vector<UNetDecoderBlock<S>> unet_;      // 5 blocks when backbone == unet
  std::vector<LinkNetDecoderBlock<S>> link_;   // 5 blocks when backbone == linknet
  Conv2d<S> head_;
  std::vector<Conv2d<S>> aux_heads_;           // (stage-4 head, stage-5 head)
};

template <typename S>
Index count_parameters(SegModel<S>& m);

}  // namespace ugda
