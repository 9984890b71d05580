// SPDX-License-Identifier: Apache-2.0
#include "ugda/models.hpp"

namespace ugda {

const std::vector<VariantInfo>& variant_table() {
  static const std::vector<VariantInfo> table = {
      {"baseline", "Baseline", false, false, false},
      {"loss", "Loss-only", false, true, false},
      {"attn", "Attention-only", true, false, false},
      {"ds", "DS-only", false, false, true},
      {"full", "UGDA-Net", true, true, true},
  };
  return table;
}

const VariantInfo& variant_info(const std::string& token) {
  for (const auto& v : variant_table())
    if (v.token == token) return v;
  throw std::invalid_argument("unknown variant '" + token +
                              "' (expected baseline|loss|attn|ds|full)");
}

const VariantInfo& variant_info_for(const VariantConfig& cfg) {
  for (const auto& v : variant_table())
    if (v.use_attention == cfg.use_attention && v.use_entropy_loss == cfg.use_entropy_loss &&
        v.use_deep_supervision == cfg.use_deep_supervision)
      return v;
  throw std::invalid_argument("flag combination matches no named variant");
}

VariantConfig make_variant(const std::string& backbone, const std::string& token) {
  if (backbone != "unet" && backbone != "linknet")
    throw std::invalid_argument("unknown backbone '" + backbone + "' (expected unet|linknet)");
  const VariantInfo& v = variant_info(token);
  VariantConfig cfg;
  cfg.backbone = backbone;
  cfg.use_attention = v.use_attention;
  cfg.use_entropy_loss = v.use_entropy_loss;
  cfg.use_deep_supervision = v.use_deep_supervision;
  return cfg;
}

template <typename S>
ResidualBlock<S>::ResidualBlock(const std::string& name, Index in_ch, Index out_ch, int stride,
                                std::mt19937_64& rng)
    : conv1(name + ".conv1", in_ch, out_ch, 3, stride, 1, false, rng),
      bn1(name + ".bn1", out_ch),
      conv2(name + ".conv2", out_ch, out_ch, 3, 1, 1, false, rng),
      bn2(name + ".bn2", out_ch),
      projected(stride != 1 || in_ch != out_ch) {
  if (projected) {
    down_conv = Conv2d<S>(name + ".down.conv", in_ch, out_ch, 1, stride, 0, false, rng);
    down_bn = BatchNorm2d<S>(name + ".down.bn", out_ch);
  }
}

template <typename S>
Var<S> ResidualBlock<S>::forward(Tape<S>& t, Var<S> x, bool training) {
  Var<S> h = relu(bn1.forward(t, conv1.forward(t, x), training));
  h = bn2.forward(t, conv2.forward(t, h), training);
  Var<S> skip = projected ? down_bn.forward(t, down_conv.forward(t, x), training) : x;
  return relu(add(h, skip));
}

template <typename S>
void ResidualBlock<S>::collect(std::vector<Parameter<S>*>& ps) {
  conv1.collect(ps);
  bn1.collect(ps);
  conv2.collect(ps);
  bn2.collect(ps);
  if (projected) {
    down_conv.collect(ps);
    down_bn.collect(ps);
  }
}

template <typename S>
void ResidualBlock<S>::collect_buffers(std::vector<BufferRef<S>>& bs) {
  bn1.collect_buffers(bs);
  bn2.collect_buffers(bs);
  if (projected) down_bn.collect_buffers(bs);
}

template <typename S>
Encoder<S>::Encoder(const std::string& name, std::mt19937_64& rng)
    : stem(name + ".stem", 3, 64, 7, 2, 3, rng) {
  const Index widths[4] = {64, 128, 256, 512};
  const int depths[4] = {3, 4, 6, 3};
  Index in_ch = 64;
  for (int li = 0; li < 4; ++li) {
    for (int b = 0; b < depths[li]; ++b) {
      const int stride = (b == 0 && li > 0) ? 2 : 1;
      layers[li].emplace_back(name + ".layer" + std::to_string(li + 1) + "." + std::to_string(b),
                              in_ch, widths[li], stride, rng);
      in_ch = widths[li];
    }
  }
}

template <typename S>
Var<S> Encoder<S>::forward_stem(Tape<S>& t, Var<S> x, bool training) {
  return stem.forward(t, x, training);
}

template <typename S>
Var<S> Encoder<S>::forward_layer(Tape<S>& t, int i, Var<S> x, bool training) {
  for (auto& block : layers[i]) x = block.forward(t, x, training);
  return x;
}

template <typename S>
void Encoder<S>::collect(std::vector<Parameter<S>*>& ps) {
  stem.collect(ps);
  for (auto& layer : layers)
    for (auto& block : layer) block.collect(ps);
}

template <typename S>
void Encoder<S>::collect_buffers(std::vector<BufferRef<S>>& bs) {
  stem.collect_buffers(bs);
  for (auto& layer : layers)
    for (auto& block : layer) block.collect_buffers(bs);
}

template <typename S>
UNetDecoderBlock<S>::UNetDecoderBlock(const std::string& name, Index in_ch, Index skip_ch,
                                      Index out_ch, std::mt19937_64& rng)
    : c1(name + ".c1", in_ch + skip_ch, out_ch, 3, 1, 1, rng),
      c2(name + ".c2", out_ch, out_ch, 3, 1, 1, rng) {}

template <typename S>
Var<S> UNetDecoderBlock<S>::forward(Tape<S>& t, Var<S> x, Var<S> skip, bool training) {
  const Shape& s = x.shape();
  const Index oh = skip.valid() ? skip.shape().h : s.h * 2;
  const Index ow = skip.valid() ? skip.shape().w : s.w * 2;
  Var<S> up = upsample_bilinear(x, oh, ow);
  if (skip.valid()) up = concat_channels(up, skip);
  return c2.forward(t, c1.forward(t, up, training), training);
}

template <typename S>
void UNetDecoderBlock<S>::collect(std::vector<Parameter<S>*>& ps) {
  c1.collect(ps);
  c2.collect(ps);
}

template <typename S>
void UNetDecoderBlock<S>::collect_buffers(std::vector<BufferRef<S>>& bs) {
  c1.collect_buffers(bs);
  c2.collect_buffers(bs);
}

template <typename S>
LinkNetDecoderBlock<S>::LinkNetDecoderBlock(const std::string& name, Index in_ch, Index out_ch,
                                            std::mt19937_64& rng)
    : reduce(name + ".reduce", in_ch, in_ch / 4, 1, 1, 0, rng),
      conv(name + ".conv", in_ch / 4, in_ch / 4, 3, 1, 1, rng),
      expand(name + ".expand", in_ch / 4, out_ch, 1, 1, 0, rng) {}

template <typename S>
Var<S> LinkNetDecoderBlock<S>::forward(Tape<S>& t, Var<S> x, bool training) {
  Var<S> h = reduce.forward(t, x, training);
  h = upsample_bilinear(h, h.shape().h * 2, h.shape().w * 2);
  h = conv.forward(t, h, training);
  return expand.forward(t, h, training);
}

template <typename S>
void LinkNetDecoderBlock<S>::collect(std::vector<Parameter<S>*>& ps) {
  reduce.collect(ps);
  conv.collect(ps);
  expand.collect(ps);
}

template <typename S>
void LinkNetDecoderBlock<S>::collect_buffers(std::vector<BufferRef<S>>& bs) {
  reduce.collect_buffers(bs);
  conv.collect_buffers(bs);
  expand.collect_buffers(bs);
}

template <typename S>
SegModel<S>::SegModel(const VariantConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.backbone != "unet" && cfg.backbone != "linknet")
    throw std::invalid_argument("unknown backbone '" + cfg.backbone + "' (expected unet|linknet)");
  if (cfg.pretrained_encoder)
    throw std::invalid_argument(
        "pretrained encoder weights are not bundled with this build; disable pretrained_encoder");
  std::mt19937_64 rng(seed);
  encoder_ = Encoder<S>("encoder", rng);
  if (cfg.use_attention) {
    const Index stage_ch[4] = {64, 128, 256, 512};
    attn_.reserve(4);
    for (int i = 0; i < 4; ++i)
      attn_.emplace_back("attn" + std::to_string(i + 2), stage_ch[i], 8, rng);
  }
  if (cfg.backbone == "unet") {
    // bottleneck 512 plus skips 256/128/64/64, then a skip-free block.
    unet_.reserve(5);
    unet_.emplace_back("decoder.0", 512, 256, 256, rng);
    unet_.emplace_back("decoder.1", 256, 128, 128, rng);
    unet_.emplace_back("decoder.2", 128, 64, 64, rng);
    unet_.emplace_back("decoder.3", 64, 64, 32, rng);
    unet_.emplace_back("decoder.4", 32, 0, 16, rng);
  } else {
    link_.reserve(5);
    link_.emplace_back("decoder.0", 512, 256, rng);
    link_.emplace_back("decoder.1", 256, 128, rng);
    link_.emplace_back("decoder.2", 128, 64, rng);
    link_.emplace_back("decoder.3", 64, 64, rng);
    link_.emplace_back("decoder.4", 64, 16, rng);
  }
  head_ = Conv2d<S>("head", 16, 1, 3, 1, 1, true, rng);
  if (cfg.use_deep_supervision) {
    aux_heads_.reserve(2);
    aux_heads_.emplace_back("aux_head.0", 256, 1, 1, 1, 0, true, rng);
    aux_heads_.emplace_back("aux_head.1", 512, 1, 1, 1, 0, true, rng);
  }
}

template <typename S>
ModelOutputs<S> SegModel<S>::forward(Tape<S>& t, Var<S> batch, bool training) {
  const Shape& bs = batch.shape();
  check(bs.c == 3, "model forward: expected 3-channel input, got " + bs.str());
  check(bs.h % 32 == 0 && bs.w % 32 == 0 && bs.h >= 32 && bs.w >= 32,
        "model forward: input side must be a multiple of 32, got " + bs.str());

  Var<S> s1 = encoder_.forward_stem(t, batch, training);
  Var<S> x = max_pool(s1, 3, 2, 1);
  Var<S> stages[4];
  for (int i = 0; i < 4; ++i) {
    x = encoder_.forward_layer(t, i, x, training);
    if (!attn_.empty()) x = attn_[i].forward(t, x);
    stages[i] = x;
  }

  Var<S> y;
  if (!unet_.empty()) {
    y = unet_[0].forward(t, stages[3], stages[2], training);
    y = unet_[1].forward(t, y, stages[1], training);
    y = unet_[2].forward(t, y, stages[0], training);
    y = unet_[3].forward(t, y, s1, training);
    y = unet_[4].forward(t, y, Var<S>{}, training);
  } else {
    y = add(link_[0].forward(t, stages[3], training), stages[2]);
    y = add(link_[1].forward(t, y, training), stages[1]);
    y = add(link_[2].forward(t, y, training), stages[0]);
    y = add(link_[3].forward(t, y, training), s1);
    y = link_[4].forward(t, y, training);
  }

  ModelOutputs<S> out;
  out.main_logits = head_.forward(t, y);
  if (training && !aux_heads_.empty()) {
    Var<S> a1 = upsample_bilinear(aux_heads_[0].forward(t, stages[2]), bs.h, bs.w);
    Var<S> a2 = upsample_bilinear(aux_heads_[1].forward(t, stages[3]), bs.h, bs.w);
    out.aux_logits = {a1, a2};
  }
  return out;
}

template <typename S>
std::vector<Parameter<S>*> SegModel<S>::parameters() {
  std::vector<Parameter<S>*> ps;
  encoder_.collect(ps);
  for (auto& a : attn_) a.collect(ps);
  for (auto& b : unet_) b.collect(ps);
  for (auto& b : link_) b.collect(ps);
  head_.collect(ps);
  for (auto& h : aux_heads_) h.collect(ps);
  return ps;
}

template <typename S>
std::vector<BufferRef<S>> SegModel<S>::buffers() {
  std::vector<BufferRef<S>> bs;
  encoder_.collect_buffers(bs);
  for (auto& b : unet_) b.collect_buffers(bs);
  for (auto& b : link_) b.collect_buffers(bs);
  return bs;
}

template <typename S>
Index count_parameters(SegModel<S>& m) {
  Index n = 0;
  for (const auto* p : m.parameters()) n += p->value.size();
  return n;
}

#define UGDA_INSTANTIATE_MODELS(S)       \
  template struct ResidualBlock<S>;      \
  template struct Encoder<S>;            \
  template struct UNetDecoderBlock<S>;   \
  template struct LinkNetDecoderBlock<S>;\
  template class SegModel<S>;            \
  template Index count_parameters<S>(SegModel<S>&);

UGDA_INSTANTIATE_MODELS(float)
UGDA_INSTANTIATE_MODELS(double)

#undef UGDA_INSTANTIATE_MODELS

}  // namespace ugda
