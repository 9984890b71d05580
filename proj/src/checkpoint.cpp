// SPDX-License-Identifier: Apache-2.0
#include "ugda/checkpoint.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace ugda {
namespace {

constexpr char kMagic[9] = "UGDACKP1";

using nlohmann::json;

json shape_json(const Shape& s) { return json::array({s.n, s.c, s.h, s.w}); }

Shape shape_from_json(const json& j) {
  return Shape{j.at(0).get<Index>(), j.at(1).get<Index>(), j.at(2).get<Index>(),
               j.at(3).get<Index>()};
}

json meta_to_json(SegModel<float>& model, const CheckpointMeta& meta) {
  json j;
  j["backbone"] = meta.variant.backbone;
  j["use_attention"] = meta.variant.use_attention;
  j["use_entropy_loss"] = meta.variant.use_entropy_loss;
  j["use_deep_supervision"] = meta.variant.use_deep_supervision;
  j["pretrained_encoder"] = meta.variant.pretrained_encoder;
  j["epoch"] = meta.epoch;
  j["best_val_dice"] = meta.best_val_dice;
  j["params"] = json::array();
  for (auto* p : model.parameters())
    j["params"].push_back(json::array({p->name, shape_json(p->value.shape())}));
  j["buffers"] = json::array();
  for (auto& b : model.buffers())
    j["buffers"].push_back(json::array({b.name, shape_json(b.tensor->shape())}));
  return j;
}

CheckpointMeta meta_from_json(const json& j) {
  CheckpointMeta meta;
  meta.variant.backbone = j.at("backbone").get<std::string>();
  meta.variant.use_attention = j.at("use_attention").get<bool>();
  meta.variant.use_entropy_loss = j.at("use_entropy_loss").get<bool>();
  meta.variant.use_deep_supervision = j.at("use_deep_supervision").get<bool>();
  meta.variant.pretrained_encoder = j.at("pretrained_encoder").get<bool>();
  meta.epoch = j.at("epoch").get<int>();
  meta.best_val_dice = j.at("best_val_dice").get<double>();
  return meta;
}

json read_header(std::ifstream& f, const std::string& path) {
  char magic[8];
  std::uint64_t header_len = 0;
  f.read(magic, 8);
  f.read(reinterpret_cast<char*>(&header_len), 8);
  if (!f.good() || std::string(magic, 8) != kMagic)
    throw std::runtime_error("not a checkpoint file: " + path);
  std::string header(header_len, '\0');
  f.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!f.good()) throw std::runtime_error("truncated checkpoint header: " + path);
  return json::parse(header);
}

}  // namespace

std::string checkpoint_name(const std::string& backbone, const std::string& variant_token) {
  return backbone + "_" + variant_token + "_best.ckpt";
}

void save_checkpoint(const std::string& path, SegModel<float>& model, const CheckpointMeta& meta) {
  std::ofstream f(path, std::ios::binary);
  if (!f.good()) throw std::runtime_error("cannot write checkpoint: " + path);
  const std::string header = meta_to_json(model, meta).dump();
  const std::uint64_t header_len = header.size();
  f.write(kMagic, 8);
  f.write(reinterpret_cast<const char*>(&header_len), 8);
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (auto* p : model.parameters())
    f.write(reinterpret_cast<const char*>(p->value.data()),
            static_cast<std::streamsize>(p->value.size() * sizeof(float)));
  for (auto& b : model.buffers())
    f.write(reinterpret_cast<const char*>(b.tensor->data()),
            static_cast<std::streamsize>(b.tensor->size() * sizeof(float)));
  if (!f.good()) throw std::runtime_error("checkpoint write failed: " + path);
}

CheckpointMeta read_checkpoint_meta(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f.good()) throw std::runtime_error("cannot open checkpoint: " + path);
  return meta_from_json(read_header(f, path));
}

CheckpointMeta load_checkpoint(const std::string& path, SegModel<float>& model) {
  std::ifstream f(path, std::ios::binary);
  if (!f.good()) throw std::runtime_error("cannot open checkpoint: " + path);
  const json j = read_header(f, path);
  const CheckpointMeta meta = meta_from_json(j);

  auto restore = [&](const json& entries, const std::string& kind, auto&& name_of,
                     auto&& tensor_of, auto&& items) {
    check(entries.size() == items.size(),
          "checkpoint " + kind + " count mismatch for " + path);
    for (std::size_t i = 0; i < items.size(); ++i) {
      const std::string name = entries[i].at(0).get<std::string>();
      const Shape shape = shape_from_json(entries[i].at(1));
      check(name == name_of(items[i]),
            "checkpoint " + kind + " name mismatch: file has '" + name + "', model has '" +
                name_of(items[i]) + "'");
      Tensor<float>& t = tensor_of(items[i]);
      check_same_shape(shape, t.shape(), ("checkpoint " + name).c_str());
      f.read(reinterpret_cast<char*>(t.data()),
             static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
  };

  auto params = model.parameters();
  restore(j.at("params"), "parameter",
          [](Parameter<float>* p) -> const std::string& { return p->name; },
          [](Parameter<float>* p) -> Tensor<float>& { return p->value; }, params);
  auto buffers = model.buffers();
  restore(j.at("buffers"), "buffer",
          [](const BufferRef<float>& b) -> const std::string& { return b.name; },
          [](const BufferRef<float>& b) -> Tensor<float>& { return *b.tensor; }, buffers);
  if (!f.good()) throw std::runtime_error("truncated checkpoint data: " + path);
  return meta;
}

}  // namespace ugda
