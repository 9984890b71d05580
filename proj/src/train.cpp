// SPDX-License-Identifier: Apache-2.0
#include "ugda/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include "json.hpp"
#include "ugda/checkpoint.hpp"
#include "ugda/rng.hpp"

namespace ugda {

double train_step(SegModel<float>& model, const Batch& batch, int epoch, const TrainConfig& cfg,
                  AdamW<float>& opt) {
  opt.zero_grad();
  Tape<float> tape(true);
  Var<float> x = tape.constant(batch.images);
  ModelOutputs<float> out = model.forward(tape, x, true);
  const LossKind kind = active_loss(epoch, cfg.loss);
  Var<float> main_loss = compute_loss(out.main_logits, batch.masks, kind, cfg.loss);
  std::vector<Var<float>> aux;
  aux.reserve(out.aux_logits.size());
  for (Var<float> a : out.aux_logits) aux.push_back(compute_loss(a, batch.masks, kind, cfg.loss));
  Var<float> total = total_loss(main_loss, aux, cfg.ds);
  const double value = static_cast<double>(total.value().value());
  tape.backward(total);
  opt.step();
  return value;
}

TrainingRecord fit(SegModel<float>& model, const DatasetSplit& split, const TrainConfig& cfg,
                   const std::string& run_dir) {
  check(!split.train.empty() && !split.val.empty(), "fit: train and val splits must be non-empty");
  check(cfg.epochs >= 1 && cfg.batch_size >= 1 && cfg.learning_rate > 0,
        "fit: invalid training configuration");
  if (cfg.mixed_precision)
    std::cerr << "warning: mixed precision requested but this build runs full precision\n";

  std::filesystem::create_directories(run_dir);
  const VariantInfo& vinfo = variant_info_for(model.config());
  const std::string ckpt_path =
      (std::filesystem::path(run_dir) / checkpoint_name(model.config().backbone, vinfo.token))
          .string();
  std::ofstream log(std::filesystem::path(run_dir) / "log.jsonl");
  check(log.good(), "fit: cannot write log in " + run_dir);

  OptimConfig ocfg;
  ocfg.lr = cfg.learning_rate;
  ocfg.weight_decay = cfg.weight_decay;
  AdamW<float> opt(model.parameters(), ocfg);
  ExampleStore store(cfg.side);

  std::vector<PreprocessedExample> val_examples;
  val_examples.reserve(split.val.size());
  for (const auto& pair : split.val) {
    std::mt19937_64 rng(mix_seed(cfg.seed, 0xEAA1, fnv1a64(pair.id)));
    val_examples.push_back(store.get(pair, false, rng));
  }

  TrainingRecord rec;
  rec.checkpoint_path = ckpt_path;
  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, 0x54AFF1E, static_cast<std::uint64_t>(epoch)));
    shuffle_inplace(order, shuffle_rng);

    double loss_sum = 0;
    int batch_count = 0;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_size));
      std::vector<PreprocessedExample> examples;
      examples.reserve(end - at);
      for (std::size_t k = at; k < end; ++k) {
        const SamplePair& pair = split.train[order[k]];
        std::mt19937_64 rng(
            mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch) + 1, fnv1a64(pair.id)));
        examples.push_back(store.get(pair, true, rng));
      }
      const double loss = train_step(model, make_batch(examples), epoch, cfg, opt);
      if (!std::isfinite(loss))
        throw std::runtime_error("non-finite training loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(batch_count));
      loss_sum += loss;
      ++batch_count;
    }

    const MetricsRecord val = evaluate(model, val_examples, 0.5);
    const double train_loss = loss_sum / std::max(1, batch_count);
    rec.epochs.push_back({epoch, train_loss, val.mean_dsc, val.mean_iou});

    nlohmann::json line;
    line["epoch"] = epoch;
    line["train_loss"] = train_loss;
    line["val_dice"] = val.mean_dsc;
    line["val_iou"] = val.mean_iou;
    log << line.dump() << "\n";
    log.flush();

    if (rec.best_epoch < 0 || val.mean_dsc > rec.best_val_dice) {
      rec.best_epoch = epoch;
      rec.best_val_dice = val.mean_dsc;
      CheckpointMeta meta;
      meta.variant = model.config();
      meta.epoch = epoch;
      meta.best_val_dice = val.mean_dsc;
      save_checkpoint(ckpt_path, model, meta);
    }
  }
  return rec;
}

}  // namespace ugda
