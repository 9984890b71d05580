// SPDX-License-Identifier: Apache-2.0
#include "ugda/ablation.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "json.hpp"
#include "ugda/checkpoint.hpp"
#include "ugda/rng.hpp"
#include "ugda/synthetic.hpp"
#include "ugda/viz.hpp"

namespace fs = std::filesystem;

namespace ugda {
namespace {

std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

void render_run_viz(SegModel<float>& model, ExampleStore& store,
                    const std::vector<SamplePair>& samples, const std::string& viz_dir) {
  fs::create_directories(viz_dir);
  for (const auto& pair : samples) {
    std::mt19937_64 rng(0);
    PreprocessedExample ex = store.get(pair, false, rng);
    Tape<float> tape(false);
    Var<float> x = tape.constant(ex.image);
    ModelOutputs<float> out = model.forward(tape, x, false);
    Tensor<float> probs = sigmoid_values(out.main_logits.value());
    Tensor<float> pred = threshold_mask(probs, 0.5);
    write_png((fs::path(viz_dir) / (pair.id + "_overlay.png")).string(),
              render_overlay(ex.image, pred, ex.mask));
    write_png((fs::path(viz_dir) / (pair.id + "_entropy.png")).string(),
              render_entropy_heatmap(probs));
  }
}

}  // namespace

void apply_preset(RunManifest& manifest, const std::string& preset) {
  if (preset == "desk") {
    manifest.synthetic_count = 64;
    manifest.train.side = 128;
    manifest.train.epochs = 5;
    manifest.train.loss.warmup_epochs = 1;
  } else if (preset == "paper") {
    manifest.train.side = 256;
    manifest.train.epochs = 40;
    manifest.train.batch_size = 16;
    manifest.train.learning_rate = 1e-4;
    manifest.train.loss.warmup_epochs = 3;
  } else {
    throw std::invalid_argument("unknown preset '" + preset + "' (expected desk|paper)");
  }
}

AblationResults run_ablation(const RunManifest& manifest) {
  check(!manifest.backbones.empty() && !manifest.variants.empty(),
        "ablation: need at least one backbone and one variant");
  fs::create_directories(manifest.out_dir);

  std::string data_root = manifest.data_root;
  if (data_root.empty()) {
    data_root = (fs::path(manifest.out_dir) / "synthetic_data").string();
    write_synthetic_dataset(data_root, manifest.synthetic_count, manifest.train.side,
                            manifest.train.seed);
  }
  const std::vector<SamplePair> pairs = discover_dataset(data_root);
  const DatasetSplit split = split_dataset(pairs, manifest.train.seed);
  const std::uint64_t digest = split_hash(split);

  ExampleStore store(manifest.train.side);
  std::vector<PreprocessedExample> test_examples;
  for (const auto& pair : split.test) {
    std::mt19937_64 rng(0);
    test_examples.push_back(store.get(pair, false, rng));
  }
  const std::vector<SamplePair> viz_samples(
      split.test.begin(),
      split.test.begin() + std::min<std::size_t>(split.test.size(),
                                                 static_cast<std::size_t>(manifest.viz_count)));

  AblationResults results;
  results.split_digest = digest;
  for (const auto& backbone : manifest.backbones) {
    for (const auto& token : manifest.variants) {
      RunResult row;
      row.backbone = backbone;
      row.variant_token = token;
      row.split_digest = digest;
      try {
        row.display = variant_info(token).display;
        const VariantConfig cfg = make_variant(backbone, token);
        const std::string run_dir =
            (fs::path(manifest.out_dir) / (backbone + "_" + token)).string();
        SegModel<float> model(cfg, mix_seed(manifest.train.seed, fnv1a64(backbone + "/" + token)));
        const TrainingRecord rec = fit(model, split, manifest.train, run_dir);

        SegModel<float> best(cfg, 1);
        load_checkpoint(rec.checkpoint_path, best);
        const MetricsRecord metrics = evaluate(best, test_examples, 0.5);
        write_metrics_csv((fs::path(run_dir) / "metrics.csv").string(), metrics);
        render_run_viz(best, store, viz_samples, (fs::path(run_dir) / "viz").string());

        row.dsc = metrics.mean_dsc;
        row.iou = metrics.mean_iou;
        row.ok = true;
      } catch (const std::exception& e) {
        row.error = e.what();
        results.any_failed = true;
        std::cerr << "run failed (" << backbone << ", " << token << "): " << e.what() << "\n";
      }
      results.rows.push_back(std::move(row));
    }
  }

  write_ablation_outputs(manifest.out_dir, results);
  return results;
}

void write_ablation_outputs(const std::string& out_dir, const AblationResults& results) {
  fs::create_directories(out_dir);
  std::ofstream csv(fs::path(out_dir) / "results.csv");
  csv << format_table_csv(results.rows);
  std::ofstream txt(fs::path(out_dir) / "results.txt");
  txt << format_table_text(results.rows);

  const auto hex = [](std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
  };
  nlohmann::json summary;
  summary["split_digest"] = hex(results.split_digest);
  summary["rows"] = nlohmann::json::array();
  for (const auto& r : results.rows) {
    summary["rows"].push_back({{"backbone", r.backbone},
                               {"variant", r.variant_token},
                               {"ok", r.ok},
                               {"dsc", r.dsc},
                               {"iou", r.iou},
                               {"split_digest", hex(r.split_digest)},
                               {"error", r.error}});
  }
  std::ofstream summary_file(fs::path(out_dir) / "run_summary.json");
  summary_file << summary.dump(2) << "\n";
}

std::string format_table_csv(const std::vector<RunResult>& rows) {
  std::string out = "backbone,variant,dsc,iou\n";
  for (const auto& r : rows) {
    if (!r.ok) continue;
    out += r.backbone + "," + r.variant_token + "," + fmt4(r.dsc) + "," + fmt4(r.iou) + "\n";
  }
  return out;
}

std::string format_table_text(const std::vector<RunResult>& rows) {
  // first strictly-highest DSC per backbone gets the star
  std::map<std::string, std::size_t> best;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].ok) continue;
    auto it = best.find(rows[i].backbone);
    if (it == best.end() || rows[i].dsc > rows[it->second].dsc) best[rows[i].backbone] = i;
  }

  char line[128];
  std::string out;
  std::snprintf(line, sizeof(line), "%-10s %-16s %-9s %-9s\n", "Backbone", "Variant", "DSC", "IoU");
  out += line;
  out += std::string(46, '-') + "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (!r.ok) continue;
    const bool starred = best.at(r.backbone) == i;
    const std::string dsc = fmt4(r.dsc) + (starred ? "*" : "");
    std::snprintf(line, sizeof(line), "%-10s %-16s %-9s %-9s\n", r.backbone.c_str(),
                  r.display.c_str(), dsc.c_str(), fmt4(r.iou).c_str());
    out += line;
  }
  bool header = false;
  for (const auto& r : rows) {
    if (r.ok) continue;
    if (!header) {
      out += "\nfailed runs:\n";
      header = true;
    }
    out += "  " + r.backbone + " " + r.variant_token + ": " + r.error + "\n";
  }
  return out;
}

}  // namespace ugda
