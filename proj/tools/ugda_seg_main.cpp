// SPDX-License-Identifier: Apache-2.0
//
// ugda-seg: train/evaluate UGDA-Net segmentation variants.
//
//   ablate  full (backbone x variant) matrix on one shared split
//   train   single run
//   eval    checkpoint + dataset -> metrics
//   viz     checkpoint + images  -> overlays and entropy heatmaps
//   synth   generate a synthetic seedling dataset

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ugda/ablation.hpp"
#include "ugda/checkpoint.hpp"
#include "ugda/synthetic.hpp"
#include "ugda/viz.hpp"

namespace fs = std::filesystem;

namespace {

struct MatrixArgs {
  std::string data;
  int synthetic = 64;
  std::vector<std::string> backbones;
  std::vector<std::string> variants;
  std::string preset;
  std::string out = "runs";
  int side = 256;
  int epochs = 40;
  int batch = 16;
  double lr = 1e-4;
  double wd = 1e-2;
  int warmup = 3;
  std::uint64_t seed = 42;
  int viz_count = 3;
  bool mixed_precision = false;
  int parallel = 0;
};

void add_train_options(CLI::App* cmd, MatrixArgs& a) {
  cmd->add_option("--data", a.data, "dataset root containing images/ and masks/");
  cmd->add_option("--synthetic", a.synthetic, "without --data, generate this many synthetic pairs")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--preset", a.preset, "hyperparameter preset")
      ->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--out", a.out, "output directory");
  cmd->add_option("--side", a.side, "square input resolution (multiple of 32)");
  cmd->add_option("--epochs", a.epochs, "training epochs")->check(CLI::PositiveNumber);
  cmd->add_option("--batch", a.batch, "batch size")->check(CLI::PositiveNumber);
  cmd->add_option("--lr", a.lr, "learning rate");
  cmd->add_option("--wd", a.wd, "weight decay");
  cmd->add_option("--warmup", a.warmup, "plain-BCE warm-up epochs");
  cmd->add_option("--seed", a.seed, "global seed");
  cmd->add_option("--viz-count", a.viz_count, "test samples to render per run");
  cmd->add_flag("--mixed-precision", a.mixed_precision, "accepted but inert on CPU");
}

ugda::RunManifest build_manifest(const CLI::App* cmd, const MatrixArgs& a) {
  ugda::RunManifest m;
  if (cmd->count("--preset")) ugda::apply_preset(m, a.preset);
  m.data_root = a.data;
  if (cmd->count("--synthetic")) m.synthetic_count = a.synthetic;
  if (!a.backbones.empty()) m.backbones = a.backbones;
  if (!a.variants.empty()) m.variants = a.variants;
  m.out_dir = a.out;
  if (cmd->count("--side")) m.train.side = a.side;
  if (cmd->count("--epochs")) m.train.epochs = a.epochs;
  if (cmd->count("--batch")) m.train.batch_size = a.batch;
  if (cmd->count("--lr")) m.train.learning_rate = a.lr;
  if (cmd->count("--wd")) m.train.weight_decay = a.wd;
  if (cmd->count("--warmup")) m.train.loss.warmup_epochs = a.warmup;
  if (cmd->count("--seed")) m.train.seed = a.seed;
  if (cmd->count("--viz-count")) m.viz_count = a.viz_count;
  m.train.mixed_precision = a.mixed_precision;
  return m;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int spawn_child(const std::vector<std::string>& args, const std::string& log_path) {
  std::vector<char*> argv;
  for (const auto& s : args) argv.push_back(const_cast<char*>(s.c_str()));
  argv.push_back(nullptr);

  const pid_t pid = fork();
  if (pid < 0) throw std::runtime_error("fork failed");
  if (pid == 0) {
    const int fd = open(log_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd >= 0) {
      dup2(fd, STDOUT_FILENO);
      dup2(fd, STDERR_FILENO);
      close(fd);
    }
    execv(args[0].c_str(), argv.data());
    std::perror("execv");
    _exit(127);
  }
  return pid;
}

/// Runs each (backbone, variant) as its own process, at most `jobs` at a
/// time, then merges the per-run summaries into one table. Children get the
/// already-materialized data root, so the split is shared read-only.
int run_ablation_parallel(const ugda::RunManifest& manifest, int jobs) {
  const std::string exe = fs::read_symlink("/proc/self/exe").string();
  fs::create_directories(manifest.out_dir);

  std::string data_root = manifest.data_root;
  if (data_root.empty()) {
    data_root = (fs::path(manifest.out_dir) / "synthetic_data").string();
    ugda::write_synthetic_dataset(data_root, manifest.synthetic_count, manifest.train.side,
                                  manifest.train.seed);
  }
  const ugda::DatasetSplit split =
      ugda::split_dataset(ugda::discover_dataset(data_root), manifest.train.seed);
  const std::uint64_t digest = ugda::split_hash(split);

  struct Job {
    std::string backbone, token, dir;
  };
  std::vector<Job> pending;
  for (const auto& b : manifest.backbones)
    for (const auto& v : manifest.variants)
      pending.push_back({b, v, (fs::path(manifest.out_dir) / "runs" / (b + "_" + v)).string()});

  std::map<pid_t, std::size_t> running;
  std::vector<int> status(pending.size(), -1);
  std::size_t next = 0;
  while (next < pending.size() || !running.empty()) {
    while (next < pending.size() && static_cast<int>(running.size()) < jobs) {
      const Job& job = pending[next];
      fs::create_directories(job.dir);
      std::vector<std::string> args = {exe,
                                       "ablate",
                                       "--data",
                                       data_root,
                                       "--backbones",
                                       job.backbone,
                                       "--variants",
                                       job.token,
                                       "--out",
                                       job.dir,
                                       "--side",
                                       std::to_string(manifest.train.side),
                                       "--epochs",
                                       std::to_string(manifest.train.epochs),
                                       "--batch",
                                       std::to_string(manifest.train.batch_size),
                                       "--lr",
                                       fmt_double(manifest.train.learning_rate),
                                       "--wd",
                                       fmt_double(manifest.train.weight_decay),
                                       "--warmup",
                                       std::to_string(manifest.train.loss.warmup_epochs),
                                       "--seed",
                                       std::to_string(manifest.train.seed),
                                       "--viz-count",
                                       std::to_string(manifest.viz_count)};
      if (manifest.train.mixed_precision) args.push_back("--mixed-precision");
      running[spawn_child(args, job.dir + "/child.log")] = next;
      ++next;
    }
    int st = 0;
    const pid_t pid = waitpid(-1, &st, 0);
    if (pid < 0) throw std::runtime_error("waitpid failed");
    const auto it = running.find(pid);
    if (it != running.end()) {
      status[it->second] = WIFEXITED(st) ? WEXITSTATUS(st) : 128;
      running.erase(it);
    }
  }

  ugda::AblationResults results;
  results.split_digest = digest;
  for (std::size_t i = 0; i < pending.size(); ++i) {
    const Job& job = pending[i];
    ugda::RunResult row;
    row.backbone = job.backbone;
    row.variant_token = job.token;
    row.split_digest = digest;
    try {
      row.display = ugda::variant_info(job.token).display;
      std::ifstream in(fs::path(job.dir) / "run_summary.json");
      if (!in) throw std::runtime_error("run process produced no summary");
      const nlohmann::json child = nlohmann::json::parse(in)["rows"].at(0);
      row.ok = child["ok"].get<bool>();
      row.dsc = child["dsc"].get<double>();
      row.iou = child["iou"].get<double>();
      row.error = child["error"].get<std::string>();
      const std::uint64_t child_digest =
          std::strtoull(child["split_digest"].get<std::string>().c_str(), nullptr, 16);
      if (row.ok && child_digest != digest) {
        row.ok = false;
        row.error = "split digest mismatch across processes";
      }
      if (!row.ok && row.error.empty())
        row.error = "run process exited with status " + std::to_string(status[i]);
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    if (!row.ok) results.any_failed = true;
    results.rows.push_back(std::move(row));
  }

  ugda::write_ablation_outputs(manifest.out_dir, results);
  std::cout << ugda::format_table_text(results.rows);
  return results.any_failed ? 1 : 0;
}

int run_matrix(const CLI::App* cmd, const MatrixArgs& a) {
  const ugda::RunManifest manifest = build_manifest(cmd, a);
  if (a.parallel > 0) return run_ablation_parallel(manifest, a.parallel);
  const ugda::AblationResults results = ugda::run_ablation(manifest);
  std::cout << ugda::format_table_text(results.rows);
  return results.any_failed ? 1 : 0;
}

std::vector<ugda::SamplePair> select_pairs(const std::string& data, const std::string& split_name,
                                           std::uint64_t seed) {
  std::vector<ugda::SamplePair> pairs = ugda::discover_dataset(data);
  if (split_name == "all") return pairs;
  ugda::DatasetSplit split = ugda::split_dataset(std::move(pairs), seed);
  if (split_name == "train") return split.train;
  if (split_name == "val") return split.val;
  return split.test;
}

struct EvalArgs {
  std::string ckpt, data, out;
  std::string split = "all";
  double threshold = 0.5;
  std::uint64_t seed = 42;
  int side = 256;
};

int run_eval(const EvalArgs& a) {
  const ugda::CheckpointMeta meta = ugda::read_checkpoint_meta(a.ckpt);
  ugda::SegModel<float> model(meta.variant, 1);
  ugda::load_checkpoint(a.ckpt, model);

  ugda::ExampleStore store(a.side);
  std::vector<ugda::PreprocessedExample> examples;
  for (const auto& pair : select_pairs(a.data, a.split, a.seed)) {
    std::mt19937_64 rng(0);
    examples.push_back(store.get(pair, false, rng));
  }
  const ugda::MetricsRecord rec = ugda::evaluate(model, examples, a.threshold);
  std::printf("%s %s split=%s n=%zu dsc=%.4f iou=%.4f\n", meta.variant.backbone.c_str(),
              ugda::variant_info_for(meta.variant).token.c_str(), a.split.c_str(),
              examples.size(), rec.mean_dsc, rec.mean_iou);
  if (!a.out.empty()) ugda::write_metrics_csv(a.out, rec);
  return 0;
}

struct VizArgs {
  std::string ckpt, data;
  std::string out = "viz";
  std::string split = "test";
  int count = 3;
  std::uint64_t seed = 42;
  int side = 256;
};

int run_viz(const VizArgs& a) {
  const ugda::CheckpointMeta meta = ugda::read_checkpoint_meta(a.ckpt);
  ugda::SegModel<float> model(meta.variant, 1);
  ugda::load_checkpoint(a.ckpt, model);

  std::vector<ugda::SamplePair> pairs = select_pairs(a.data, a.split, a.seed);
  if (static_cast<int>(pairs.size()) > a.count) pairs.resize(a.count);
  ugda::check(!pairs.empty(), "viz: no samples selected");

  fs::create_directories(a.out);
  ugda::ExampleStore store(a.side);
  for (const auto& pair : pairs) {
    std::mt19937_64 rng(0);
    const ugda::PreprocessedExample ex = store.get(pair, false, rng);
    ugda::Tape<float> tape(false);
    const ugda::ModelOutputs<float> out = model.forward(tape, tape.constant(ex.image), false);
    const ugda::Tensor<float> probs = ugda::sigmoid_values(out.main_logits.value());
    ugda::write_png((fs::path(a.out) / (pair.id + "_overlay.png")).string(),
                    ugda::render_overlay(ex.image, ugda::threshold_mask(probs, 0.5), ex.mask));
    ugda::write_png((fs::path(a.out) / (pair.id + "_entropy.png")).string(),
                    ugda::render_entropy_heatmap(probs));
    std::cout << "wrote " << pair.id << "_overlay.png " << pair.id << "_entropy.png\n";
  }
  return 0;
}

struct SynthArgs {
  std::string out;
  int count = 64;
  int side = 128;
  std::uint64_t seed = 42;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UGDA-Net binary segmentation: ablation, training, evaluation, visualization"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read options from a key=value file (flags override)");
  int rc = 0;

  MatrixArgs ab;
  CLI::App* ablate = app.add_subcommand("ablate", "train and evaluate a variant matrix");
  ablate->add_option("--backbones", ab.backbones, "comma-separated subset of unet,linknet")
      ->delimiter(',');
  ablate->add_option("--variants", ab.variants,
                     "comma-separated subset of baseline,loss,attn,ds,full")
      ->delimiter(',');
  ablate->add_option("--parallel", ab.parallel, "run up to N runs as separate processes")
      ->check(CLI::PositiveNumber);
  add_train_options(ablate, ab);
  ablate->callback([&] { rc = run_matrix(ablate, ab); });

  MatrixArgs tr;
  std::string tr_backbone = "unet", tr_variant = "full";
  CLI::App* train = app.add_subcommand("train", "train a single (backbone, variant) run");
  train->add_option("--backbone", tr_backbone, "unet or linknet");
  train->add_option("--variant", tr_variant, "one of baseline,loss,attn,ds,full");
  add_train_options(train, tr);
  train->callback([&] {
    tr.backbones = {tr_backbone};
    tr.variants = {tr_variant};
    rc = run_matrix(train, tr);
  });

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--ckpt", ev.ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--data", ev.data, "dataset root")->required();
  eval_cmd->add_option("--split", ev.split, "subset to score")
      ->check(CLI::IsMember({"all", "train", "val", "test"}));
  eval_cmd->add_option("--threshold", ev.threshold, "probability threshold");
  eval_cmd->add_option("--seed", ev.seed, "split seed (ignored for --split all)");
  eval_cmd->add_option("--side", ev.side, "square input resolution");
  eval_cmd->add_option("--out", ev.out, "write per-image metrics CSV here");
  eval_cmd->callback([&] { rc = run_eval(ev); });

  VizArgs vz;
  CLI::App* viz = app.add_subcommand("viz", "render overlays and entropy heatmaps");
  viz->add_option("--ckpt", vz.ckpt, "checkpoint path")->required();
  viz->add_option("--data", vz.data, "dataset root")->required();
  viz->add_option("--out", vz.out, "output directory");
  viz->add_option("--count", vz.count, "samples to render")->check(CLI::PositiveNumber);
  viz->add_option("--split", vz.split, "subset to draw from")
      ->check(CLI::IsMember({"all", "train", "val", "test"}));
  viz->add_option("--seed", vz.seed, "split seed");
  viz->add_option("--side", vz.side, "square input resolution");
  viz->callback([&] { rc = run_viz(vz); });

  SynthArgs sy;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic seedling dataset");
  synth->add_option("--out", sy.out, "dataset root to create")->required();
  synth->add_option("--count", sy.count, "number of image/mask pairs")
      ->check(CLI::PositiveNumber);
  synth->add_option("--side", sy.side, "image side in pixels");
  synth->add_option("--seed", sy.seed, "generator seed");
  synth->callback([&] {
    ugda::write_synthetic_dataset(sy.out, sy.count, sy.side, sy.seed);
    std::cout << "wrote " << sy.count << " pairs under " << sy.out << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
