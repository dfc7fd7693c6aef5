// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0
//
// imfa: train, eval, budget, visualize, gradcheck, gen-data.
// Exit codes: 0 success, 1 other failure, 2 configuration error, 3 data error.

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "imfa/budget.hpp"
#include "imfa/checkpoint.hpp"
#include "imfa/errors.hpp"
#include "imfa/evaluation.hpp"
#include "imfa/training.hpp"
#include "imfa/verification.hpp"
#include "imfa/visualize.hpp"

using namespace imfa;
namespace fs = std::filesystem;

namespace {

constexpr int kConfigExit = 2;
constexpr int kDataExit = 3;

// RunConfig flags; only options given on the command line override the config file.
struct TrainFlags {
  std::string config_path, dataset, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps, batch_size, lr_drop_step, num_stages, queries, keypoints, scales, heads, d, classes;
  std::optional<double> lr_main, lr_backbone, weight_decay, clip_norm, sampling_ratio;
  std::optional<std::string> mode;
  bool iter_enc_only = false, disable_rep_keypoints = false, disable_ada_scale = false, disable_dynamic_ffn = false;
  bool sampled_keys_only = false, no_flip = false;

  RunConfig resolve() const {
    RunConfig c = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    auto set = [](auto& field, const auto& opt) {
      if (opt) field = *opt;
    };
    set(c.seed, seed);
    set(c.optimizer.steps, steps);
    set(c.optimizer.batch_size, batch_size);
    set(c.optimizer.lr_drop_step, lr_drop_step);
    set(c.optimizer.lr_main, lr_main);
    set(c.optimizer.lr_backbone, lr_backbone);
    set(c.optimizer.weight_decay, weight_decay);
    set(c.optimizer.clip_norm, clip_norm);
    set(c.stage.num_stages, num_stages);
    set(c.stage.queries, queries);
    set(c.stage.keypoints, keypoints);
    set(c.stage.scales, scales);
    set(c.stage.heads, heads);
    set(c.stage.d, d);
    set(c.stage.classes, classes);
    set(c.stage.sampling_ratio, sampling_ratio);
    if (mode) c.stage.mode = parse_pipeline_mode(*mode);
    if (!dataset.empty()) c.dataset = dataset;
    c.iter_enc_only |= iter_enc_only;
    c.disable_rep_keypoints |= disable_rep_keypoints;
    c.disable_ada_scale |= disable_ada_scale;
    c.disable_dynamic_ffn |= disable_dynamic_ffn;
    c.stage.sampled_keys_only |= sampled_keys_only;
    if (no_flip) c.flip = false;
    if (steps && !lr_drop_step) c.optimizer.lr_drop_step = *steps * 4 / 5;
    c.validate();
    if (c.dataset.empty()) throw ConfigError("no dataset given (--dataset or \"dataset\" in the config)");
    return c;
  }
};

void add_train_flags(CLI::App& cmd, TrainFlags& f) {
  cmd.add_option("--config", f.config_path, "JSON run config; flags override it");
  cmd.add_option("--dataset", f.dataset, "Annotation file (JSON Lines)");
  cmd.add_option("--out", f.out, "Output directory")->required();
  cmd.add_option("--seed", f.seed);
  cmd.add_option("--steps", f.steps);
  cmd.add_option("--batch-size", f.batch_size);
  cmd.add_option("--lr-drop-step", f.lr_drop_step, "Defaults to 80% of --steps when only that is given");
  cmd.add_option("--lr-main", f.lr_main);
  cmd.add_option("--lr-backbone", f.lr_backbone);
  cmd.add_option("--weight-decay", f.weight_decay);
  cmd.add_option("--clip-norm", f.clip_norm);
  cmd.add_option("--num-stages", f.num_stages);
  cmd.add_option("--queries", f.queries);
  cmd.add_option("--keypoints", f.keypoints);
  cmd.add_option("--scales", f.scales);
  cmd.add_option("--heads", f.heads);
  cmd.add_option("--d", f.d);
  cmd.add_option("--classes", f.classes);
  cmd.add_option("--sampling-ratio", f.sampling_ratio);
  cmd.add_option("--mode", f.mode, "baseline | iter_enc | imfa");
  cmd.add_flag("--iter-enc-only", f.iter_enc_only);
  cmd.add_flag("--disable-rep-keypoints", f.disable_rep_keypoints);
  cmd.add_flag("--disable-ada-scale", f.disable_ada_scale);
  cmd.add_flag("--disable-dynamic-ffn", f.disable_dynamic_ffn);
  cmd.add_flag("--sampled-keys-only", f.sampled_keys_only);
  cmd.add_flag("--no-flip", f.no_flip, "Disable random horizontal flips");
}

int cmd_train(const TrainFlags& f) {
  const auto config = f.resolve();
  const std::size_t threads = configured_threads();
  const auto data = read_dataset(config.dataset);
  fs::create_directories(f.out);
  const auto log_path = fs::path(f.out) / "metrics.jsonl";
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw IoError(log_path.string() + ": cannot open for writing");
  const auto result = train(config, data, [&](const MetricRecord& r) {
    auto j = r.to_json();
    j["threads"] = threads;
    log << j.dump() << '\n' << std::flush;
  });
  save_checkpoint(fs::path(f.out) / "checkpoint.json", config, result.params, config.optimizer.steps);
  const auto& m = result.metrics;
  std::cout << nlohmann::json{{"steps", m.size()},
                              {"initial_loss", smoothed_loss(m, 100, 100)},
                              {"final_loss", smoothed_loss(m, m.size(), 100)},
                              {"checkpoint", (fs::path(f.out) / "checkpoint.json").string()},
                              {"threads", threads}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& dataset, const std::string& out) {
  const std::size_t threads = configured_threads();
  const auto ck = load_checkpoint(checkpoint);
  const auto data = read_dataset(dataset);
  auto j = evaluate(ck, data, threads).to_json();
  j["threads"] = threads;
  const auto text = j.dump(1) + "\n";
  if (!out.empty()) write_file_atomic(out, text);
  std::cout << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IMFA detector at desk scale"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  std::string gen_out;
  std::size_t gen_count = 1000, gen_seed = 1;
  SceneOptions scene;
  std::vector<double> mix{1, 1, 1};
  gen->add_option("--out", gen_out, "Annotation file to write (.jsonl)")->required();
  gen->add_option("--count", gen_count);
  gen->add_option("--seed", gen_seed);
  gen->add_option("--size", scene.size);
  gen->add_option("--max-objects", scene.max_objects);
  gen->add_option("--scale-mix", mix, "Weights of small, medium, large")->expected(3)->delimiter(',');

  auto* tr = app.add_subcommand("train", "Train a model");
  TrainFlags train_flags;
  add_train_flags(*tr, train_flags);

  auto* ev = app.add_subcommand("eval", "Average precision of a checkpoint on a dataset");
  std::string ev_ck, ev_data, ev_out;
  ev->add_option("--checkpoint", ev_ck)->required();
  ev->add_option("--dataset", ev_data)->required();
  ev->add_option("--out", ev_out, "Also write the report here");

  auto* bu = app.add_subcommand("budget", "Token counts and attention-cost ratios");
  BudgetConfig budget;
  bu->add_option("--height", budget.height);
  bu->add_option("--width", budget.width);
  bu->add_option("--single-stride", budget.single_stride);
  bu->add_option("--strides", budget.dense_strides, "Dense multi-scale strides")->delimiter(',');
  bu->add_option("--queries", budget.queries);
  bu->add_option("--sampling-ratio", budget.sampling_ratio);
  bu->add_option("--keypoints", budget.keypoints);
  bu->add_option("--d", budget.d);

  auto* vi = app.add_subcommand("visualize", "Render predictions and sampling locations as SVG");
  std::string vi_ck, vi_image, vi_out;
  VisualizeOptions vis;
  vi->add_option("--checkpoint", vi_ck)->required();
  vi->add_option("--image", vi_image, "PPM or raw blob")->required();
  vi->add_option("--out", vi_out)->required();
  vi->add_option("--score-threshold", vis.score_threshold);

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference checks of every op and a 3-stage pipeline");
  std::uint64_t gc_seed = 31;
  gc->add_option("--seed", gc_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }

  try {
    if (*gen) {
      scene.scale_mix = {mix[0], mix[1], mix[2]};
      auto data = generate_dataset(gen_count, gen_seed, scene);
      write_dataset(gen_out, data);
      std::size_t objects = 0;
      for (const auto& s : data) objects += s.annotation.size();
      std::cout << nlohmann::json{{"scenes", data.size()}, {"objects", objects}, {"out", gen_out}}.dump() << '\n';
      return 0;
    }
    if (*tr) return cmd_train(train_flags);
    if (*ev) return cmd_eval(ev_ck, ev_data, ev_out);
    if (*bu) {
      std::cout << compute_budget(budget).to_json().dump(1) << '\n';
      return 0;
    }
    if (*vi) {
      const auto ck = load_checkpoint(vi_ck);
      write_file_atomic(vi_out, visualize(ck, read_image(vi_image), vis));
      return 0;
    }
    if (*gc) {
      const auto start = std::chrono::steady_clock::now();
      bool ok = true;
      for (const auto& group : {op_gradient_checks(gc_seed), pipeline_gradient_checks(gc_seed)}) {
        for (const auto& c : group) {
          std::cout << (c.report.passed() ? "ok   " : "FAIL ") << c.name << "  " << describe(c.report) << '\n';
        }
        ok = ok && all_passed(group);
      }
      std::cout << (ok ? "all gradient checks passed" : "gradient checks FAILED") << " in "
                << std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() << " s\n";
      return ok ? 0 : 1;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataExit;
  } catch (const IoError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataExit;
  } catch (const DimensionError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
