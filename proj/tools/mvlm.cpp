// SPDX-License-Identifier: Apache-2.0
//
// mvlm: data preparation, two-stage training, evaluation, generation,
// gradient checks and the language-mix ablation behind one binary.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime abort.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include "mvl/ablation.hpp"
#include "mvl/checkpoint.hpp"
#include "mvl/config.hpp"
#include "mvl/data.hpp"
#include "mvl/errors.hpp"
#include "mvl/eval.hpp"
#include "mvl/gradcheck.hpp"
#include "mvl/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "mvlm-out";
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "key = value config file");
  cmd->add_option("--seed", args.seed, "Seed for data, initialisation and batch order");
  cmd->add_option("--out", args.out, "Output directory")->capture_default_str();
  cmd->add_option("--set", args.overrides, "Override a config key (key=value); repeatable");
}

mvl::Settings load_settings(const CommonArgs& args) {
  mvl::KeyValues values;
  if (!args.config_path.empty()) values = mvl::read_key_values(args.config_path);
  for (const auto& o : args.overrides) {
    auto [k, v] = mvl::parse_override(o);
    values[k] = v;
  }
  if (args.seed) values["seed"] = std::to_string(*args.seed);
  return mvl::resolve_settings(values);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw mvl::Error(mvl::ErrorKind::kIo, fmt::format("cannot write '{}'", path.string()));
  out << text;
}

// Every run records the exact command line and the fully resolved settings.
void echo_config(const fs::path& out_dir, const mvl::Settings& settings, const std::vector<std::string>& argv) {
  fs::create_directories(out_dir);
  write_text(out_dir / "resolved_config.txt",
             fmt::format("# mvlm {}\n{}", fmt::join(argv, " "), mvl::echo_settings(settings)));
}

// Replaces procedural image specs with PPM files under `dir`, named by image key.
template <typename Records>
void materialize_images(Records& records, const fs::path& out_dir) {
  fs::create_directories(out_dir / "images");
  std::map<std::string, std::string> written;
  for (auto& r : records) {
    if (!r.image || !r.image->procedural) continue;
    const auto key = r.image->key();
    auto it = written.find(key);
    if (it == written.end()) {
      std::string name = key;
      for (auto& c : name)
        if (c == ':') c = '_';
      const std::string rel = fmt::format("images/{}.ppm", name);
      mvl::write_ppm(out_dir / rel, mvl::render_procedural(*r.image->procedural));
      it = written.emplace(key, rel).first;
    }
    r.image = mvl::ImageRef::from_path(it->second);
  }
}

int cmd_prepare_data(const mvl::Settings& s, const fs::path& out) {
  const auto& d = s.data;
  std::vector<std::string> languages = {"en"};
  languages.insert(languages.end(), d.languages.begin(), d.languages.end());

  const auto items = mvl::synth_corpus(d.items, mvl::derive_seed(s.seed, 11), "train");
  const auto heldout = mvl::synth_corpus(d.eval_items, mvl::derive_seed(s.seed, 12), "heldout");
  const auto captions = mvl::caption_sources(items, languages);
  const auto dialogs = mvl::dialog_sources(items, languages, s.seed);

  mvl::MixSpec spec1{d.stage1_total, d.english_fraction, d.languages, mvl::derive_seed(s.seed, 21)};
  mvl::MixSpec spec2{d.stage2_total, d.english_fraction, d.languages, mvl::derive_seed(s.seed, 22)};
  auto stage1 = mvl::mix_languages(captions, spec1);
  auto stage2 = mvl::mix_languages(dialogs, spec2);
  auto benchmark = mvl::build_benchmark(heldout, d.eval_languages, s.seed);

  if (d.write_images) {
    materialize_images(stage1, out);
    materialize_images(stage2, out);
    materialize_images(benchmark, out);
  }
  mvl::write_manifest(out / "stage1.jsonl", stage1);
  mvl::write_manifest(out / "stage2.jsonl", stage2);
  mvl::write_benchmark(out / "benchmark.jsonl", benchmark);

  json stats = {{"stage1", mvl::language_histogram(stage1)},
                {"stage2", mvl::language_histogram(stage2)},
                {"benchmark_records", benchmark.size()}};
  write_text(out / "stats.json", stats.dump(2) + "\n");
  std::cout << "stage1 " << stage1.size() << " samples: " << json(mvl::language_histogram(stage1)).dump() << "\n"
            << "stage2 " << stage2.size() << " samples: " << json(mvl::language_histogram(stage2)).dump() << "\n"
            << "benchmark " << benchmark.size() << " records\n";
  return 0;
}

int cmd_train(const mvl::Settings& s, const fs::path& out, int stage, const std::string& data_path,
              const std::string& checkpoint, bool from_scratch) {
  auto config = s.stage(stage);
  config.stage = stage;
  auto model = mvl::MultimodalModel<float>::init(s.model);
  if (!checkpoint.empty()) {
    mvl::load_into(model, checkpoint);
  } else if (stage == 2 && !from_scratch) {
    throw mvl::Error(mvl::ErrorKind::kConfig,
                     "stage 2 starts from a stage-1 checkpoint: pass --checkpoint, or --from-scratch to skip it");
  }
  const auto samples = mvl::load_manifest(data_path);
  if (samples.empty()) throw mvl::Error(mvl::ErrorKind::kConfig, fmt::format("manifest '{}' is empty", data_path));
  const auto prepared = mvl::prepare_samples(samples, s.model, true, {s.system_prompt});

  const std::size_t total = config.total_steps(prepared.size());
  std::cerr << fmt::format("stage {}: {} samples, {} steps, batch {}, peak lr {}\n", stage, prepared.size(), total,
                           config.batch_size, config.peak_lr);
  const std::size_t every = std::max<std::size_t>(1, total / 20);
  const auto result = mvl::run_stage(model, prepared, config, [&](const mvl::LogRecord& r) {
    if (r.step % every == 0 || r.step + 1 == total) {
      std::cerr << fmt::format("  step {:>6}  lr {:.3e}  loss {:.4f}\n", r.step, r.lr, r.loss);
    }
  });

  mvl::CheckpointMeta meta;
  meta.stage = stage;
  meta.step = result.steps;
  meta.seed = s.seed;
  if (!result.log.empty()) meta.metrics = {{"final_loss", result.log.back().loss}};
  const auto ckpt_path = out / fmt::format("stage{}.ckpt", stage);
  mvl::save_checkpoint(ckpt_path, model, meta);
  mvl::write_metric_log(out / fmt::format("metrics_stage{}.jsonl", stage), result.log);
  std::cout << fmt::format("seed {}\ncheckpoint {}\n", s.seed, ckpt_path.string());
  return 0;
}

int cmd_eval(const mvl::Settings& s, const fs::path& out, const std::string& checkpoint, const std::string& data_path) {
  if (checkpoint.empty()) throw mvl::Error(mvl::ErrorKind::kConfig, "eval needs --checkpoint");
  auto model = mvl::MultimodalModel<float>::init(s.model);
  mvl::load_into(model, checkpoint);
  auto records = mvl::load_benchmark(data_path);
  if (records.empty()) throw mvl::Error(mvl::ErrorKind::kEmptyEval, fmt::format("benchmark '{}' is empty", data_path));
  mvl::predict(model, records, s.max_new_tokens, {s.system_prompt});
  const auto cells = mvl::score_records(records);
  mvl::write_predictions(out / "predictions.jsonl", records);
  const auto table = mvl::report_table(cells);
  write_text(out / "report.txt", table);
  write_text(out / "report.jsonl", mvl::report_jsonl(cells));
  std::cout << table;
  return 0;
}

int cmd_generate(const mvl::Settings& s, const std::string& checkpoint, const std::string& image_path,
                 const std::string& prompt, std::optional<std::size_t> max_new) {
  if (checkpoint.empty()) throw mvl::Error(mvl::ErrorKind::kConfig, "generate needs --checkpoint");
  const auto model = mvl::load_checkpoint(checkpoint);
  std::optional<mvl::ImageInput> image;
  if (!image_path.empty()) image = mvl::preprocess(mvl::read_ppm(image_path), model.config().encoder.image_size);
  std::cout << mvl::answer(model, image ? &*image : nullptr, prompt, max_new.value_or(s.max_new_tokens),
                           {s.system_prompt})
            << "\n";
  return 0;
}

int cmd_grad_check(mvl::Settings s, const std::string& inject_bug, std::optional<double> threshold) {
  s.gradcheck.inject_bug = inject_bug;
  if (threshold) s.gradcheck.kernel_threshold = *threshold;
  const auto results = mvl::run_gradcheck(s.gradcheck);
  bool ok = true;
  for (const auto& r : results) {
    std::cout << fmt::format("{} {:<28} error {:.3e}  threshold {:.1e}\n", r.passed ? "PASS" : "FAIL", r.name, r.error,
                             r.threshold);
    ok = ok && r.passed;
  }
  return ok ? 0 : kExitRuntime;
}

int cmd_ablate(const mvl::Settings& s, const fs::path& out) {
  const auto report = mvl::language_ablation(s.ablation, [](const std::string& m) { std::cerr << m << "\n"; });
  std::string runs;
  for (const auto& run : report.runs) {
    for (const auto& c : run.cells) {
      runs += json{{"mix", run.mix}, {"seed", run.seed}, {"language", c.language}, {"metric", c.metric},
                   {"value", c.value}}.dump() + "\n";
    }
  }
  write_text(out / "runs.jsonl", runs);
  const auto table = mvl::report_table(report.summary);
  write_text(out / "report.txt", table);
  write_text(out / "report.jsonl", mvl::report_jsonl(report.summary));
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multilingual vision-language pipeline"};
  app.require_subcommand(1);
  CommonArgs common;

  auto* prepare = app.add_subcommand("prepare-data", "Write synthetic Stage 1/2 manifests and a benchmark");
  add_common(prepare, common);

  auto* train = app.add_subcommand("train", "Run one training stage");
  add_common(train, common);
  int stage = 1;
  std::string data_path;
  std::string checkpoint;
  bool from_scratch = false;
  train->add_option("--stage", stage, "1 (projector) or 2 (projector + LM)")->required()->check(CLI::IsMember({1, 2}));
  train->add_option("--data", data_path, "Training manifest (JSON lines)")->required();
  train->add_option("--checkpoint", checkpoint, "Checkpoint to start from (stage 2: the stage-1 output)");
  train->add_flag("--from-scratch", from_scratch, "Allow stage 2 without a stage-1 checkpoint");

  auto* eval = app.add_subcommand("eval", "Generate predictions for a benchmark and score them");
  add_common(eval, common);
  eval->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  eval->add_option("--data", data_path, "Benchmark manifest")->required();

  auto* generate = app.add_subcommand("generate", "Answer one prompt");
  add_common(generate, common);
  std::string image_path;
  std::string prompt;
  std::optional<std::size_t> max_new;
  generate->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  generate->add_option("--image", image_path, "Binary PPM (P6) image");
  generate->add_option("--prompt", prompt, "User prompt")->required();
  generate->add_option("--max-new-tokens", max_new, "Decoding budget in bytes");

  auto* grad = app.add_subcommand("grad-check", "Finite-difference gradient suite");
  add_common(grad, common);
  std::string inject_bug;
  std::optional<double> threshold;
  grad->add_option("--inject-bug", inject_bug, "Add a deliberately broken kernel (negative control): gelu");
  grad->add_option("--threshold", threshold, "Kernel relative-error threshold");

  auto* ablate = app.add_subcommand("ablate-languages", "Train/evaluate english-only, english+2 and english+10");
  add_common(ablate, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  const std::vector<std::string> args(argv + 1, argv + argc);
  try {
    const auto settings = load_settings(common);
    const fs::path out(common.out);
    echo_config(out, settings, args);
    if (*prepare) return cmd_prepare_data(settings, out);
    if (*train) return cmd_train(settings, out, stage, data_path, checkpoint, from_scratch);
    if (*eval) return cmd_eval(settings, out, checkpoint, data_path);
    if (*generate) return cmd_generate(settings, checkpoint, image_path, prompt, max_new);
    if (*grad) return cmd_grad_check(settings, inject_bug, threshold);
    if (*ablate) return cmd_ablate(settings, out);
  } catch (const mvl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == mvl::ErrorKind::kConfig ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
