// SPDX-License-Identifier: Apache-2.0

#include "mvl/ablation.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "mvl/errors.hpp"
#include "mvl/rng.hpp"

namespace mvl {

namespace {

constexpr std::string_view kRows[] = {"top", "middle", "bottom"};
constexpr std::string_view kCols[] = {"left", "center", "right"};

std::vector<std::string> all_languages() {
  std::vector<std::string> langs = {"en"};
  for (const auto& l : synthetic_languages()) langs.push_back(l.tag);
  return langs;
}

}  // namespace

LanguageSources caption_sources(const std::vector<SynthItem>& items, const std::vector<std::string>& languages) {
  LanguageSources sources;
  for (const auto& lang : languages) {
    auto& out = sources[lang];
    out.reserve(items.size());
    for (const auto& item : items) {
      out.push_back(caption_to_single_turn(fmt::format("{}-cap-{}", item.id, lang), ImageRef::from_spec(item.spec),
                                           localize(item.caption, lang), lang));
    }
  }
  return sources;
}

LanguageSources dialog_sources(const std::vector<SynthItem>& items, const std::vector<std::string>& languages,
                               std::uint64_t seed) {
  LanguageSources sources;
  for (const auto& lang : languages) {
    auto& out = sources[lang];
    out.reserve(items.size());
    for (const auto& item : items) out.push_back(synth_dialog(item, lang, seed));
  }
  return sources;
}

std::vector<EvalRecord> build_benchmark(const std::vector<SynthItem>& items, const std::vector<std::string>& languages,
                                        std::uint64_t seed, bool with_pope) {
  std::vector<EvalRecord> records;
  for (const auto& lang : languages) {
    std::uint64_t lang_key = 0;
    for (char c : lang) lang_key = lang_key * 131 + static_cast<unsigned char>(c);
    Rng rng(derive_seed(seed, lang_key));
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto& item = items[i];
      const auto& s = item.spec;
      std::string question;
      std::string reference;
      switch (i % 4) {
        case 0:
          question = "Describe the image briefly.";
          reference = item.caption;
          break;
        case 1:
          question = "What shape is in the image?";
          reference = fmt::format("a {}", s.shape);
          break;
        case 2:
          question = fmt::format("What color is the {}?", s.shape);
          reference = s.color;
          break;
        default:
          question = fmt::format("Where is the {}?", s.shape);
          reference = fmt::format("in the {} {}", kRows[s.row], kCols[s.col]);
          break;
      }
      EvalRecord r;
      r.id = fmt::format("{}-{}-genqa", item.id, lang);
      r.language = lang;
      r.task = EvalTask::kGenqa;
      r.image = ImageRef::from_spec(s);
      r.question = std::string(kImagePlaceholder) + "\n" + localize(question, lang);
      r.reference = localize(reference, lang);
      records.push_back(std::move(r));

      if (!with_pope) continue;
      std::string shape = s.shape;
      std::string color = s.color;
      if (i % 2 == 1) {
        do {
          shape = std::string(kShapes[rng.below(3)]);
          color = std::string(kColors[rng.below(3)]);
        } while (shape == s.shape && color == s.color);
      }
      const auto probe = pope_probe(s, shape, color);
      EvalRecord p;
      p.id = fmt::format("{}-{}-pope", item.id, lang);
      p.language = lang;
      p.task = EvalTask::kPope;
      p.image = ImageRef::from_spec(s);
      p.question = std::string(kImagePlaceholder) + "\n" + localize(probe.question, lang);
      p.reference = localize(probe.answer, lang);
      records.push_back(std::move(p));
    }
  }
  return records;
}

std::vector<AblationMix> ablation_mixes() {
  std::vector<std::string> ten;
  for (const auto& l : synthetic_languages()) ten.push_back(l.tag);
  return {
      {"english-only", 1.0, {}},
      {"english+2", 0.5, {"l1", "l2"}},
      {"english+10", 0.5, ten},
  };
}

AblationConfig AblationConfig::defaults() {
  AblationConfig c;
  c.stage1 = StageConfig::defaults(1);
  c.stage1.batch_size = 16;
  c.stage1.peak_lr = 2e-3;
  c.stage2 = StageConfig::defaults(2);
  c.stage2.batch_size = 16;
  c.stage2.peak_lr = 2e-3;
  c.stage2.epochs = 8;
  return c;
}

AblationReport language_ablation(const AblationConfig& config, const AblationProgress& progress) {
  if (config.seeds.empty()) throw Error(ErrorKind::kConfig, "ablation needs at least one seed");
  if (config.eval_languages.empty()) throw Error(ErrorKind::kConfig, "ablation needs at least one eval language");
  auto say = [&](const std::string& m) {
    if (progress) progress(m);
  };
  const auto mixes = ablation_mixes();
  const auto languages = all_languages();
  AblationReport report;

  for (const auto seed : config.seeds) {
    const auto items = synth_corpus(config.train_items, derive_seed(seed, 11), "train");
    const auto heldout = synth_corpus(config.eval_items, derive_seed(seed, 12), "heldout");
    const auto captions = caption_sources(items, languages);
    const auto dialogs = dialog_sources(items, languages, seed);
    const auto benchmark = build_benchmark(heldout, config.eval_languages, seed, /*with_pope=*/false);

    for (const auto& mix : mixes) {
      MixSpec spec1{config.stage1_total, mix.english_fraction, mix.languages, derive_seed(seed, 21)};
      MixSpec spec2{config.stage2_total, mix.english_fraction, mix.languages, derive_seed(seed, 22)};
      const auto stage1_data = mix_languages(captions, spec1);
      const auto stage2_data = mix_languages(dialogs, spec2);

      ModelConfig model_config = config.model;
      model_config.seed = seed;
      auto model = MultimodalModel<float>::init(model_config);

      StageConfig s1 = config.stage1;
      s1.stage = 1;
      s1.seed = seed;
      StageConfig s2 = config.stage2;
      s2.stage = 2;
      s2.seed = seed;
      const auto prepared1 = prepare_samples(stage1_data, model_config);
      const auto r1 = run_stage(model, prepared1, s1);
      const auto prepared2 = prepare_samples(stage2_data, model_config);
      const auto r2 = run_stage(model, prepared2, s2);

      auto records = benchmark;
      predict(model, records, config.max_new_tokens);
      AblationRun run{mix.name, seed, score_records(records)};
      say(fmt::format("seed {} {}: stage1 loss {:.4f}, stage2 loss {:.4f}, token_f1 {}", seed, mix.name,
                      r1.log.empty() ? 0.0 : r1.log.back().loss, r2.log.empty() ? 0.0 : r2.log.back().loss,
                      [&] {
                        std::string s;
                        for (const auto& lang : config.eval_languages) {
                          s += fmt::format("{}={:.4f} ", lang, run_token_f1(run, lang));
                        }
                        return s;
                      }()));
      report.runs.push_back(std::move(run));
    }
  }

  for (const auto& mix : mixes) {
    for (const auto& lang : config.eval_languages) {
      double total = 0.0;
      for (const auto& run : report.runs)
        if (run.mix == mix.name) total += run_token_f1(run, lang);
      report.summary.push_back({mix.name, "token_f1", lang, total / static_cast<double>(config.seeds.size())});
    }
  }
  return report;
}

double run_token_f1(const AblationRun& run, const std::string& language) {
  const auto it = std::find_if(run.cells.begin(), run.cells.end(), [&](const ReportCell& c) {
    return c.task == "genqa" && c.metric == "token_f1" && c.language == language;
  });
  if (it == run.cells.end()) {
    throw Error(ErrorKind::kContract, fmt::format("run {} / seed {} has no token_f1 for '{}'", run.mix, run.seed,
                                                  language));
  }
  return it->value;
}

}  // namespace mvl
