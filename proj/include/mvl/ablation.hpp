// SPDX-License-Identifier: Apache-2.0
//
// Corpus builders shared by prepare-data and the language-mix ablation, and
// the ablation preset itself: one micro model per training mix and seed,
// scored on English and cipher-language genqa sets.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mvl/data.hpp"
#include "mvl/eval.hpp"
#include "mvl/model.hpp"
#include "mvl/trainer.hpp"

namespace mvl {

using LanguageSources = std::map<std::string, std::vector<ConversationSample>>;

/// Single-turn caption conversations for every item in every language.
LanguageSources caption_sources(const std::vector<SynthItem>& items, const std::vector<std::string>& languages);

/// Multi-turn instruction dialogs for every item in every language.
LanguageSources dialog_sources(const std::vector<SynthItem>& items, const std::vector<std::string>& languages,
                               std::uint64_t seed);

/// One genqa record per item and language (question type cycles through
/// caption, shape, colour and position) and, with `with_pope`, one presence
/// probe per item alternating true and false objects.
std::vector<EvalRecord> build_benchmark(const std::vector<SynthItem>& items, const std::vector<std::string>& languages,
                                        std::uint64_t seed, bool with_pope = true);

struct AblationMix {
  std::string name;
  double english_fraction = 1.0;
  std::vector<std::string> languages;
};

/// english-only, english+2 (l1, l2) and english+10 (l1..l10).
std::vector<AblationMix> ablation_mixes();

struct AblationConfig {
  ModelConfig model;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::vector<std::string> eval_languages = {"en", "l1", "l2"};
  std::size_t train_items = 600;
  std::size_t stage1_total = 400;
  std::size_t stage2_total = 600;
  std::size_t eval_items = 24;
  std::size_t max_new_tokens = 96;
  StageConfig stage1;
  StageConfig stage2;

  /// Micro model and the step budget the preset is calibrated for.
  static AblationConfig defaults();
};

struct AblationRun {
  std::string mix;
  std::uint64_t seed = 0;
  std::vector<ReportCell> cells;  // task "genqa", one per eval language and metric
};

struct AblationReport {
  std::vector<AblationRun> runs;
  /// Seed-averaged token F1: task = mix name, metric "token_f1", one cell per
  /// (mix, eval language).
  std::vector<ReportCell> summary;
};

using AblationProgress = std::function<void(const std::string& message)>;

/// Trains and evaluates every mix for every seed. Each mix sees the same
/// number of samples and optimizer steps.
AblationReport language_ablation(const AblationConfig& config, const AblationProgress& progress = {});

/// token_f1 of one run's cell for `language` (throws if absent).
double run_token_f1(const AblationRun& run, const std::string& language);

}  // namespace mvl
