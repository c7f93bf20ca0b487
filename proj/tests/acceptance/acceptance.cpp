// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run every criterion
//   acceptance 3 7        run criteria 3 and 7
//
// Exit status is 0 only when every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <fmt/format.h>

#include "mvl/ablation.hpp"
#include "mvl/checkpoint.hpp"
#include "mvl/data.hpp"
#include "mvl/errors.hpp"
#include "mvl/eval.hpp"
#include "mvl/gradcheck.hpp"
#include "mvl/model.hpp"
#include "mvl/rng.hpp"
#include "mvl/trainer.hpp"
#include "test_util.hpp"

using namespace mvl;
using mvl::testing::read_file;
using mvl::testing::TempDir;

namespace {

// Pinned tolerances and budgets.
constexpr double kKernelTolerance = 1e-4;
constexpr double kEndToEndTolerance = 1e-3;
constexpr double kGradcheckBudgetSeconds = 120;
constexpr double kFreezingBudgetSeconds = 300;
constexpr std::size_t kPaperVisualTokens = 576;
constexpr std::size_t kPaperContext = 4096;
constexpr std::size_t kShortContext = 512;
constexpr double kOverfitLossTarget = 0.2;
constexpr std::size_t kOverfitStepBudget = 2000;
constexpr std::size_t kOverfitRequired = 30;
constexpr double kOverfitBudgetSeconds = 900;
constexpr std::size_t kPopeTrials = 1000;
constexpr std::size_t kAblationSeedsRequired = 2;
constexpr double kAblationBudgetSeconds = 45 * 60;

struct Outcome {
  bool passed = false;
  std::string detail;
};

struct Criterion {
  int number;
  const char* name;
  std::function<Outcome()> run;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// d_model 64, 2 + 2 layers, 48x48 images with 8x8 patches.
ModelConfig micro_config(std::uint64_t seed) {
  ModelConfig c;
  c.seed = seed;
  return c;
}

std::vector<ConversationSample> caption_samples(const std::vector<SynthItem>& items) {
  std::vector<ConversationSample> out;
  for (const auto& item : items) {
    out.push_back(caption_to_single_turn(item.id, ImageRef::from_spec(item.spec), item.caption, "en"));
  }
  return out;
}

std::vector<std::string> group_bytes(const MultimodalModel<float>& model, ParamGroup group) {
  std::vector<std::string> out;
  for (const auto& p : model.parameters(group)) {
    const auto d = p.tensor.data();
    out.emplace_back(reinterpret_cast<const char*>(d.data()), d.size() * sizeof(float));
  }
  return out;
}

const char* changed(bool c) { return c ? "changed" : "unchanged"; }

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  Stopwatch clock;
  GradcheckConfig config;
  config.kernel_threshold = kKernelTolerance;
  config.end_to_end_threshold = kEndToEndTolerance;
  const auto results = run_gradcheck(config);
  const double elapsed = clock.seconds();
  std::size_t failed = 0, kernels = 0, graphs = 0;
  double worst_kernel = 0, worst_graph = 0;
  for (const auto& r : results) {
    failed += r.passed ? 0 : 1;
    if (r.name.rfind("end_to_end", 0) == 0) {
      ++graphs;
      worst_graph = std::max(worst_graph, r.error);
    } else {
      ++kernels;
      worst_kernel = std::max(worst_kernel, r.error);
    }
  }
  const bool ok = failed == 0 && kernels > 0 && graphs > 0 && elapsed < kGradcheckBudgetSeconds;
  return {ok, fmt::format("{} kernels max err {:.2e}, {} end-to-end groups max err {:.2e}, {} failed, {:.1f}s", kernels,
                          worst_kernel, graphs, worst_graph, failed, elapsed)};
}

Outcome freezing_invariants() {
  Stopwatch clock;
  auto model = MultimodalModel<float>::init(micro_config(1));
  const auto data = prepare_samples(caption_samples(synth_corpus(32, 101, "freeze")), model.config());

  const auto enc0 = group_bytes(model, ParamGroup::kEncoder);
  const auto proj0 = group_bytes(model, ParamGroup::kProjector);
  const auto lm0 = group_bytes(model, ParamGroup::kLm);

  auto s1 = StageConfig::defaults(1);
  s1.batch_size = 8;
  s1.epochs = 100;
  s1.max_steps = 100;
  s1.seed = 1;
  const auto r1 = run_stage(model, data, s1);

  const bool enc1 = group_bytes(model, ParamGroup::kEncoder) != enc0;
  const bool lm1 = group_bytes(model, ParamGroup::kLm) != lm0;
  const bool proj1 = group_bytes(model, ParamGroup::kProjector) != proj0;
  const auto proj_after1 = group_bytes(model, ParamGroup::kProjector);
  const auto lm_after1 = group_bytes(model, ParamGroup::kLm);

  auto s2 = StageConfig::defaults(2);
  s2.batch_size = 8;
  s2.epochs = 100;
  s2.max_steps = 20;
  s2.seed = 1;
  run_stage(model, data, s2);

  const bool enc2 = group_bytes(model, ParamGroup::kEncoder) != enc0;
  const bool proj2 = group_bytes(model, ParamGroup::kProjector) != proj_after1;
  const bool lm2 = group_bytes(model, ParamGroup::kLm) != lm_after1;
  const double elapsed = clock.seconds();

  const bool ok = r1.steps == 100 && !enc1 && !lm1 && proj1 && !enc2 && proj2 && lm2 &&
                  elapsed < kFreezingBudgetSeconds;
  return {ok, fmt::format("stage 1 ({} steps): encoder {}, projector {}, lm {}; stage 2: encoder {}, projector {}, "
                          "lm {}; {:.1f}s",
                          r1.steps, changed(enc1), changed(proj1), changed(lm1), changed(enc2), changed(proj2),
                          changed(lm2), elapsed)};
}

Outcome loss_mask_law() {
  auto model = MultimodalModel<float>::init(micro_config(2));
  apply_freezing(model, 2);

  std::vector<ConversationSample> samples;
  const auto items = synth_corpus(3, 202, "mask");
  samples.push_back(synth_dialog(items[0], "en", 5));
  samples.push_back(synth_dialog(items[1], "l3", 5));
  samples.push_back(caption_to_single_turn(items[2].id, ImageRef::from_spec(items[2].spec), items[2].caption, "en"));
  ConversationSample text_only;
  text_only.id = "text-only";
  text_only.language = "en";
  text_only.turns = {{Role::kUser, "Name a colour."}, {Role::kAssistant, "red"}, {Role::kUser, "Another?"},
                     {Role::kAssistant, "blue"}};
  samples.push_back(text_only);
  const auto prepared = prepare_samples(samples, model.config(), true, {"You describe pictures."});

  std::vector<SampleForward<float>> forwards;
  std::vector<Tensor<float>> losses;
  for (const auto& p : prepared) {
    forwards.push_back(forward_sample(model, p));
    losses.push_back(forwards.back().loss);
  }
  // Batch loss: mean of per-sample losses.
  auto total = losses[0];
  for (std::size_t i = 1; i < losses.size(); ++i) total = add(total, losses[i]);
  backward(scale(total, 1.0f / static_cast<float>(losses.size())));

  std::size_t zero_rows = 0, visual_rows = 0, nonzero_violations = 0, dead_supervised = 0;
  const std::size_t tokens = model.config().encoder.token_count();
  for (std::size_t i = 0; i < prepared.size(); ++i) {
    const auto& f = forwards[i];
    if (!f.logits.has_grad()) return {false, fmt::format("no logits gradient for '{}'", prepared[i].id)};
    const std::size_t v = f.logits.cols();
    const auto grad = f.logits.grad();
    const auto slot = prepared[i].rendered.image_slot;
    for (std::size_t t = 0; t < f.mask.size(); ++t) {
      const bool visual = slot && t >= *slot && t < *slot + tokens;
      bool all_zero = true;
      for (std::size_t j = 0; j < v; ++j) all_zero = all_zero && grad[t * v + j] == 0.0f;
      if (visual && f.mask[t] != 0) ++nonzero_violations;
      if (f.mask[t] == 0) {
        ++zero_rows;
        visual_rows += visual ? 1 : 0;
        if (!all_zero) ++nonzero_violations;
      } else if (all_zero) {
        ++dead_supervised;
      }
    }
  }
  const bool ok = nonzero_violations == 0 && dead_supervised == 0 && visual_rows == 3 * tokens;
  return {ok, fmt::format("{} unsupervised rows ({} visual) exactly zero, {} violations, {} supervised rows "
                          "without gradient",
                          zero_rows, visual_rows, nonzero_violations, dead_supervised)};
}

Outcome context_budget() {
  auto config = micro_config(3);
  config.encoder = encoder_variant("clip-336");
  config.lm.context_length = kPaperContext;
  if (config.encoder.token_count() != kPaperVisualTokens) {
    return {false, fmt::format("clip-336 gives {} tokens", config.encoder.token_count())};
  }
  const auto item = synth_corpus(1, 303, "ctx")[0];
  const std::vector<ConversationSample> samples{
      caption_to_single_turn(item.id, ImageRef::from_spec(item.spec), item.caption, "en")};

  const auto model = MultimodalModel<float>::init(config);
  const auto prepared = prepare_samples(samples, config);
  const auto seq = assemble(model, prepared[0].rendered, prepared[0].image.get());
  const std::size_t expected = prepared[0].rendered.ids.size() - 1 + kPaperVisualTokens;
  const bool fits = seq.visual_count == kPaperVisualTokens && seq.ids.size() == expected &&
                    seq.embeddings.rows() == expected;

  auto short_config = config;
  short_config.lm.context_length = kShortContext;
  std::string short_result = "accepted";
  bool overflow = false;
  try {
    prepare_samples(samples, short_config);
  } catch (const Error& e) {
    overflow = e.kind() == ErrorKind::kContextOverflow;
    short_result = std::string(to_string(e.kind()));
  }
  bool init_overflow = false;
  try {
    MultimodalModel<float>::init(short_config);
  } catch (const Error& e) {
    init_overflow = e.kind() == ErrorKind::kContextOverflow;
  }
  return {fits && overflow && init_overflow,
          fmt::format("context {}: {} positions ({} visual); context {}: {}{}", kPaperContext, seq.ids.size(),
                      seq.visual_count, kShortContext, short_result,
                      init_overflow ? ", model init also refuses" : "")};
}

Outcome overfit_fixture() {
  Stopwatch clock;
  auto model = MultimodalModel<float>::init(micro_config(5));
  const auto items = synth_corpus(32, 505, "fixture");
  const auto samples = caption_samples(items);
  const auto data = prepare_samples(samples, model.config());

  auto s1 = StageConfig::defaults(1);
  s1.batch_size = 8;
  s1.peak_lr = 3e-3;
  s1.epochs = 25;
  s1.seed = 5;
  auto s2 = StageConfig::defaults(2);
  s2.batch_size = 8;
  s2.peak_lr = 3e-3;
  s2.epochs = 350;
  s2.seed = 5;

  const auto r1 = run_stage(model, data, s1);
  const auto r2 = run_stage(model, data, s2);
  const std::size_t steps = r1.steps + r2.steps;
  // One epoch is 4 steps; average it so a single lucky batch cannot pass.
  double final_loss = 0;
  const std::size_t window = std::min<std::size_t>(4, r2.log.size());
  for (std::size_t i = r2.log.size() - window; i < r2.log.size(); ++i) final_loss += r2.log[i].loss;
  final_loss /= static_cast<double>(window);

  std::size_t reproduced = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto reply = answer(model, data[i].image.get(), samples[i].turns[0].text, 96);
    reproduced += reply == items[i].caption ? 1 : 0;
  }
  const double elapsed = clock.seconds();
  const bool ok = final_loss < kOverfitLossTarget && steps <= kOverfitStepBudget && reproduced >= kOverfitRequired &&
                  elapsed < kOverfitBudgetSeconds;
  return {ok, fmt::format("{} steps ({} + {}), final loss {:.4f}, {}/32 captions reproduced, {:.1f}s", steps,
                          r1.steps, r2.steps, final_loss, reproduced, elapsed)};
}

Outcome mixer_exactness() {
  const std::vector<std::string> languages{"l1", "l2", "l3", "l4", "l5", "l6", "l7", "l8", "l9", "l10"};
  std::map<std::string, std::vector<ConversationSample>> sources;
  for (const auto& tag : std::vector<std::string>{"en", "l1", "l2", "l3", "l4", "l5", "l6", "l7", "l8", "l9", "l10"}) {
    for (int i = 0; i < 700; ++i) {
      sources[tag].push_back(caption_to_single_turn(fmt::format("{}-{}", tag, i), std::nullopt, "a caption", tag));
    }
  }
  MixSpec spec{1200, 0.5, languages, 606};
  const auto a = mix_languages(sources, spec);
  const auto b = mix_languages(sources, spec);
  const auto hist = language_histogram(a);

  std::map<std::string, std::size_t> expected{{"en", 600}};
  for (const auto& l : languages) expected[l] = 60;
  const bool exact = hist == expected && a.size() == 1200;
  const bool deterministic = a == b;
  spec.seed = 607;
  const auto c = mix_languages(sources, spec);
  const bool reseeded = language_histogram(c) == expected && !(c == a);
  return {exact && deterministic && reseeded,
          fmt::format("en {} and {} per language over {} rows; same seed {}; other seed {}", hist.at("en"),
                      hist.at("l1"), a.size(), deterministic ? "identical" : "differs",
                      reseeded ? "same histogram, new order" : "unexpected")};
}

// Brute-force confusion matrix over records whose prediction class is known
// by construction.
struct LabelledRecord {
  EvalRecord record;
  std::string truth;  // yes | no
  std::string predicted;  // yes | no | invalid
};

PopeMetrics pope_oracle(const std::vector<LabelledRecord>& records) {
  auto count = [&](const std::string& truth, const std::string& predicted) {
    return static_cast<double>(std::count_if(records.begin(), records.end(), [&](const LabelledRecord& r) {
      return r.truth == truth && r.predicted == predicted;
    }));
  };
  const double tp = count("yes", "yes");
  const double fp = count("no", "yes");
  const double tn = count("no", "no");
  const double fn = count("yes", "no") + count("yes", "invalid");
  const double n = static_cast<double>(records.size());
  PopeMetrics m;
  m.accuracy = (tp + tn) / n;
  m.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  m.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  m.f1 = tp > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  m.yes_ratio = (tp + fp) / n;
  return m;
}

Outcome pope_oracle_equivalence() {
  Rng rng(707);
  const std::vector<std::string> languages{"en", "l1", "l2", "l3", "l4", "l5", "l6", "l7", "l8", "l9", "l10"};
  struct Answer {
    std::string text;
    std::string cls;
    bool english_only;  // all-caps forms have no cased counterpart in the cipher lexicons
  };
  const std::vector<Answer> pool{
      {"yes", "yes", false},         {"Yes.", "yes", false},        {"YES, there is", "yes", true},
      {"yeah", "yes", false},        {"True", "yes", false},        {"no", "no", false},
      {"No.", "no", false},          {"  NO, it is not", "no", true}, {"nope!", "no", false},
      {"incorrect", "no", false},    {"maybe", "invalid", false},   {"", "invalid", false},
      {"...", "invalid", false},     {"I think yes", "invalid", false}, {"42", "invalid", false}};
  std::size_t mismatches = 0, records_seen = 0;
  std::string first_mismatch;
  for (std::size_t trial = 0; trial < kPopeTrials; ++trial) {
    std::vector<LabelledRecord> set;
    const std::size_t n = 1 + rng.below(40);
    for (std::size_t i = 0; i < n; ++i) {
      LabelledRecord r;
      const auto& lang = languages[rng.below(languages.size())];
      r.truth = rng.below(2) ? "yes" : "no";
      const Answer* a = &pool[rng.below(pool.size())];
      while (lang != "en" && a->english_only) a = &pool[rng.below(pool.size())];
      const auto& text = a->text;
      r.predicted = a->cls;
      r.record.id = fmt::format("t{}-{}", trial, i);
      r.record.language = lang;
      r.record.task = EvalTask::kPope;
      r.record.reference = lang == "en" ? r.truth : cipher_translate(r.truth, lang);
      r.record.prediction = lang == "en" ? text : cipher_translate(text, lang);
      set.push_back(std::move(r));
    }
    std::vector<EvalRecord> plain;
    for (const auto& r : set) plain.push_back(r.record);
    records_seen += plain.size();
    const auto got = score_pope(plain);
    const auto want = pope_oracle(set);
    if (!(got == want)) {
      if (mismatches == 0) {
        first_mismatch = fmt::format(" (trial {}: acc {} vs {}, f1 {} vs {})", trial, got.accuracy, want.accuracy,
                                     got.f1, want.f1);
      }
      ++mismatches;
    }
  }
  return {mismatches == 0, fmt::format("{} record sets ({} records, 11 languages), {} mismatches{}", kPopeTrials,
                                       records_seen, mismatches, first_mismatch)};
}

Outcome language_ablation_direction() {
  Stopwatch clock;
  const auto config = AblationConfig::defaults();
  const auto report = language_ablation(config, [](const std::string& m) { std::cerr << "  " << m << "\n"; });
  const double elapsed = clock.seconds();

  std::map<std::uint64_t, const AblationRun*> only, ten;
  for (const auto& run : report.runs) {
    if (run.mix == "english-only") only[run.seed] = &run;
    if (run.mix == "english+10") ten[run.seed] = &run;
  }
  std::size_t cipher_wins = 0, english_wins = 0;
  std::string per_seed;
  for (const auto seed : config.seeds) {
    if (!only.count(seed) || !ten.count(seed)) return {false, fmt::format("missing runs for seed {}", seed)};
    double cipher_only = 0, cipher_ten = 0;
    std::size_t cipher_langs = 0;
    for (const auto& lang : config.eval_languages) {
      if (lang == "en") continue;
      cipher_only += run_token_f1(*only[seed], lang);
      cipher_ten += run_token_f1(*ten[seed], lang);
      ++cipher_langs;
    }
    cipher_only /= static_cast<double>(cipher_langs);
    cipher_ten /= static_cast<double>(cipher_langs);
    const double en_only = run_token_f1(*only[seed], "en");
    const double en_ten = run_token_f1(*ten[seed], "en");
    cipher_wins += cipher_ten > cipher_only ? 1 : 0;
    english_wins += en_only > en_ten ? 1 : 0;
    per_seed += fmt::format("; seed {}: cipher {:.3f} vs {:.3f}, en {:.3f} vs {:.3f}", seed, cipher_ten, cipher_only,
                            en_only, en_ten);
  }
  const bool ok = cipher_wins >= kAblationSeedsRequired && english_wins >= kAblationSeedsRequired &&
                  elapsed < kAblationBudgetSeconds;
  return {ok, fmt::format("english+10 wins cipher in {}/{} seeds, english-only wins English in {}/{}{}; {:.0f}s",
                          cipher_wins, config.seeds.size(), english_wins, config.seeds.size(), per_seed, elapsed)};
}

Outcome checkpoint_round_trip() {
  TempDir dir("accept-ckpt");
  auto model = MultimodalModel<float>::init(micro_config(9));
  const auto data = prepare_samples(caption_samples(synth_corpus(8, 909, "ckpt")), model.config());
  auto s1 = StageConfig::defaults(1);
  s1.batch_size = 4;
  s1.max_steps = 2;
  s1.seed = 9;
  run_stage(model, data, s1);

  const CheckpointMeta meta{1, 2, 9, {{"final_loss", 1.5}}};
  save_checkpoint(dir / "a.ckpt", model, meta);
  CheckpointMeta loaded_meta;
  const auto loaded = load_checkpoint(dir / "a.ckpt", &loaded_meta);
  save_checkpoint(dir / "b.ckpt", loaded, loaded_meta);
  const bool identical = read_file(dir / "a.ckpt") == read_file(dir / "b.ckpt") && loaded_meta == meta;

  std::size_t rejected = 0;
  std::vector<ModelConfig> others(3, micro_config(9));
  others[0].lm.d_model = 32;
  others[1].projector = ProjectorVariant::kLinear;
  others[2].encoder.n_layers = 1;
  for (const auto& other : others) {
    auto target = MultimodalModel<float>::init(other);
    try {
      load_into(target, dir / "a.ckpt");
    } catch (const Error& e) {
      rejected += e.kind() == ErrorKind::kConfig ? 1 : 0;
    }
  }
  return {identical && rejected == others.size(),
          fmt::format("re-saved file {}, {} bytes; {}/{} mismatched configs rejected",
                      identical ? "byte-identical" : "differs", read_file(dir / "a.ckpt").size(), rejected,
                      others.size())};
}

int run_mvlm(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = std::string(MVLM_EXE) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome train_determinism() {
  TempDir dir("accept-det");
  const std::string data_flags =
      " --seed 10 --set data.items=64 --set data.stage1_total=48 --set data.stage2_total=48 --set data.eval_items=2";
  const std::string train_flags =
      " --seed 10 --set train.stage1.batch_size=8 --set train.stage1.max_steps=12"
      " --set train.stage2.batch_size=8 --set train.stage2.max_steps=12 --set train.stage2.peak_lr=1e-3";
  if (run_mvlm("prepare-data --out " + (dir / "data").string() + data_flags, dir / "prep.log") != 0) {
    return {false, "prepare-data failed: " + read_file(dir / "prep.log")};
  }
  for (const char* run : {"a", "b"}) {
    const auto out = dir / run;
    if (run_mvlm("train --stage 1 --data " + (dir / "data" / "stage1.jsonl").string() + " --out " + out.string() +
                     train_flags,
                 dir / "train.log") != 0 ||
        run_mvlm("train --stage 2 --data " + (dir / "data" / "stage2.jsonl").string() + " --checkpoint " +
                     (out / "stage1.ckpt").string() + " --out " + out.string() + train_flags,
                 dir / "train.log") != 0) {
      return {false, "train failed: " + read_file(dir / "train.log")};
    }
  }
  std::size_t same = 0;
  const std::vector<std::string> files{"metrics_stage1.jsonl", "stage1.ckpt", "metrics_stage2.jsonl", "stage2.ckpt"};
  std::string differing;
  for (const auto& f : files) {
    const auto a = read_file(dir / "a" / f);
    if (!a.empty() && a == read_file(dir / "b" / f)) {
      ++same;
    } else {
      differing += " " + f;
    }
  }
  return {same == files.size(), fmt::format("{}/{} artifacts byte-identical across two train runs{}", same,
                                            files.size(), differing.empty() ? "" : " (differ:" + differing + ")")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "gradient suite", gradient_suite},
      {2, "freezing invariants", freezing_invariants},
      {3, "loss-mask law", loss_mask_law},
      {4, "context budget", context_budget},
      {5, "overfit fixture", overfit_fixture},
      {6, "mixer exactness", mixer_exactness},
      {7, "POPE oracle equivalence", pope_oracle_equivalence},
      {8, "language ablation direction", language_ablation_direction},
      {9, "checkpoint round trip", checkpoint_round_trip},
      {10, "train determinism", train_determinism},
  };

  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    char* end = nullptr;
    const long n = std::strtol(argv[i], &end, 10);
    if (*end != '\0' || n < 1 || n > static_cast<long>(criteria.size())) {
      std::cerr << "usage: acceptance [criterion numbers 1-" << criteria.size() << "]\n";
      return 1;
    }
    selected.push_back(static_cast<int>(n));
  }
  if (selected.empty()) {
    for (const auto& c : criteria) selected.push_back(c.number);
  }

  std::size_t failures = 0;
  for (const int n : selected) {
    const auto& c = criteria[static_cast<std::size_t>(n - 1)];
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome = {false, fmt::format("error: {}", e.what())};
    }
    failures += outcome.passed ? 0 : 1;
    std::cout << fmt::format("{} {:>2} {}: {}", outcome.passed ? "PASS" : "FAIL", c.number, c.name, outcome.detail)
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
