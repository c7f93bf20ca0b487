// SPDX-License-Identifier: Apache-2.0
//
// Benchmark records, deterministic scorers (POPE yes/no, exact match, token
// F1) and the per-language report.

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mvl/model.hpp"
#include "mvl/sample.hpp"

namespace mvl {

enum class EvalTask { kPope, kGenqa };

std::string_view to_string(EvalTask task);
EvalTask parse_eval_task(std::string_view name);

struct EvalRecord {
  std::string id;
  std::string language;
  EvalTask task = EvalTask::kGenqa;
  std::optional<ImageRef> image;
  std::string question;
  std::string reference;
  std::optional<std::string> prediction;

  bool operator==(const EvalRecord&) const = default;
};

// ---------------------------------------------------------------------------
// Normalisation

/// Case-folds ASCII, trims whitespace and strips trailing punctuation
/// (including the danda).
std::string normalize_answer(std::string_view text);

struct YesNoLexicon {
  std::vector<std::string> yes;
  std::vector<std::string> no;
};

/// Per-language yes/no words. English and every cipher language are built in;
/// real-language lexicons can be added with set().
class LexiconTable {
 public:
  static LexiconTable defaults();

  void set(const std::string& language, YesNoLexicon lexicon);
  /// Falls back to the English lexicon for unknown languages.
  const YesNoLexicon& get(std::string_view language) const;

 private:
  std::map<std::string, YesNoLexicon, std::less<>> table_;
};

/// "yes", "no" or "invalid", decided by the first alphabetic word.
std::string normalize_pope(std::string_view text, std::string_view language,
                           const LexiconTable& lexicons = LexiconTable::defaults());

// ---------------------------------------------------------------------------
// Scoring

struct PopeMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double yes_ratio = 0.0;

  bool operator==(const PopeMetrics&) const = default;
};

/// Positive class "yes". Invalid predictions are wrong and count as non-yes.
/// Empty input is an empty-eval error; a record without a prediction or with
/// a reference other than yes/no is a contract error.
PopeMetrics score_pope(std::span<const EvalRecord> records, const LexiconTable& lexicons = LexiconTable::defaults());

struct GenqaMetrics {
  double exact_match = 0.0;
  double token_f1 = 0.0;

  bool operator==(const GenqaMetrics&) const = default;
};

/// Word tokens: maximal runs of non-space, non-punctuation codepoints from one
/// Unicode block, after normalize_answer.
std::vector<std::string> answer_tokens(std::string_view text);

/// Bag-of-tokens F1; 1 when both sides are empty, 0 when exactly one is.
double token_f1(std::string_view prediction, std::string_view reference);

/// Per-record exact match and token F1, averaged.
GenqaMetrics score_genqa(std::span<const EvalRecord> records);

// ---------------------------------------------------------------------------
// Report

struct ReportCell {
  std::string task;
  std::string metric;
  std::string language;  // tag (en, l1, te, ...) or display name
  double value = 0.0;

  bool operator==(const ReportCell&) const = default;
};

/// Column display name for a language tag: l1..l10 and ISO codes map to the
/// report columns, "en" to English; anything else is kept verbatim.
std::string report_column(std::string_view language);

/// Fixed column order: Telugu, Hindi, Bengali, Malayalam, Kannada, Assamese,
/// Tamil, Marathi, Gujarati, Odia, English.
std::span<const std::string_view> report_columns();

/// Plain-text table, one row per task/metric in order of first appearance.
/// Unknown languages become extra columns after English; missing cells print
/// as "—". Values are rounded to 4 decimals.
std::string report_table(std::span<const ReportCell> cells);

/// One JSON object per cell: {"task","metric","language","column","value"}.
std::string report_jsonl(std::span<const ReportCell> cells);

/// Scores records grouped by (task, language) into report cells.
std::vector<ReportCell> score_records(std::span<const EvalRecord> records,
                                      const LexiconTable& lexicons = LexiconTable::defaults());

// ---------------------------------------------------------------------------
// Files and generation

/// Benchmark manifest: training-manifest records holding a single user turn
/// (the question) plus "task" and "reference" fields.
std::vector<EvalRecord> load_benchmark(const std::filesystem::path& path);
void write_benchmark(const std::filesystem::path& path, std::span<const EvalRecord> records);

/// Prediction files hold {"id", "prediction"} per line.
void write_predictions(const std::filesystem::path& path, std::span<const EvalRecord> records);
/// Fills predictions by id; unknown ids are a schema error.
void read_predictions(const std::filesystem::path& path, std::vector<EvalRecord>& records);

/// Greedy answers for every record.
void predict(const MultimodalModel<float>& model, std::vector<EvalRecord>& records, std::size_t max_new_tokens,
             const RenderOptions& options = {});

}  // namespace mvl
