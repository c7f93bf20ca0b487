// SPDX-License-Identifier: Apache-2.0

#include "mvl/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

#include "mvl/data.hpp"
#include "mvl/errors.hpp"
#include "mvl/utf8.hpp"

namespace mvl {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(EvalTask task) { return task == EvalTask::kPope ? "pope" : "genqa"; }

EvalTask parse_eval_task(std::string_view name) {
  if (name == "pope") return EvalTask::kPope;
  if (name == "genqa") return EvalTask::kGenqa;
  throw Error(ErrorKind::kSchema, fmt::format("unknown eval task '{}'", name));
}

// ---------------------------------------------------------------------------
// Normalisation

namespace {

bool is_space(char32_t cp) {
  return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\v' || cp == '\f' || cp == 0xA0 ||
         (cp >= 0x2000 && cp <= 0x200B) || cp == 0x3000;
}

bool is_punct(char32_t cp) {
  if (cp < 0x80) return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) || (cp >= 0x5B && cp <= 0x60) ||
                        (cp >= 0x7B && cp <= 0x7E);
  return cp == 0x0964 || cp == 0x0965 || (cp >= 0x2010 && cp <= 0x205E) || cp == 0x00BF || cp == 0x00A1;
}

bool is_letter_like(char32_t cp) {
  if (cp < 0x80) return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
  return !is_space(cp) && !is_punct(cp);
}

// Block of a word codepoint; ASCII letters and digits share block 0.
std::uint32_t block_of(char32_t cp) { return cp < 0x80 ? 0 : static_cast<std::uint32_t>(cp >> 7) + 1; }

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  std::uint32_t current_block = 0;
  for (char32_t cp : utf8::codepoints(text)) {
    if (is_space(cp) || is_punct(cp)) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
      continue;
    }
    const auto block = block_of(cp);
    if (!current.empty() && block != current_block) {
      words.push_back(std::move(current));
      current.clear();
    }
    current_block = block;
    utf8::append(current, cp);
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

}  // namespace

std::string normalize_answer(std::string_view text) {
  auto cps = utf8::codepoints(text);
  for (auto& cp : cps)
    if (cp >= 'A' && cp <= 'Z') cp = cp - 'A' + 'a';
  std::size_t begin = 0;
  std::size_t end = cps.size();
  while (begin < end && is_space(cps[begin])) ++begin;
  while (end > begin && (is_space(cps[end - 1]) || is_punct(cps[end - 1]))) --end;
  return utf8::from_codepoints(std::vector<char32_t>(cps.begin() + static_cast<std::ptrdiff_t>(begin),
                                                     cps.begin() + static_cast<std::ptrdiff_t>(end)));
}

namespace {

const YesNoLexicon kEnglishLexicon = {
    {"yes", "yeah", "yep", "true", "correct"},
    {"no", "nope", "false", "incorrect"},
};

YesNoLexicon cipher_lexicon(std::string_view language) {
  YesNoLexicon out;
  auto add = [&](std::vector<std::string>& dst, const std::string& word) {
    dst.push_back(cipher_translate(word, language));
    std::string capital = word;
    capital[0] = static_cast<char>(capital[0] - 'a' + 'A');
    dst.push_back(cipher_translate(capital, language));
  };
  for (const auto& w : kEnglishLexicon.yes) add(out.yes, w);
  for (const auto& w : kEnglishLexicon.no) add(out.no, w);
  return out;
}

}  // namespace

LexiconTable LexiconTable::defaults() {
  LexiconTable table;
  table.set("en", kEnglishLexicon);
  for (const auto& lang : synthetic_languages()) table.set(lang.tag, cipher_lexicon(lang.tag));
  return table;
}

void LexiconTable::set(const std::string& language, YesNoLexicon lexicon) {
  for (auto* words : {&lexicon.yes, &lexicon.no})
    for (auto& w : *words) w = normalize_answer(w);
  table_[language] = std::move(lexicon);
}

const YesNoLexicon& LexiconTable::get(std::string_view language) const {
  const auto it = table_.find(language);
  return it == table_.end() ? kEnglishLexicon : it->second;
}

std::string normalize_pope(std::string_view text, std::string_view language, const LexiconTable& lexicons) {
  const auto words = split_words(normalize_answer(text));
  const auto first = std::find_if(words.begin(), words.end(), [](const std::string& w) {
    const auto cps = utf8::codepoints(w);
    return std::any_of(cps.begin(), cps.end(), is_letter_like);
  });
  if (first == words.end()) return "invalid";
  const auto& lex = lexicons.get(language);
  if (std::find(lex.yes.begin(), lex.yes.end(), *first) != lex.yes.end()) return "yes";
  if (std::find(lex.no.begin(), lex.no.end(), *first) != lex.no.end()) return "no";
  return "invalid";
}

// ---------------------------------------------------------------------------
// Scoring

PopeMetrics score_pope(std::span<const EvalRecord> records, const LexiconTable& lexicons) {
  if (records.empty()) throw Error(ErrorKind::kEmptyEval, "no POPE records to score");
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0, yes = 0;
  for (const auto& r : records) {
    if (r.task != EvalTask::kPope) {
      throw Error(ErrorKind::kContract, fmt::format("record '{}' is not a POPE record", r.id));
    }
    if (!r.prediction) throw Error(ErrorKind::kContract, fmt::format("record '{}' has no prediction", r.id));
    const auto ref = normalize_pope(r.reference, r.language, lexicons);
    if (ref == "invalid") {
      throw Error(ErrorKind::kContract, fmt::format("record '{}' reference '{}' is not yes/no", r.id, r.reference));
    }
    const auto pred = normalize_pope(*r.prediction, r.language, lexicons);
    const bool pred_yes = pred == "yes";
    yes += pred_yes ? 1 : 0;
    if (ref == "yes") {
      (pred_yes ? tp : fn) += 1;
    } else if (pred_yes) {
      fp += 1;
    } else if (pred == "no") {
      tn += 1;
    }
  }
  const double n = static_cast<double>(records.size());
  PopeMetrics m;
  m.accuracy = static_cast<double>(tp + tn) / n;
  m.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  m.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  m.f1 = tp == 0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  m.yes_ratio = static_cast<double>(yes) / n;
  return m;
}

std::vector<std::string> answer_tokens(std::string_view text) { return split_words(normalize_answer(text)); }

double token_f1(std::string_view prediction, std::string_view reference) {
  auto pred = answer_tokens(prediction);
  auto ref = answer_tokens(reference);
  if (pred.empty() && ref.empty()) return 1.0;
  if (pred.empty() || ref.empty()) return 0.0;
  std::sort(pred.begin(), pred.end());
  std::sort(ref.begin(), ref.end());
  std::vector<std::string> common;
  std::set_intersection(pred.begin(), pred.end(), ref.begin(), ref.end(), std::back_inserter(common));
  if (common.empty()) return 0.0;
  const double precision = static_cast<double>(common.size()) / static_cast<double>(pred.size());
  const double recall = static_cast<double>(common.size()) / static_cast<double>(ref.size());
  return 2.0 * precision * recall / (precision + recall);
}

GenqaMetrics score_genqa(std::span<const EvalRecord> records) {
  if (records.empty()) throw Error(ErrorKind::kEmptyEval, "no genqa records to score");
  double em = 0.0;
  double f1 = 0.0;
  for (const auto& r : records) {
    if (!r.prediction) throw Error(ErrorKind::kContract, fmt::format("record '{}' has no prediction", r.id));
    em += normalize_answer(*r.prediction) == normalize_answer(r.reference) ? 1.0 : 0.0;
    f1 += token_f1(*r.prediction, r.reference);
  }
  const double n = static_cast<double>(records.size());
  return {em / n, f1 / n};
}

// ---------------------------------------------------------------------------
// Report

namespace {

constexpr std::array<std::string_view, 11> kColumns = {"Telugu",   "Hindi", "Bengali",  "Malayalam",
                                                       "Kannada",  "Assamese", "Tamil", "Marathi",
                                                       "Gujarati", "Odia",  "English"};
constexpr std::array<std::string_view, 10> kIsoTags = {"te", "hi", "bn", "ml", "kn", "as", "ta", "mr", "gu", "or"};

std::size_t display_width(std::string_view s) { return utf8::codepoints(s).size(); }

std::string pad(std::string_view s, std::size_t width) {
  std::string out(s);
  out.append(width - std::min(width, display_width(s)), ' ');
  return out;
}

std::string format_value(double v) { return fmt::format("{}", std::round(v * 1e4) / 1e4); }

}  // namespace

std::span<const std::string_view> report_columns() { return kColumns; }

std::string report_column(std::string_view language) {
  if (language == "en") return "English";
  if (const auto* lang = find_synthetic_language(language)) return lang->display;
  for (std::size_t i = 0; i < kIsoTags.size(); ++i)
    if (kIsoTags[i] == language) return std::string(kColumns[i]);
  return std::string(language);
}

std::string report_table(std::span<const ReportCell> cells) {
  std::vector<std::string> columns(kColumns.begin(), kColumns.end());
  std::vector<std::string> rows;
  std::map<std::pair<std::string, std::string>, std::string> values;
  for (const auto& c : cells) {
    const std::string row = c.task + "/" + c.metric;
    const std::string column = report_column(c.language);
    if (std::find(rows.begin(), rows.end(), row) == rows.end()) rows.push_back(row);
    if (std::find(columns.begin(), columns.end(), column) == columns.end()) columns.push_back(column);
    values[{row, column}] = format_value(c.value);
  }

  std::vector<std::size_t> widths;
  std::size_t first = display_width("task/metric");
  for (const auto& r : rows) first = std::max(first, display_width(r));
  for (const auto& col : columns) {
    std::size_t w = display_width(col);
    for (const auto& r : rows) {
      const auto it = values.find({r, col});
      w = std::max(w, it == values.end() ? 1 : display_width(it->second));
    }
    widths.push_back(w);
  }

  std::string out = pad("task/metric", first);
  for (std::size_t i = 0; i < columns.size(); ++i) out += "  " + pad(columns[i], widths[i]);
  out += '\n';
  for (const auto& r : rows) {
    out += pad(r, first);
    for (std::size_t i = 0; i < columns.size(); ++i) {
      const auto it = values.find({r, columns[i]});
      out += "  " + pad(it == values.end() ? "—" : it->second, widths[i]);
    }
    out += '\n';
  }
  return out;
}

std::string report_jsonl(std::span<const ReportCell> cells) {
  std::string out;
  for (const auto& c : cells) {
    json j = {{"task", c.task},
              {"metric", c.metric},
              {"language", c.language},
              {"column", report_column(c.language)},
              {"value", c.value}};
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<ReportCell> score_records(std::span<const EvalRecord> records, const LexiconTable& lexicons) {
  if (records.empty()) throw Error(ErrorKind::kEmptyEval, "no records to score");
  // Groups in order of first appearance.
  std::vector<std::pair<EvalTask, std::string>> keys;
  std::map<std::pair<EvalTask, std::string>, std::vector<EvalRecord>> groups;
  for (const auto& r : records) {
    const auto key = std::make_pair(r.task, r.language);
    if (!groups.count(key)) keys.push_back(key);
    groups[key].push_back(r);
  }
  std::vector<ReportCell> cells;
  for (const auto& key : keys) {
    const auto& group = groups[key];
    const std::string task(to_string(key.first));
    if (key.first == EvalTask::kPope) {
      const auto m = score_pope(group, lexicons);
      for (const auto& [name, v] : {std::pair{"accuracy", m.accuracy},
                                    {"precision", m.precision},
                                    {"recall", m.recall},
                                    {"f1", m.f1},
                                    {"yes_ratio", m.yes_ratio}}) {
        cells.push_back({task, name, key.second, v});
      }
    } else {
      const auto m = score_genqa(group);
      cells.push_back({task, "exact_match", key.second, m.exact_match});
      cells.push_back({task, "token_f1", key.second, m.token_f1});
    }
  }
  return cells;
}

// ---------------------------------------------------------------------------
// Files and generation

std::vector<EvalRecord> load_benchmark(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, fmt::format("cannot read benchmark '{}'", path.string()));
  std::vector<EvalRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = fmt::format("{}:{}", path.string(), line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::kSchema, fmt::format("{}: invalid JSON ({})", where, e.what()));
    }
    const auto sample = sample_from_json(j, where);
    if (sample.turns.size() != 1) {
      throw Error(ErrorKind::kSchema, fmt::format("{}: benchmark records hold exactly one user turn", where));
    }
    if (!j.contains("task") || !j["task"].is_string() || !j.contains("reference") || !j["reference"].is_string()) {
      throw Error(ErrorKind::kSchema, fmt::format("{}: missing string fields 'task' and 'reference'", where));
    }
    EvalRecord r;
    r.id = sample.id;
    r.language = sample.language;
    try {
      r.task = parse_eval_task(j["task"].get<std::string>());
    } catch (const Error& e) {
      throw Error(ErrorKind::kSchema, fmt::format("{}: {}", where, e.what()));
    }
    r.image = sample.image;
    r.question = sample.turns[0].text;
    r.reference = j["reference"].get<std::string>();
    if (j.contains("prediction") && j["prediction"].is_string()) r.prediction = j["prediction"].get<std::string>();
    if (r.task == EvalTask::kPope && normalize_pope(r.reference, r.language) == "invalid") {
      throw Error(ErrorKind::kSchema, fmt::format("{}: POPE reference '{}' is not yes/no", where, r.reference));
    }
    if (r.image && r.image->path) {
      fs::path image_path(*r.image->path);
      if (image_path.is_relative()) image_path = path.parent_path() / image_path;
      if (!fs::exists(image_path)) {
        throw Error(ErrorKind::kSchema, fmt::format("{}: image '{}' not found", where, image_path.string()));
      }
      r.image->path = image_path.lexically_normal().string();
    }
    records.push_back(std::move(r));
  }
  return records;
}

void write_benchmark(const fs::path& path, std::span<const EvalRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, fmt::format("cannot write benchmark '{}'", path.string()));
  for (const auto& r : records) {
    ConversationSample s;
    s.id = r.id;
    s.language = r.language;
    s.image = r.image;
    s.turns.push_back({Role::kUser, r.question});
    auto j = sample_to_json(s);
    j["task"] = std::string(to_string(r.task));
    j["reference"] = r.reference;
    out << j.dump() << '\n';
  }
}

void write_predictions(const fs::path& path, std::span<const EvalRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, fmt::format("cannot write predictions '{}'", path.string()));
  for (const auto& r : records) {
    json j = {{"id", r.id}, {"prediction", r.prediction.value_or("")}};
    out << j.dump() << '\n';
  }
}

void read_predictions(const fs::path& path, std::vector<EvalRecord>& records) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, fmt::format("cannot read predictions '{}'", path.string()));
  std::map<std::string, EvalRecord*> by_id;
  for (auto& r : records) by_id[r.id] = &r;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = fmt::format("{}:{}", path.string(), line_no);
    try {
      const auto j = json::parse(line);
      const auto id = j.at("id").get<std::string>();
      const auto it = by_id.find(id);
      if (it == by_id.end()) throw Error(ErrorKind::kSchema, fmt::format("{}: unknown record id '{}'", where, id));
      it->second->prediction = j.at("prediction").get<std::string>();
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kSchema, fmt::format("{}: {}", where, e.what()));
    }
  }
}

void predict(const MultimodalModel<float>& model, std::vector<EvalRecord>& records, std::size_t max_new_tokens,
             const RenderOptions& options) {
  std::map<std::string, ImageInput> images;
  for (auto& r : records) {
    const ImageInput* image = nullptr;
    if (r.image) {
      auto it = images.find(r.image->key());
      if (it == images.end()) {
        it = images.emplace(r.image->key(), preprocess(load_image(*r.image), model.config().encoder.image_size)).first;
      }
      image = &it->second;
    }
    r.prediction = answer(model, image, r.question, max_new_tokens, options);
  }
}

}  // namespace mvl
