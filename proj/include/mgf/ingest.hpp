// Parsing and validation of the three external inputs: ASR hypothesis JSON,
// acoustic frame CSV, and the session manifest.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mgf/csv.hpp"
#include "mgf/error.hpp"
#include "mgf/tensor.hpp"

namespace mgf {

enum class DisflTag { fluent, edit_term, repair_onset };

inline std::string_view to_string(DisflTag t) {
  switch (t) {
    case DisflTag::fluent: return "fluent";
    case DisflTag::edit_term: return "edit_term";
    case DisflTag::repair_onset: return "repair_onset";
  }
  return "fluent";
}

inline std::optional<DisflTag> disfl_from_string(std::string_view s) {
  if (s == "fluent") return DisflTag::fluent;
  if (s == "edit_term") return DisflTag::edit_term;
  if (s == "repair_onset") return DisflTag::repair_onset;
  return std::nullopt;
}

struct WordToken {
  std::string text;
  double start = 0.0;  // seconds
  double end = 0.0;    // seconds
  std::string speaker;
  double asr_conf = 1.0;
  std::optional<double> lm_prob;
  std::optional<DisflTag> disfl_tag;

  friend bool operator==(const WordToken&, const WordToken&) = default;
};

struct Transcript {
  std::string session_id;
  std::vector<WordToken> tokens;  // sorted by start, stable
  std::string patient_speaker;

  std::size_t patient_token_count() const {
    return static_cast<std::size_t>(std::count_if(
        tokens.begin(), tokens.end(),
        [&](const WordToken& t) { return t.speaker == patient_speaker; }));
  }

  friend bool operator==(const Transcript&, const Transcript&) = default;
};

inline constexpr double kFrameRateHz = 100.0;

struct FrameMatrix {
  std::string session_id;
  Matrix frames;  // T x F
  std::vector<std::string> feature_names;
  double rate = kFrameRateHz;
};

struct SessionRecord {
  std::string session_id;
  std::string frames_path;
  std::string asr_path;
  std::string patient_speaker;
  std::optional<int> ad_label;
  std::optional<int> mmse;
  std::optional<int> decline_label;

  friend bool operator==(const SessionRecord&, const SessionRecord&) = default;
};

namespace detail {

inline double require_number(const nlohmann::json& j, const char* key, std::size_t idx) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number())
    throw ValidationError("token " + std::to_string(idx) + ": missing or non-numeric \"" +
                          key + "\"");
  double v = it->get<double>();
  if (!std::isfinite(v))
    throw ValidationError("token " + std::to_string(idx) + ": non-finite \"" + key + "\"");
  return v;
}

inline void check_probability(double v, const char* key, std::size_t idx) {
  if (!(v >= 0.0 && v <= 1.0))
    throw ValidationError("token " + std::to_string(idx) + ": \"" + key +
                          "\" outside [0,1]");
}

}  // namespace detail

// Parses one ASR hypothesis file. Tokens from all turns are flattened and
// stably sorted by start time. Token indices in error messages count words in
// file order across turns.
inline Transcript parse_asr(std::string_view bytes, std::string patient_speaker = {}) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("ASR JSON parse error at byte ") + std::to_string(e.byte) +
                         ": " + e.what(),
                     e.byte);
  }
  if (!doc.is_object()) throw ValidationError("ASR JSON: top level must be an object");
  Transcript tr;
  tr.patient_speaker = std::move(patient_speaker);
  auto sid = doc.find("session_id");
  if (sid == doc.end() || !sid->is_string())
    throw ValidationError("ASR JSON: missing string \"session_id\"");
  tr.session_id = sid->get<std::string>();
  auto turns = doc.find("turns");
  if (turns == doc.end() || !turns->is_array())
    throw ValidationError("ASR JSON: missing array \"turns\"");

  std::size_t idx = 0;
  for (const auto& turn : *turns) {
    if (!turn.is_object() || !turn.contains("speaker") || !turn["speaker"].is_string())
      throw ValidationError("ASR JSON: turn without string \"speaker\"");
    auto words = turn.find("words");
    if (words == turn.end() || !words->is_array())
      throw ValidationError("ASR JSON: turn without array \"words\"");
    const std::string speaker = turn["speaker"].get<std::string>();
    for (const auto& w : *words) {
      if (!w.is_object()) throw ValidationError("token " + std::to_string(idx) + ": not an object");
      WordToken tok;
      auto text = w.find("w");
      if (text == w.end() || !text->is_string())
        throw ValidationError("token " + std::to_string(idx) + ": missing string \"w\"");
      tok.text = text->get<std::string>();
      tok.speaker = speaker;
      tok.start = detail::require_number(w, "start", idx);
      tok.end = detail::require_number(w, "end", idx);
      if (tok.start < 0.0)
        throw ValidationError("token " + std::to_string(idx) + ": negative start");
      if (tok.end < tok.start)
        throw ValidationError("token " + std::to_string(idx) + ": end < start");
      tok.asr_conf = detail::require_number(w, "conf", idx);
      detail::check_probability(tok.asr_conf, "conf", idx);
      if (auto lm = w.find("lm_prob"); lm != w.end() && !lm->is_null()) {
        double p = detail::require_number(w, "lm_prob", idx);
        detail::check_probability(p, "lm_prob", idx);
        tok.lm_prob = p;
      }
      if (auto d = w.find("disfl"); d != w.end() && !d->is_null()) {
        if (!d->is_string())
          throw ValidationError("token " + std::to_string(idx) + ": \"disfl\" must be a string");
        auto tag = disfl_from_string(d->get<std::string>());
        if (!tag)
          throw ValidationError("token " + std::to_string(idx) + ": unknown disfl tag \"" +
                                d->get<std::string>() + "\"");
        tok.disfl_tag = *tag;
      }
      tr.tokens.push_back(std::move(tok));
      ++idx;
    }
  }
  std::stable_sort(tr.tokens.begin(), tr.tokens.end(),
                   [](const WordToken& a, const WordToken& b) { return a.start < b.start; });
  return tr;
}

// Inverse of parse_asr: consecutive tokens of the same speaker form one turn.
inline std::string serialize_asr(const Transcript& tr) {
  nlohmann::ordered_json doc;
  doc["session_id"] = tr.session_id;
  doc["turns"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < tr.tokens.size();) {
    nlohmann::ordered_json turn;
    turn["speaker"] = tr.tokens[i].speaker;
    turn["words"] = nlohmann::ordered_json::array();
    std::size_t j = i;
    for (; j < tr.tokens.size() && tr.tokens[j].speaker == tr.tokens[i].speaker; ++j) {
      const auto& t = tr.tokens[j];
      nlohmann::ordered_json w;
      w["w"] = t.text;
      w["start"] = t.start;
      w["end"] = t.end;
      w["conf"] = t.asr_conf;
      if (t.lm_prob) w["lm_prob"] = *t.lm_prob;
      if (t.disfl_tag) w["disfl"] = std::string(to_string(*t.disfl_tag));
      turn["words"].push_back(std::move(w));
    }
    doc["turns"].push_back(std::move(turn));
    i = j;
  }
  return doc.dump();
}

// Parses a frame CSV. Empty cells (and literal nan/inf) become 0.0. Row
// numbers in errors are 1-based file lines.
inline FrameMatrix parse_frames(std::string_view bytes, std::string session_id = {}) {
  auto lines = csv::split_lines(bytes);
  if (lines.empty()) throw ParseError("frames CSV: missing header row", 1);
  FrameMatrix fm;
  fm.session_id = std::move(session_id);
  fm.feature_names = csv::split_fields(lines[0], 1);
  for (auto& n : fm.feature_names) n = std::string(csv::trim(n));
  const std::size_t F = fm.feature_names.size();

  std::vector<double> data;
  std::size_t T = 0;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::size_t line_no = li + 1;
    if (lines[li].empty() && li + 1 == lines.size()) break;
    auto cells = csv::split_fields(lines[li], line_no);
    if (cells.size() != F)
      throw ParseError("frames CSV: row at line " + std::to_string(line_no) + " has " +
                           std::to_string(cells.size()) + " cells, expected " +
                           std::to_string(F),
                       line_no);
    for (std::size_t c = 0; c < F; ++c) {
      std::string_view cell = csv::trim(cells[c]);
      if (cell.empty()) {
        data.push_back(0.0);
        continue;
      }
      auto v = csv::to_double(cell);
      if (!v)
        throw ParseError("frames CSV: non-numeric cell \"" + std::string(cell) + "\" at line " +
                             std::to_string(line_no) + ", column " + std::to_string(c + 1),
                         line_no);
      data.push_back(std::isfinite(*v) ? *v : 0.0);
    }
    ++T;
  }
  fm.frames = Matrix(T, F, std::move(data));
  return fm;
}

inline std::string serialize_frames(const FrameMatrix& fm) {
  std::string out;
  for (std::size_t c = 0; c < fm.feature_names.size(); ++c) {
    if (c) out.push_back(',');
    out += csv::quote(fm.feature_names[c]);
  }
  out.push_back('\n');
  for (std::size_t r = 0; r < fm.frames.rows(); ++r) {
    for (std::size_t c = 0; c < fm.frames.cols(); ++c) {
      if (c) out.push_back(',');
      out += csv::format_double(fm.frames(r, c));
    }
    out.push_back('\n');
  }
  return out;
}

inline constexpr std::string_view kManifestHeader =
    "session_id,frames_path,asr_path,patient_speaker,ad,mmse,decline";

// One record per data row, in file order.
inline std::vector<SessionRecord> load_manifest(std::string_view bytes) {
  auto lines = csv::split_lines(bytes);
  if (lines.empty()) throw ParseError("manifest: missing header row", 1);
  auto header = csv::split_fields(lines[0], 1);
  auto expected = csv::split_fields(kManifestHeader, 1);
  for (auto& h : header) h = std::string(csv::trim(h));
  if (header != expected)
    throw ValidationError("manifest: header must be \"" + std::string(kManifestHeader) + "\"");

  std::vector<SessionRecord> out;
  std::set<std::string> seen;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::size_t line_no = li + 1;
    if (csv::trim(lines[li]).empty()) continue;
    auto f = csv::split_fields(lines[li], line_no);
    if (f.size() != expected.size())
      throw ParseError("manifest: line " + std::to_string(line_no) + " has " +
                           std::to_string(f.size()) + " fields, expected 7",
                       line_no);
    SessionRecord rec;
    rec.session_id = std::string(csv::trim(f[0]));
    rec.frames_path = std::string(csv::trim(f[1]));
    rec.asr_path = std::string(csv::trim(f[2]));
    rec.patient_speaker = std::string(csv::trim(f[3]));
    if (rec.session_id.empty())
      throw ValidationError("manifest line " + std::to_string(line_no) + ": empty session_id");
    if (!seen.insert(rec.session_id).second)
      throw ValidationError("manifest line " + std::to_string(line_no) +
                            ": duplicate session_id \"" + rec.session_id + "\"");

    auto label = [&](std::size_t col, const char* name, int lo, int hi) -> std::optional<int> {
      std::string_view s = csv::trim(f[col]);
      if (s.empty()) return std::nullopt;
      auto v = csv::to_int(s);
      if (!v)
        throw ValidationError("manifest line " + std::to_string(line_no) + ": field " + name +
                              " is not an integer");
      if (*v < lo || *v > hi)
        throw ValidationError("manifest line " + std::to_string(line_no) + ": field " + name +
                              "=" + std::to_string(*v) + " outside [" + std::to_string(lo) +
                              "," + std::to_string(hi) + "]");
      return static_cast<int>(*v);
    };
    rec.ad_label = label(4, "ad", 0, 1);
    rec.mmse = label(5, "mmse", 0, 30);
    rec.decline_label = label(6, "decline", 0, 1);
    if (!rec.ad_label && !rec.mmse && !rec.decline_label)
      throw ValidationError("manifest line " + std::to_string(line_no) + ": session \"" +
                            rec.session_id + "\" has no label");
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::string serialize_manifest(const std::vector<SessionRecord>& recs) {
  std::string out(kManifestHeader);
  out.push_back('\n');
  auto opt = [](const std::optional<int>& v) { return v ? std::to_string(*v) : std::string(); };
  for (const auto& r : recs) {
    out += csv::quote(r.session_id) + "," + csv::quote(r.frames_path) + "," +
           csv::quote(r.asr_path) + "," + csv::quote(r.patient_speaker) + "," +
           opt(r.ad_label) + "," + opt(r.mmse) + "," + opt(r.decline_label) + "\n";
  }
  return out;
}

}  // namespace mgf
