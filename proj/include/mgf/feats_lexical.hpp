// Per-word lexical vectors: pretrained embedding, disfluency one-hot, pause
// category and duration, and language-model probability.
#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mgf/csv.hpp"
#include "mgf/error.hpp"
#include "mgf/ingest.hpp"
#include "mgf/tensor.hpp"

namespace mgf {

inline std::string fold_case(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

struct EmbeddingTable {
  std::unordered_map<std::string, std::size_t> vocab;  // case-folded token -> row
  Matrix vectors;                                       // V x E
  std::size_t ignored_duplicates = 0;
  std::uint64_t content_hash = 0;  // FNV-1a over the source bytes

  std::size_t dim() const noexcept { return vectors.cols(); }
  std::size_t size() const noexcept { return vectors.rows(); }
};

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 14695981039346656037ull) {
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace detail

// Text format: one `token v1 ... vE` per line. A leading word2vec-style
// "V E" header line is skipped. Duplicate tokens keep the first row.
inline EmbeddingTable load_embeddings(std::string_view bytes) {
  EmbeddingTable table;
  table.content_hash = fnv1a64(bytes);
  auto lines = csv::split_lines(bytes);
  std::size_t dim = 0;
  std::vector<double> data;
  std::size_t rows = 0;
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const std::size_t line_no = li + 1;
    auto fields = detail::split_ws(lines[li]);
    if (fields.empty()) continue;
    if (li == 0 && fields.size() == 2 && csv::to_int(fields[0]) && csv::to_int(fields[1])) continue;
    if (fields.size() < 2)
      throw ParseError("embeddings: line " + std::to_string(line_no) + " has no vector", line_no);
    const std::size_t e = fields.size() - 1;
    if (dim == 0) dim = e;
    if (e != dim)
      throw ParseError("embeddings: line " + std::to_string(line_no) + " has " +
                           std::to_string(e) + " values, expected " + std::to_string(dim),
                       line_no);
    std::string key = fold_case(fields[0]);
    if (table.vocab.contains(key)) {
      ++table.ignored_duplicates;
      continue;
    }
    for (std::size_t k = 1; k < fields.size(); ++k) {
      auto v = csv::to_double(fields[k]);
      if (!v || !std::isfinite(*v))
        throw ParseError("embeddings: bad value \"" + std::string(fields[k]) + "\" at line " +
                             std::to_string(line_no),
                         line_no);
      data.push_back(*v);
    }
    table.vocab.emplace(std::move(key), rows++);
  }
  if (rows == 0) throw ValidationError("embeddings: file contains no vectors");
  table.vectors = Matrix(rows, dim, std::move(data));
  return table;
}

// Case-folded lookup; out-of-vocabulary tokens map to the zero vector.
inline std::vector<double> embed(std::string_view token, const EmbeddingTable& table) {
  auto it = table.vocab.find(fold_case(token));
  if (it == table.vocab.end()) return std::vector<double>(table.dim(), 0.0);
  auto row = table.vectors.row(it->second);
  return {row.begin(), row.end()};
}

// ---------------------------------------------------------------------------
// Pauses

enum class PauseCategory { none, SP, LP };

inline constexpr double kShortPauseMin = 0.5;
inline constexpr double kLongPauseMin = 1.5;

inline PauseCategory categorize_pause(double duration) {
  if (duration >= kLongPauseMin) return PauseCategory::LP;
  if (duration >= kShortPauseMin) return PauseCategory::SP;
  return PauseCategory::none;
}

struct PauseAnnotation {
  std::vector<std::size_t> token_index;  // position in transcript.tokens
  std::vector<double> duration;
  std::vector<PauseCategory> category;

  std::size_t size() const noexcept { return duration.size(); }
  friend bool operator==(const PauseAnnotation&, const PauseAnnotation&) = default;
};

// Annotates patient tokens only. A pause is measured from the previous
// patient word's end when no other speaker's word lies in between; otherwise
// (and for the first patient word) it is 0.
inline PauseAnnotation compute_pauses(const Transcript& tr) {
  PauseAnnotation out;
  bool have_prev = false;
  double prev_end = 0.0;
  for (std::size_t i = 0; i < tr.tokens.size(); ++i) {
    const auto& tok = tr.tokens[i];
    if (tok.speaker != tr.patient_speaker) {
      have_prev = false;
      continue;
    }
    const double d = have_prev ? std::max(0.0, tok.start - prev_end) : 0.0;
    out.token_index.push_back(i);
    out.duration.push_back(d);
    out.category.push_back(categorize_pause(d));
    have_prev = true;
    prev_end = tok.end;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Assembly

struct LexicalFlags {
  bool disfl = true;
  bool pause = true;  // pause one-hot and duration
  bool lm_prob = true;
  bool lm_log = false;  // feed log(p) instead of p

  friend bool operator==(const LexicalFlags&, const LexicalFlags&) = default;
};

inline constexpr std::size_t kDisflWidth = 3;
inline constexpr std::size_t kPauseWidth = 3;
inline constexpr double kPauseClip = 10.0;
inline constexpr double kLogProbFloor = 1e-12;

struct LexicalLayout {
  std::size_t embedding = 0;
  std::size_t disfl = 0;
  std::size_t pause_onehot = 0;
  std::size_t pause_duration = 0;
  std::size_t lm_prob = 0;

  std::size_t width() const noexcept {
    return embedding + disfl + pause_onehot + pause_duration + lm_prob;
  }
  std::vector<std::string> block_names() const {
    std::vector<std::string> out;
    if (embedding) out.push_back("embedding");
    if (disfl) out.push_back("disfl");
    if (pause_onehot) out.push_back("pause_onehot");
    if (pause_duration) out.push_back("pause_duration");
    if (lm_prob) out.push_back("lm_prob");
    return out;
  }
};

inline LexicalLayout lexical_layout(std::size_t embedding_dim, const LexicalFlags& flags) {
  LexicalLayout l;
  l.embedding = embedding_dim;
  l.disfl = flags.disfl ? kDisflWidth : 0;
  l.pause_onehot = flags.pause ? kPauseWidth : 0;
  l.pause_duration = flags.pause ? 1 : 0;
  l.lm_prob = flags.lm_prob ? 1 : 0;
  return l;
}

struct LexicalSequence {
  std::string session_id;
  Matrix steps;  // one row per patient word
  LexicalLayout layout;
  bool lm_prob_missing = false;  // some patient word had no lm_prob (fed as 0)
};

// One-hot orders: disfluency (fluent, edit_term, repair_onset); pause (none, SP, LP).
inline LexicalSequence assemble_lexical(const Transcript& tr, const PauseAnnotation& pauses,
                                        const EmbeddingTable& table, const LexicalFlags& flags) {
  if (pauses.size() == 0)
    throw ValidationError("assemble_lexical: session \"" + tr.session_id +
                          "\" has no patient tokens");
  LexicalSequence seq;
  seq.session_id = tr.session_id;
  seq.layout = lexical_layout(table.dim(), flags);
  seq.steps = Matrix(pauses.size(), seq.layout.width());
  for (std::size_t k = 0; k < pauses.size(); ++k) {
    const auto& tok = tr.tokens.at(pauses.token_index[k]);
    auto row = seq.steps.row(k);
    std::size_t col = 0;
    auto vec = embed(tok.text, table);
    std::copy(vec.begin(), vec.end(), row.begin());
    col += vec.size();
    if (flags.disfl) {
      const auto tag = tok.disfl_tag.value_or(DisflTag::fluent);
      row[col + static_cast<std::size_t>(tag)] = 1.0;
      col += kDisflWidth;
    }
    if (flags.pause) {
      row[col + static_cast<std::size_t>(pauses.category[k])] = 1.0;
      col += kPauseWidth;
      row[col++] = std::clamp(pauses.duration[k], 0.0, kPauseClip);
    }
    if (flags.lm_prob) {
      if (tok.lm_prob) {
        row[col] = flags.lm_log ? std::log(std::max(*tok.lm_prob, kLogProbFloor)) : *tok.lm_prob;
      } else {
        seq.lm_prob_missing = true;
      }
      ++col;
    }
  }
  return seq;
}

inline std::string lexical_to_csv(const LexicalSequence& seq) {
  std::string out;
  const auto& l = seq.layout;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < l.embedding; ++i) names.push_back("emb" + std::to_string(i));
  if (l.disfl) names.insert(names.end(), {"disfl_fluent", "disfl_edit_term", "disfl_repair_onset"});
  if (l.pause_onehot) names.insert(names.end(), {"pause_none", "pause_sp", "pause_lp"});
  if (l.pause_duration) names.push_back("pause_duration");
  if (l.lm_prob) names.push_back("lm_prob");
  for (std::size_t c = 0; c < names.size(); ++c) {
    if (c) out.push_back(',');
    out += names[c];
  }
  out.push_back('\n');
  for (std::size_t r = 0; r < seq.steps.rows(); ++r) {
    for (std::size_t c = 0; c < seq.steps.cols(); ++c) {
      if (c) out.push_back(',');
      out += csv::format_double(seq.steps(r, c));
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace mgf
