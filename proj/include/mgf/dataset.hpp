// Session loading and fold-aware featurization. Featurizer state (scaler,
// selection mask) is always fitted from an explicit list of training
// sessions and then applied unchanged to anything else.
#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mgf/error.hpp"
#include "mgf/feats_acoustic.hpp"
#include "mgf/feats_lexical.hpp"
#include "mgf/ingest.hpp"
#include "mgf/model.hpp"

namespace mgf {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write file " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

struct Session {
  SessionRecord record;
  Transcript transcript;
  FrameMatrix frames;
};

inline std::optional<double> task_target(const SessionRecord& r, Task task) {
  switch (task) {
    case Task::ad: return r.ad_label ? std::optional<double>(*r.ad_label) : std::nullopt;
    case Task::mmse: return r.mmse ? std::optional<double>(*r.mmse) : std::nullopt;
    case Task::decline:
      return r.decline_label ? std::optional<double>(*r.decline_label) : std::nullopt;
  }
  return std::nullopt;
}

// Loads every session of a manifest; relative paths resolve against the
// manifest's directory. Errors name the offending file.
inline std::vector<Session> load_dataset(const std::filesystem::path& manifest_path) {
  const auto base = manifest_path.parent_path();
  std::vector<SessionRecord> records;
  try {
    records = load_manifest(read_file(manifest_path));
  } catch (const Error& e) {
    throw ValidationError(manifest_path.string() + ": " + e.what());
  }
  std::vector<Session> out;
  out.reserve(records.size());
  for (auto& rec : records) {
    auto resolve = [&](const std::string& p) {
      std::filesystem::path path(p);
      return path.is_absolute() ? path : base / path;
    };
    Session s;
    const auto asr_path = resolve(rec.asr_path);
    const auto frames_path = resolve(rec.frames_path);
    try {
      s.transcript = parse_asr(read_file(asr_path), rec.patient_speaker);
    } catch (const Error& e) {
      throw ValidationError(asr_path.string() + ": " + e.what());
    }
    if (s.transcript.session_id != rec.session_id)
      throw ValidationError(asr_path.string() + ": session_id \"" + s.transcript.session_id +
                            "\" does not match manifest \"" + rec.session_id + "\"");
    try {
      s.frames = parse_frames(read_file(frames_path), rec.session_id);
    } catch (const Error& e) {
      throw ValidationError(frames_path.string() + ": " + e.what());
    }
    s.record = std::move(rec);
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Featurization

struct FeaturizeOptions {
  std::size_t stat_window = 100;
  std::size_t stat_hop = 100;
  double alpha = 0.05;
  LexicalFlags flags;
};

// Fold-independent per-session features.
struct SessionFeatures {
  SessionRecord record;
  FunctionalSequence functionals;  // raw (unscaled, unselected)
  LexicalSequence lexical;
};

inline SessionFeatures extract_session(const Session& s, const EmbeddingTable& table,
                                       const FeaturizeOptions& opt) {
  SessionFeatures f;
  f.record = s.record;
  f.functionals = compute_functionals(s.frames, opt.stat_window, opt.stat_hop);
  const auto pauses = compute_pauses(s.transcript);
  f.lexical = assemble_lexical(s.transcript, pauses, table, opt.flags);
  return f;
}

inline std::vector<SessionFeatures> extract_all(const std::vector<Session>& sessions,
                                                const EmbeddingTable& table, const FeaturizeOptions& opt) {
  std::vector<SessionFeatures> out;
  out.reserve(sessions.size());
  for (const auto& s : sessions) {
    try {
      out.push_back(extract_session(s, table, opt));
    } catch (const Error& e) {
      throw ValidationError("session \"" + s.record.session_id + "\": " + e.what());
    }
  }
  return out;
}

// Fits scaler and selection on the given training sessions only.
inline FeaturizerMeta fit_featurizer(const std::vector<const SessionFeatures*>& train, Task task,
                                     const FeaturizeOptions& opt, bool fit_audio,
                                     const std::vector<std::string>& frame_features,
                                     const EmbeddingTable& table) {
  FeaturizerMeta meta;
  meta.stat_window = opt.stat_window;
  meta.stat_hop = opt.stat_hop;
  meta.alpha = opt.alpha;
  meta.frame_features = frame_features;
  meta.embedding_hash = table.content_hash;
  meta.embedding_dim = table.dim();
  double sum = 0.0;
  std::size_t counted = 0;
  for (const auto* s : train)
    if (auto y = task_target(s->record, task)) {
      sum += *y;
      ++counted;
    }
  meta.target_mean = counted ? sum / static_cast<double>(counted) : 0.0;
  if (!fit_audio) return meta;

  std::size_t rows = 0, dim = 0;
  for (const auto* s : train) {
    rows += s->functionals.steps.rows();
    dim = s->functionals.steps.cols();
  }
  Matrix stacked(rows, dim);
  std::vector<double> targets;
  targets.reserve(rows);
  std::size_t r = 0;
  for (const auto* s : train) {
    const auto y = task_target(s->record, task);
    if (!y) throw ValidationError("session \"" + s->record.session_id + "\" has no " +
                                  std::string(to_string(task)) + " label");
    const auto& m = s->functionals.steps;
    if (m.cols() != dim) throw ShapeError("fit_featurizer: functional width differs across sessions");
    for (std::size_t k = 0; k < m.rows(); ++k, ++r) {
      std::copy(m.row(k).begin(), m.row(k).end(), stacked.row(r).begin());
      targets.push_back(*y);
    }
  }
  meta.scaler = fit_scaler(stacked);
  meta.mask = select_features(apply_scaler(stacked, meta.scaler), targets, opt.alpha);
  return meta;
}

inline SessionWindows make_session_windows(const SessionFeatures& f, const FeaturizerMeta& meta,
                                           const ArchConfig& arch) {
  SessionWindows sw;
  sw.session_id = f.record.session_id;
  if (uses_audio(arch.kind)) {
    const Matrix steps = apply_selection(apply_scaler(f.functionals.steps, meta.scaler), meta.mask);
    sw.audio = make_windows(steps, arch.audio.timestep, arch.audio.stride);
  }
  if (uses_text(arch.kind)) sw.text = make_windows(f.lexical.steps, arch.text.timestep, arch.text.stride);
  return sw;
}

}  // namespace mgf
