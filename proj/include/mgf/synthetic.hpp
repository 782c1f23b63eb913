// Seeded synthetic sessions in the on-disk input formats, with a tunable
// class signal in pause gaps, LM probabilities and a subset of frame
// features. Lets the full pipeline be exercised without restricted data.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "mgf/csv.hpp"
#include "mgf/dataset.hpp"
#include "mgf/error.hpp"
#include "mgf/ingest.hpp"

namespace mgf {

struct SyntheticOptions {
  std::size_t n_features = 6;
  std::size_t shifted_features = 2;  // the first k features carry the class shift
  double frame_shift = 0.3;          // per unit separation, in noise std units
  double pause_shift = 1.0;          // seconds per unit separation
  double lm_shift = 0.3;             // probability per unit separation
  std::size_t embedding_dim = 100;
  std::size_t vocab_size = 60;
  std::size_t patient_turns = 3;
  std::size_t min_words_per_turn = 8;
  std::size_t max_words_per_turn = 14;
  double missing_cell_rate = 0.01;
};

struct SyntheticDataset {
  std::vector<Session> sessions;
  std::string embeddings;  // text-format embedding table
};

inline std::vector<std::string> synthetic_vocab(std::size_t n) {
  static const char* const kWords[] = {"the", "boy", "girl", "cookie", "jar", "stool", "mother", "sink", "water",
                                       "dishes", "window", "curtain", "falling", "reaching", "taking", "is", "and",
                                       "a", "on", "in", "she", "he", "overflowing", "plate", "kitchen", "uh", "um",
                                       "well", "there", "drying"};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t base = sizeof kWords / sizeof kWords[0];
    out.push_back(i < base ? std::string(kWords[i]) : "w" + std::to_string(i));
  }
  return out;
}

// n must be even and >= 4; labels alternate 0,1 so classes are balanced.
inline SyntheticDataset make_synthetic(std::uint64_t seed, std::size_t n_sessions, double separation,
                                       const SyntheticOptions& opt = {}) {
  if (n_sessions < 4) throw ValidationError("make_synthetic: need at least 4 sessions");
  if (n_sessions % 2 != 0) throw ValidationError("make_synthetic: session count must be even");
  if (!(separation >= 0.0 && separation <= 1.0)) throw ValidationError("make_synthetic: separation outside [0,1]");
  if (opt.n_features == 0 || opt.vocab_size < 2 || opt.min_words_per_turn == 0 ||
      opt.max_words_per_turn < opt.min_words_per_turn)
    throw ValidationError("make_synthetic: invalid options");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SyntheticDataset ds;

  const auto vocab = synthetic_vocab(opt.vocab_size);
  // The last word is left out of the table to exercise the OOV path.
  for (std::size_t v = 0; v + 1 < vocab.size(); ++v) {
    ds.embeddings += vocab[v];
    for (std::size_t e = 0; e < opt.embedding_dim; ++e) ds.embeddings += " " + csv::format_double(std::round(normal(rng) * 5e4) / 1e5);
    ds.embeddings += "\n";
  }

  std::vector<std::string> feature_names;
  for (std::size_t f = 0; f < opt.n_features; ++f) feature_names.push_back("feat" + std::to_string(f));
  const int width = static_cast<int>(std::to_string(n_sessions - 1).size());

  for (std::size_t s = 0; s < n_sessions; ++s) {
    const int label = static_cast<int>(s % 2);
    Session sess;
    std::string id = std::to_string(s);
    id = "S" + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(id.size()))), '0') + id;
    const double severity = label ? 0.3 + 0.7 * unit(rng) : 0.3 * unit(rng);

    auto& rec = sess.record;
    rec.session_id = id;
    rec.frames_path = "frames/" + id + ".csv";
    rec.asr_path = "asr/" + id + ".json";
    rec.patient_speaker = "PAR";
    rec.ad_label = label;
    rec.mmse = std::clamp(29 - static_cast<int>(std::lround(14.0 * severity)), 10, 30);
    rec.decline_label = label;

    auto& tr = sess.transcript;
    tr.session_id = id;
    tr.patient_speaker = "PAR";
    double clock = 0.2 + 0.3 * unit(rng);
    auto word = [&] { return vocab[static_cast<std::size_t>(unit(rng) * static_cast<double>(vocab.size())) % vocab.size()]; };
    auto round_ms = [](double t) { return std::round(t * 1000.0) / 1000.0; };
    for (std::size_t turn = 0; turn < opt.patient_turns; ++turn) {
      const std::size_t inv_words = 2 + static_cast<std::size_t>(unit(rng) * 3.0);
      for (std::size_t w = 0; w < inv_words; ++w) {
        WordToken t;
        t.text = word();
        t.speaker = "INV";
        t.start = round_ms(clock);
        t.end = round_ms(clock + 0.2 + 0.2 * unit(rng));
        t.asr_conf = round_ms(0.7 + 0.3 * unit(rng));
        clock = t.end + 0.05 + 0.2 * unit(rng);
        tr.tokens.push_back(std::move(t));
      }
      clock += 0.3 + 0.5 * unit(rng);
      const std::size_t span = opt.max_words_per_turn - opt.min_words_per_turn + 1;
      const std::size_t n_words = opt.min_words_per_turn + static_cast<std::size_t>(unit(rng) * static_cast<double>(span)) % span;
      for (std::size_t w = 0; w < n_words; ++w) {
        if (w > 0) {
          const double gap = 0.45 + label * separation * opt.pause_shift + 0.35 * normal(rng);
          clock += std::max(0.02, gap);
        }
        WordToken t;
        t.text = word();
        t.speaker = "PAR";
        t.start = round_ms(clock);
        t.end = round_ms(clock + 0.2 + 0.3 * unit(rng));
        t.asr_conf = round_ms(0.6 + 0.4 * unit(rng));
        t.lm_prob = round_ms(std::clamp(0.45 - label * separation * opt.lm_shift + 0.15 * normal(rng), 0.001, 0.999));
        const double u = unit(rng);
        t.disfl_tag = u < 0.85 ? DisflTag::fluent : (u < 0.93 ? DisflTag::edit_term : DisflTag::repair_onset);
        clock = t.end;
        tr.tokens.push_back(std::move(t));
      }
      clock += 0.2 + 0.4 * unit(rng);
    }

    auto& fm = sess.frames;
    fm.session_id = id;
    fm.feature_names = feature_names;
    const std::size_t T = static_cast<std::size_t>(std::ceil((clock + 0.5) * kFrameRateHz));
    fm.frames = Matrix(T, opt.n_features);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t f = 0; f < opt.n_features; ++f) {
        double v = normal(rng);
        if (f < opt.shifted_features) v += label * separation * opt.frame_shift;
        if (unit(rng) < opt.missing_cell_rate) v = 0.0;  // written as an empty cell
        fm.frames(t, f) = std::round(v * 1e4) / 1e4;
      }
    ds.sessions.push_back(std::move(sess));
  }
  return ds;
}

// Writes manifest.csv, frames/*.csv, asr/*.json and embeddings.txt. Zero
// frame cells are written empty, matching the missing-data convention.
inline void write_synthetic(const SyntheticDataset& ds, const std::filesystem::path& dir) {
  std::vector<SessionRecord> recs;
  for (const auto& s : ds.sessions) {
    recs.push_back(s.record);
    write_file(dir / s.record.asr_path, serialize_asr(s.transcript));
    std::string frames;
    const auto& fm = s.frames;
    for (std::size_t c = 0; c < fm.feature_names.size(); ++c) {
      if (c) frames.push_back(',');
      frames += fm.feature_names[c];
    }
    frames.push_back('\n');
    for (std::size_t r = 0; r < fm.frames.rows(); ++r) {
      for (std::size_t c = 0; c < fm.frames.cols(); ++c) {
        if (c) frames.push_back(',');
        if (fm.frames(r, c) != 0.0) frames += csv::format_double(fm.frames(r, c));
      }
      frames.push_back('\n');
    }
    write_file(dir / s.record.frames_path, frames);
  }
  write_file(dir / "manifest.csv", serialize_manifest(recs));
  write_file(dir / "embeddings.txt", ds.embeddings);
}

}  // namespace mgf
