// Shared synthetic setup for the training tests and the acceptance run.
#pragma once

#include <cstdint>
#include <vector>

#include "mgf/dataset.hpp"
#include "mgf/synthetic.hpp"
#include "mgf/train_eval.hpp"

namespace fixture {

struct Corpus {
  mgf::SyntheticDataset raw;
  mgf::EmbeddingTable table;
  std::vector<mgf::SessionFeatures> features;
};

inline Corpus corpus(std::uint64_t seed, std::size_t n, double separation, const mgf::SyntheticOptions& opt = {},
                     const mgf::FeaturizeOptions& feat = {}) {
  Corpus c;
  c.raw = mgf::make_synthetic(seed, n, separation, opt);
  c.table = mgf::load_embeddings(c.raw.embeddings);
  c.features = mgf::extract_all(c.raw.sessions, c.table, feat);
  return c;
}

// Small enough for unit tests on one core.
inline mgf::ArchConfig tiny_arch(mgf::ModelKind kind, mgf::Task task = mgf::Task::ad) {
  mgf::ArchConfig a;
  a.audio = {4, 2, 1, 4};
  a.text = {5, 3, 1, 4};
  a.highway_n = 1;
  a.kind = kind;
  a.task = task;
  a.seed = 3;
  return a;
}

inline mgf::SyntheticOptions small_sessions() {
  mgf::SyntheticOptions o;
  o.embedding_dim = 8;
  o.vocab_size = 20;
  o.patient_turns = 2;
  return o;
}

}  // namespace fixture
