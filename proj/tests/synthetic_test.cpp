#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include <unistd.h>

#include <gtest/gtest.h>

#include "mgf/dataset.hpp"
#include "mgf/stats.hpp"
#include "mgf/synthetic.hpp"

using namespace mgf;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("mgf_synth_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  return p;
}

// Mean gap between adjacent patient words, recomputed from raw tokens.
double mean_pause(const Transcript& tr) {
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t i = 1; i < tr.tokens.size(); ++i)
    if (tr.tokens[i].speaker == "PAR" && tr.tokens[i - 1].speaker == "PAR") {
      sum += tr.tokens[i].start - tr.tokens[i - 1].end;
      ++n;
    }
  return n ? sum / static_cast<double>(n) : 0.0;
}

std::string snapshot(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(std::filesystem::relative(e.path(), dir));
  std::sort(files.begin(), files.end());
  std::string out;
  for (auto& f : files) out += f.string() + "\n" + read_file(dir / f);
  return out;
}

}  // namespace

TEST(Synthetic, RejectsBadCounts) {
  EXPECT_THROW(make_synthetic(1, 7, 0.5), ValidationError);
  EXPECT_THROW(make_synthetic(1, 2, 0.5), ValidationError);
  EXPECT_THROW(make_synthetic(1, 8, 1.5), ValidationError);
}

TEST(Synthetic, LabelsBalancedAndMmseInRange) {
  auto ds = make_synthetic(3, 40, 1.0);
  int pos = 0;
  for (const auto& s : ds.sessions) {
    pos += *s.record.ad_label;
    EXPECT_GE(*s.record.mmse, 10);
    EXPECT_LE(*s.record.mmse, 30);
    EXPECT_EQ(s.record.decline_label, s.record.ad_label);
  }
  EXPECT_EQ(pos, 20);
}

TEST(Synthetic, SameSeedByteIdenticalFiles) {
  auto a = scratch("a"), b = scratch("b");
  write_synthetic(make_synthetic(42, 6, 0.7), a);
  write_synthetic(make_synthetic(42, 6, 0.7), b);
  EXPECT_EQ(snapshot(a), snapshot(b));
  auto c = scratch("c");
  write_synthetic(make_synthetic(43, 6, 0.7), c);
  EXPECT_NE(snapshot(a), snapshot(c));
  for (auto& p : {a, b, c}) std::filesystem::remove_all(p);
}

TEST(Synthetic, FilesRoundTripThroughIngest) {
  auto dir = scratch("rt");
  auto ds = make_synthetic(5, 6, 1.0);
  write_synthetic(ds, dir);
  auto loaded = load_dataset(dir / "manifest.csv");
  ASSERT_EQ(loaded.size(), ds.sessions.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    EXPECT_EQ(loaded[i].record.ad_label, ds.sessions[i].record.ad_label);
    EXPECT_EQ(loaded[i].transcript, ds.sessions[i].transcript);
    EXPECT_EQ(loaded[i].frames.frames, ds.sessions[i].frames.frames);
  }
  auto table = load_embeddings(read_file(dir / "embeddings.txt"));
  EXPECT_EQ(table.dim(), 100u);
  EXPECT_EQ(table.size(), 59u);
  std::filesystem::remove_all(dir);
}

// No class signal at separation 0: per-session mean pause barely correlates
// with the label.
TEST(Synthetic, SeparationZeroCarriesNoSignal) {
  SyntheticOptions opt;
  opt.embedding_dim = 2;
  int small = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto ds = make_synthetic(seed, 200, 0.0, opt);
    std::vector<double> x, y;
    for (const auto& s : ds.sessions) {
      x.push_back(mean_pause(s.transcript));
      y.push_back(*s.record.ad_label);
    }
    small += std::fabs(stats::pearson_r(x, y)) < 0.2;
  }
  EXPECT_GE(small, 95);
}

// Brute force: best single threshold on mean pause duration.
TEST(Synthetic, SeparationOnePauseThresholdClassifies) {
  SyntheticOptions opt;
  opt.embedding_dim = 2;
  auto ds = make_synthetic(1, 200, 1.0, opt);
  std::vector<std::pair<double, int>> v;
  for (const auto& s : ds.sessions) v.emplace_back(mean_pause(s.transcript), *s.record.ad_label);
  double best = 0;
  for (const auto& [thr, unused] : v) {
    std::size_t ok = 0;
    for (const auto& [x, lab] : v) ok += (x >= thr) == (lab == 1);
    best = std::max(best, static_cast<double>(ok) / static_cast<double>(v.size()));
  }
  EXPECT_GE(best, 0.9);
}
