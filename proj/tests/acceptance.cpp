// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/special_functions/beta.hpp>
#include <sys/wait.h>
#include <unistd.h>

#include "fixtures.hpp"
#include "mgf/dataset.hpp"
#include "mgf/feats_acoustic.hpp"
#include "mgf/feats_lexical.hpp"
#include "mgf/synthetic.hpp"
#include "mgf/train_eval.hpp"
#include "oracles.hpp"

using namespace mgf;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

int run_command(const std::string& cmd, std::string* out = nullptr) {
  FILE* pipe = popen((cmd + " 2>&1").c_str(), "r");
  if (!pipe) return -1;
  std::array<char, 4096> buf{};
  std::size_t got = 0;
  std::string text;
  while ((got = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) text.append(buf.data(), got);
  const int status = pclose(pipe);
  if (out) *out = text;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Scaled-down architecture for one CPU core. Window geometry matches the
// defaults (audio 20/1, text 10/2); depth and width do not.
ArchConfig desk_arch(ModelKind kind, Task task) {
  ArchConfig a;
  a.audio = {20, 1, 1, 8};
  a.text = {10, 2, 1, 8};
  a.highway_n = 3;
  a.kind = kind;
  a.task = task;
  a.seed = 1;
  return a;
}

TrainConfig desk_train() {
  TrainConfig t;
  t.lr = 3e-3;
  t.batch_size = 32;
  t.max_epochs = 60;
  t.patience = 10;
  t.seed = 1;
  t.folds = 5;
  return t;
}

// ---------------------------------------------------------------------------

Outcome c1_statement() {
  return {true,
          "headline figures (AD accuracy 0.84, MMSE RMSE 4.26, decline accuracy 0.62) need the access-restricted "
          "challenge audio and external ASR/disfluency/LM models; acceptance is property-based plus synthetic"};
}

Outcome c2_gradients() {
  const auto t0 = Clock::now();
  std::string out;
  const int rc = run_command(std::string(MGF_GRADCHECK_PATH) + " --gtest_brief=1", &out);
  const double s = seconds_since(t0);
  const bool all_ok = rc == 0 && out.find("FAILED") == std::string::npos;
  return {all_ok && s < 60.0, "gradient suite " + std::string(all_ok ? "passed" : "failed") + " in " + fmt(s, 3) + " s"};
}

// Brute force: split the token stream into maximal same-speaker turns, then
// measure gaps between neighbouring words inside each patient turn.
PauseAnnotation pauses_reference(const Transcript& tr) {
  PauseAnnotation out;
  std::size_t i = 0;
  while (i < tr.tokens.size()) {
    std::size_t j = i;
    while (j < tr.tokens.size() && tr.tokens[j].speaker == tr.tokens[i].speaker) ++j;
    if (tr.tokens[i].speaker == tr.patient_speaker)
      for (std::size_t k = i; k < j; ++k) {
        double d = 0.0;
        if (k > i) {
          d = tr.tokens[k].start - tr.tokens[k - 1].end;
          if (d < 0) d = 0.0;
        }
        PauseCategory c = PauseCategory::none;
        if (0.5 <= d && d < 1.5) c = PauseCategory::SP;
        if (d >= 1.5) c = PauseCategory::LP;
        out.token_index.push_back(k);
        out.duration.push_back(d);
        out.category.push_back(c);
      }
    i = j;
  }
  return out;
}

Outcome c3_pauses() {
  std::mt19937_64 rng(3003);
  // gaps are multiples of 1/64 s so the 0.5 and 1.5 boundaries are hit exactly
  const std::array<double, 9> special = {0.5, 1.5, 0.0, 0.5 - 1.0 / 64, 1.5 - 1.0 / 64, -0.25, 0.5, 1.5, 3.0};
  std::size_t mismatches = 0, boundary_hits = 0, interleaved = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Transcript tr;
    tr.session_id = "t" + std::to_string(trial);
    tr.patient_speaker = "PAR";
    double clock = static_cast<double>(rng() % 64) / 64.0;
    const std::size_t n = 1 + rng() % 40;
    for (std::size_t k = 0; k < n; ++k) {
      WordToken w;
      w.text = "w";
      const auto r = rng() % 10;
      w.speaker = r < 7 ? "PAR" : (r < 9 ? "INV" : "OTHER");
      const double gap = rng() % 2 ? special[rng() % special.size()] : static_cast<double>(rng() % 192) / 64.0;
      w.start = std::max(0.0, clock + gap);
      w.end = w.start + static_cast<double>(1 + rng() % 32) / 64.0;
      clock = w.end;
      tr.tokens.push_back(w);
    }
    const auto got = compute_pauses(tr);
    const auto want = pauses_reference(tr);
    if (!(got == want)) ++mismatches;
    for (double d : want.duration) boundary_hits += d == 0.5 || d == 1.5;
    for (std::size_t k = 1; k + 1 < tr.tokens.size(); ++k)
      interleaved += tr.tokens[k].speaker != "PAR" && tr.tokens[k - 1].speaker == "PAR" && tr.tokens[k + 1].speaker == "PAR";
  }
  const bool ok = mismatches == 0 && boundary_hits > 0 && interleaved > 0;
  return {ok, std::to_string(mismatches) + " mismatches in 1000 transcripts; " + std::to_string(boundary_hits) +
                  " exact-boundary pauses, " + std::to_string(interleaved) + " interviewer interruptions"};
}

Outcome c4_functionals() {
  std::mt19937_64 rng(4004);
  std::normal_distribution<double> normal(0, 1);
  double worst = 0.0;
  std::size_t zero_var_cols = 0, zero_var_bad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t win = 10 + rng() % 60, hop = 1 + rng() % win;
    const std::size_t T = win + rng() % 300, F = 1 + rng() % 5;
    FrameMatrix fm;
    fm.session_id = "m";
    for (std::size_t f = 0; f < F; ++f) fm.feature_names.push_back("f" + std::to_string(f));
    fm.frames = Matrix(T, F);
    for (std::size_t f = 0; f < F; ++f) {
      const bool constant = rng() % 4 == 0;
      const double scale = std::exp(3 * normal(rng)), shift = 10 * normal(rng);
      const double c = normal(rng);
      for (std::size_t t = 0; t < T; ++t) {
        const double z = normal(rng);
        fm.frames(t, f) = constant ? c : shift + scale * (f % 2 ? z * z : z);  // some skewed columns
      }
    }
    const auto fs = compute_functionals(fm, win, hop);
    const std::size_t steps = (T - win) / hop + 1;
    if (fs.steps.rows() != steps) return {false, "step count " + std::to_string(fs.steps.rows()) + " != " + std::to_string(steps)};
    for (std::size_t k = 0; k < steps; ++k)
      for (std::size_t f = 0; f < F; ++f) {
        std::vector<double> col;
        for (std::size_t t = k * hop; t < k * hop + win; ++t) col.push_back(fm.frames(t, f));
        const auto o = oracle::moments(col);
        auto sorted = col;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t m = sorted.size();
        const double median = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
        const std::array<double, 7> want = {o.mean, sorted.back(), sorted.front(), median, o.std, o.skew, o.kurtosis};
        const bool constant = sorted.front() == sorted.back();
        for (std::size_t s = 0; s < kNumStats; ++s) {
          const double got = fs.steps(k, f * kNumStats + s);
          if (constant && (s == 5 || s == 6)) {
            ++zero_var_cols;
            zero_var_bad += got != 0.0;
            continue;
          }
          if (constant && s == 4) {
            zero_var_bad += got != 0.0;
            continue;
          }
          const double rel = want[s] == 0.0 ? std::fabs(got) : std::fabs(got - want[s]) / std::fabs(want[s]);
          worst = std::max(worst, rel);
        }
      }
  }
  const bool ok = worst <= 1e-9 && zero_var_cols > 0 && zero_var_bad == 0;
  return {ok, "max relative error " + fmt(worst, 3) + " on 100 matrices; " + std::to_string(zero_var_cols / 2) +
                  " constant column windows, " + std::to_string(zero_var_bad) + " nonzero std/skew/kurtosis"};
}

double pearson_reference(const std::vector<double>& x, const std::vector<double>& y) {
  using big = oracle::big;
  const big n = static_cast<double>(x.size());
  big sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += big(x[i]);
    sy += big(y[i]);
  }
  const big mx = sx / n, my = sy / n;
  big sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (big(x[i]) - mx) * (big(y[i]) - my);
    sxx += (big(x[i]) - mx) * (big(x[i]) - mx);
    syy += (big(y[i]) - my) * (big(y[i]) - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return static_cast<double>(sxy / sqrt(sxx * syy));
}

double p_reference(double r, std::size_t n) {
  const double dof = static_cast<double>(n) - 2;
  if (std::fabs(r) >= 1.0) return 0.0;
  const double t2 = r * r * dof / (1 - r * r);
  return boost::math::ibeta(dof / 2, 0.5, dof / (dof + t2));
}

Outcome c5_selection() {
  std::mt19937_64 rng(5005);
  std::normal_distribution<double> normal(0, 1);
  double worst = 0.0;
  std::size_t keep_diffs = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 3 + rng() % 48, d = 1 + rng() % 8;
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = trial % 2 ? static_cast<double>(i % 2) : normal(rng);
    Matrix m(n, d);
    for (std::size_t c = 0; c < d; ++c) {
      const double w = c == 0 ? 5.0 : normal(rng);  // column 0 always survives
      for (std::size_t i = 0; i < n; ++i) m(i, c) = w * y[i] + normal(rng) * (c == 0 ? 0.05 : 1.0);
    }
    const auto mask = select_features(m, y, 0.05);
    for (std::size_t c = 0; c < d; ++c) {
      std::vector<double> col(n);
      for (std::size_t i = 0; i < n; ++i) col[i] = m(i, c);
      worst = std::max(worst, std::fabs(mask.p_values[c] - p_reference(pearson_reference(col, y), n)));
    }
    Matrix t = m;
    for (std::size_t c = 0; c < d; ++c) {
      const double a = std::exp(4 * normal(rng)), b = 100 * normal(rng);
      for (std::size_t i = 0; i < n; ++i) t(i, c) = a * m(i, c) + b;
    }
    keep_diffs += select_features(t, y, 0.05).keep != mask.keep;
  }
  return {worst <= 1e-9 && keep_diffs == 0,
          "max |p - p_ref| " + fmt(worst, 3) + " on 100 cases; " + std::to_string(keep_diffs) + " keep-set changes under affine maps"};
}

Outcome c6_synthetic_end_to_end(const fixture::Corpus& c) {
  const auto t0 = Clock::now();
  CvOptions fused;
  fused.arch = desk_arch(ModelKind::fused, Task::ad);
  fused.train = desk_train();
  const auto rf = run_cv(c.features, c.table, fused);

  auto text_run = [&](LexicalFlags flags) {
    CvOptions o;
    o.arch = desk_arch(ModelKind::text, Task::ad);
    o.train = desk_train();
    o.feat.flags = flags;
    return run_cv(extract_all(c.raw.sessions, c.table, o.feat), c.table, o).report.accuracy.value();
  };
  const double words = text_run({false, false, false, false});
  const double rich = text_run({false, true, true, false});
  const double s = seconds_since(t0);
  const double acc = rf.report.accuracy.value();
  const bool ok = acc >= 0.90 && rich >= words && s < 600.0;
  return {ok, "fused 5-fold accuracy " + fmt(acc) + "; text words-only " + fmt(words) + " vs words+pause+lm_prob " +
                  fmt(rich) + "; " + fmt(s, 3) + " s"};
}

Outcome c7_overfit() {
  auto c = fixture::corpus(7, 8, 1.0);
  const auto arch = desk_arch(ModelKind::fused, Task::ad);
  std::vector<const SessionFeatures*> ptrs;
  for (const auto& f : c.features) ptrs.push_back(&f);
  const auto meta = fit_featurizer(ptrs, arch.task, {}, true, frame_feature_names(c.features), c.table);
  std::vector<LabeledWindows> data;
  for (const auto& f : c.features) data.push_back({make_session_windows(f, meta, arch), *task_target(f.record, arch.task)});
  TrainConfig cfg = desk_train();
  cfg.lr = 1e-2;
  cfg.batch_size = 8;
  cfg.max_epochs = 300;
  cfg.patience = 300;
  const auto r = train_model(data, {}, arch, cfg, meta);
  std::size_t correct = 0;
  for (const auto& lw : data) correct += predict_session(lw.windows, r.params).label == static_cast<int>(lw.target);
  return {correct == data.size() && r.log.size() <= 300,
          std::to_string(correct) + "/8 training sessions correct after " + std::to_string(r.log.size()) + " epochs"};
}

Outcome c8_mmse(const fixture::Corpus& c) {
  CvOptions o;
  o.arch = desk_arch(ModelKind::fused, Task::mmse);
  o.train = desk_train();
  const auto res = run_cv(c.features, c.table, o);
  std::size_t outside = 0, count = 0;
  for (const auto& f : res.folds)
    for (const auto& p : f.predictions) {
      ++count;
      outside += !(p.score >= 0.0 && p.score <= 30.0);
    }
  const double rmse = res.report.rmse.value();
  return {rmse < 6.0 && outside == 0 && count == c.features.size(),
          "5-fold RMSE " + fmt(rmse) + "; " + std::to_string(outside) + " of " + std::to_string(count) + " predictions outside [0,30]"};
}

Outcome c9_determinism(const fs::path& work) {
  const std::string cli = MGF_CLI_PATH;
  const std::string data = (work / "data").string();
  if (run_command(cli + " synth --n 20 --seed 9 --out " + data) != 0) return {false, "synth failed"};
  const std::string common = " --manifest " + data + "/manifest.csv --embeddings " + data +
                             "/embeddings.txt --seed 4 --audio-layers 1 --audio-hidden 6"
                             " --text-layers 1 --text-hidden 6 --highway 2 --lr 3e-3 --max-epochs 8";
  for (const char* run : {"a", "b"}) {
    const std::string out = (work / run).string();
    std::string log;
    if (run_command(cli + " train" + common + " --out " + out + "/train", &log) != 0) return {false, "train failed: " + log};
    if (run_command(cli + " cv --folds 4 --workers 1" + common + " --out " + out + "/cv", &log) != 0) return {false, "cv failed: " + log};
  }
  const bool ckpt = read_file(work / "a/train/model.ckpt") == read_file(work / "b/train/model.ckpt");
  const bool report = read_file(work / "a/cv/report.json") == read_file(work / "b/cv/report.json");
  return {ckpt && report, std::string("checkpoint ") + (ckpt ? "identical" : "differs") + ", report " +
                              (report ? "identical" : "differs") + " across two CLI runs"};
}

Outcome c10_checkpoint(const fs::path& work) {
  auto c = fixture::corpus(10, 12, 1.0, fixture::small_sessions());
  auto arch = fixture::tiny_arch(ModelKind::fused);
  std::vector<const SessionFeatures*> ptrs;
  for (const auto& f : c.features) ptrs.push_back(&f);
  const auto meta = fit_featurizer(ptrs, arch.task, {}, true, frame_feature_names(c.features), c.table);
  std::vector<LabeledWindows> data;
  for (const auto& f : c.features) data.push_back({make_session_windows(f, meta, arch), *task_target(f.record, arch.task)});
  TrainConfig cfg;
  cfg.lr = 5e-3;
  cfg.max_epochs = 5;
  const auto trained = train_model(data, {}, arch, cfg, meta).params;

  const fs::path file = work / "model.ckpt";
  write_file(file, save_checkpoint(trained));
  const auto loaded = load_checkpoint(read_file(file));
  std::size_t differ = 0;
  for (const auto& lw : data) {
    const auto a = predict_session(lw.windows, trained), b = predict_session(lw.windows, loaded);
    differ += a.score != b.score || a.window_scores != b.window_scores;
  }

  const std::string bytes = read_file(file);
  std::size_t rejected = 0, positioned = 0, cases = 0;
  auto expect_reject = [&](const std::string& bad, std::size_t max_offset) {
    ++cases;
    try {
      load_checkpoint(bad);
    } catch (const ParseError& e) {
      ++rejected;
      positioned += e.offset() <= max_offset && std::string(e.what()).find("offset") != std::string::npos;
    }
  };
  std::string bad = bytes;
  bad[1] = '?';
  expect_reject(bad, 0);
  bad = bytes;
  bad[4] = 9;
  expect_reject(bad, 4);
  for (std::size_t cut : {std::size_t{3}, std::size_t{12}, bytes.size() / 3, bytes.size() - 2})
    expect_reject(bytes.substr(0, cut), cut);
  const bool ok = differ == 0 && rejected == cases && positioned == cases;
  return {ok, std::to_string(differ) + " predictions differ after reload; " + std::to_string(rejected) + "/" +
                  std::to_string(cases) + " corruptions rejected, " + std::to_string(positioned) + " with offsets"};
}

Outcome c11_metrics() {
  std::mt19937_64 rng(1111);
  std::uniform_real_distribution<double> u(0, 30);
  std::size_t acc_bad = 0, f1_bad = 0;
  double rmse_worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 60;
    std::vector<int> p(n), t(n);
    std::vector<double> ps(n), ts(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = static_cast<int>(rng() % 2);
      t[i] = static_cast<int>(rng() % 2);
      ps[i] = u(rng);
      ts[i] = u(rng);
    }
    // confusion matrix, positive class 1
    double tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      tp += p[i] == 1 && t[i] == 1;
      fp += p[i] == 1 && t[i] == 0;
      tn += p[i] == 0 && t[i] == 0;
      fn += p[i] == 0 && t[i] == 1;
    }
    const double f1_pos = (2 * tp + fp + fn) == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
    const double f1_neg = (2 * tn + fn + fp) == 0 ? 0.0 : 2 * tn / (2 * tn + fn + fp);
    const auto m = classification_metrics(p, t);
    acc_bad += m.accuracy != (tp + tn) / static_cast<double>(n);
    f1_bad += m.f1_mean != (f1_pos + f1_neg) / 2;
    oracle::big sq = 0;
    for (std::size_t i = 0; i < n; ++i) sq += (oracle::big(ps[i]) - ts[i]) * (oracle::big(ps[i]) - ts[i]);
    rmse_worst = std::max(rmse_worst, std::fabs(rmse(ps, ts) - static_cast<double>(sqrt(sq / n))));
  }
  return {acc_bad == 0 && f1_bad == 0 && rmse_worst <= 1e-12,
          std::to_string(acc_bad) + " accuracy and " + std::to_string(f1_bad) + " macro-F1 mismatches in 1000 cases; max RMSE error " +
              fmt(rmse_worst, 3)};
}

Outcome c12_windows() {
  std::mt19937_64 rng(1212);
  std::size_t bad = 0, full = 0, padded = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t W = 1 + rng() % 30, S = 1 + rng() % 10;
    const std::size_t N = trial % 4 == 0 ? 1 + rng() % W : W + rng() % 200;
    Matrix m(N, 2, 1.0);
    const auto w = make_windows(m, W, S);
    if (N >= W) {
      ++full;
      bad += w.size() != (N - W) / S + 1;
    } else {
      ++padded;
      bad += w.size() != 1 || w[0].valid != N || w[0].length() != W;
    }
  }
  return {bad == 0, std::to_string(bad) + " count errors over 200 cases (" + std::to_string(full) + " with N >= W, " +
                        std::to_string(padded) + " padded)"};
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / ("mgf_acceptance_" + std::to_string(getpid()));
  fs::create_directories(work);
  const auto t0 = Clock::now();

  std::unique_ptr<fixture::Corpus> corpus;
  auto shared = [&]() -> const fixture::Corpus& {
    if (!corpus) corpus = std::make_unique<fixture::Corpus>(fixture::corpus(1, 200, 1.0));
    return *corpus;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"non-reproducibility statement", c1_statement},
      {"gradient suite", c2_gradients},
      {"pause oracle", c3_pauses},
      {"functional/statistics oracle", c4_functionals},
      {"selection oracle", c5_selection},
      {"synthetic end-to-end", [&] { return c6_synthetic_end_to_end(shared()); }},
      {"overfit sanity", c7_overfit},
      {"MMSE regression sanity", [&] { return c8_mmse(shared()); }},
      {"determinism", [&] { return c9_determinism(work / "c9"); }},
      {"checkpoint round-trip", [&] { return c10_checkpoint(work); }},
      {"metrics oracle", c11_metrics},
      {"window algebra", c12_windows},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    const auto ti = Clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (i + 1) << ". " << criteria[i].first << ": " << o.detail
              << " [" << fmt(seconds_since(ti), 3) << " s]" << std::endl;
  }
  fs::remove_all(work);
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed in " << fmt(seconds_since(t0), 4)
            << " s" << std::endl;
  return failed == 0 ? 0 : 1;
}
