// Acoustic featurization: statistical functionals over frame sub-windows,
// train-fitted z-normalisation, correlation-based selection, and the shared
// fixed-length windowing used by every sequence branch.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mgf/csv.hpp"
#include "mgf/error.hpp"
#include "mgf/ingest.hpp"
#include "mgf/stats.hpp"
#include "mgf/tensor.hpp"

namespace mgf {

inline constexpr std::array<std::string_view, 7> kStatNames = {
    "mean", "max", "min", "median", "std", "skew", "kurtosis"};
inline constexpr std::size_t kNumStats = kStatNames.size();

inline constexpr double kMomentGuard = 1e-12;
inline constexpr double kScalerFloor = 1e-8;

struct FunctionalSequence {
  std::string session_id;
  Matrix steps;  // N x (7F)
  std::vector<std::string> stat_names;
};

struct Functionals {
  double mean = 0, max = 0, min = 0, median = 0, std = 0, skew = 0, kurtosis = 0;
};

// Population moments; skew and excess kurtosis are 0 when m2 < 1e-12.
inline Functionals describe(std::span<const double> xs) {
  if (xs.empty()) throw Error("describe: empty sample");
  const double n = static_cast<double>(xs.size());
  Functionals f;
  double sum = 0.0;
  f.min = xs[0];
  f.max = xs[0];
  for (double v : xs) {
    sum += v;
    f.min = std::min(f.min, v);
    f.max = std::max(f.max, v);
  }
  // Rounding can push the mean a hair outside [min, max] on constant input;
  // clamped, a constant window has exactly zero deviations.
  f.mean = std::clamp(sum / n, f.min, f.max);
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : xs) {
    const double d = v - f.mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  f.std = std::sqrt(m2);
  if (m2 >= kMomentGuard) {
    f.skew = m3 / std::pow(m2, 1.5);
    f.kurtosis = m4 / (m2 * m2) - 3.0;
  }
  std::vector<double> sorted(xs.begin(), xs.end());
  const std::size_t mid = sorted.size() / 2;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(mid), sorted.end());
  f.median = sorted[mid];
  if (sorted.size() % 2 == 0) {
    const double lower = *std::max_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(mid));
    f.median = 0.5 * (lower + f.median);
  }
  return f;
}

inline std::size_t functional_step_count(std::size_t frames, std::size_t window, std::size_t hop) {
  if (frames < window) return 1;
  return (frames - window) / hop + 1;
}

inline std::vector<std::string> functional_names(const std::vector<std::string>& features) {
  std::vector<std::string> out;
  out.reserve(features.size() * kNumStats);
  for (const auto& f : features)
    for (auto s : kStatNames) out.push_back(f + "_" + std::string(s));
  return out;
}

inline FunctionalSequence compute_functionals(const FrameMatrix& fm, std::size_t stat_window = 100,
                                              std::size_t stat_hop = 100) {
  if (stat_window < 2) throw ValidationError("compute_functionals: stat_window must be >= 2");
  if (stat_hop < 1) throw ValidationError("compute_functionals: stat_hop must be >= 1");
  const std::size_t T = fm.frames.rows();
  const std::size_t F = fm.frames.cols();
  if (T == 0 || F == 0) throw ValidationError("compute_functionals: empty frame matrix");

  const std::size_t N = functional_step_count(T, stat_window, stat_hop);
  const std::size_t span = std::min(stat_window, T);
  FunctionalSequence out;
  out.session_id = fm.session_id;
  if (fm.feature_names.size() == F) {
    out.stat_names = functional_names(fm.feature_names);
  } else {
    std::vector<std::string> generic;
    for (std::size_t c = 0; c < F; ++c) generic.push_back("f" + std::to_string(c));
    out.stat_names = functional_names(generic);
  }
  out.steps = Matrix(N, F * kNumStats);
  std::vector<double> col(span);
  for (std::size_t n = 0; n < N; ++n) {
    const std::size_t begin = n * stat_hop;
    for (std::size_t c = 0; c < F; ++c) {
      for (std::size_t k = 0; k < span; ++k) col[k] = fm.frames(begin + k, c);
      const Functionals s = describe(col);
      const std::array<double, kNumStats> vals = {s.mean, s.max,  s.min,     s.median,
                                                  s.std,  s.skew, s.kurtosis};
      std::copy(vals.begin(), vals.end(), out.steps.row(n).begin() + static_cast<std::ptrdiff_t>(c * kNumStats));
    }
  }
  return out;
}

inline std::string functionals_to_csv(const FunctionalSequence& fs) {
  std::string out;
  for (std::size_t c = 0; c < fs.stat_names.size(); ++c) {
    if (c) out.push_back(',');
    out += csv::quote(fs.stat_names[c]);
  }
  out.push_back('\n');
  for (std::size_t r = 0; r < fs.steps.rows(); ++r) {
    for (std::size_t c = 0; c < fs.steps.cols(); ++c) {
      if (c) out.push_back(',');
      out += csv::format_double(fs.steps(r, c));
    }
    out.push_back('\n');
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalisation

struct Scaler {
  std::vector<double> means;
  std::vector<double> stds;  // population std, before flooring

  std::size_t dim() const noexcept { return means.size(); }
  friend bool operator==(const Scaler&, const Scaler&) = default;
};

inline Scaler fit_scaler(const Matrix& train_steps) {
  if (train_steps.rows() < 2) throw ValidationError("fit_scaler: need at least 2 rows");
  const std::size_t n = train_steps.rows(), d = train_steps.cols();
  Scaler s;
  s.means.assign(d, 0.0);
  s.stds.assign(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) s.means[c] += train_steps(r, c);
  for (auto& m : s.means) m /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      const double dv = train_steps(r, c) - s.means[c];
      s.stds[c] += dv * dv;
    }
  for (auto& v : s.stds) v = std::sqrt(v / static_cast<double>(n));
  return s;
}

inline Matrix apply_scaler(const Matrix& steps, const Scaler& s) {
  if (steps.cols() != s.dim())
    throw ShapeError("apply_scaler: steps have " + std::to_string(steps.cols()) +
                     " columns, scaler has " + std::to_string(s.dim()));
  Matrix out(steps.rows(), steps.cols());
  for (std::size_t r = 0; r < steps.rows(); ++r)
    for (std::size_t c = 0; c < steps.cols(); ++c)
      out(r, c) = (steps(r, c) - s.means[c]) / std::max(s.stds[c], kScalerFloor);
  return out;
}

// ---------------------------------------------------------------------------
// Selection

struct SelectionMask {
  std::vector<bool> keep;
  std::vector<double> r_values;
  std::vector<double> p_values;
  double alpha = 0.05;

  std::size_t kept_count() const {
    return static_cast<std::size_t>(std::count(keep.begin(), keep.end(), true));
  }
  std::vector<std::size_t> kept_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < keep.size(); ++i)
      if (keep[i]) idx.push_back(i);
    return idx;
  }
  friend bool operator==(const SelectionMask&, const SelectionMask&) = default;
};

// `targets` holds one value per row of `train_steps` (session targets already
// broadcast to their steps).
inline SelectionMask select_features(const Matrix& train_steps, std::span<const double> targets,
                                     double alpha = 0.05) {
  const std::size_t n = train_steps.rows();
  if (targets.size() != n) throw ShapeError("select_features: target count != row count");
  if (n < 3) throw ValidationError("select_features: need at least 3 rows");
  if (std::all_of(targets.begin(), targets.end(), [&](double v) { return v == targets[0]; }))
    throw ValidationError("select_features: targets are constant");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ValidationError("select_features: alpha outside (0,1]");

  SelectionMask m;
  m.alpha = alpha;
  const std::size_t d = train_steps.cols();
  m.keep.assign(d, false);
  m.r_values.assign(d, 0.0);
  m.p_values.assign(d, 1.0);
  std::vector<double> col(n);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t r = 0; r < n; ++r) col[r] = train_steps(r, c);
    const double r = stats::pearson_r(col, targets);
    m.r_values[c] = r;
    m.p_values[c] = stats::correlation_p_value(r, n);
    m.keep[c] = m.p_values[c] < alpha;
  }
  if (m.kept_count() == 0)
    throw ValidationError("select_features: no dimension is significant at alpha=" +
                          std::to_string(alpha));
  return m;
}

inline Matrix apply_selection(const Matrix& steps, const SelectionMask& m) {
  if (steps.cols() != m.keep.size()) throw ShapeError("apply_selection: dimension mismatch");
  const auto idx = m.kept_indices();
  Matrix out(steps.rows(), idx.size());
  for (std::size_t r = 0; r < steps.rows(); ++r)
    for (std::size_t k = 0; k < idx.size(); ++k) out(r, k) = steps(r, idx[k]);
  return out;
}

// ---------------------------------------------------------------------------
// Windowing

struct FeatureWindow {
  Matrix steps;              // W x D, zero rows past `valid`
  std::vector<bool> mask;    // true for real steps
  std::size_t start = 0;     // first source row
  std::size_t valid = 0;

  std::size_t length() const noexcept { return steps.rows(); }
};

inline std::size_t window_count(std::size_t n, std::size_t timestep, std::size_t stride) {
  if (n < timestep) return 1;
  return (n - timestep) / stride + 1;
}

// Contiguous W-step slices every S rows; a sequence shorter than W yields one
// zero-padded window.
inline std::vector<FeatureWindow> make_windows(const Matrix& steps, std::size_t timestep,
                                               std::size_t stride) {
  if (timestep < 1 || stride < 1) throw ValidationError("make_windows: timestep and stride must be >= 1");
  const std::size_t n = steps.rows(), d = steps.cols();
  const std::size_t count = window_count(n, timestep, stride);
  std::vector<FeatureWindow> out;
  out.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    FeatureWindow fw;
    fw.start = w * stride;
    fw.steps = Matrix(timestep, d);
    fw.mask.assign(timestep, false);
    fw.valid = std::min(timestep, n - fw.start);
    for (std::size_t t = 0; t < fw.valid; ++t) {
      auto src = steps.row(fw.start + t);
      std::copy(src.begin(), src.end(), fw.steps.row(t).begin());
      fw.mask[t] = true;
    }
    out.push_back(std::move(fw));
  }
  return out;
}

}  // namespace mgf
