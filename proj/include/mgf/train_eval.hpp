// Training loops, fold protocols, metrics, grid search, and the
// cross-validation driver.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mgf/csv.hpp"
#include "mgf/dataset.hpp"
#include "mgf/error.hpp"
#include "mgf/model.hpp"
#include "mgf/nn.hpp"

namespace mgf {

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 300;
  std::size_t patience = 10;  // epochs without validation-loss improvement
  std::uint64_t seed = 0;
  std::size_t folds = 5;
  bool loso = false;
  double val_fraction = 0.2;

  void validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ValidationError("TrainConfig: lr must be finite and >= 0");
    if (!batch_size) throw ValidationError("TrainConfig: batch_size must be >= 1");
    if (!loso && folds < 2) throw ValidationError("TrainConfig: folds must be >= 2 (or use LOSO)");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0))
      throw ValidationError("TrainConfig: val_fraction must lie in [0,1)");
  }
};

// ---------------------------------------------------------------------------
// Folds

namespace detail {

template <typename Rng>
void shuffle_indices(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(v[i - 1], v[pick(rng)]);
  }
}

// Groups indices by class (classification) or returns one group.
inline std::vector<std::vector<std::size_t>> strata(const std::vector<std::size_t>& idx,
                                                    std::span<const double> targets, bool stratify) {
  if (!stratify) return {idx};
  std::map<double, std::vector<std::size_t>> by;
  for (auto i : idx) by[targets[i]].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [k, v] : by) out.push_back(std::move(v));
  return out;
}

}  // namespace detail

// Fold id per session. Stratified dealing: each class is shuffled and dealt
// round-robin, continuing the fold counter across classes. LOSO gives every
// session its own fold.
inline std::vector<std::size_t> split_folds(std::span<const double> targets, std::size_t k, bool loso,
                                            std::uint64_t seed, bool stratify) {
  const std::size_t n = targets.size();
  if (loso) k = n;
  if (k < 2 && !loso) throw ValidationError("split_folds: need at least 2 folds");
  if (n < k || n == 0)
    throw ValidationError("split_folds: " + std::to_string(n) + " sessions for " + std::to_string(k) + " folds");
  std::vector<std::size_t> fold(n, 0);
  if (loso) {
    std::iota(fold.begin(), fold.end(), 0);
    return fold;
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  std::size_t next = 0;
  for (auto& group : detail::strata(all, targets, stratify)) {
    detail::shuffle_indices(group, rng);
    for (auto i : group) fold[i] = next++ % k;
  }
  return fold;
}

struct Holdout {
  std::vector<std::size_t> train, val;
};

// Per-stratum shuffled split; each stratum with >= 2 members gives
// round(fraction * size) (at least 1) members to validation.
inline Holdout holdout_split(const std::vector<std::size_t>& idx, std::span<const double> targets,
                             double fraction, std::uint64_t seed, bool stratify) {
  Holdout h;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  for (auto& group : detail::strata(idx, targets, stratify)) {
    detail::shuffle_indices(group, rng);
    std::size_t n_val = 0;
    if (fraction > 0.0 && group.size() >= 2)
      n_val = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(fraction * group.size())), 1,
                                      group.size() - 1);
    h.val.insert(h.val.end(), group.begin(), group.begin() + static_cast<std::ptrdiff_t>(n_val));
    h.train.insert(h.train.end(), group.begin() + static_cast<std::ptrdiff_t>(n_val), group.end());
  }
  std::sort(h.train.begin(), h.train.end());
  std::sort(h.val.begin(), h.val.end());
  return h;
}

// ---------------------------------------------------------------------------
// Training

struct LabeledWindows {
  SessionWindows windows;
  double target = 0.0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::string branch;  // "audio"/"text" for late-fusion halves, else empty
};

struct TrainResult {
  ModelParams<float> params;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

namespace detail {

template <typename T>
struct SampleSet {
  std::vector<Instance<T>> inst;
  std::vector<T> target;
  std::vector<std::vector<std::size_t>> by_session;
};

template <typename T>
SampleSet<T> build_samples(const std::vector<LabeledWindows>& data, ModelKind kind) {
  SampleSet<T> s;
  for (const auto& lw : data) {
    std::vector<std::size_t> ids;
    auto push = [&](Instance<T> inst) {
      ids.push_back(s.inst.size());
      s.inst.push_back(std::move(inst));
      s.target.push_back(static_cast<T>(lw.target));
    };
    if (kind == ModelKind::fused) {
      for (auto& inst : pair_windows<T>(lw.windows.audio, lw.windows.text)) push(std::move(inst));
    } else if (kind == ModelKind::audio) {
      for (const auto& w : lw.windows.audio) push({to_input<T>(w), {}});
    } else {
      for (const auto& w : lw.windows.text) push({{}, to_input<T>(w)});
    }
    s.by_session.push_back(std::move(ids));
  }
  return s;
}

template <typename T>
T forward_raw(const Instance<T>& inst, const ModelParams<T>& p, ForwardCache<T>* cache) {
  switch (p.arch.kind) {
    case ModelKind::fused: return forward_fused_raw(inst, p, cache);
    case ModelKind::audio: return forward_unimodal_raw(inst.audio, Branch::audio, p, cache);
    case ModelKind::text: return forward_unimodal_raw(inst.text, Branch::text, p, cache);
    case ModelKind::late: break;
  }
  throw ValidationError("forward_raw: late fusion trains its branches separately");
}

template <typename T>
void backward_raw(const ModelParams<T>& p, const ForwardCache<T>& cache, T draw, ModelParams<T>& grads) {
  switch (p.arch.kind) {
    case ModelKind::fused: backward_fused(p, cache, draw, grads); return;
    case ModelKind::audio: backward_unimodal(p, Branch::audio, cache, draw, grads); return;
    case ModelKind::text: backward_unimodal(p, Branch::text, cache, draw, grads); return;
    case ModelKind::late: break;
  }
  throw ValidationError("backward_raw: late fusion trains its branches separately");
}

}  // namespace detail

// Mean loss over a batch; when `grads` is given, accumulates the gradient of
// that mean.
template <typename T>
T batch_loss(const ModelParams<T>& p, std::span<const Instance<T>* const> batch, std::span<const T> targets,
             ModelParams<T>* grads) {
  const std::size_t B = batch.size();
  std::vector<ForwardCache<T>> caches(grads ? B : 0);
  std::vector<T> raw(B);
  for (std::size_t k = 0; k < B; ++k) raw[k] = detail::forward_raw(*batch[k], p, grads ? &caches[k] : nullptr);
  auto loss = is_classification(p.arch.task) ? nn::bce_with_logits<T>(raw, targets) : nn::mse_loss<T>(raw, targets);
  if (grads)
    for (std::size_t k = 0; k < B; ++k) detail::backward_raw(p, caches[k], loss.grad[k], *grads);
  return loss.loss;
}

namespace detail {

template <typename T>
double mean_loss(const ModelParams<T>& p, const SampleSet<T>& s, std::size_t chunk) {
  if (s.inst.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  std::vector<const Instance<T>*> ptrs;
  for (std::size_t b = 0; b < s.inst.size(); b += chunk) {
    const std::size_t e = std::min(s.inst.size(), b + chunk);
    ptrs.clear();
    for (std::size_t i = b; i < e; ++i) ptrs.push_back(&s.inst[i]);
    std::span<const T> tg(s.target.data() + b, e - b);
    total += static_cast<double>(batch_loss<T>(p, ptrs, tg, nullptr)) * static_cast<double>(e - b);
  }
  return total / static_cast<double>(s.inst.size());
}

inline std::size_t input_width(const std::vector<LabeledWindows>& data, Branch b) {
  for (const auto& lw : data) {
    const auto& w = b == Branch::audio ? lw.windows.audio : lw.windows.text;
    if (!w.empty()) return w.front().steps.cols();
  }
  return 0;
}

inline TrainResult train_single(const std::vector<LabeledWindows>& train, const std::vector<LabeledWindows>& val,
                         const ArchConfig& arch, const TrainConfig& cfg, const FeaturizerMeta& meta,
                         const std::string& branch_label) {
  using T = float;
  if (train.empty()) throw ValidationError("train_model: empty training set");
  const std::size_t a_in = uses_audio(arch.kind) ? input_width(train, Branch::audio) : 0;
  const std::size_t t_in = uses_text(arch.kind) ? input_width(train, Branch::text) : 0;
  ModelParams<T> params = init_model<T>(arch, a_in, t_in, meta.target_mean);
  params.meta = meta;
  ModelParams<T> grads = zeros_like(params);

  std::vector<nn::ParamRef<T>> refs;
  {
    std::vector<Tensor2<T>*> ps, gs;
    std::vector<std::string> names;
    params.visit([&](const std::string& n, Tensor2<T>& t) {
      names.push_back(n);
      ps.push_back(&t);
    });
    grads.visit([&](const std::string&, Tensor2<T>& t) { gs.push_back(&t); });
    for (std::size_t i = 0; i < ps.size(); ++i) refs.push_back({names[i], ps[i], gs[i]});
  }
  nn::AdamState<T> adam;
  adam.lr = cfg.lr;

  const auto train_set = build_samples<T>(train, arch.kind);
  const auto val_set = build_samples<T>(val, arch.kind);
  std::mt19937_64 rng(cfg.seed);

  TrainResult result;
  ModelParams<T> best = params;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::vector<std::size_t> order(train_set.by_session.size());
  std::vector<std::size_t> flat;
  std::vector<const Instance<T>*> ptrs;
  std::vector<T> targets;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    shuffle_indices(order, rng);
    flat.clear();
    for (auto s : order) flat.insert(flat.end(), train_set.by_session[s].begin(), train_set.by_session[s].end());

    double epoch_loss = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t b = 0; b < flat.size(); b += cfg.batch_size, ++batch_no) {
      const std::size_t e = std::min(flat.size(), b + cfg.batch_size);
      ptrs.clear();
      targets.clear();
      for (std::size_t i = b; i < e; ++i) {
        ptrs.push_back(&train_set.inst[flat[i]]);
        targets.push_back(train_set.target[flat[i]]);
      }
      grads.visit([](const std::string&, Tensor2<T>& t) { t.fill(T(0)); });
      const T loss = batch_loss<T>(params, ptrs, targets, &grads);
      if (!std::isfinite(static_cast<double>(loss)))
        throw Error("train_model: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                    std::to_string(batch_no));
      nn::adam_step<T>(refs, adam);
      epoch_loss += static_cast<double>(loss) * static_cast<double>(e - b);
    }
    const double train_loss = epoch_loss / static_cast<double>(std::max<std::size_t>(flat.size(), 1));
    double val_loss = mean_loss(params, val_set, cfg.batch_size);
    if (std::isnan(val_loss)) val_loss = train_loss;
    result.log.push_back({epoch, train_loss, val_loss, branch_label});
    if (val_loss < best_val) {
      best_val = val_loss;
      best = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  result.params = std::move(best);
  return result;
}

}  // namespace detail

// Trains on `train`, early-stops on `val` (training loss when `val` is
// empty), and returns the best-validation parameters. Late fusion trains the
// audio and text models independently and stores both heads.
inline TrainResult train_model(const std::vector<LabeledWindows>& train, const std::vector<LabeledWindows>& val,
                               const ArchConfig& arch, const TrainConfig& cfg, const FeaturizerMeta& meta) {
  arch.validate();
  cfg.validate();
  if (arch.kind != ModelKind::late) return detail::train_single(train, val, arch, cfg, meta, "");

  ArchConfig a = arch, t = arch;
  a.kind = ModelKind::audio;
  t.kind = ModelKind::text;
  TrainResult ra = detail::train_single(train, val, a, cfg, meta, "audio");
  TrainResult rt = detail::train_single(train, val, t, cfg, meta, "text");
  TrainResult out;
  out.params = model_skeleton<float>(arch, ra.params.audio_input, rt.params.text_input);
  out.params.meta = meta;
  out.params.audio = std::move(ra.params.audio);
  out.params.head_w = std::move(ra.params.head_w);
  out.params.head_b = std::move(ra.params.head_b);
  out.params.text = std::move(rt.params.text);
  out.params.text_head_w = std::move(rt.params.head_w);
  out.params.text_head_b = std::move(rt.params.head_b);
  out.log = std::move(ra.log);
  out.log.insert(out.log.end(), rt.log.begin(), rt.log.end());
  out.best_epoch = std::max(ra.best_epoch, rt.best_epoch);
  return out;
}

inline std::string training_log_csv(const std::vector<EpochLog>& log) {
  const bool branched = std::any_of(log.begin(), log.end(), [](const EpochLog& e) { return !e.branch.empty(); });
  std::string out = branched ? "branch,epoch,train_loss,val_loss\n" : "epoch,train_loss,val_loss\n";
  for (const auto& e : log) {
    if (branched) out += e.branch + ",";
    out += std::to_string(e.epoch) + "," + csv::format_double(e.train_loss) + "," + csv::format_double(e.val_loss) +
           "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct ClassMetrics {
  double accuracy = 0.0;
  double f1_neg = 0.0, f1_pos = 0.0, f1_mean = 0.0;
  Confusion confusion;
  std::vector<int> degenerate_classes;  // classes with no true and no predicted members
};

inline ClassMetrics classification_metrics(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) throw ShapeError("classification_metrics: length mismatch");
  if (pred.empty()) throw ValidationError("classification_metrics: no predictions");
  ClassMetrics m;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0, t = truth[i] != 0;
    if (p && t) ++m.confusion.tp;
    else if (p && !t) ++m.confusion.fp;
    else if (!p && t) ++m.confusion.fn;
    else ++m.confusion.tn;
  }
  const auto& c = m.confusion;
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(pred.size());
  auto f1 = [&](std::size_t tp, std::size_t fp, std::size_t fn, int cls) {
    const std::size_t denom = 2 * tp + fp + fn;
    if (denom == 0) {
      m.degenerate_classes.push_back(cls);
      return 0.0;
    }
    return 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  };
  m.f1_neg = f1(c.tn, c.fn, c.fp, 0);
  m.f1_pos = f1(c.tp, c.fp, c.fn, 1);
  m.f1_mean = 0.5 * (m.f1_neg + m.f1_pos);
  return m;
}

inline double rmse(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw ShapeError("rmse: length mismatch");
  if (pred.empty()) throw ValidationError("rmse: no predictions");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(pred.size()));
}

struct FoldMetrics {
  std::size_t fold = 0;
  std::size_t n = 0;
  std::optional<double> accuracy, rmse, f1_mean;
};

struct EvalReport {
  Task task = Task::ad;
  std::string protocol;
  std::uint64_t seed = 0;
  std::size_t n = 0;
  std::optional<double> accuracy, rmse, f1_mean;
  Confusion confusion;
  std::vector<int> degenerate_classes;
  std::vector<FoldMetrics> folds;
};

// Matches predictions to labelled records by session id.
inline EvalReport evaluate(const std::vector<SessionPrediction>& preds, const std::vector<SessionRecord>& labels,
                           Task task) {
  std::map<std::string, double> truth;
  for (const auto& r : labels)
    if (auto y = task_target(r, task)) truth[r.session_id] = *y;
  if (preds.size() != truth.size())
    throw ValidationError("evaluate: " + std::to_string(preds.size()) + " predictions for " +
                          std::to_string(truth.size()) + " labelled sessions");
  std::set<std::string> seen;
  std::vector<double> ps, ts;
  std::vector<int> pl, tl;
  for (const auto& p : preds) {
    auto it = truth.find(p.session_id);
    if (it == truth.end() || !seen.insert(p.session_id).second)
      throw ValidationError("evaluate: session id mismatch at \"" + p.session_id + "\"");
    ps.push_back(p.score);
    ts.push_back(it->second);
    pl.push_back(p.label);
    tl.push_back(static_cast<int>(it->second));
  }
  EvalReport r;
  r.task = task;
  r.n = preds.size();
  if (is_classification(task)) {
    auto m = classification_metrics(pl, tl);
    r.accuracy = m.accuracy;
    r.f1_mean = m.f1_mean;
    r.confusion = m.confusion;
    r.degenerate_classes = m.degenerate_classes;
  } else {
    r.rmse = mgf::rmse(ps, ts);
  }
  return r;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
  nlohmann::ordered_json folds = nlohmann::ordered_json::array();
  for (const auto& f : r.folds)
    folds.push_back({{"fold", f.fold}, {"n", f.n}, {"accuracy", opt(f.accuracy)}, {"rmse", opt(f.rmse)},
                     {"f1_mean", opt(f.f1_mean)}});
  return {{"task", std::string(to_string(r.task))},
          {"protocol", r.protocol},
          {"seed", r.seed},
          {"n", r.n},
          {"metrics", {{"accuracy", opt(r.accuracy)}, {"rmse", opt(r.rmse)}, {"f1_mean", opt(r.f1_mean)}}},
          {"folds", folds},
          {"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn}, {"fn", r.confusion.fn}}},
          {"f1_degenerate_classes", r.degenerate_classes}};
}

// ---------------------------------------------------------------------------
// Fold pipeline

struct FoldArtifacts {
  std::vector<std::string> train_ids, val_ids, test_ids;
  FeaturizerMeta meta;
  TrainResult training;
  std::vector<SessionPrediction> predictions;
};

namespace detail {

inline std::vector<LabeledWindows> labeled(const std::vector<SessionFeatures>& data,
                                           const std::vector<std::size_t>& idx, const FeaturizerMeta& meta,
                                           const ArchConfig& arch) {
  std::vector<LabeledWindows> out;
  out.reserve(idx.size());
  for (auto i : idx)
    out.push_back({make_session_windows(data[i], meta, arch), *task_target(data[i].record, arch.task)});
  return out;
}

}  // namespace detail

inline std::vector<std::string> frame_feature_names(const std::vector<SessionFeatures>& data) {
  if (data.empty()) return {};
  std::vector<std::string> names;
  const auto& stat_names = data.front().functionals.stat_names;
  for (std::size_t i = 0; i < stat_names.size(); i += kNumStats) {
    const auto& s = stat_names[i];
    names.push_back(s.substr(0, s.size() - std::string("_mean").size()));
  }
  return names;
}

// Featurizes with state fitted on `train_idx` only, trains with an inner
// holdout for early stopping, and predicts `test_idx`.
inline FoldArtifacts run_fold(const std::vector<SessionFeatures>& data, std::span<const double> targets,
                              const std::vector<std::size_t>& train_idx, const std::vector<std::size_t>& test_idx,
                              const ArchConfig& arch, const TrainConfig& cfg, const FeaturizeOptions& feat,
                              const EmbeddingTable& table) {
  FoldArtifacts fa;
  const Holdout h = holdout_split(train_idx, targets, cfg.val_fraction, cfg.seed, is_classification(arch.task));
  std::vector<const SessionFeatures*> fit_on;
  for (auto i : h.train) fit_on.push_back(&data[i]);
  fa.meta = fit_featurizer(fit_on, arch.task, feat, uses_audio(arch.kind), frame_feature_names(data), table);
  for (auto i : h.train) fa.train_ids.push_back(data[i].record.session_id);
  for (auto i : h.val) fa.val_ids.push_back(data[i].record.session_id);
  for (auto i : test_idx) fa.test_ids.push_back(data[i].record.session_id);

  ArchConfig a = arch;
  a.flags = feat.flags;
  fa.training = train_model(detail::labeled(data, h.train, fa.meta, a), detail::labeled(data, h.val, fa.meta, a), a,
                            cfg, fa.meta);
  for (auto i : test_idx)
    fa.predictions.push_back(predict_session(make_session_windows(data[i], fa.meta, a), fa.training.params));
  return fa;
}

struct CvOptions {
  ArchConfig arch;
  TrainConfig train;
  FeaturizeOptions feat;
  std::size_t workers = 1;
};

struct CvResult {
  EvalReport report;
  std::vector<FoldArtifacts> folds;
};

// Runs `fn(i)` for i in [0, n) on up to `workers` threads; rethrows the first
// failure in index order.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < n;) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline CvResult run_cv(const std::vector<SessionFeatures>& all, const EmbeddingTable& table, const CvOptions& opt) {
  opt.arch.validate();
  opt.train.validate();
  const Task task = opt.arch.task;
  std::vector<SessionFeatures> data;
  for (const auto& s : all)
    if (task_target(s.record, task)) data.push_back(s);
  std::vector<double> targets;
  for (const auto& s : data) targets.push_back(*task_target(s.record, task));

  const auto fold_of = split_folds(targets, opt.train.folds, opt.train.loso, opt.train.seed, is_classification(task));
  const std::size_t k = opt.train.loso ? data.size() : opt.train.folds;
  CvResult res;
  res.folds.resize(k);
  parallel_for(k, opt.workers, [&](std::size_t f) {
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < data.size(); ++i) (fold_of[i] == f ? test_idx : train_idx).push_back(i);
    res.folds[f] = run_fold(data, targets, train_idx, test_idx, opt.arch, opt.train, opt.feat, table);
  });

  std::vector<SessionPrediction> pooled;
  std::vector<SessionRecord> records;
  for (const auto& s : data) records.push_back(s.record);
  for (const auto& f : res.folds) pooled.insert(pooled.end(), f.predictions.begin(), f.predictions.end());
  res.report = evaluate(pooled, records, task);
  res.report.protocol = opt.train.loso ? "loso" : std::to_string(opt.train.folds) + "-fold";
  res.report.seed = opt.train.seed;
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<SessionRecord> fr;
    for (const auto& id : res.folds[f].test_ids)
      for (const auto& s : data)
        if (s.record.session_id == id) fr.push_back(s.record);
    auto r = evaluate(res.folds[f].predictions, fr, task);
    res.report.folds.push_back({f, r.n, r.accuracy, r.rmse, r.f1_mean});
  }
  return res;
}

// ---------------------------------------------------------------------------
// Grid search

struct GridCandidate {
  std::string name;
  ArchConfig arch;
  TrainConfig train;
};

struct GridRow {
  std::size_t index = 0;
  std::string name;
  double metric = 0.0;  // accuracy (classification) or RMSE (regression)
};

struct GridResult {
  std::size_t best_index = 0;
  std::vector<GridRow> table;
};

// Scores every candidate on one stratified holdout of `data` (featurizer
// fitted on the inner training part). Ties keep the earliest candidate.
inline GridResult grid_search(const std::vector<GridCandidate>& grid, const std::vector<SessionFeatures>& data,
                              const EmbeddingTable& table, const FeaturizeOptions& feat, double val_fraction,
                              std::uint64_t seed) {
  if (grid.empty()) throw ValidationError("grid_search: empty grid");
  const Task task = grid.front().arch.task;
  std::vector<std::size_t> idx;
  std::vector<double> targets(data.size(), 0.0);
  for (std::size_t i = 0; i < data.size(); ++i)
    if (auto y = task_target(data[i].record, task)) {
      idx.push_back(i);
      targets[i] = *y;
    }
  const Holdout outer = holdout_split(idx, targets, val_fraction, seed, is_classification(task));
  if (outer.val.empty()) throw ValidationError("grid_search: validation split is empty");
  std::vector<SessionRecord> val_records;
  for (auto i : outer.val) val_records.push_back(data[i].record);

  GridResult res;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    if (grid[g].arch.task != task) throw ValidationError("grid_search: candidates disagree on task");
    FoldArtifacts fa =
        run_fold(data, targets, outer.train, outer.val, grid[g].arch, grid[g].train, feat, table);
    EvalReport r = evaluate(fa.predictions, val_records, task);
    const double metric = is_classification(task) ? *r.accuracy : *r.rmse;
    res.table.push_back({g, grid[g].name, metric});
    const double best = res.table[res.best_index].metric;
    const bool better = is_classification(task) ? metric > best : metric < best;
    if (better) res.best_index = g;
  }
  return res;
}

}  // namespace mgf
