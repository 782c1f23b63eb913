// Model assembly: unimodal BiLSTM models, late fusion, the gated multimodal
// model (two BiLSTM branches -> highway stack -> head), session-level
// prediction, and binary checkpoints.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mgf/error.hpp"
#include "mgf/feats_acoustic.hpp"
#include "mgf/feats_lexical.hpp"
#include "mgf/nn.hpp"
#include "mgf/tensor.hpp"

namespace mgf {

enum class Task { ad, mmse, decline };
enum class ModelKind { audio, text, fused, late };
enum class Branch { audio, text };
enum class LateCombiner { mean, max, logit_mean };

inline bool is_classification(Task t) { return t != Task::mmse; }

inline std::string_view to_string(Task t) {
  switch (t) {
    case Task::ad: return "ad";
    case Task::mmse: return "mmse";
    case Task::decline: return "decline";
  }
  return "ad";
}

inline std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::audio: return "audio";
    case ModelKind::text: return "text";
    case ModelKind::fused: return "fused";
    case ModelKind::late: return "late";
  }
  return "fused";
}

inline Task task_from_string(std::string_view s) {
  if (s == "ad") return Task::ad;
  if (s == "mmse") return Task::mmse;
  if (s == "decline") return Task::decline;
  throw ValidationError("unknown task \"" + std::string(s) + "\"");
}

inline ModelKind kind_from_string(std::string_view s) {
  if (s == "audio") return ModelKind::audio;
  if (s == "text") return ModelKind::text;
  if (s == "fused") return ModelKind::fused;
  if (s == "late") return ModelKind::late;
  throw ValidationError("unknown model \"" + std::string(s) + "\"");
}

inline std::string_view to_string(LateCombiner c) {
  switch (c) {
    case LateCombiner::mean: return "mean";
    case LateCombiner::max: return "max";
    case LateCombiner::logit_mean: return "logit-mean";
  }
  return "?";
}

inline LateCombiner combiner_from_string(std::string_view s) {
  if (s == "mean") return LateCombiner::mean;
  if (s == "max") return LateCombiner::max;
  if (s == "logit-mean") return LateCombiner::logit_mean;
  throw ValidationError("unknown late-fusion combiner \"" + std::string(s) + "\"");
}

inline bool uses_audio(ModelKind k) { return k != ModelKind::text; }
inline bool uses_text(ModelKind k) { return k != ModelKind::audio; }

struct BranchConfig {
  std::size_t timestep = 0;
  std::size_t stride = 0;
  std::size_t layers = 0;
  std::size_t hidden = 0;  // per direction

  friend bool operator==(const BranchConfig&, const BranchConfig&) = default;
};

struct ArchConfig {
  BranchConfig audio{20, 1, 4, 256};
  BranchConfig text{10, 2, 2, 16};
  std::size_t highway_n = 3;
  Task task = Task::ad;
  ModelKind kind = ModelKind::fused;
  LexicalFlags flags;
  std::uint64_t seed = 0;
  LateCombiner late_combiner = LateCombiner::mean;

  void validate() const {
    for (const auto* b : {&audio, &text})
      if (!b->timestep || !b->stride || !b->layers || !b->hidden)
        throw ValidationError("ArchConfig: branch sizes must be positive");
    if (highway_n < 1) throw ValidationError("ArchConfig: highway_n must be >= 1");
  }
  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

// Everything needed to featurize a session exactly as at training time.
struct FeaturizerMeta {
  std::size_t stat_window = 100;
  std::size_t stat_hop = 100;
  double alpha = 0.05;
  std::vector<std::string> frame_features;
  Scaler scaler;
  SelectionMask mask;
  std::uint64_t embedding_hash = 0;
  std::size_t embedding_dim = 0;
  double target_mean = 0.0;  // training-target mean (regression head init)

  friend bool operator==(const FeaturizerMeta&, const FeaturizerMeta&) = default;
};

template <typename T>
struct ModelParams {
  ArchConfig arch;
  FeaturizerMeta meta;
  std::size_t audio_input = 0;
  std::size_t text_input = 0;
  std::vector<nn::BiLstmLayer<T>> audio;
  std::vector<nn::BiLstmLayer<T>> text;
  std::vector<nn::HighwayParams<T>> highway;
  Tensor2<T> head_w, head_b;            // 1 x in, 1 x 1
  Tensor2<T> text_head_w, text_head_b;  // late fusion only

  std::size_t audio_out() const { return audio.empty() ? 0 : audio.back().output(); }
  std::size_t text_out() const { return text.empty() ? 0 : text.back().output(); }

  template <typename F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

private:
  template <typename Self, typename F>
  static void visit_impl(Self& self, F& f) {
    for (std::size_t l = 0; l < self.audio.size(); ++l)
      self.audio[l].visit([&](const std::string& n, auto& t) { f("audio." + std::to_string(l) + "." + n, t); });
    for (std::size_t l = 0; l < self.text.size(); ++l)
      self.text[l].visit([&](const std::string& n, auto& t) { f("text." + std::to_string(l) + "." + n, t); });
    for (std::size_t l = 0; l < self.highway.size(); ++l)
      self.highway[l].visit([&](const std::string& n, auto& t) { f("highway." + std::to_string(l) + "." + n, t); });
    f(std::string("head.w"), self.head_w);
    f(std::string("head.b"), self.head_b);
    if (!self.text_head_w.empty()) {
      f(std::string("text_head.w"), self.text_head_w);
      f(std::string("text_head.b"), self.text_head_b);
    }
  }
};

namespace detail {

template <typename T>
std::vector<nn::BiLstmLayer<T>> make_branch(std::size_t input, const BranchConfig& c) {
  std::vector<nn::BiLstmLayer<T>> layers;
  std::size_t in = input;
  for (std::size_t l = 0; l < c.layers; ++l) {
    layers.push_back({nn::LstmLayerParams<T>(in, c.hidden), nn::LstmLayerParams<T>(in, c.hidden)});
    in = 2 * c.hidden;
  }
  return layers;
}

}  // namespace detail

// Zero-valued parameters with the shapes implied by `arch` and the input widths.
template <typename T>
ModelParams<T> model_skeleton(const ArchConfig& arch, std::size_t audio_input, std::size_t text_input) {
  arch.validate();
  ModelParams<T> p;
  p.arch = arch;
  const ModelKind k = arch.kind;
  if (uses_audio(k)) {
    if (!audio_input) throw ValidationError("model: audio input width is 0");
    p.audio_input = audio_input;
    p.audio = detail::make_branch<T>(audio_input, arch.audio);
  }
  if (uses_text(k)) {
    if (!text_input) throw ValidationError("model: text input width is 0");
    p.text_input = text_input;
    p.text = detail::make_branch<T>(text_input, arch.text);
  }
  std::size_t head_in = 0;
  switch (k) {
    case ModelKind::audio: head_in = p.audio_out(); break;
    case ModelKind::text: head_in = p.text_out(); break;
    case ModelKind::late: head_in = p.audio_out(); break;
    case ModelKind::fused: {
      const std::size_t d = p.audio_out() + p.text_out();
      for (std::size_t i = 0; i < arch.highway_n; ++i) p.highway.emplace_back(d);
      head_in = d;
      break;
    }
  }
  p.head_w = Tensor2<T>(1, head_in);
  p.head_b = Tensor2<T>(1, 1);
  if (k == ModelKind::late) {
    p.text_head_w = Tensor2<T>(1, p.text_out());
    p.text_head_b = Tensor2<T>(1, 1);
  }
  return p;
}

// Seeded initialisation. The regression head bias starts at `target_mean`.
template <typename T>
ModelParams<T> init_model(const ArchConfig& arch, std::size_t audio_input, std::size_t text_input,
                          double target_mean = 0.0) {
  ModelParams<T> p = model_skeleton<T>(arch, audio_input, text_input);
  std::mt19937_64 rng(arch.seed);
  for (auto& layer : p.audio) {
    nn::init_lstm(layer.fwd, rng);
    nn::init_lstm(layer.bwd, rng);
  }
  for (auto& layer : p.text) {
    nn::init_lstm(layer.fwd, rng);
    nn::init_lstm(layer.bwd, rng);
  }
  for (auto& h : p.highway) nn::init_highway(h, rng);
  const T bias = is_classification(arch.task) ? T(0) : static_cast<T>(target_mean);
  nn::init_uniform(p.head_w, nn::fan_in_bound(p.head_w.cols()), rng);
  p.head_b(0, 0) = bias;
  if (!p.text_head_w.empty()) {
    nn::init_uniform(p.text_head_w, nn::fan_in_bound(p.text_head_w.cols()), rng);
    p.text_head_b(0, 0) = bias;
  }
  return p;
}

// Same shapes, all zeros; used as a gradient accumulator.
template <typename T>
ModelParams<T> zeros_like(const ModelParams<T>& p) {
  ModelParams<T> z = p;
  z.visit([](const std::string&, Tensor2<T>& t) { t.fill(T(0)); });
  return z;
}

// ---------------------------------------------------------------------------
// Inputs

template <typename T>
struct SeqInput {
  Tensor2<T> x;
  std::vector<bool> mask;

  bool empty() const noexcept { return x.empty(); }
};

template <typename T>
SeqInput<T> to_input(const FeatureWindow& w) {
  return {w.steps.template cast<T>(), w.mask};
}

template <typename T>
struct Instance {
  SeqInput<T> audio;
  SeqInput<T> text;
};

// Cyclic pairing: instance i joins audio window (i mod Na) with text window
// (i mod Nt); the count is max(Na, Nt).
inline std::vector<std::pair<std::size_t, std::size_t>> pair_windows(std::size_t n_audio,
                                                                     std::size_t n_text) {
  if (n_audio == 0 && n_text == 0) throw ValidationError("pair_windows: both window lists are empty");
  if (n_audio == 0) throw ValidationError("pair_windows: audio window list is empty");
  if (n_text == 0) throw ValidationError("pair_windows: text window list is empty");
  const std::size_t n = std::max(n_audio, n_text);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(i % n_audio, i % n_text);
  return out;
}

template <typename T>
std::vector<Instance<T>> pair_windows(const std::vector<FeatureWindow>& audio,
                                      const std::vector<FeatureWindow>& text) {
  std::vector<Instance<T>> out;
  for (auto [a, t] : pair_windows(audio.size(), text.size()))
    out.push_back({to_input<T>(audio[a]), to_input<T>(text[t])});
  return out;
}

// ---------------------------------------------------------------------------
// Forward / backward

template <typename T>
struct BranchCache {
  nn::BiLstmCache<T> lstm;
  std::vector<bool> mask;
};

template <typename T>
struct ForwardCache {
  BranchCache<T> audio, text;
  std::vector<nn::HighwayCache<T>> highway;
  Tensor2<T> head_in;  // 1 x D
  T raw = T(0);
};

namespace detail {

template <typename T>
std::vector<T> run_branch(const SeqInput<T>& in, const std::vector<nn::BiLstmLayer<T>>& layers,
                          BranchCache<T>* cache) {
  if (in.x.rows() != in.mask.size()) throw ShapeError("model: window mask length mismatch");
  Tensor2<T> out = nn::bilstm_forward(in.x, layers, in.mask, cache ? &cache->lstm : nullptr);
  if (cache) cache->mask = in.mask;
  return nn::masked_mean(out, in.mask);
}

template <typename T>
T run_head(const Tensor2<T>& in, const Tensor2<T>& w, const Tensor2<T>& b) {
  return nn::dense_forward(in, w, b, nn::Activation::identity)(0, 0);
}

template <typename T>
Tensor2<T> row_tensor(std::vector<T> v) {
  const std::size_t n = v.size();
  return Tensor2<T>(1, n, std::move(v));
}

}  // namespace detail

// Pre-activation output of the fused model (logit or regression value).
template <typename T>
T forward_fused_raw(const Instance<T>& in, const ModelParams<T>& p, ForwardCache<T>* cache = nullptr) {
  if (p.arch.kind != ModelKind::fused) throw ValidationError("forward_fused: model is not fused");
  if (in.audio.x.cols() != p.audio_input || in.text.x.cols() != p.text_input)
    throw ShapeError("forward_fused: input widths " + std::to_string(in.audio.x.cols()) + "/" +
                     std::to_string(in.text.x.cols()) + " vs model " +
                     std::to_string(p.audio_input) + "/" + std::to_string(p.text_input));
  auto a = detail::run_branch(in.audio, p.audio, cache ? &cache->audio : nullptr);
  auto t = detail::run_branch(in.text, p.text, cache ? &cache->text : nullptr);
  a.insert(a.end(), t.begin(), t.end());
  Tensor2<T> x = detail::row_tensor(std::move(a));
  if (cache) cache->highway.assign(p.highway.size(), {});
  for (std::size_t l = 0; l < p.highway.size(); ++l)
    x = nn::highway_forward(x, p.highway[l], cache ? &cache->highway[l] : nullptr);
  const T raw = detail::run_head(x, p.head_w, p.head_b);
  if (cache) {
    cache->head_in = std::move(x);
    cache->raw = raw;
  }
  return raw;
}

template <typename T>
const std::vector<nn::BiLstmLayer<T>>& branch_layers(const ModelParams<T>& p, Branch b) {
  return b == Branch::audio ? p.audio : p.text;
}

template <typename T>
std::pair<const Tensor2<T>*, const Tensor2<T>*> branch_head(const ModelParams<T>& p, Branch b) {
  if (p.arch.kind == ModelKind::late && b == Branch::text) return {&p.text_head_w, &p.text_head_b};
  return {&p.head_w, &p.head_b};
}

inline bool has_unimodal_head(ModelKind k, Branch b) {
  switch (k) {
    case ModelKind::audio: return b == Branch::audio;
    case ModelKind::text: return b == Branch::text;
    case ModelKind::late: return true;
    case ModelKind::fused: return false;
  }
  return false;
}

template <typename T>
T forward_unimodal_raw(const SeqInput<T>& in, Branch b, const ModelParams<T>& p,
                       ForwardCache<T>* cache = nullptr) {
  if (!has_unimodal_head(p.arch.kind, b))
    throw ValidationError("forward_unimodal: model has no " +
                          std::string(b == Branch::audio ? "audio" : "text") + " head");
  const std::size_t width = b == Branch::audio ? p.audio_input : p.text_input;
  if (in.x.cols() != width)
    throw ShapeError("forward_unimodal: input width " + std::to_string(in.x.cols()) +
                     " vs model " + std::to_string(width));
  BranchCache<T>* bc = cache ? (b == Branch::audio ? &cache->audio : &cache->text) : nullptr;
  Tensor2<T> x = detail::row_tensor(detail::run_branch(in, branch_layers(p, b), bc));
  auto [w, bias] = branch_head(p, b);
  const T raw = detail::run_head(x, *w, *bias);
  if (cache) {
    cache->head_in = std::move(x);
    cache->raw = raw;
  }
  return raw;
}

template <typename T>
T output_score(T raw, Task task) {
  return is_classification(task) ? nn::sigmoid(raw) : raw;
}

template <typename T>
T forward_fused(const Instance<T>& in, const ModelParams<T>& p) {
  return output_score(forward_fused_raw(in, p), p.arch.task);
}

template <typename T>
T forward_unimodal(const SeqInput<T>& in, Branch b, const ModelParams<T>& p) {
  return output_score(forward_unimodal_raw(in, b, p), p.arch.task);
}

namespace detail {

template <typename T>
void backward_branch(const std::vector<nn::BiLstmLayer<T>>& layers, const BranchCache<T>& cache,
                     std::span<const T> dpooled, std::vector<nn::BiLstmLayer<T>>& grads) {
  Tensor2<T> dout = nn::masked_mean_backward(dpooled, cache.mask);
  nn::bilstm_backward(layers, cache.mask, cache.lstm, dout, grads);
}

template <typename T>
Tensor2<T> backward_head(const Tensor2<T>& in, const Tensor2<T>& w, T raw, T draw, Tensor2<T>& gw,
                         Tensor2<T>& gb) {
  Tensor2<T> y(1, 1, std::vector<T>{raw});
  Tensor2<T> dy(1, 1, std::vector<T>{draw});
  auto g = nn::dense_backward(in, w, y, dy, nn::Activation::identity);
  for (std::size_t i = 0; i < gw.size(); ++i) gw.data()[i] += g.dw.data()[i];
  gb.data()[0] += g.db.data()[0];
  return g.dx;
}

}  // namespace detail

// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(raw output).
template <typename T>
void backward_fused(const ModelParams<T>& p, const ForwardCache<T>& cache, T draw, ModelParams<T>& grads) {
  Tensor2<T> dx = detail::backward_head(cache.head_in, p.head_w, cache.raw, draw, grads.head_w, grads.head_b);
  for (std::size_t l = p.highway.size(); l-- > 0;)
    dx = nn::highway_backward(p.highway[l], cache.highway[l], dx, grads.highway[l]);
  const std::size_t da = p.audio_out();
  std::span<const T> d(dx.data());
  detail::backward_branch(p.audio, cache.audio, d.subspan(0, da), grads.audio);
  detail::backward_branch(p.text, cache.text, d.subspan(da), grads.text);
}

template <typename T>
void backward_unimodal(const ModelParams<T>& p, Branch b, const ForwardCache<T>& cache, T draw,
                       ModelParams<T>& grads) {
  auto [w, bias] = branch_head(p, b);
  (void)bias;
  const bool text_head = p.arch.kind == ModelKind::late && b == Branch::text;
  Tensor2<T> dx = detail::backward_head(cache.head_in, *w, cache.raw, draw,
                                        text_head ? grads.text_head_w : grads.head_w,
                                        text_head ? grads.text_head_b : grads.head_b);
  if (b == Branch::audio)
    detail::backward_branch(p.audio, cache.audio, std::span<const T>(dx.data()), grads.audio);
  else
    detail::backward_branch(p.text, cache.text, std::span<const T>(dx.data()), grads.text);
}

// ---------------------------------------------------------------------------
// Session level

inline constexpr double kMmseMin = 0.0;
inline constexpr double kMmseMax = 30.0;
inline constexpr double kDecisionThreshold = 0.5;
inline constexpr double kLogitCap = 30.0;

inline double late_fuse(double p_audio, double p_text, LateCombiner how = LateCombiner::mean) {
  if (!(p_audio >= 0.0 && p_audio <= 1.0) || !(p_text >= 0.0 && p_text <= 1.0))
    throw ValidationError("late_fuse: probabilities must lie in [0,1]");
  switch (how) {
    case LateCombiner::max: return std::max(p_audio, p_text);
    case LateCombiner::logit_mean: {
      // logits are capped symmetrically so 0 and 1 stay finite
      auto logit = [](double p) { return std::clamp(std::log(p) - std::log1p(-p), -kLogitCap, kLogitCap); };
      return 1.0 / (1.0 + std::exp(-0.5 * (logit(p_audio) + logit(p_text))));
    }
    case LateCombiner::mean: break;
  }
  return 0.5 * (p_audio + p_text);
}

struct SessionPrediction {
  std::string session_id;
  double score = 0.0;  // probability, or MMSE clamped to [0,30]
  int label = 0;       // classification only: score >= 0.5
  std::vector<double> window_scores;
};

inline SessionPrediction aggregate_windows(std::string session_id, std::vector<double> window_scores,
                                           Task task) {
  if (window_scores.empty()) throw ValidationError("predict_session: no windows");
  SessionPrediction sp;
  sp.session_id = std::move(session_id);
  double sum = 0.0;
  for (double s : window_scores) sum += s;
  sp.score = sum / static_cast<double>(window_scores.size());
  if (is_classification(task)) {
    sp.label = sp.score >= kDecisionThreshold ? 1 : 0;
  } else {
    sp.score = std::clamp(sp.score, kMmseMin, kMmseMax);
  }
  sp.window_scores = std::move(window_scores);
  return sp;
}

// Session windows after featurization; unused branches may be empty.
struct SessionWindows {
  std::string session_id;
  std::vector<FeatureWindow> audio;
  std::vector<FeatureWindow> text;
};

template <typename T>
SessionPrediction predict_session(const SessionWindows& sw, const ModelParams<T>& p) {
  const Task task = p.arch.task;
  auto unimodal = [&](Branch b) {
    const auto& wins = b == Branch::audio ? sw.audio : sw.text;
    std::vector<double> scores;
    for (const auto& w : wins)
      scores.push_back(static_cast<double>(forward_unimodal(to_input<T>(w), b, p)));
    return aggregate_windows(sw.session_id, std::move(scores), task);
  };
  switch (p.arch.kind) {
    case ModelKind::audio: return unimodal(Branch::audio);
    case ModelKind::text: return unimodal(Branch::text);
    case ModelKind::fused: {
      std::vector<double> scores;
      for (const auto& inst : pair_windows<T>(sw.audio, sw.text))
        scores.push_back(static_cast<double>(forward_fused(inst, p)));
      return aggregate_windows(sw.session_id, std::move(scores), task);
    }
    case ModelKind::late: {
      SessionPrediction a = unimodal(Branch::audio);
      SessionPrediction t = unimodal(Branch::text);
      SessionPrediction sp;
      sp.session_id = sw.session_id;
      sp.score = is_classification(task) ? late_fuse(a.score, t.score, p.arch.late_combiner) : 0.5 * (a.score + t.score);
      sp.label = is_classification(task) && sp.score >= kDecisionThreshold ? 1 : 0;
      sp.window_scores = std::move(a.window_scores);
      sp.window_scores.insert(sp.window_scores.end(), t.window_scores.begin(), t.window_scores.end());
      return sp;
    }
  }
  throw ValidationError("predict_session: unknown model kind");
}

// ---------------------------------------------------------------------------
// Metadata JSON

inline nlohmann::ordered_json to_json(const BranchConfig& b) {
  return {{"timestep", b.timestep}, {"stride", b.stride}, {"layers", b.layers}, {"hidden", b.hidden}};
}

inline BranchConfig branch_from_json(const nlohmann::json& j) {
  return {j.at("timestep").get<std::size_t>(), j.at("stride").get<std::size_t>(),
          j.at("layers").get<std::size_t>(), j.at("hidden").get<std::size_t>()};
}

inline nlohmann::ordered_json to_json(const LexicalFlags& f) {
  return {{"disfl", f.disfl}, {"pause", f.pause}, {"lm_prob", f.lm_prob}, {"lm_log", f.lm_log}};
}

inline LexicalFlags flags_from_json(const nlohmann::json& j) {
  LexicalFlags f;
  f.disfl = j.at("disfl").get<bool>();
  f.pause = j.at("pause").get<bool>();
  f.lm_prob = j.at("lm_prob").get<bool>();
  f.lm_log = j.value("lm_log", false);
  return f;
}

inline nlohmann::ordered_json to_json(const ArchConfig& a) {
  return {{"audio", to_json(a.audio)},
          {"text", to_json(a.text)},
          {"highway_n", a.highway_n},
          {"task", std::string(to_string(a.task))},
          {"model", std::string(to_string(a.kind))},
          {"flags", to_json(a.flags)},
          {"seed", a.seed},
          {"late_combiner", std::string(to_string(a.late_combiner))},
          {"hidden_per_direction", true}};
}

inline ArchConfig arch_from_json(const nlohmann::json& j) {
  ArchConfig a;
  a.audio = branch_from_json(j.at("audio"));
  a.text = branch_from_json(j.at("text"));
  a.highway_n = j.at("highway_n").get<std::size_t>();
  a.task = task_from_string(j.at("task").get<std::string>());
  a.kind = kind_from_string(j.at("model").get<std::string>());
  a.flags = flags_from_json(j.at("flags"));
  a.seed = j.at("seed").get<std::uint64_t>();
  a.late_combiner = combiner_from_string(j.value("late_combiner", std::string("mean")));
  return a;
}

inline nlohmann::ordered_json to_json(const FeaturizerMeta& m) {
  nlohmann::ordered_json keep = nlohmann::ordered_json::array();
  for (bool k : m.mask.keep) keep.push_back(k ? 1 : 0);
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(m.embedding_hash));
  return {{"stat_window", m.stat_window},
          {"stat_hop", m.stat_hop},
          {"alpha", m.alpha},
          {"frame_features", m.frame_features},
          {"scaler", {{"means", m.scaler.means}, {"stds", m.scaler.stds}}},
          {"selection",
           {{"alpha", m.mask.alpha}, {"keep", keep}, {"r", m.mask.r_values}, {"p", m.mask.p_values}}},
          {"embedding", {{"hash", hash}, {"dim", m.embedding_dim}}},
          {"target_mean", m.target_mean}};
}

inline FeaturizerMeta meta_from_json(const nlohmann::json& j) {
  FeaturizerMeta m;
  m.stat_window = j.at("stat_window").get<std::size_t>();
  m.stat_hop = j.at("stat_hop").get<std::size_t>();
  m.alpha = j.at("alpha").get<double>();
  m.frame_features = j.at("frame_features").get<std::vector<std::string>>();
  m.scaler.means = j.at("scaler").at("means").get<std::vector<double>>();
  m.scaler.stds = j.at("scaler").at("stds").get<std::vector<double>>();
  const auto& sel = j.at("selection");
  m.mask.alpha = sel.at("alpha").get<double>();
  for (int k : sel.at("keep").get<std::vector<int>>()) m.mask.keep.push_back(k != 0);
  m.mask.r_values = sel.at("r").get<std::vector<double>>();
  m.mask.p_values = sel.at("p").get<std::vector<double>>();
  m.embedding_hash = std::stoull(j.at("embedding").at("hash").get<std::string>(), nullptr, 16);
  m.embedding_dim = j.at("embedding").at("dim").get<std::size_t>();
  m.target_mean = j.at("target_mean").get<double>();
  return m;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// Layout (little-endian): "MGFC" | u32 version | u32 meta_len | meta JSON |
// u32 tensor_count | per tensor: u32 name_len, name, u32 rank, u64 dims[rank],
// u64 payload offset | f32 payload.

inline constexpr char kCheckpointMagic[4] = {'M', 'G', 'F', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}
inline void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof bits);
  put_u32(out, bits);
}

class Reader {
public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}
  std::size_t pos() const { return pos_; }
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n)
      throw ParseError(std::string("checkpoint truncated while reading ") + what + " at offset " +
                           std::to_string(pos_),
                       pos_);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline nlohmann::ordered_json checkpoint_metadata(const ModelParams<float>& p) {
  return {{"arch", to_json(p.arch)},
          {"audio_input", p.audio_input},
          {"text_input", p.text_input},
          {"featurizer", to_json(p.meta)}};
}

inline std::string save_checkpoint(const ModelParams<float>& p) {
  std::string out(kCheckpointMagic, 4);
  detail::put_u32(out, kCheckpointVersion);
  const std::string meta = checkpoint_metadata(p).dump();
  detail::put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;

  std::vector<std::pair<std::string, const Tensor2<float>*>> tensors;
  p.visit([&](const std::string& n, const Tensor2<float>& t) { tensors.emplace_back(n, &t); });
  detail::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    detail::put_u32(out, 2);
    detail::put_u64(out, t->rows());
    detail::put_u64(out, t->cols());
    detail::put_u64(out, offset);
    offset += 4ull * t->size();
  }
  for (const auto& entry : tensors)
    for (float v : entry.second->data()) detail::put_f32(out, v);
  return out;
}

inline ModelParams<float> load_checkpoint(std::string_view bytes) {
  detail::Reader rd(bytes);
  auto magic = rd.take(4, "magic");
  if (magic != std::string_view(kCheckpointMagic, 4)) throw ParseError("checkpoint: bad magic at offset 0", 0);
  const std::size_t version_at = rd.pos();
  const std::uint32_t version = rd.u32("version");
  if (version != kCheckpointVersion)
    throw ParseError("checkpoint: unsupported version " + std::to_string(version) + " at offset " +
                         std::to_string(version_at),
                     version_at);
  const std::uint32_t meta_len = rd.u32("metadata length");
  const std::size_t meta_at = rd.pos();
  auto meta_text = rd.take(meta_len, "metadata");
  ModelParams<float> p;
  try {
    auto meta = nlohmann::json::parse(meta_text);
    p = model_skeleton<float>(arch_from_json(meta.at("arch")), meta.at("audio_input").get<std::size_t>(),
                              meta.at("text_input").get<std::size_t>());
    p.meta = meta_from_json(meta.at("featurizer"));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint: invalid metadata at offset " + std::to_string(meta_at) + ": " + e.what(),
                     meta_at);
  }

  std::map<std::string, Tensor2<float>*> slots;
  p.visit([&](const std::string& n, Tensor2<float>& t) { slots.emplace(n, &t); });
  const std::size_t count_at = rd.pos();
  const std::uint32_t count = rd.u32("tensor count");
  if (count != slots.size())
    throw ParseError("checkpoint: tensor count " + std::to_string(count) + " does not match architecture (" +
                         std::to_string(slots.size()) + ") at offset " + std::to_string(count_at),
                     count_at);
  struct Entry {
    Tensor2<float>* slot;
    std::uint64_t offset;
    std::size_t at;
  };
  std::vector<Entry> entries;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::size_t at = rd.pos();
    const std::uint32_t name_len = rd.u32("tensor name length");
    std::string name(rd.take(name_len, "tensor name"));
    const std::uint32_t rank = rd.u32("tensor rank");
    if (rank != 2) throw ParseError("checkpoint: tensor " + name + " has rank " + std::to_string(rank), at);
    const std::uint64_t rows = rd.u64("tensor dims");
    const std::uint64_t cols = rd.u64("tensor dims");
    const std::uint64_t offset = rd.u64("tensor offset");
    auto it = slots.find(name);
    if (it == slots.end())
      throw ParseError("checkpoint: unexpected tensor \"" + name + "\" at offset " + std::to_string(at), at);
    if (it->second->rows() != rows || it->second->cols() != cols)
      throw ParseError("checkpoint: tensor \"" + name + "\" shape mismatch at offset " + std::to_string(at), at);
    entries.push_back({it->second, offset, at});
  }
  const std::size_t payload_at = rd.pos();
  const std::size_t payload_len = bytes.size() - payload_at;
  for (const auto& e : entries) {
    const std::uint64_t len = 4ull * e.slot->size();
    if (e.offset > payload_len || len > payload_len - e.offset)
      throw ParseError("checkpoint: payload truncated for tensor declared at offset " + std::to_string(e.at),
                       payload_at + std::min<std::uint64_t>(e.offset, payload_len));
    const char* src = bytes.data() + payload_at + e.offset;
    for (std::size_t i = 0; i < e.slot->size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= std::uint32_t(static_cast<unsigned char>(src[4 * i + b])) << (8 * b);
      float f;
      std::memcpy(&f, &bits, sizeof f);
      e.slot->data()[i] = f;
    }
  }
  return p;
}

}  // namespace mgf
