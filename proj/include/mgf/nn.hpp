// Neural-network core: dense layer, LSTM cell and (bi)directional layers,
// highway layer, losses, and Adam. Every forward op has a matching backward
// that returns exact gradients; all ops are templated on the scalar type so
// training runs in float and gradient checks run in double.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mgf/error.hpp"
#include "mgf/tensor.hpp"

namespace mgf::nn {

template <typename T>
inline T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

enum class Activation { identity, sigmoid, tanh, relu };

template <typename T>
inline T activate(T x, Activation a) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::sigmoid: return sigmoid(x);
    case Activation::tanh: return std::tanh(x);
    case Activation::relu: return x > T(0) ? x : T(0);
  }
  return x;
}

// Derivative expressed through the activation output y.
template <typename T>
inline T activate_grad(T y, Activation a) {
  switch (a) {
    case Activation::identity: return T(1);
    case Activation::sigmoid: return y * (T(1) - y);
    case Activation::tanh: return T(1) - y * y;
    case Activation::relu: return y > T(0) ? T(1) : T(0);
  }
  return T(1);
}

// ---------------------------------------------------------------------------
// Dense

// y = act(x W^T + b); x: B x I, W: O x I, b: 1 x O.
template <typename T>
Tensor2<T> dense_forward(const Tensor2<T>& x, const Tensor2<T>& w, const Tensor2<T>& b,
                         Activation act = Activation::identity) {
  if (x.cols() != w.cols() || b.rows() != 1 || b.cols() != w.rows())
    throw ShapeError("dense_forward: x " + shape_str(x.rows(), x.cols()) + ", W " +
                     shape_str(w.rows(), w.cols()) + ", b " + shape_str(b.rows(), b.cols()));
  const std::size_t B = x.rows(), I = x.cols(), O = w.rows();
  Tensor2<T> y(B, O);
  for (std::size_t n = 0; n < B; ++n) {
    const T* xr = &x(n, 0);
    for (std::size_t o = 0; o < O; ++o) {
      const T* wr = &w(o, 0);
      T acc = b(0, o);
      for (std::size_t i = 0; i < I; ++i) acc += wr[i] * xr[i];
      y(n, o) = activate(acc, act);
    }
  }
  return y;
}

template <typename T>
struct DenseGrads {
  Tensor2<T> dx, dw, db;
};

// Gradients given the forward output `y` and upstream `dy`.
template <typename T>
DenseGrads<T> dense_backward(const Tensor2<T>& x, const Tensor2<T>& w, const Tensor2<T>& y,
                             const Tensor2<T>& dy, Activation act = Activation::identity) {
  if (!y.same_shape(dy) || y.cols() != w.rows() || x.rows() != y.rows() || x.cols() != w.cols())
    throw ShapeError("dense_backward: shape mismatch");
  const std::size_t B = x.rows(), I = x.cols(), O = w.rows();
  DenseGrads<T> g{Tensor2<T>(B, I), Tensor2<T>(O, I), Tensor2<T>(1, O)};
  for (std::size_t n = 0; n < B; ++n) {
    for (std::size_t o = 0; o < O; ++o) {
      const T da = dy(n, o) * activate_grad(y(n, o), act);
      if (da == T(0)) continue;
      g.db(0, o) += da;
      for (std::size_t i = 0; i < I; ++i) {
        g.dw(o, i) += da * x(n, i);
        g.dx(n, i) += da * w(o, i);
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// LSTM

// Gate rows are stacked in the order i, f, g, o.
template <typename T>
struct LstmLayerParams {
  Tensor2<T> w_ih;  // 4H x I
  Tensor2<T> w_hh;  // 4H x H
  Tensor2<T> b;     // 1 x 4H

  LstmLayerParams() = default;
  LstmLayerParams(std::size_t input, std::size_t hidden)
      : w_ih(4 * hidden, input), w_hh(4 * hidden, hidden), b(1, 4 * hidden) {}

  std::size_t input() const noexcept { return w_ih.cols(); }
  std::size_t hidden() const noexcept { return w_hh.cols(); }

  void check() const {
    const std::size_t H = hidden();
    if (w_hh.rows() != 4 * H || w_ih.rows() != 4 * H || b.rows() != 1 || b.cols() != 4 * H)
      throw ShapeError("LstmLayerParams: inconsistent shapes");
  }

  template <typename F>
  void visit(F&& f) {
    f("w_ih", w_ih);
    f("w_hh", w_hh);
    f("b", b);
  }
  template <typename F>
  void visit(F&& f) const {
    f("w_ih", w_ih);
    f("w_hh", w_hh);
    f("b", b);
  }
  friend bool operator==(const LstmLayerParams&, const LstmLayerParams&) = default;
};

namespace detail {

template <typename T>
void lstm_gates(std::span<const T> x, std::span<const T> h, const LstmLayerParams<T>& p,
                std::span<T> gates) {
  const std::size_t H = p.hidden(), I = p.input();
  for (std::size_t r = 0; r < 4 * H; ++r) {
    T acc = p.b(0, r);
    const T* wi = &p.w_ih(r, 0);
    for (std::size_t k = 0; k < I; ++k) acc += wi[k] * x[k];
    if (H) {
      const T* wh = &p.w_hh(r, 0);
      for (std::size_t k = 0; k < H; ++k) acc += wh[k] * h[k];
    }
    gates[r] = acc;
  }
  for (std::size_t k = 0; k < H; ++k) {
    gates[k] = sigmoid(gates[k]);
    gates[H + k] = sigmoid(gates[H + k]);
    gates[2 * H + k] = std::tanh(gates[2 * H + k]);
    gates[3 * H + k] = sigmoid(gates[3 * H + k]);
  }
}

}  // namespace detail

template <typename T>
struct LstmState {
  std::vector<T> h, c;
};

// One recurrence step: c' = f*c + i*g, h' = o*tanh(c').
template <typename T>
LstmState<T> lstm_cell_step(std::span<const T> x, std::span<const T> h, std::span<const T> c,
                            const LstmLayerParams<T>& p) {
  p.check();
  const std::size_t H = p.hidden();
  if (x.size() != p.input() || h.size() != H || c.size() != H)
    throw ShapeError("lstm_cell_step: x/h/c size mismatch");
  std::vector<T> gates(4 * H);
  detail::lstm_gates<T>(x, h, p, gates);
  LstmState<T> out{std::vector<T>(H), std::vector<T>(H)};
  for (std::size_t k = 0; k < H; ++k) {
    out.c[k] = gates[H + k] * c[k] + gates[k] * gates[2 * H + k];
    out.h[k] = gates[3 * H + k] * std::tanh(out.c[k]);
  }
  return out;
}

// Intermediates of one direction over a sequence.
template <typename T>
struct LstmDirCache {
  Tensor2<T> gates;   // W x 4H, post-activation
  Tensor2<T> c;       // W x H
  Tensor2<T> tanh_c;  // W x H
  Tensor2<T> h_prev;  // W x H
  Tensor2<T> c_prev;  // W x H
};

// Runs one direction over `x` (W x I). Masked-out steps emit zeros and leave
// the recurrent state untouched.
template <typename T>
Tensor2<T> lstm_direction_forward(const Tensor2<T>& x, const std::vector<bool>& mask,
                                  const LstmLayerParams<T>& p, bool reverse,
                                  LstmDirCache<T>* cache = nullptr) {
  p.check();
  const std::size_t W = x.rows(), H = p.hidden();
  if (x.cols() != p.input() || mask.size() != W)
    throw ShapeError("lstm_direction_forward: input " + shape_str(W, x.cols()) +
                     " vs params input " + std::to_string(p.input()));
  Tensor2<T> out(W, H);
  if (cache) *cache = {Tensor2<T>(W, 4 * H), Tensor2<T>(W, H), Tensor2<T>(W, H),
                       Tensor2<T>(W, H), Tensor2<T>(W, H)};
  std::vector<T> h(H, T(0)), c(H, T(0)), gates(4 * H);
  for (std::size_t s = 0; s < W; ++s) {
    const std::size_t t = reverse ? W - 1 - s : s;
    if (!mask[t]) continue;
    detail::lstm_gates<T>(x.row(t), h, p, gates);
    if (cache) {
      std::copy(h.begin(), h.end(), cache->h_prev.row(t).begin());
      std::copy(c.begin(), c.end(), cache->c_prev.row(t).begin());
      std::copy(gates.begin(), gates.end(), cache->gates.row(t).begin());
    }
    for (std::size_t k = 0; k < H; ++k) {
      c[k] = gates[H + k] * c[k] + gates[k] * gates[2 * H + k];
      const T tc = std::tanh(c[k]);
      h[k] = gates[3 * H + k] * tc;
      out(t, k) = h[k];
      if (cache) {
        cache->c(t, k) = c[k];
        cache->tanh_c(t, k) = tc;
      }
    }
  }
  return out;
}

// Backpropagation through time for one direction. Accumulates parameter
// gradients into `grad` and returns d(loss)/dx.
template <typename T>
Tensor2<T> lstm_direction_backward(const Tensor2<T>& x, const std::vector<bool>& mask,
                                   const LstmLayerParams<T>& p, bool reverse,
                                   const LstmDirCache<T>& cache, const Tensor2<T>& dout,
                                   LstmLayerParams<T>& grad) {
  const std::size_t W = x.rows(), I = p.input(), H = p.hidden();
  Tensor2<T> dx(W, I);
  std::vector<T> dh_next(H, T(0)), dc_next(H, T(0)), da(4 * H);
  for (std::size_t s = 0; s < W; ++s) {
    // walk opposite to the forward order
    const std::size_t t = reverse ? s : W - 1 - s;
    if (!mask[t]) continue;
    for (std::size_t k = 0; k < H; ++k) {
      const T i = cache.gates(t, k), f = cache.gates(t, H + k), g = cache.gates(t, 2 * H + k),
              o = cache.gates(t, 3 * H + k);
      const T tc = cache.tanh_c(t, k);
      const T dh = dout(t, k) + dh_next[k];
      const T dc = dc_next[k] + dh * o * (T(1) - tc * tc);
      da[k] = dc * g * i * (T(1) - i);
      da[H + k] = dc * cache.c_prev(t, k) * f * (T(1) - f);
      da[2 * H + k] = dc * i * (T(1) - g * g);
      da[3 * H + k] = dh * tc * o * (T(1) - o);
      dc_next[k] = dc * f;
    }
    std::fill(dh_next.begin(), dh_next.end(), T(0));
    auto xt = x.row(t);
    auto hp = cache.h_prev.row(t);
    auto dxt = dx.row(t);
    for (std::size_t r = 0; r < 4 * H; ++r) {
      const T a = da[r];
      if (a == T(0)) continue;
      grad.b(0, r) += a;
      T* gwi = &grad.w_ih(r, 0);
      const T* wi = &p.w_ih(r, 0);
      for (std::size_t k = 0; k < I; ++k) {
        gwi[k] += a * xt[k];
        dxt[k] += a * wi[k];
      }
      T* gwh = &grad.w_hh(r, 0);
      const T* wh = &p.w_hh(r, 0);
      for (std::size_t k = 0; k < H; ++k) {
        gwh[k] += a * hp[k];
        dh_next[k] += a * wh[k];
      }
    }
  }
  return dx;
}

template <typename T>
struct BiLstmLayer {
  LstmLayerParams<T> fwd, bwd;

  std::size_t input() const noexcept { return fwd.input(); }
  std::size_t hidden() const noexcept { return fwd.hidden(); }
  std::size_t output() const noexcept { return fwd.hidden() + bwd.hidden(); }

  template <typename F>
  void visit(F&& f) {
    fwd.visit([&](const std::string& n, Tensor2<T>& t) { f("fwd." + n, t); });
    bwd.visit([&](const std::string& n, Tensor2<T>& t) { f("bwd." + n, t); });
  }
  template <typename F>
  void visit(F&& f) const {
    fwd.visit([&](const std::string& n, const Tensor2<T>& t) { f("fwd." + n, t); });
    bwd.visit([&](const std::string& n, const Tensor2<T>& t) { f("bwd." + n, t); });
  }
  friend bool operator==(const BiLstmLayer&, const BiLstmLayer&) = default;
};

template <typename T>
struct BiLstmCache {
  std::vector<Tensor2<T>> inputs;  // input to each layer
  std::vector<LstmDirCache<T>> fwd, bwd;
};

// Stacked bidirectional LSTM. Each layer's output per step is [fwd | bwd].
template <typename T>
Tensor2<T> bilstm_forward(const Tensor2<T>& seq, const std::vector<BiLstmLayer<T>>& layers,
                          const std::vector<bool>& mask, BiLstmCache<T>* cache = nullptr) {
  if (layers.empty()) throw ShapeError("bilstm_forward: no layers");
  if (mask.size() != seq.rows()) throw ShapeError("bilstm_forward: mask length != sequence length");
  std::size_t expected = seq.cols();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].fwd.input() != expected || layers[l].bwd.input() != expected)
      throw ShapeError("bilstm_forward: layer " + std::to_string(l) + " expects input " +
                       std::to_string(layers[l].fwd.input()) + ", got " +
                       std::to_string(expected));
    expected = layers[l].output();
  }
  if (cache) {
    cache->inputs.assign(layers.size(), {});
    cache->fwd.assign(layers.size(), {});
    cache->bwd.assign(layers.size(), {});
  }
  Tensor2<T> cur = seq;
  const std::size_t W = seq.rows();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    Tensor2<T> f = lstm_direction_forward(cur, mask, L.fwd, false, cache ? &cache->fwd[l] : nullptr);
    Tensor2<T> b = lstm_direction_forward(cur, mask, L.bwd, true, cache ? &cache->bwd[l] : nullptr);
    Tensor2<T> out(W, L.output());
    const std::size_t Hf = L.fwd.hidden(), Hb = L.bwd.hidden();
    for (std::size_t t = 0; t < W; ++t) {
      std::copy(f.row(t).begin(), f.row(t).end(), out.row(t).begin());
      std::copy(b.row(t).begin(), b.row(t).end(), out.row(t).begin() + static_cast<std::ptrdiff_t>(Hf));
    }
    (void)Hb;
    if (cache) cache->inputs[l] = std::move(cur);
    cur = std::move(out);
  }
  return cur;
}

template <typename T>
Tensor2<T> bilstm_backward(const std::vector<BiLstmLayer<T>>& layers, const std::vector<bool>& mask,
                           const BiLstmCache<T>& cache, const Tensor2<T>& dout,
                           std::vector<BiLstmLayer<T>>& grads) {
  Tensor2<T> d = dout;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& L = layers[l];
    const std::size_t W = d.rows(), Hf = L.fwd.hidden(), Hb = L.bwd.hidden();
    Tensor2<T> df(W, Hf), db(W, Hb);
    for (std::size_t t = 0; t < W; ++t) {
      for (std::size_t k = 0; k < Hf; ++k) df(t, k) = d(t, k);
      for (std::size_t k = 0; k < Hb; ++k) db(t, k) = d(t, Hf + k);
    }
    const auto& x = cache.inputs[l];
    Tensor2<T> dx = lstm_direction_backward(x, mask, L.fwd, false, cache.fwd[l], df, grads[l].fwd);
    Tensor2<T> dxb = lstm_direction_backward(x, mask, L.bwd, true, cache.bwd[l], db, grads[l].bwd);
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data()[i] += dxb.data()[i];
    d = std::move(dx);
  }
  return d;
}

// Mean over the steps whose mask is set; all-zero when none is.
template <typename T>
std::vector<T> masked_mean(const Tensor2<T>& x, const std::vector<bool>& mask) {
  std::vector<T> out(x.cols(), T(0));
  std::size_t n = 0;
  for (std::size_t t = 0; t < x.rows(); ++t) {
    if (!mask[t]) continue;
    ++n;
    for (std::size_t k = 0; k < x.cols(); ++k) out[k] += x(t, k);
  }
  if (n)
    for (auto& v : out) v /= static_cast<T>(n);
  return out;
}

template <typename T>
Tensor2<T> masked_mean_backward(std::span<const T> dpooled, const std::vector<bool>& mask) {
  Tensor2<T> d(mask.size(), dpooled.size());
  const auto n = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  if (!n) return d;
  for (std::size_t t = 0; t < mask.size(); ++t)
    if (mask[t])
      for (std::size_t k = 0; k < dpooled.size(); ++k) d(t, k) = dpooled[k] / static_cast<T>(n);
  return d;
}

// ---------------------------------------------------------------------------
// Highway

template <typename T>
struct HighwayParams {
  Tensor2<T> w_h, b_h;  // transform path: D x D, 1 x D
  Tensor2<T> w_t, b_t;  // gate path:      D x D, 1 x D

  HighwayParams() = default;
  explicit HighwayParams(std::size_t d) : w_h(d, d), b_h(1, d), w_t(d, d), b_t(1, d) {}

  std::size_t dim() const noexcept { return w_h.rows(); }

  template <typename F>
  void visit(F&& f) {
    f("w_h", w_h);
    f("b_h", b_h);
    f("w_t", w_t);
    f("b_t", b_t);
  }
  template <typename F>
  void visit(F&& f) const {
    f("w_h", w_h);
    f("b_h", b_h);
    f("w_t", w_t);
    f("b_t", b_t);
  }
  friend bool operator==(const HighwayParams&, const HighwayParams&) = default;
};

template <typename T>
struct HighwayCache {
  Tensor2<T> x, t, h;
};

// y = t*relu(x W_h^T + b_h) + (1 - t)*x with t = sigmoid(x W_t^T + b_t).
template <typename T>
Tensor2<T> highway_forward(const Tensor2<T>& x, const HighwayParams<T>& p,
                           HighwayCache<T>* cache = nullptr) {
  const std::size_t D = p.dim();
  if (x.cols() != D || p.w_h.cols() != D || p.w_t.rows() != D || p.w_t.cols() != D ||
      p.b_h.cols() != D || p.b_t.cols() != D)
    throw ShapeError("highway_forward: x " + shape_str(x.rows(), x.cols()) + " vs D=" +
                     std::to_string(D));
  Tensor2<T> t = dense_forward(x, p.w_t, p.b_t, Activation::sigmoid);
  Tensor2<T> h = dense_forward(x, p.w_h, p.b_h, Activation::relu);
  Tensor2<T> y(x.rows(), D);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const T g = t.data()[i];
    y.data()[i] = g * h.data()[i] + (T(1) - g) * x.data()[i];
  }
  if (cache) *cache = {x, std::move(t), std::move(h)};
  return y;
}

template <typename T>
Tensor2<T> highway_backward(const HighwayParams<T>& p, const HighwayCache<T>& cache,
                            const Tensor2<T>& dy, HighwayParams<T>& grad) {
  const std::size_t n = dy.size();
  Tensor2<T> dt(dy.rows(), dy.cols()), dh(dy.rows(), dy.cols()), dx(dy.rows(), dy.cols());
  for (std::size_t i = 0; i < n; ++i) {
    const T g = cache.t.data()[i];
    dt.data()[i] = dy.data()[i] * (cache.h.data()[i] - cache.x.data()[i]);
    dh.data()[i] = dy.data()[i] * g;
    dx.data()[i] = dy.data()[i] * (T(1) - g);
  }
  auto gt = dense_backward(cache.x, p.w_t, cache.t, dt, Activation::sigmoid);
  auto gh = dense_backward(cache.x, p.w_h, cache.h, dh, Activation::relu);
  for (std::size_t i = 0; i < n; ++i) dx.data()[i] += gt.dx.data()[i] + gh.dx.data()[i];
  auto add = [](Tensor2<T>& acc, const Tensor2<T>& v) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc.data()[i] += v.data()[i];
  };
  add(grad.w_t, gt.dw);
  add(grad.b_t, gt.db);
  add(grad.w_h, gh.dw);
  add(grad.b_h, gh.db);
  return dx;
}

// ---------------------------------------------------------------------------
// Losses

template <typename T>
struct LossResult {
  T loss = T(0);
  std::vector<T> grad;  // w.r.t. logits (BCE) or predictions (MSE)
};

// Mean binary cross-entropy on logits with the sigmoid fused in.
template <typename T>
LossResult<T> bce_with_logits(std::span<const T> logits, std::span<const T> labels) {
  if (logits.size() != labels.size()) throw ShapeError("bce_loss: length mismatch");
  const std::size_t B = logits.size();
  LossResult<T> r;
  r.grad.resize(B);
  if (B == 0) return r;
  for (std::size_t i = 0; i < B; ++i) {
    const T z = logits[i], y = labels[i];
    // max(z,0) - z*y + log(1 + exp(-|z|))
    r.loss += std::max(z, T(0)) - z * y + std::log1p(std::exp(-std::fabs(z)));
    r.grad[i] = (sigmoid(z) - y) / static_cast<T>(B);
  }
  r.loss /= static_cast<T>(B);
  return r;
}

template <typename T>
LossResult<T> mse_loss(std::span<const T> pred, std::span<const T> target) {
  if (pred.size() != target.size()) throw ShapeError("mse_loss: length mismatch");
  const std::size_t B = pred.size();
  LossResult<T> r;
  r.grad.resize(B);
  if (B == 0) return r;
  for (std::size_t i = 0; i < B; ++i) {
    const T d = pred[i] - target[i];
    r.loss += d * d;
    r.grad[i] = T(2) * d / static_cast<T>(B);
  }
  r.loss /= static_cast<T>(B);
  return r;
}

// ---------------------------------------------------------------------------
// Adam

template <typename T>
struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t t = 0;
  std::vector<Tensor2<T>> m, v;
};

template <typename T>
struct ParamRef {
  std::string name;
  Tensor2<T>* param;
  const Tensor2<T>* grad;
};

// One bias-corrected Adam update over every (param, grad) pair. Moment
// buffers are created on the first call.
template <typename T>
void adam_step(std::span<const ParamRef<T>> params, AdamState<T>& state) {
  for (const auto& p : params) {
    if (!p.param->same_shape(*p.grad))
      throw ShapeError("adam_step: gradient shape mismatch for " + p.name);
    for (T g : p.grad->data())
      if (!std::isfinite(g)) throw Error("adam_step: non-finite gradient in " + p.name);
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.param->rows(), p.param->cols());
      state.v.emplace_back(p.param->rows(), p.param->cols());
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: parameter count changed");
  ++state.t;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  const T b1 = static_cast<T>(state.beta1), b2 = static_cast<T>(state.beta2);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& theta = params[k].param->data();
    const auto& g = params[k].grad->data();
    auto& m = state.m[k].data();
    auto& v = state.v[k].data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const double mhat = static_cast<double>(m[i]) / bc1;
      const double vhat = static_cast<double>(v[i]) / bc2;
      theta[i] -= static_cast<T>(state.lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

// ---------------------------------------------------------------------------
// Initialisation

template <typename T, typename Rng>
void init_uniform(Tensor2<T>& t, double k, Rng& rng) {
  std::uniform_real_distribution<double> dist(-k, k);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
}

inline double fan_in_bound(std::size_t fan_in) {
  return 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
}

// Uniform(-1/sqrt(fan_in), +) weights; forget-gate bias slice set to 1.
template <typename T, typename Rng>
void init_lstm(LstmLayerParams<T>& p, Rng& rng) {
  init_uniform(p.w_ih, fan_in_bound(p.input()), rng);
  init_uniform(p.w_hh, fan_in_bound(p.hidden()), rng);
  init_uniform(p.b, fan_in_bound(p.hidden()), rng);
  const std::size_t H = p.hidden();
  for (std::size_t k = 0; k < H; ++k) p.b(0, H + k) = T(1);
}

// Gate bias starts at -1 so a fresh layer is close to the identity.
template <typename T, typename Rng>
void init_highway(HighwayParams<T>& p, Rng& rng) {
  const double k = fan_in_bound(p.dim());
  init_uniform(p.w_h, k, rng);
  init_uniform(p.b_h, k, rng);
  init_uniform(p.w_t, k, rng);
  p.b_t.fill(T(-1));
}

}  // namespace mgf::nn
