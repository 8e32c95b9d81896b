#include "llpf/engine.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

namespace llpf {

template <std::floating_point T>
BasicParamVector<T> init_params(const ModelGraph& graph, std::uint64_t seed) {
  BasicParamVector<T> p(graph.param_layout());
  Rng rng(seed);
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const auto& L = graph.layer(i);
    if (!graph.trainable(i)) continue;
    const Shape in = graph.in_shape(i);
    auto w = p.slice(graph.weight_slice(i));
    auto b = p.slice(graph.bias_slice(i));
    if (L.kind == LayerKind::batch_norm) {
      std::fill(w.begin(), w.end(), T(1));
      std::fill(b.begin(), b.end(), T(0));
      continue;
    }
    const double fan_in = L.kind == LayerKind::dense
                              ? static_cast<double>(in.size())
                              : static_cast<double>(in.channels) * L.kernel * L.kernel;
    const double bound = std::sqrt(6.0 / fan_in);
    for (auto& x : w) x = static_cast<T>(uniform(rng, -bound, bound));
    std::fill(b.begin(), b.end(), T(0));
  }
  return p;
}

template <std::floating_point T>
std::vector<T> init_buffers(const ModelGraph& graph) {
  std::vector<T> buf(graph.buffer_size(), T(0));
  for (std::size_t i = 0; i < graph.size(); ++i) {
    if (graph.layer(i).kind != LayerKind::batch_norm) continue;
    const auto c = static_cast<std::size_t>(graph.in_shape(i).channels);
    const auto off = graph.buffer_offset(i);
    std::fill(buf.begin() + off + c, buf.begin() + off + 2 * c, T(1));
  }
  return buf;
}

template <std::floating_point T>
Executor<T>::Executor(const ModelGraph& graph)
    : graph_(graph),
      acts_(graph.size()),
      grads_(graph.size()),
      bn_mean_(graph.size()),
      bn_invstd_(graph.size()),
      bn_xhat_(graph.size()),
      argmax_(graph.size()) {}

template <std::floating_point T>
void Executor<T>::resize(std::size_t n) {
  if (n == n_) return;
  n_ = n;
  input_.resize(n * graph_.input_shape().size());
  for (std::size_t i = 0; i < graph_.size(); ++i) {
    acts_[i].resize(n * graph_.out_shape(i).size());
    const auto kind = graph_.layer(i).kind;
    if (kind == LayerKind::batch_norm) bn_xhat_[i].resize(acts_[i].size());
    if (kind == LayerKind::max_pool) argmax_[i].resize(acts_[i].size());
  }
}

template <std::floating_point T>
std::span<const T> Executor<T>::input_of(std::size_t layer, std::size_t which) const {
  const auto ins = graph_.input_indices(layer);
  if (ins.empty()) return input_;
  return acts_[ins[which]];
}

template <std::floating_point T>
std::span<const T> Executor<T>::forward(const BasicParamVector<T>& params, const Batch& batch,
                                        RunMode mode, std::span<T> buffers) {
  if (params.layout() != *graph_.param_layout()) throw ValidationError("layout mismatch");
  if (batch.shape != graph_.input_shape()) {
    throw ValidationError("batch shape " + to_string(batch.shape) + " does not match model input " +
                          to_string(graph_.input_shape()));
  }
  if (batch.size == 0 || batch.inputs.size() != batch.size * batch.shape.size()) {
    throw ValidationError("malformed batch");
  }
  if (!buffers.empty() && buffers.size() != graph_.buffer_size()) {
    throw ValidationError("running statistics do not match model");
  }
  if (mode == RunMode::eval && buffers.empty() && graph_.buffer_size() > 0) {
    throw ValidationError("eval mode needs batch-norm running statistics");
  }
  const std::size_t n = batch.size;
  resize(n);
  std::copy(batch.inputs.begin(), batch.inputs.end(), input_.begin());

  for (std::size_t li = 0; li < graph_.size(); ++li) {
    const auto& L = graph_.layer(li);
    const Shape is = graph_.in_shape(li);
    const Shape os = graph_.out_shape(li);
    const auto x = input_of(li);
    auto& y = acts_[li];
    switch (L.kind) {
      case LayerKind::dense: {
        const auto w = params.slice(graph_.weight_slice(li));
        const auto b = params.slice(graph_.bias_slice(li));
        const std::size_t in = is.size(), out = os.size();
        for (std::size_t s = 0; s < n; ++s) {
          const T* xs = x.data() + s * in;
          T* ys = y.data() + s * out;
          for (std::size_t o = 0; o < out; ++o) {
            const T* wo = w.data() + o * in;
            T acc = b[o];
            for (std::size_t i = 0; i < in; ++i) acc += wo[i] * xs[i];
            ys[o] = acc;
          }
        }
        break;
      }
      case LayerKind::conv2d: {
        const auto w = params.slice(graph_.weight_slice(li));
        const auto b = params.slice(graph_.bias_slice(li));
        const int K = L.kernel, S = L.stride, P = L.padding;
        for (std::size_t s = 0; s < n; ++s) {
          const T* xs = x.data() + s * is.size();
          T* ys = y.data() + s * os.size();
          for (int oc = 0; oc < os.channels; ++oc) {
            for (int oy = 0; oy < os.height; ++oy) {
              for (int ox = 0; ox < os.width; ++ox) {
                T acc = b[oc];
                for (int ic = 0; ic < is.channels; ++ic) {
                  const T* wk = w.data() + (static_cast<std::size_t>(oc) * is.channels + ic) * K * K;
                  const T* xc = xs + static_cast<std::size_t>(ic) * is.height * is.width;
                  for (int ky = 0; ky < K; ++ky) {
                    const int iy = oy * S - P + ky;
                    if (iy < 0 || iy >= is.height) continue;
                    for (int kx = 0; kx < K; ++kx) {
                      const int ix = ox * S - P + kx;
                      if (ix < 0 || ix >= is.width) continue;
                      acc += wk[ky * K + kx] * xc[iy * is.width + ix];
                    }
                  }
                }
                ys[(static_cast<std::size_t>(oc) * os.height + oy) * os.width + ox] = acc;
              }
            }
          }
        }
        break;
      }
      case LayerKind::batch_norm: {
        const auto gamma = params.slice(graph_.weight_slice(li));
        const auto beta = params.slice(graph_.bias_slice(li));
        const std::size_t C = is.channels, hw = static_cast<std::size_t>(is.height) * is.width;
        const double m = static_cast<double>(n * hw);
        auto& mean = bn_mean_[li];
        auto& invstd = bn_invstd_[li];
        mean.assign(C, 0.0);
        invstd.assign(C, 0.0);
        const std::size_t off = graph_.buffer_offset(li);
        for (std::size_t c = 0; c < C; ++c) {
          double mu, var;
          if (mode == RunMode::train) {
            double sum = 0;
            for (std::size_t s = 0; s < n; ++s) {
              const T* xc = x.data() + (s * C + c) * hw;
              for (std::size_t k = 0; k < hw; ++k) sum += xc[k];
            }
            mu = sum / m;
            double sq = 0;
            for (std::size_t s = 0; s < n; ++s) {
              const T* xc = x.data() + (s * C + c) * hw;
              for (std::size_t k = 0; k < hw; ++k) sq += (xc[k] - mu) * (xc[k] - mu);
            }
            var = sq / m;
            if (!buffers.empty()) {
              const double unbiased = m > 1 ? sq / (m - 1) : var;
              buffers[off + c] = static_cast<T>((1 - kBatchNormMomentum) * buffers[off + c] +
                                                kBatchNormMomentum * mu);
              buffers[off + C + c] = static_cast<T>(
                  (1 - kBatchNormMomentum) * buffers[off + C + c] + kBatchNormMomentum * unbiased);
            }
          } else {
            mu = buffers[off + c];
            var = buffers[off + C + c];
          }
          mean[c] = mu;
          invstd[c] = 1.0 / std::sqrt(var + kBatchNormEps);
          for (std::size_t s = 0; s < n; ++s) {
            const std::size_t base = (s * C + c) * hw;
            for (std::size_t k = 0; k < hw; ++k) {
              const T xh = static_cast<T>((x[base + k] - mu) * invstd[c]);
              bn_xhat_[li][base + k] = xh;
              y[base + k] = gamma[c] * xh + beta[c];
            }
          }
        }
        break;
      }
      case LayerKind::relu:
        for (std::size_t k = 0; k < y.size(); ++k) y[k] = x[k] > T(0) ? x[k] : T(0);
        break;
      case LayerKind::max_pool:
      case LayerKind::avg_pool: {
        const bool global = L.kernel == 0;
        const int KH = global ? is.height : L.kernel;
        const int KW = global ? is.width : L.kernel;
        const int S = global ? 1 : L.stride;
        const bool is_max = L.kind == LayerKind::max_pool;
        const T inv = T(1) / static_cast<T>(KH * KW);
        for (std::size_t s = 0; s < n; ++s) {
          for (int c = 0; c < is.channels; ++c) {
            const std::size_t in_base = (s * is.channels + c) * is.height * is.width;
            const std::size_t out_base = (s * os.channels + c) * os.height * os.width;
            for (int oy = 0; oy < os.height; ++oy) {
              for (int ox = 0; ox < os.width; ++ox) {
                const std::size_t o = out_base + static_cast<std::size_t>(oy) * os.width + ox;
                T best = -std::numeric_limits<T>::infinity();
                std::uint32_t best_at = 0;
                T acc = 0;
                for (int ky = 0; ky < KH; ++ky) {
                  for (int kx = 0; kx < KW; ++kx) {
                    const auto at = static_cast<std::uint32_t>((oy * S + ky) * is.width + ox * S + kx);
                    const T v = x[in_base + at];
                    acc += v;
                    if (v > best) {
                      best = v;
                      best_at = at;
                    }
                  }
                }
                if (is_max) {
                  y[o] = best;
                  argmax_[li][o] = best_at;
                } else {
                  y[o] = acc * inv;
                }
              }
            }
          }
        }
        break;
      }
      case LayerKind::flatten:
        std::copy(x.begin(), x.end(), y.begin());
        break;
      case LayerKind::residual_add: {
        const auto x2 = input_of(li, 1);
        for (std::size_t k = 0; k < y.size(); ++k) y[k] = x[k] + x2[k];
        break;
      }
    }
  }
  return acts_.back();
}

template <std::floating_point T>
double Executor<T>::loss(std::span<const std::int32_t> labels) const {
  const auto& logits = acts_.back();
  const std::size_t C = graph_.out_shape(graph_.output_index()).size();
  double total = 0;
  for (std::size_t s = 0; s < n_; ++s) {
    const T* z = logits.data() + s * C;
    double zmax = z[0];
    for (std::size_t c = 1; c < C; ++c) zmax = std::max<double>(zmax, z[c]);
    double sum = 0;
    for (std::size_t c = 0; c < C; ++c) sum += std::exp(z[c] - zmax);
    total += std::log(sum) + zmax - z[labels[s]];
  }
  return total / static_cast<double>(n_);
}

template <std::floating_point T>
std::size_t Executor<T>::correct(std::span<const std::int32_t> labels) const {
  const auto& logits = acts_.back();
  const std::size_t C = graph_.out_shape(graph_.output_index()).size();
  std::size_t hits = 0;
  for (std::size_t s = 0; s < n_; ++s) {
    const T* z = logits.data() + s * C;
    const auto best = static_cast<std::int32_t>(std::max_element(z, z + C) - z);
    hits += best == labels[s] ? 1 : 0;
  }
  return hits;
}

template <std::floating_point T>
double Executor<T>::loss_and_grad(const BasicParamVector<T>& params, const Batch& batch,
                                  BasicParamVector<T>& grad, std::span<T> buffers) {
  forward(params, batch, RunMode::train, buffers);
  const std::size_t n = batch.size;
  const std::size_t C = graph_.out_shape(graph_.output_index()).size();
  const auto& logits = acts_.back();
  dlogits_.assign(n * C, 0.0);
  double total = 0;
  for (std::size_t s = 0; s < n; ++s) {
    const T* z = logits.data() + s * C;
    double zmax = z[0];
    for (std::size_t c = 1; c < C; ++c) zmax = std::max<double>(zmax, z[c]);
    double sum = 0;
    for (std::size_t c = 0; c < C; ++c) sum += std::exp(z[c] - zmax);
    const int y = batch.labels[s];
    total += std::log(sum) + zmax - z[y];
    for (std::size_t c = 0; c < C; ++c) {
      const double p = std::exp(z[c] - zmax) / sum;
      dlogits_[s * C + c] = (p - (static_cast<int>(c) == y ? 1.0 : 0.0)) / static_cast<double>(n);
    }
  }
  if (grad.empty() || grad.layout() != params.layout()) {
    grad = BasicParamVector<T>(params.layout_ptr());
  } else {
    std::fill(grad.data().begin(), grad.data().end(), T(0));
  }
  backward(params, grad);
  return total / static_cast<double>(n);
}

template <std::floating_point T>
void Executor<T>::backward(const BasicParamVector<T>& params, BasicParamVector<T>& grad) {
  const std::size_t n = n_;
  for (std::size_t i = 0; i < graph_.size(); ++i) {
    grads_[i].assign(acts_[i].size(), T(0));
  }
  {
    auto& g = grads_.back();
    for (std::size_t k = 0; k < g.size(); ++k) g[k] = static_cast<T>(dlogits_[k]);
  }
  // Accumulates into the gradient of input `which` of layer li; the network
  // input itself needs no gradient.
  auto input_grad = [&](std::size_t li, std::size_t which) -> T* {
    const auto ins = graph_.input_indices(li);
    if (ins.empty()) return nullptr;
    return grads_[ins[which]].data();
  };

  for (std::size_t li = graph_.size(); li-- > 0;) {
    const auto& L = graph_.layer(li);
    const Shape is = graph_.in_shape(li);
    const Shape os = graph_.out_shape(li);
    const auto x = input_of(li);
    const auto& dy = grads_[li];
    T* dx = input_grad(li, 0);
    switch (L.kind) {
      case LayerKind::dense: {
        const auto w = params.slice(graph_.weight_slice(li));
        auto dw = grad.slice(graph_.weight_slice(li));
        auto db = grad.slice(graph_.bias_slice(li));
        const std::size_t in = is.size(), out = os.size();
        for (std::size_t s = 0; s < n; ++s) {
          const T* xs = x.data() + s * in;
          const T* dys = dy.data() + s * out;
          T* dxs = dx ? dx + s * in : nullptr;
          for (std::size_t o = 0; o < out; ++o) {
            const T g = dys[o];
            if (g == T(0)) continue;
            db[o] += g;
            T* dwo = dw.data() + o * in;
            const T* wo = w.data() + o * in;
            for (std::size_t i = 0; i < in; ++i) dwo[i] += g * xs[i];
            if (dxs) {
              for (std::size_t i = 0; i < in; ++i) dxs[i] += g * wo[i];
            }
          }
        }
        break;
      }
      case LayerKind::conv2d: {
        const auto w = params.slice(graph_.weight_slice(li));
        auto dw = grad.slice(graph_.weight_slice(li));
        auto db = grad.slice(graph_.bias_slice(li));
        const int K = L.kernel, S = L.stride, P = L.padding;
        for (std::size_t s = 0; s < n; ++s) {
          const T* xs = x.data() + s * is.size();
          const T* dys = dy.data() + s * os.size();
          T* dxs = dx ? dx + s * is.size() : nullptr;
          for (int oc = 0; oc < os.channels; ++oc) {
            for (int oy = 0; oy < os.height; ++oy) {
              for (int ox = 0; ox < os.width; ++ox) {
                const T g = dys[(static_cast<std::size_t>(oc) * os.height + oy) * os.width + ox];
                if (g == T(0)) continue;
                db[oc] += g;
                for (int ic = 0; ic < is.channels; ++ic) {
                  const std::size_t wbase = (static_cast<std::size_t>(oc) * is.channels + ic) * K * K;
                  const std::size_t xbase = static_cast<std::size_t>(ic) * is.height * is.width;
                  for (int ky = 0; ky < K; ++ky) {
                    const int iy = oy * S - P + ky;
                    if (iy < 0 || iy >= is.height) continue;
                    for (int kx = 0; kx < K; ++kx) {
                      const int ix = ox * S - P + kx;
                      if (ix < 0 || ix >= is.width) continue;
                      const std::size_t xi = xbase + static_cast<std::size_t>(iy) * is.width + ix;
                      dw[wbase + ky * K + kx] += g * xs[xi];
                      if (dxs) dxs[xi] += g * w[wbase + ky * K + kx];
                    }
                  }
                }
              }
            }
          }
        }
        break;
      }
      case LayerKind::batch_norm: {
        const auto gamma = params.slice(graph_.weight_slice(li));
        auto dgamma = grad.slice(graph_.weight_slice(li));
        auto dbeta = grad.slice(graph_.bias_slice(li));
        const std::size_t C = is.channels, hw = static_cast<std::size_t>(is.height) * is.width;
        const double m = static_cast<double>(n * hw);
        const auto& xhat = bn_xhat_[li];
        for (std::size_t c = 0; c < C; ++c) {
          double sum_dy = 0, sum_dy_xhat = 0;
          for (std::size_t s = 0; s < n; ++s) {
            const std::size_t base = (s * C + c) * hw;
            for (std::size_t k = 0; k < hw; ++k) {
              sum_dy += dy[base + k];
              sum_dy_xhat += static_cast<double>(dy[base + k]) * xhat[base + k];
            }
          }
          dgamma[c] += static_cast<T>(sum_dy_xhat);
          dbeta[c] += static_cast<T>(sum_dy);
          if (!dx) continue;
          const double scale = gamma[c] * bn_invstd_[li][c] / m;
          for (std::size_t s = 0; s < n; ++s) {
            const std::size_t base = (s * C + c) * hw;
            for (std::size_t k = 0; k < hw; ++k) {
              dx[base + k] += static_cast<T>(
                  scale * (m * dy[base + k] - sum_dy - xhat[base + k] * sum_dy_xhat));
            }
          }
        }
        break;
      }
      case LayerKind::relu:
        if (dx) {
          for (std::size_t k = 0; k < dy.size(); ++k) {
            if (x[k] > T(0)) dx[k] += dy[k];
          }
        }
        break;
      case LayerKind::max_pool:
      case LayerKind::avg_pool: {
        if (!dx) break;
        const bool global = L.kernel == 0;
        const int KH = global ? is.height : L.kernel;
        const int KW = global ? is.width : L.kernel;
        const int S = global ? 1 : L.stride;
        const T inv = T(1) / static_cast<T>(KH * KW);
        for (std::size_t s = 0; s < n; ++s) {
          for (int c = 0; c < is.channels; ++c) {
            const std::size_t in_base = (s * is.channels + c) * is.height * is.width;
            const std::size_t out_base = (s * os.channels + c) * os.height * os.width;
            for (int oy = 0; oy < os.height; ++oy) {
              for (int ox = 0; ox < os.width; ++ox) {
                const std::size_t o = out_base + static_cast<std::size_t>(oy) * os.width + ox;
                if (L.kind == LayerKind::max_pool) {
                  dx[in_base + argmax_[li][o]] += dy[o];
                } else {
                  const T g = dy[o] * inv;
                  for (int ky = 0; ky < KH; ++ky) {
                    for (int kx = 0; kx < KW; ++kx) {
                      dx[in_base + (oy * S + ky) * is.width + ox * S + kx] += g;
                    }
                  }
                }
              }
            }
          }
        }
        break;
      }
      case LayerKind::flatten:
        if (dx) {
          for (std::size_t k = 0; k < dy.size(); ++k) dx[k] += dy[k];
        }
        break;
      case LayerKind::residual_add: {
        T* dx2 = input_grad(li, 1);
        for (std::size_t k = 0; k < dy.size(); ++k) {
          if (dx) dx[k] += dy[k];
          if (dx2) dx2[k] += dy[k];
        }
        break;
      }
    }
  }
}

template <std::floating_point T>
std::vector<T> forward(const ModelGraph& graph, const BasicParamVector<T>& params,
                       const Batch& batch, RunMode mode, std::span<T> buffers) {
  Executor<T> ex(graph);
  auto logits = ex.forward(params, batch, mode, buffers);
  return std::vector<T>(logits.begin(), logits.end());
}

template <std::floating_point T>
LossGrad<T> loss_and_grad(const ModelGraph& graph, const BasicParamVector<T>& params,
                          const Batch& batch) {
  Executor<T> ex(graph);
  LossGrad<T> out;
  out.loss = ex.loss_and_grad(params, batch, out.grad);
  return out;
}

void TrainerConfig::validate() const {
  if (!(learning_rate > 0)) throw ValidationError("learning rate must be > 0");
  if (!(momentum >= 0 && momentum < 1)) throw ValidationError("momentum must be in [0, 1)");
  if (!(weight_decay >= 0)) throw ValidationError("weight decay must be >= 0");
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
}

void StopRule::validate() const {
  if (window < 1) throw ValidationError("stop rule window must be >= 1");
  if (max_rounds < 1) throw ValidationError("stop rule max_rounds must be >= 1");
}

template <std::floating_point T>
void sgd_step(BasicParamVector<T>& params, const BasicParamVector<T>& grad,
              const TrainerConfig& cfg, SgdState<T>& state, std::span<const double> slice_lr) {
  require_compatible(params, grad);
  const auto& slices = params.layout().slices();
  if (!slice_lr.empty() && slice_lr.size() != slices.size()) {
    throw ValidationError("per-slice learning rates do not match layout");
  }
  if (cfg.momentum > 0 && state.velocity.size() != params.size()) {
    state.velocity.assign(params.size(), T(0));
  }
  auto p = params.data();
  const auto g = grad.data();
  for (std::size_t si = 0; si < slices.size(); ++si) {
    const double lr = slice_lr.empty() ? cfg.learning_rate : slice_lr[si];
    if (lr == 0.0) continue;
    const auto& s = slices[si];
    for (std::size_t k = s.offset; k < s.offset + s.length; ++k) {
      T step = g[k];
      if (cfg.weight_decay > 0) step += static_cast<T>(cfg.weight_decay) * p[k];
      if (cfg.momentum > 0) {
        state.velocity[k] = static_cast<T>(cfg.momentum) * state.velocity[k] + step;
        step = state.velocity[k];
      }
      p[k] -= static_cast<T>(lr) * step;
    }
  }
}

template <std::floating_point T>
TrainResult<T> train_until(const ModelGraph& graph, ModelState<T> state, const Dataset& data,
                           const TrainerConfig& cfg, const StopRule& rule, Rng& rng,
                           const TrainOptions& options) {
  cfg.validate();
  rule.validate();
  if (data.empty()) throw ValidationError("empty training set");
  Executor<T> ex(graph);
  SgdState<T> sgd;
  BasicParamVector<T> grad(state.params.layout_ptr());
  std::vector<std::size_t> idx(cfg.batch_size);
  std::deque<double> window;
  double window_sum = 0;
  double total = 0;
  TrainResult<T> out;
  const std::size_t stride = data.sample_shape.size();
  for (std::size_t round = 1;; ++round) {
    for (auto& i : idx) i = uniform_index(rng, data.size());
    Batch batch = make_batch(data, idx);
    if (options.augment) {
      for (std::size_t k = 0; k < batch.size; ++k) {
        options.augment(std::span<float>(batch.inputs).subspan(k * stride, stride), rng);
      }
    }
    const double loss = ex.loss_and_grad(state.params, batch, grad, state.buffers);
    sgd_step(state.params, grad, cfg, sgd, options.slice_lr);
    if (options.on_step) options.on_step(round, loss);

    total += loss;
    window.push_back(loss);
    window_sum += loss;
    if (window.size() > rule.window) {
      window_sum -= window.front();
      window.pop_front();
    }
    const double rolling = window_sum / static_cast<double>(window.size());
    const bool converged = round >= rule.window && rolling < rule.loss_threshold;
    if (converged || round >= rule.max_rounds) {
      out.rounds = round;
      out.rolling_loss = rolling;
      out.mean_loss = total / static_cast<double>(round);
      out.capped = !converged && rule.loss_threshold > 0;
      break;
    }
  }
  out.state = std::move(state);
  return out;
}

template <std::floating_point T>
EvalResult evaluate(const ModelGraph& graph, const ModelState<T>& state, const Dataset& data) {
  if (data.empty()) throw ValidationError("empty dataset");
  constexpr std::size_t kChunk = 512;
  Executor<T> ex(graph);
  auto buffers = state.buffers;
  double loss_sum = 0;
  std::size_t hits = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t stop = std::min(data.size(), start + kChunk);
    idx.resize(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    const Batch batch = make_batch(data, idx);
    ex.forward(state.params, batch, RunMode::eval, buffers);
    loss_sum += ex.loss(batch.labels) * static_cast<double>(batch.size);
    hits += ex.correct(batch.labels);
  }
  const auto n = static_cast<double>(data.size());
  return {loss_sum / n, static_cast<double>(hits) / n};
}

#define LLPF_INSTANTIATE(T)                                                                      \
  template BasicParamVector<T> init_params<T>(const ModelGraph&, std::uint64_t);                 \
  template std::vector<T> init_buffers<T>(const ModelGraph&);                                    \
  template class Executor<T>;                                                                    \
  template std::vector<T> forward<T>(const ModelGraph&, const BasicParamVector<T>&,              \
                                     const Batch&, RunMode, std::span<T>);                       \
  template LossGrad<T> loss_and_grad<T>(const ModelGraph&, const BasicParamVector<T>&,           \
                                        const Batch&);                                           \
  template void sgd_step<T>(BasicParamVector<T>&, const BasicParamVector<T>&,                    \
                            const TrainerConfig&, SgdState<T>&, std::span<const double>);        \
  template TrainResult<T> train_until<T>(const ModelGraph&, ModelState<T>, const Dataset&,       \
                                         const TrainerConfig&, const StopRule&, Rng&,            \
                                         const TrainOptions&);                                   \
  template EvalResult evaluate<T>(const ModelGraph&, const ModelState<T>&, const Dataset&);

LLPF_INSTANTIATE(float)
LLPF_INSTANTIATE(double)

#undef LLPF_INSTANTIATE

}  // namespace llpf
