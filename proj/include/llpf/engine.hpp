#pragma once

// Forward/backward passes, initialization, SGD and the training loop used to
// produce modes and to run the Train^r step inside path finding.

#include <concepts>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "llpf/dataset.hpp"
#include "llpf/graph.hpp"
#include "llpf/param_space.hpp"
#include "llpf/util.hpp"

namespace llpf {

enum class RunMode { train, eval };

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// Trainable parameters plus batch-norm running statistics (empty when the
// graph has no batch_norm layer).
template <std::floating_point T>
struct ModelState {
  BasicParamVector<T> params;
  std::vector<T> buffers;

  bool operator==(const ModelState&) const = default;
};

// Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases and shifts,
// unit norm scales. Deterministic in `seed`.
template <std::floating_point T>
BasicParamVector<T> init_params(const ModelGraph& graph, std::uint64_t seed);

// Running means 0 and running variances 1.
template <std::floating_point T>
std::vector<T> init_buffers(const ModelGraph& graph);

template <std::floating_point T>
ModelState<T> init_state(const ModelGraph& graph, std::uint64_t seed) {
  return {init_params<T>(graph, seed), init_buffers<T>(graph)};
}

// Reusable forward/backward workspace for one graph. Not thread-safe; use one
// per worker.
template <std::floating_point T>
class Executor {
 public:
  explicit Executor(const ModelGraph& graph);

  // Logits, batch.size x num_classes. In train mode batch_norm uses batch
  // statistics and, when `buffers` is non-empty, updates the running ones.
  // In eval mode batch_norm reads `buffers`.
  std::span<const T> forward(const BasicParamVector<T>& params, const Batch& batch, RunMode mode,
                             std::span<T> buffers = {});

  // Mean cross-entropy of the most recent forward pass.
  double loss(std::span<const std::int32_t> labels) const;
  // Number of rows whose arg-max logit matches the label.
  std::size_t correct(std::span<const std::int32_t> labels) const;

  // Train-mode forward and backward; writes d(mean loss)/d(params) to grad.
  double loss_and_grad(const BasicParamVector<T>& params, const Batch& batch,
                       BasicParamVector<T>& grad, std::span<T> buffers = {});

  const ModelGraph& graph() const { return graph_; }

 private:
  void resize(std::size_t n);
  std::span<const T> input_of(std::size_t layer, std::size_t which = 0) const;
  void backward(const BasicParamVector<T>& params, BasicParamVector<T>& grad);

  const ModelGraph& graph_;
  std::size_t n_ = 0;
  std::vector<T> input_;
  std::vector<std::vector<T>> acts_;
  std::vector<std::vector<T>> grads_;
  std::vector<std::vector<double>> bn_mean_, bn_invstd_;
  std::vector<std::vector<T>> bn_xhat_;
  std::vector<std::vector<std::uint32_t>> argmax_;
  std::vector<double> dlogits_;
};

template <std::floating_point T>
std::vector<T> forward(const ModelGraph& graph, const BasicParamVector<T>& params,
                       const Batch& batch, RunMode mode, std::span<T> buffers = {});

template <std::floating_point T>
struct LossGrad {
  double loss = 0.0;
  BasicParamVector<T> grad;
};

// Train mode; running statistics are left untouched.
template <std::floating_point T>
LossGrad<T> loss_and_grad(const ModelGraph& graph, const BasicParamVector<T>& params,
                          const Batch& batch);

struct TrainerConfig {
  double learning_rate = 0.01;
  double momentum = 0.0;
  double weight_decay = 0.0;
  std::size_t batch_size = 64;

  void validate() const;
};

struct StopRule {
  double loss_threshold = 0.0;
  std::size_t max_rounds = 1;
  std::size_t window = 10;

  void validate() const;
};

template <std::floating_point T>
struct SgdState {
  std::vector<T> velocity;
};

// g' = grad + weight_decay * params; v = momentum * v + g';
// params -= lr * v. When `slice_lr` is non-empty it gives one learning rate
// per layout slice and replaces cfg.learning_rate; slices with rate 0 are
// left untouched (bit-identical).
template <std::floating_point T>
void sgd_step(BasicParamVector<T>& params, const BasicParamVector<T>& grad,
              const TrainerConfig& cfg, SgdState<T>& state, std::span<const double> slice_lr = {});

struct TrainOptions {
  // Per-slice learning rates (see sgd_step); empty means cfg.learning_rate.
  std::vector<double> slice_lr;
  // Applied to each gathered sample before the step.
  std::function<void(std::span<float>, Rng&)> augment;
  // Called after every step with (round, batch loss).
  std::function<void(std::size_t, double)> on_step;
};

template <std::floating_point T>
struct TrainResult {
  ModelState<T> state;
  std::size_t rounds = 0;
  double rolling_loss = 0.0;
  // Mean batch loss over all rounds.
  double mean_loss = 0.0;
  // Stopped at max_rounds with the rolling loss still above a positive
  // threshold. A zero threshold means "run exactly max_rounds".
  bool capped = false;
};

// SGD on batches drawn uniformly with replacement until the rolling-average
// loss over `window` steps drops below the threshold (checked once `window`
// steps have run) or `max_rounds` steps have run.
template <std::floating_point T>
TrainResult<T> train_until(const ModelGraph& graph, ModelState<T> state, const Dataset& data,
                           const TrainerConfig& cfg, const StopRule& rule, Rng& rng,
                           const TrainOptions& options = {});

// A mode: init_state(seed) trained with a batch stream derived from seed.
template <std::floating_point T>
TrainResult<T> train_mode(const ModelGraph& graph, std::uint64_t seed, const Dataset& data,
                          const TrainerConfig& cfg, const StopRule& rule,
                          const TrainOptions& options = {}) {
  Rng rng(derive_seed(seed, 1));
  return train_until<T>(graph, init_state<T>(graph, seed), data, cfg, rule, rng, options);
}

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Full-dataset mean loss and top-1 accuracy in eval mode.
template <std::floating_point T>
EvalResult evaluate(const ModelGraph& graph, const ModelState<T>& state, const Dataset& data);

template <std::floating_point T>
EvalResult evaluate(const ModelGraph& graph, const BasicParamVector<T>& params,
                    const Dataset& data) {
  return evaluate<T>(graph, ModelState<T>{params, init_buffers<T>(graph)}, data);
}

}  // namespace llpf
