#pragma once

// Low-loss path search between modes on one variance sphere (M2M), toward the
// sphere center (M2O), and across spheres by chaining the two.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "llpf/dataset.hpp"
#include "llpf/engine.hpp"
#include "llpf/graph.hpp"
#include "llpf/param_space.hpp"

namespace llpf {

struct StepParams {
  double step_a = 0.0;  // per unit of remaining distance
  double step_c = 0.0;  // per unit of phase-start arc length
  double step_f = 0.0;  // fixed distance

  void validate() const;
};

struct Phase {
  std::string name;
  // Layer names whose slices move and train in this phase.
  std::vector<std::string> layers;
  std::size_t iterations = 0;
  StepParams step;
  StopRule stop;
};

struct PhasePlan {
  std::vector<Phase> phases;

  // Checks layer names against the graph and that the last phase covers
  // every trainable layer.
  void validate(const ModelGraph& graph) const;
  std::size_t total_iterations() const;
};

// Cumulative phases following data flow. Layers are grouped into blocks by
// the name prefix before the last '.', blocks are ordered topologically with
// ties broken by name, and a final phase spans every trainable layer.
PhasePlan fdf_phase_plan(const ModelGraph& graph, std::size_t iterations, const StepParams& step,
                         const StopRule& stop);

// Layer-name prefix used to group layers into FDF blocks.
std::string block_of(const std::string& layer);

template <std::floating_point T>
struct PathPoint {
  std::size_t iteration = 0;
  std::size_t phase = 0;
  int stage = 0;
  // Mean batch loss of this iteration's training rounds (the start point
  // uses its eval-mode loss on the evaluation subset).
  double train_loss = 0.0;
  double rolling_train_loss = 0.0;
  // Eval-mode loss and accuracy on the fixed evaluation subset.
  double eval_loss = 0.0;
  double eval_acc = 0.0;
  double test_loss = 0.0;
  double test_acc = 0.0;
  std::size_t train_rounds = 0;
  bool capped = false;
  // Per slice key: distance to the destination (norm for the origin).
  std::map<std::string, double> distance;
  // Per slice key: learning rate used by this iteration's training rounds.
  std::map<std::string, double> learning_rate;
  // Present on every checkpoint_stride-th point and on both endpoints.
  std::optional<ModelState<T>> state;
};

template <std::floating_point T>
struct PathRecord {
  std::vector<PathPoint<T>> points;
  std::string start_id;
  std::string destination_id;
  std::string config_hash;
  // Index of the first point of each stage after the first.
  std::vector<std::size_t> stage_starts;
  std::vector<std::string> warnings;
};

struct PathData {
  const Dataset* train = nullptr;
  const Dataset* test = nullptr;
};

struct SearchOptions {
  std::size_t checkpoint_stride = 10;
  std::size_t loss_window = 10;
  // Size of the seeded training subset used for eval-mode metrics.
  std::size_t eval_samples = 2048;
  // Size of the seeded test subset evaluated at each point; 0 means all.
  std::size_t test_samples = 0;
  std::uint64_t seed = 0;
  // Mode-acceptance bound on the eval-mode training loss. Negative means
  // the first phase's stop threshold, or 0.05 when that is zero.
  double accept_loss = -1.0;
  bool check_modes = true;
  double variance_ratio_lo = 2.0 / 3.0;
  double variance_ratio_hi = 1.5;
  // Applied to training samples during the path's training rounds.
  std::function<void(std::span<float>, Rng&)> augment;
  std::function<void(const std::string&)> on_warning;
  std::function<void(std::size_t, double)> on_point;
};

// Moves every active slice of `p` toward `d` by
// s = step_a * |d - p| + step_c * arc0 + step_f, never past d.
template <std::floating_point T>
BasicParamVector<T> move_toward(const BasicParamVector<T>& p, const BasicParamVector<T>& d,
                                const std::map<std::string, double>& arc0, const StepParams& step,
                                const std::set<std::string>& active_slices);

// Per-slice learning rates eta_base * Var(N_l) / v_base[l] with l the
// layer's weight slice, capped at eta_base. Norm slices and slices of layers
// without a base variance get 0.
template <std::floating_point T>
std::vector<double> angle_conformal(const BasicParamVector<T>& n,
                                    const std::map<std::string, double>& v_base, double eta_base);

template <std::floating_point T>
PathRecord<T> llpf_m2m(const ModelGraph& graph, const ModelState<T>& p0, const ModelState<T>& d,
                       const PhasePlan& plan, const TrainerConfig& trainer, const PathData& data,
                       const SearchOptions& options = {});

struct M2OConfig {
  double eta_base = 1e-3;
  std::size_t iterations = 0;
  StepParams step;
  StopRule stop;
  // Stop once the moved parameters' overall norm has shrunk by this factor;
  // 0 disables.
  double stop_shrink = 0.0;
};

// Per slice key, the variance the slice must reach before stage 1 of a
// cross-variance search ends.
struct VarianceGoal {
  std::map<std::string, double> target;
  double tolerance = 0.02;
};

template <std::floating_point T>
PathRecord<T> llpf_m2o(const ModelGraph& graph, const ModelState<T>& p0, const M2OConfig& cfg,
                       const TrainerConfig& trainer, const PathData& data,
                       const SearchOptions& options = {});

// M2O toward an arbitrary destination instead of the origin; stops early
// when `goal` is met. Used by connect_cross_variance.
template <std::floating_point T>
PathRecord<T> llpf_m2o_toward(const ModelGraph& graph, const ModelState<T>& p0,
                              const BasicParamVector<T>& destination, const M2OConfig& cfg,
                              const TrainerConfig& trainer, const PathData& data,
                              const SearchOptions& options, const VarianceGoal* goal);

// Projection of p onto the variance spheres of d: every slice whose variance
// exceeds the floor in both is rescaled to d's variance.
template <std::floating_point T>
BasicParamVector<T> project_to_spheres(const BasicParamVector<T>& p, const BasicParamVector<T>& d);

struct CrossVarianceConfig {
  M2OConfig m2o;
  PhasePlan plan;
  double tolerance = 0.02;
};

// Stage 1 collapses p toward its projection onto d's spheres, stage 2 runs
// M2M from the stage-1 endpoint to d.
template <std::floating_point T>
PathRecord<T> connect_cross_variance(const ModelGraph& graph, const ModelState<T>& p,
                                     const ModelState<T>& d, const CrossVarianceConfig& cfg,
                                     const TrainerConfig& trainer, const PathData& data,
                                     const SearchOptions& options = {});

// Keys of slices whose variance can be corrected: weight slices (not norm
// scales) with variance above the floor.
template <std::floating_point T>
std::map<std::string, double> correctable_variances(const BasicParamVector<T>& params);

}  // namespace llpf
