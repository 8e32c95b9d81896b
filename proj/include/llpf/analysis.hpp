#pragma once

// Path validation and premise checks: rolling averages, interpolation
// continuity between stored path points, metric tables and seed studies.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "llpf/dataset.hpp"
#include "llpf/engine.hpp"
#include "llpf/llpf.hpp"
#include "llpf/table.hpp"

namespace llpf {

// out[i] = mean(series[max(0, i - window + 1) ..= i]).
std::vector<double> rolling_average(std::span<const double> series, std::size_t window);

template <std::floating_point T>
struct StoredPoint {
  std::size_t iteration = 0;
  ModelState<T> state;
};

// Points of a record that carry full parameters, in path order.
template <std::floating_point T>
std::vector<StoredPoint<T>> stored_points(const PathRecord<T>& path);

struct SegmentReport {
  std::size_t from_iteration = 0;
  std::size_t to_iteration = 0;
  std::vector<double> losses;  // one per alpha in [0, 1]
  double max_loss = 0.0;
};

struct ContinuityReport {
  std::size_t samples = 0;
  std::vector<SegmentReport> segments;
  double global_max_loss = 0.0;
  // Largest loss at the stored points themselves (alpha = 0 or 1).
  double pointwise_max_loss = 0.0;
};

struct ContinuityOptions {
  std::size_t samples = 50;
  // Seeded training subset shared by every alpha; 0 or full_train uses all.
  std::size_t eval_samples = 2048;
  bool full_train = false;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

// Training loss along theta(alpha) = (1 - alpha) P_t + alpha P_{t+1} for
// every consecutive pair of stored points. Batch-norm running statistics are
// interpolated the same way.
template <std::floating_point T>
ContinuityReport interpolation_continuity(const ModelGraph& graph,
                                          std::span<const StoredPoint<T>> points,
                                          const Dataset& train, const ContinuityOptions& options);

Table continuity_table(const ContinuityReport& report);

// One row per path point: iteration, phase, rolling_train_loss, one
// dist:<slice> column per slice (sorted), test_loss, test_acc, then stage,
// train_loss, eval_loss, eval_acc, train_rounds, capped and lr:<slice>.
template <std::floating_point T>
Table path_metrics(const PathRecord<T>& path);

struct SeedEntry {
  std::uint64_t seed = 0;
  bool accepted = true;
  std::size_t rounds = 0;
  double rolling_loss = 0.0;
  std::map<std::string, LayerStats> stats;  // per slice key
};

struct SliceSummary {
  std::string key;
  ParamKind kind = ParamKind::weight;
  double mean_variance = 0.0;
  // Sample std / mean of the variance across accepted seeds.
  double variance_cov = 0.0;
  // max over seeds of |mean| / sqrt(variance).
  double max_mean_over_std = 0.0;
};

struct SeedStudyTable {
  std::vector<SeedEntry> seeds;
  // Non-normalization slices only.
  std::vector<SliceSummary> summary;
  std::vector<std::string> warnings;
};

struct SeedStudyOptions {
  TrainerConfig trainer;
  StopRule rule;
  // Skip training and tabulate the initial parameters.
  bool train = true;
  // Rolling training loss a mode must reach to enter the summary.
  double accept_loss = 0.05;
  std::size_t jobs = 1;
  // Store and train in double instead of float.
  bool wide = false;
  TrainOptions train_options;
};

// Trains one mode per seed (init seed = seed, batch stream derived from it)
// and tabulates per-slice variance and mean.
SeedStudyTable seed_variance_study(const ModelGraph& graph, std::span<const std::uint64_t> seeds,
                                   const Dataset& train, const SeedStudyOptions& options);

// Per (seed, slice) statistics.
Table seed_study_table(const SeedStudyTable& study);
// Per-slice summary across accepted seeds.
Table seed_summary_table(const SeedStudyTable& study);

struct AggregateRow {
  std::size_t iteration = 0;
  double mean = 0.0;
  double std = 0.0;  // population std across runs present at this iteration
  std::size_t count = 0;
};

// Mean and spread across repetitions, keyed by iteration.
std::vector<AggregateRow> aggregate_by_iteration(
    std::span<const std::vector<std::pair<std::size_t, double>>> runs);

}  // namespace llpf
