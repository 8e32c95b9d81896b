#include "llpf/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

namespace llpf {

std::vector<double> rolling_average(std::span<const double> series, std::size_t window) {
  if (window < 1) throw ValidationError("window must be >= 1");
  std::vector<double> out(series.size());
  double sum = 0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    sum += series[i];
    if (i >= window) sum -= series[i - window];
    out[i] = sum / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

template <std::floating_point T>
std::vector<StoredPoint<T>> stored_points(const PathRecord<T>& path) {
  std::vector<StoredPoint<T>> out;
  for (const auto& pt : path.points) {
    if (pt.state) out.push_back({pt.iteration, *pt.state});
  }
  return out;
}

namespace {

template <std::floating_point T>
void lerp(std::span<const T> a, std::span<const T> b, double alpha, std::span<T> out) {
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = static_cast<T>((1.0 - alpha) * a[k] + alpha * b[k]);
  }
}

}  // namespace

template <std::floating_point T>
ContinuityReport interpolation_continuity(const ModelGraph& graph,
                                          std::span<const StoredPoint<T>> points,
                                          const Dataset& train, const ContinuityOptions& options) {
  if (options.samples < 2) throw ValidationError("continuity needs at least 2 samples");
  if (points.size() < 2) throw ValidationError("continuity needs at least 2 stored path points");
  const Dataset eval =
      options.full_train || options.eval_samples == 0
          ? train
          : train.subset(sample_indices(train.size(), options.eval_samples,
                                        derive_seed(options.seed, 41)));

  ContinuityReport report;
  report.samples = options.samples;
  report.segments.resize(points.size() - 1);
  parallel_for(report.segments.size(), options.jobs, [&](std::size_t s) {
    const auto& a = points[s].state;
    const auto& b = points[s + 1].state;
    require_compatible(a.params, b.params);
    ModelState<T> mid = a;
    auto& seg = report.segments[s];
    seg.from_iteration = points[s].iteration;
    seg.to_iteration = points[s + 1].iteration;
    seg.losses.resize(options.samples);
    for (std::size_t k = 0; k < options.samples; ++k) {
      const double alpha = static_cast<double>(k) / static_cast<double>(options.samples - 1);
      lerp<T>(a.params.data(), b.params.data(), alpha, mid.params.data());
      lerp<T>(a.buffers, b.buffers, alpha, mid.buffers);
      seg.losses[k] = evaluate<T>(graph, mid, eval).loss;
    }
    seg.max_loss = *std::max_element(seg.losses.begin(), seg.losses.end());
  });
  report.global_max_loss = 0;
  report.pointwise_max_loss = 0;
  for (const auto& seg : report.segments) {
    report.global_max_loss = std::max(report.global_max_loss, seg.max_loss);
    report.pointwise_max_loss =
        std::max({report.pointwise_max_loss, seg.losses.front(), seg.losses.back()});
  }
  return report;
}

Table continuity_table(const ContinuityReport& report) {
  Table t;
  t.columns = {"segment", "from_iteration", "to_iteration", "alpha", "train_loss"};
  for (std::size_t s = 0; s < report.segments.size(); ++s) {
    const auto& seg = report.segments[s];
    for (std::size_t k = 0; k < seg.losses.size(); ++k) {
      const double alpha = static_cast<double>(k) / static_cast<double>(seg.losses.size() - 1);
      t.rows.push_back({std::to_string(s), std::to_string(seg.from_iteration),
                        std::to_string(seg.to_iteration), format_double(alpha),
                        format_double(seg.losses[k])});
    }
  }
  return t;
}

template <std::floating_point T>
Table path_metrics(const PathRecord<T>& path) {
  Table t;
  if (path.points.empty()) return t;
  std::vector<std::string> dist_keys;
  std::vector<std::string> lr_keys;
  for (const auto& pt : path.points) {
    for (const auto& [k, v] : pt.distance) dist_keys.push_back(k);
    for (const auto& [k, v] : pt.learning_rate) lr_keys.push_back(k);
  }
  for (auto* keys : {&dist_keys, &lr_keys}) {
    std::sort(keys->begin(), keys->end());
    keys->erase(std::unique(keys->begin(), keys->end()), keys->end());
  }
  t.columns = {"iteration", "phase", "rolling_train_loss"};
  for (const auto& k : dist_keys) t.columns.push_back("dist:" + k);
  for (const char* c : {"test_loss", "test_acc", "stage", "train_loss", "eval_loss", "eval_acc",
                        "train_rounds", "capped"}) {
    t.columns.emplace_back(c);
  }
  for (const auto& k : lr_keys) t.columns.push_back("lr:" + k);

  auto lookup = [](const std::map<std::string, double>& m, const std::string& k) {
    const auto it = m.find(k);
    return it == m.end() ? std::string() : format_double(it->second);
  };
  for (const auto& pt : path.points) {
    std::vector<std::string> row = {std::to_string(pt.iteration), std::to_string(pt.phase),
                                    format_double(pt.rolling_train_loss)};
    for (const auto& k : dist_keys) row.push_back(lookup(pt.distance, k));
    row.push_back(format_double(pt.test_loss));
    row.push_back(format_double(pt.test_acc));
    row.push_back(std::to_string(pt.stage));
    row.push_back(format_double(pt.train_loss));
    row.push_back(format_double(pt.eval_loss));
    row.push_back(format_double(pt.eval_acc));
    row.push_back(std::to_string(pt.train_rounds));
    row.push_back(pt.capped ? "1" : "0");
    for (const auto& k : lr_keys) row.push_back(lookup(pt.learning_rate, k));
    t.rows.push_back(std::move(row));
  }
  return t;
}

SeedStudyTable seed_variance_study(const ModelGraph& graph, std::span<const std::uint64_t> seeds,
                                   const Dataset& train, const SeedStudyOptions& options) {
  if (seeds.size() < 2) throw ValidationError("seed study needs at least 2 seeds");
  if (options.train) {
    options.trainer.validate();
    options.rule.validate();
  }
  SeedStudyTable out;
  out.seeds.resize(seeds.size());
  auto run = [&]<std::floating_point T>(std::size_t i, T) {
    auto& e = out.seeds[i];
    e.seed = seeds[i];
    ModelState<T> state;
    if (options.train) {
      auto r = train_mode<T>(graph, seeds[i], train, options.trainer, options.rule,
                             options.train_options);
      e.rounds = r.rounds;
      e.rolling_loss = r.rolling_loss;
      e.accepted = r.rolling_loss < options.accept_loss;
      state = std::move(r.state);
    } else {
      state = init_state<T>(graph, seeds[i]);
    }
    const auto& slices = state.params.layout().slices();
    for (std::size_t si = 0; si < slices.size(); ++si) {
      e.stats[slices[si].key()] = layer_stats<T>(state.params.slice(si));
    }
  };
  parallel_for(seeds.size(), options.jobs, [&](std::size_t i) {
    if (options.wide) {
      run(i, 0.0);
    } else {
      run(i, 0.0f);
    }
  });
  for (const auto& e : out.seeds) {
    if (!e.accepted) {
      out.warnings.push_back("seed " + std::to_string(e.seed) + " excluded: rolling loss " +
                             format_double(e.rolling_loss) + " >= " +
                             format_double(options.accept_loss));
    }
  }

  for (const auto& s : graph.param_layout()->slices()) {
    if (is_norm(s.kind)) continue;
    SliceSummary sum;
    sum.key = s.key();
    sum.kind = s.kind;
    std::vector<double> vars;
    for (const auto& e : out.seeds) {
      if (!e.accepted) continue;
      const auto& st = e.stats.at(sum.key);
      vars.push_back(st.variance);
      const double ratio = st.variance > 0 ? std::abs(st.mean) / std::sqrt(st.variance)
                                           : (st.mean == 0 ? 0.0 : INFINITY);
      sum.max_mean_over_std = std::max(sum.max_mean_over_std, ratio);
    }
    if (!vars.empty()) {
      double mean = 0;
      for (double v : vars) mean += v;
      mean /= static_cast<double>(vars.size());
      double sq = 0;
      for (double v : vars) sq += (v - mean) * (v - mean);
      const double sd = vars.size() > 1 ? std::sqrt(sq / static_cast<double>(vars.size() - 1)) : 0;
      sum.mean_variance = mean;
      sum.variance_cov = mean > 0 ? sd / mean : 0.0;
    }
    out.summary.push_back(std::move(sum));
  }
  return out;
}

Table seed_study_table(const SeedStudyTable& study) {
  Table t;
  t.columns = {"seed", "slice", "variance", "mean", "n", "accepted", "rolling_loss"};
  for (const auto& e : study.seeds) {
    for (const auto& [key, st] : e.stats) {
      t.rows.push_back({std::to_string(e.seed), key, format_double(st.variance),
                        format_double(st.mean), std::to_string(st.n), e.accepted ? "1" : "0",
                        format_double(e.rolling_loss)});
    }
  }
  return t;
}

Table seed_summary_table(const SeedStudyTable& study) {
  Table t;
  t.columns = {"slice", "kind", "mean_variance", "variance_cov", "max_mean_over_std"};
  for (const auto& s : study.summary) {
    t.rows.push_back({s.key, std::string(to_string(s.kind)), format_double(s.mean_variance),
                      format_double(s.variance_cov), format_double(s.max_mean_over_std)});
  }
  return t;
}

std::vector<AggregateRow> aggregate_by_iteration(
    std::span<const std::vector<std::pair<std::size_t, double>>> runs) {
  std::map<std::size_t, std::vector<double>> by_iter;
  for (const auto& run : runs) {
    for (const auto& [it, v] : run) by_iter[it].push_back(v);
  }
  std::vector<AggregateRow> out;
  for (const auto& [it, vals] : by_iter) {
    AggregateRow row{it, 0.0, 0.0, vals.size()};
    for (double v : vals) row.mean += v;
    row.mean /= static_cast<double>(vals.size());
    for (double v : vals) row.std += (v - row.mean) * (v - row.mean);
    row.std = std::sqrt(row.std / static_cast<double>(vals.size()));
    out.push_back(row);
  }
  return out;
}

#define LLPF_INSTANTIATE(T)                                                                   \
  template std::vector<StoredPoint<T>> stored_points<T>(const PathRecord<T>&);                \
  template ContinuityReport interpolation_continuity<T>(                                      \
      const ModelGraph&, std::span<const StoredPoint<T>>, const Dataset&,                     \
      const ContinuityOptions&);                                                              \
  template Table path_metrics<T>(const PathRecord<T>&);

LLPF_INSTANTIATE(float)
LLPF_INSTANTIATE(double)

#undef LLPF_INSTANTIATE

}  // namespace llpf
