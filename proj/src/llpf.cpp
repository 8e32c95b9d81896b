#include "llpf/llpf.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <queue>

namespace llpf {

void StepParams::validate() const {
  if (!(step_a >= 0 && step_c >= 0 && step_f >= 0)) {
    throw ValidationError("step coefficients must be >= 0");
  }
  if (step_a == 0 && step_c == 0 && step_f == 0) {
    throw ValidationError("at least one of step_a, step_c, step_f must be > 0");
  }
}

void PhasePlan::validate(const ModelGraph& graph) const {
  if (phases.empty()) throw ValidationError("phase plan is empty");
  const auto trainable = graph.trainable_layers();
  const std::set<std::string> known(trainable.begin(), trainable.end());
  for (const auto& ph : phases) {
    if (ph.layers.empty()) throw ValidationError("phase '" + ph.name + "' has no layers");
    for (const auto& l : ph.layers) {
      if (!known.contains(l)) {
        throw ValidationError("phase '" + ph.name + "' names unknown layer '" + l + "'");
      }
    }
    ph.step.validate();
    ph.stop.validate();
  }
  const std::set<std::string> last(phases.back().layers.begin(), phases.back().layers.end());
  if (last != known) throw ValidationError("last phase must cover every trainable layer");
}

std::size_t PhasePlan::total_iterations() const {
  std::size_t n = 0;
  for (const auto& p : phases) n += p.iterations;
  return n;
}

std::string block_of(const std::string& layer) {
  const auto dot = layer.rfind('.');
  return dot == std::string::npos ? layer : layer.substr(0, dot);
}

PhasePlan fdf_phase_plan(const ModelGraph& graph, std::size_t iterations, const StepParams& step,
                         const StopRule& stop) {
  // Blocks in first-appearance order, with the layers each one owns.
  std::vector<std::string> blocks;
  std::map<std::string, std::vector<std::string>> members;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const auto& name = graph.layer(i).name;
    const auto b = block_of(name);
    if (!members.contains(b)) blocks.push_back(b);
    members[b].push_back(name);
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t k = 0; k < blocks.size(); ++k) index[blocks[k]] = k;

  std::vector<std::set<std::size_t>> succ(blocks.size());
  std::vector<std::size_t> indeg(blocks.size(), 0);
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const auto to = index[block_of(graph.layer(i).name)];
    for (int src : graph.input_indices(i)) {
      const auto from = index[block_of(graph.layer(src).name)];
      if (from != to && succ[from].insert(to).second) ++indeg[to];
    }
  }
  auto by_name = [&](std::size_t a, std::size_t b) { return blocks[a] > blocks[b]; };
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(by_name)> ready(by_name);
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    if (indeg[k] == 0) ready.push(k);
  }
  std::vector<std::size_t> order;
  while (!ready.empty()) {
    const auto k = ready.top();
    ready.pop();
    order.push_back(k);
    for (auto s : succ[k]) {
      if (--indeg[s] == 0) ready.push(s);
    }
  }
  if (order.size() != blocks.size()) throw ValidationError("cyclic graph");

  PhasePlan plan;
  std::vector<std::string> active;
  for (auto k : order) {
    bool added = false;
    for (const auto& name : members[blocks[k]]) {
      if (graph.trainable(graph.index_of(name))) {
        active.push_back(name);
        added = true;
      }
    }
    if (added) plan.phases.push_back({blocks[k], active, iterations, step, stop});
  }
  plan.phases.push_back({"all", graph.trainable_layers(), iterations, step, stop});
  return plan;
}

template <std::floating_point T>
BasicParamVector<T> move_toward(const BasicParamVector<T>& p, const BasicParamVector<T>& d,
                                const std::map<std::string, double>& arc0, const StepParams& step,
                                const std::set<std::string>& active_slices) {
  require_compatible(p, d);
  BasicParamVector<T> out = p;
  const auto& slices = p.layout().slices();
  for (std::size_t si = 0; si < slices.size(); ++si) {
    const auto key = slices[si].key();
    if (!active_slices.contains(key)) continue;
    auto x = out.slice(si);
    const auto y = d.slice(si);
    long double sq = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      const long double diff = static_cast<long double>(y[k]) - x[k];
      sq += diff * diff;
    }
    const double dist = static_cast<double>(std::sqrt(sq));
    if (dist == 0.0) continue;
    const auto it = arc0.find(key);
    const double arc = it == arc0.end() ? 0.0 : it->second;
    const double s = step.step_a * dist + step.step_c * arc + step.step_f;
    if (s >= dist) {
      std::copy(y.begin(), y.end(), x.begin());
      continue;
    }
    const double frac = s / dist;
    for (std::size_t k = 0; k < x.size(); ++k) {
      x[k] = static_cast<T>(x[k] + frac * (static_cast<double>(y[k]) - x[k]));
    }
  }
  return out;
}

template <std::floating_point T>
std::vector<double> angle_conformal(const BasicParamVector<T>& n,
                                    const std::map<std::string, double>& v_base, double eta_base) {
  if (!(eta_base > 0)) throw ValidationError("eta_base must be > 0");
  const auto& slices = n.layout().slices();
  std::map<std::string, double> layer_rate;
  for (const auto& [key, v] : v_base) {
    if (!(v > 0)) throw ValidationError("base variance for '" + key + "' must be > 0");
    const auto& s = n.layout().at(key);
    const double w = layer_stats<T>(n.slice(key)).variance;
    layer_rate[s.layer] = std::min(eta_base, eta_base * w / v);
  }
  std::vector<double> lr(slices.size(), 0.0);
  for (std::size_t si = 0; si < slices.size(); ++si) {
    if (is_norm(slices[si].kind)) continue;
    const auto it = layer_rate.find(slices[si].layer);
    if (it != layer_rate.end()) lr[si] = it->second;
  }
  return lr;
}

template <std::floating_point T>
std::map<std::string, double> correctable_variances(const BasicParamVector<T>& params) {
  std::map<std::string, double> out;
  const auto& slices = params.layout().slices();
  for (std::size_t si = 0; si < slices.size(); ++si) {
    if (slices[si].kind != ParamKind::weight) continue;
    const double v = layer_stats<T>(params.slice(si)).variance;
    if (v > kVarianceFloor) out[slices[si].key()] = v;
  }
  return out;
}

template <std::floating_point T>
BasicParamVector<T> project_to_spheres(const BasicParamVector<T>& p,
                                       const BasicParamVector<T>& d) {
  require_compatible(p, d);
  BasicParamVector<T> out = p;
  const auto& slices = p.layout().slices();
  for (std::size_t si = 0; si < slices.size(); ++si) {
    if (is_norm(slices[si].kind)) continue;
    const double vp = layer_stats<T>(p.slice(si)).variance;
    const double vd = layer_stats<T>(d.slice(si)).variance;
    if (vp > kVarianceFloor && vd > kVarianceFloor) {
      variance_correction_into<T>(p.slice(si), vd, out.slice(si));
    }
  }
  return out;
}

namespace {

double default_accept(const PhasePlan* plan) {
  if (plan && !plan->phases.empty() && plan->phases.front().stop.loss_threshold > 0) {
    return plan->phases.front().stop.loss_threshold;
  }
  return 0.05;
}

// Evaluates and records path points; owns the rolling-loss window.
template <std::floating_point T>
class Recorder {
 public:
  Recorder(const ModelGraph& graph, const PathData& data, const SearchOptions& options,
           const BasicParamVector<T>& reference)
      : graph_(graph), options_(options), reference_(reference) {
    if (!data.train || data.train->empty()) throw ValidationError("empty training set");
    eval_ = data.train->subset(sample_indices(data.train->size(), options.eval_samples,
                                              derive_seed(options.seed, 11)));
    if (data.test && !data.test->empty()) {
      const std::size_t n = options.test_samples == 0 ? data.test->size() : options.test_samples;
      test_ = data.test->subset(
          sample_indices(data.test->size(), n, derive_seed(options.seed, 12)));
    }
    keys_ = slice_keys(reference.layout());
  }

  EvalResult eval_train(const ModelState<T>& s) const { return evaluate<T>(graph_, s, eval_); }

  PathPoint<T> make(const ModelState<T>& s, std::size_t iteration, std::size_t phase,
                    double train_loss, std::vector<double> lr, bool store) {
    PathPoint<T> pt;
    pt.iteration = iteration;
    pt.phase = phase;
    pt.train_loss = train_loss;
    window_.push_back(train_loss);
    sum_ += train_loss;
    if (window_.size() > options_.loss_window) {
      sum_ -= window_.front();
      window_.pop_front();
    }
    pt.rolling_train_loss = sum_ / static_cast<double>(window_.size());
    const auto e = eval_train(s);
    pt.eval_loss = e.loss;
    pt.eval_acc = e.accuracy;
    if (!test_.empty()) {
      const auto t = evaluate<T>(graph_, s, test_);
      pt.test_loss = t.loss;
      pt.test_acc = t.accuracy;
    }
    pt.distance = l2_distance(s.params, reference_, keys_);
    const auto& slices = s.params.layout().slices();
    for (std::size_t si = 0; si < slices.size() && si < lr.size(); ++si) {
      pt.learning_rate[slices[si].key()] = lr[si];
    }
    if (store) pt.state = s;
    if (options_.on_point) options_.on_point(iteration, pt.rolling_train_loss);
    return pt;
  }

  void warn(PathRecord<T>& rec, const std::string& msg) const {
    rec.warnings.push_back(msg);
    if (options_.on_warning) options_.on_warning(msg);
  }

 private:
  const ModelGraph& graph_;
  const SearchOptions& options_;
  const BasicParamVector<T>& reference_;
  Dataset eval_;
  Dataset test_;
  std::vector<std::string> keys_;
  std::deque<double> window_;
  double sum_ = 0;
};

template <std::floating_point T>
void require_mode(const Recorder<T>& rec, const ModelState<T>& s, double accept,
                  const std::string& which) {
  const double loss = rec.eval_train(s).loss;
  if (!(loss < accept)) {
    throw ValidationError(which + " is not an accepted mode: training loss " +
                          format_double(loss) + " >= " + format_double(accept));
  }
}

TrainerConfig path_trainer(TrainerConfig t) {
  t.momentum = 0.0;
  t.weight_decay = 0.0;
  return t;
}

bool stored_index(std::size_t iteration, std::size_t stride, bool last) {
  return last || iteration == 0 || (stride > 0 && iteration % stride == 0);
}

template <std::floating_point T>
PathRecord<T> m2m_impl(const ModelGraph& graph, const ModelState<T>& p0, const ModelState<T>& d,
                       const PhasePlan& plan, const TrainerConfig& trainer, const PathData& data,
                       const SearchOptions& options, bool check_start) {
  require_compatible(p0.params, d.params);
  if (p0.params.layout() != *graph.param_layout()) throw ValidationError("layout mismatch");
  plan.validate(graph);
  const TrainerConfig cfg = path_trainer(trainer);
  cfg.validate();

  Recorder<T> rec(graph, data, options, d.params);
  const double accept = options.accept_loss >= 0 ? options.accept_loss : default_accept(&plan);
  if (options.check_modes) {
    if (check_start) require_mode(rec, p0, accept, "start");
    require_mode(rec, d, accept, "destination");
  }

  const auto targets = correctable_variances(p0.params);
  const auto dest_var = correctable_variances(d.params);
  for (const auto& [key, v] : targets) {
    const auto it = dest_var.find(key);
    if (it == dest_var.end()) continue;
    const double ratio = it->second / v;
    if (ratio < options.variance_ratio_lo || ratio > options.variance_ratio_hi) {
      throw ValidationError("modes on distant variance spheres - use connect_cross_variance (" +
                            key + " variance ratio " + format_double(ratio) + ")");
    }
  }

  PathRecord<T> out;
  out.start_id = "start";
  out.destination_id = "destination";
  const auto& slices = graph.param_layout()->slices();
  const std::size_t total = plan.total_iterations();
  const bool same = p0.params == d.params;
  if (same) rec.warn(out, "start equals destination; the path is constant");

  out.points.push_back(rec.make(p0, 0, 0, rec.eval_train(p0).loss,
                                std::vector<double>(slices.size(), 0.0), true));
  ModelState<T> p = p0;
  Rng rng(derive_seed(options.seed, 21));
  std::size_t iteration = 0;
  for (std::size_t ph = 0; ph < plan.phases.size(); ++ph) {
    const auto& phase = plan.phases[ph];
    const std::set<std::string> layers(phase.layers.begin(), phase.layers.end());
    std::set<std::string> active;
    std::vector<double> lr(slices.size(), 0.0);
    for (std::size_t si = 0; si < slices.size(); ++si) {
      if (layers.contains(slices[si].layer)) {
        active.insert(slices[si].key());
        lr[si] = cfg.learning_rate;
      }
    }
    std::map<std::string, double> arc0;
    if (phase.step.step_c > 0) {
      for (const auto& key : active) {
        const auto a = p.params.slice(key);
        const auto b = d.params.slice(key);
        if (radial_norm_sq<T>(a) > 0 && radial_norm_sq<T>(b) > 0) {
          arc0[key] = arc_length<T>(a, b);
        } else {
          arc0[key] = l2_distance(p.params, d.params, std::span(&key, 1)).at(key);
        }
      }
    }
    TrainOptions topt;
    topt.slice_lr = lr;
    topt.augment = options.augment;

    for (std::size_t t = 0; t < phase.iterations; ++t) {
      ++iteration;
      const bool last = iteration == total;
      if (same) {
        out.points.push_back(rec.make(p, iteration, ph, out.points.back().train_loss, lr,
                                      stored_index(iteration, options.checkpoint_stride, last)));
        continue;
      }
      p.params = move_toward(p.params, d.params, arc0, phase.step, active);
      auto correct = [&](BasicParamVector<T>& x) {
        for (const auto& [key, v] : targets) {
          if (!active.contains(key)) continue;
          auto s = x.slice(key);
          if (layer_stats<T>(s).variance <= kVarianceFloor) continue;
          variance_correction_into<T>(s, v, s);
        }
      };
      correct(p.params);
      auto trained = train_until<T>(graph, std::move(p), *data.train, cfg, phase.stop, rng, topt);
      p = std::move(trained.state);
      correct(p.params);
      auto pt = rec.make(p, iteration, ph, trained.mean_loss, lr,
                         stored_index(iteration, options.checkpoint_stride, last));
      pt.train_rounds = trained.rounds;
      pt.capped = trained.capped;
      if (trained.capped) {
        rec.warn(out, "iteration " + std::to_string(iteration) + ": training hit max_rounds");
      }
      out.points.push_back(std::move(pt));
    }
  }
  if (!out.points.back().state) out.points.back().state = p;
  return out;
}

template <std::floating_point T>
PathRecord<T> m2o_impl(const ModelGraph& graph, const ModelState<T>& p0,
                       const BasicParamVector<T>& destination,
                       const BasicParamVector<T>& reference, const M2OConfig& cfg,
                       const TrainerConfig& trainer, const PathData& data,
                       const SearchOptions& options, const VarianceGoal* goal) {
  require_compatible(p0.params, destination);
  if (p0.params.layout() != *graph.param_layout()) throw ValidationError("layout mismatch");
  if (cfg.iterations > 0) cfg.step.validate();
  cfg.stop.validate();
  if (!(cfg.eta_base > 0)) throw ValidationError("eta_base must be > 0");
  TrainerConfig tcfg = path_trainer(trainer);
  tcfg.learning_rate = cfg.eta_base;
  tcfg.validate();

  Recorder<T> rec(graph, data, options, reference);
  if (options.check_modes) {
    const double accept = options.accept_loss >= 0 ? options.accept_loss : default_accept(nullptr);
    require_mode(rec, p0, accept, "start");
  }

  const auto& slices = graph.param_layout()->slices();
  std::set<std::string> moved;
  std::map<std::string, double> arc0;
  for (std::size_t si = 0; si < slices.size(); ++si) {
    if (is_norm(slices[si].kind)) continue;
    const auto key = slices[si].key();
    moved.insert(key);
    arc0[key] = l2_distance(p0.params, destination, std::span(&key, 1)).at(key);
  }
  const auto v_base = correctable_variances(p0.params);
  auto moved_norm = [&](const BasicParamVector<T>& x) {
    double sq = 0;
    for (const auto& key : moved) sq += radial_norm_sq<T>(x.slice(key));
    return std::sqrt(sq);
  };
  const double norm0 = moved_norm(p0.params);
  auto goal_met = [&](const BasicParamVector<T>& x) {
    if (!goal) return false;
    for (const auto& [key, v] : goal->target) {
      const double w = layer_stats<T>(x.slice(key)).variance;
      if (std::abs(w / v - 1.0) > goal->tolerance) return false;
    }
    return true;
  };

  PathRecord<T> out;
  out.start_id = "start";
  out.destination_id = goal ? "projection" : "origin";
  out.points.push_back(rec.make(p0, 0, 0, rec.eval_train(p0).loss,
                                angle_conformal(p0.params, v_base, cfg.eta_base), true));
  if (goal_met(p0.params)) return out;

  ModelState<T> p = p0;
  Rng rng(derive_seed(options.seed, 31));
  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    p.params = move_toward(p.params, destination, arc0, cfg.step, moved);
    TrainOptions topt;
    topt.slice_lr = angle_conformal(p.params, v_base, cfg.eta_base);
    topt.augment = options.augment;
    const auto lr = topt.slice_lr;
    auto trained = train_until<T>(graph, std::move(p), *data.train, tcfg, cfg.stop, rng, topt);
    p = std::move(trained.state);
    const bool shrunk = cfg.stop_shrink > 0 && norm0 > 0 &&
                        moved_norm(p.params) * cfg.stop_shrink <= norm0;
    const bool done = it == cfg.iterations || shrunk || goal_met(p.params);
    auto pt = rec.make(p, it, 0, trained.mean_loss, lr,
                       stored_index(it, options.checkpoint_stride, done));
    pt.train_rounds = trained.rounds;
    pt.capped = trained.capped;
    if (trained.capped) {
      rec.warn(out, "iteration " + std::to_string(it) + ": training hit max_rounds");
    }
    out.points.push_back(std::move(pt));
    if (done) break;
  }
  if (goal && !goal_met(p.params)) {
    rec.warn(out, "variance goal not reached after " + std::to_string(out.points.back().iteration) +
                      " iterations");
  }
  return out;
}

}  // namespace

template <std::floating_point T>
PathRecord<T> llpf_m2m(const ModelGraph& graph, const ModelState<T>& p0, const ModelState<T>& d,
                       const PhasePlan& plan, const TrainerConfig& trainer, const PathData& data,
                       const SearchOptions& options) {
  return m2m_impl(graph, p0, d, plan, trainer, data, options, true);
}

template <std::floating_point T>
PathRecord<T> llpf_m2o(const ModelGraph& graph, const ModelState<T>& p0, const M2OConfig& cfg,
                       const TrainerConfig& trainer, const PathData& data,
                       const SearchOptions& options) {
  const BasicParamVector<T> origin(p0.params.layout_ptr());
  auto out = m2o_impl(graph, p0, origin, origin, cfg, trainer, data, options, nullptr);
  out.destination_id = "origin";
  return out;
}

template <std::floating_point T>
PathRecord<T> llpf_m2o_toward(const ModelGraph& graph, const ModelState<T>& p0,
                              const BasicParamVector<T>& destination, const M2OConfig& cfg,
                              const TrainerConfig& trainer, const PathData& data,
                              const SearchOptions& options, const VarianceGoal* goal) {
  return m2o_impl(graph, p0, destination, destination, cfg, trainer, data, options, goal);
}

template <std::floating_point T>
PathRecord<T> connect_cross_variance(const ModelGraph& graph, const ModelState<T>& p,
                                     const ModelState<T>& d, const CrossVarianceConfig& cfg,
                                     const TrainerConfig& trainer, const PathData& data,
                                     const SearchOptions& options) {
  require_compatible(p.params, d.params);
  const auto vp = correctable_variances(p.params);
  const auto vd = correctable_variances(d.params);
  VarianceGoal goal;
  goal.tolerance = cfg.tolerance;
  double ratio_sum = 0;
  for (const auto& [key, v] : vp) {
    const auto it = vd.find(key);
    if (it == vd.end()) continue;
    goal.target[key] = it->second;
    ratio_sum += v / it->second;
  }
  if (goal.target.empty()) throw ValidationError("no weight slices to compare");
  if (ratio_sum / static_cast<double>(goal.target.size()) < 1.0) {
    throw ValidationError("destination on larger sphere; swap endpoints");
  }

  const auto projection = project_to_spheres(p.params, d.params);
  auto out = m2o_impl(graph, p, projection, d.params, cfg.m2o, trainer, data, options, &goal);
  for (auto& pt : out.points) pt.stage = 0;
  const auto& mid = *out.points.back().state;

  auto stage2 = m2m_impl(graph, mid, d, cfg.plan, trainer, data, options, false);
  const std::size_t offset = out.points.back().iteration;
  out.stage_starts.push_back(out.points.size() - 1);
  for (std::size_t k = 1; k < stage2.points.size(); ++k) {
    auto& pt = stage2.points[k];
    pt.iteration += offset;
    pt.stage = 1;
    out.points.push_back(std::move(pt));
  }
  out.warnings.insert(out.warnings.end(), stage2.warnings.begin(), stage2.warnings.end());
  out.destination_id = "destination";
  return out;
}

#define LLPF_INSTANTIATE(T)                                                                       \
  template BasicParamVector<T> move_toward<T>(const BasicParamVector<T>&,                         \
                                              const BasicParamVector<T>&,                         \
                                              const std::map<std::string, double>&,               \
                                              const StepParams&, const std::set<std::string>&);   \
  template std::vector<double> angle_conformal<T>(const BasicParamVector<T>&,                     \
                                                  const std::map<std::string, double>&, double);  \
  template std::map<std::string, double> correctable_variances<T>(const BasicParamVector<T>&);    \
  template BasicParamVector<T> project_to_spheres<T>(const BasicParamVector<T>&,                  \
                                                     const BasicParamVector<T>&);                 \
  template PathRecord<T> llpf_m2m<T>(const ModelGraph&, const ModelState<T>&,                     \
                                     const ModelState<T>&, const PhasePlan&,                      \
                                     const TrainerConfig&, const PathData&,                       \
                                     const SearchOptions&);                                       \
  template PathRecord<T> llpf_m2o<T>(const ModelGraph&, const ModelState<T>&, const M2OConfig&,   \
                                     const TrainerConfig&, const PathData&,                       \
                                     const SearchOptions&);                                       \
  template PathRecord<T> llpf_m2o_toward<T>(const ModelGraph&, const ModelState<T>&,              \
                                            const BasicParamVector<T>&, const M2OConfig&,         \
                                            const TrainerConfig&, const PathData&,                \
                                            const SearchOptions&, const VarianceGoal*);           \
  template PathRecord<T> connect_cross_variance<T>(const ModelGraph&, const ModelState<T>&,       \
                                                   const ModelState<T>&,                          \
                                                   const CrossVarianceConfig&,                    \
                                                   const TrainerConfig&, const PathData&,         \
                                                   const SearchOptions&);

LLPF_INSTANTIATE(float)
LLPF_INSTANTIATE(double)

#undef LLPF_INSTANTIATE

}  // namespace llpf
