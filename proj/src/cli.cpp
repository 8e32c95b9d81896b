#include "llpf/cli.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <filesystem>
#include <optional>

#include "llpf/analysis.hpp"
#include "llpf/config.hpp"
#include "llpf/io.hpp"
#include "llpf/llpf.hpp"

#ifndef LLPF_VERSION
#define LLPF_VERSION "dev"
#endif

namespace llpf {

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config;
  std::string out;
  std::string precision;
  std::string log_level = "info";
  std::size_t jobs = 1;
  std::optional<std::uint64_t> seed_override;
};

struct PlotArgs {
  std::string csv;
  std::string x = "iteration";
  std::vector<std::string> y;
  bool log_y = false;
  std::string title;
};

struct Context {
  Globals g;
  RunConfig cfg;
  fs::path out;
  Manifest manifest;
  std::chrono::steady_clock::time_point t0;
};

std::string join_seeds(const std::vector<std::uint64_t>& seeds) {
  std::string s;
  for (std::size_t i = 0; i < seeds.size(); ++i) s += (i ? "," : "") + std::to_string(seeds[i]);
  return s;
}

Context prepare(const Globals& g, const std::string& command, bool need_out = true) {
  Context ctx;
  ctx.g = g;
  ctx.t0 = std::chrono::steady_clock::now();
  if (g.config.empty()) throw ValidationError(command + ": --config is required");
  ctx.cfg = load_run_config(g.config);
  auto& cfg = ctx.cfg;
  if (!g.precision.empty()) cfg.precision = g.precision;
  if (g.seed_override) {
    cfg.seed = *g.seed_override;
    const auto n = cfg.modes.seeds.size();
    for (std::size_t i = 0; i < n; ++i) cfg.modes.seeds[i] = *g.seed_override + i;
  }
  ctx.out = !g.out.empty() ? fs::path(g.out) : cfg.out;
  if (need_out && ctx.out.empty()) {
    throw ValidationError(command + ": no output directory (--out or [run] out)");
  }
  auto& m = ctx.manifest;
  m.set("tool", "llpf");
  m.set("version", LLPF_VERSION);
  m.set("command", command);
  m.set("config", fs::absolute(g.config).string());
  m.set("config_digest", hex64(cfg.digest));
  m.set("model", cfg.model);
  m.set("dataset", cfg.dataset.text());
  m.set("precision", cfg.precision);
  m.set("seed", std::to_string(cfg.seed));
  m.set("jobs", std::to_string(g.jobs));
  m.set("started", utc_timestamp());
  return ctx;
}

void finish(Context& ctx, const fs::path& file) {
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - ctx.t0).count();
  ctx.manifest.set("finished", utc_timestamp());
  ctx.manifest.set("wall_seconds", format_double(wall));
  write_file_atomic(file, ctx.manifest.text());
}

SearchOptions search_options(const Context& ctx, const DatasetPair& data) {
  const auto& cfg = ctx.cfg;
  SearchOptions o;
  o.checkpoint_stride = cfg.checkpoint_stride;
  o.loss_window = cfg.search.loss_window;
  o.eval_samples = cfg.search.eval_samples;
  o.test_samples = cfg.search.test_samples;
  o.seed = cfg.seed;
  o.accept_loss = cfg.search.accept_loss.value_or(-1.0);
  o.check_modes = cfg.search.check_modes;
  o.variance_ratio_lo = cfg.search.variance_ratio_lo;
  o.variance_ratio_hi = cfg.search.variance_ratio_hi;
  if (cfg.search.augment) o.augment = image_augmenter(data.train);
  o.on_warning = [](const std::string& w) { spdlog::warn("{}", w); };
  o.on_point = [](std::size_t it, double loss) {
    if (it % 500 == 0) spdlog::info("iteration {}: rolling loss {}", it, format_double(loss));
  };
  return o;
}

fs::path require_file(const fs::path& p, const char* what) {
  if (p.empty()) throw ValidationError(std::string("missing [endpoints] ") + what);
  if (!fs::exists(p)) throw ValidationError(std::string(what) + " not found: " + p.string());
  return p;
}

template <std::floating_point T>
void train_modes(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto data = load_dataset(cfg.dataset, cfg.data_dir);
  const auto graph = make_run_model(cfg, data);
  fs::create_directories(ctx.out);
  TrainOptions topt;
  if (cfg.modes.augment) topt.augment = image_augmenter(data.train);

  const auto& seeds = cfg.modes.seeds;
  std::vector<std::vector<std::string>> rows(seeds.size());
  parallel_for(seeds.size(), ctx.g.jobs, [&](std::size_t i) {
    const auto seed = seeds[i];
    Table log;
    log.columns = {"round", "loss", "rolling_loss"};
    std::vector<double> losses;
    TrainOptions o = topt;
    o.on_step = [&](std::size_t, double loss) { losses.push_back(loss); };
    auto r = train_mode<T>(graph, seed, data.train, cfg.modes.trainer, cfg.modes.rule, o);
    const auto rolling = rolling_average(losses, cfg.modes.rule.window);
    for (std::size_t k = 0; k < losses.size(); ++k) {
      log.rows.push_back({std::to_string(k + 1), format_double(losses[k]),
                          format_double(rolling[k])});
    }
    const auto name = "mode_" + std::to_string(seed);
    write_csv(log, ctx.out / (name + "_train.csv"));
    save_checkpoint(graph, r.state, ctx.out / (name + ".ckpt"));
    const auto tr = evaluate<T>(graph, r.state, data.train);
    const auto te = evaluate<T>(graph, r.state, data.test);
    const bool accepted = r.rolling_loss < cfg.modes.accept_loss;
    if (!accepted) {
      spdlog::warn("seed {}: rolling loss {} is not below accept_loss {}", seed,
                   format_double(r.rolling_loss), format_double(cfg.modes.accept_loss));
    }
    spdlog::info("seed {}: {} rounds, rolling loss {}, test accuracy {}", seed, r.rounds,
                 format_double(r.rolling_loss), format_double(te.accuracy));
    rows[i] = {std::to_string(seed), std::to_string(r.rounds), format_double(r.rolling_loss),
               r.capped ? "1" : "0", accepted ? "1" : "0", format_double(tr.loss),
               format_double(tr.accuracy), format_double(te.loss), format_double(te.accuracy),
               name + ".ckpt"};
  });
  Table summary;
  summary.columns = {"seed",       "rounds",    "rolling_loss", "capped",   "accepted",
                     "train_loss", "train_acc", "test_loss",    "test_acc", "checkpoint"};
  summary.rows = std::move(rows);
  write_csv(summary, ctx.out / "modes.csv");
  ctx.manifest.set("seeds", join_seeds(seeds));
  finish(ctx, ctx.out / "manifest.txt");
}

template <std::floating_point T>
void persist_path(Context& ctx, const ModelGraph& graph, PathRecord<T>& path) {
  path.config_hash = hex64(ctx.cfg.digest);
  write_path_record(graph, path, ctx.out);
  ctx.manifest.set("points", std::to_string(path.points.size()));
  ctx.manifest.set("warnings", std::to_string(path.warnings.size()));
  if (!path.stage_starts.empty()) {
    ctx.manifest.set("stage_boundary_iteration",
                     std::to_string(path.points[path.stage_starts.front()].iteration));
  }
  finish(ctx, ctx.out / "manifest.txt");
  spdlog::info("wrote {} points to {}", path.points.size(), ctx.out.string());
}

template <std::floating_point T>
void connect_m2m(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto data = load_dataset(cfg.dataset, cfg.data_dir);
  const auto graph = make_run_model(cfg, data);
  const auto plan = make_phase_plan(cfg, graph);
  const auto p0 = load_checkpoint<T>(graph, require_file(cfg.start, "start"));
  const auto d = load_checkpoint<T>(graph, require_file(cfg.destination, "destination"));
  fs::create_directories(ctx.out);
  ctx.manifest.set("start", cfg.start.string());
  ctx.manifest.set("destination", cfg.destination.string());
  ctx.manifest.set("phases", std::to_string(plan.phases.size()));
  auto path = llpf_m2m<T>(graph, p0, d, plan, cfg.path_trainer, {&data.train, &data.test},
                          search_options(ctx, data));
  persist_path(ctx, graph, path);
}

template <std::floating_point T>
void collapse_m2o(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto data = load_dataset(cfg.dataset, cfg.data_dir);
  const auto graph = make_run_model(cfg, data);
  const auto p0 = load_checkpoint<T>(graph, require_file(cfg.start, "start"));
  cfg.m2o.step.validate();
  fs::create_directories(ctx.out);
  ctx.manifest.set("start", cfg.start.string());
  ctx.manifest.set("destination", "origin");
  auto path = llpf_m2o<T>(graph, p0, cfg.m2o, cfg.path_trainer, {&data.train, &data.test},
                          search_options(ctx, data));
  persist_path(ctx, graph, path);
}

template <std::floating_point T>
void connect_avs(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto data = load_dataset(cfg.dataset, cfg.data_dir);
  const auto graph = make_run_model(cfg, data);
  CrossVarianceConfig cv{cfg.m2o, make_phase_plan(cfg, graph), cfg.avs_tolerance};
  cv.m2o.step.validate();
  const auto p = load_checkpoint<T>(graph, require_file(cfg.start, "start"));
  const auto d = load_checkpoint<T>(graph, require_file(cfg.destination, "destination"));
  fs::create_directories(ctx.out);
  ctx.manifest.set("start", cfg.start.string());
  ctx.manifest.set("destination", cfg.destination.string());
  auto path = connect_cross_variance<T>(graph, p, d, cv, cfg.path_trainer,
                                        {&data.train, &data.test}, search_options(ctx, data));
  persist_path(ctx, graph, path);
}

template <std::floating_point T>
void continuity(Context& ctx, const std::string& path_flag) {
  const auto& cfg = ctx.cfg;
  const fs::path dir = !path_flag.empty() ? fs::path(path_flag) : cfg.continuity.path;
  if (dir.empty()) throw ValidationError("continuity: no path directory ([continuity] path or --path)");
  if (!fs::exists(dir / "points.csv")) {
    throw ValidationError("continuity: " + (dir / "points.csv").string() + " not found");
  }
  // Results sit next to the path unless --out says otherwise.
  if (ctx.g.out.empty()) ctx.out = dir;
  const auto data = load_dataset(cfg.dataset, cfg.data_dir);
  const auto graph = make_run_model(cfg, data);
  const auto points = read_path_points<T>(graph, dir);
  ContinuityOptions opt;
  opt.samples = cfg.continuity.samples;
  opt.eval_samples = cfg.continuity.eval_samples;
  opt.full_train = cfg.continuity.full_train;
  opt.seed = cfg.seed;
  opt.jobs = ctx.g.jobs;
  const auto report = interpolation_continuity<T>(graph, points, data.train, opt);
  fs::create_directories(ctx.out);
  write_csv(continuity_table(report), ctx.out / "continuity.csv");
  Table seg;
  seg.columns = {"segment", "from_iteration", "to_iteration", "max_loss"};
  for (std::size_t s = 0; s < report.segments.size(); ++s) {
    const auto& r = report.segments[s];
    seg.rows.push_back({std::to_string(s), std::to_string(r.from_iteration),
                        std::to_string(r.to_iteration), format_double(r.max_loss)});
  }
  write_csv(seg, ctx.out / "continuity_segments.csv");
  ctx.manifest.set("path", dir.string());
  ctx.manifest.set("segments", std::to_string(report.segments.size()));
  ctx.manifest.set("samples", std::to_string(report.samples));
  ctx.manifest.set("global_max_loss", format_double(report.global_max_loss));
  ctx.manifest.set("pointwise_max_loss", format_double(report.pointwise_max_loss));
  finish(ctx, ctx.out / "continuity_manifest.txt");
  spdlog::info("{} segments: global max loss {}, pointwise max {}", report.segments.size(),
               format_double(report.global_max_loss), format_double(report.pointwise_max_loss));
}

void seed_study(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto data = load_dataset(cfg.dataset, cfg.data_dir);
  const auto graph = make_run_model(cfg, data);
  SeedStudyOptions opt;
  opt.trainer = cfg.modes.trainer;
  opt.rule = cfg.modes.rule;
  opt.train = cfg.seed_study_train;
  opt.accept_loss = cfg.modes.accept_loss;
  opt.jobs = ctx.g.jobs;
  opt.wide = cfg.precision == "f64";
  if (cfg.modes.augment) opt.train_options.augment = image_augmenter(data.train);
  const auto study = seed_variance_study(graph, cfg.modes.seeds, data.train, opt);
  for (const auto& w : study.warnings) spdlog::warn("{}", w);
  fs::create_directories(ctx.out);
  write_csv(seed_study_table(study), ctx.out / "seed_study.csv");
  write_csv(seed_summary_table(study), ctx.out / "seed_summary.csv");
  for (const auto& s : study.summary) {
    spdlog::info("{}: variance CoV {}, max |mean|/std {}", s.key, format_double(s.variance_cov),
                 format_double(s.max_mean_over_std));
  }
  ctx.manifest.set("seeds", join_seeds(cfg.modes.seeds));
  finish(ctx, ctx.out / "manifest.txt");
}

void plot(const Globals& g, const PlotArgs& a) {
  if (g.out.empty()) throw ValidationError("plot: --out is required");
  const auto table = read_csv(a.csv);
  std::vector<std::string> ys;
  for (const auto& y : a.y) {
    if (!y.empty() && y.back() == '*') {
      const auto prefix = y.substr(0, y.size() - 1);
      for (const auto& c : table.columns) {
        if (c.starts_with(prefix) && c != a.x) ys.push_back(c);
      }
    } else {
      ys.push_back(y);
    }
  }
  if (ys.empty()) {
    if (table.column("rolling_train_loss") != table.columns.size()) {
      ys.push_back("rolling_train_loss");
    } else {
      for (const auto& c : table.columns) {
        if (c != a.x) {
          ys.push_back(c);
          break;
        }
      }
    }
  }
  if (ys.empty()) throw ValidationError("plot: no column to plot");
  const auto series = table_series(table, a.x, ys);
  ChartOptions opt;
  opt.title = a.title.empty() ? fs::path(a.csv).filename().string() : a.title;
  opt.x_label = a.x;
  opt.y_label = ys.size() == 1 ? ys.front() : "";
  opt.log_y = a.log_y;
  std::vector<std::string> warnings;
  const auto svg = render_svg(series, opt, &warnings);
  for (const auto& w : warnings) spdlog::warn("{}", w);
  const fs::path out(g.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_file_atomic(out, svg);
}

template <template <typename> class F>
void with_precision(Context& ctx) {
  if (ctx.cfg.precision == "f64") {
    F<double>::run(ctx);
  } else {
    F<float>::run(ctx);
  }
}

template <typename T>
struct TrainModesCmd {
  static void run(Context& c) { train_modes<T>(c); }
};
template <typename T>
struct M2MCmd {
  static void run(Context& c) { connect_m2m<T>(c); }
};
template <typename T>
struct M2OCmd {
  static void run(Context& c) { collapse_m2o<T>(c); }
};
template <typename T>
struct AvsCmd {
  static void run(Context& c) { connect_avs<T>(c); }
};

}  // namespace

int cli_main(int argc, char** argv) {
  auto logger = spdlog::get("llpf");
  if (!logger) logger = spdlog::stderr_color_mt("llpf");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");

  CLI::App app{"Low-loss path finding between trained network modes"};
  app.require_subcommand(1);
  app.set_version_flag("--version", LLPF_VERSION);
  Globals g;
  PlotArgs plot_args;
  std::string path_flag;

  auto add_common = [&](CLI::App* sub, bool with_config) {
    if (with_config) {
      sub->add_option("--config", g.config, "Run configuration file")->required();
      sub->add_option("--seed-override", g.seed_override,
                      "Replace [run] seed and shift [modes] seeds to start here");
      sub->add_option("--precision", g.precision, "Parameter storage precision")
          ->check(CLI::IsMember({"f32", "f64"}));
    }
    sub->add_option("--out", g.out, "Output directory (file for plot)");
    sub->add_option("--jobs", g.jobs, "Worker threads for independent tasks")
        ->check(CLI::PositiveNumber);
    sub->add_option("--log-level", g.log_level, "error, warn, info or debug")
        ->check(CLI::IsMember({"error", "warn", "info", "debug"}));
  };

  auto* train = app.add_subcommand("train-modes", "Train one mode per configured seed");
  auto* m2m = app.add_subcommand("connect-m2m", "Low-loss path between two modes on one sphere");
  auto* m2o = app.add_subcommand("collapse-m2o", "Low-loss path from a mode toward the origin");
  auto* avs = app.add_subcommand("connect-avs", "Path between modes on different spheres");
  auto* cont = app.add_subcommand("continuity", "Interpolation check on a stored path");
  auto* seeds = app.add_subcommand("seed-study", "Per-layer variance and mean across seeds");
  auto* plt = app.add_subcommand("plot", "Line chart of CSV columns as SVG");
  for (auto* sub : {train, m2m, m2o, avs, cont, seeds}) add_common(sub, true);
  add_common(plt, false);
  cont->add_option("--path", path_flag, "Path record directory (overrides [continuity] path)");
  plt->add_option("csv", plot_args.csv, "CSV file")->required()->check(CLI::ExistingFile);
  plt->add_option("--x", plot_args.x, "X column");
  plt->add_option("--y", plot_args.y, "Y columns; a trailing * matches a prefix")
      ->delimiter(',');
  plt->add_flag("--log-y", plot_args.log_y, "Logarithmic y axis");
  plt->add_option("--title", plot_args.title, "Chart title");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  spdlog::set_level(spdlog::level::from_str(g.log_level));

  try {
    if (train->parsed()) {
      auto ctx = prepare(g, "train-modes");
      with_precision<TrainModesCmd>(ctx);
    } else if (m2m->parsed()) {
      auto ctx = prepare(g, "connect-m2m");
      with_precision<M2MCmd>(ctx);
    } else if (m2o->parsed()) {
      auto ctx = prepare(g, "collapse-m2o");
      with_precision<M2OCmd>(ctx);
    } else if (avs->parsed()) {
      auto ctx = prepare(g, "connect-avs");
      with_precision<AvsCmd>(ctx);
    } else if (cont->parsed()) {
      auto ctx = prepare(g, "continuity", false);
      if (ctx.cfg.precision == "f64") {
        continuity<double>(ctx, path_flag);
      } else {
        continuity<float>(ctx, path_flag);
      }
    } else if (seeds->parsed()) {
      auto ctx = prepare(g, "seed-study");
      seed_study(ctx);
    } else if (plt->parsed()) {
      plot(g, plot_args);
    }
  } catch (const ValidationError& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 0;
}

}  // namespace llpf
