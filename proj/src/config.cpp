#include "llpf/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <map>
#include <set>

namespace llpf {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  while (true) {
    const auto comma = s.find(',');
    const auto item = trim(s.substr(0, comma));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace

ConfigFile parse_config_text(std::string_view text, std::string source) {
  ConfigFile file{std::move(source), std::string(text), {}};
  auto fail = [&](int line, const std::string& msg) {
    throw ValidationError(file.source + ":" + std::to_string(line) + ": " + msg);
  };
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(line_no, "unterminated section header");
      const auto inner = trim(line.substr(1, line.size() - 2));
      if (inner.empty()) fail(line_no, "empty section name");
      const auto space = inner.find_first_of(" \t");
      ConfigSection sec;
      sec.name = std::string(inner.substr(0, space));
      if (space != std::string_view::npos) sec.label = std::string(trim(inner.substr(space)));
      sec.line = line_no;
      file.sections.push_back(std::move(sec));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(line_no, "expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty()) fail(line_no, "missing key");
    if (file.sections.empty()) fail(line_no, "key '" + std::string(key) + "' outside a section");
    auto& entries = file.sections.back().entries;
    for (const auto& e : entries) {
      if (e.key == key) {
        fail(line_no, "duplicate key '" + std::string(key) + "' (first set on line " +
                          std::to_string(e.line) + ")");
      }
    }
    entries.push_back({std::string(key), std::string(value), line_no});
  }
  return file;
}

ConfigFile load_config_file(const std::filesystem::path& path) {
  return parse_config_text(read_file(path), path.string());
}

std::string DatasetSpec::text() const {
  switch (kind) {
    case Kind::blobs:
      return "blobs(" + std::to_string(classes) + ", " + std::to_string(dim) + ", " +
             std::to_string(n) + ", " + std::to_string(seed) + ")";
    case Kind::mnist:
      return "mnist";
    case Kind::mnist_subset:
      return "mnist-subset(" + std::to_string(per_class) + ", " + std::to_string(seed) + ")";
  }
  return {};
}

namespace {

template <typename U>
bool parse_number(std::string_view s, U& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace

DatasetSpec parse_dataset_spec(std::string_view text) {
  const auto t = trim(text);
  const auto open = t.find('(');
  const auto name = trim(t.substr(0, open));
  std::vector<std::string> args;
  if (open != std::string_view::npos) {
    if (t.back() != ')') throw ValidationError("dataset '" + std::string(t) + "': missing ')'");
    args = split_list(t.substr(open + 1, t.size() - open - 2));
  }
  auto arg = [&](std::size_t i, auto& out, const char* what) {
    if (!parse_number(args[i], out)) {
      throw ValidationError("dataset '" + std::string(t) + "': bad " + what + " '" + args[i] +
                            "'");
    }
  };
  DatasetSpec spec;
  if (name == "blobs") {
    if (args.size() != 4) {
      throw ValidationError("dataset '" + std::string(t) + "': expected blobs(classes, dim, n, seed)");
    }
    spec.kind = DatasetSpec::Kind::blobs;
    arg(0, spec.classes, "classes");
    arg(1, spec.dim, "dim");
    arg(2, spec.n, "n");
    arg(3, spec.seed, "seed");
    if (spec.classes < 2 || spec.dim < 1 || spec.n < static_cast<std::size_t>(spec.classes)) {
      throw ValidationError("dataset '" + std::string(t) +
                            "': need classes >= 2, dim >= 1, n >= classes");
    }
  } else if (name == "mnist") {
    if (!args.empty()) throw ValidationError("dataset 'mnist' takes no arguments");
    spec.kind = DatasetSpec::Kind::mnist;
  } else if (name == "mnist-subset") {
    if (args.empty() || args.size() > 2) {
      throw ValidationError("dataset '" + std::string(t) + "': expected mnist-subset(n[, seed])");
    }
    spec.kind = DatasetSpec::Kind::mnist_subset;
    arg(0, spec.per_class, "n");
    if (args.size() == 2) arg(1, spec.seed, "seed");
    if (spec.per_class < 1) throw ValidationError("mnist-subset needs n >= 1");
  } else {
    throw ValidationError("unknown dataset '" + std::string(t) +
                          "' (expected blobs(...), mnist or mnist-subset(n))");
  }
  return spec;
}

namespace {

// Typed access to one section with unknown-key detection.
class SectionReader {
 public:
  SectionReader(const ConfigFile& file, const ConfigSection& sec,
                std::initializer_list<const char*> known)
      : file_(file), sec_(sec) {
    const std::set<std::string_view> ok(known.begin(), known.end());
    for (const auto& e : sec.entries) {
      if (!ok.contains(e.key)) {
        fail(e.line, "unknown key '" + e.key + "' in [" + title() + "]");
      }
    }
  }

  [[noreturn]] void fail(int line, const std::string& msg) const {
    throw ValidationError(file_.source + ":" + std::to_string(line) + ": " + msg);
  }

  const ConfigEntry* find(std::string_view key) const {
    for (const auto& e : sec_.entries) {
      if (e.key == key) return &e;
    }
    return nullptr;
  }

  template <typename U>
  void number(std::string_view key, U& out, std::optional<U> lo = {}, std::optional<U> hi = {},
              bool lo_open = false) const {
    const auto* e = find(key);
    if (!e) return;
    U v{};
    if (!parse_number(e->value, v)) {
      fail(e->line, "'" + e->key + "' expects a number, got '" + e->value + "'");
    }
    if (lo && (lo_open ? !(v > *lo) : !(v >= *lo))) {
      fail(e->line, "'" + e->key + "' must be " + (lo_open ? "> " : ">= ") + num(*lo));
    }
    if (hi && !(v <= *hi)) fail(e->line, "'" + e->key + "' must be <= " + num(*hi));
    out = v;
  }

  void boolean(std::string_view key, bool& out) const {
    const auto* e = find(key);
    if (!e) return;
    if (e->value == "true" || e->value == "yes" || e->value == "1") {
      out = true;
    } else if (e->value == "false" || e->value == "no" || e->value == "0") {
      out = false;
    } else {
      fail(e->line, "'" + e->key + "' expects true or false, got '" + e->value + "'");
    }
  }

  void string(std::string_view key, std::string& out) const {
    if (const auto* e = find(key)) out = e->value;
  }

  void path(std::string_view key, std::filesystem::path& out,
            const std::filesystem::path& base) const {
    if (const auto* e = find(key)) {
      if (e->value.empty()) fail(e->line, "'" + e->key + "' is empty");
      std::filesystem::path p(e->value);
      out = p.is_absolute() ? p : base / p;
    }
  }

  std::string title() const { return sec_.label.empty() ? sec_.name : sec_.name + " " + sec_.label; }
  int line() const { return sec_.line; }

 private:
  template <typename U>
  static std::string num(U v) {
    if constexpr (std::is_floating_point_v<U>) {
      return format_double(v);
    } else {
      return std::to_string(v);
    }
  }

  const ConfigFile& file_;
  const ConfigSection& sec_;
};

void read_stop(const SectionReader& r, StopRule& stop) {
  r.number<double>("loss_threshold", stop.loss_threshold, 0.0);
  r.number<std::size_t>("max_rounds", stop.max_rounds, 1);
  r.number<std::size_t>("window", stop.window, 1);
}

void read_step(const SectionReader& r, StepParams& step) {
  r.number<double>("step_a", step.step_a, 0.0);
  r.number<double>("step_c", step.step_c, 0.0);
  r.number<double>("step_f", step.step_f, 0.0);
}

std::vector<std::uint64_t> parse_seeds(const SectionReader& r, const ConfigEntry& e) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(e.value)) {
    const auto dots = item.find("..");
    std::uint64_t a = 0, b = 0;
    if (dots != std::string::npos) {
      if (!parse_number(std::string_view(item).substr(0, dots), a) ||
          !parse_number(std::string_view(item).substr(dots + 2), b) || b < a) {
        r.fail(e.line, "bad seed range '" + item + "'");
      }
      for (auto s = a; s <= b; ++s) out.push_back(s);
    } else {
      if (!parse_number(item, a)) r.fail(e.line, "bad seed '" + item + "'");
      out.push_back(a);
    }
  }
  if (out.empty()) r.fail(e.line, "'seeds' is empty");
  return out;
}

}  // namespace

RunConfig build_run_config(const ConfigFile& file, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  cfg.digest = fnv1a64(file.text);
  std::set<std::string> seen;
  for (const auto& sec : file.sections) {
    const std::string id = sec.name == "phase" ? "phase " + sec.label : sec.name;
    if (!seen.insert(id).second) {
      throw ValidationError(file.source + ":" + std::to_string(sec.line) + ": duplicate section [" +
                            id + "]");
    }
    if (sec.name == "run") {
      SectionReader r(file, sec, {"model", "dataset", "data_dir", "out", "precision",
                                  "checkpoint_stride", "seed"});
      r.string("model", cfg.model);
      const auto names = model_names();
      if (std::find(names.begin(), names.end(), cfg.model) == names.end()) {
        r.fail(r.find("model")->line, "unknown model '" + cfg.model + "'");
      }
      if (const auto* e = r.find("dataset")) {
        try {
          cfg.dataset = parse_dataset_spec(e->value);
        } catch (const ValidationError& err) {
          r.fail(e->line, err.what());
        }
      }
      r.path("data_dir", cfg.data_dir, base_dir);
      r.path("out", cfg.out, base_dir);
      r.string("precision", cfg.precision);
      if (cfg.precision != "f32" && cfg.precision != "f64") {
        r.fail(r.find("precision")->line, "precision must be f32 or f64");
      }
      r.number<std::size_t>("checkpoint_stride", cfg.checkpoint_stride, 1);
      r.number<std::uint64_t>("seed", cfg.seed);
    } else if (sec.name == "modes") {
      SectionReader r(file, sec, {"seeds", "learning_rate", "momentum", "weight_decay",
                                  "batch_size", "loss_threshold", "max_rounds", "window",
                                  "accept_loss", "augment"});
      if (const auto* e = r.find("seeds")) cfg.modes.seeds = parse_seeds(r, *e);
      auto& t = cfg.modes.trainer;
      r.number<double>("learning_rate", t.learning_rate, 0.0, {}, true);
      r.number<double>("momentum", t.momentum, 0.0, 0.999999);
      r.number<double>("weight_decay", t.weight_decay, 0.0);
      r.number<std::size_t>("batch_size", t.batch_size, 1);
      read_stop(r, cfg.modes.rule);
      r.number<double>("accept_loss", cfg.modes.accept_loss, 0.0, {}, true);
      r.boolean("augment", cfg.modes.augment);
    } else if (sec.name == "endpoints") {
      SectionReader r(file, sec, {"start", "destination"});
      r.path("start", cfg.start, base_dir);
      r.path("destination", cfg.destination, base_dir);
    } else if (sec.name == "trainer") {
      SectionReader r(file, sec, {"learning_rate", "batch_size"});
      r.number<double>("learning_rate", cfg.path_trainer.learning_rate, 0.0, {}, true);
      r.number<std::size_t>("batch_size", cfg.path_trainer.batch_size, 1);
    } else if (sec.name == "fdf") {
      SectionReader r(file, sec, {"iterations", "step_a", "step_c", "step_f", "loss_threshold",
                                  "max_rounds", "window"});
      cfg.plan.fdf = true;
      r.number<std::size_t>("iterations", cfg.plan.fdf_iterations);
      read_step(r, cfg.plan.fdf_step);
      read_stop(r, cfg.plan.fdf_stop);
      try {
        cfg.plan.fdf_step.validate();
      } catch (const ValidationError& e) {
        r.fail(r.line(), e.what());
      }
      cfg.has_plan = true;
    } else if (sec.name == "phase") {
      SectionReader r(file, sec, {"layers", "iterations", "step_a", "step_c", "step_f",
                                  "loss_threshold", "max_rounds", "window"});
      if (sec.label.empty()) r.fail(sec.line, "phase sections need a name: [phase <name>]");
      Phase ph;
      ph.name = sec.label;
      const auto* layers = r.find("layers");
      if (!layers) r.fail(sec.line, "[phase " + sec.label + "] needs 'layers'");
      ph.layers = split_list(layers->value);
      if (ph.layers.empty()) r.fail(layers->line, "'layers' is empty");
      r.number<std::size_t>("iterations", ph.iterations);
      read_step(r, ph.step);
      read_stop(r, ph.stop);
      try {
        ph.step.validate();
      } catch (const ValidationError& e) {
        r.fail(sec.line, e.what());
      }
      cfg.plan.phases.push_back(std::move(ph));
      cfg.has_plan = true;
    } else if (sec.name == "m2o") {
      SectionReader r(file, sec, {"eta_base", "iterations", "step_a", "step_c", "step_f",
                                  "loss_threshold", "max_rounds", "window", "stop_shrink"});
      r.number<double>("eta_base", cfg.m2o.eta_base, 0.0, {}, true);
      r.number<std::size_t>("iterations", cfg.m2o.iterations);
      read_step(r, cfg.m2o.step);
      read_stop(r, cfg.m2o.stop);
      r.number<double>("stop_shrink", cfg.m2o.stop_shrink, 0.0);
      if (cfg.m2o.stop_shrink > 0 && cfg.m2o.stop_shrink <= 1) {
        r.fail(r.find("stop_shrink")->line, "'stop_shrink' must be 0 (off) or > 1");
      }
    } else if (sec.name == "avs") {
      SectionReader r(file, sec, {"tolerance"});
      r.number<double>("tolerance", cfg.avs_tolerance, 0.0, {}, true);
    } else if (sec.name == "search") {
      SectionReader r(file, sec, {"eval_samples", "test_samples", "accept_loss", "check_modes",
                                  "variance_ratio_lo", "variance_ratio_hi", "loss_window",
                                  "augment"});
      auto& s = cfg.search;
      r.number<std::size_t>("eval_samples", s.eval_samples, 1);
      r.number<std::size_t>("test_samples", s.test_samples);
      if (r.find("accept_loss")) {
        double v = 0;
        r.number<double>("accept_loss", v, 0.0, {}, true);
        s.accept_loss = v;
      }
      r.boolean("check_modes", s.check_modes);
      r.number<double>("variance_ratio_lo", s.variance_ratio_lo, 0.0, 1.0, true);
      r.number<double>("variance_ratio_hi", s.variance_ratio_hi, 1.0);
      r.number<std::size_t>("loss_window", s.loss_window, 1);
      r.boolean("augment", s.augment);
    } else if (sec.name == "continuity") {
      SectionReader r(file, sec, {"path", "samples", "eval_samples", "full_train"});
      r.path("path", cfg.continuity.path, base_dir);
      r.number<std::size_t>("samples", cfg.continuity.samples, 2);
      r.number<std::size_t>("eval_samples", cfg.continuity.eval_samples, 1);
      r.boolean("full_train", cfg.continuity.full_train);
    } else if (sec.name == "seed-study") {
      SectionReader r(file, sec, {"train"});
      r.boolean("train", cfg.seed_study_train);
    } else {
      throw ValidationError(file.source + ":" + std::to_string(sec.line) + ": unknown section [" +
                            sec.name + "]");
    }
  }
  if (cfg.plan.fdf && !cfg.plan.phases.empty()) {
    throw ValidationError(file.source + ": use either [fdf] or [phase ...] sections, not both");
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  auto cfg = build_run_config(load_config_file(path), path.parent_path());
  cfg.config_path = path;
  return cfg;
}

PhasePlan make_phase_plan(const RunConfig& cfg, const ModelGraph& graph) {
  if (!cfg.has_plan) throw ValidationError("missing phase plan: add [fdf] or [phase <name>]");
  PhasePlan plan;
  if (cfg.plan.fdf) {
    plan = fdf_phase_plan(graph, cfg.plan.fdf_iterations, cfg.plan.fdf_step, cfg.plan.fdf_stop);
  } else {
    plan.phases = cfg.plan.phases;
    for (auto& ph : plan.phases) {
      if (ph.layers.size() == 1 && ph.layers.front() == "all") ph.layers = graph.trainable_layers();
    }
  }
  plan.validate(graph);
  return plan;
}

DatasetPair load_dataset(const DatasetSpec& spec, const std::filesystem::path& data_dir) {
  if (spec.kind == DatasetSpec::Kind::blobs) {
    return gen_blobs(spec.classes, spec.dim, spec.n, spec.seed);
  }
  std::filesystem::path root = data_dir;
  if (root.empty()) {
    if (const char* env = std::getenv("LLPF_DATA_DIR")) root = env;
  }
  if (root.empty()) {
    throw ValidationError("MNIST needs [run] data_dir or the LLPF_DATA_DIR environment variable");
  }
  auto pair = load_mnist(root);
  if (spec.kind == DatasetSpec::Kind::mnist_subset) {
    pair.train = class_balanced_subset(pair.train, spec.per_class, spec.seed);
  }
  return pair;
}

ModelGraph make_run_model(const RunConfig& cfg, const DatasetPair& data) {
  return make_model(cfg.model, data.train.sample_shape, data.train.num_classes);
}

std::function<void(std::span<float>, Rng&)> image_augmenter(const Dataset& data) {
  const Shape s = data.sample_shape;
  if (s.channels != 1 || s.flat()) return {};
  const float background = (0.0f - kMnistMean) / kMnistStd;
  return [s, background](std::span<float> img, Rng& rng) {
    augment_image(img, s.height, s.width, 5.0, 2, background, rng);
  };
}

}  // namespace llpf
