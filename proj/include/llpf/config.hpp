#pragma once

// Run configuration: a line-oriented "[section]" / "key = value" text format.
// See docs/config.md for the schema.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "llpf/dataset.hpp"
#include "llpf/engine.hpp"
#include "llpf/graph.hpp"
#include "llpf/llpf.hpp"

namespace llpf {

struct ConfigEntry {
  std::string key;
  std::string value;
  int line = 0;
};

struct ConfigSection {
  std::string name;  // e.g. "phase" for "[phase stem]"
  std::string label;  // e.g. "stem"; empty when absent
  int line = 0;
  std::vector<ConfigEntry> entries;
};

struct ConfigFile {
  std::string source;  // file name used in error messages
  std::string text;
  std::vector<ConfigSection> sections;
};

// Syntax only: sections, keys, comments ('#' to end of line), blank lines.
// Errors carry "<source>:<line>: ".
ConfigFile parse_config_text(std::string_view text, std::string source);
ConfigFile load_config_file(const std::filesystem::path& path);

struct DatasetSpec {
  enum class Kind { blobs, mnist, mnist_subset };
  Kind kind = Kind::blobs;
  int classes = 3;
  int dim = 20;
  std::size_t n = 3000;
  std::uint64_t seed = 0;
  std::size_t per_class = 0;

  std::string text() const;
};

// "blobs(classes, dim, n, seed)", "mnist", "mnist-subset(n[, seed])".
DatasetSpec parse_dataset_spec(std::string_view text);

struct ModeTraining {
  std::vector<std::uint64_t> seeds = {1, 2};
  TrainerConfig trainer{0.05, 0.0, 0.0, 64};
  StopRule rule{0.005, 20000, 10};
  double accept_loss = 0.05;
  bool augment = false;
};

struct PlanSpec {
  bool fdf = false;
  std::size_t fdf_iterations = 0;
  StepParams fdf_step;
  StopRule fdf_stop;
  std::vector<Phase> phases;  // explicit phases; "all" expands later
};

struct SearchSettings {
  std::size_t eval_samples = 2048;
  std::size_t test_samples = 0;
  std::optional<double> accept_loss;
  bool check_modes = true;
  double variance_ratio_lo = 2.0 / 3.0;
  double variance_ratio_hi = 1.5;
  std::size_t loss_window = 10;
  bool augment = false;
};

struct ContinuitySettings {
  std::filesystem::path path;
  std::size_t samples = 50;
  std::size_t eval_samples = 2048;
  bool full_train = false;
};

struct RunConfig {
  std::filesystem::path config_path;
  std::uint64_t digest = 0;  // FNV-1a of the config text

  std::string model = "mlp2";
  DatasetSpec dataset;
  std::filesystem::path data_dir;
  std::filesystem::path out;
  std::string precision = "f32";
  std::size_t checkpoint_stride = 10;
  std::uint64_t seed = 0;

  ModeTraining modes;
  std::filesystem::path start;
  std::filesystem::path destination;
  TrainerConfig path_trainer{0.01, 0.0, 0.0, 64};
  PlanSpec plan;
  bool has_plan = false;
  M2OConfig m2o;
  double avs_tolerance = 0.02;
  SearchSettings search;
  ContinuitySettings continuity;
  bool seed_study_train = true;
};

// Validates keys and values; relative paths resolve against `base_dir`.
RunConfig build_run_config(const ConfigFile& file, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

// Concrete plan for the graph: explicit phases with "all" expanded, or FDF.
PhasePlan make_phase_plan(const RunConfig& cfg, const ModelGraph& graph);

// Dataset root: cfg.data_dir, else $LLPF_DATA_DIR.
DatasetPair load_dataset(const DatasetSpec& spec, const std::filesystem::path& data_dir);

ModelGraph make_run_model(const RunConfig& cfg, const DatasetPair& data);

// Augmentation for 1-channel images: +-5 degree rotation and 2-pixel padded
// crop; empty for feature vectors.
std::function<void(std::span<float>, Rng&)> image_augmenter(const Dataset& data);

}  // namespace llpf
