#pragma once

// Files written and read by the command-line tools: checkpoints, CSV tables,
// SVG line charts and run manifests.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "llpf/analysis.hpp"
#include "llpf/engine.hpp"
#include "llpf/graph.hpp"
#include "llpf/llpf.hpp"
#include "llpf/table.hpp"

namespace llpf {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layer-table kind codes beyond ParamKind for batch-norm running statistics.
inline constexpr std::uint8_t kRunningMeanKind = 4;
inline constexpr std::uint8_t kRunningVarKind = 5;

// Layout: "LLPF", u32 version, u64 model digest, u32 entry count, entries of
// (u16 name length, name, u8 kind, u64 count), f32 payload in entry order,
// u64 FNV-1a of the payload bytes. All integers little-endian.
template <std::floating_point T>
std::string encode_checkpoint(const ModelGraph& graph, const ModelState<T>& state);

template <std::floating_point T>
ModelState<T> decode_checkpoint(const ModelGraph& graph, std::string_view bytes);

template <std::floating_point T>
void save_checkpoint(const ModelGraph& graph, const ModelState<T>& state,
                     const std::filesystem::path& path);

template <std::floating_point T>
ModelState<T> load_checkpoint(const ModelGraph& graph, const std::filesystem::path& path);

// RFC 4180: CRLF record ends, fields quoted when they hold a comma, quote,
// CR or LF.
std::string to_csv(const Table& table);
// Accepts CRLF or LF record ends. Throws ValidationError naming the line of a
// malformed or ragged record.
Table parse_csv(std::string_view text);
void write_csv(const Table& table, const std::filesystem::path& path);
Table read_csv(const std::filesystem::path& path);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct ChartOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_y = false;
  double log_floor = 1e-12;
  int width = 800;
  int height = 480;
};

// Standalone SVG line chart. Non-finite points are skipped; with log_y,
// values below log_floor are clamped to it and a warning is appended.
std::string render_svg(std::span<const Series> series, const ChartOptions& options,
                       std::vector<std::string>* warnings = nullptr);

// Extracts series `y_columns` against `x_column` from a table; empty cells
// are skipped.
std::vector<Series> table_series(const Table& table, std::string_view x_column,
                                 std::span<const std::string> y_columns);

// Ordered "key: value" lines.
struct Manifest {
  std::vector<std::pair<std::string, std::string>> entries;

  void set(std::string key, std::string value);
  std::string text() const;
};

std::string utc_timestamp();

// Persists a path record: metrics.csv, points.csv and checkpoints/ for the
// points that carry parameters, warnings.txt when there are warnings.
template <std::floating_point T>
void write_path_record(const ModelGraph& graph, const PathRecord<T>& path,
                       const std::filesystem::path& dir);

// Loads the stored points of a path record directory via points.csv.
template <std::floating_point T>
std::vector<StoredPoint<T>> read_path_points(
    const ModelGraph& graph, const std::filesystem::path& dir);

}  // namespace llpf
