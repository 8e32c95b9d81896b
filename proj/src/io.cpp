#include "llpf/io.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <ctime>
#include <iomanip>
#include <sstream>

namespace llpf {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

template <typename U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw ValidationError("truncated checkpoint at offset " + std::to_string(pos_));
    }
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

struct Entry {
  std::string name;
  std::uint8_t kind;
  std::uint64_t count;
};

// Parameter slices in layout order, then running mean/var per batch_norm.
std::vector<Entry> entries_for(const ModelGraph& graph) {
  std::vector<Entry> out;
  for (const auto& s : graph.param_layout()->slices()) {
    out.push_back({s.layer, static_cast<std::uint8_t>(s.kind), s.length});
  }
  for (std::size_t i = 0; i < graph.size(); ++i) {
    if (graph.layer(i).kind != LayerKind::batch_norm) continue;
    const auto c = static_cast<std::uint64_t>(graph.in_shape(i).channels);
    out.push_back({graph.layer(i).name, kRunningMeanKind, c});
    out.push_back({graph.layer(i).name, kRunningVarKind, c});
  }
  return out;
}

}  // namespace

template <std::floating_point T>
std::string encode_checkpoint(const ModelGraph& graph, const ModelState<T>& state) {
  if (state.params.layout() != *graph.param_layout() ||
      state.buffers.size() != graph.buffer_size()) {
    throw ValidationError("model/checkpoint mismatch");
  }
  const auto entries = entries_for(graph);
  std::string out = "LLPF";
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, graph.digest());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
    out += e.name;
    put<std::uint8_t>(out, e.kind);
    put<std::uint64_t>(out, e.count);
  }
  const std::size_t payload_at = out.size();
  for (auto x : state.params.data()) put<float>(out, static_cast<float>(x));
  for (auto x : state.buffers) put<float>(out, static_cast<float>(x));
  const auto payload = std::span(reinterpret_cast<const std::uint8_t*>(out.data()) + payload_at,
                                 out.size() - payload_at);
  put<std::uint64_t>(out, fnv1a64(payload));
  return out;
}

template <std::floating_point T>
ModelState<T> decode_checkpoint(const ModelGraph& graph, std::string_view bytes) {
  Reader r(bytes);
  if (r.take(4) != "LLPF") throw ValidationError("not a checkpoint: bad magic at offset 0");
  if (auto v = r.get<std::uint32_t>(); v != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(v));
  }
  if (r.get<std::uint64_t>() != graph.digest()) throw ValidationError("model/checkpoint mismatch");
  const auto expected = entries_for(graph);
  const auto count = r.get<std::uint32_t>();
  if (count != expected.size()) throw ValidationError("model/checkpoint mismatch");
  std::uint64_t total = 0;
  for (const auto& e : expected) {
    const auto len = r.get<std::uint16_t>();
    const auto name = r.take(len);
    const auto kind = r.get<std::uint8_t>();
    const auto n = r.get<std::uint64_t>();
    if (name != e.name || kind != e.kind || n != e.count) {
      throw ValidationError("model/checkpoint mismatch");
    }
    total += n;
  }
  const std::size_t payload_at = r.pos();
  if (r.remaining() != total * sizeof(float) + sizeof(std::uint64_t)) {
    throw ValidationError("truncated checkpoint at offset " + std::to_string(bytes.size()));
  }
  const auto payload = std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()) + payload_at,
                                 total * sizeof(float));
  ModelState<T> state{BasicParamVector<T>(graph.param_layout()),
                      std::vector<T>(graph.buffer_size())};
  for (auto& x : state.params.data()) x = static_cast<T>(r.get<float>());
  for (auto& x : state.buffers) x = static_cast<T>(r.get<float>());
  if (r.get<std::uint64_t>() != fnv1a64(payload)) throw ValidationError("corrupt payload");
  return state;
}

template <std::floating_point T>
void save_checkpoint(const ModelGraph& graph, const ModelState<T>& state,
                     const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(graph, state));
}

template <std::floating_point T>
ModelState<T> load_checkpoint(const ModelGraph& graph, const std::filesystem::path& path) {
  try {
    return decode_checkpoint<T>(graph, read_file(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

namespace {

bool needs_quotes(std::string_view field) {
  return field.find_first_of(",\"\r\n") != std::string_view::npos;
}

}  // namespace

std::string to_csv(const Table& table) {
  std::string out;
  auto record = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out += ',';
      const auto& f = fields[i];
      if (!needs_quotes(f)) {
        out += f;
        continue;
      }
      out += '"';
      for (char c : f) {
        if (c == '"') out += '"';
        out += c;
      }
      out += '"';
    }
    out += "\r\n";
  };
  record(table.columns);
  for (const auto& row : table.rows) {
    if (row.size() != table.columns.size()) throw Error("CSV row width differs from header");
    record(row);
  }
  return out;
}

Table parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::size_t> record_lines;
  std::vector<std::string> fields;
  std::string field;
  std::size_t line = 1;
  std::size_t record_line = 1;
  std::size_t i = 0;
  bool any = false;
  auto end_field = [&] {
    fields.push_back(std::move(field));
    field.clear();
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(fields));
    record_lines.push_back(record_line);
    fields.clear();
    any = false;
  };
  while (i < text.size()) {
    const char c = text[i];
    if (!any) record_line = line;
    any = true;
    if (c == '"' && field.empty()) {
      ++i;
      for (;;) {
        if (i >= text.size()) {
          throw ValidationError("CSV line " + std::to_string(record_line) +
                                ": unterminated quoted field");
        }
        if (text[i] == '"') {
          if (i + 1 < text.size() && text[i + 1] == '"') {
            field += '"';
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        if (text[i] == '\n') ++line;
        field += text[i++];
      }
      if (i < text.size() && text[i] != ',' && text[i] != '\r' && text[i] != '\n') {
        throw ValidationError("CSV line " + std::to_string(line) +
                              ": unexpected character after closing quote");
      }
      continue;
    }
    if (c == ',') {
      end_field();
      ++i;
    } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      end_record();
      i += 2;
      ++line;
    } else if (c == '\n') {
      end_record();
      ++i;
      ++line;
    } else {
      field += c;
      ++i;
    }
  }
  if (any) end_record();

  Table t;
  if (records.empty()) throw ValidationError("CSV is empty");
  t.columns = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != t.columns.size()) {
      throw ValidationError("CSV line " + std::to_string(record_lines[r]) + ": expected " +
                            std::to_string(t.columns.size()) + " fields, found " +
                            std::to_string(records[r].size()));
    }
    t.rows.push_back(std::move(records[r]));
  }
  return t;
}

void write_csv(const Table& table, const std::filesystem::path& path) {
  write_file_atomic(path, to_csv(table));
}

Table read_csv(const std::filesystem::path& path) {
  try {
    return parse_csv(read_file(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

namespace {

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  std::ostringstream ss;
  ss << std::setprecision(6) << v;
  return ss.str();
}

std::string px(double v) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(2) << v;
  return ss.str();
}

// Roughly `target` evenly spaced round values covering [lo, hi].
std::vector<double> linear_ticks(double lo, double hi, int target) {
  const double span = hi - lo;
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> out;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step) {
    out.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
  }
  return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace

std::string render_svg(std::span<const Series> series, const ChartOptions& options,
                       std::vector<std::string>* warnings) {
  if (series.empty()) throw ValidationError("nothing to plot");
  if (options.log_y && !(options.log_floor > 0)) {
    throw ValidationError("log floor must be positive");
  }
  // Transformed copies: non-finite points dropped, log values clamped.
  std::vector<std::vector<std::pair<double, double>>> pts(series.size());
  std::size_t clamped = 0;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& sr = series[s];
    for (std::size_t k = 0; k < std::min(sr.x.size(), sr.y.size()); ++k) {
      double x = sr.x[k];
      double y = sr.y[k];
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      if (options.log_y) {
        if (y < options.log_floor) {
          y = options.log_floor;
          ++clamped;
        }
        y = std::log10(y);
      }
      pts[s].emplace_back(x, y);
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (clamped > 0 && warnings) {
    warnings->push_back(std::to_string(clamped) + " value(s) at or below zero clamped to " +
                        format_double(options.log_floor) + " on the log axis");
  }
  if (!std::isfinite(x0)) throw ValidationError("nothing to plot: no finite points");
  if (x1 == x0) {
    x0 -= 0.5;
    x1 += 0.5;
  }
  if (y1 == y0) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  if (options.log_y) {
    y0 = std::floor(y0);
    y1 = std::ceil(y1);
  } else {
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
  }

  const double W = options.width, H = options.height;
  const double left = 80, right = 170, top = 40, bottom = 60;
  const double pw = W - left - right, ph = H - top - bottom;
  auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!options.title.empty()) {
    svg << "<text x=\"" << px(left + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
        << xml_escape(options.title) << "</text>\n";
  }
  svg << "<g stroke=\"#ddd\" stroke-width=\"1\">\n";
  std::vector<double> yt;
  if (options.log_y) {
    for (double d = y0; d <= y1 + 1e-9; d += 1.0) yt.push_back(d);
  } else {
    yt = linear_ticks(y0, y1, 6);
  }
  const auto xt = linear_ticks(x0, x1, 8);
  for (double t : yt) {
    svg << "<line x1=\"" << px(left) << "\" y1=\"" << px(sy(t)) << "\" x2=\"" << px(left + pw)
        << "\" y2=\"" << px(sy(t)) << "\"/>\n";
  }
  for (double t : xt) {
    svg << "<line x1=\"" << px(sx(t)) << "\" y1=\"" << px(top) << "\" x2=\"" << px(sx(t))
        << "\" y2=\"" << px(top + ph) << "\"/>\n";
  }
  svg << "</g>\n";
  svg << "<rect x=\"" << px(left) << "\" y=\"" << px(top) << "\" width=\"" << px(pw)
      << "\" height=\"" << px(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double t : yt) {
    const std::string label = options.log_y ? "1e" + num(t) : num(t);
    svg << "<text x=\"" << px(left - 6) << "\" y=\"" << px(sy(t) + 4)
        << "\" text-anchor=\"end\">" << label << "</text>\n";
  }
  for (double t : xt) {
    svg << "<text x=\"" << px(sx(t)) << "\" y=\"" << px(top + ph + 18)
        << "\" text-anchor=\"middle\">" << num(t) << "</text>\n";
  }
  if (!options.x_label.empty()) {
    svg << "<text x=\"" << px(left + pw / 2) << "\" y=\"" << px(H - 14)
        << "\" text-anchor=\"middle\">" << xml_escape(options.x_label) << "</text>\n";
  }
  if (!options.y_label.empty()) {
    svg << "<text transform=\"translate(18," << px(top + ph / 2)
        << ") rotate(-90)\" text-anchor=\"middle\">" << xml_escape(options.y_label)
        << "</text>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % std::size(kPalette)];
    if (!pts[s].empty()) {
      svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t k = 0; k < pts[s].size(); ++k) {
        if (k) svg << ' ';
        svg << px(sx(pts[s][k].first)) << ',' << px(sy(pts[s][k].second));
      }
      svg << "\"/>\n";
    }
    const double ly = top + 10 + 18.0 * static_cast<double>(s);
    svg << "<line x1=\"" << px(left + pw + 12) << "\" y1=\"" << px(ly) << "\" x2=\""
        << px(left + pw + 32) << "\" y2=\"" << px(ly) << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << px(left + pw + 38) << "\" y=\"" << px(ly + 4) << "\">"
        << xml_escape(series[s].name) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<Series> table_series(const Table& table, std::string_view x_column,
                                 std::span<const std::string> y_columns) {
  const auto xi = table.column(x_column);
  if (xi == table.columns.size()) {
    throw ValidationError("no column '" + std::string(x_column) + "'");
  }
  auto parse = [](const std::string& cell, double& out) {
    if (cell.empty()) return false;
    try {
      std::size_t used = 0;
      out = std::stod(cell, &used);
      return used == cell.size();
    } catch (const std::exception&) {
      return false;
    }
  };
  std::vector<Series> out;
  for (const auto& name : y_columns) {
    const auto yi = table.column(name);
    if (yi == table.columns.size()) throw ValidationError("no column '" + name + "'");
    Series s{name, {}, {}};
    for (const auto& row : table.rows) {
      double x, y;
      if (parse(row[xi], x) && parse(row[yi], y)) {
        s.x.push_back(x);
        s.y.push_back(y);
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

void Manifest::set(std::string key, std::string value) {
  for (auto& [k, v] : entries) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries.emplace_back(std::move(key), std::move(value));
}

std::string Manifest::text() const {
  std::string out;
  for (const auto& [k, v] : entries) out += k + ": " + v + "\n";
  return out;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

template <std::floating_point T>
void write_path_record(const ModelGraph& graph, const PathRecord<T>& path,
                       const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "checkpoints");
  write_csv(path_metrics(path), dir / "metrics.csv");
  Table index;
  index.columns = {"index", "iteration", "stage", "checkpoint"};
  for (std::size_t i = 0; i < path.points.size(); ++i) {
    const auto& pt = path.points[i];
    if (!pt.state) continue;
    char name[48];
    std::snprintf(name, sizeof(name), "point_%08zu.ckpt", pt.iteration);
    save_checkpoint(graph, *pt.state, dir / "checkpoints" / name);
    index.rows.push_back({std::to_string(i), std::to_string(pt.iteration),
                          std::to_string(pt.stage), std::string("checkpoints/") + name});
  }
  write_csv(index, dir / "points.csv");
  if (!path.warnings.empty()) {
    std::string text;
    for (const auto& w : path.warnings) text += w + "\n";
    write_file_atomic(dir / "warnings.txt", text);
  }
}

template <std::floating_point T>
std::vector<StoredPoint<T>> read_path_points(const ModelGraph& graph,
                                             const std::filesystem::path& dir) {
  const auto index = read_csv(dir / "points.csv");
  const auto it_col = index.column("iteration");
  const auto ck_col = index.column("checkpoint");
  if (it_col == index.columns.size() || ck_col == index.columns.size()) {
    throw ValidationError((dir / "points.csv").string() + ": missing iteration/checkpoint column");
  }
  std::vector<StoredPoint<T>> out;
  for (const auto& row : index.rows) {
    const auto iteration = static_cast<std::size_t>(std::stoull(row[it_col]));
    if (!out.empty() && iteration == out.back().iteration) continue;
    out.push_back({iteration, load_checkpoint<T>(graph, dir / row[ck_col])});
  }
  return out;
}

#define LLPF_INSTANTIATE(T)                                                                   \
  template std::string encode_checkpoint<T>(const ModelGraph&, const ModelState<T>&);         \
  template ModelState<T> decode_checkpoint<T>(const ModelGraph&, std::string_view);           \
  template void save_checkpoint<T>(const ModelGraph&, const ModelState<T>&,                   \
                                   const std::filesystem::path&);                             \
  template ModelState<T> load_checkpoint<T>(const ModelGraph&, const std::filesystem::path&); \
  template void write_path_record<T>(const ModelGraph&, const PathRecord<T>&,                 \
                                     const std::filesystem::path&);                           \
  template std::vector<StoredPoint<T>> read_path_points<T>(const ModelGraph&,                 \
                                                           const std::filesystem::path&);

LLPF_INSTANTIATE(float)
LLPF_INSTANTIATE(double)

#undef LLPF_INSTANTIATE

}  // namespace llpf
