#include "llpf/param_space.hpp"

#include <cmath>
#include <set>
#include <utility>

namespace llpf {

std::string_view to_string(ParamKind kind) {
  switch (kind) {
    case ParamKind::weight: return "weight";
    case ParamKind::bias: return "bias";
    case ParamKind::norm_scale: return "norm_scale";
    case ParamKind::norm_shift: return "norm_shift";
  }
  return "unknown";
}

bool is_norm(ParamKind kind) {
  return kind == ParamKind::norm_scale || kind == ParamKind::norm_shift;
}

std::string SliceInfo::key() const {
  std::string k = layer;
  k += '.';
  k += to_string(kind);
  return k;
}

ParamLayout::ParamLayout(std::vector<SliceInfo> slices) : slices_(std::move(slices)) {
  std::set<std::string> seen;
  for (auto& s : slices_) {
    if (s.length == 0) throw ValidationError("empty layer slice: " + s.key());
    if (!seen.insert(s.key()).second) throw ValidationError("duplicate layer slice: " + s.key());
    s.offset = total_;
    total_ += s.length;
  }
}

std::size_t ParamLayout::find(std::string_view key) const {
  for (std::size_t i = 0; i < slices_.size(); ++i) {
    if (slices_[i].key() == key) return i;
  }
  return npos;
}

std::size_t ParamLayout::index_of(std::string_view key) const {
  const auto i = find(key);
  if (i == npos) throw ValidationError("unknown layer slice: " + std::string(key));
  return i;
}

std::vector<std::string> slice_keys(const ParamLayout& layout) {
  std::vector<std::string> keys;
  keys.reserve(layout.slice_count());
  for (const auto& s : layout.slices()) keys.push_back(s.key());
  return keys;
}

template <std::floating_point T>
BasicParamVector<T>::BasicParamVector(LayoutPtr layout)
    : layout_(std::move(layout)), data_(layout_ ? layout_->size() : 0, T(0)) {}

template <std::floating_point T>
BasicParamVector<T>::BasicParamVector(LayoutPtr layout, std::vector<T> data)
    : layout_(std::move(layout)), data_(std::move(data)) {
  if (!layout_ || layout_->size() != data_.size()) {
    throw ValidationError("parameter data does not match layout size");
  }
}

template <std::floating_point T>
std::span<T> BasicParamVector<T>::slice(std::size_t index) {
  const auto& s = layout_->slices().at(index);
  return std::span<T>(data_).subspan(s.offset, s.length);
}

template <std::floating_point T>
std::span<const T> BasicParamVector<T>::slice(std::size_t index) const {
  const auto& s = layout_->slices().at(index);
  return std::span<const T>(data_).subspan(s.offset, s.length);
}

template <std::floating_point T>
std::span<const T> BasicParamVector<T>::slice(std::string_view key) const {
  return slice(layout_->index_of(key));
}

template <std::floating_point T>
bool BasicParamVector<T>::compatible(const BasicParamVector& other) const {
  if (layout_ == other.layout_) return true;
  return layout_ && other.layout_ && *layout_ == *other.layout_;
}

template <std::floating_point T>
void require_compatible(const BasicParamVector<T>& a, const BasicParamVector<T>& b) {
  if (!a.compatible(b)) throw ValidationError("layout mismatch");
}

template <std::floating_point T>
LayerStats layer_stats(std::span<const T> slice) {
  if (slice.empty()) throw ValidationError("empty layer");
  long double sum = 0;
  for (T x : slice) sum += x;
  const long double n = static_cast<long double>(slice.size());
  const long double mean = sum / n;
  long double sq = 0;
  for (T x : slice) {
    const long double d = static_cast<long double>(x) - mean;
    sq += d * d;
  }
  return {static_cast<double>(mean), static_cast<double>(sq / n), slice.size()};
}

template <std::floating_point T>
void variance_correction_into(std::span<const T> values, double target, std::span<T> out) {
  if (target < 0) throw ValidationError("negative target variance");
  if (out.size() != values.size()) throw ValidationError("output size mismatch");
  // Statistics are recomputed here in long double; layer_stats rounds to double.
  if (values.empty()) throw ValidationError("empty layer");
  long double sum = 0;
  for (T x : values) sum += x;
  const long double n = static_cast<long double>(values.size());
  const long double mean = sum / n;
  long double sq = 0;
  for (T x : values) {
    const long double d = static_cast<long double>(x) - mean;
    sq += d * d;
  }
  const long double var = sq / n;
  if (target > 0 && var <= kVarianceFloor) throw Error("degenerate variance");
  const long double scale = target > 0 ? std::sqrt(static_cast<long double>(target) / var) : 0.0L;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = static_cast<T>(mean + scale * (static_cast<long double>(values[i]) - mean));
  }
}

template <std::floating_point T>
std::vector<T> variance_correction(std::span<const T> values, double target) {
  std::vector<T> out(values.size());
  variance_correction_into<T>(values, target, out);
  return out;
}

template <std::floating_point T>
std::map<std::string, double> l2_distance(const BasicParamVector<T>& a,
                                          const BasicParamVector<T>& b,
                                          std::span<const std::string> keys) {
  require_compatible(a, b);
  if (keys.empty()) throw ValidationError("no layers selected");
  std::map<std::string, double> out;
  for (const auto& key : keys) {
    const auto idx = a.layout().index_of(key);
    const auto sa = a.slice(idx);
    const auto sb = b.slice(idx);
    long double acc = 0;
    for (std::size_t i = 0; i < sa.size(); ++i) {
      const long double d = static_cast<long double>(sa[i]) - sb[i];
      acc += d * d;
    }
    out[key] = static_cast<double>(std::sqrt(acc));
  }
  return out;
}

template <std::floating_point T>
double radial_norm_sq(std::span<const T> values) {
  long double acc = 0;
  for (T x : values) acc += static_cast<long double>(x) * x;
  return static_cast<double>(acc);
}

template <std::floating_point T>
double arc_length(std::span<const T> p0, std::span<const T> d) {
  if (p0.size() != d.size()) throw ValidationError("arc endpoints differ in size");
  const long double n0 = std::sqrt(static_cast<long double>(radial_norm_sq(p0)));
  const long double n1 = std::sqrt(static_cast<long double>(radial_norm_sq(d)));
  if (n0 == 0 || n1 == 0) throw Error("arc undefined at center");
  // angle = 2 atan2(|u - v|, |u + v|) on the unit vectors; stable near 0 and pi.
  long double diff = 0, sum = 0;
  for (std::size_t i = 0; i < p0.size(); ++i) {
    const long double u = p0[i] / n0;
    const long double v = d[i] / n1;
    diff += (u - v) * (u - v);
    sum += (u + v) * (u + v);
  }
  const long double angle = 2 * std::atan2(std::sqrt(diff), std::sqrt(sum));
  return static_cast<double>(0.5L * (n0 + n1) * angle);
}

template <std::floating_point T>
std::map<std::string, double> slice_variances(const BasicParamVector<T>& params) {
  std::map<std::string, double> out;
  const auto& slices = params.layout().slices();
  for (std::size_t i = 0; i < slices.size(); ++i) {
    out[slices[i].key()] = layer_stats<T>(params.slice(i)).variance;
  }
  return out;
}

#define LLPF_INSTANTIATE(T)                                                                    \
  template class BasicParamVector<T>;                                                          \
  template void require_compatible(const BasicParamVector<T>&, const BasicParamVector<T>&);    \
  template LayerStats layer_stats<T>(std::span<const T>);                                      \
  template std::vector<T> variance_correction<T>(std::span<const T>, double);                  \
  template void variance_correction_into<T>(std::span<const T>, double, std::span<T>);         \
  template std::map<std::string, double> l2_distance(                                          \
      const BasicParamVector<T>&, const BasicParamVector<T>&, std::span<const std::string>);   \
  template double radial_norm_sq<T>(std::span<const T>);                                       \
  template double arc_length<T>(std::span<const T>, std::span<const T>);                       \
  template std::map<std::string, double> slice_variances(const BasicParamVector<T>&);

LLPF_INSTANTIATE(float)
LLPF_INSTANTIATE(double)

#undef LLPF_INSTANTIATE

}  // namespace llpf
