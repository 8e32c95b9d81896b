#pragma once

// Flat parameter storage and the variance-sphere geometry shared by the
// path-finding drivers.

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "llpf/error.hpp"

namespace llpf {

enum class ParamKind : std::uint8_t {
  weight = 0,
  bias = 1,
  norm_scale = 2,
  norm_shift = 3,
};

std::string_view to_string(ParamKind kind);
bool is_norm(ParamKind kind);

// One named slice of the flat parameter vector.
struct SliceInfo {
  std::string layer;
  ParamKind kind = ParamKind::weight;
  std::size_t offset = 0;
  std::size_t length = 0;

  // "<layer>.<kind>", e.g. "fc1.weight". Unique within a layout.
  std::string key() const;

  bool operator==(const SliceInfo&) const = default;
};

// Ordered, gap-free partition of [0, D) into named slices.
class ParamLayout {
 public:
  ParamLayout() = default;
  // Offsets are assigned in order; throws on duplicate (layer, kind) pairs
  // or empty slices.
  explicit ParamLayout(std::vector<SliceInfo> slices);

  const std::vector<SliceInfo>& slices() const { return slices_; }
  std::size_t size() const { return total_; }
  std::size_t slice_count() const { return slices_.size(); }

  // Index of the slice with the given key, or npos.
  std::size_t find(std::string_view key) const;
  // Like find, but throws ValidationError for unknown keys.
  std::size_t index_of(std::string_view key) const;
  const SliceInfo& at(std::string_view key) const { return slices_[index_of(key)]; }

  bool operator==(const ParamLayout& other) const { return slices_ == other.slices_; }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::vector<SliceInfo> slices_;
  std::size_t total_ = 0;
};

using LayoutPtr = std::shared_ptr<const ParamLayout>;

template <std::floating_point T>
class BasicParamVector {
 public:
  using value_type = T;

  BasicParamVector() = default;
  // Zero-filled vector with the given layout.
  explicit BasicParamVector(LayoutPtr layout);
  BasicParamVector(LayoutPtr layout, std::vector<T> data);

  const ParamLayout& layout() const { return *layout_; }
  const LayoutPtr& layout_ptr() const { return layout_; }
  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

  std::span<T> slice(std::size_t index);
  std::span<const T> slice(std::size_t index) const;
  std::span<T> slice(std::string_view key) { return slice(layout_->index_of(key)); }
  std::span<const T> slice(std::string_view key) const;

  bool compatible(const BasicParamVector& other) const;

  template <std::floating_point U>
  BasicParamVector<U> cast() const {
    return BasicParamVector<U>(layout_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool operator==(const BasicParamVector& other) const {
    return compatible(other) && data_ == other.data_;
  }

 private:
  LayoutPtr layout_;
  std::vector<T> data_;
};

using ParamVector = BasicParamVector<float>;
using ParamVectorF64 = BasicParamVector<double>;

// Throws ValidationError("layout mismatch") unless a and b share a layout.
template <std::floating_point T>
void require_compatible(const BasicParamVector<T>& a, const BasicParamVector<T>& b);

struct LayerStats {
  double mean = 0.0;
  double variance = 0.0;  // population (1/n) variance
  std::size_t n = 0;
};

// Below this, a slice has no direction to rescale along.
inline constexpr double kVarianceFloor = 1e-12;

// Mean and 1/n variance, accumulated in long double regardless of T.
template <std::floating_point T>
LayerStats layer_stats(std::span<const T> slice);

// Rescales `values` about their mean so the population variance becomes
// `target`. Throws on an empty slice, a negative target, or a degenerate
// input variance (<= kVarianceFloor) paired with a positive target.
template <std::floating_point T>
std::vector<T> variance_correction(std::span<const T> values, double target);

// Same as variance_correction, writing into `out` (which may alias `values`).
template <std::floating_point T>
void variance_correction_into(std::span<const T> values, double target, std::span<T> out);

// Euclidean norm of a - b per requested slice key.
template <std::floating_point T>
std::map<std::string, double> l2_distance(const BasicParamVector<T>& a,
                                          const BasicParamVector<T>& b,
                                          std::span<const std::string> slice_keys);

// Sum of squares, i.e. squared distance to the origin.
template <std::floating_point T>
double radial_norm_sq(std::span<const T> values);

// Geodesic about the origin from p0 to d, with radius the mean of the two
// norms: ((|p0| + |d|) / 2) * angle(p0, d).
template <std::floating_point T>
double arc_length(std::span<const T> p0, std::span<const T> d);

// Variance of every slice, keyed by slice key.
template <std::floating_point T>
std::map<std::string, double> slice_variances(const BasicParamVector<T>& params);

// Keys of all slices in layout order.
std::vector<std::string> slice_keys(const ParamLayout& layout);

}  // namespace llpf
