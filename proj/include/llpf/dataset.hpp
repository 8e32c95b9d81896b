#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "llpf/graph.hpp"
#include "llpf/util.hpp"

namespace llpf {

enum class Split { train, test };

// Normalized samples stored contiguously in CHW order.
struct Dataset {
  Shape sample_shape;
  int num_classes = 0;
  Split split = Split::train;
  std::vector<float> inputs;
  std::vector<std::int32_t> labels;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::span<const float> sample(std::size_t i) const {
    return std::span<const float>(inputs).subspan(i * sample_shape.size(), sample_shape.size());
  }
  // Throws ValidationError when sizes or labels are inconsistent.
  void validate() const;
  Dataset subset(std::span<const std::size_t> indices) const;
};

struct DatasetPair {
  Dataset train;
  Dataset test;
};

// A gathered mini-batch.
struct Batch {
  Shape shape;
  std::size_t size = 0;
  std::vector<float> inputs;
  std::vector<std::int32_t> labels;
};

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices);
Batch full_batch(const Dataset& data);

// Seeded Gaussian clusters with unit within-class std. Centers are placed at
// pairwise distance >= `separation`. The first 80% (floored) of the shuffled
// samples form the train split.
DatasetPair gen_blobs(int classes, int dim, std::size_t n, std::uint64_t seed,
                      double separation = 6.0);

inline constexpr float kMnistMean = 0.1307f;
inline constexpr float kMnistStd = 0.3081f;

// Reads the four standard IDX files from `dir`, scales pixels to [0, 1] and
// normalizes with the dataset mean and std.
DatasetPair load_mnist(const std::filesystem::path& dir);

// Single IDX pair reader, exposed for tests.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 Split split);

// Writes raw uint8 images (N x rows x cols) and labels as IDX files.
void write_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
               std::span<const std::uint8_t> pixels, std::span<const std::uint8_t> label_bytes,
               int rows, int cols);

// First `per_class` samples of each class in a seeded shuffle of `data`.
Dataset class_balanced_subset(const Dataset& data, std::size_t per_class, std::uint64_t seed);

// Seeded subset of at most `count` samples (all of them if count >= size).
std::vector<std::size_t> sample_indices(std::size_t size, std::size_t count, std::uint64_t seed);

// Random rotation within +-degrees and random crop after zero padding, on a
// single normalized 1-channel image. The padding value is the normalized zero.
void augment_image(std::span<float> image, int height, int width, double max_degrees, int pad,
                   float background, Rng& rng);

}  // namespace llpf
