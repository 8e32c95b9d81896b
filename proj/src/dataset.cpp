#include "llpf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <string>

#include "llpf/error.hpp"

namespace llpf {

void Dataset::validate() const {
  if (num_classes < 2) throw ValidationError("dataset needs at least two classes");
  if (inputs.size() != labels.size() * sample_shape.size()) {
    throw ValidationError("dataset inputs do not match label count");
  }
  for (auto y : labels) {
    if (y < 0 || y >= num_classes) throw ValidationError("label out of range");
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out{sample_shape, num_classes, split, {}, {}};
  const auto stride = sample_shape.size();
  out.inputs.reserve(indices.size() * stride);
  out.labels.reserve(indices.size());
  for (auto i : indices) {
    auto s = sample(i);
    out.inputs.insert(out.inputs.end(), s.begin(), s.end());
    out.labels.push_back(labels.at(i));
  }
  return out;
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  Batch b{data.sample_shape, indices.size(), {}, {}};
  const auto stride = data.sample_shape.size();
  b.inputs.resize(indices.size() * stride);
  b.labels.resize(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    auto s = data.sample(indices[k]);
    std::copy(s.begin(), s.end(), b.inputs.begin() + k * stride);
    b.labels[k] = data.labels[indices[k]];
  }
  return b;
}

Batch full_batch(const Dataset& data) {
  return Batch{data.sample_shape, data.size(), data.inputs, data.labels};
}

namespace {

template <typename V>
void shuffle(std::vector<V>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[uniform_index(rng, i)]);
  }
}

}  // namespace

DatasetPair gen_blobs(int classes, int dim, std::size_t n, std::uint64_t seed,
                      double separation) {
  if (classes < 2) throw ValidationError("blobs: classes must be >= 2");
  if (dim < 1) throw ValidationError("blobs: dim must be >= 1");
  if (n < static_cast<std::size_t>(classes)) throw ValidationError("blobs: n must be >= classes");
  if (!(separation > 0)) throw ValidationError("blobs: separation must be positive");
  Rng rng(seed);

  std::vector<std::vector<double>> centers(classes, std::vector<double>(dim, 0.0));
  if (dim >= classes) {
    // Orthonormal directions scaled so every pair sits `separation` apart.
    for (int k = 0; k < classes; ++k) {
      auto& c = centers[k];
      for (;;) {
        for (auto& x : c) x = standard_normal(rng);
        for (int j = 0; j < k; ++j) {
          double dot = 0;
          for (int i = 0; i < dim; ++i) dot += c[i] * centers[j][i];
          for (int i = 0; i < dim; ++i) c[i] -= dot * centers[j][i];
        }
        double norm = 0;
        for (auto x : c) norm += x * x;
        norm = std::sqrt(norm);
        if (norm > 1e-6) {
          for (auto& x : c) x /= norm;
          break;
        }
      }
    }
    for (auto& c : centers) {
      for (auto& x : c) x *= separation / std::numbers::sqrt2;
    }
  } else {
    // Evenly spaced along a random line.
    std::vector<double> u(dim);
    double norm = 0;
    do {
      norm = 0;
      for (auto& x : u) {
        x = standard_normal(rng);
        norm += x * x;
      }
    } while (norm < 1e-12);
    norm = std::sqrt(norm);
    for (int k = 0; k < classes; ++k) {
      const double t = separation * (k - 0.5 * (classes - 1));
      for (int i = 0; i < dim; ++i) centers[k][i] = t * u[i] / norm;
    }
  }

  std::vector<float> inputs(n * dim);
  std::vector<std::int32_t> labels(n);
  for (std::size_t s = 0; s < n; ++s) {
    const int k = static_cast<int>(s % classes);
    labels[s] = k;
    for (int i = 0; i < dim; ++i) {
      inputs[s * dim + i] = static_cast<float>(centers[k][i] + standard_normal(rng));
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(order, rng);

  const std::size_t n_train = (n * 8) / 10;
  Dataset all{{dim, 1, 1}, classes, Split::train, std::move(inputs), std::move(labels)};
  DatasetPair out;
  out.train = all.subset(std::span(order).subspan(0, n_train));
  out.test = all.subset(std::span(order).subspan(n_train));
  out.test.split = Split::test;
  return out;
}

namespace {

std::uint32_t read_be32(const std::string& bytes, std::size_t offset, const std::string& file) {
  if (offset + 4 > bytes.size()) {
    throw ValidationError(file + ": truncated header at offset " + std::to_string(offset));
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<std::uint8_t>(bytes[offset + i]);
  return v;
}

void put_be32(std::string& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 Split split) {
  const auto img = read_file(images);
  const auto lab = read_file(labels);
  const auto img_name = images.string();
  const auto lab_name = labels.string();

  if (auto m = read_be32(img, 0, img_name); m != kImageMagic) {
    throw ValidationError(img_name + ": bad magic " + hex64(m) + " at offset 0");
  }
  if (auto m = read_be32(lab, 0, lab_name); m != kLabelMagic) {
    throw ValidationError(lab_name + ": bad magic " + hex64(m) + " at offset 0");
  }
  const std::size_t count = read_be32(img, 4, img_name);
  const int rows = static_cast<int>(read_be32(img, 8, img_name));
  const int cols = static_cast<int>(read_be32(img, 12, img_name));
  const std::size_t label_count = read_be32(lab, 4, lab_name);
  if (label_count != count) {
    throw ValidationError(lab_name + ": label count " + std::to_string(label_count) +
                          " differs from image count " + std::to_string(count) +
                          " at offset 4");
  }
  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  if (img.size() < 16 + count * pixels) {
    throw ValidationError(img_name + ": truncated payload at offset " +
                          std::to_string(img.size()));
  }
  if (lab.size() < 8 + count) {
    throw ValidationError(lab_name + ": truncated payload at offset " +
                          std::to_string(lab.size()));
  }

  Dataset out{{1, rows, cols}, 10, split, {}, {}};
  out.inputs.resize(count * pixels);
  out.labels.resize(count);
  for (std::size_t i = 0; i < count * pixels; ++i) {
    const float x = static_cast<std::uint8_t>(img[16 + i]) / 255.0f;
    out.inputs[i] = (x - kMnistMean) / kMnistStd;
  }
  for (std::size_t i = 0; i < count; ++i) {
    const int y = static_cast<std::uint8_t>(lab[8 + i]);
    if (y > 9) {
      throw ValidationError(lab_name + ": label " + std::to_string(y) + " at offset " +
                            std::to_string(8 + i));
    }
    out.labels[i] = y;
  }
  return out;
}

DatasetPair load_mnist(const std::filesystem::path& dir) {
  DatasetPair out;
  out.train = load_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte",
                       Split::train);
  out.test = load_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte",
                      Split::test);
  return out;
}

void write_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
               std::span<const std::uint8_t> pixels, std::span<const std::uint8_t> label_bytes,
               int rows, int cols) {
  const std::size_t per = static_cast<std::size_t>(rows) * cols;
  if (per == 0 || pixels.size() != label_bytes.size() * per) {
    throw ValidationError("write_idx: pixel count does not match labels");
  }
  std::string img;
  put_be32(img, kImageMagic);
  put_be32(img, static_cast<std::uint32_t>(label_bytes.size()));
  put_be32(img, static_cast<std::uint32_t>(rows));
  put_be32(img, static_cast<std::uint32_t>(cols));
  img.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
  std::string lab;
  put_be32(lab, kLabelMagic);
  put_be32(lab, static_cast<std::uint32_t>(label_bytes.size()));
  lab.append(reinterpret_cast<const char*>(label_bytes.data()), label_bytes.size());
  write_file_atomic(images, img);
  write_file_atomic(labels, lab);
}

std::vector<std::size_t> sample_indices(std::size_t size, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> order(size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (count >= size) return order;
  Rng rng(seed);
  shuffle(order, rng);
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

Dataset class_balanced_subset(const Dataset& data, std::size_t per_class, std::uint64_t seed) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  shuffle(order, rng);
  std::vector<std::size_t> taken(data.num_classes, 0);
  std::vector<std::size_t> keep;
  for (auto i : order) {
    auto& t = taken[data.labels[i]];
    if (t < per_class) {
      ++t;
      keep.push_back(i);
    }
  }
  return data.subset(keep);
}

void augment_image(std::span<float> image, int height, int width, double max_degrees, int pad,
                   float background, Rng& rng) {
  const double angle = uniform(rng, -max_degrees, max_degrees) * std::numbers::pi / 180.0;
  const int dx = pad > 0 ? static_cast<int>(uniform_index(rng, 2 * pad + 1)) - pad : 0;
  const int dy = pad > 0 ? static_cast<int>(uniform_index(rng, 2 * pad + 1)) - pad : 0;
  const std::vector<float> src(image.begin(), image.end());
  const double cy = 0.5 * (height - 1);
  const double cx = 0.5 * (width - 1);
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  auto at = [&](int y, int x) -> double {
    if (y < 0 || y >= height || x < 0 || x >= width) return background;
    return src[static_cast<std::size_t>(y) * width + x];
  };
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      // Crop shift, then inverse rotation about the image center.
      const double ty = (y + dy) - cy;
      const double tx = (x + dx) - cx;
      const double sy = c * ty - s * tx + cy;
      const double sx = s * ty + c * tx + cx;
      const int y0 = static_cast<int>(std::floor(sy));
      const int x0 = static_cast<int>(std::floor(sx));
      const double fy = sy - y0;
      const double fx = sx - x0;
      const double v = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
                       fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
      image[static_cast<std::size_t>(y) * width + x] = static_cast<float>(v);
    }
  }
}

}  // namespace llpf
