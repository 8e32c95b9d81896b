#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "llpf/param_space.hpp"

namespace llpf {

// Per-sample activation shape in CHW order. Feature vectors are {d, 1, 1}.
struct Shape {
  int channels = 1;
  int height = 1;
  int width = 1;

  std::size_t size() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  bool flat() const { return height == 1 && width == 1; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

enum class LayerKind {
  dense,
  conv2d,
  batch_norm,
  relu,
  max_pool,
  avg_pool,
  flatten,
  residual_add,
};

std::string_view to_string(LayerKind kind);

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::relu;
  // Names of producing layers; empty means the network input.
  std::vector<std::string> inputs;
  int units = 0;    // dense output features, conv output channels
  int kernel = 0;   // conv / pool window; 0 on a pool means global
  int stride = 1;
  int padding = 0;
};

LayerSpec dense(std::string name, std::string input, int units);
LayerSpec conv2d(std::string name, std::string input, int channels, int kernel, int stride = 1,
                 int padding = 0);
LayerSpec batch_norm(std::string name, std::string input);
LayerSpec relu(std::string name, std::string input);
LayerSpec max_pool(std::string name, std::string input, int kernel);
LayerSpec avg_pool(std::string name, std::string input, int kernel);
LayerSpec flatten(std::string name, std::string input);
LayerSpec residual_add(std::string name, std::string lhs, std::string rhs);

// A validated DAG of layers with a single input and a single output.
// Layers are stored in a topological order (ties keep declaration order).
class ModelGraph {
 public:
  ModelGraph(std::string name, Shape input, std::vector<LayerSpec> layers);

  const std::string& name() const { return name_; }
  Shape input_shape() const { return input_; }
  std::size_t size() const { return layers_.size(); }
  const LayerSpec& layer(std::size_t i) const { return layers_[i]; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::span<const int> input_indices(std::size_t i) const { return inputs_[i]; }
  // Shape flowing into layer i (its first input).
  Shape in_shape(std::size_t i) const;
  Shape out_shape(std::size_t i) const { return shapes_[i]; }
  std::size_t output_index() const { return layers_.size() - 1; }
  int num_classes() const { return static_cast<int>(shapes_.back().size()); }
  std::size_t index_of(std::string_view layer) const;

  const LayoutPtr& param_layout() const { return layout_; }
  // Slice indices into param_layout(); npos when the layer has none.
  std::size_t weight_slice(std::size_t i) const { return weight_slice_[i]; }
  std::size_t bias_slice(std::size_t i) const { return bias_slice_[i]; }
  bool trainable(std::size_t i) const { return weight_slice_[i] != ParamLayout::npos; }
  // Names of layers that own parameters, in topological order.
  std::vector<std::string> trainable_layers() const;

  // Batch-norm running statistics live outside the parameter vector:
  // [mean(c), var(c)] per batch_norm layer, in layer order.
  std::size_t buffer_size() const { return buffer_total_; }
  std::size_t buffer_offset(std::size_t i) const { return buffer_offset_[i]; }

  // Stable textual description; digest() hashes it.
  std::string canonical() const;
  std::uint64_t digest() const;

 private:
  std::string name_;
  Shape input_;
  std::vector<LayerSpec> layers_;
  std::vector<std::vector<int>> inputs_;
  std::vector<Shape> shapes_;
  LayoutPtr layout_;
  std::vector<std::size_t> weight_slice_;
  std::vector<std::size_t> bias_slice_;
  std::vector<std::size_t> buffer_offset_;
  std::size_t buffer_total_ = 0;
};

inline constexpr int kMlpHidden = 32;

// Desk-scale model zoo: "mlp2", "lenet-micro", "resnet-micro".
ModelGraph make_model(std::string_view name, Shape input, int classes);
std::vector<std::string> model_names();

}  // namespace llpf
