#include "llpf/graph.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <utility>

#include "llpf/util.hpp"

namespace llpf {

std::string to_string(const Shape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" +
         std::to_string(s.width);
}

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::batch_norm: return "batch_norm";
    case LayerKind::relu: return "relu";
    case LayerKind::max_pool: return "max_pool";
    case LayerKind::avg_pool: return "avg_pool";
    case LayerKind::flatten: return "flatten";
    case LayerKind::residual_add: return "residual_add";
  }
  return "unknown";
}

namespace {

std::vector<std::string> single_input(std::string input) {
  if (input.empty()) return {};
  return {std::move(input)};
}

}  // namespace

LayerSpec dense(std::string name, std::string input, int units) {
  return {std::move(name), LayerKind::dense, single_input(std::move(input)), units};
}

LayerSpec conv2d(std::string name, std::string input, int channels, int kernel, int stride,
                 int padding) {
  return {std::move(name), LayerKind::conv2d, single_input(std::move(input)), channels, kernel,
          stride, padding};
}

LayerSpec batch_norm(std::string name, std::string input) {
  return {std::move(name), LayerKind::batch_norm, single_input(std::move(input))};
}

LayerSpec relu(std::string name, std::string input) {
  return {std::move(name), LayerKind::relu, single_input(std::move(input))};
}

LayerSpec max_pool(std::string name, std::string input, int kernel) {
  return {std::move(name), LayerKind::max_pool, single_input(std::move(input)), 0, kernel,
          kernel};
}

LayerSpec avg_pool(std::string name, std::string input, int kernel) {
  return {std::move(name), LayerKind::avg_pool, single_input(std::move(input)), 0, kernel,
          std::max(kernel, 1)};
}

LayerSpec flatten(std::string name, std::string input) {
  return {std::move(name), LayerKind::flatten, single_input(std::move(input))};
}

LayerSpec residual_add(std::string name, std::string lhs, std::string rhs) {
  return {std::move(name), LayerKind::residual_add, {std::move(lhs), std::move(rhs)}};
}

ModelGraph::ModelGraph(std::string name, Shape input, std::vector<LayerSpec> layers)
    : name_(std::move(name)), input_(input) {
  if (layers.empty()) throw ValidationError("model graph has no layers");
  if (input.channels < 1 || input.height < 1 || input.width < 1) {
    throw ValidationError("invalid input shape " + to_string(input));
  }

  std::map<std::string, std::size_t> by_name;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].name.empty()) throw ValidationError("layer without a name");
    if (!by_name.emplace(layers[i].name, i).second) {
      throw ValidationError("duplicate layer name: " + layers[i].name);
    }
  }

  // Kahn's algorithm; the smallest declaration index is taken first.
  const std::size_t n = layers.size();
  std::vector<std::vector<std::size_t>> deps(n), users(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& in : layers[i].inputs) {
      auto it = by_name.find(in);
      if (it == by_name.end()) {
        throw ValidationError("layer " + layers[i].name + " reads unknown input " + in);
      }
      deps[i].push_back(it->second);
      users[it->second].push_back(i);
    }
  }
  std::vector<std::size_t> pending(n);
  std::set<std::size_t> ready;
  for (std::size_t i = 0; i < n; ++i) {
    pending[i] = deps[i].size();
    if (pending[i] == 0) ready.insert(i);
  }
  std::vector<std::size_t> order;
  while (!ready.empty()) {
    const auto i = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(i);
    for (auto u : users[i]) {
      if (--pending[u] == 0) ready.insert(u);
    }
  }
  if (order.size() != n) throw ValidationError("cyclic graph");

  std::size_t sinks = 0;
  for (std::size_t i = 0; i < n; ++i) sinks += users[i].empty() ? 1 : 0;
  if (sinks != 1) throw ValidationError("model graph must have exactly one output layer");
  if (!users[order.back()].empty()) throw ValidationError("output layer is not last");

  std::vector<std::size_t> position(n);
  for (std::size_t k = 0; k < n; ++k) position[order[k]] = k;
  for (auto i : order) {
    layers_.push_back(std::move(layers[i]));
    std::vector<int> ins;
    for (auto d : deps[i]) ins.push_back(static_cast<int>(position[d]));
    inputs_.push_back(std::move(ins));
  }

  std::vector<SliceInfo> slices;
  weight_slice_.assign(n, ParamLayout::npos);
  bias_slice_.assign(n, ParamLayout::npos);
  buffer_offset_.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& L = layers_[i];
    const auto& ins = inputs_[i];
    auto fail = [&](const std::string& why) {
      throw ValidationError("layer " + L.name + " (" + std::string(to_string(L.kind)) +
                            "): " + why);
    };
    if (L.kind == LayerKind::residual_add) {
      if (ins.size() != 2) fail("needs exactly two inputs");
    } else if (ins.size() > 1) {
      fail("takes a single input");
    }
    const Shape in = ins.empty() ? input_ : shapes_[ins[0]];
    Shape out = in;
    switch (L.kind) {
      case LayerKind::dense:
        if (L.units < 1) fail("units must be positive");
        if (!in.flat()) fail("input must be flat, got " + to_string(in));
        out = {L.units, 1, 1};
        weight_slice_[i] = slices.size();
        slices.push_back({L.name, ParamKind::weight, 0, in.size() * L.units});
        bias_slice_[i] = slices.size();
        slices.push_back({L.name, ParamKind::bias, 0, static_cast<std::size_t>(L.units)});
        break;
      case LayerKind::conv2d: {
        if (L.units < 1 || L.kernel < 1 || L.stride < 1 || L.padding < 0) fail("bad geometry");
        const int h = (in.height + 2 * L.padding - L.kernel) / L.stride + 1;
        const int w = (in.width + 2 * L.padding - L.kernel) / L.stride + 1;
        if (in.height + 2 * L.padding < L.kernel || in.width + 2 * L.padding < L.kernel) {
          fail("kernel larger than input " + to_string(in));
        }
        out = {L.units, h, w};
        weight_slice_[i] = slices.size();
        slices.push_back({L.name, ParamKind::weight, 0,
                          static_cast<std::size_t>(L.units) * in.channels * L.kernel * L.kernel});
        bias_slice_[i] = slices.size();
        slices.push_back({L.name, ParamKind::bias, 0, static_cast<std::size_t>(L.units)});
        break;
      }
      case LayerKind::batch_norm:
        weight_slice_[i] = slices.size();
        slices.push_back({L.name, ParamKind::norm_scale, 0, static_cast<std::size_t>(in.channels)});
        bias_slice_[i] = slices.size();
        slices.push_back({L.name, ParamKind::norm_shift, 0, static_cast<std::size_t>(in.channels)});
        buffer_offset_[i] = buffer_total_;
        buffer_total_ += 2 * static_cast<std::size_t>(in.channels);
        break;
      case LayerKind::relu:
        break;
      case LayerKind::max_pool:
      case LayerKind::avg_pool:
        if (L.kernel == 0) {
          out = {in.channels, 1, 1};
        } else {
          if (L.kernel < 1 || L.stride < 1) fail("bad pool geometry");
          if (in.height < L.kernel || in.width < L.kernel) fail("pool larger than input");
          out = {in.channels, (in.height - L.kernel) / L.stride + 1,
                 (in.width - L.kernel) / L.stride + 1};
        }
        break;
      case LayerKind::flatten:
        out = {static_cast<int>(in.size()), 1, 1};
        break;
      case LayerKind::residual_add:
        if (shapes_[ins[1]] != in) fail("branch shapes differ");
        break;
    }
    shapes_.push_back(out);
  }
  layout_ = std::make_shared<const ParamLayout>(std::move(slices));
  if (layout_->size() == 0) throw ValidationError("model has no trainable parameters");
}

Shape ModelGraph::in_shape(std::size_t i) const {
  return inputs_[i].empty() ? input_ : shapes_[inputs_[i][0]];
}

std::size_t ModelGraph::index_of(std::string_view layer) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].name == layer) return i;
  }
  throw ValidationError("unknown layer: " + std::string(layer));
}

std::vector<std::string> ModelGraph::trainable_layers() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (trainable(i)) out.push_back(layers_[i].name);
  }
  return out;
}

std::string ModelGraph::canonical() const {
  std::ostringstream os;
  os << "model " << name_ << " input " << to_string(input_) << '\n';
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& L = layers_[i];
    os << L.name << ' ' << to_string(L.kind) << " in=";
    for (std::size_t k = 0; k < inputs_[i].size(); ++k) {
      if (k) os << ',';
      os << layers_[inputs_[i][k]].name;
    }
    os << " units=" << L.units << " kernel=" << L.kernel << " stride=" << L.stride
       << " padding=" << L.padding << '\n';
  }
  return os.str();
}

std::uint64_t ModelGraph::digest() const { return fnv1a64(canonical()); }

ModelGraph make_model(std::string_view name, Shape input, int classes) {
  if (classes < 2) throw ValidationError("need at least two classes");
  if (name == "mlp2") {
    return ModelGraph("mlp2", input,
                      {flatten("flatten", ""), dense("fc1", "flatten", kMlpHidden),
                       relu("relu1", "fc1"), dense("fc2", "relu1", classes)});
  }
  if (name == "lenet-micro") {
    return ModelGraph("lenet-micro", input,
                      {conv2d("conv1", "", 4, 5), relu("relu1", "conv1"),
                       max_pool("pool1", "relu1", 2), conv2d("conv2", "pool1", 8, 3),
                       relu("relu2", "conv2"), max_pool("pool2", "relu2", 2),
                       flatten("flatten", "pool2"), dense("fc1", "flatten", 32),
                       relu("relu3", "fc1"), dense("fc2", "relu3", classes)});
  }
  if (name == "resnet-micro") {
    constexpr int w = 8;
    return ModelGraph(
        "resnet-micro", input,
        {
            conv2d("stem.conv", "", w, 3, 1, 1),
            batch_norm("stem.bn", "stem.conv"),
            relu("stem.relu", "stem.bn"),
            // identity-shortcut block
            conv2d("block1.main.conv1", "stem.relu", w, 3, 1, 1),
            batch_norm("block1.main.bn1", "block1.main.conv1"),
            relu("block1.main.relu1", "block1.main.bn1"),
            conv2d("block1.main.conv2", "block1.main.relu1", w, 3, 1, 1),
            batch_norm("block1.main.bn2", "block1.main.conv2"),
            residual_add("block1.add", "block1.main.bn2", "stem.relu"),
            relu("block1.relu", "block1.add"),
            // downsampling block with a projection shortcut
            conv2d("block2.main.conv1", "block1.relu", 2 * w, 3, 2, 1),
            batch_norm("block2.main.bn1", "block2.main.conv1"),
            relu("block2.main.relu1", "block2.main.bn1"),
            conv2d("block2.main.conv2", "block2.main.relu1", 2 * w, 3, 1, 1),
            batch_norm("block2.main.bn2", "block2.main.conv2"),
            conv2d("block2.shortcut.conv", "block1.relu", 2 * w, 1, 2, 0),
            batch_norm("block2.shortcut.bn", "block2.shortcut.conv"),
            residual_add("block2.add", "block2.main.bn2", "block2.shortcut.bn"),
            relu("block2.relu", "block2.add"),
            avg_pool("head.pool", "block2.relu", 0),
            flatten("head.flatten", "head.pool"),
            dense("head.fc", "head.flatten", classes),
        });
  }
  throw ValidationError("unknown model: " + std::string(name));
}

std::vector<std::string> model_names() { return {"mlp2", "lenet-micro", "resnet-micro"}; }

}  // namespace llpf
