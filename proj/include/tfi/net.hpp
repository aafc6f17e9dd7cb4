// Copyright 2026 The tfisim Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TFI_NET_HPP_
#define TFI_NET_HPP_

// Tiny feed-forward networks over channel-first tensors: a layered DAG with
// add/concat skip edges, per-layer output taps, flat parameter vectors and
// reverse-mode differentiation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "tfi/errors.hpp"
#include "tfi/random.hpp"
#include "tfi/tensor.hpp"

namespace tfi {

enum class LayerKind { kInput, kDense, kConv3x3, kRelu, kMeanPool2, kFlatten, kAdd, kConcat };

inline std::string_view LayerKindName(LayerKind kind) {
  switch (kind) {
    case LayerKind::kInput: return "input";
    case LayerKind::kDense: return "dense";
    case LayerKind::kConv3x3: return "conv";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kMeanPool2: return "pool";
    case LayerKind::kFlatten: return "flatten";
    case LayerKind::kAdd: return "add";
    case LayerKind::kConcat: return "concat";
  }
  return "?";
}

struct LayerSpec {
  LayerKind kind = LayerKind::kInput;
  // Output features for dense, output channels for conv; unused otherwise.
  std::size_t units = 0;
  // Producer node ids. Empty means "the previous node"; add/concat take the
  // previous node plus one skip source.
  std::vector<std::size_t> inputs;
  std::string name;
  bool tap = false;
};

struct ParamSegment {
  std::size_t node = 0;
  std::size_t offset = 0;
  std::size_t weight_length = 0;
  std::size_t bias_length = 0;
  std::size_t length() const { return weight_length + bias_length; }
  friend bool operator==(const ParamSegment&, const ParamSegment&) = default;
};

struct ParamLayout {
  std::vector<ParamSegment> segments;
  std::size_t total = 0;
  friend bool operator==(const ParamLayout&, const ParamLayout&) = default;
};

// Flat trainable parameters in canonical order: nodes ascending, weights
// (row-major) then biases within a node.
struct ParamVector {
  std::vector<double> values;
  std::shared_ptr<const ParamLayout> layout;

  std::size_t size() const { return values.size(); }
};

class ArchitectureGraph {
 public:
  static constexpr std::size_t kNoParams = std::numeric_limits<std::size_t>::max();

  // `layers` excludes the input node; layers[i] becomes node i + 1.
  ArchitectureGraph(Shape input_shape, std::vector<LayerSpec> layers)
      : layout_(std::make_shared<ParamLayout>()) {
    if (input_shape.empty()) throw ShapeError("architecture input shape is empty");
    LayerSpec input;
    input.kind = LayerKind::kInput;
    input.name = "input";
    nodes_.push_back(std::move(input));
    shapes_.push_back(input_shape);
    for (auto& layer : layers) nodes_.push_back(std::move(layer));
    Validate();
  }

  // Declarative text form, one layer per line:
  //   input 3 16 16
  //   conv 8 as stem
  //   relu tap
  //   add stem        # previous node + skip from "stem"
  //   dense 8 tap
  // Options after the layer arguments: `tap`, `as <name>`. `#` starts a
  // comment.
  static ArchitectureGraph Parse(std::string_view text);

  std::string Describe() const;

  const Shape& input_shape() const { return shapes_[0]; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t output_node() const { return nodes_.size() - 1; }
  const LayerSpec& node(std::size_t id) const { return nodes_.at(id); }
  const Shape& node_shape(std::size_t id) const { return shapes_.at(id); }
  const Shape& output_shape() const { return shapes_.back(); }
  const std::vector<std::size_t>& taps() const { return taps_; }
  std::size_t tap_count() const { return taps_.size(); }
  const Shape& tap_shape(std::size_t tap) const { return shapes_.at(taps_.at(tap)); }
  const ParamLayout& layout() const { return *layout_; }
  std::shared_ptr<const ParamLayout> shared_layout() const { return layout_; }
  std::size_t param_offset(std::size_t id) const { return param_offsets_.at(id); }
  std::size_t param_count() const { return layout_->total; }

  // True when the tap's block (nodes after the previous tap, up to and
  // including this tap) contains an add or concat junction.
  bool IsSkipFed(std::size_t tap) const {
    const std::size_t begin = tap == 0 ? 1 : taps_.at(tap - 1) + 1;
    for (std::size_t id = begin; id <= taps_.at(tap); ++id) {
      const LayerKind k = nodes_[id].kind;
      if (k == LayerKind::kAdd || k == LayerKind::kConcat) return true;
    }
    return false;
  }

 private:
  void Validate();

  std::vector<LayerSpec> nodes_;
  std::vector<Shape> shapes_;
  std::vector<std::size_t> taps_;
  std::vector<std::size_t> param_offsets_;
  std::shared_ptr<ParamLayout> layout_;
};

inline void ArchitectureGraph::Validate() {
  auto fail = [](std::size_t id, const std::string& msg) {
    throw ShapeError("layer " + std::to_string(id) + ": " + msg);
  };
  std::vector<std::size_t> consumers(nodes_.size(), 0);
  param_offsets_.assign(nodes_.size(), kNoParams);
  std::size_t offset = 0;
  for (std::size_t id = 1; id < nodes_.size(); ++id) {
    LayerSpec& spec = nodes_[id];
    if (spec.kind == LayerKind::kInput) fail(id, "only node 0 may be an input");
    const bool binary = spec.kind == LayerKind::kAdd || spec.kind == LayerKind::kConcat;
    if (spec.inputs.empty()) spec.inputs.push_back(id - 1);
    if (binary && spec.inputs.size() == 1) fail(id, "add/concat needs a skip source");
    if (binary && spec.inputs[0] != id - 1) spec.inputs.insert(spec.inputs.begin(), id - 1);
    if (spec.inputs.size() != (binary ? 2u : 1u)) fail(id, "wrong number of inputs");
    for (std::size_t src : spec.inputs) {
      if (src >= id) fail(id, "inputs must come from earlier nodes");
      ++consumers[src];
    }
    const Shape& in = shapes_[spec.inputs[0]];
    Shape out;
    std::size_t weights = 0;
    std::size_t biases = 0;
    switch (spec.kind) {
      case LayerKind::kDense:
        if (in.size() != 1) fail(id, "dense expects a rank-1 input; add a flatten");
        if (spec.units == 0) fail(id, "dense needs a positive unit count");
        out = {spec.units};
        weights = spec.units * in[0];
        biases = spec.units;
        break;
      case LayerKind::kConv3x3:
        if (in.size() != 3) fail(id, "conv expects a [C, H, W] input");
        if (spec.units == 0) fail(id, "conv needs a positive channel count");
        out = {spec.units, in[1], in[2]};
        weights = spec.units * in[0] * 9;
        biases = spec.units;
        break;
      case LayerKind::kRelu:
        out = in;
        break;
      case LayerKind::kMeanPool2:
        if (in.size() != 3 || in[1] % 2 != 0 || in[2] % 2 != 0) {
          fail(id, "pool expects [C, H, W] with even H and W");
        }
        out = {in[0], in[1] / 2, in[2] / 2};
        break;
      case LayerKind::kFlatten:
        out = {ShapeSize(in)};
        break;
      case LayerKind::kAdd: {
        const Shape& other = shapes_[spec.inputs[1]];
        if (other != in) fail(id, "add joins " + ShapeString(in) + " and " + ShapeString(other));
        out = in;
        break;
      }
      case LayerKind::kConcat: {
        const Shape& other = shapes_[spec.inputs[1]];
        if (other.size() != in.size() ||
            !std::equal(in.begin() + 1, in.end(), other.begin() + 1)) {
          fail(id, "concat needs equal non-channel extents: " + ShapeString(in) + " and " +
                       ShapeString(other));
        }
        out = in;
        out[0] += other[0];
        break;
      }
      case LayerKind::kInput:
        break;
    }
    shapes_.push_back(out);
    if (weights + biases > 0) {
      param_offsets_[id] = offset;
      layout_->segments.push_back({id, offset, weights, biases});
      offset += weights + biases;
    }
    if (spec.tap) taps_.push_back(id);
  }
  layout_->total = offset;
  for (std::size_t id = 0; id + 1 < nodes_.size(); ++id) {
    if (consumers[id] == 0) fail(id, "output is never consumed; the graph needs a single output");
  }
  if (nodes_.size() < 2) throw ShapeError("architecture has no layers");
  if (taps_.empty()) throw ShapeError("architecture declares no tap points");
}

inline ArchitectureGraph ArchitectureGraph::Parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  Shape input_shape;
  std::vector<LayerSpec> layers;
  std::map<std::string, std::size_t> names{{"input", 0}};
  int line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw ConfigError("architecture line " + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream words(line);
    std::vector<std::string> tok;
    for (std::string w; words >> w;) tok.push_back(w);
    if (tok.empty()) continue;
    auto number = [&](const std::string& s) -> std::size_t {
      std::size_t pos = 0;
      unsigned long v = 0;
      try {
        v = std::stoul(s, &pos);
      } catch (const std::exception&) {
        fail("expected a number, got '" + s + "'");
      }
      if (pos != s.size() || v == 0) fail("expected a positive number, got '" + s + "'");
      return v;
    };
    if (tok[0] == "input") {
      if (!layers.empty() || !input_shape.empty()) fail("input must be the first layer");
      for (std::size_t i = 1; i < tok.size(); ++i) input_shape.push_back(number(tok[i]));
      if (input_shape.empty()) fail("input needs at least one extent");
      continue;
    }
    if (input_shape.empty()) fail("the description must start with 'input'");
    LayerSpec spec;
    std::size_t i = 1;
    const std::string& kind = tok[0];
    if (kind == "dense" || kind == "conv") {
      spec.kind = kind == "dense" ? LayerKind::kDense : LayerKind::kConv3x3;
      if (tok.size() < 2) fail(kind + " needs a unit count");
      spec.units = number(tok[1]);
      i = 2;
    } else if (kind == "relu") {
      spec.kind = LayerKind::kRelu;
    } else if (kind == "pool") {
      spec.kind = LayerKind::kMeanPool2;
    } else if (kind == "flatten") {
      spec.kind = LayerKind::kFlatten;
    } else if (kind == "add" || kind == "concat") {
      spec.kind = kind == "add" ? LayerKind::kAdd : LayerKind::kConcat;
      if (tok.size() < 2) fail(kind + " needs a skip source name");
      auto it = names.find(tok[1]);
      if (it == names.end()) fail("unknown layer name '" + tok[1] + "'");
      spec.inputs = {layers.size(), it->second};
      i = 2;
    } else {
      fail("unknown layer kind '" + kind + "'");
    }
    for (; i < tok.size(); ++i) {
      if (tok[i] == "tap") {
        spec.tap = true;
      } else if (tok[i] == "as" && i + 1 < tok.size()) {
        spec.name = tok[++i];
        if (names.count(spec.name)) fail("duplicate layer name '" + spec.name + "'");
        names[spec.name] = layers.size() + 1;
      } else {
        fail("unexpected token '" + tok[i] + "'");
      }
    }
    layers.push_back(std::move(spec));
  }
  if (input_shape.empty()) throw ConfigError("architecture description has no input line");
  return ArchitectureGraph(std::move(input_shape), std::move(layers));
}

inline std::string ArchitectureGraph::Describe() const {
  std::vector<std::string> names(nodes_.size());
  names[0] = "input";
  for (std::size_t id = 1; id < nodes_.size(); ++id) {
    names[id] = nodes_[id].name.empty() ? "n" + std::to_string(id) : nodes_[id].name;
  }
  std::vector<bool> referenced(nodes_.size(), false);
  for (const auto& spec : nodes_) {
    if (spec.inputs.size() == 2) referenced[spec.inputs[1]] = true;
  }
  std::ostringstream os;
  os << "input";
  for (std::size_t e : shapes_[0]) os << ' ' << e;
  os << '\n';
  for (std::size_t id = 1; id < nodes_.size(); ++id) {
    const LayerSpec& spec = nodes_[id];
    os << LayerKindName(spec.kind);
    if (spec.kind == LayerKind::kDense || spec.kind == LayerKind::kConv3x3) os << ' ' << spec.units;
    if (spec.inputs.size() == 2) os << ' ' << names[spec.inputs[1]];
    if (spec.tap) os << " tap";
    if (referenced[id] || !spec.name.empty()) os << " as " << names[id];
    os << '\n';
  }
  return os.str();
}

// Per-layer parameter tensors; the unflattened view of a ParamVector.
struct LayerParams {
  std::size_t node = 0;
  Tensor weight;
  Tensor bias;
};

inline std::vector<LayerParams> Unflatten(const ArchitectureGraph& arch, const ParamVector& params) {
  if (params.size() != arch.param_count()) {
    throw ShapeError("parameter vector length " + std::to_string(params.size()) +
                     " does not match architecture (" + std::to_string(arch.param_count()) + ")");
  }
  std::vector<LayerParams> out;
  for (const ParamSegment& seg : arch.layout().segments) {
    const LayerSpec& spec = arch.node(seg.node);
    const Shape& in = arch.node_shape(spec.inputs[0]);
    Shape wshape = spec.kind == LayerKind::kDense ? Shape{spec.units, in[0]}
                                                  : Shape{spec.units, in[0], 3, 3};
    auto first = params.values.begin() + static_cast<std::ptrdiff_t>(seg.offset);
    auto mid = first + static_cast<std::ptrdiff_t>(seg.weight_length);
    auto last = mid + static_cast<std::ptrdiff_t>(seg.bias_length);
    out.push_back({seg.node, Tensor(std::move(wshape), std::vector<double>(first, mid)),
                   Tensor({seg.bias_length}, std::vector<double>(mid, last))});
  }
  return out;
}

inline ParamVector Flatten(const ArchitectureGraph& arch, const std::vector<LayerParams>& layers) {
  const auto& segs = arch.layout().segments;
  if (layers.size() != segs.size()) throw ShapeError("layer parameter count mismatch");
  ParamVector out{std::vector<double>(arch.param_count()), arch.shared_layout()};
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const ParamSegment& seg = segs[i];
    if (layers[i].node != seg.node || layers[i].weight.size() != seg.weight_length ||
        layers[i].bias.size() != seg.bias_length) {
      throw ShapeError("layer parameters do not match segment for node " + std::to_string(seg.node));
    }
    std::copy(layers[i].weight.values().begin(), layers[i].weight.values().end(),
              out.values.begin() + static_cast<std::ptrdiff_t>(seg.offset));
    std::copy(layers[i].bias.values().begin(), layers[i].bias.values().end(),
              out.values.begin() + static_cast<std::ptrdiff_t>(seg.offset + seg.weight_length));
  }
  return out;
}

// Immutable-by-convention model: an architecture plus its parameters.
class Network {
 public:
  Network(std::shared_ptr<const ArchitectureGraph> arch, ParamVector params)
      : arch_(std::move(arch)), params_(std::move(params)) {
    if (params_.size() != arch_->param_count()) {
      throw ShapeError("parameter vector does not fit the architecture");
    }
    if (!params_.layout) params_.layout = arch_->shared_layout();
  }

  // Weights uniform in +-sqrt(6 / fan_in), biases zero.
  static Network Initialize(std::shared_ptr<const ArchitectureGraph> arch, std::uint64_t seed) {
    ParamVector p{std::vector<double>(arch->param_count(), 0.0), arch->shared_layout()};
    Rng rng(seed);
    for (const ParamSegment& seg : arch->layout().segments) {
      const std::size_t fan_in = seg.weight_length / seg.bias_length;
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (std::size_t i = 0; i < seg.weight_length; ++i) p.values[seg.offset + i] = u(rng);
    }
    return Network(std::move(arch), std::move(p));
  }

  const ArchitectureGraph& arch() const { return *arch_; }
  const std::shared_ptr<const ArchitectureGraph>& shared_arch() const { return arch_; }
  const ParamVector& params() const { return params_; }
  std::span<double> mutable_values() { return params_.values; }
  void set_values(std::vector<double> values) {
    if (values.size() != params_.size()) throw ShapeError("parameter length mismatch");
    params_.values = std::move(values);
  }

 private:
  std::shared_ptr<const ArchitectureGraph> arch_;
  ParamVector params_;
};

// All node outputs of one forward pass; node 0 is the input.
struct Activations {
  std::vector<Tensor> nodes;
};

struct ForwardTrace {
  std::vector<Tensor> taps;
  Tensor output;
};

namespace detail {

inline void ConvForward(const Tensor& in, std::size_t cout, const double* w, const double* b,
                        Tensor& out) {
  const std::size_t cin = in.shape()[0], h = in.shape()[1], wd = in.shape()[2];
  const std::size_t plane = h * wd;
  for (std::size_t co = 0; co < cout; ++co) {
    double* o = out.data() + co * plane;
    std::fill(o, o + plane, b[co]);
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* src = in.data() + ci * plane;
      const double* k = w + (co * cin + ci) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const std::size_t y0 = dy < 0 ? 1 : 0, y1 = dy > 0 ? h - 1 : h;
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const double kv = k[ky * 3 + kx];
          const std::size_t x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? wd - 1 : wd;
          for (std::size_t y = y0; y < y1; ++y) {
            double* orow = o + y * wd;
            const double* irow = src + (y + dy) * wd + dx;
            for (std::size_t x = x0; x < x1; ++x) orow[x] += kv * irow[x];
          }
        }
      }
    }
  }
}

// Accumulates into grad_in (if non-null) and into gw/gb (if non-null).
inline void ConvBackward(const Tensor& in, std::size_t cout, const double* w, const Tensor& gout,
                         Tensor* grad_in, double* gw, double* gb) {
  const std::size_t cin = in.shape()[0], h = in.shape()[1], wd = in.shape()[2];
  const std::size_t plane = h * wd;
  for (std::size_t co = 0; co < cout; ++co) {
    const double* g = gout.data() + co * plane;
    if (gb) {
      double s = 0.0;
      for (std::size_t i = 0; i < plane; ++i) s += g[i];
      gb[co] += s;
    }
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* src = in.data() + ci * plane;
      double* gsrc = grad_in ? grad_in->data() + ci * plane : nullptr;
      const double* k = w + (co * cin + ci) * 9;
      double* gk = gw ? gw + (co * cin + ci) * 9 : nullptr;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const std::size_t y0 = dy < 0 ? 1 : 0, y1 = dy > 0 ? h - 1 : h;
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const std::size_t x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? wd - 1 : wd;
          const double kv = k[ky * 3 + kx];
          double acc = 0.0;
          for (std::size_t y = y0; y < y1; ++y) {
            const double* grow = g + y * wd;
            const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>((y + dy) * wd) + dx;
            if (gsrc) {
              double* girow = gsrc + shift;
              for (std::size_t x = x0; x < x1; ++x) girow[x] += kv * grow[x];
            }
            if (gk) {
              const double* irow = src + shift;
              for (std::size_t x = x0; x < x1; ++x) acc += grow[x] * irow[x];
            }
          }
          if (gk) gk[ky * 3 + kx] += acc;
        }
      }
    }
  }
}

}  // namespace detail

inline Activations ForwardAll(const Network& net, const Tensor& x) {
  const ArchitectureGraph& arch = net.arch();
  if (x.shape() != arch.input_shape()) {
    throw ShapeError("input shape " + ShapeString(x.shape()) + " does not match model input " +
                     ShapeString(arch.input_shape()));
  }
  const double* params = net.params().values.data();
  Activations act;
  act.nodes.reserve(arch.node_count());
  act.nodes.push_back(x);
  for (std::size_t id = 1; id < arch.node_count(); ++id) {
    const LayerSpec& spec = arch.node(id);
    const Tensor& in = act.nodes[spec.inputs[0]];
    Tensor out(arch.node_shape(id));
    switch (spec.kind) {
      case LayerKind::kDense: {
        const double* w = params + arch.param_offset(id);
        const double* b = w + spec.units * in.size();
        const std::size_t n = in.size();
        for (std::size_t o = 0; o < spec.units; ++o) {
          const double* row = w + o * n;
          double s = b[o];
          for (std::size_t i = 0; i < n; ++i) s += row[i] * in[i];
          out[o] = s;
        }
        break;
      }
      case LayerKind::kConv3x3: {
        const double* w = params + arch.param_offset(id);
        const double* b = w + spec.units * in.shape()[0] * 9;
        detail::ConvForward(in, spec.units, w, b, out);
        break;
      }
      case LayerKind::kRelu:
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
        break;
      case LayerKind::kMeanPool2: {
        const std::size_t c = in.shape()[0], h = in.shape()[1], w = in.shape()[2];
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t y = 0; y < h / 2; ++y)
            for (std::size_t xx = 0; xx < w / 2; ++xx)
              out.at(ch, y, xx) = 0.25 * (in.at(ch, 2 * y, 2 * xx) + in.at(ch, 2 * y, 2 * xx + 1) +
                                          in.at(ch, 2 * y + 1, 2 * xx) +
                                          in.at(ch, 2 * y + 1, 2 * xx + 1));
        break;
      }
      case LayerKind::kFlatten:
        std::copy(in.data(), in.data() + in.size(), out.data());
        break;
      case LayerKind::kAdd: {
        const Tensor& other = act.nodes[spec.inputs[1]];
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] + other[i];
        break;
      }
      case LayerKind::kConcat: {
        const Tensor& other = act.nodes[spec.inputs[1]];
        std::copy(in.data(), in.data() + in.size(), out.data());
        std::copy(other.data(), other.data() + other.size(), out.data() + in.size());
        break;
      }
      case LayerKind::kInput:
        break;
    }
    act.nodes.push_back(std::move(out));
  }
  return act;
}

inline ForwardTrace ForwardTraced(const Network& net, const Tensor& x) {
  Activations act = ForwardAll(net, x);
  ForwardTrace trace;
  for (std::size_t id : net.arch().taps()) trace.taps.push_back(act.nodes[id]);
  trace.output = std::move(act.nodes.back());
  return trace;
}

// Propagates `grad` (the gradient w.r.t. node `from`) back to the input.
// Parameter gradients are accumulated into `param_grad` unless it is empty.
// Returns the gradient w.r.t. the network input.
inline Tensor Backpropagate(const Network& net, const Activations& act, std::size_t from,
                            Tensor grad, std::span<double> param_grad = {},
                            bool want_input_grad = true) {
  const ArchitectureGraph& arch = net.arch();
  const double* params = net.params().values.data();
  const bool want_params = !param_grad.empty();
  std::vector<Tensor> grads(from + 1);
  grads[from] = std::move(grad);
  auto accumulate = [&](std::size_t node, Tensor g) {
    if (grads[node].empty()) {
      grads[node] = std::move(g);
    } else {
      grads[node] += g;
    }
  };
  for (std::size_t id = from; id >= 1; --id) {
    if (grads[id].empty()) continue;
    const Tensor& g = grads[id];
    const LayerSpec& spec = arch.node(id);
    const std::size_t src = spec.inputs[0];
    const Tensor& in = act.nodes[src];
    switch (spec.kind) {
      case LayerKind::kDense: {
        const std::size_t n = in.size();
        const std::size_t off = arch.param_offset(id);
        const double* w = params + off;
        Tensor gin(in.shape());
        for (std::size_t o = 0; o < spec.units; ++o) {
          const double go = g[o];
          const double* row = w + o * n;
          for (std::size_t i = 0; i < n; ++i) gin[i] += row[i] * go;
        }
        if (want_params) {
          double* gw = param_grad.data() + off;
          double* gb = gw + spec.units * n;
          for (std::size_t o = 0; o < spec.units; ++o) {
            const double go = g[o];
            double* grow = gw + o * n;
            for (std::size_t i = 0; i < n; ++i) grow[i] += go * in[i];
            gb[o] += go;
          }
        }
        accumulate(src, std::move(gin));
        break;
      }
      case LayerKind::kConv3x3: {
        const std::size_t off = arch.param_offset(id);
        const double* w = params + off;
        double* gw = want_params ? param_grad.data() + off : nullptr;
        double* gb = want_params ? gw + spec.units * in.shape()[0] * 9 : nullptr;
        if (src == 0 && !want_input_grad) {
          detail::ConvBackward(in, spec.units, w, g, nullptr, gw, gb);
          break;
        }
        Tensor gin(in.shape());
        detail::ConvBackward(in, spec.units, w, g, &gin, gw, gb);
        accumulate(src, std::move(gin));
        break;
      }
      case LayerKind::kRelu: {
        Tensor gin(in.shape());
        for (std::size_t i = 0; i < in.size(); ++i) gin[i] = in[i] > 0.0 ? g[i] : 0.0;
        accumulate(src, std::move(gin));
        break;
      }
      case LayerKind::kMeanPool2: {
        Tensor gin(in.shape());
        const std::size_t c = in.shape()[0], h = in.shape()[1], w = in.shape()[2];
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx)
              gin.at(ch, y, xx) = 0.25 * g.at(ch, y / 2, xx / 2);
        accumulate(src, std::move(gin));
        break;
      }
      case LayerKind::kFlatten:
        accumulate(src, g.Reshaped(in.shape()));
        break;
      case LayerKind::kAdd:
        accumulate(spec.inputs[1], g);
        accumulate(src, g);
        break;
      case LayerKind::kConcat: {
        const Tensor& other = act.nodes[spec.inputs[1]];
        std::vector<double> a(g.data(), g.data() + in.size());
        std::vector<double> b(g.data() + in.size(), g.data() + g.size());
        accumulate(src, Tensor(in.shape(), std::move(a)));
        accumulate(spec.inputs[1], Tensor(other.shape(), std::move(b)));
        break;
      }
      case LayerKind::kInput:
        break;
    }
    grads[id] = Tensor();
  }
  if (grads[0].empty()) return Tensor(arch.input_shape());
  return std::move(grads[0]);
}

// Either a class index (softmax cross-entropy on the output) or a target
// tensor (sum of squared errors).
using LossTarget = std::variant<int, Tensor>;

// Returns the loss and writes d loss / d output into `grad`.
inline double LossAndGradient(const Tensor& output, const LossTarget& target, Tensor& grad) {
  grad = Tensor(output.shape());
  if (const int* label = std::get_if<int>(&target)) {
    if (*label < 0 || static_cast<std::size_t>(*label) >= output.size()) {
      throw ShapeError("class label " + std::to_string(*label) + " out of range");
    }
    const double mx = *std::max_element(output.values().begin(), output.values().end());
    double z = 0.0;
    for (std::size_t i = 0; i < output.size(); ++i) {
      grad[i] = std::exp(output[i] - mx);
      z += grad[i];
    }
    for (std::size_t i = 0; i < output.size(); ++i) grad[i] /= z;
    const double loss = -(output[*label] - mx - std::log(z));
    grad[*label] -= 1.0;
    return loss;
  }
  const Tensor& y = std::get<Tensor>(target);
  output.RequireSameShape(y, "loss");
  double loss = 0.0;
  for (std::size_t i = 0; i < output.size(); ++i) {
    const double d = output[i] - y[i];
    loss += d * d;
    grad[i] = 2.0 * d;
  }
  return loss;
}

// Adds d loss / d params for one example into `param_grad`; returns the loss.
inline double AccumulateGradient(const Network& net, const Tensor& x, const LossTarget& target,
                                 std::span<double> param_grad) {
  Activations act = ForwardAll(net, x);
  Tensor g;
  const double loss = LossAndGradient(act.nodes.back(), target, g);
  if (!std::isfinite(loss)) throw NumericalError("non-finite loss");
  Backpropagate(net, act, net.arch().output_node(), std::move(g), param_grad,
                /*want_input_grad=*/false);
  return loss;
}

struct Gradient {
  ParamVector grad;
  double loss = 0.0;
};

inline Gradient Backward(const Network& net, const Tensor& x, const LossTarget& target) {
  Gradient out{{std::vector<double>(net.params().size(), 0.0), net.arch().shared_layout()}, 0.0};
  out.loss = AccumulateGradient(net, x, target, out.grad.values);
  for (double v : out.grad.values) {
    if (!std::isfinite(v)) throw NumericalError("non-finite gradient");
  }
  return out;
}

inline std::size_t Predict(const Network& net, const Tensor& x) {
  Activations act = ForwardAll(net, x);
  const Tensor& out = act.nodes.back();
  return static_cast<std::size_t>(
      std::max_element(out.values().begin(), out.values().end()) - out.values().begin());
}

// Taps up to this many elements get an exact Jacobian; larger taps use a
// Hutchinson estimate.
inline constexpr std::size_t kExactJacobianLimit = 4096;
inline constexpr int kHutchinsonProbes = 32;

// Frobenius norm of d tap / d input evaluated at x + delta.
inline double InputJacobianNorm(const Network& net, const Tensor& x, const Tensor& delta,
                                std::size_t tap) {
  const ArchitectureGraph& arch = net.arch();
  if (tap >= arch.tap_count()) {
    throw ShapeError("tap index " + std::to_string(tap) + " out of range (L = " +
                     std::to_string(arch.tap_count()) + ")");
  }
  x.RequireSameShape(delta, "input_jacobian_norm");
  const Activations act = ForwardAll(net, x + delta);
  const std::size_t node = arch.taps()[tap];
  const Shape& tap_shape = arch.node_shape(node);
  const std::size_t m = ShapeSize(tap_shape);
  double sum = 0.0;
  if (m <= kExactJacobianLimit) {
    for (std::size_t k = 0; k < m; ++k) {
      Tensor e(tap_shape);
      e[k] = 1.0;
      sum += Backpropagate(net, act, node, std::move(e)).SquaredNorm();
    }
  } else {
    Rng rng(DeriveSeed(0x7f4a7c15, "hutchinson", {tap}));
    std::bernoulli_distribution coin(0.5);
    for (int p = 0; p < kHutchinsonProbes; ++p) {
      Tensor u(tap_shape);
      for (std::size_t k = 0; k < m; ++k) u[k] = coin(rng) ? 1.0 : -1.0;
      sum += Backpropagate(net, act, node, std::move(u)).SquaredNorm();
    }
    sum /= kHutchinsonProbes;
  }
  return std::sqrt(sum);
}

}  // namespace tfi

#endif  // TFI_NET_HPP_
