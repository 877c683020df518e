#include "wmdd/nn.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>

#include "wmdd/errors.hpp"
#include "wmdd/kernels.hpp"

namespace wmdd {
namespace {

std::uint64_t next_network_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string layer_label(std::size_t i) { return "layer " + std::to_string(i); }

// colT[t][ic * kw + k] = x[ic][t + k]
void im2col(std::span<const double> x, const LayerSpec& s, std::size_t out_len,
            std::vector<double>& colT) {
  const std::size_t patch = s.in_channels * s.kernel_width;
  colT.resize(out_len * patch);
  for (std::size_t t = 0; t < out_len; ++t) {
    double* dst = colT.data() + t * patch;
    for (std::size_t ic = 0; ic < s.in_channels; ++ic) {
      const double* src = x.data() + ic * s.in_length + t;
      std::copy(src, src + s.kernel_width, dst + ic * s.kernel_width);
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// LayerSpec

LayerSpec LayerSpec::dense(std::size_t in, std::size_t out) {
  LayerSpec s;
  s.kind = LayerKind::dense;
  s.in_features = in;
  s.out_features = out;
  return s;
}

LayerSpec LayerSpec::conv1d(std::size_t in_channels, std::size_t out_channels,
                            std::size_t kernel_width, std::size_t in_length) {
  LayerSpec s;
  s.kind = LayerKind::conv1d;
  s.in_channels = in_channels;
  s.out_channels = out_channels;
  s.kernel_width = kernel_width;
  s.in_length = in_length;
  return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::global_avg_pool() {
  LayerSpec s;
  s.kind = LayerKind::global_avg_pool;
  return s;
}

std::size_t LayerSpec::fan_in() const {
  switch (kind) {
    case LayerKind::dense: return in_features;
    case LayerKind::conv1d: return in_channels * kernel_width;
    default: return 0;
  }
}

Shape LayerSpec::weight_shape() const {
  switch (kind) {
    case LayerKind::dense: return {out_features, in_features};
    case LayerKind::conv1d: return {out_channels, in_channels, kernel_width};
    default: return {};
  }
}

Shape LayerSpec::bias_shape() const {
  switch (kind) {
    case LayerKind::dense: return {out_features};
    case LayerKind::conv1d: return {out_channels};
    default: return {};
  }
}

Shape LayerSpec::output_shape(const Shape& input) const {
  switch (kind) {
    case LayerKind::dense:
      if (in_features == 0 || out_features == 0) throw ShapeError("dense extents must be positive");
      if (input != Shape{in_features}) throw ShapeError("dense input extent mismatch");
      return {out_features};
    case LayerKind::conv1d:
      if (in_channels == 0 || out_channels == 0 || kernel_width == 0 || in_length == 0) {
        throw ShapeError("conv1d extents must be positive");
      }
      if (kernel_width > in_length) throw ShapeError("conv1d kernel wider than its input");
      if (input != Shape{in_channels, in_length}) throw ShapeError("conv1d input shape mismatch");
      return {out_channels, in_length - kernel_width + 1};
    case LayerKind::relu:
      return input;
    case LayerKind::global_avg_pool:
      if (input.size() != 2) throw ShapeError("pooling expects [channels, length]");
      return {input[0]};
  }
  throw ShapeError("unknown layer kind");
}

LayerParams seeded_init(const LayerSpec& spec, std::uint64_t seed) {
  if (!spec.has_params()) return {};
  LayerParams p{Tensor(spec.weight_shape()), Tensor(spec.bias_shape())};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(spec.fan_in())));
  for (double& w : p.weight.data) w = normal(rng);
  return p;
}

// ---------------------------------------------------------------------------
// Gradients

void Gradients::scale(double factor) {
  auto mul = [factor](Tensor& t) {
    for (double& v : t.data) v *= factor;
  };
  for (Tensor& t : weight) mul(t);
  for (Tensor& t : bias) mul(t);
  mul(input);
}

void Gradients::add(const Gradients& other) {
  auto acc = [](Tensor& dst, const Tensor& src) {
    if (dst.data.size() != src.data.size()) throw ShapeError("gradient shape mismatch");
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
  };
  if (weight.size() != other.weight.size()) throw ShapeError("gradient layer count mismatch");
  for (std::size_t i = 0; i < weight.size(); ++i) {
    acc(weight[i], other.weight[i]);
    acc(bias[i], other.bias[i]);
  }
  acc(input, other.input);
}

// ---------------------------------------------------------------------------
// Network

Network::Network(std::vector<LayerSpec> specs, std::uint64_t seed) {
  layers_.reserve(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    LayerParams p = seeded_init(specs[i], splitmix64(seed ^ splitmix64(i)));
    layers_.push_back(Layer{specs[i], std::move(p.weight), std::move(p.bias)});
  }
  finalize();
}

Network::Network(std::vector<Layer> layers) : layers_(std::move(layers)) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    if (l.spec.has_params() &&
        (l.weight.shape != l.spec.weight_shape() || l.bias.shape != l.spec.bias_shape() ||
         l.weight.size() != shape_size(l.weight.shape) || l.bias.size() != shape_size(l.bias.shape))) {
      throw ShapeError(layer_label(i) + ": parameter shape does not match spec", static_cast<int>(i));
    }
  }
  finalize();
}

Network::Network(const Network& other)
    : layers_(other.layers_),
      input_shape_(other.input_shape_),
      output_shape_(other.output_shape_),
      id_(next_network_id()),
      version_(0) {}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    layers_ = other.layers_;
    input_shape_ = other.input_shape_;
    output_shape_ = other.output_shape_;
    id_ = next_network_id();
    version_ = 0;
  }
  return *this;
}

void Network::finalize() {
  if (layers_.empty()) throw ShapeError("network needs at least one layer");
  id_ = next_network_id();
  const LayerSpec& first = layers_.front().spec;
  switch (first.kind) {
    case LayerKind::dense: input_shape_ = {first.in_features}; break;
    case LayerKind::conv1d: input_shape_ = {first.in_channels, first.in_length}; break;
    default: throw ShapeError("first layer must be dense or conv1d", 0);
  }
  Shape shape = input_shape_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    try {
      shape = layers_[i].spec.output_shape(shape);
    } catch (const ShapeError& e) {
      throw ShapeError(layer_label(i) + ": " + e.what(), static_cast<int>(i));
    }
  }
  output_shape_ = shape;
}

Layer& Network::mutable_layer(std::size_t i) {
  ++version_;
  return layers_.at(i);
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

std::uint64_t Network::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const Tensor& t) {
    for (double v : t.data) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
      }
    }
  };
  for (const Layer& l : layers_) {
    mix(l.weight);
    mix(l.bias);
  }
  return h;
}

void Network::check_input(const Tensor& batch) const {
  if (batch.rank() != input_shape_.size() + 1 ||
      !std::equal(input_shape_.begin(), input_shape_.end(), batch.shape.begin() + 1)) {
    throw ShapeError(layer_label(0) + ": batch shape does not match network input", 0);
  }
}

Tensor Network::apply(std::size_t i, const Tensor& x) const {
  const Layer& layer = layers_[i];
  const LayerSpec& s = layer.spec;
  const std::size_t batch = x.dim(0);
  switch (s.kind) {
    case LayerKind::dense: {
      Tensor y({batch, s.out_features});
      for (std::size_t b = 0; b < batch; ++b) {
        auto in = x.row(b);
        auto out = y.row(b);
        for (std::size_t o = 0; o < s.out_features; ++o) {
          out[o] = layer.bias[o] + kernels::dot(layer.weight.row(o), in);
        }
      }
      return y;
    }
    case LayerKind::conv1d: {
      const std::size_t out_len = s.in_length - s.kernel_width + 1;
      const std::size_t patch = s.in_channels * s.kernel_width;
      Tensor y({batch, s.out_channels, out_len});
      std::vector<double> colT;
      for (std::size_t b = 0; b < batch; ++b) {
        im2col(x.row(b), s, out_len, colT);
        auto out = y.row(b);
        for (std::size_t oc = 0; oc < s.out_channels; ++oc) {
          std::span<const double> w(layer.weight.data.data() + oc * patch, patch);
          for (std::size_t t = 0; t < out_len; ++t) {
            out[oc * out_len + t] =
                layer.bias[oc] + kernels::dot(w, std::span<const double>(colT.data() + t * patch, patch));
          }
        }
      }
      return y;
    }
    case LayerKind::relu: {
      Tensor y = x;
      for (double& v : y.data) v = v > 0.0 ? v : 0.0;
      return y;
    }
    case LayerKind::global_avg_pool: {
      const std::size_t channels = x.dim(1);
      const std::size_t len = x.dim(2);
      Tensor y({batch, channels});
      const double inv = 1.0 / static_cast<double>(len);
      for (std::size_t b = 0; b < batch; ++b) {
        auto in = x.row(b);
        for (std::size_t c = 0; c < channels; ++c) {
          double acc = 0.0;
          for (std::size_t t = 0; t < len; ++t) acc += in[c * len + t];
          y[b * channels + c] = acc * inv;
        }
      }
      return y;
    }
  }
  throw ShapeError("unknown layer kind", static_cast<int>(i));
}

ForwardResult Network::forward(const Tensor& batch) const {
  check_input(batch);
  ForwardResult r;
  r.tape.network_id = id_;
  r.tape.version = version_;
  r.tape.inputs.reserve(layers_.size());
  Tensor x = batch;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Tensor y = apply(i, x);
    r.tape.inputs.push_back(std::move(x));
    x = std::move(y);
  }
  r.output = std::move(x);
  return r;
}

Tensor Network::infer(const Tensor& batch) const {
  check_input(batch);
  Tensor x = batch;
  for (std::size_t i = 0; i < layers_.size(); ++i) x = apply(i, x);
  return x;
}

Gradients Network::zero_gradients() const {
  Gradients g;
  for (const Layer& l : layers_) {
    g.weight.push_back(l.spec.has_params() ? Tensor(l.weight.shape) : Tensor());
    g.bias.push_back(l.spec.has_params() ? Tensor(l.bias.shape) : Tensor());
  }
  return g;
}

Gradients Network::backward(const Tape& tape, const Tensor& upstream) const {
  if (tape.network_id != id_ || tape.version != version_ || tape.inputs.size() != layers_.size()) {
    throw std::logic_error("backward: tape does not belong to this network state");
  }
  const std::size_t batch = tape.inputs.front().dim(0);
  Shape expected{batch};
  expected.insert(expected.end(), output_shape_.begin(), output_shape_.end());
  if (upstream.shape != expected) {
    throw ShapeError("backward: upstream gradient shape mismatch", static_cast<int>(layers_.size()) - 1);
  }

  Gradients g = zero_gradients();
  Tensor dy = upstream;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const Layer& layer = layers_[i];
    const LayerSpec& s = layer.spec;
    const Tensor& x = tape.inputs[i];
    Tensor dx(x.shape);
    switch (s.kind) {
      case LayerKind::dense: {
        Tensor& dw = g.weight[i];
        Tensor& db = g.bias[i];
        for (std::size_t b = 0; b < batch; ++b) {
          auto in = x.row(b);
          auto din = dx.row(b);
          auto grad = dy.row(b);
          for (std::size_t o = 0; o < s.out_features; ++o) {
            const double go = grad[o];
            if (go == 0.0) continue;
            db[o] += go;
            kernels::axpy(go, in, dw.row(o));
            kernels::axpy(go, layer.weight.row(o), din);
          }
        }
        break;
      }
      case LayerKind::conv1d: {
        const std::size_t out_len = s.in_length - s.kernel_width + 1;
        const std::size_t patch = s.in_channels * s.kernel_width;
        Tensor& dw = g.weight[i];
        Tensor& db = g.bias[i];
        std::vector<double> colT;
        std::vector<double> dcolT(out_len * patch);
        for (std::size_t b = 0; b < batch; ++b) {
          im2col(x.row(b), s, out_len, colT);
          std::fill(dcolT.begin(), dcolT.end(), 0.0);
          auto grad = dy.row(b);
          for (std::size_t oc = 0; oc < s.out_channels; ++oc) {
            std::span<const double> w(layer.weight.data.data() + oc * patch, patch);
            std::span<double> gw(dw.data.data() + oc * patch, patch);
            for (std::size_t t = 0; t < out_len; ++t) {
              const double go = grad[oc * out_len + t];
              if (go == 0.0) continue;
              db[oc] += go;
              kernels::axpy(go, std::span<const double>(colT.data() + t * patch, patch), gw);
              kernels::axpy(go, w, std::span<double>(dcolT.data() + t * patch, patch));
            }
          }
          auto din = dx.row(b);
          for (std::size_t t = 0; t < out_len; ++t) {
            const double* src = dcolT.data() + t * patch;
            for (std::size_t ic = 0; ic < s.in_channels; ++ic) {
              double* dst = din.data() + ic * s.in_length + t;
              for (std::size_t k = 0; k < s.kernel_width; ++k) dst[k] += src[ic * s.kernel_width + k];
            }
          }
        }
        break;
      }
      case LayerKind::relu:
        for (std::size_t j = 0; j < x.size(); ++j) dx[j] = x[j] > 0.0 ? dy[j] : 0.0;
        break;
      case LayerKind::global_avg_pool: {
        const std::size_t channels = x.dim(1);
        const std::size_t len = x.dim(2);
        const double inv = 1.0 / static_cast<double>(len);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < channels; ++c) {
            const double v = dy[b * channels + c] * inv;
            double* dst = dx.data.data() + (b * channels + c) * len;
            std::fill(dst, dst + len, v);
          }
        }
        break;
      }
    }
    dy = std::move(dx);
  }
  g.input = std::move(dy);
  return g;
}

// ---------------------------------------------------------------------------
// Architectures

std::vector<LayerSpec> generator_specs(std::size_t in_channels, std::size_t width,
                                       std::span<const std::size_t> channels,
                                       std::size_t kernel_width) {
  if (channels.empty()) throw ShapeError("generator needs at least one conv layer");
  std::vector<LayerSpec> specs;
  std::size_t ch = in_channels;
  std::size_t len = width;
  for (std::size_t out : channels) {
    if (kernel_width > len) {
      throw ShapeError("window too short for the generator's conv stack",
                       static_cast<int>(specs.size()));
    }
    specs.push_back(LayerSpec::conv1d(ch, out, kernel_width, len));
    specs.push_back(LayerSpec::relu());
    ch = out;
    len = len - kernel_width + 1;
  }
  specs.push_back(LayerSpec::global_avg_pool());
  return specs;
}

std::vector<LayerSpec> classifier_specs(std::size_t in_features,
                                        std::span<const std::size_t> hidden,
                                        std::size_t classes) {
  std::vector<LayerSpec> specs;
  std::size_t in = in_features;
  for (std::size_t h : hidden) {
    specs.push_back(LayerSpec::dense(in, h));
    specs.push_back(LayerSpec::relu());
    in = h;
  }
  specs.push_back(LayerSpec::dense(in, classes));
  return specs;
}

// ---------------------------------------------------------------------------
// Softmax and losses

void softmax_row(std::span<const double> logits, std::span<double> out) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    out[c] = std::exp(logits[c] - mx);
    total += out[c];
  }
  const double inv = 1.0 / total;
  for (double& v : out) v *= inv;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() == 0 || logits.size() == 0) throw ShapeError("softmax of an empty tensor");
  Tensor out(logits.shape);
  const std::size_t classes = logits.shape.back();
  const std::size_t rows = logits.size() / classes;
  for (std::size_t r = 0; r < rows; ++r) {
    softmax_row(std::span<const double>(logits.data.data() + r * classes, classes),
                std::span<double>(out.data.data() + r * classes, classes));
  }
  return out;
}

double log_prob_loss(std::span<const double> probs, std::size_t label) {
  if (label >= probs.size()) {
    throw std::out_of_range("label " + std::to_string(label) + " outside " +
                            std::to_string(probs.size()) + " classes");
  }
  return -std::log(std::max(probs[label], kProbClamp));
}

}  // namespace wmdd
