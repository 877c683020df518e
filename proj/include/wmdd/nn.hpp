#pragma once

// Minimal differentiable layer stack: dense, conv1d (valid padding, stride 1),
// relu and global average pooling over the time axis. Activations carry a
// leading batch axis; per-sample shapes are [features] or [channels, length].

#include <cstdint>
#include <span>
#include <vector>

#include "wmdd/tensor.hpp"

namespace wmdd {

inline constexpr double kProbClamp = 1e-7;

enum class LayerKind { dense, conv1d, relu, global_avg_pool };

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  // dense
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  // conv1d
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_width = 0;
  std::size_t in_length = 0;

  static LayerSpec dense(std::size_t in, std::size_t out);
  static LayerSpec conv1d(std::size_t in_channels, std::size_t out_channels,
                          std::size_t kernel_width, std::size_t in_length);
  static LayerSpec relu();
  static LayerSpec global_avg_pool();

  bool has_params() const { return kind == LayerKind::dense || kind == LayerKind::conv1d; }
  std::size_t fan_in() const;
  Shape weight_shape() const;
  Shape bias_shape() const;

  // Per-sample output shape for a per-sample input shape; throws ShapeError.
  Shape output_shape(const Shape& input) const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Layer {
  LayerSpec spec;
  Tensor weight;  // dense [out, in]; conv1d [out_ch, in_ch, kernel]
  Tensor bias;    // [out]
};

struct LayerParams {
  Tensor weight;
  Tensor bias;
};

// He-normal weights (std sqrt(2 / fan_in)), zero bias. Bit-identical for a
// given (spec, seed).
LayerParams seeded_init(const LayerSpec& spec, std::uint64_t seed);

// Gradients for every layer's parameters plus the network input. Entries
// for parameter-free layers are empty tensors.
struct Gradients {
  std::vector<Tensor> weight;
  std::vector<Tensor> bias;
  Tensor input;

  void scale(double factor);
  void add(const Gradients& other);
};

// Intermediates recorded by a forward pass; `inputs[i]` is the input of
// layer i. Bound to the network identity and parameter version that
// produced it.
struct Tape {
  std::uint64_t network_id = 0;
  std::uint64_t version = 0;
  std::vector<Tensor> inputs;
};

struct ForwardResult {
  Tensor output;
  Tape tape;
};

class Network {
 public:
  Network() = default;
  Network(std::vector<LayerSpec> specs, std::uint64_t seed);
  explicit Network(std::vector<Layer> layers);

  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  std::span<const Layer> layers() const { return layers_; }
  std::size_t layer_count() const { return layers_.size(); }

  // Mutable parameter access; invalidates outstanding tapes.
  Layer& mutable_layer(std::size_t i);

  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return output_shape_; }
  std::size_t parameter_count() const;

  std::uint64_t id() const { return id_; }
  std::uint64_t version() const { return version_; }

  // FNV-1a over the raw parameter bytes.
  std::uint64_t fingerprint() const;

  ForwardResult forward(const Tensor& batch) const;
  Tensor infer(const Tensor& batch) const;
  Gradients backward(const Tape& tape, const Tensor& upstream) const;

  Gradients zero_gradients() const;

 private:
  void finalize();
  void check_input(const Tensor& batch) const;
  Tensor apply(std::size_t i, const Tensor& x) const;

  std::vector<Layer> layers_;
  Shape input_shape_;
  Shape output_shape_;
  std::uint64_t id_ = 0;
  std::uint64_t version_ = 0;
};

// Default generator: conv1d stack with relu, then global average pooling.
std::vector<LayerSpec> generator_specs(std::size_t in_channels, std::size_t width,
                                       std::span<const std::size_t> channels,
                                       std::size_t kernel_width);

// Default classifier: dense stack with relu between layers.
std::vector<LayerSpec> classifier_specs(std::size_t in_features,
                                        std::span<const std::size_t> hidden,
                                        std::size_t classes);

// Row-wise softmax along the last axis, computed with max subtraction.
Tensor softmax(const Tensor& logits);
void softmax_row(std::span<const double> logits, std::span<double> out);

// -log(max(p_label, kProbClamp)). Throws std::out_of_range on a bad label.
double log_prob_loss(std::span<const double> probs, std::size_t label);

}  // namespace wmdd
