#pragma once

#include <memory>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "saferoad/nn/tensor.hpp"

namespace saferoad::nn {

// Per-call record of what backward() needs. Kept outside the layer so one
// set of weights can serve concurrent forward passes.
struct Cache {
  std::vector<Tensor> saved;
  std::vector<Cache> children;
  std::vector<std::size_t> indices;
};

class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string kind() const = 0;
  virtual Shape output_shape(Shape in) const = 0;

  // `cache` may be null when no backward pass will follow.
  virtual Tensor forward(const Tensor& x, Cache* cache) const = 0;

  // Returns dL/dx. Parameter gradients are accumulated (+=) into
  // `param_grads`, ordered like parameters().
  virtual Tensor backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor> param_grads) const = 0;

  virtual std::vector<Tensor*> parameters() { return {}; }
  // Non-trainable state persisted with the weights (running statistics).
  virtual std::vector<Tensor*> buffers() { return {}; }

  virtual std::unique_ptr<Layer> clone() const = 0;

  // Random (He-uniform) initialization of trainable weights.
  virtual void init(std::mt19937_64& /*rng*/) {}

  std::vector<const Tensor*> parameters() const;
  std::size_t parameter_count() const { return parameters().size(); }
};

using LayerPtr = std::unique_ptr<Layer>;

class Conv2d final : public Layer {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, int stride = 1, int padding = 0, bool bias = true);

  std::string kind() const override { return "conv2d"; }
  Shape output_shape(Shape in) const override;
  Tensor forward(const Tensor& x, Cache* cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor> param_grads) const override;
  std::vector<Tensor*> parameters() override;
  LayerPtr clone() const override { return std::make_unique<Conv2d>(*this); }

  void init(std::mt19937_64& rng) override;
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }
  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

 private:
  int in_, out_, k_, stride_, pad_;
  bool has_bias_;
  Tensor weight_;  // [out, in, k, k]
  Tensor bias_;    // [out]
};

// Inference-form batch norm: per-channel affine using stored statistics.
// gamma and beta train; running mean/var are fixed buffers.
class BatchNorm2d final : public Layer {
 public:
  explicit BatchNorm2d(int channels, double eps = 1e-5);

  std::string kind() const override { return "batchnorm2d"; }
  Shape output_shape(Shape in) const override { return in; }
  Tensor forward(const Tensor& x, Cache* cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor> param_grads) const override;
  std::vector<Tensor*> parameters() override { return {&gamma_, &beta_}; }
  std::vector<Tensor*> buffers() override { return {&mean_, &var_}; }
  LayerPtr clone() const override { return std::make_unique<BatchNorm2d>(*this); }

 private:
  int channels_;
  double eps_;
  Tensor gamma_, beta_, mean_, var_;
};

class ReLU final : public Layer {
 public:
  std::string kind() const override { return "relu"; }
  Shape output_shape(Shape in) const override { return in; }
  Tensor forward(const Tensor& x, Cache* cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor> param_grads) const override;
  LayerPtr clone() const override { return std::make_unique<ReLU>(*this); }
};

class MaxPool2d final : public Layer {
 public:
  MaxPool2d(int kernel, int stride, int padding = 0, bool ceil_mode = false)
      : k_(kernel), stride_(stride), pad_(padding), ceil_(ceil_mode) {}

  std::string kind() const override { return "maxpool2d"; }
  Shape output_shape(Shape in) const override;
  Tensor forward(const Tensor& x, Cache* cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor> param_grads) const override;
  LayerPtr clone() const override { return std::make_unique<MaxPool2d>(*this); }

 private:
  int k_, stride_, pad_;
  bool ceil_;
};

class AvgPool2d final : public Layer {
 public:
  AvgPool2d(int kernel, int stride) : k_(kernel), stride_(stride) {}

  std::string kind() const override { return "avgpool2d"; }
  Shape output_shape(Shape in) const override;
  Tensor forward(const Tensor& x, Cache* cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor> param_grads) const override;
  LayerPtr clone() const override { return std::make_unique<AvgPool2d>(*this); }

 private:
  int k_, stride_;
};

// C x H x W -> C x 1 x 1.
class GlobalAvgPool final : public Layer {
 public:
  std::string kind() const override { return "global_avg_pool"; }
  Shape output_shape(Shape in) const override { return {in.c, 1, 1}; }
  Tensor forward(const Tensor& x, Cache* cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor> param_grads) const override;
  LayerPtr clone() const override { return std::make_unique<GlobalAvgPool>(*this); }
};

// Fully connected over the flattened input; output is out x 1 x 1.
class Linear final : public Layer {
 public:
  Linear(int in_features, int out_features);

  std::string kind() const override { return "linear"; }
  Shape output_shape(Shape in) const override;
  Tensor forward(const Tensor& x, Cache* cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor> param_grads) const override;
  std::vector<Tensor*> parameters() override { return {&weight_, &bias_}; }
  LayerPtr clone() const override { return std::make_unique<Linear>(*this); }

  void init(std::mt19937_64& rng) override;
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }

 private:
  int in_, out_;
  Tensor weight_;  // [out, in]
  Tensor bias_;    // [out]
};

class Sequential final : public Layer {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential&) = delete;

  Sequential& add(LayerPtr layer);
  template <typename T, typename... Args>
  Sequential& emplace(Args&&... args) {
    return add(std::make_unique<T>(std::forward<Args>(args)...));
  }

  std::string kind() const override { return "sequential"; }
  Shape output_shape(Shape in) const override;
  Tensor forward(const Tensor& x, Cache* cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor> param_grads) const override;
  std::vector<Tensor*> parameters() override;
  std::vector<Tensor*> buffers() override;
  LayerPtr clone() const override { return std::make_unique<Sequential>(*this); }
  void init(std::mt19937_64& rng) override;

  std::size_t size() const { return layers_.size(); }
  Layer& at(std::size_t i) { return *layers_.at(i); }
  const Layer& at(std::size_t i) const { return *layers_.at(i); }

 private:
  std::vector<LayerPtr> layers_;
};

// Gradient helpers shared by composite layers.
std::vector<Tensor> zeros_like(const std::vector<const Tensor*>& params);
std::vector<Tensor> zeros_like(const std::vector<Tensor*>& params);

// Concatenates along channels; spatial sizes must agree.
Tensor concat_channels(const Tensor& a, const Tensor& b);
std::pair<Tensor, Tensor> split_channels(const Tensor& t, int first_channels);

}  // namespace saferoad::nn
