#pragma once

#include "saferoad/nn/layers.hpp"

namespace saferoad::nn {

// SqueezeNet fire module: 1x1 squeeze, then parallel 1x1 and 3x3 expands
// concatenated along channels.
class Fire final : public Layer {
 public:
  Fire(int in_channels, int squeeze, int expand1x1, int expand3x3);

  std::string kind() const override { return "fire"; }
  Shape output_shape(Shape in) const override;
  Tensor forward(const Tensor& x, Cache* cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor> param_grads) const override;
  std::vector<Tensor*> parameters() override;
  LayerPtr clone() const override { return std::make_unique<Fire>(*this); }
  void init(std::mt19937_64& rng) override;

 private:
  Sequential squeeze_, expand1_, expand3_;
  int e1_channels_;
};

// ResNet basic block: two 3x3 conv-bn pairs plus an identity or projection
// shortcut, followed by ReLU.
class BasicBlock final : public Layer {
 public:
  BasicBlock(int in_channels, int out_channels, int stride);

  std::string kind() const override { return "basic_block"; }
  Shape output_shape(Shape in) const override;
  Tensor forward(const Tensor& x, Cache* cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor> param_grads) const override;
  std::vector<Tensor*> parameters() override;
  std::vector<Tensor*> buffers() override;
  LayerPtr clone() const override { return std::make_unique<BasicBlock>(*this); }
  void init(std::mt19937_64& rng) override;

 private:
  Sequential main_, shortcut_;
};

// DenseNet bottleneck layer; output is the input with `growth` new channels
// appended.
class DenseLayer final : public Layer {
 public:
  DenseLayer(int in_channels, int growth, int bottleneck_factor = 4);

  std::string kind() const override { return "dense_layer"; }
  Shape output_shape(Shape in) const override;
  Tensor forward(const Tensor& x, Cache* cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor> param_grads) const override;
  std::vector<Tensor*> parameters() override { return body_.parameters(); }
  std::vector<Tensor*> buffers() override { return body_.buffers(); }
  LayerPtr clone() const override { return std::make_unique<DenseLayer>(*this); }
  void init(std::mt19937_64& rng) override { body_.init(rng); }

 private:
  int in_channels_;
  Sequential body_;
};

// Attention-based module placed between backbone and head. Channel attention
// (global-average-pooled two-layer MLP, sigmoid gate) rescales channels, then
// spatial attention (k x k conv over the channelwise mean and max, sigmoid
// gate) rescales positions. Output shape equals input shape.
class AttentionBlock final : public Layer {
 public:
  AttentionBlock(int channels, int reduction, int spatial_kernel);

  std::string kind() const override { return "attention"; }
  Shape output_shape(Shape in) const override;
  Tensor forward(const Tensor& x, Cache* cache) const override;
  Tensor backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor> param_grads) const override;
  std::vector<Tensor*> parameters() override;
  LayerPtr clone() const override { return std::make_unique<AttentionBlock>(*this); }
  void init(std::mt19937_64& rng) override;

  // Gates saturate to exactly 1.0, making the block an identity map.
  void init_identity();

  struct Weights {
    Tensor channel;  // C x 1 x 1, in [0,1]
    Tensor spatial;  // 1 x H x W, in [0,1]
  };
  Weights attention(const Tensor& x) const;

 private:
  int channels_;
  Linear fc1_, fc2_;
  Conv2d spatial_;
};

}  // namespace saferoad::nn
