#include "saferoad/nn/blocks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "saferoad/error.hpp"

namespace saferoad::nn {

namespace {

std::vector<Tensor*> concat(std::initializer_list<std::vector<Tensor*>> lists) {
  std::vector<Tensor*> out;
  for (const auto& l : lists) out.insert(out.end(), l.begin(), l.end());
  return out;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

// ---- Fire ------------------------------------------------------------------

Fire::Fire(int in_channels, int squeeze, int expand1x1, int expand3x3) : e1_channels_(expand1x1) {
  squeeze_.emplace<Conv2d>(in_channels, squeeze, 1).emplace<ReLU>();
  expand1_.emplace<Conv2d>(squeeze, expand1x1, 1).emplace<ReLU>();
  expand3_.emplace<Conv2d>(squeeze, expand3x3, 3, 1, 1).emplace<ReLU>();
}

Shape Fire::output_shape(Shape in) const {
  const Shape s = squeeze_.output_shape(in);
  const Shape a = expand1_.output_shape(s), b = expand3_.output_shape(s);
  return {a.c + b.c, a.h, a.w};
}

Tensor Fire::forward(const Tensor& x, Cache* cache) const {
  if (cache) cache->children.assign(3, {});
  const Tensor s = squeeze_.forward(x, cache ? &cache->children[0] : nullptr);
  const Tensor a = expand1_.forward(s, cache ? &cache->children[1] : nullptr);
  const Tensor b = expand3_.forward(s, cache ? &cache->children[2] : nullptr);
  return concat_channels(a, b);
}

Tensor Fire::backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor> param_grads) const {
  const std::size_t n0 = squeeze_.parameter_count(), n1 = expand1_.parameter_count(),
                    n2 = expand3_.parameter_count();
  auto [ga, gb] = split_channels(grad_out, e1_channels_);
  Tensor gs = expand1_.backward(ga, cache.children[1], param_grads.subspan(n0, n1));
  gs += expand3_.backward(gb, cache.children[2], param_grads.subspan(n0 + n1, n2));
  return squeeze_.backward(gs, cache.children[0], param_grads.subspan(0, n0));
}

std::vector<Tensor*> Fire::parameters() {
  return concat({squeeze_.parameters(), expand1_.parameters(), expand3_.parameters()});
}

void Fire::init(std::mt19937_64& rng) {
  squeeze_.init(rng);
  expand1_.init(rng);
  expand3_.init(rng);
}

// ---- BasicBlock ------------------------------------------------------------

BasicBlock::BasicBlock(int in_channels, int out_channels, int stride) {
  main_.emplace<Conv2d>(in_channels, out_channels, 3, stride, 1, false)
      .emplace<BatchNorm2d>(out_channels)
      .emplace<ReLU>()
      .emplace<Conv2d>(out_channels, out_channels, 3, 1, 1, false)
      .emplace<BatchNorm2d>(out_channels);
  if (stride != 1 || in_channels != out_channels) {
    shortcut_.emplace<Conv2d>(in_channels, out_channels, 1, stride, 0, false).emplace<BatchNorm2d>(out_channels);
  }
}

Shape BasicBlock::output_shape(Shape in) const { return main_.output_shape(in); }

Tensor BasicBlock::forward(const Tensor& x, Cache* cache) const {
  if (cache) cache->children.assign(2, {});
  Tensor sum = main_.forward(x, cache ? &cache->children[0] : nullptr);
  sum += shortcut_.size() ? shortcut_.forward(x, cache ? &cache->children[1] : nullptr) : x;
  for (auto& v : sum.values()) v = v > 0.0 ? v : 0.0;
  if (cache) cache->saved = {sum};
  return sum;
}

Tensor BasicBlock::backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor> param_grads) const {
  Tensor g = grad_out;
  const Tensor& y = cache.saved.at(0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(y[i] > 0.0)) g[i] = 0.0;
  }
  const std::size_t nm = main_.parameter_count(), ns = shortcut_.parameter_count();
  Tensor gx = main_.backward(g, cache.children[0], param_grads.subspan(0, nm));
  gx += shortcut_.size() ? shortcut_.backward(g, cache.children[1], param_grads.subspan(nm, ns)) : g;
  return gx;
}

std::vector<Tensor*> BasicBlock::parameters() { return concat({main_.parameters(), shortcut_.parameters()}); }
std::vector<Tensor*> BasicBlock::buffers() { return concat({main_.buffers(), shortcut_.buffers()}); }

void BasicBlock::init(std::mt19937_64& rng) {
  main_.init(rng);
  shortcut_.init(rng);
}

// ---- DenseLayer ------------------------------------------------------------

DenseLayer::DenseLayer(int in_channels, int growth, int bottleneck_factor) : in_channels_(in_channels) {
  const int mid = bottleneck_factor * growth;
  body_.emplace<BatchNorm2d>(in_channels)
      .emplace<ReLU>()
      .emplace<Conv2d>(in_channels, mid, 1, 1, 0, false)
      .emplace<BatchNorm2d>(mid)
      .emplace<ReLU>()
      .emplace<Conv2d>(mid, growth, 3, 1, 1, false);
}

Shape DenseLayer::output_shape(Shape in) const {
  const Shape b = body_.output_shape(in);
  return {in.c + b.c, in.h, in.w};
}

Tensor DenseLayer::forward(const Tensor& x, Cache* cache) const {
  if (cache) cache->children.assign(1, {});
  return concat_channels(x, body_.forward(x, cache ? &cache->children[0] : nullptr));
}

Tensor DenseLayer::backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor> param_grads) const {
  auto [gx, gnew] = split_channels(grad_out, in_channels_);
  gx += body_.backward(gnew, cache.children[0], param_grads);
  return gx;
}

// ---- AttentionBlock --------------------------------------------------------

AttentionBlock::AttentionBlock(int channels, int reduction, int spatial_kernel)
    : channels_(channels),
      fc1_(channels, std::max(1, channels / std::max(1, reduction))),
      fc2_(std::max(1, channels / std::max(1, reduction)), channels),
      spatial_(2, 1, spatial_kernel, 1, spatial_kernel / 2) {
  if (reduction < 1) throw Error(ErrorCode::InvalidArgument, "channel_reduction must be >= 1");
  if (spatial_kernel < 1 || spatial_kernel % 2 == 0) {
    throw Error(ErrorCode::InvalidArgument, "spatial_kernel must be a positive odd integer");
  }
}

Shape AttentionBlock::output_shape(Shape in) const {
  if (in.c != channels_) throw Error(ErrorCode::DimensionMismatch, "attention channel mismatch");
  return in;
}

std::vector<Tensor*> AttentionBlock::parameters() {
  return concat({fc1_.parameters(), fc2_.parameters(), spatial_.parameters()});
}

void AttentionBlock::init(std::mt19937_64& rng) {
  fc1_.init(rng);
  fc2_.init(rng);
  spatial_.init(rng);
}

void AttentionBlock::init_identity() {
  // sigmoid(40) rounds to exactly 1.0 in double precision.
  constexpr double kSaturated = 40.0;
  fc2_.weight().fill(0.0);
  fc2_.bias().fill(kSaturated);
  spatial_.weight().fill(0.0);
  spatial_.bias().fill(kSaturated);
}

Tensor AttentionBlock::forward(const Tensor& x, Cache* cache) const {
  const Shape s = output_shape(x.shape());
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  if (cache) cache->children.assign(3, {});

  // Channel gate.
  GlobalAvgPool gap;
  const Tensor pooled = gap.forward(x, nullptr);
  Tensor hidden = fc1_.forward(pooled, cache ? &cache->children[0] : nullptr);
  for (auto& v : hidden.values()) v = v > 0.0 ? v : 0.0;
  Tensor a = fc2_.forward(hidden, cache ? &cache->children[1] : nullptr);
  for (auto& v : a.values()) v = sigmoid(v);

  Tensor y1(s);
  for (int c = 0; c < s.c; ++c) {
    const double ac = a[static_cast<std::size_t>(c)];
    const double* xi = &x.at(c, 0, 0);
    double* yo = &y1.at(c, 0, 0);
    for (std::size_t i = 0; i < plane; ++i) yo[i] = xi[i] * ac;
  }

  // Spatial gate over [channel mean; channel max].
  Tensor pooled2(Shape{2, s.h, s.w});
  std::vector<std::size_t> argmax(plane, 0);
  for (std::size_t i = 0; i < plane; ++i) {
    double sum = 0.0, best = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < s.c; ++c) {
      const double v = y1[static_cast<std::size_t>(c) * plane + i];
      sum += v;
      if (v > best) {
        best = v;
        argmax[i] = static_cast<std::size_t>(c);
      }
    }
    pooled2[i] = sum / s.c;
    pooled2[plane + i] = best;
  }
  Tensor b = spatial_.forward(pooled2, cache ? &cache->children[2] : nullptr);
  for (auto& v : b.values()) v = sigmoid(v);

  Tensor out(s);
  for (int c = 0; c < s.c; ++c)
    for (std::size_t i = 0; i < plane; ++i) {
      out[static_cast<std::size_t>(c) * plane + i] = y1[static_cast<std::size_t>(c) * plane + i] * b[i];
    }
  if (cache) {
    cache->saved = {x, hidden, a, y1, b};
    cache->indices = std::move(argmax);
  }
  return out;
}

Tensor AttentionBlock::backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor> param_grads) const {
  const Tensor& x = cache.saved.at(0);
  const Tensor& hidden = cache.saved.at(1);
  const Tensor& a = cache.saved.at(2);
  const Tensor& y1 = cache.saved.at(3);
  const Tensor& b = cache.saved.at(4);
  const Shape s = x.shape();
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  const std::size_t n1 = fc1_.parameter_count(), n2 = fc2_.parameter_count(), n3 = spatial_.parameter_count();

  // out = y1 * b
  Tensor gy1(s);
  Tensor gb(Shape{1, s.h, s.w});
  for (int c = 0; c < s.c; ++c)
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t k = static_cast<std::size_t>(c) * plane + i;
      gy1[k] = grad_out[k] * b[i];
      gb[i] += grad_out[k] * y1[k];
    }
  for (std::size_t i = 0; i < plane; ++i) gb[i] *= b[i] * (1.0 - b[i]);
  const Tensor gpooled2 = spatial_.backward(gb, cache.children[2], param_grads.subspan(n1 + n2, n3));
  for (std::size_t i = 0; i < plane; ++i) {
    const double gmean = gpooled2[i] / s.c;
    for (int c = 0; c < s.c; ++c) gy1[static_cast<std::size_t>(c) * plane + i] += gmean;
    gy1[cache.indices[i] * plane + i] += gpooled2[plane + i];
  }

  // y1 = x * a
  Tensor gx(s);
  Tensor ga(Shape{s.c, 1, 1});
  for (int c = 0; c < s.c; ++c) {
    const double ac = a[static_cast<std::size_t>(c)];
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t k = static_cast<std::size_t>(c) * plane + i;
      gx[k] = gy1[k] * ac;
      acc += gy1[k] * x[k];
    }
    ga[static_cast<std::size_t>(c)] = acc * ac * (1.0 - ac);
  }
  Tensor ghidden = fc2_.backward(ga, cache.children[1], param_grads.subspan(n1, n2));
  for (std::size_t i = 0; i < ghidden.size(); ++i) {
    if (!(hidden[i] > 0.0)) ghidden[i] = 0.0;
  }
  const Tensor gpooled = fc1_.backward(ghidden, cache.children[0], param_grads.subspan(0, n1));
  for (int c = 0; c < s.c; ++c) {
    const double g = gpooled[static_cast<std::size_t>(c)] / static_cast<double>(plane);
    for (std::size_t i = 0; i < plane; ++i) gx[static_cast<std::size_t>(c) * plane + i] += g;
  }
  return gx;
}

AttentionBlock::Weights AttentionBlock::attention(const Tensor& x) const {
  Cache cache;
  forward(x, &cache);
  return {cache.saved.at(2), cache.saved.at(4)};
}

}  // namespace saferoad::nn
