#include "saferoad/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "saferoad/error.hpp"

namespace saferoad::nn {

std::vector<const Tensor*> Layer::parameters() const {
  auto ps = const_cast<Layer*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

std::vector<Tensor> zeros_like(const std::vector<const Tensor*>& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto* p : params) out.emplace_back(p->dims());
  return out;
}

std::vector<Tensor> zeros_like(const std::vector<Tensor*>& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto* p : params) out.emplace_back(p->dims());
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const Shape sa = a.shape(), sb = b.shape();
  if (sa.h != sb.h || sa.w != sb.w) throw Error(ErrorCode::DimensionMismatch, "concat spatial mismatch");
  Tensor out(Shape{sa.c + sb.c, sa.h, sa.w});
  std::copy(a.data(), a.data() + a.size(), out.data());
  std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
  return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& t, int first_channels) {
  const Shape s = t.shape();
  Tensor a(Shape{first_channels, s.h, s.w});
  Tensor b(Shape{s.c - first_channels, s.h, s.w});
  std::copy(t.data(), t.data() + a.size(), a.data());
  std::copy(t.data() + a.size(), t.data() + t.size(), b.data());
  return {std::move(a), std::move(b)};
}

// ---- Conv2d ----------------------------------------------------------------

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding, bool bias)
    : in_(in_channels),
      out_(out_channels),
      k_(kernel),
      stride_(stride),
      pad_(padding),
      has_bias_(bias),
      weight_(std::vector<int>{out_channels, in_channels, kernel, kernel}),
      bias_(std::vector<int>{out_channels}) {
  if (in_channels < 1 || out_channels < 1 || kernel < 1 || stride < 1 || padding < 0) {
    throw Error(ErrorCode::InvalidArgument, "invalid conv2d configuration");
  }
}

void Conv2d::init(std::mt19937_64& rng) {
  kaiming_uniform(weight_, in_ * k_ * k_, rng);
  bias_.fill(0.0);
}

std::vector<Tensor*> Conv2d::parameters() {
  if (has_bias_) return {&weight_, &bias_};
  return {&weight_};
}

Shape Conv2d::output_shape(Shape in) const {
  if (in.c != in_) {
    throw Error(ErrorCode::DimensionMismatch,
                "conv2d expects " + std::to_string(in_) + " channels, got " + std::to_string(in.c));
  }
  const int oh = (in.h + 2 * pad_ - k_) / stride_ + 1;
  const int ow = (in.w + 2 * pad_ - k_) / stride_ + 1;
  if (oh < 1 || ow < 1) throw Error(ErrorCode::DimensionMismatch, "conv2d input too small: " + to_string(in));
  return {out_, oh, ow};
}

namespace {

// Output column range [lo, hi) whose input column ox*stride - pad + k lies
// inside [0, in_w).
std::pair<int, int> valid_range(int k, int pad, int stride, int in_w, int out_w) {
  int lo = 0;
  while (lo < out_w && lo * stride - pad + k < 0) ++lo;
  int hi = out_w;
  while (hi > lo && (hi - 1) * stride - pad + k >= in_w) --hi;
  return {lo, hi};
}

}  // namespace

Tensor Conv2d::forward(const Tensor& x, Cache* cache) const {
  const Shape in = x.shape();
  const Shape os = output_shape(in);
  Tensor out(os);
  for (int oc = 0; oc < out_; ++oc) {
    double* o = &out.at(oc, 0, 0);
    if (has_bias_) std::fill(o, o + static_cast<std::size_t>(os.h) * os.w, bias_[oc]);
    for (int ic = 0; ic < in_; ++ic) {
      for (int ky = 0; ky < k_; ++ky) {
        const auto [ylo, yhi] = valid_range(ky, pad_, stride_, in.h, os.h);
        for (int kx = 0; kx < k_; ++kx) {
          const double w = weight_[((static_cast<std::size_t>(oc) * in_ + ic) * k_ + ky) * k_ + kx];
          const auto [xlo, xhi] = valid_range(kx, pad_, stride_, in.w, os.w);
          for (int oy = ylo; oy < yhi; ++oy) {
            const double* irow = &x.at(ic, oy * stride_ - pad_ + ky, 0);
            double* orow = &out.at(oc, oy, 0);
            if (stride_ == 1) {
              const double* ip = irow + (xlo - pad_ + kx);
              double* op = orow + xlo;
              for (int i = 0, n = xhi - xlo; i < n; ++i) op[i] += w * ip[i];
            } else {
              for (int ox = xlo; ox < xhi; ++ox) orow[ox] += w * irow[ox * stride_ - pad_ + kx];
            }
          }
        }
      }
    }
  }
  if (cache) cache->saved = {x};
  return out;
}

Tensor Conv2d::backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor> param_grads) const {
  const Tensor& x = cache.saved.at(0);
  const Shape in = x.shape();
  const Shape os = grad_out.shape();
  Tensor grad_in(in);
  Tensor& gw = param_grads[0];
  for (int oc = 0; oc < out_; ++oc) {
    if (has_bias_) {
      double s = 0.0;
      const double* g = &grad_out.at(oc, 0, 0);
      for (std::size_t i = 0; i < static_cast<std::size_t>(os.h) * os.w; ++i) s += g[i];
      param_grads[1][oc] += s;
    }
    for (int ic = 0; ic < in_; ++ic) {
      for (int ky = 0; ky < k_; ++ky) {
        const auto [ylo, yhi] = valid_range(ky, pad_, stride_, in.h, os.h);
        for (int kx = 0; kx < k_; ++kx) {
          const std::size_t widx = ((static_cast<std::size_t>(oc) * in_ + ic) * k_ + ky) * k_ + kx;
          const double w = weight_[widx];
          const auto [xlo, xhi] = valid_range(kx, pad_, stride_, in.w, os.w);
          double acc = 0.0;
          for (int oy = ylo; oy < yhi; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            const double* irow = &x.at(ic, iy, 0);
            double* girow = &grad_in.at(ic, iy, 0);
            const double* grow = &grad_out.at(oc, oy, 0);
            for (int ox = xlo; ox < xhi; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              acc += grow[ox] * irow[ix];
              girow[ix] += w * grow[ox];
            }
          }
          gw[widx] += acc;
        }
      }
    }
  }
  return grad_in;
}

// ---- BatchNorm2d -----------------------------------------------------------

BatchNorm2d::BatchNorm2d(int channels, double eps)
    : channels_(channels),
      eps_(eps),
      gamma_(std::vector<int>{channels}, 1.0),
      beta_(std::vector<int>{channels}, 0.0),
      mean_(std::vector<int>{channels}, 0.0),
      var_(std::vector<int>{channels}, 1.0) {}

Tensor BatchNorm2d::forward(const Tensor& x, Cache* cache) const {
  const Shape s = x.shape();
  if (s.c != channels_) throw Error(ErrorCode::DimensionMismatch, "batchnorm channel mismatch");
  Tensor out(s);
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  for (int c = 0; c < s.c; ++c) {
    const double inv = 1.0 / std::sqrt(var_[c] + eps_);
    const double scale = gamma_[c] * inv;
    const double shift = beta_[c] - mean_[c] * scale;
    const double* xi = &x.at(c, 0, 0);
    double* o = &out.at(c, 0, 0);
    for (std::size_t i = 0; i < plane; ++i) o[i] = xi[i] * scale + shift;
  }
  if (cache) cache->saved = {x};
  return out;
}

Tensor BatchNorm2d::backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor> param_grads) const {
  const Tensor& x = cache.saved.at(0);
  const Shape s = x.shape();
  Tensor grad_in(s);
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  for (int c = 0; c < s.c; ++c) {
    const double inv = 1.0 / std::sqrt(var_[c] + eps_);
    const double* xi = &x.at(c, 0, 0);
    const double* g = &grad_out.at(c, 0, 0);
    double* gi = &grad_in.at(c, 0, 0);
    double dg = 0.0, db = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      dg += g[i] * (xi[i] - mean_[c]) * inv;
      db += g[i];
      gi[i] = g[i] * gamma_[c] * inv;
    }
    param_grads[0][c] += dg;
    param_grads[1][c] += db;
  }
  return grad_in;
}

// ---- ReLU ------------------------------------------------------------------

Tensor ReLU::forward(const Tensor& x, Cache* cache) const {
  Tensor out = x;
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  if (cache) cache->saved = {out};
  return out;
}

Tensor ReLU::backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor>) const {
  const Tensor& y = cache.saved.at(0);
  Tensor grad_in = grad_out;
  for (std::size_t i = 0; i < grad_in.size(); ++i) {
    if (!(y[i] > 0.0)) grad_in[i] = 0.0;
  }
  return grad_in;
}

// ---- pooling ---------------------------------------------------------------

Shape MaxPool2d::output_shape(Shape in) const {
  auto dim = [&](int n) {
    const int span = n + 2 * pad_ - k_;
    int out = (ceil_ ? (span + stride_ - 1) / stride_ : span / stride_) + 1;
    // The last window must start inside the (left-padded) input.
    if (ceil_ && (out - 1) * stride_ >= n + pad_) --out;
    return out;
  };
  const Shape s{in.c, dim(in.h), dim(in.w)};
  if (s.h < 1 || s.w < 1) throw Error(ErrorCode::DimensionMismatch, "maxpool input too small: " + to_string(in));
  return s;
}

Tensor MaxPool2d::forward(const Tensor& x, Cache* cache) const {
  const Shape in = x.shape();
  const Shape os = output_shape(in);
  Tensor out(os);
  std::vector<std::size_t> arg(os.size());
  std::size_t o = 0;
  for (int c = 0; c < os.c; ++c)
    for (int oy = 0; oy < os.h; ++oy)
      for (int ox = 0; ox < os.w; ++ox, ++o) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        const int y0 = std::max(0, oy * stride_ - pad_), y1 = std::min(in.h, oy * stride_ - pad_ + k_);
        const int x0 = std::max(0, ox * stride_ - pad_), x1 = std::min(in.w, ox * stride_ - pad_ + k_);
        for (int y = y0; y < y1; ++y)
          for (int xx = x0; xx < x1; ++xx) {
            const double v = x.at(c, y, xx);
            if (v > best) {
              best = v;
              best_i = (static_cast<std::size_t>(c) * in.h + y) * in.w + xx;
            }
          }
        out[o] = best;
        arg[o] = best_i;
      }
  if (cache) {
    cache->indices = std::move(arg);
    cache->saved = {Tensor(std::vector<int>{in.c, in.h, in.w, 0})};
  }
  return out;
}

Tensor MaxPool2d::backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor>) const {
  const auto& d = cache.saved.at(0).dims();
  Tensor grad_in(Shape{d[0], d[1], d[2]});
  for (std::size_t o = 0; o < grad_out.size(); ++o) grad_in[cache.indices[o]] += grad_out[o];
  return grad_in;
}

Shape AvgPool2d::output_shape(Shape in) const {
  const Shape s{in.c, (in.h - k_) / stride_ + 1, (in.w - k_) / stride_ + 1};
  if (s.h < 1 || s.w < 1) throw Error(ErrorCode::DimensionMismatch, "avgpool input too small: " + to_string(in));
  return s;
}

Tensor AvgPool2d::forward(const Tensor& x, Cache* cache) const {
  const Shape in = x.shape();
  const Shape os = output_shape(in);
  Tensor out(os);
  const double norm = 1.0 / (k_ * k_);
  for (int c = 0; c < os.c; ++c)
    for (int oy = 0; oy < os.h; ++oy)
      for (int ox = 0; ox < os.w; ++ox) {
        double s = 0.0;
        for (int y = 0; y < k_; ++y)
          for (int xx = 0; xx < k_; ++xx) s += x.at(c, oy * stride_ + y, ox * stride_ + xx);
        out.at(c, oy, ox) = s * norm;
      }
  if (cache) cache->saved = {Tensor(std::vector<int>{in.c, in.h, in.w, 0})};
  return out;
}

Tensor AvgPool2d::backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor>) const {
  const auto& d = cache.saved.at(0).dims();
  Tensor grad_in(Shape{d[0], d[1], d[2]});
  const Shape os = grad_out.shape();
  const double norm = 1.0 / (k_ * k_);
  for (int c = 0; c < os.c; ++c)
    for (int oy = 0; oy < os.h; ++oy)
      for (int ox = 0; ox < os.w; ++ox) {
        const double g = grad_out.at(c, oy, ox) * norm;
        for (int y = 0; y < k_; ++y)
          for (int xx = 0; xx < k_; ++xx) grad_in.at(c, oy * stride_ + y, ox * stride_ + xx) += g;
      }
  return grad_in;
}

Tensor GlobalAvgPool::forward(const Tensor& x, Cache* cache) const {
  const Shape in = x.shape();
  Tensor out(Shape{in.c, 1, 1});
  const std::size_t plane = static_cast<std::size_t>(in.h) * in.w;
  for (int c = 0; c < in.c; ++c) {
    const double* p = &x.at(c, 0, 0);
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += p[i];
    out[static_cast<std::size_t>(c)] = s / static_cast<double>(plane);
  }
  if (cache) cache->saved = {Tensor(std::vector<int>{in.c, in.h, in.w, 0})};
  return out;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor>) const {
  const auto& d = cache.saved.at(0).dims();
  Tensor grad_in(Shape{d[0], d[1], d[2]});
  const std::size_t plane = static_cast<std::size_t>(d[1]) * d[2];
  for (int c = 0; c < d[0]; ++c) {
    const double g = grad_out[static_cast<std::size_t>(c)] / static_cast<double>(plane);
    double* p = &grad_in.at(c, 0, 0);
    for (std::size_t i = 0; i < plane; ++i) p[i] = g;
  }
  return grad_in;
}

// ---- Linear ----------------------------------------------------------------

Linear::Linear(int in_features, int out_features)
    : in_(in_features),
      out_(out_features),
      weight_(std::vector<int>{out_features, in_features}),
      bias_(std::vector<int>{out_features}) {}

void Linear::init(std::mt19937_64& rng) {
  kaiming_uniform(weight_, in_, rng);
  bias_.fill(0.0);
}

Shape Linear::output_shape(Shape in) const {
  if (in.size() != static_cast<std::size_t>(in_)) {
    throw Error(ErrorCode::DimensionMismatch,
                "linear expects " + std::to_string(in_) + " features, got " + std::to_string(in.size()));
  }
  return {out_, 1, 1};
}

Tensor Linear::forward(const Tensor& x, Cache* cache) const {
  output_shape(x.shape());
  Tensor out(Shape{out_, 1, 1});
  for (int o = 0; o < out_; ++o) {
    double s = bias_[static_cast<std::size_t>(o)];
    const double* w = weight_.data() + static_cast<std::size_t>(o) * in_;
    for (int i = 0; i < in_; ++i) s += w[i] * x[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(o)] = s;
  }
  if (cache) cache->saved = {x};
  return out;
}

Tensor Linear::backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor> param_grads) const {
  const Tensor& x = cache.saved.at(0);
  Tensor grad_in(x.dims());
  for (int o = 0; o < out_; ++o) {
    const double g = grad_out[static_cast<std::size_t>(o)];
    const double* w = weight_.data() + static_cast<std::size_t>(o) * in_;
    double* gw = param_grads[0].data() + static_cast<std::size_t>(o) * in_;
    for (int i = 0; i < in_; ++i) {
      gw[i] += g * x[static_cast<std::size_t>(i)];
      grad_in[static_cast<std::size_t>(i)] += g * w[i];
    }
    param_grads[1][static_cast<std::size_t>(o)] += g;
  }
  return grad_in;
}

// ---- Sequential ------------------------------------------------------------

Sequential::Sequential(const Sequential& other) : Layer(other) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Sequential& Sequential::add(LayerPtr layer) {
  layers_.push_back(std::move(layer));
  return *this;
}

Shape Sequential::output_shape(Shape in) const {
  for (const auto& l : layers_) in = l->output_shape(in);
  return in;
}

Tensor Sequential::forward(const Tensor& x, Cache* cache) const {
  if (cache) cache->children.assign(layers_.size(), {});
  Tensor cur = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    cur = layers_[i]->forward(cur, cache ? &cache->children[i] : nullptr);
  }
  return cur;
}

Tensor Sequential::backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor> param_grads) const {
  std::vector<std::size_t> offsets(layers_.size() + 1, 0);
  for (std::size_t i = 0; i < layers_.size(); ++i) offsets[i + 1] = offsets[i] + layers_[i]->parameter_count();
  Tensor g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    g = layers_[i]->backward(g, cache.children.at(i),
                             param_grads.subspan(offsets[i], offsets[i + 1] - offsets[i]));
  }
  return g;
}

std::vector<Tensor*> Sequential::parameters() {
  std::vector<Tensor*> out;
  for (auto& l : layers_) {
    auto ps = l->parameters();
    out.insert(out.end(), ps.begin(), ps.end());
  }
  return out;
}

std::vector<Tensor*> Sequential::buffers() {
  std::vector<Tensor*> out;
  for (auto& l : layers_) {
    auto bs = l->buffers();
    out.insert(out.end(), bs.begin(), bs.end());
  }
  return out;
}

void Sequential::init(std::mt19937_64& rng) {
  for (auto& l : layers_) l->init(rng);
}

}  // namespace saferoad::nn
