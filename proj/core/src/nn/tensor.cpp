#include "saferoad/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "saferoad/error.hpp"

namespace saferoad::nn {

std::string to_string(const Shape& s) {
  return std::to_string(s.c) + "x" + std::to_string(s.h) + "x" + std::to_string(s.w);
}

Tensor::Tensor(std::vector<int> dims, double fill) : dims_(std::move(dims)) {
  std::size_t n = 1;
  for (int d : dims_) {
    if (d < 0) throw Error(ErrorCode::InvalidArgument, "negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  data_.assign(n, fill);
}

Shape Tensor::shape() const {
  if (dims_.size() != 3) throw Error(ErrorCode::DimensionMismatch, "tensor is not rank 3");
  return {dims_[0], dims_[1], dims_[2]};
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
  if (other.dims_ != dims_) throw Error(ErrorCode::DimensionMismatch, "tensor add with differing dims");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void kaiming_uniform(Tensor& t, int fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / std::max(fan_in, 1));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.values()) v = dist(rng);
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  if (out.empty()) return out;
  const double m = *std::max_element(out.begin(), out.end());
  double sum = 0.0;
  for (auto& v : out) {
    v = std::exp(v - m);
    sum += v;
  }
  for (auto& v : out) v /= sum;
  return out;
}

}  // namespace saferoad::nn
