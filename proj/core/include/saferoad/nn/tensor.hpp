#pragma once

#include <cstddef>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace saferoad::nn {

// Activation geometry: channels x height x width.
struct Shape {
  int c = 0;
  int h = 0;
  int w = 0;
  std::size_t size() const noexcept { return static_cast<std::size_t>(c) * h * w; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

// Dense row-major double tensor. Activations are rank 3 (CHW); parameters
// use whatever rank suits them.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> dims, double fill = 0.0);
  explicit Tensor(Shape s, double fill = 0.0) : Tensor(std::vector<int>{s.c, s.h, s.w}, fill) {}

  const std::vector<int>& dims() const noexcept { return dims_; }
  std::size_t size() const noexcept { return data_.size(); }

  // Valid for rank-3 tensors.
  Shape shape() const;
  int channels() const { return dims_.at(0); }
  int height() const { return dims_.at(1); }
  int width() const { return dims_.at(2); }

  double& at(int c, int y, int x) noexcept {
    return data_[(static_cast<std::size_t>(c) * dims_[1] + y) * dims_[2] + x];
  }
  const double& at(int c, int y, int x) const noexcept {
    return data_[(static_cast<std::size_t>(c) * dims_[1] + y) * dims_[2] + x];
  }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  void fill(double v);
  Tensor& operator+=(const Tensor& other);
  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<int> dims_;
  std::vector<double> data_;
};

// He-uniform initialization for a layer with the given fan-in.
void kaiming_uniform(Tensor& t, int fan_in, std::mt19937_64& rng);

std::vector<double> softmax(std::span<const double> logits);

}  // namespace saferoad::nn
