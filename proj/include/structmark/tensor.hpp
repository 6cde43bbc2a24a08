#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace structmark::net {

// Dense row-major f64 tensor. Rank 1 or 2 in practice.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s);

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor scalar(double v);
  static Tensor row(const std::vector<double>& v);

  int64_t numel() const;
  int rows() const;
  int cols() const;

  double& at(int i, int j) { return data[static_cast<size_t>(i) * cols() + j]; }
  double at(int i, int j) const { return data[static_cast<size_t>(i) * cols() + j]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  std::string shape_str() const;

  // throws Error naming `where` if any element is non-finite
  void check_finite(const char* where) const;
};

// y += a (same shape)
void add_into(Tensor& y, const Tensor& a);

// C (+)= op(A) * op(B); shapes validated by caller
void matmul_into(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b,
                 Tensor& c, bool accumulate);

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape)) {}

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

}  // namespace structmark::net
