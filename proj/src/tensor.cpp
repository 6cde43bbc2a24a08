#include "structmark/tensor.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "structmark/common.hpp"

namespace structmark::net {

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
  int64_t n = 1;
  for (int e : shape) {
    if (e < 0) throw std::invalid_argument("Tensor: negative extent");
    n *= e;
  }
  data.assign(static_cast<size_t>(n), 0.0);
}

Tensor Tensor::scalar(double v) {
  Tensor t(std::vector<int>{});
  t.data.assign(1, v);
  return t;
}

Tensor Tensor::row(const std::vector<double>& v) {
  Tensor t({1, static_cast<int>(v.size())});
  t.data = v;
  return t;
}

int64_t Tensor::numel() const {
  int64_t n = 1;
  for (int e : shape) n *= e;
  return n;
}

int Tensor::rows() const {
  if (shape.empty()) return 1;
  if (shape.size() == 1) return 1;
  return shape[0];
}

int Tensor::cols() const {
  if (shape.empty()) return 1;
  return shape.back();
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

void Tensor::check_finite(const char* where) const {
  for (double v : data) {
    if (!std::isfinite(v))
      throw Error(std::string("non-finite value in ") + where);
  }
}

void add_into(Tensor& y, const Tensor& a) {
  if (y.data.size() != a.data.size())
    throw std::invalid_argument("add_into: shape mismatch");
  for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += a.data[i];
}

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

void matmul_into(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b,
                 Tensor& c, bool accumulate) {
  const int ar = a.rows(), ac = a.cols();
  const int br = b.rows(), bc = b.cols();
  const int m = trans_a ? ac : ar;
  const int k = trans_a ? ar : ac;
  const int k2 = trans_b ? bc : br;
  const int n = trans_b ? br : bc;
  if (k != k2)
    throw std::invalid_argument("matmul: inner dimension mismatch " +
                                a.shape_str() + " vs " + b.shape_str());
  if (c.rows() != m || c.cols() != n)
    throw std::invalid_argument("matmul: output shape mismatch");

  CMap ma(a.data.data(), ar, ac);
  CMap mb(b.data.data(), br, bc);
  MMap mc(c.data.data(), m, n);

  if (!trans_a && !trans_b) {
    if (accumulate) mc.noalias() += ma * mb;
    else mc.noalias() = ma * mb;
  } else if (trans_a && !trans_b) {
    if (accumulate) mc.noalias() += ma.transpose() * mb;
    else mc.noalias() = ma.transpose() * mb;
  } else if (!trans_a && trans_b) {
    if (accumulate) mc.noalias() += ma * mb.transpose();
    else mc.noalias() = ma * mb.transpose();
  } else {
    if (accumulate) mc.noalias() += ma.transpose() * mb.transpose();
    else mc.noalias() = ma.transpose() * mb.transpose();
  }
}

}  // namespace structmark::net
