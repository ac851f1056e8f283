#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <vector>

namespace hydro::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Dense row-major tensor of doubles. Rank is the shape length; data length
// must always equal the shape product (checked on construction and reshape).
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor from_matrix(const Matrix& m);
  static Tensor from_vector(const Vector& v);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // row-major indexing helpers for the common ranks
  double& at(std::size_t i, std::size_t j);
  double at(std::size_t i, std::size_t j) const;
  double& at(std::size_t i, std::size_t j, std::size_t k);
  double at(std::size_t i, std::size_t j, std::size_t k) const;

  // rank-2 views onto the flat buffer (no copy)
  Eigen::Map<Matrix> as_matrix();
  Eigen::Map<const Matrix> as_matrix() const;
  Eigen::Map<Vector> as_vector();
  Eigen::Map<const Vector> as_vector() const;

  void reshape(std::vector<std::size_t> shape);
  void fill(double value);
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);
std::string shape_str(const std::vector<std::size_t>& shape);

}  // namespace hydro::nn
