#include "hydro/nn/tensor.hpp"

#include <numeric>
#include <sstream>
#include <stdexcept>

namespace hydro::nn {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_))
    throw std::invalid_argument("Tensor: data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_str(shape_));
}

Tensor Tensor::from_matrix(const Matrix& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  Eigen::Map<Matrix>(t.data(), m.rows(), m.cols()) = m;
  return t;
}

Tensor Tensor::from_vector(const Vector& v) {
  Tensor t({static_cast<std::size_t>(v.size())});
  Eigen::Map<Vector>(t.data(), v.size()) = v;
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size())
    throw std::invalid_argument("Tensor::dim: axis " + std::to_string(axis) +
                                " out of range for shape " + shape_str(shape_));
  return shape_[axis];
}

double& Tensor::at(std::size_t i, std::size_t j) {
  return data_[i * shape_[1] + j];
}
double Tensor::at(std::size_t i, std::size_t j) const {
  return data_[i * shape_[1] + j];
}
double& Tensor::at(std::size_t i, std::size_t j, std::size_t k) {
  return data_[(i * shape_[1] + j) * shape_[2] + k];
}
double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
  return data_[(i * shape_[1] + j) * shape_[2] + k];
}

Eigen::Map<Matrix> Tensor::as_matrix() {
  if (rank() != 2)
    throw std::invalid_argument("Tensor::as_matrix: rank-" + std::to_string(rank()) +
                                " tensor " + shape_str(shape_) + " is not a matrix");
  return {data_.data(), static_cast<Eigen::Index>(shape_[0]),
          static_cast<Eigen::Index>(shape_[1])};
}

Eigen::Map<const Matrix> Tensor::as_matrix() const {
  if (rank() != 2)
    throw std::invalid_argument("Tensor::as_matrix: rank-" + std::to_string(rank()) +
                                " tensor " + shape_str(shape_) + " is not a matrix");
  return {data_.data(), static_cast<Eigen::Index>(shape_[0]),
          static_cast<Eigen::Index>(shape_[1])};
}

Eigen::Map<Vector> Tensor::as_vector() {
  return {data_.data(), static_cast<Eigen::Index>(data_.size())};
}
Eigen::Map<const Vector> Tensor::as_vector() const {
  return {data_.data(), static_cast<Eigen::Index>(data_.size())};
}

void Tensor::reshape(std::vector<std::size_t> shape) {
  if (shape_numel(shape) != data_.size())
    throw std::invalid_argument("Tensor::reshape: new shape " + shape_str(shape) +
                                " has " + std::to_string(shape_numel(shape)) +
                                " elements, tensor has " + std::to_string(data_.size()));
  shape_ = std::move(shape);
}

void Tensor::fill(double value) {
  std::fill(data_.begin(), data_.end(), value);
}

}  // namespace hydro::nn
