#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mofa {

struct Shape3 {
  int height = 0;
  int width = 0;
  int channels = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(height) * width * channels;
  }
  bool operator==(const Shape3&) const = default;
};

/// Dense height x width x channels array, row-major with channels innermost.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(int height, int width, int channels, double fill = 0.0)
      : shape_{height, width, channels}, data_(shape_.size(), fill) {}
  Tensor3(Shape3 shape, std::vector<double> data);

  const Shape3& shape() const { return shape_; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  int channels() const { return shape_.channels; }
  std::size_t size() const { return data_.size(); }

  double& operator()(int y, int x, int c) {
    return data_[(static_cast<std::size_t>(y) * shape_.width + x) * shape_.channels + c];
  }
  double operator()(int y, int x, int c) const {
    return data_[(static_cast<std::size_t>(y) * shape_.width + x) * shape_.channels + c];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool operator==(const Tensor3&) const = default;

 private:
  Shape3 shape_{};
  std::vector<double> data_;
};

/// Two-dimensional real array indexed (row, col).
class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool operator==(const Grid&) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

}  // namespace mofa
