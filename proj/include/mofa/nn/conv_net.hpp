#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mofa/core/tensor.hpp"

namespace mofa::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One valid (unpadded) convolution, optionally followed by ELU.
struct ConvSpec {
  int out_channels = 0;
  int kernel = 1;
  int stride = 1;
  bool elu = true;
};

/// A stack of valid convolutions over HWC tensors with explicit backward
/// passes. Parameters are stored per layer as a (out x k*k*in) weight matrix,
/// row-major over (ky, kx, in_channel), followed by a bias vector.
class ConvNet {
 public:
  ConvNet() = default;
  ConvNet(int in_channels, std::vector<ConvSpec> layers);

  /// Everything backward() needs from a forward pass.
  struct Trace {
    std::vector<Shape3> input_shapes;
    std::vector<RowMatrix> columns;
    std::vector<RowMatrix> pre_activations;
  };

  /// Parameter gradients, laid out like parameters().
  using Gradients = std::vector<std::vector<double>>;

  int in_channels() const { return in_channels_; }
  const std::vector<ConvSpec>& layers() const { return layers_; }
  Shape3 output_shape(const Shape3& input) const;
  /// Receptive field side and total stride of the stack.
  int receptive_field() const;
  int total_stride() const;

  /// He-uniform weights and zero biases.
  void initialize(std::uint64_t seed);

  Tensor3 forward(const Tensor3& input, Trace* trace = nullptr) const;

  /// Returns d(loss)/d(input) when `want_input_grad`; accumulates parameter
  /// gradients into `grads` when non-null.
  Tensor3 backward(const Trace& trace, const Tensor3& d_output, Gradients* grads,
                   bool want_input_grad = true) const;

  std::vector<std::vector<double>>& parameters() { return params_; }
  const std::vector<std::vector<double>>& parameters() const { return params_; }
  Gradients zero_gradients() const;
  std::vector<std::string> parameter_names() const;
  std::size_t parameter_count() const;

  /// Rounds every parameter to float32 so checkpoints reload bit-exactly.
  void round_to_float();

 private:
  int in_channels_ = 0;
  std::vector<ConvSpec> layers_;
  std::vector<int> layer_in_channels_;
  // params_[2*i] = weights of layer i, params_[2*i+1] = biases.
  std::vector<std::vector<double>> params_;
};

/// Adam with bias correction.
class Adam {
 public:
  Adam(const std::vector<std::vector<double>>& params, double learning_rate, double beta1 = 0.9,
       double beta2 = 0.999, double epsilon = 1e-8);
  void step(std::vector<std::vector<double>>& params, const ConvNet::Gradients& grads);
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace mofa::nn
