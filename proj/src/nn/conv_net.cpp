#include "mofa/nn/conv_net.hpp"

#include <cmath>
#include <cstring>

#include "mofa/core/errors.hpp"
#include "mofa/core/random.hpp"

namespace mofa::nn {

namespace {

int conv_out(int in, int kernel, int stride) { return (in - kernel) / stride + 1; }

}  // namespace

ConvNet::ConvNet(int in_channels, std::vector<ConvSpec> layers)
    : in_channels_(in_channels), layers_(std::move(layers)) {
  int ch = in_channels_;
  for (const auto& l : layers_) {
    if (l.out_channels <= 0 || l.kernel <= 0 || l.stride <= 0) throw DomainError("bad conv spec");
    layer_in_channels_.push_back(ch);
    params_.emplace_back(static_cast<std::size_t>(l.out_channels) * l.kernel * l.kernel * ch, 0.0);
    params_.emplace_back(static_cast<std::size_t>(l.out_channels), 0.0);
    ch = l.out_channels;
  }
}

Shape3 ConvNet::output_shape(const Shape3& input) const {
  Shape3 s = input;
  for (const auto& l : layers_) {
    if (s.height < l.kernel || s.width < l.kernel) {
      throw DomainError("input " + std::to_string(input.width) + "x" +
                        std::to_string(input.height) + " is too small for the network");
    }
    s = {conv_out(s.height, l.kernel, l.stride), conv_out(s.width, l.kernel, l.stride),
         l.out_channels};
  }
  return s;
}

int ConvNet::receptive_field() const {
  int rf = 1;
  int jump = 1;
  for (const auto& l : layers_) {
    rf += (l.kernel - 1) * jump;
    jump *= l.stride;
  }
  return rf;
}

int ConvNet::total_stride() const {
  int s = 1;
  for (const auto& l : layers_) s *= l.stride;
  return s;
}

void ConvNet::initialize(std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    double fan_in = static_cast<double>(l.kernel * l.kernel * layer_in_channels_[i]);
    double bound = std::sqrt(6.0 / fan_in);
    for (auto& w : params_[2 * i]) w = rng.uniform(-bound, bound);
    for (auto& b : params_[2 * i + 1]) b = 0.0;
  }
}

Tensor3 ConvNet::forward(const Tensor3& input, Trace* trace) const {
  if (input.channels() != in_channels_) {
    throw DomainError("network expects " + std::to_string(in_channels_) + " channels, got " +
                      std::to_string(input.channels()));
  }
  output_shape(input.shape());
  if (trace) {
    trace->input_shapes.clear();
    trace->columns.clear();
    trace->pre_activations.clear();
  }
  Tensor3 x = input;
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const auto& l = layers_[li];
    const int cin = x.channels();
    const int oh = conv_out(x.height(), l.kernel, l.stride);
    const int ow = conv_out(x.width(), l.kernel, l.stride);
    const int patch = l.kernel * l.kernel * cin;
    RowMatrix cols(static_cast<Eigen::Index>(oh) * ow, patch);
    const double* src = x.data().data();
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double* row = cols.data() + (static_cast<std::size_t>(oy) * ow + ox) * patch;
        for (int ky = 0; ky < l.kernel; ++ky) {
          const double* s = src + (static_cast<std::size_t>(oy * l.stride + ky) * x.width() +
                                   ox * l.stride) * cin;
          std::memcpy(row + ky * l.kernel * cin, s, sizeof(double) * l.kernel * cin);
        }
      }
    }
    Eigen::Map<const RowMatrix> w(params_[2 * li].data(), l.out_channels, patch);
    Eigen::Map<const Eigen::RowVectorXd> b(params_[2 * li + 1].data(), l.out_channels);
    RowMatrix pre = cols * w.transpose();
    pre.rowwise() += b;

    Tensor3 out(oh, ow, l.out_channels);
    double* dst = out.data().data();
    const double* p = pre.data();
    const std::size_t n = out.size();
    if (l.elu) {
      for (std::size_t i = 0; i < n; ++i) dst[i] = p[i] > 0.0 ? p[i] : std::expm1(p[i]);
    } else {
      std::memcpy(dst, p, sizeof(double) * n);
    }
    if (trace) {
      trace->input_shapes.push_back(x.shape());
      trace->columns.push_back(std::move(cols));
      trace->pre_activations.push_back(std::move(pre));
    }
    x = std::move(out);
  }
  return x;
}

Tensor3 ConvNet::backward(const Trace& trace, const Tensor3& d_output, Gradients* grads,
                          bool want_input_grad) const {
  if (trace.columns.size() != layers_.size()) throw DomainError("trace does not match network");
  RowMatrix d_out = Eigen::Map<const RowMatrix>(
      d_output.data().data(), static_cast<Eigen::Index>(d_output.height()) * d_output.width(),
      d_output.channels());
  Tensor3 d_in;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& l = layers_[li];
    const auto& pre = trace.pre_activations[li];
    if (d_out.rows() != pre.rows() || d_out.cols() != pre.cols()) {
      throw DomainError("output gradient shape mismatch");
    }
    if (l.elu) {
      const double* p = pre.data();
      double* g = d_out.data();
      const Eigen::Index n = d_out.size();
      for (Eigen::Index i = 0; i < n; ++i) {
        if (p[i] <= 0.0) g[i] *= std::exp(p[i]);
      }
    }
    const auto& cols = trace.columns[li];
    const Shape3 in_shape = trace.input_shapes[li];
    const int patch = static_cast<int>(cols.cols());
    if (grads) {
      Eigen::Map<RowMatrix> dw((*grads)[2 * li].data(), l.out_channels, patch);
      Eigen::Map<Eigen::RowVectorXd> db((*grads)[2 * li + 1].data(), l.out_channels);
      dw.noalias() += d_out.transpose() * cols;
      db += d_out.colwise().sum();
    }
    if (li == 0 && !want_input_grad) break;

    Eigen::Map<const RowMatrix> w(params_[2 * li].data(), l.out_channels, patch);
    RowMatrix d_cols = d_out * w;
    d_in = Tensor3(in_shape.height, in_shape.width, in_shape.channels);
    const int oh = conv_out(in_shape.height, l.kernel, l.stride);
    const int ow = conv_out(in_shape.width, l.kernel, l.stride);
    const int cin = in_shape.channels;
    double* dst = d_in.data().data();
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const double* row = d_cols.data() + (static_cast<std::size_t>(oy) * ow + ox) * patch;
        for (int ky = 0; ky < l.kernel; ++ky) {
          double* t = dst + (static_cast<std::size_t>(oy * l.stride + ky) * in_shape.width +
                             ox * l.stride) * cin;
          const double* s = row + ky * l.kernel * cin;
          for (int j = 0; j < l.kernel * cin; ++j) t[j] += s[j];
        }
      }
    }
    if (li > 0) {
      d_out = Eigen::Map<const RowMatrix>(
          d_in.data().data(), static_cast<Eigen::Index>(in_shape.height) * in_shape.width, cin);
    }
  }
  return d_in;
}

ConvNet::Gradients ConvNet::zero_gradients() const {
  Gradients g;
  g.reserve(params_.size());
  for (const auto& p : params_) g.emplace_back(p.size(), 0.0);
  return g;
}

std::vector<std::string> ConvNet::parameter_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    names.push_back("conv" + std::to_string(i) + ".weight");
    names.push_back("conv" + std::to_string(i) + ".bias");
  }
  return names;
}

std::size_t ConvNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

void ConvNet::round_to_float() {
  for (auto& p : params_) {
    for (auto& v : p) v = static_cast<double>(static_cast<float>(v));
  }
}

Adam::Adam(const std::vector<std::vector<double>>& params, double learning_rate, double beta1,
           double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
  for (const auto& p : params) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step(std::vector<std::vector<double>>& params, const ConvNet::Gradients& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const auto& g = grads[i];
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      p[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

}  // namespace mofa::nn
