#include "odcs/ops.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstring>
#include <initializer_list>
#include <vector>

namespace odcs {

namespace {

using MatrixRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using ConstMapRM = Eigen::Map<const MatrixRM>;

bool recording_wanted(std::initializer_list<const Tensor*> inputs) {
  if (!active_graph()) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

void require_rank(const Tensor& t, int rank, const char* op, const char* name) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + name + " must have rank " + std::to_string(rank) +
                         ", got shape " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
  }
}

/// Unpacks input patches into a [channels*kh*kw, out_h*out_w] row-major matrix.
void im2col(const float* src, int channels, int in_h, int in_w, const ConvSpec& s,
            int out_h, int out_w, float* col) {
  const std::int64_t cols = static_cast<std::int64_t>(out_h) * out_w;
  std::int64_t row = 0;
  for (int c = 0; c < channels; ++c) {
    const float* plane = src + static_cast<std::int64_t>(c) * in_h * in_w;
    for (int ki = 0; ki < s.kernel_h; ++ki) {
      for (int kj = 0; kj < s.kernel_w; ++kj, ++row) {
        float* dst = col + row * cols;
        std::int64_t idx = 0;
        for (int oh = 0; oh < out_h; ++oh) {
          const int iy = oh * s.stride_h - s.pad_h + ki;
          if (iy < 0 || iy >= in_h) {
            for (int ow = 0; ow < out_w; ++ow) dst[idx++] = 0.0f;
            continue;
          }
          const float* line = plane + static_cast<std::int64_t>(iy) * in_w;
          for (int ow = 0; ow < out_w; ++ow) {
            const int ix = ow * s.stride_w - s.pad_w + kj;
            dst[idx++] = (ix >= 0 && ix < in_w) ? line[ix] : 0.0f;
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatter-adds the column matrix back onto the image grid.
void col2im_add(const float* col, int channels, int in_h, int in_w, const ConvSpec& s,
                int out_h, int out_w, float* dst) {
  const std::int64_t cols = static_cast<std::int64_t>(out_h) * out_w;
  std::int64_t row = 0;
  for (int c = 0; c < channels; ++c) {
    float* plane = dst + static_cast<std::int64_t>(c) * in_h * in_w;
    for (int ki = 0; ki < s.kernel_h; ++ki) {
      for (int kj = 0; kj < s.kernel_w; ++kj, ++row) {
        const float* srcrow = col + row * cols;
        std::int64_t idx = 0;
        for (int oh = 0; oh < out_h; ++oh) {
          const int iy = oh * s.stride_h - s.pad_h + ki;
          if (iy < 0 || iy >= in_h) {
            idx += out_w;
            continue;
          }
          float* line = plane + static_cast<std::int64_t>(iy) * in_w;
          for (int ow = 0; ow < out_w; ++ow, ++idx) {
            const int ix = ow * s.stride_w - s.pad_w + kj;
            if (ix >= 0 && ix < in_w) line[ix] += srcrow[idx];
          }
        }
      }
    }
  }
}

}  // namespace

int conv_output_size(int input, int kernel, int stride, int pad) {
  const int numer = input + 2 * pad - kernel;
  if (numer < 0) return 0;
  return numer / stride + 1;
}

int conv_transpose_output_size(int input, int kernel, int stride, int pad) {
  return (input - 1) * stride - 2 * pad + kernel;
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, const ConvSpec& spec) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(weight, 4, "conv2d", "weight");
  require_rank(bias, 1, "conv2d", "bias");
  if (input.dim(1) != spec.in_channels) {
    throw DimensionError("conv2d: input channel axis (dim 1 = " + std::to_string(input.dim(1)) +
                         ") does not match spec in_channels = " + std::to_string(spec.in_channels));
  }
  if (weight.dim(0) != spec.out_channels || weight.dim(1) != spec.in_channels ||
      weight.dim(2) != spec.kernel_h || weight.dim(3) != spec.kernel_w) {
    throw DimensionError("conv2d: weight shape " + shape_str(weight.shape()) +
                         " does not match spec [out=" + std::to_string(spec.out_channels) +
                         ", in=" + std::to_string(spec.in_channels) + ", kh=" +
                         std::to_string(spec.kernel_h) + ", kw=" + std::to_string(spec.kernel_w) + "]");
  }
  if (bias.dim(0) != spec.out_channels) {
    throw DimensionError("conv2d: bias axis 0 = " + std::to_string(bias.dim(0)) +
                         " does not match out_channels = " + std::to_string(spec.out_channels));
  }

  const int n = input.dim(0), in_h = input.dim(2), in_w = input.dim(3);
  const int out_h = conv_output_size(in_h, spec.kernel_h, spec.stride_h, spec.pad_h);
  const int out_w = conv_output_size(in_w, spec.kernel_w, spec.stride_w, spec.pad_w);
  if (out_h <= 0 || out_w <= 0) {
    throw DimensionError("conv2d: non-positive output size " + std::to_string(out_h) + "x" +
                         std::to_string(out_w) + " for input " + shape_str(input.shape()));
  }

  const int ckk = spec.in_channels * spec.kernel_h * spec.kernel_w;
  const std::int64_t ohw = static_cast<std::int64_t>(out_h) * out_w;
  const std::int64_t in_plane = static_cast<std::int64_t>(spec.in_channels) * in_h * in_w;
  const std::int64_t out_plane = static_cast<std::int64_t>(spec.out_channels) * ohw;

  Tensor out = Tensor::zeros({n, spec.out_channels, out_h, out_w});
  {
    std::vector<float> col(static_cast<std::size_t>(ckk) * ohw);
    ConstMapRM wmat(weight.values().data(), spec.out_channels, ckk);
    for (int b = 0; b < n; ++b) {
      im2col(input.values().data() + b * in_plane, spec.in_channels, in_h, in_w, spec, out_h, out_w,
             col.data());
      ConstMapRM colmat(col.data(), ckk, ohw);
      MapRM outmat(out.values().data() + b * out_plane, spec.out_channels, ohw);
      outmat.noalias() = wmat * colmat;
      for (int o = 0; o < spec.out_channels; ++o) outmat.row(o).array() += bias.values()[o];
    }
  }
  check_finite(out, "conv2d");

  if (recording_wanted({&input, &weight, &bias})) {
    out.set_requires_grad(true);
    Tensor in_t = input, w_t = weight, b_t = bias, out_t = out;
    ConvSpec s = spec;
    active_graph()->record("conv2d", [=]() mutable {
      if (!out_t.has_grad()) return;
      std::span<const float> gy = out_t.grad();
      const int nn = in_t.dim(0), ih = in_t.dim(2), iw = in_t.dim(3);
      const int oh = out_t.dim(2), ow = out_t.dim(3);
      const int kk = s.in_channels * s.kernel_h * s.kernel_w;
      const std::int64_t sp = static_cast<std::int64_t>(oh) * ow;
      const std::int64_t ip = static_cast<std::int64_t>(s.in_channels) * ih * iw;
      const std::int64_t op = static_cast<std::int64_t>(s.out_channels) * sp;
      const bool need_w = w_t.requires_grad();
      const bool need_x = in_t.requires_grad();
      const bool need_b = b_t.requires_grad();
      std::vector<float> col(need_w ? static_cast<std::size_t>(kk) * sp : 0);
      std::vector<float> colg(need_x ? static_cast<std::size_t>(kk) * sp : 0);
      ConstMapRM wmat(w_t.values().data(), s.out_channels, kk);
      for (int b = 0; b < nn; ++b) {
        ConstMapRM gmat(gy.data() + b * op, s.out_channels, sp);
        if (need_b) {
          std::span<float> gb = b_t.grad();
          for (int o = 0; o < s.out_channels; ++o) gb[o] += gmat.row(o).sum();
        }
        if (need_w) {
          im2col(in_t.values().data() + b * ip, s.in_channels, ih, iw, s, oh, ow, col.data());
          ConstMapRM colmat(col.data(), kk, sp);
          MapRM gw(w_t.grad().data(), s.out_channels, kk);
          gw.noalias() += gmat * colmat.transpose();
        }
        if (need_x) {
          MapRM cg(colg.data(), kk, sp);
          cg.noalias() = wmat.transpose() * gmat;
          col2im_add(colg.data(), s.in_channels, ih, iw, s, oh, ow, in_t.grad().data() + b * ip);
        }
      }
    });
  }
  return out;
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
                        const ConvSpec& spec, std::optional<std::pair<int, int>> output_hw) {
  require_rank(input, 4, "conv_transpose2d", "input");
  require_rank(weight, 4, "conv_transpose2d", "weight");
  require_rank(bias, 1, "conv_transpose2d", "bias");
  if (input.dim(1) != spec.in_channels) {
    throw DimensionError("conv_transpose2d: input channel axis (dim 1 = " +
                         std::to_string(input.dim(1)) + ") does not match spec in_channels = " +
                         std::to_string(spec.in_channels));
  }
  if (weight.dim(0) != spec.in_channels || weight.dim(1) != spec.out_channels ||
      weight.dim(2) != spec.kernel_h || weight.dim(3) != spec.kernel_w) {
    throw DimensionError("conv_transpose2d: weight shape " + shape_str(weight.shape()) +
                         " does not match spec [in=" + std::to_string(spec.in_channels) +
                         ", out=" + std::to_string(spec.out_channels) + ", kh=" +
                         std::to_string(spec.kernel_h) + ", kw=" + std::to_string(spec.kernel_w) + "]");
  }
  if (bias.dim(0) != spec.out_channels) {
    throw DimensionError("conv_transpose2d: bias axis 0 = " + std::to_string(bias.dim(0)) +
                         " does not match out_channels = " + std::to_string(spec.out_channels));
  }

  const int n = input.dim(0), in_h = input.dim(2), in_w = input.dim(3);
  int out_h = conv_transpose_output_size(in_h, spec.kernel_h, spec.stride_h, spec.pad_h);
  int out_w = conv_transpose_output_size(in_w, spec.kernel_w, spec.stride_w, spec.pad_w);
  if (output_hw) {
    out_h = output_hw->first;
    out_w = output_hw->second;
  }
  if (out_h <= 0 || out_w <= 0 ||
      conv_output_size(out_h, spec.kernel_h, spec.stride_h, spec.pad_h) != in_h ||
      conv_output_size(out_w, spec.kernel_w, spec.stride_w, spec.pad_w) != in_w) {
    throw DimensionError("conv_transpose2d: output size " + std::to_string(out_h) + "x" +
                         std::to_string(out_w) + " is inconsistent with input " +
                         shape_str(input.shape()));
  }

  const int ckk = spec.out_channels * spec.kernel_h * spec.kernel_w;
  const std::int64_t ihw = static_cast<std::int64_t>(in_h) * in_w;
  const std::int64_t in_plane = static_cast<std::int64_t>(spec.in_channels) * ihw;
  const std::int64_t out_plane = static_cast<std::int64_t>(spec.out_channels) * out_h * out_w;

  Tensor out = Tensor::zeros({n, spec.out_channels, out_h, out_w});
  {
    std::vector<float> col(static_cast<std::size_t>(ckk) * ihw);
    ConstMapRM wmat(weight.values().data(), spec.in_channels, ckk);
    for (int b = 0; b < n; ++b) {
      ConstMapRM inmat(input.values().data() + b * in_plane, spec.in_channels, ihw);
      MapRM colmat(col.data(), ckk, ihw);
      colmat.noalias() = wmat.transpose() * inmat;
      float* dst = out.values().data() + b * out_plane;
      col2im_add(col.data(), spec.out_channels, out_h, out_w, spec, in_h, in_w, dst);
      for (int c = 0; c < spec.out_channels; ++c) {
        float* plane = dst + static_cast<std::int64_t>(c) * out_h * out_w;
        const float bv = bias.values()[c];
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(out_h) * out_w; ++i) plane[i] += bv;
      }
    }
  }
  check_finite(out, "conv_transpose2d");

  if (recording_wanted({&input, &weight, &bias})) {
    out.set_requires_grad(true);
    Tensor in_t = input, w_t = weight, b_t = bias, out_t = out;
    ConvSpec s = spec;
    active_graph()->record("conv_transpose2d", [=]() mutable {
      if (!out_t.has_grad()) return;
      std::span<const float> gy = out_t.grad();
      const int nn = in_t.dim(0), ih = in_t.dim(2), iw = in_t.dim(3);
      const int oh = out_t.dim(2), ow = out_t.dim(3);
      const int kk = s.out_channels * s.kernel_h * s.kernel_w;
      const std::int64_t ihw2 = static_cast<std::int64_t>(ih) * iw;
      const std::int64_t ip = static_cast<std::int64_t>(s.in_channels) * ihw2;
      const std::int64_t op = static_cast<std::int64_t>(s.out_channels) * oh * ow;
      const bool need_w = w_t.requires_grad();
      const bool need_x = in_t.requires_grad();
      const bool need_b = b_t.requires_grad();
      std::vector<float> col(static_cast<std::size_t>(kk) * ihw2);
      ConstMapRM wmat(w_t.values().data(), s.in_channels, kk);
      for (int b = 0; b < nn; ++b) {
        const float* gplane = gy.data() + b * op;
        if (need_b) {
          std::span<float> gb = b_t.grad();
          for (int c = 0; c < s.out_channels; ++c) {
            double acc = 0.0;
            const float* plane = gplane + static_cast<std::int64_t>(c) * oh * ow;
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(oh) * ow; ++i) acc += plane[i];
            gb[c] += static_cast<float>(acc);
          }
        }
        if (need_w || need_x) {
          im2col(gplane, s.out_channels, oh, ow, s, ih, iw, col.data());
          ConstMapRM colmat(col.data(), kk, ihw2);
          if (need_x) {
            MapRM gx(in_t.grad().data() + b * ip, s.in_channels, ihw2);
            gx.noalias() += wmat * colmat;
          }
          if (need_w) {
            ConstMapRM inmat(in_t.values().data() + b * ip, s.in_channels, ihw2);
            MapRM gw(w_t.grad().data(), s.in_channels, kk);
            gw.noalias() += inmat * colmat.transpose();
          }
        }
      }
    });
  }
  return out;
}

BatchNormState BatchNormState::create(int channels, float eps, float momentum) {
  BatchNormState s;
  s.running_mean = Tensor::zeros({channels});
  s.running_var = Tensor::full({channels}, 1.0f);
  s.eps = eps;
  s.momentum = momentum;
  return s;
}

Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   BatchNormState& state, bool training) {
  require_rank(input, 4, "batchnorm2d", "input");
  require_rank(gamma, 1, "batchnorm2d", "gamma");
  require_rank(beta, 1, "batchnorm2d", "beta");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (gamma.dim(0) != c || beta.dim(0) != c || state.running_mean.dim(0) != c) {
    throw DimensionError("batchnorm2d: channel axis (dim 1 = " + std::to_string(c) +
                         ") does not match parameter size " + std::to_string(gamma.dim(0)));
  }

  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  const std::int64_t m = static_cast<std::int64_t>(n) * hw;
  Tensor out = Tensor::zeros(input.shape());

  std::vector<double> mean(c), inv_std(c);
  std::vector<float> xhat(static_cast<std::size_t>(input.numel()));

  if (training) {
    if (m < 2) {
      throw ContractError("batchnorm2d: train mode needs at least 2 values per channel, got " +
                          std::to_string(m) + " (degenerate statistics)");
    }
    for (int ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (int b = 0; b < n; ++b) {
        const float* plane = input.values().data() + (static_cast<std::int64_t>(b) * c + ch) * hw;
        for (std::int64_t i = 0; i < hw; ++i) acc += plane[i];
      }
      const double mu = acc / static_cast<double>(m);
      double var_acc = 0.0;
      for (int b = 0; b < n; ++b) {
        const float* plane = input.values().data() + (static_cast<std::int64_t>(b) * c + ch) * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
          const double d = plane[i] - mu;
          var_acc += d * d;
        }
      }
      const double var = var_acc / static_cast<double>(m);
      mean[ch] = mu;
      inv_std[ch] = 1.0 / std::sqrt(var + static_cast<double>(state.eps));

      const double mom = state.momentum;
      float& rm = state.running_mean.values()[ch];
      float& rv = state.running_var.values()[ch];
      rm = static_cast<float>((1.0 - mom) * rm + mom * mu);
      const double unbiased = var * static_cast<double>(m) / static_cast<double>(m - 1);
      rv = static_cast<float>((1.0 - mom) * rv + mom * unbiased);
    }
  } else {
    for (int ch = 0; ch < c; ++ch) {
      mean[ch] = state.running_mean.values()[ch];
      inv_std[ch] = 1.0 / std::sqrt(static_cast<double>(state.running_var.values()[ch]) +
                                    static_cast<double>(state.eps));
    }
  }

  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const std::int64_t off = (static_cast<std::int64_t>(b) * c + ch) * hw;
      const float* src = input.values().data() + off;
      float* xh = xhat.data() + off;
      float* dst = out.values().data() + off;
      const double mu = mean[ch], inv = inv_std[ch];
      const float g = gamma.values()[ch], bt = beta.values()[ch];
      for (std::int64_t i = 0; i < hw; ++i) {
        const float xn = static_cast<float>((src[i] - mu) * inv);
        xh[i] = xn;
        dst[i] = g * xn + bt;
      }
    }
  }
  check_finite(out, "batchnorm2d");

  if (recording_wanted({&input, &gamma, &beta})) {
    out.set_requires_grad(true);
    Tensor in_t = input, g_t = gamma, b_t = beta, out_t = out;
    auto xhat_cap = std::make_shared<std::vector<float>>(std::move(xhat));
    auto inv_cap = std::make_shared<std::vector<double>>(std::move(inv_std));
    const bool train_mode = training;
    active_graph()->record("batchnorm2d", [=, nn = n, cc = c, hw2 = hw]() mutable {
      if (!out_t.has_grad()) return;
      std::span<const float> gy = out_t.grad();
      const std::int64_t mm = static_cast<std::int64_t>(nn) * hw2;
      const bool need_x = in_t.requires_grad();
      const bool need_g = g_t.requires_grad();
      const bool need_b = b_t.requires_grad();
      for (int ch = 0; ch < cc; ++ch) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int b = 0; b < nn; ++b) {
          const std::int64_t off = (static_cast<std::int64_t>(b) * cc + ch) * hw2;
          const float* gyp = gy.data() + off;
          const float* xh = xhat_cap->data() + off;
          for (std::int64_t i = 0; i < hw2; ++i) {
            sum_dy += gyp[i];
            sum_dy_xhat += static_cast<double>(gyp[i]) * xh[i];
          }
        }
        if (need_g) g_t.grad()[ch] += static_cast<float>(sum_dy_xhat);
        if (need_b) b_t.grad()[ch] += static_cast<float>(sum_dy);
        if (need_x) {
          const double gin = static_cast<double>(g_t.values()[ch]) * (*inv_cap)[ch];
          const double mean_dy = sum_dy / static_cast<double>(mm);
          const double mean_dy_xhat = sum_dy_xhat / static_cast<double>(mm);
          std::span<float> gx = in_t.grad();
          for (int b = 0; b < nn; ++b) {
            const std::int64_t off = (static_cast<std::int64_t>(b) * cc + ch) * hw2;
            const float* gyp = gy.data() + off;
            const float* xh = xhat_cap->data() + off;
            float* gxp = gx.data() + off;
            if (train_mode) {
              for (std::int64_t i = 0; i < hw2; ++i) {
                gxp[i] += static_cast<float>(gin * (gyp[i] - mean_dy - xh[i] * mean_dy_xhat));
              }
            } else {
              for (std::int64_t i = 0; i < hw2; ++i) {
                gxp[i] += static_cast<float>(gin * gyp[i]);
              }
            }
          }
        }
      }
    });
  }
  return out;
}

namespace {

Tensor elementwise(const Tensor& input, const char* op, float (*fwd)(float, float),
                   float (*bwd)(float /*x*/, float /*y*/, float /*slope*/), float slope) {
  Tensor out = Tensor::zeros(input.shape());
  {
    std::span<const float> src = input.values();
    std::span<float> dst = out.values();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = fwd(src[i], slope);
  }
  check_finite(out, op);
  if (recording_wanted({&input})) {
    out.set_requires_grad(true);
    Tensor in_t = input, out_t = out;
    active_graph()->record(op, [=]() mutable {
      if (!out_t.has_grad()) return;
      std::span<const float> gy = out_t.grad();
      std::span<const float> x = in_t.values();
      std::span<const float> y = out_t.values();
      std::span<float> gx = in_t.grad();
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * bwd(x[i], y[i], slope);
    });
  }
  return out;
}

}  // namespace

Tensor leaky_relu(const Tensor& input, float slope) {
  return elementwise(
      input, "leaky_relu", [](float x, float s) { return x > 0.0f ? x : s * x; },
      [](float x, float, float s) { return x > 0.0f ? 1.0f : s; }, slope);
}

Tensor relu(const Tensor& input) {
  // Subgradient 0 at the kink.
  return elementwise(
      input, "relu", [](float x, float) { return x > 0.0f ? x : 0.0f; },
      [](float x, float, float) { return x > 0.0f ? 1.0f : 0.0f; }, 0.0f);
}

Tensor tanh(const Tensor& input) {
  return elementwise(
      input, "tanh", [](float x, float) { return std::tanh(x); },
      [](float, float y, float) { return 1.0f - y * y; }, 0.0f);
}

Tensor activation(const Tensor& input, Activation kind, float slope) {
  switch (kind) {
    case Activation::leaky_relu:
      return leaky_relu(input, slope);
    case Activation::relu:
      return relu(input);
    case Activation::tanh:
      return tanh(input);
  }
  throw ContractError("activation: unknown kind");
}

Tensor maxpool2d(const Tensor& input) {
  require_rank(input, 4, "maxpool2d", "input");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int oh = h / 2, ow = w / 2;
  if (oh <= 0 || ow <= 0) {
    throw DimensionError("maxpool2d: input spatial " + std::to_string(h) + "x" + std::to_string(w) +
                         " too small for a 2x2 window");
  }
  Tensor out = Tensor::zeros({n, c, oh, ow});
  auto argmax = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(out.numel()));
  {
    std::span<const float> src = input.values();
    std::span<float> dst = out.values();
    std::int64_t oidx = 0;
    for (int b = 0; b < n; ++b) {
      for (int ch = 0; ch < c; ++ch) {
        const std::int64_t base = (static_cast<std::int64_t>(b) * c + ch) * h * w;
        for (int i = 0; i < oh; ++i) {
          for (int j = 0; j < ow; ++j, ++oidx) {
            // First occurrence wins on ties (row-major scan of the window).
            std::int64_t best = base + static_cast<std::int64_t>(2 * i) * w + 2 * j;
            float bv = src[static_cast<std::size_t>(best)];
            const std::int64_t cand[3] = {best + 1, best + w, best + w + 1};
            for (std::int64_t k : cand) {
              const float v = src[static_cast<std::size_t>(k)];
              if (v > bv) {
                bv = v;
                best = k;
              }
            }
            dst[static_cast<std::size_t>(oidx)] = bv;
            (*argmax)[static_cast<std::size_t>(oidx)] = best;
          }
        }
      }
    }
  }
  check_finite(out, "maxpool2d");
  if (recording_wanted({&input})) {
    out.set_requires_grad(true);
    Tensor in_t = input, out_t = out;
    active_graph()->record("maxpool2d", [=]() mutable {
      if (!out_t.has_grad()) return;
      std::span<const float> gy = out_t.grad();
      std::span<float> gx = in_t.grad();
      for (std::size_t i = 0; i < gy.size(); ++i) {
        gx[static_cast<std::size_t>((*argmax)[i])] += gy[i];
      }
    });
  }
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank(a, 4, "concat_channels", "a");
  require_rank(b, 4, "concat_channels", "b");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw DimensionError("concat_channels: batch/spatial axes differ, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Tensor out = Tensor::zeros({n, ca + cb, h, w});
  for (int bch = 0; bch < n; ++bch) {
    float* dst = out.values().data() + static_cast<std::int64_t>(bch) * (ca + cb) * hw;
    std::memcpy(dst, a.values().data() + static_cast<std::int64_t>(bch) * ca * hw,
                static_cast<std::size_t>(ca * hw) * sizeof(float));
    std::memcpy(dst + ca * hw, b.values().data() + static_cast<std::int64_t>(bch) * cb * hw,
                static_cast<std::size_t>(cb * hw) * sizeof(float));
  }
  check_finite(out, "concat_channels");
  if (recording_wanted({&a, &b})) {
    out.set_requires_grad(true);
    Tensor a_t = a, b_t = b, out_t = out;
    active_graph()->record("concat_channels", [=]() mutable {
      if (!out_t.has_grad()) return;
      std::span<const float> gy = out_t.grad();
      const std::int64_t hw2 = static_cast<std::int64_t>(a_t.dim(2)) * a_t.dim(3);
      const int nn = a_t.dim(0), cca = a_t.dim(1), ccb = b_t.dim(1);
      for (int bch = 0; bch < nn; ++bch) {
        const float* g = gy.data() + static_cast<std::int64_t>(bch) * (cca + ccb) * hw2;
        if (a_t.requires_grad()) {
          float* ga = a_t.grad().data() + static_cast<std::int64_t>(bch) * cca * hw2;
          for (std::int64_t i = 0; i < cca * hw2; ++i) ga[i] += g[i];
        }
        if (b_t.requires_grad()) {
          float* gb = b_t.grad().data() + static_cast<std::int64_t>(bch) * ccb * hw2;
          for (std::int64_t i = 0; i < ccb * hw2; ++i) gb[i] += g[cca * hw2 + i];
        }
      }
    });
  }
  return out;
}

Tensor slice_channels(const Tensor& input, int begin, int count) {
  require_rank(input, 4, "slice_channels", "input");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (begin < 0 || count <= 0 || begin + count > c) {
    throw DimensionError("slice_channels: range [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of bounds for " +
                         std::to_string(c) + " channels");
  }
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Tensor out = Tensor::zeros({n, count, h, w});
  for (int b = 0; b < n; ++b) {
    std::memcpy(out.values().data() + static_cast<std::int64_t>(b) * count * hw,
                input.values().data() + (static_cast<std::int64_t>(b) * c + begin) * hw,
                static_cast<std::size_t>(count * hw) * sizeof(float));
  }
  check_finite(out, "slice_channels");
  if (recording_wanted({&input})) {
    out.set_requires_grad(true);
    Tensor in_t = input, out_t = out;
    active_graph()->record("slice_channels", [=, b0 = begin, cnt = count]() mutable {
      if (!out_t.has_grad()) return;
      std::span<const float> gy = out_t.grad();
      const int nn = in_t.dim(0), cc = in_t.dim(1);
      const std::int64_t hw2 = static_cast<std::int64_t>(in_t.dim(2)) * in_t.dim(3);
      std::span<float> gx = in_t.grad();
      for (int b = 0; b < nn; ++b) {
        const float* g = gy.data() + static_cast<std::int64_t>(b) * cnt * hw2;
        float* dst = gx.data() + (static_cast<std::int64_t>(b) * cc + b0) * hw2;
        for (std::int64_t i = 0; i < cnt * hw2; ++i) dst[i] += g[i];
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  {
    std::span<const float> av = a.values(), bv = b.values();
    std::span<float> dst = out.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = av[i] + bv[i];
  }
  check_finite(out, "add");
  if (recording_wanted({&a, &b})) {
    out.set_requires_grad(true);
    Tensor a_t = a, b_t = b, out_t = out;
    active_graph()->record("add", [=]() mutable {
      if (!out_t.has_grad()) return;
      std::span<const float> gy = out_t.grad();
      if (a_t.requires_grad()) a_t.accumulate_grad(gy);
      if (b_t.requires_grad()) b_t.accumulate_grad(gy);
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  {
    std::span<const float> av = a.values(), bv = b.values();
    std::span<float> dst = out.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = av[i] * bv[i];
  }
  check_finite(out, "mul");
  if (recording_wanted({&a, &b})) {
    out.set_requires_grad(true);
    Tensor a_t = a, b_t = b, out_t = out;
    active_graph()->record("mul", [=]() mutable {
      if (!out_t.has_grad()) return;
      std::span<const float> gy = out_t.grad();
      if (a_t.requires_grad()) {
        std::span<float> ga = a_t.grad();
        std::span<const float> bv = b_t.values();
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bv[i];
      }
      if (b_t.requires_grad()) {
        std::span<float> gb = b_t.grad();
        std::span<const float> av = a_t.values();
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * av[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& input, float factor) {
  Tensor out = Tensor::zeros(input.shape());
  {
    std::span<const float> src = input.values();
    std::span<float> dst = out.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = factor * src[i];
  }
  check_finite(out, "scale");
  if (recording_wanted({&input})) {
    out.set_requires_grad(true);
    Tensor in_t = input, out_t = out;
    active_graph()->record("scale", [=]() mutable {
      if (!out_t.has_grad()) return;
      std::span<const float> gy = out_t.grad();
      std::span<float> gx = in_t.grad();
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += factor * gy[i];
    });
  }
  return out;
}

Tensor add_scalar(const Tensor& input, float value) {
  Tensor out = Tensor::zeros(input.shape());
  {
    std::span<const float> src = input.values();
    std::span<float> dst = out.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i] + value;
  }
  check_finite(out, "add_scalar");
  if (recording_wanted({&input})) {
    out.set_requires_grad(true);
    Tensor in_t = input, out_t = out;
    active_graph()->record("add_scalar", [=]() mutable {
      if (!out_t.has_grad()) return;
      if (in_t.requires_grad()) in_t.accumulate_grad(out_t.grad());
    });
  }
  return out;
}

Tensor sum(const Tensor& input) {
  double acc = 0.0;
  for (float v : input.values()) acc += v;
  Tensor out = Tensor::scalar(static_cast<float>(acc));
  check_finite(out, "sum");
  if (recording_wanted({&input})) {
    out.set_requires_grad(true);
    Tensor in_t = input, out_t = out;
    active_graph()->record("sum", [=]() mutable {
      if (!out_t.has_grad()) return;
      const float g = out_t.grad()[0];
      std::span<float> gx = in_t.grad();
      for (float& v : gx) v += g;
    });
  }
  return out;
}

}  // namespace odcs
