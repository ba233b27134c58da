#include "resmatch/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "resmatch/errors.hpp"

namespace resmatch::nn {
namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                      shape_to_string(b.shape()));
  }
}

struct ConvGeometry {
  std::size_t n, c, h, w, co, k, pad, ho, wo;
  bool batched;
  std::size_t plane_out() const { return ho * wo; }
  std::size_t rows() const { return c * k * k; }
};

ConvGeometry conv_geometry(const Tensor& in, const Tensor& weights, const Tensor& bias, int padding) {
  if (in.rank() != 3 && in.rank() != 4) {
    throw ConfigError("conv2d expects [C,H,W] or [N,C,H,W] input, got " + shape_to_string(in.shape()));
  }
  if (weights.rank() != 4 || weights.dim(2) != weights.dim(3)) {
    throw ConfigError("conv2d expects square [Co,C,k,k] weights, got " + shape_to_string(weights.shape()));
  }
  if (padding < 0) throw ConfigError("conv2d padding must be non-negative");
  ConvGeometry g{};
  g.batched = in.rank() == 4;
  const std::size_t off = g.batched ? 1 : 0;
  g.n = g.batched ? in.dim(0) : 1;
  g.c = in.dim(off);
  g.h = in.dim(off + 1);
  g.w = in.dim(off + 2);
  g.co = weights.dim(0);
  g.k = weights.dim(2);
  g.pad = static_cast<std::size_t>(padding);
  if (weights.dim(1) != g.c) {
    throw ConfigError("conv2d weights expect " + std::to_string(weights.dim(1)) + " input channels, got " +
                      std::to_string(g.c));
  }
  if (bias.size() != g.co) throw ConfigError("conv2d bias length does not match output channels");
  if (g.h + 2 * g.pad < g.k || g.w + 2 * g.pad < g.k) {
    throw ConfigError("conv2d kernel " + std::to_string(g.k) + " does not fit padded input " +
                      shape_to_string(in.shape()));
  }
  g.ho = g.h + 2 * g.pad - g.k + 1;
  g.wo = g.w + 2 * g.pad - g.k + 1;
  return g;
}

// col is [c*k*k, n*ho*wo], column index (n, oy, ox).
void im2col(const double* in, const ConvGeometry& g, double* col) {
  const std::size_t p = g.plane_out();
  const std::size_t np = g.n * p;
  const long pad = static_cast<long>(g.pad);
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = col + ((c * g.k + ky) * g.k + kx) * np;
        for (std::size_t n = 0; n < g.n; ++n) {
          const double* plane = in + (n * g.c + c) * g.h * g.w;
          double* dst = row + n * p;
          for (std::size_t oy = 0; oy < g.ho; ++oy) {
            const long iy = static_cast<long>(oy + ky) - pad;
            double* d = dst + oy * g.wo;
            if (iy < 0 || iy >= static_cast<long>(g.h)) {
              std::fill(d, d + g.wo, 0.0);
              continue;
            }
            const double* src = plane + static_cast<std::size_t>(iy) * g.w;
            for (std::size_t ox = 0; ox < g.wo; ++ox) {
              const long ix = static_cast<long>(ox + kx) - pad;
              d[ox] = (ix >= 0 && ix < static_cast<long>(g.w)) ? src[ix] : 0.0;
            }
          }
        }
      }
    }
  }
}

void col2im_accumulate(const double* col, const ConvGeometry& g, double* out) {
  const std::size_t p = g.plane_out();
  const std::size_t np = g.n * p;
  const long pad = static_cast<long>(g.pad);
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = col + ((c * g.k + ky) * g.k + kx) * np;
        for (std::size_t n = 0; n < g.n; ++n) {
          double* plane = out + (n * g.c + c) * g.h * g.w;
          const double* src = row + n * p;
          for (std::size_t oy = 0; oy < g.ho; ++oy) {
            const long iy = static_cast<long>(oy + ky) - pad;
            if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
            double* dst = plane + static_cast<std::size_t>(iy) * g.w;
            const double* s = src + oy * g.wo;
            for (std::size_t ox = 0; ox < g.wo; ++ox) {
              const long ix = static_cast<long>(ox + kx) - pad;
              if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += s[ox];
            }
          }
        }
      }
    }
  }
}

template <typename Forward, typename Derivative>
TensorPtr elementwise(Tape* tape, const TensorPtr& input, Forward f, Derivative df) {
  auto out = make_tensor(input->shape());
  const auto x = input->data();
  auto y = out->data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  if (tape) {
    tape->record([input, out, df] {
      if (!out->has_grad()) return;
      const auto gy = out->grad();
      const auto xs = input->data();
      const auto ys = out->data();
      auto gx = input->ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * df(xs[i], ys[i]);
    });
  }
  return out;
}

std::size_t batch_rows(const Tensor& t) { return t.rank() == 1 ? 1 : t.dim(0); }
std::size_t row_width(const Tensor& t) { return t.rank() == 0 ? 0 : t.shape().back(); }

}  // namespace

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

TensorPtr conv2d(Tape* tape, const TensorPtr& input, const Param& weights, const Param& bias, int padding) {
  const ConvGeometry g = conv_geometry(*input, *weights.value, *bias.value, padding);
  const std::size_t p = g.plane_out();
  const std::size_t np = g.n * p;
  const std::size_t rows = g.rows();

  Buffer col(rows * np);
  im2col(input->data().data(), g, col.data());

  Shape out_shape = g.batched ? Shape{g.n, g.co, g.ho, g.wo} : Shape{g.co, g.ho, g.wo};
  auto out = make_tensor(out_shape);
  CMapRM w(weights.value->data().data(), static_cast<long>(g.co), static_cast<long>(rows));
  CMapRM cm(col.data(), static_cast<long>(rows), static_cast<long>(np));
  const auto b = bias.value->data();
  if (g.n == 1) {
    MapRM om(out->data().data(), static_cast<long>(g.co), static_cast<long>(p));
    om.noalias() = w * cm;
    for (std::size_t o = 0; o < g.co; ++o) om.row(static_cast<long>(o)).array() += b[o];
  } else {
    MatRM om = w * cm;
    auto dst = out->data();
    for (std::size_t n = 0; n < g.n; ++n) {
      for (std::size_t o = 0; o < g.co; ++o) {
        const double* src = om.data() + o * np + n * p;
        double* d = dst.data() + (n * g.co + o) * p;
        for (std::size_t i = 0; i < p; ++i) d[i] = src[i] + b[o];
      }
    }
  }

  if (tape) {
    tape->record([input, out, weights, bias, g] {
      if (!out->has_grad()) return;
      const std::size_t p = g.plane_out();
      const std::size_t np = g.n * p;
      const std::size_t rows = g.rows();
      MatRM gm(static_cast<long>(g.co), static_cast<long>(np));
      const auto gout = out->grad();
      for (std::size_t n = 0; n < g.n; ++n) {
        for (std::size_t o = 0; o < g.co; ++o) {
          std::copy_n(gout.data() + (n * g.co + o) * p, p, gm.data() + o * np + n * p);
        }
      }
      Buffer col(rows * np);
      im2col(input->data().data(), g, col.data());
      CMapRM cm(col.data(), static_cast<long>(rows), static_cast<long>(np));

      MapRM gw(weights.value->ensure_grad().data(), static_cast<long>(g.co), static_cast<long>(rows));
      gw.noalias() += gm * cm.transpose();
      auto gb = bias.value->ensure_grad();
      for (std::size_t o = 0; o < g.co; ++o) gb[o] += gm.row(static_cast<long>(o)).sum();

      CMapRM w(weights.value->data().data(), static_cast<long>(g.co), static_cast<long>(rows));
      MatRM gcol = w.transpose() * gm;
      col2im_accumulate(gcol.data(), g, input->ensure_grad().data());
    });
  }
  return out;
}

TensorPtr fully_connected(Tape* tape, const TensorPtr& input, const Param& weights, const Param& bias) {
  const Tensor& w = *weights.value;
  if (input->rank() != 1 && input->rank() != 2) {
    throw ConfigError("fully_connected expects [n] or [N,n] input, got " + shape_to_string(input->shape()));
  }
  if (w.rank() != 2 || w.dim(1) != row_width(*input)) {
    throw ConfigError("fully_connected weights " + shape_to_string(w.shape()) + " do not match input " +
                      shape_to_string(input->shape()));
  }
  if (bias.value->size() != w.dim(0)) throw ConfigError("fully_connected bias length mismatch");
  const std::size_t n_rows = batch_rows(*input);
  const std::size_t n_in = w.dim(1);
  const std::size_t n_out = w.dim(0);

  auto out = make_tensor(input->rank() == 1 ? Shape{n_out} : Shape{n_rows, n_out});
  CMapRM x(input->data().data(), static_cast<long>(n_rows), static_cast<long>(n_in));
  CMapRM wm(w.data().data(), static_cast<long>(n_out), static_cast<long>(n_in));
  MapRM y(out->data().data(), static_cast<long>(n_rows), static_cast<long>(n_out));
  y.noalias() = x * wm.transpose();
  Eigen::Map<const Eigen::RowVectorXd> b(bias.value->data().data(), static_cast<long>(n_out));
  y.rowwise() += b;

  if (tape) {
    tape->record([input, out, weights, bias, n_rows, n_in, n_out] {
      if (!out->has_grad()) return;
      CMapRM gy(out->grad().data(), static_cast<long>(n_rows), static_cast<long>(n_out));
      CMapRM x(input->data().data(), static_cast<long>(n_rows), static_cast<long>(n_in));
      MapRM gw(weights.value->ensure_grad().data(), static_cast<long>(n_out), static_cast<long>(n_in));
      gw.noalias() += gy.transpose() * x;
      Eigen::Map<Eigen::RowVectorXd> gb(bias.value->ensure_grad().data(), static_cast<long>(n_out));
      gb += gy.colwise().sum();
      CMapRM wm(weights.value->data().data(), static_cast<long>(n_out), static_cast<long>(n_in));
      MapRM gx(input->ensure_grad().data(), static_cast<long>(n_rows), static_cast<long>(n_in));
      gx.noalias() += gy * wm;
    });
  }
  return out;
}

TensorPtr relu(Tape* tape, const TensorPtr& input) {
  // Subgradient at 0 is 0.
  return elementwise(
      tape, input, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

TensorPtr tanh(Tape* tape, const TensorPtr& input) {
  return elementwise(
      tape, input, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

TensorPtr sigmoid(Tape* tape, const TensorPtr& input) {
  return elementwise(
      tape, input, [](double x) { return sigmoid_scalar(x); }, [](double, double y) { return y * (1.0 - y); });
}

TensorPtr log_softmax(Tape* tape, const TensorPtr& input) {
  if (input->rank() == 0 || input->size() == 0) throw ConfigError("log_softmax on empty tensor");
  const std::size_t width = row_width(*input);
  const std::size_t rows = input->size() / width;
  auto out = make_tensor(input->shape());
  const auto x = input->data();
  auto y = out->data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * width;
    double* yr = y.data() + r * width;
    const double m = *std::max_element(xr, xr + width);
    double s = 0.0;
    for (std::size_t i = 0; i < width; ++i) s += std::exp(xr[i] - m);
    const double lse = m + std::log(s);
    for (std::size_t i = 0; i < width; ++i) yr[i] = xr[i] - lse;
  }
  if (tape) {
    tape->record([input, out, rows, width] {
      if (!out->has_grad()) return;
      const auto gy = out->grad();
      const auto y = out->data();
      auto gx = input->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        double gsum = 0.0;
        for (std::size_t i = 0; i < width; ++i) gsum += gy[r * width + i];
        for (std::size_t i = 0; i < width; ++i) {
          gx[r * width + i] += gy[r * width + i] - std::exp(y[r * width + i]) * gsum;
        }
      }
    });
  }
  return out;
}

TensorPtr highway_add(Tape* tape, const TensorPtr& f_out, const TensorPtr& skip, const Param& lambda) {
  require_same_shape(*f_out, *skip, "highway_add");
  if (lambda.value->size() != 1) throw ConfigError("highway_add lambda must be a scalar parameter");
  const double lam = (*lambda.value)[0];
  auto out = make_tensor(f_out->shape());
  const auto f = f_out->data();
  const auto s = skip->data();
  auto y = out->data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f[i] + lam * s[i];
  if (tape) {
    tape->record([f_out, skip, lambda, out] {
      if (!out->has_grad()) return;
      const double lam = (*lambda.value)[0];
      const auto g = out->grad();
      const auto s = skip->data();
      double dlam = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) dlam += g[i] * s[i];
      lambda.value->ensure_grad()[0] += dlam;
      auto gf = f_out->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gf[i] += g[i];
      auto gs = skip->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gs[i] += lam * g[i];
    });
  }
  return out;
}

TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b) { return weighted_sum(tape, a, 1.0, b, 1.0); }

TensorPtr weighted_sum(Tape* tape, const TensorPtr& a, double wa, const TensorPtr& b, double wb) {
  require_same_shape(*a, *b, "weighted_sum");
  auto out = make_tensor(a->shape());
  const auto x = a->data();
  const auto z = b->data();
  auto y = out->data();
  if (wa == 1.0 && wb == 1.0) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] + z[i];
  } else {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = wa * x[i] + wb * z[i];
  }
  if (tape) {
    tape->record([a, b, out, wa, wb] {
      if (!out->has_grad()) return;
      const auto g = out->grad();
      auto ga = a->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += wa * g[i];
      auto gb = b->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += wb * g[i];
    });
  }
  return out;
}

TensorPtr reshape(Tape* tape, const TensorPtr& input, Shape shape) {
  if (shape_size(shape) != input->size()) {
    throw ConfigError("cannot reshape " + shape_to_string(input->shape()) + " to " + shape_to_string(shape));
  }
  auto out = make_tensor(std::move(shape), std::vector<double>(input->data().begin(), input->data().end()));
  if (tape) {
    tape->record([input, out] {
      if (!out->has_grad()) return;
      const auto g = out->grad();
      auto gx = input->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

TensorPtr slice_rows(Tape* tape, const TensorPtr& input, std::size_t begin, std::size_t count) {
  if (input->rank() == 0 || begin + count > input->dim(0)) {
    throw ConfigError("slice_rows range out of bounds for " + shape_to_string(input->shape()));
  }
  const std::size_t stride = input->size() / input->dim(0);
  Shape shape = input->shape();
  shape[0] = count;
  const auto src = input->data().subspan(begin * stride, count * stride);
  auto out = make_tensor(std::move(shape), std::vector<double>(src.begin(), src.end()));
  if (tape) {
    tape->record([input, out, begin, stride] {
      if (!out->has_grad()) return;
      const auto g = out->grad();
      auto gx = input->ensure_grad().subspan(begin * stride, g.size());
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

TensorPtr concat_cols(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
  if (a->rank() != 2 || b->rank() != 2 || a->dim(0) != b->dim(0)) {
    throw ConfigError("concat_cols expects [N,F] and [N,G], got " + shape_to_string(a->shape()) + " and " +
                      shape_to_string(b->shape()));
  }
  const std::size_t n = a->dim(0), fa = a->dim(1), fb = b->dim(1);
  auto out = make_tensor({n, fa + fb});
  auto y = out->data();
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(a->data().data() + r * fa, fa, y.data() + r * (fa + fb));
    std::copy_n(b->data().data() + r * fb, fb, y.data() + r * (fa + fb) + fa);
  }
  if (tape) {
    tape->record([a, b, out, n, fa, fb] {
      if (!out->has_grad()) return;
      const auto g = out->grad();
      auto ga = a->ensure_grad();
      auto gb = b->ensure_grad();
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < fa; ++i) ga[r * fa + i] += g[r * (fa + fb) + i];
        for (std::size_t i = 0; i < fb; ++i) gb[r * fb + i] += g[r * (fa + fb) + fa + i];
      }
    });
  }
  return out;
}

TensorPtr row_dot(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
  require_same_shape(*a, *b, "row_dot");
  if (a->rank() != 2) throw ConfigError("row_dot expects [N,F] inputs");
  const std::size_t n = a->dim(0), f = a->dim(1);
  auto out = make_tensor({n});
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < f; ++i) s += (*a)[r * f + i] * (*b)[r * f + i];
    (*out)[r] = s;
  }
  if (tape) {
    tape->record([a, b, out, n, f] {
      if (!out->has_grad()) return;
      const auto g = out->grad();
      auto ga = a->ensure_grad();
      auto gb = b->ensure_grad();
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < f; ++i) {
          ga[r * f + i] += g[r] * (*b)[r * f + i];
          gb[r * f + i] += g[r] * (*a)[r * f + i];
        }
      }
    });
  }
  return out;
}

TensorPtr l2_normalize_rows(Tape* tape, const TensorPtr& input) {
  constexpr double kEps = 1e-12;
  if (input->rank() != 2) throw ConfigError("l2_normalize_rows expects [N,F] input");
  const std::size_t n = input->dim(0), f = input->dim(1);
  auto out = make_tensor(input->shape());
  std::vector<double> norms(n);
  for (std::size_t r = 0; r < n; ++r) {
    double s = kEps;
    for (std::size_t i = 0; i < f; ++i) s += (*input)[r * f + i] * (*input)[r * f + i];
    norms[r] = std::sqrt(s);
    for (std::size_t i = 0; i < f; ++i) (*out)[r * f + i] = (*input)[r * f + i] / norms[r];
  }
  if (tape) {
    tape->record([input, out, norms = std::move(norms), n, f] {
      if (!out->has_grad()) return;
      const auto g = out->grad();
      auto gx = input->ensure_grad();
      for (std::size_t r = 0; r < n; ++r) {
        double yg = 0.0;
        for (std::size_t i = 0; i < f; ++i) yg += (*out)[r * f + i] * g[r * f + i];
        for (std::size_t i = 0; i < f; ++i) gx[r * f + i] += (g[r * f + i] - (*out)[r * f + i] * yg) / norms[r];
      }
    });
  }
  return out;
}

TensorPtr sum(Tape* tape, const TensorPtr& input) {
  auto out = make_tensor({1});
  double s = 0.0;
  for (double v : input->data()) s += v;
  (*out)[0] = s;
  if (tape) {
    tape->record([input, out] {
      if (!out->has_grad()) return;
      const double g = out->grad()[0];
      for (double& gx : input->ensure_grad()) gx += g;
    });
  }
  return out;
}

}  // namespace resmatch::nn
