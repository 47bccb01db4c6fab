#include "ponnet/gradcore/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace ponnet::grad {
namespace {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using ConstMapRM = Eigen::Map<const MatRM<T>>;

constexpr std::size_t kNarrowConv = 12;

[[noreturn]] void fail(const std::string& op, const std::string& what) {
  throw ShapeError(op + ": " + what);
}

template <typename T>
void require_rank(const std::string& op, const Tensor<T>& t, std::size_t rank, const char* name) {
  if (!t.defined()) fail(op, std::string(name) + " is undefined");
  if (t.rank() != rank) {
    fail(op, std::string(name) + " must have rank " + std::to_string(rank) + ", got " +
                 shape_str(t.shape()));
  }
}

template <typename T>
Node<T>* grad_target(Node<T>& self, std::size_t i) {
  Node<T>* in = self.inputs[i].get();
  if (!in->requires_grad) return nullptr;
  in->ensure_grad();
  return in;
}

// Sum in double with independent lanes so the loop vectorizes; the lane
// layout is fixed, so results do not depend on anything but the input.
template <typename T>
double accumulate(const T* p, std::size_t n) {
  double a[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t k = 0; k < 8; ++k) a[k] += static_cast<double>(p[i + k]);
  for (; i < n; ++i) a[0] += static_cast<double>(p[i]);
  return ((a[0] + a[1]) + (a[2] + a[3])) + ((a[4] + a[5]) + (a[6] + a[7]));
}

template <typename T>
double accumulate_dot(const T* p, const T* q, std::size_t n) {
  double a[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t k = 0; k < 8; ++k) a[k] += static_cast<double>(p[i + k]) * static_cast<double>(q[i + k]);
  for (; i < n; ++i) a[0] += static_cast<double>(p[i]) * static_cast<double>(q[i]);
  return ((a[0] + a[1]) + (a[2] + a[3])) + ((a[4] + a[5]) + (a[6] + a[7]));
}

template <typename T>
double accumulate_sq_dev(const T* p, std::size_t n, double mu) {
  double a[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t k = 0; k < 8; ++k) {
      const double d = static_cast<double>(p[i + k]) - mu;
      a[k] += d * d;
    }
  }
  for (; i < n; ++i) {
    const double d = static_cast<double>(p[i]) - mu;
    a[0] += d * d;
  }
  return ((a[0] + a[1]) + (a[2] + a[3])) + ((a[4] + a[5]) + (a[6] + a[7]));
}

// Output columns [lo, hi) whose input column ox * s + j - pad is in range.
inline void valid_range(std::size_t wo, std::size_t w, std::size_t s, std::size_t j, std::size_t pad,
                        std::size_t& lo, std::size_t& hi) {
  lo = j >= pad ? 0 : (pad - j + s - 1) / s;
  hi = w + pad > j ? std::min(wo, (w + pad - j + s - 1) / s) : 0;
  if (hi < lo) hi = lo;
}

}  // namespace

// ---------------------------------------------------------------- conv2d

template <typename T>
Tensor<T> conv2d(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride, int pad) {
  const std::string op = "conv2d";
  require_rank(op, x, 4, "input");
  require_rank(op, weight, 4, "weight");
  require_rank(op, bias, 1, "bias");
  if (stride < 1) fail(op, "stride must be >= 1");
  if (pad < 0) fail(op, "pad must be >= 0");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t k = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != c) {
    fail(op, "input has " + std::to_string(c) + " channels but weight " +
                 shape_str(weight.shape()) + " expects " + std::to_string(weight.dim(1)));
  }
  if (bias.dim(0) != k) fail(op, "bias length must equal output channels " + std::to_string(k));
  const std::size_t p = static_cast<std::size_t>(pad), s = static_cast<std::size_t>(stride);
  if (kh > h + 2 * p || kw > w + 2 * p) {
    fail(op, "kernel " + shape_str(weight.shape()) + " larger than padded input " +
                 shape_str(x.shape()));
  }
  const std::size_t ho = (h + 2 * p - kh) / s + 1;
  const std::size_t wo = (w + 2 * p - kw) / s + 1;
  const std::size_t plane = ho * wo;
  const std::size_t rows = c * kh * kw;
  const std::size_t cols = n * plane;

  // im2col: col(r, n*plane + oy*wo + ox), r = (ci*kh + i)*kw + j.
  auto col = std::make_shared<std::vector<T>>(rows * cols, T{0});
  const T* xv = x.values().data();
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j) {
        T* row = col->data() + ((ci * kh + i) * kw + j) * cols;
        for (std::size_t ni = 0; ni < n; ++ni) {
          const T* src = xv + (ni * c + ci) * h * w;
          T* dst = row + ni * plane;
          std::size_t lo, hi;
          valid_range(wo, w, s, j, p, lo, hi);
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const long iy = static_cast<long>(oy * s + i) - pad;
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            const T* srow = src + static_cast<std::size_t>(iy) * w;
            T* drow = dst + oy * wo;
            if (s == 1) {
              for (std::size_t ox = lo; ox < hi; ++ox) drow[ox] = srow[ox + j - p];
            } else {
              for (std::size_t ox = lo; ox < hi; ++ox) drow[ox] = srow[ox * s + j - p];
            }
          }
        }
      }
    }
  }

  // Narrow outputs (class convs, bottlenecks) use fixed-order loops: a GEMM's
  // blocking depends on k, so stacked head channels would round differently.
  const bool narrow = k <= kNarrowConv;
  MatRM<T> out2(k, cols);
  if (narrow) {
    out2.setZero();
    const T* wv = weight.values().data();
    for (std::size_t ki = 0; ki < k; ++ki) {
      T* orow = out2.data() + ki * cols;
      for (std::size_t r = 0; r < rows; ++r) {
        const T wk = wv[ki * rows + r];
        const T* crow = col->data() + r * cols;
        for (std::size_t q = 0; q < cols; ++q) orow[q] += wk * crow[q];
      }
    }
  } else {
    out2.noalias() = ConstMapRM<T>(weight.values().data(), k, rows) *
                     ConstMapRM<T>(col->data(), rows, cols);
  }

  std::vector<T> y(n * k * plane);
  const T* bv = bias.values().data();
  for (std::size_t ni = 0; ni < n; ++ni) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      const T* src = out2.data() + ki * cols + ni * plane;
      T* dst = y.data() + (ni * k + ki) * plane;
      for (std::size_t q = 0; q < plane; ++q) dst[q] = src[q] + bv[ki];
    }
  }

  return g.record(
      "conv2d", {n, k, ho, wo}, std::move(y), {x, weight, bias},
      [=](Node<T>& self) {
        MatRM<T> g2(k, cols);
        for (std::size_t ni = 0; ni < n; ++ni) {
          for (std::size_t ki = 0; ki < k; ++ki) {
            const T* src = self.grad.data() + (ni * k + ki) * plane;
            std::copy(src, src + plane, g2.data() + ki * cols + ni * plane);
          }
        }
        if (auto* wn = grad_target(self, 1)) {
          if (narrow) {
            for (std::size_t ki = 0; ki < k; ++ki)
              for (std::size_t r = 0; r < rows; ++r)
                wn->grad[ki * rows + r] +=
                    static_cast<T>(accumulate_dot(g2.data() + ki * cols, col->data() + r * cols, cols));
          } else {
            MapRM<T>(wn->grad.data(), k, rows).noalias() +=
                g2 * ConstMapRM<T>(col->data(), rows, cols).transpose();
          }
        }
        if (auto* bn = grad_target(self, 2)) {
          for (std::size_t ki = 0; ki < k; ++ki) {
            bn->grad[ki] += static_cast<T>(accumulate(g2.data() + ki * cols, cols));
          }
        }
        if (auto* xn = grad_target(self, 0)) {
          MatRM<T> dcol(rows, cols);
          const T* wv = self.inputs[1]->value.data();
          if (narrow) {
            dcol.setZero();
            for (std::size_t r = 0; r < rows; ++r) {
              T* drow = dcol.data() + r * cols;
              for (std::size_t ki = 0; ki < k; ++ki) {
                const T wk = wv[ki * rows + r];
                const T* grow = g2.data() + ki * cols;
                for (std::size_t q = 0; q < cols; ++q) drow[q] += wk * grow[q];
              }
            }
          } else {
            dcol.noalias() = ConstMapRM<T>(wv, k, rows).transpose() * g2;
          }
          T* dx = xn->grad.data();
          for (std::size_t ci = 0; ci < c; ++ci) {
            for (std::size_t i = 0; i < kh; ++i) {
              for (std::size_t j = 0; j < kw; ++j) {
                const T* row = dcol.data() + ((ci * kh + i) * kw + j) * cols;
                for (std::size_t ni = 0; ni < n; ++ni) {
                  T* dst = dx + (ni * c + ci) * h * w;
                  const T* src = row + ni * plane;
                  std::size_t lo, hi;
                  valid_range(wo, w, s, j, p, lo, hi);
                  for (std::size_t oy = 0; oy < ho; ++oy) {
                    const long iy = static_cast<long>(oy * s + i) - pad;
                    if (iy < 0 || iy >= static_cast<long>(h)) continue;
                    T* drow = dst + static_cast<std::size_t>(iy) * w;
                    const T* srow = src + oy * wo;
                    if (s == 1) {
                      for (std::size_t ox = lo; ox < hi; ++ox) drow[ox + j - p] += srow[ox];
                    } else {
                      for (std::size_t ox = lo; ox < hi; ++ox) drow[ox * s + j - p] += srow[ox];
                    }
                  }
                }
              }
            }
          }
        }
      });
}

// ----------------------------------------------------------------- dense

template <typename T>
Tensor<T> dense(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  const std::string op = "dense";
  require_rank(op, x, 2, "input");
  require_rank(op, weight, 2, "weight");
  const std::size_t n = x.dim(0), d = x.dim(1), e = weight.dim(1);
  if (weight.dim(0) != d) {
    fail(op, "input " + shape_str(x.shape()) + " incompatible with weight " +
                 shape_str(weight.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != e)) {
    fail(op, "bias must have shape [" + std::to_string(e) + "]");
  }
  // Plain loops: every output accumulates over d in a fixed order that does
  // not depend on the number of output columns.
  std::vector<T> y(n * e, T{0});
  const T* xv = x.values().data();
  const T* wv = weight.values().data();
  for (std::size_t ni = 0; ni < n; ++ni) {
    T* yr = y.data() + ni * e;
    for (std::size_t di = 0; di < d; ++di) {
      const T xi = xv[ni * d + di];
      const T* wr = wv + di * e;
      for (std::size_t ei = 0; ei < e; ++ei) yr[ei] += xi * wr[ei];
    }
    if (has_bias) {
      const T* bv = bias.values().data();
      for (std::size_t ei = 0; ei < e; ++ei) yr[ei] += bv[ei];
    }
  }
  std::vector<Tensor<T>> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return g.record("dense", {n, e}, std::move(y), std::move(inputs), [=](Node<T>& self) {
    const T* gy = self.grad.data();
    const T* xs = self.inputs[0]->value.data();
    const T* ws = self.inputs[1]->value.data();
    if (auto* xn = grad_target(self, 0)) {
      for (std::size_t ni = 0; ni < n; ++ni) {
        for (std::size_t di = 0; di < d; ++di) {
          T acc{0};
          for (std::size_t ei = 0; ei < e; ++ei) acc += gy[ni * e + ei] * ws[di * e + ei];
          xn->grad[ni * d + di] += acc;
        }
      }
    }
    if (auto* wn = grad_target(self, 1)) {
      for (std::size_t ni = 0; ni < n; ++ni) {
        for (std::size_t di = 0; di < d; ++di) {
          const T xi = xs[ni * d + di];
          T* wg = wn->grad.data() + di * e;
          for (std::size_t ei = 0; ei < e; ++ei) wg[ei] += xi * gy[ni * e + ei];
        }
      }
    }
    if (has_bias) {
      if (auto* bn = grad_target(self, 2)) {
        for (std::size_t ni = 0; ni < n; ++ni) {
          for (std::size_t ei = 0; ei < e; ++ei) bn->grad[ei] += gy[ni * e + ei];
        }
      }
    }
  });
}

// ------------------------------------------------------------ batch_norm

template <typename T>
Tensor<T> batch_norm(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, BatchNormState<T>& state, Mode mode, T momentum,
                     T eps) {
  const std::string op = "batch_norm";
  if (!x.defined() || (x.rank() != 4 && x.rank() != 2)) fail(op, "input must be [N,C,H,W] or [N,C]");
  require_rank(op, gamma, 1, "gamma");
  require_rank(op, beta, 1, "beta");
  if (!(eps > T{0})) fail(op, "eps must be positive");
  const std::size_t n = x.dim(0), c = x.dim(1);
  const std::size_t hw = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
  if (gamma.dim(0) != c || beta.dim(0) != c) fail(op, "gamma/beta length must equal channels");
  if (state.running_mean.size() != c || state.running_var.size() != c) {
    fail(op, "running statistics size mismatch");
  }
  const std::size_t count = n * hw;
  const T* xv = x.values().data();
  const T* gv = gamma.values().data();
  const T* bv = beta.values().data();

  auto xhat = std::make_shared<std::vector<T>>(x.size());
  auto inv_std = std::make_shared<std::vector<T>>(c);
  std::vector<T> y(x.size());
  for (std::size_t ci = 0; ci < c; ++ci) {
    T mean, var;
    if (mode == Mode::train) {
      double s = 0.0;
      for (std::size_t ni = 0; ni < n; ++ni) s += accumulate(xv + (ni * c + ci) * hw, hw);
      const double mu = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t ni = 0; ni < n; ++ni) ss += accumulate_sq_dev(xv + (ni * c + ci) * hw, hw, mu);
      const double biased = ss / static_cast<double>(count);
      const double unbiased = count > 1 ? ss / static_cast<double>(count - 1) : biased;
      mean = static_cast<T>(mu);
      var = static_cast<T>(biased);
      state.running_mean[ci] = (T{1} - momentum) * state.running_mean[ci] + momentum * mean;
      state.running_var[ci] =
          (T{1} - momentum) * state.running_var[ci] + momentum * static_cast<T>(unbiased);
    } else {
      mean = state.running_mean[ci];
      var = state.running_var[ci];
    }
    const T is = T{1} / std::sqrt(var + eps);
    (*inv_std)[ci] = is;
    for (std::size_t ni = 0; ni < n; ++ni) {
      const std::size_t base = (ni * c + ci) * hw;
      for (std::size_t q = 0; q < hw; ++q) {
        const T xh = (xv[base + q] - mean) * is;
        (*xhat)[base + q] = xh;
        y[base + q] = gv[ci] * xh + bv[ci];
      }
    }
  }

  return g.record("batch_norm", x.shape(), std::move(y), {x, gamma, beta}, [=](Node<T>& self) {
    const T* gy = self.grad.data();
    const T* gam = self.inputs[1]->value.data();
    auto* xn = grad_target(self, 0);
    auto* gn = grad_target(self, 1);
    auto* bn = grad_target(self, 2);
    for (std::size_t ci = 0; ci < c; ++ci) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t ni = 0; ni < n; ++ni) {
        const std::size_t base = (ni * c + ci) * hw;
        sum_g += accumulate(gy + base, hw);
        sum_gx += accumulate_dot(gy + base, xhat->data() + base, hw);
      }
      if (gn) gn->grad[ci] += static_cast<T>(sum_gx);
      if (bn) bn->grad[ci] += static_cast<T>(sum_g);
      if (!xn) continue;
      const T scale_c = gam[ci] * (*inv_std)[ci];
      if (mode == Mode::eval) {
        for (std::size_t ni = 0; ni < n; ++ni) {
          const std::size_t base = (ni * c + ci) * hw;
          for (std::size_t q = 0; q < hw; ++q) xn->grad[base + q] += scale_c * gy[base + q];
        }
        continue;
      }
      const T mean_g = static_cast<T>(sum_g / static_cast<double>(count));
      const T mean_gx = static_cast<T>(sum_gx / static_cast<double>(count));
      for (std::size_t ni = 0; ni < n; ++ni) {
        const std::size_t base = (ni * c + ci) * hw;
        for (std::size_t q = 0; q < hw; ++q) {
          xn->grad[base + q] += scale_c * (gy[base + q] - mean_g - (*xhat)[base + q] * mean_gx);
        }
      }
    }
  });
}

// ------------------------------------------------------------ activation

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <typename T>
Tensor<T> activation(Graph<T>& g, Activation kind, const Tensor<T>& x) {
  if (!x.defined()) fail("activation", "input is undefined");
  const auto xv = x.values();
  std::vector<T> y(xv.size());
  switch (kind) {
    case Activation::relu:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > T{0} ? xv[i] : T{0};
      if (g.tracking_kinks()) {
        std::uint64_t word = 0;
        for (std::size_t i = 0; i < y.size(); ++i) {
          word = (word << 1) | (xv[i] > T{0} ? 1u : 0u);
          if (i % 64 == 63) {
            g.mix_kink(word);
            word = 0;
          }
        }
        g.mix_kink(word);
      }
      return g.record("relu", x.shape(), std::move(y), {x}, [](Node<T>& self) {
        auto* xn = grad_target(self, 0);
        if (!xn) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          xn->grad[i] += xn->value[i] > T{0} ? self.grad[i] : T{0};
        }
      });
    case Activation::sigmoid:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = stable_sigmoid(xv[i]);
      return g.record("sigmoid", x.shape(), std::move(y), {x}, [](Node<T>& self) {
        auto* xn = grad_target(self, 0);
        if (!xn) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          const T s = self.value[i];
          xn->grad[i] += self.grad[i] * s * (T{1} - s);
        }
      });
    case Activation::tanh:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(xv[i]);
      return g.record("tanh", x.shape(), std::move(y), {x}, [](Node<T>& self) {
        auto* xn = grad_target(self, 0);
        if (!xn) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          const T t = self.value[i];
          xn->grad[i] += self.grad[i] * (T{1} - t * t);
        }
      });
  }
  fail("activation", "unknown kind");
}

// ------------------------------------------------------- elementwise misc

template <typename T>
Tensor<T> add(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.defined() || !b.defined()) fail("add", "input is undefined");
  if (a.shape() != b.shape()) {
    fail("add", "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] + b[i];
  return g.record("add", a.shape(), std::move(y), {a, b}, [](Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto* in = grad_target(self, k)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) in->grad[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> scale(Graph<T>& g, const Tensor<T>& x, T factor) {
  if (!x.defined()) fail("scale", "input is undefined");
  std::vector<T> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * factor;
  return g.record("scale", x.shape(), std::move(y), {x}, [factor](Node<T>& self) {
    if (auto* in = grad_target(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) in->grad[i] += self.grad[i] * factor;
    }
  });
}

template <typename T>
Tensor<T> sum(Graph<T>& g, const Tensor<T>& x) {
  if (!x.defined()) fail("sum", "input is undefined");
  T acc{0};
  for (const T v : x.values()) acc += v;
  return g.record("sum", {1}, {acc}, {x}, [](Node<T>& self) {
    if (auto* in = grad_target(self, 0)) {
      for (auto& gi : in->grad) gi += self.grad[0];
    }
  });
}

template <typename T>
Tensor<T> attention_modulate(Graph<T>& g, const Tensor<T>& features, const Tensor<T>& map) {
  const std::string op = "attention_modulate";
  require_rank(op, features, 4, "features");
  require_rank(op, map, 4, "attention map");
  const std::size_t n = features.dim(0), c = features.dim(1);
  const std::size_t hw = features.dim(2) * features.dim(3);
  if (map.dim(0) != n || map.dim(1) != 1 || map.dim(2) != features.dim(2) ||
      map.dim(3) != features.dim(3)) {
    fail(op, "map " + shape_str(map.shape()) + " does not match features " +
                 shape_str(features.shape()) + " (expected [N,1,H,W])");
  }
  const T* f = features.values().data();
  const T* a = map.values().data();
  std::vector<T> y(features.size());
  for (std::size_t ni = 0; ni < n; ++ni) {
    for (std::size_t ci = 0; ci < c; ++ci) {
      const std::size_t base = (ni * c + ci) * hw;
      for (std::size_t q = 0; q < hw; ++q) y[base + q] = (T{1} + a[ni * hw + q]) * f[base + q];
    }
  }
  return g.record("attention_modulate", features.shape(), std::move(y), {features, map},
                  [=](Node<T>& self) {
    const T* fv = self.inputs[0]->value.data();
    const T* av = self.inputs[1]->value.data();
    auto* fn = grad_target(self, 0);
    auto* an = grad_target(self, 1);
    for (std::size_t ni = 0; ni < n; ++ni) {
      for (std::size_t ci = 0; ci < c; ++ci) {
        const std::size_t base = (ni * c + ci) * hw;
        for (std::size_t q = 0; q < hw; ++q) {
          const T gy = self.grad[base + q];
          if (fn) fn->grad[base + q] += gy * (T{1} + av[ni * hw + q]);
          if (an) an->grad[ni * hw + q] += gy * fv[base + q];
        }
      }
    }
  });
}

template <typename T>
Tensor<T> global_avg_pool(Graph<T>& g, const Tensor<T>& x) {
  require_rank("global_avg_pool", x, 4, "input");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<T> y(n * c);
  const T* xv = x.values().data();
  for (std::size_t i = 0; i < n * c; ++i) {
    T acc{0};
    for (std::size_t q = 0; q < hw; ++q) acc += xv[i * hw + q];
    y[i] = acc / static_cast<T>(hw);
  }
  return g.record("global_avg_pool", {n, c}, std::move(y), {x}, [=](Node<T>& self) {
    if (auto* in = grad_target(self, 0)) {
      const T inv = T{1} / static_cast<T>(hw);
      for (std::size_t i = 0; i < n * c; ++i) {
        const T gi = self.grad[i] * inv;
        for (std::size_t q = 0; q < hw; ++q) in->grad[i * hw + q] += gi;
      }
    }
  });
}

template <typename T>
Tensor<T> concat_features(Graph<T>& g, const std::vector<Tensor<T>>& parts) {
  const std::string op = "concat_features";
  if (parts.empty()) fail(op, "no inputs");
  const std::size_t n = parts.front().defined() ? parts.front().dim(0) : 0;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank(op, p, 2, "part");
    if (p.dim(0) != n) fail(op, "row count mismatch");
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<T> y(n * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const T* pv = parts[k].values().data();
    for (std::size_t ni = 0; ni < n; ++ni) {
      std::copy(pv + ni * widths[k], pv + (ni + 1) * widths[k], y.data() + ni * total + offset);
    }
    offset += widths[k];
  }
  return g.record("concat_features", {n, total}, std::move(y), parts, [=](Node<T>& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (auto* in = grad_target(self, k)) {
        for (std::size_t ni = 0; ni < n; ++ni) {
          for (std::size_t j = 0; j < widths[k]; ++j) {
            in->grad[ni * widths[k] + j] += self.grad[ni * total + off + j];
          }
        }
      }
      off += widths[k];
    }
  });
}

template <typename T>
Tensor<T> slice_features(Graph<T>& g, const Tensor<T>& x, std::size_t begin, std::size_t end) {
  require_rank("slice_features", x, 2, "input");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (begin >= end || end > d) fail("slice_features", "invalid column range");
  const std::size_t w = end - begin;
  std::vector<T> y(n * w);
  for (std::size_t ni = 0; ni < n; ++ni) {
    for (std::size_t j = 0; j < w; ++j) y[ni * w + j] = x[ni * d + begin + j];
  }
  return g.record("slice_features", {n, w}, std::move(y), {x}, [=](Node<T>& self) {
    if (auto* in = grad_target(self, 0)) {
      for (std::size_t ni = 0; ni < n; ++ni) {
        for (std::size_t j = 0; j < w; ++j) in->grad[ni * d + begin + j] += self.grad[ni * w + j];
      }
    }
  });
}

template <typename T>
Tensor<T> slice_channels(Graph<T>& g, const Tensor<T>& x, std::size_t begin, std::size_t end) {
  require_rank("slice_channels", x, 4, "input");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (begin >= end || end > c) fail("slice_channels", "invalid channel range");
  const std::size_t w = end - begin;
  std::vector<T> y(n * w * hw);
  const T* xv = x.values().data();
  for (std::size_t ni = 0; ni < n; ++ni) {
    std::copy(xv + (ni * c + begin) * hw, xv + (ni * c + end) * hw, y.data() + ni * w * hw);
  }
  return g.record("slice_channels", {n, w, x.dim(2), x.dim(3)}, std::move(y), {x},
                  [=](Node<T>& self) {
                    if (auto* in = grad_target(self, 0)) {
                      for (std::size_t ni = 0; ni < n; ++ni) {
                        for (std::size_t q = 0; q < w * hw; ++q) {
                          in->grad[(ni * c + begin) * hw + q] += self.grad[ni * w * hw + q];
                        }
                      }
                    }
                  });
}

template <typename T>
void softmax_inplace(std::span<T> row) {
  T mx = row[0];
  for (const T v : row) mx = std::max(mx, v);
  T total{0};
  for (T& v : row) {
    v = std::exp(v - mx);
    total += v;
  }
  for (T& v : row) v /= total;
}

template <typename T>
Tensor<T> softmax_rows(Graph<T>& g, const Tensor<T>& x) {
  require_rank("softmax_rows", x, 2, "input");
  const std::size_t n = x.dim(0), m = x.dim(1);
  std::vector<T> y(x.values().begin(), x.values().end());
  for (std::size_t ni = 0; ni < n; ++ni) softmax_inplace(std::span<T>(y.data() + ni * m, m));
  return g.record("softmax_rows", x.shape(), std::move(y), {x}, [=](Node<T>& self) {
    auto* in = grad_target(self, 0);
    if (!in) return;
    for (std::size_t ni = 0; ni < n; ++ni) {
      T dot{0};
      for (std::size_t j = 0; j < m; ++j) dot += self.grad[ni * m + j] * self.value[ni * m + j];
      for (std::size_t j = 0; j < m; ++j) {
        in->grad[ni * m + j] += self.value[ni * m + j] * (self.grad[ni * m + j] - dot);
      }
    }
  });
}

template <typename T>
Tensor<T> convex_combine(Graph<T>& g, const Tensor<T>& alpha, const std::vector<Tensor<T>>& parts) {
  const std::string op = "convex_combine";
  require_rank(op, alpha, 2, "alpha");
  const std::size_t n = alpha.dim(0), k = alpha.dim(1);
  if (parts.size() != k) fail(op, "alpha columns must equal number of parts");
  const std::size_t d = parts.front().defined() ? parts.front().dim(1) : 0;
  for (const auto& p : parts) {
    require_rank(op, p, 2, "part");
    if (p.dim(0) != n || p.dim(1) != d) fail(op, "parts must share shape [N,D]");
  }
  std::vector<T> y(n * d, T{0});
  for (std::size_t ki = 0; ki < k; ++ki) {
    for (std::size_t ni = 0; ni < n; ++ni) {
      const T a = alpha[ni * k + ki];
      for (std::size_t j = 0; j < d; ++j) y[ni * d + j] += a * parts[ki][ni * d + j];
    }
  }
  std::vector<Tensor<T>> inputs{alpha};
  inputs.insert(inputs.end(), parts.begin(), parts.end());
  return g.record("convex_combine", {n, d}, std::move(y), std::move(inputs),
                  [=](Node<T>& self) {
    const T* av = self.inputs[0]->value.data();
    auto* an = grad_target(self, 0);
    for (std::size_t ki = 0; ki < k; ++ki) {
      const T* pv = self.inputs[ki + 1]->value.data();
      auto* pn = grad_target(self, ki + 1);
      for (std::size_t ni = 0; ni < n; ++ni) {
        T dot{0};
        for (std::size_t j = 0; j < d; ++j) {
          const T gy = self.grad[ni * d + j];
          dot += gy * pv[ni * d + j];
          if (pn) pn->grad[ni * d + j] += av[ni * k + ki] * gy;
        }
        if (an) an->grad[ni * k + ki] += dot;
      }
    }
  });
}

template <typename T>
Tensor<T> softmax_cross_entropy(Graph<T>& g, const Tensor<T>& logits, const Tensor<T>& labels,
                                Reduction reduction) {
  const std::string op = "softmax_cross_entropy";
  require_rank(op, logits, 2, "logits");
  require_rank(op, labels, 2, "labels");
  if (logits.shape() != labels.shape()) {
    fail(op, "labels " + shape_str(labels.shape()) + " do not match logits " +
                 shape_str(logits.shape()));
  }
  const std::size_t n = logits.dim(0), m = logits.dim(1);
  if (m < 2) fail(op, "need at least 2 classes");
  for (std::size_t ni = 0; ni < n; ++ni) {
    int ones = 0;
    for (std::size_t j = 0; j < m; ++j) {
      const T v = labels[ni * m + j];
      if (v == T{1}) {
        ++ones;
      } else if (v != T{0}) {
        fail(op, "label row " + std::to_string(ni) + " is not one-hot");
      }
    }
    if (ones != 1) fail(op, "label row " + std::to_string(ni) + " is not one-hot");
  }
  auto probs = std::make_shared<std::vector<T>>(logits.values().begin(), logits.values().end());
  T total{0};
  for (std::size_t ni = 0; ni < n; ++ni) {
    const T* row = logits.values().data() + ni * m;
    T mx = row[0];
    for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, row[j]);
    T se{0};
    for (std::size_t j = 0; j < m; ++j) se += std::exp(row[j] - mx);
    const T lse = mx + std::log(se);
    for (std::size_t j = 0; j < m; ++j) {
      (*probs)[ni * m + j] = std::exp(row[j] - lse);
      total += labels[ni * m + j] * (lse - row[j]);
    }
  }
  const T norm = reduction == Reduction::mean ? T{1} / static_cast<T>(n) : T{1};
  return g.record("softmax_cross_entropy", {1}, {total * norm}, {logits, labels},
                  [=](Node<T>& self) {
    const T up = self.grad[0] * norm;
    const T* y = self.inputs[1]->value.data();
    if (auto* ln = grad_target(self, 0)) {
      for (std::size_t i = 0; i < n * m; ++i) ln->grad[i] += up * ((*probs)[i] - y[i]);
    }
  });
}

template <typename T>
Tensor<T> weighted_sum(Graph<T>& g, const std::vector<Tensor<T>>& terms, const std::vector<T>& weights) {
  if (terms.size() != weights.size() || terms.empty()) {
    fail("weighted_sum", "need one weight per term");
  }
  T acc{0};
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (!terms[i].defined() || terms[i].size() != 1) fail("weighted_sum", "terms must be scalars");
    acc += weights[i] * terms[i].item();
  }
  return g.record("weighted_sum", {1}, {acc}, terms, [weights](Node<T>& self) {
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (auto* in = grad_target(self, i)) in->grad[0] += weights[i] * self.grad[0];
    }
  });
}

template <typename T>
Tensor<T> one_hot(const std::vector<int>& labels, std::size_t classes) {
  std::vector<T> v(labels.size() * classes, T{0});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw ShapeError("one_hot: label " + std::to_string(labels[i]) + " out of range");
    }
    v[i * classes + static_cast<std::size_t>(labels[i])] = T{1};
  }
  return Tensor<T>::constant({labels.size(), classes}, std::move(v));
}

#define PONNET_INSTANTIATE_OPS(T)                                                               \
  template Tensor<T> conv2d(Graph<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                            int, int);                                                          \
  template Tensor<T> dense(Graph<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);   \
  template Tensor<T> batch_norm(Graph<T>&, const Tensor<T>&, const Tensor<T>&,                 \
                                const Tensor<T>&, BatchNormState<T>&, Mode, T, T);             \
  template Tensor<T> activation(Graph<T>&, Activation, const Tensor<T>&);                      \
  template Tensor<T> add(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> scale(Graph<T>&, const Tensor<T>&, T);                                    \
  template Tensor<T> sum(Graph<T>&, const Tensor<T>&);                                         \
  template Tensor<T> attention_modulate(Graph<T>&, const Tensor<T>&, const Tensor<T>&);        \
  template Tensor<T> global_avg_pool(Graph<T>&, const Tensor<T>&);                             \
  template Tensor<T> concat_features(Graph<T>&, const std::vector<Tensor<T>>&);                \
  template Tensor<T> slice_features(Graph<T>&, const Tensor<T>&, std::size_t, std::size_t);    \
  template Tensor<T> slice_channels(Graph<T>&, const Tensor<T>&, std::size_t, std::size_t);    \
  template Tensor<T> softmax_rows(Graph<T>&, const Tensor<T>&);                                \
  template Tensor<T> convex_combine(Graph<T>&, const Tensor<T>&,                               \
                                    const std::vector<Tensor<T>>&);                            \
  template Tensor<T> softmax_cross_entropy(Graph<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                           Reduction);                                         \
  template Tensor<T> weighted_sum(Graph<T>&, const std::vector<Tensor<T>>&,                    \
                                  const std::vector<T>&);                                      \
  template T stable_sigmoid(T);                                                                \
  template void softmax_inplace(std::span<T>);                                                 \
  template Tensor<T> one_hot(const std::vector<int>&, std::size_t);

PONNET_INSTANTIATE_OPS(float)
PONNET_INSTANTIATE_OPS(double)

}  // namespace ponnet::grad
