// Copyright 2026 srcorrnet authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Minimal reverse-mode autodiff over dense real tensors. Values are double;
// every op records a backward closure on a tape rooted at the output node.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <unordered_set>
#include <vector>

#include "srcorrnet/common.hpp"

namespace srcorrnet {

struct Node {
  Shape shape;
  std::vector<double> val;
  std::vector<double> grad;  // sized lazily by ensure_grad()
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // reads this->grad, accumulates into parents

  void ensure_grad() {
    if (grad.size() != val.size()) grad.assign(val.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, bool requires_grad = false) {
    n_ = std::make_shared<Node>();
    n_->shape = std::move(shape);
    n_->val.assign(numel(n_->shape), 0.0);
    n_->requires_grad = requires_grad;
  }

  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
    check(int64_t(data.size()) == numel(shape), "tensor data/shape mismatch");
    Tensor t;
    t.n_ = std::make_shared<Node>();
    t.n_->shape = std::move(shape);
    t.n_->val = std::move(data);
    t.n_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(double v) { return from({1}, {v}); }

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int64_t size() const { return int64_t(n_->val.size()); }
  std::vector<double>& val() { return n_->val; }
  const std::vector<double>& val() const { return n_->val; }
  std::vector<double>& grad() { return n_->grad; }
  const std::vector<double>& grad() const { return n_->grad; }
  bool requires_grad() const { return n_->requires_grad; }
  double item() const {
    check(n_->val.size() == 1, "item() on non-scalar tensor");
    return n_->val[0];
  }

  std::shared_ptr<Node> node() const { return n_; }

  bool has_nan() const {
    for (double v : n_->val)
      if (!std::isfinite(v)) return true;
    return false;
  }

 private:
  std::shared_ptr<Node> n_;
};

// Generic op constructor: other headers build custom differentiable ops
// (filtering, iSTFT) through this same entry point.
inline Tensor make_op(Shape out_shape, std::vector<Tensor> parents,
                      const std::function<void(std::vector<double>&)>& forward,
                      std::function<void(Node&)> backward) {
  Tensor out(std::move(out_shape));
  forward(out.val());
  bool rg = false;
  for (const auto& p : parents) rg = rg || p.requires_grad();
  out.node()->requires_grad = rg;
  if (rg) {
    for (const auto& p : parents) out.node()->parents.push_back(p.node());
    out.node()->backprop = std::move(backward);
  }
  return out;
}

inline void backward(const Tensor& loss) {
  check(loss.size() == 1, "backward() requires a scalar loss");
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  // Iterative post-order DFS.
  std::vector<std::pair<Node*, size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  // Grads accumulate within one call but not across calls.
  for (Node* n : order) {
    n->ensure_grad();
    std::fill(n->grad.begin(), n->grad.end(), 0.0);
  }
  loss.node()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop) {
      for (auto& p : n->parents) p->ensure_grad();
      n->backprop(*n);
    }
  }
}

// ---- elementwise ----

namespace detail {
inline void same_shape(const Tensor& a, const Tensor& b, const char* op) {
  check(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}
}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::same_shape(a, b, "add");
  const auto &av = a.val(), &bv = b.val();
  return make_op(
      a.shape(), {a, b},
      [&](std::vector<double>& out) {
        for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
      },
      [](Node& self) {
        for (int p = 0; p < 2; ++p) {
          auto& g = self.parents[p]->grad;
          for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
      });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::same_shape(a, b, "sub");
  const auto &av = a.val(), &bv = b.val();
  return make_op(
      a.shape(), {a, b},
      [&](std::vector<double>& out) {
        for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
      },
      [](Node& self) {
        auto& ga = self.parents[0]->grad;
        auto& gb = self.parents[1]->grad;
        for (size_t i = 0; i < ga.size(); ++i) {
          ga[i] += self.grad[i];
          gb[i] -= self.grad[i];
        }
      });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::same_shape(a, b, "mul");
  const auto &av = a.val(), &bv = b.val();
  return make_op(
      a.shape(), {a, b},
      [&](std::vector<double>& out) {
        for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
      },
      [](Node& self) {
        auto& ga = self.parents[0]->grad;
        auto& gb = self.parents[1]->grad;
        const auto& av = self.parents[0]->val;
        const auto& bv = self.parents[1]->val;
        for (size_t i = 0; i < ga.size(); ++i) {
          ga[i] += self.grad[i] * bv[i];
          gb[i] += self.grad[i] * av[i];
        }
      });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  detail::same_shape(a, b, "div");
  const auto &av = a.val(), &bv = b.val();
  return make_op(
      a.shape(), {a, b},
      [&](std::vector<double>& out) {
        for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] / bv[i];
      },
      [](Node& self) {
        auto& ga = self.parents[0]->grad;
        auto& gb = self.parents[1]->grad;
        const auto& av = self.parents[0]->val;
        const auto& bv = self.parents[1]->val;
        for (size_t i = 0; i < ga.size(); ++i) {
          ga[i] += self.grad[i] / bv[i];
          gb[i] -= self.grad[i] * av[i] / (bv[i] * bv[i]);
        }
      });
}

inline Tensor scale(const Tensor& a, double c) {
  const auto& av = a.val();
  return make_op(
      a.shape(), {a},
      [&](std::vector<double>& out) {
        for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
      },
      [c](Node& self) {
        auto& g = self.parents[0]->grad;
        for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * c;
      });
}

inline Tensor add_const(const Tensor& a, double c) {
  const auto& av = a.val();
  return make_op(
      a.shape(), {a},
      [&](std::vector<double>& out) {
        for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] + c;
      },
      [](Node& self) {
        auto& g = self.parents[0]->grad;
        for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      });
}

inline Tensor sqrt_t(const Tensor& a) {
  const auto& av = a.val();
  return make_op(
      a.shape(), {a},
      [&](std::vector<double>& out) {
        for (size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(av[i]);
      },
      [](Node& self) {
        auto& g = self.parents[0]->grad;
        for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * 0.5 / self.val[i];
      });
}

inline Tensor log_t(const Tensor& a) {
  const auto& av = a.val();
  return make_op(
      a.shape(), {a},
      [&](std::vector<double>& out) {
        for (size_t i = 0; i < out.size(); ++i) out[i] = std::log(av[i]);
      },
      [](Node& self) {
        auto& g = self.parents[0]->grad;
        const auto& av = self.parents[0]->val;
        for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / av[i];
      });
}

inline Tensor sigmoid(const Tensor& a) {
  const auto& av = a.val();
  return make_op(
      a.shape(), {a},
      [&](std::vector<double>& out) {
        for (size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-av[i]));
      },
      [](Node& self) {
        auto& g = self.parents[0]->grad;
        for (size_t i = 0; i < g.size(); ++i)
          g[i] += self.grad[i] * self.val[i] * (1.0 - self.val[i]);
      });
}

inline Tensor relu(const Tensor& a) {
  const auto& av = a.val();
  return make_op(
      a.shape(), {a},
      [&](std::vector<double>& out) {
        for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0 ? av[i] : 0.0;
      },
      [](Node& self) {
        auto& g = self.parents[0]->grad;
        const auto& av = self.parents[0]->val;
        for (size_t i = 0; i < g.size(); ++i)
          if (av[i] > 0) g[i] += self.grad[i];
      });
}

inline Tensor tanh_t(const Tensor& a) {
  const auto& av = a.val();
  return make_op(
      a.shape(), {a},
      [&](std::vector<double>& out) {
        for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(av[i]);
      },
      [](Node& self) {
        auto& g = self.parents[0]->grad;
        for (size_t i = 0; i < g.size(); ++i)
          g[i] += self.grad[i] * (1.0 - self.val[i] * self.val[i]);
      });
}

// max(x, c) elementwise; subgradient passes where x > c.
inline Tensor clamp_min(const Tensor& a, double c) {
  const auto& av = a.val();
  return make_op(
      a.shape(), {a},
      [&](std::vector<double>& out) {
        for (size_t i = 0; i < out.size(); ++i) out[i] = std::max(av[i], c);
      },
      [c](Node& self) {
        auto& g = self.parents[0]->grad;
        const auto& av = self.parents[0]->val;
        for (size_t i = 0; i < g.size(); ++i)
          if (av[i] > c) g[i] += self.grad[i];
      });
}

inline Tensor clamp_max(const Tensor& a, double c) {
  const auto& av = a.val();
  return make_op(
      a.shape(), {a},
      [&](std::vector<double>& out) {
        for (size_t i = 0; i < out.size(); ++i) out[i] = std::min(av[i], c);
      },
      [c](Node& self) {
        auto& g = self.parents[0]->grad;
        const auto& av = self.parents[0]->val;
        for (size_t i = 0; i < g.size(); ++i)
          if (av[i] < c) g[i] += self.grad[i];
      });
}

// ---- reductions / views ----

inline Tensor sum_all(const Tensor& a) {
  const auto& av = a.val();
  return make_op(
      Shape{1}, {a},
      [&](std::vector<double>& out) {
        double acc = 0.0;
        for (double v : av) acc += v;
        out[0] = acc;
      },
      [](Node& self) {
        auto& g = self.parents[0]->grad;
        double go = self.grad[0];
        for (size_t i = 0; i < g.size(); ++i) g[i] += go;
      });
}

inline Tensor mean_all(const Tensor& a) { return scale(sum_all(a), 1.0 / double(a.size())); }

inline Tensor dot(const Tensor& a, const Tensor& b) { return sum_all(mul(a, b)); }

inline Tensor reshape(const Tensor& a, Shape shape) {
  check(numel(shape) == a.size(), "reshape: element count mismatch");
  const auto& av = a.val();
  return make_op(
      std::move(shape), {a},
      [&](std::vector<double>& out) { out = av; },
      [](Node& self) {
        auto& g = self.parents[0]->grad;
        for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      });
}

// [A,B,C,D] -> [A,C,B,D]
inline Tensor transpose12(const Tensor& x, int64_t A, int64_t B, int64_t C, int64_t D) {
  check(A * B * C * D == x.size(), "transpose12: size mismatch");
  const auto& xv = x.val();
  return make_op(
      Shape{A, C, B, D}, {x},
      [&](std::vector<double>& out) {
        for (int64_t a = 0; a < A; ++a)
          for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c) {
              const double* src = &xv[((a * B + b) * C + c) * D];
              double* dst = &out[((a * C + c) * B + b) * D];
              for (int64_t d = 0; d < D; ++d) dst[d] = src[d];
            }
      },
      [A, B, C, D](Node& self) {
        auto& g = self.parents[0]->grad;
        for (int64_t a = 0; a < A; ++a)
          for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c) {
              const double* src = &self.grad[((a * C + c) * B + b) * D];
              double* dst = &g[((a * B + b) * C + c) * D];
              for (int64_t d = 0; d < D; ++d) dst[d] += src[d];
            }
      });
}

inline Tensor concat_lastdim(const Tensor& a, const Tensor& b) {
  check(a.shape().size() == b.shape().size(), "concat: rank mismatch");
  Shape sa = a.shape(), sb = b.shape();
  for (size_t i = 0; i + 1 < sa.size(); ++i)
    check(sa[i] == sb[i], "concat: leading dims mismatch");
  int64_t Ca = sa.back(), Cb = sb.back();
  int64_t rows = a.size() / Ca;
  Shape out_shape = sa;
  out_shape.back() = Ca + Cb;
  const auto &av = a.val(), &bv = b.val();
  return make_op(
      out_shape, {a, b},
      [&](std::vector<double>& out) {
        for (int64_t r = 0; r < rows; ++r) {
          std::copy_n(&av[r * Ca], Ca, &out[r * (Ca + Cb)]);
          std::copy_n(&bv[r * Cb], Cb, &out[r * (Ca + Cb) + Ca]);
        }
      },
      [rows, Ca, Cb](Node& self) {
        auto& ga = self.parents[0]->grad;
        auto& gb = self.parents[1]->grad;
        for (int64_t r = 0; r < rows; ++r) {
          for (int64_t c = 0; c < Ca; ++c) ga[r * Ca + c] += self.grad[r * (Ca + Cb) + c];
          for (int64_t c = 0; c < Cb; ++c) gb[r * Cb + c] += self.grad[r * (Ca + Cb) + Ca + c];
        }
      });
}

// First `count` rows along axis 0.
inline Tensor slice_rows(const Tensor& x, int64_t count) {
  Shape s = x.shape();
  check(count <= s[0], "slice_rows: count exceeds axis 0");
  int64_t row = x.size() / s[0];
  Shape out_shape = s;
  out_shape[0] = count;
  const auto& xv = x.val();
  return make_op(
      out_shape, {x},
      [&](std::vector<double>& out) { std::copy_n(xv.data(), count * row, out.data()); },
      [count, row](Node& self) {
        auto& g = self.parents[0]->grad;
        for (int64_t i = 0; i < count * row; ++i) g[i] += self.grad[i];
      });
}

// Row k along axis 0: [N, ...] -> [...]
inline Tensor take_row(const Tensor& x, int64_t k) {
  Shape s = x.shape();
  check(!s.empty() && k >= 0 && k < s[0], "take_row: index out of range");
  int64_t row = x.size() / s[0];
  Shape out_shape(s.begin() + 1, s.end());
  if (out_shape.empty()) out_shape = {1};
  const auto& xv = x.val();
  return make_op(
      out_shape, {x},
      [&](std::vector<double>& out) { std::copy_n(&xv[k * row], row, out.data()); },
      [k, row](Node& self) {
        auto& g = self.parents[0]->grad;
        for (int64_t i = 0; i < row; ++i) g[k * row + i] += self.grad[i];
      });
}

// a: [K, C] broadcast to [K, T, F, C]
inline Tensor broadcast_tf(const Tensor& a, int64_t T, int64_t F) {
  check(a.shape().size() == 2, "broadcast_tf: expected [K,C]");
  int64_t K = a.shape()[0], C = a.shape()[1];
  const auto& av = a.val();
  return make_op(
      Shape{K, T, F, C}, {a},
      [&](std::vector<double>& out) {
        for (int64_t k = 0; k < K; ++k)
          for (int64_t p = 0; p < T * F; ++p)
            std::copy_n(&av[k * C], C, &out[(k * T * F + p) * C]);
      },
      [K, T, F, C](Node& self) {
        auto& g = self.parents[0]->grad;
        for (int64_t k = 0; k < K; ++k)
          for (int64_t p = 0; p < T * F; ++p)
            for (int64_t c = 0; c < C; ++c) g[k * C + c] += self.grad[(k * T * F + p) * C + c];
      });
}

// ---- dense layers ----

// x: [..., Cin], w: [Cout, Cin], b: optional [Cout]
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor* b = nullptr) {
  int64_t Ci = x.shape().back();
  check(w.shape().size() == 2 && w.shape()[1] == Ci, "linear: weight shape mismatch");
  int64_t Co = w.shape()[0];
  int64_t rows = x.size() / Ci;
  Shape out_shape = x.shape();
  out_shape.back() = Co;
  const auto& xv = x.val();
  const auto& wv = w.val();
  const double* bv = b ? b->val().data() : nullptr;
  std::vector<Tensor> parents = {x, w};
  if (b) parents.push_back(*b);
  bool has_bias = b != nullptr;
  return make_op(
      out_shape, parents,
      [&](std::vector<double>& out) {
        for (int64_t r = 0; r < rows; ++r) {
          const double* xr = &xv[r * Ci];
          double* yr = &out[r * Co];
          for (int64_t co = 0; co < Co; ++co) {
            const double* wr = &wv[co * Ci];
            double acc = bv ? bv[co] : 0.0;
            for (int64_t ci = 0; ci < Ci; ++ci) acc += wr[ci] * xr[ci];
            yr[co] = acc;
          }
        }
      },
      [rows, Ci, Co, has_bias](Node& self) {
        auto& gx = self.parents[0]->grad;
        auto& gw = self.parents[1]->grad;
        const auto& xv = self.parents[0]->val;
        const auto& wv = self.parents[1]->val;
        for (int64_t r = 0; r < rows; ++r) {
          const double* gy = &self.grad[r * Co];
          const double* xr = &xv[r * Ci];
          double* gxr = &gx[r * Ci];
          for (int64_t co = 0; co < Co; ++co) {
            double g = gy[co];
            if (g == 0.0) continue;
            const double* wr = &wv[co * Ci];
            double* gwr = &gw[co * Ci];
            for (int64_t ci = 0; ci < Ci; ++ci) {
              gxr[ci] += g * wr[ci];
              gwr[ci] += g * xr[ci];
            }
          }
        }
        if (has_bias) {
          auto& gb = self.parents[2]->grad;
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t co = 0; co < Co; ++co) gb[co] += self.grad[r * Co + co];
        }
      });
}

// x: [B,T,F,Ci] or [T,F,Ci]; w: [Co, kt, kf, Ci]; same zero padding; odd kernels.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* b = nullptr) {
  Shape xs = x.shape();
  bool batched = xs.size() == 4;
  check(xs.size() == 3 || xs.size() == 4, "conv2d: expected rank 3 or 4 input");
  int64_t B = batched ? xs[0] : 1;
  int64_t T = xs[batched ? 1 : 0], F = xs[batched ? 2 : 1], Ci = xs[batched ? 3 : 2];
  check(w.shape().size() == 4 && w.shape()[3] == Ci, "conv2d: weight shape mismatch");
  int64_t Co = w.shape()[0], kt = w.shape()[1], kf = w.shape()[2];
  check(kt % 2 == 1 && kf % 2 == 1, "conv2d: kernel sizes must be odd");
  int64_t pt = kt / 2, pf = kf / 2;
  Shape out_shape = xs;
  out_shape.back() = Co;
  const auto& xv = x.val();
  const auto& wv = w.val();
  const double* bv = b ? b->val().data() : nullptr;
  std::vector<Tensor> parents = {x, w};
  if (b) parents.push_back(*b);
  bool has_bias = b != nullptr;
  return make_op(
      out_shape, parents,
      [&](std::vector<double>& out) {
        for (int64_t bb = 0; bb < B; ++bb)
          for (int64_t t = 0; t < T; ++t)
            for (int64_t f = 0; f < F; ++f) {
              double* yr = &out[((bb * T + t) * F + f) * Co];
              for (int64_t co = 0; co < Co; ++co) yr[co] = bv ? bv[co] : 0.0;
              for (int64_t dt = 0; dt < kt; ++dt) {
                int64_t ti = t + dt - pt;
                if (ti < 0 || ti >= T) continue;
                for (int64_t df = 0; df < kf; ++df) {
                  int64_t fi = f + df - pf;
                  if (fi < 0 || fi >= F) continue;
                  const double* xr = &xv[((bb * T + ti) * F + fi) * Ci];
                  for (int64_t co = 0; co < Co; ++co) {
                    const double* wr = &wv[((co * kt + dt) * kf + df) * Ci];
                    double acc = 0.0;
                    for (int64_t ci = 0; ci < Ci; ++ci) acc += wr[ci] * xr[ci];
                    yr[co] += acc;
                  }
                }
              }
            }
      },
      [B, T, F, Ci, Co, kt, kf, pt, pf, has_bias](Node& self) {
        auto& gx = self.parents[0]->grad;
        auto& gw = self.parents[1]->grad;
        const auto& xv = self.parents[0]->val;
        const auto& wv = self.parents[1]->val;
        for (int64_t bb = 0; bb < B; ++bb)
          for (int64_t t = 0; t < T; ++t)
            for (int64_t f = 0; f < F; ++f) {
              const double* gy = &self.grad[((bb * T + t) * F + f) * Co];
              for (int64_t dt = 0; dt < kt; ++dt) {
                int64_t ti = t + dt - pt;
                if (ti < 0 || ti >= T) continue;
                for (int64_t df = 0; df < kf; ++df) {
                  int64_t fi = f + df - pf;
                  if (fi < 0 || fi >= F) continue;
                  const double* xr = &xv[((bb * T + ti) * F + fi) * Ci];
                  double* gxr = &gx[((bb * T + ti) * F + fi) * Ci];
                  for (int64_t co = 0; co < Co; ++co) {
                    double g = gy[co];
                    if (g == 0.0) continue;
                    const double* wr = &wv[((co * kt + dt) * kf + df) * Ci];
                    double* gwr = &gw[((co * kt + dt) * kf + df) * Ci];
                    for (int64_t ci = 0; ci < Ci; ++ci) {
                      gxr[ci] += g * wr[ci];
                      gwr[ci] += g * xr[ci];
                    }
                  }
                }
              }
            }
        if (has_bias) {
          auto& gb = self.parents[2]->grad;
          for (int64_t p = 0; p < B * T * F; ++p)
            for (int64_t co = 0; co < Co; ++co) gb[co] += self.grad[p * Co + co];
        }
      });
}

// x: [B,S,Ci]; w: [Co, k, Ci/groups]; same zero padding along S.
inline Tensor conv1d_grouped(const Tensor& x, const Tensor& w, const Tensor* b = nullptr,
                             int64_t groups = 1) {
  Shape xs = x.shape();
  check(xs.size() == 3, "conv1d: expected [B,S,C] input");
  int64_t B = xs[0], S = xs[1], Ci = xs[2];
  check(Ci % groups == 0, "conv1d: channels not divisible by groups");
  int64_t Cig = Ci / groups;
  check(w.shape().size() == 3 && w.shape()[2] == Cig, "conv1d: weight shape mismatch");
  int64_t Co = w.shape()[0], k = w.shape()[1];
  check(Co % groups == 0, "conv1d: out channels not divisible by groups");
  check(k % 2 == 1, "conv1d: kernel size must be odd");
  int64_t Cog = Co / groups, pad = k / 2;
  Shape out_shape = {B, S, Co};
  const auto& xv = x.val();
  const auto& wv = w.val();
  const double* bv = b ? b->val().data() : nullptr;
  std::vector<Tensor> parents = {x, w};
  if (b) parents.push_back(*b);
  bool has_bias = b != nullptr;
  return make_op(
      out_shape, parents,
      [&](std::vector<double>& out) {
        for (int64_t bb = 0; bb < B; ++bb)
          for (int64_t s = 0; s < S; ++s) {
            double* yr = &out[(bb * S + s) * Co];
            for (int64_t co = 0; co < Co; ++co) yr[co] = bv ? bv[co] : 0.0;
            for (int64_t dk = 0; dk < k; ++dk) {
              int64_t si = s + dk - pad;
              if (si < 0 || si >= S) continue;
              const double* xr = &xv[(bb * S + si) * Ci];
              for (int64_t co = 0; co < Co; ++co) {
                int64_t g = co / Cog;
                const double* wr = &wv[(co * k + dk) * Cig];
                const double* xg = &xr[g * Cig];
                double acc = 0.0;
                for (int64_t ci = 0; ci < Cig; ++ci) acc += wr[ci] * xg[ci];
                yr[co] += acc;
              }
            }
          }
      },
      [B, S, Ci, Cig, Co, Cog, k, pad, has_bias](Node& self) {
        auto& gx = self.parents[0]->grad;
        auto& gw = self.parents[1]->grad;
        const auto& xv = self.parents[0]->val;
        const auto& wv = self.parents[1]->val;
        for (int64_t bb = 0; bb < B; ++bb)
          for (int64_t s = 0; s < S; ++s) {
            const double* gy = &self.grad[(bb * S + s) * Co];
            for (int64_t dk = 0; dk < k; ++dk) {
              int64_t si = s + dk - pad;
              if (si < 0 || si >= S) continue;
              const double* xr = &xv[(bb * S + si) * Ci];
              double* gxr = &gx[(bb * S + si) * Ci];
              for (int64_t co = 0; co < Co; ++co) {
                double g = gy[co];
                if (g == 0.0) continue;
                int64_t gr = co / Cog;
                const double* wr = &wv[(co * k + dk) * Cig];
                double* gwr = &gw[(co * k + dk) * Cig];
                const double* xg = &xr[gr * Cig];
                double* gxg = &gxr[gr * Cig];
                for (int64_t ci = 0; ci < Cig; ++ci) {
                  gxg[ci] += g * wr[ci];
                  gwr[ci] += g * xg[ci];
                }
              }
            }
          }
        if (has_bias) {
          auto& gb = self.parents[2]->grad;
          for (int64_t p = 0; p < B * S; ++p)
            for (int64_t co = 0; co < Co; ++co) gb[co] += self.grad[p * Co + co];
        }
      });
}

// Per-position normalization over the last axis, then affine gain/bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps = 1e-5) {
  int64_t C = x.shape().back();
  check(gain.size() == C && bias.size() == C, "layer_norm: affine shape mismatch");
  int64_t rows = x.size() / C;
  const auto& xv = x.val();
  const auto& gv = gain.val();
  const auto& bv = bias.val();
  return make_op(
      x.shape(), {x, gain, bias},
      [&](std::vector<double>& out) {
        for (int64_t r = 0; r < rows; ++r) {
          const double* xr = &xv[r * C];
          double mu = 0.0;
          for (int64_t c = 0; c < C; ++c) mu += xr[c];
          mu /= double(C);
          double var = 0.0;
          for (int64_t c = 0; c < C; ++c) var += (xr[c] - mu) * (xr[c] - mu);
          var /= double(C);
          double inv = 1.0 / std::sqrt(var + eps);
          double* yr = &out[r * C];
          for (int64_t c = 0; c < C; ++c) yr[c] = (xr[c] - mu) * inv * gv[c] + bv[c];
        }
      },
      [rows, C, eps](Node& self) {
        auto& gx = self.parents[0]->grad;
        auto& gg = self.parents[1]->grad;
        auto& gb = self.parents[2]->grad;
        const auto& xv = self.parents[0]->val;
        const auto& gv = self.parents[1]->val;
        for (int64_t r = 0; r < rows; ++r) {
          const double* xr = &xv[r * C];
          const double* gy = &self.grad[r * C];
          double mu = 0.0;
          for (int64_t c = 0; c < C; ++c) mu += xr[c];
          mu /= double(C);
          double var = 0.0;
          for (int64_t c = 0; c < C; ++c) var += (xr[c] - mu) * (xr[c] - mu);
          var /= double(C);
          double inv = 1.0 / std::sqrt(var + eps);
          double sum_dxh = 0.0, sum_dxh_xh = 0.0;
          for (int64_t c = 0; c < C; ++c) {
            double xh = (xr[c] - mu) * inv;
            double dxh = gy[c] * gv[c];
            sum_dxh += dxh;
            sum_dxh_xh += dxh * xh;
            gg[c] += gy[c] * xh;
            gb[c] += gy[c];
          }
          for (int64_t c = 0; c < C; ++c) {
            double xh = (xr[c] - mu) * inv;
            double dxh = gy[c] * gv[c];
            gx[r * C + c] += inv * (dxh - sum_dxh / double(C) - xh * sum_dxh_xh / double(C));
          }
        }
      });
}

// Split last dim in half: (a, b) -> a * swish(b).
inline Tensor swiglu(const Tensor& x) {
  int64_t C2 = x.shape().back();
  check(C2 % 2 == 0, "swiglu: last dim must be even");
  int64_t H = C2 / 2;
  int64_t rows = x.size() / C2;
  Shape out_shape = x.shape();
  out_shape.back() = H;
  const auto& xv = x.val();
  return make_op(
      out_shape, {x},
      [&](std::vector<double>& out) {
        for (int64_t r = 0; r < rows; ++r) {
          const double* a = &xv[r * C2];
          const double* b = a + H;
          double* yr = &out[r * H];
          for (int64_t h = 0; h < H; ++h) {
            double sg = 1.0 / (1.0 + std::exp(-b[h]));
            yr[h] = a[h] * b[h] * sg;
          }
        }
      },
      [rows, H](Node& self) {
        auto& gx = self.parents[0]->grad;
        const auto& xv = self.parents[0]->val;
        int64_t C2 = 2 * H;
        for (int64_t r = 0; r < rows; ++r) {
          const double* a = &xv[r * C2];
          const double* b = a + H;
          const double* gy = &self.grad[r * H];
          double* ga = &gx[r * C2];
          double* gb = ga + H;
          for (int64_t h = 0; h < H; ++h) {
            double sg = 1.0 / (1.0 + std::exp(-b[h]));
            double sw = b[h] * sg;
            ga[h] += gy[h] * sw;
            gb[h] += gy[h] * a[h] * (sg + sw * (1.0 - sg));
          }
        }
      });
}

// Softmax over the last axis; with `causal`, entry j of row i (the second-to-last
// axis index) is masked out when j > i.
inline Tensor softmax_lastdim(const Tensor& x, bool causal = false) {
  int64_t S2 = x.shape().back();
  int64_t S = causal ? x.shape()[x.shape().size() - 2] : 1;
  if (causal) check(S == S2, "softmax: causal mask requires square trailing dims");
  int64_t rows = x.size() / S2;
  const auto& xv = x.val();
  return make_op(
      x.shape(), {x},
      [&](std::vector<double>& out) {
        for (int64_t r = 0; r < rows; ++r) {
          const double* xr = &xv[r * S2];
          double* yr = &out[r * S2];
          int64_t lim = causal ? (r % S) + 1 : S2;
          double mx = -1e300;
          for (int64_t j = 0; j < lim; ++j) mx = std::max(mx, xr[j]);
          double z = 0.0;
          for (int64_t j = 0; j < lim; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            z += yr[j];
          }
          for (int64_t j = 0; j < lim; ++j) yr[j] /= z;
          for (int64_t j = lim; j < S2; ++j) yr[j] = 0.0;
        }
      },
      [rows, S2, S, causal](Node& self) {
        auto& gx = self.parents[0]->grad;
        for (int64_t r = 0; r < rows; ++r) {
          const double* p = &self.val[r * S2];
          const double* gy = &self.grad[r * S2];
          int64_t lim = causal ? (r % S) + 1 : S2;
          double dotpg = 0.0;
          for (int64_t j = 0; j < lim; ++j) dotpg += p[j] * gy[j];
          for (int64_t j = 0; j < lim; ++j) gx[r * S2 + j] += p[j] * (gy[j] - dotpg);
        }
      });
}

// Rotary embedding on [B,S,H,d] (d even), base 10000, rotating pairs (2j, 2j+1).
inline Tensor rope(const Tensor& x) {
  Shape xs = x.shape();
  check(xs.size() == 4, "rope: expected [B,S,H,d]");
  int64_t B = xs[0], S = xs[1], H = xs[2], d = xs[3];
  check(d % 2 == 0, "rope: head dim must be even");
  const auto& xv = x.val();
  auto angle = [d](int64_t s, int64_t j) {
    return double(s) * std::pow(10000.0, -2.0 * double(j) / double(d));
  };
  return make_op(
      xs, {x},
      [&](std::vector<double>& out) {
        for (int64_t b = 0; b < B; ++b)
          for (int64_t s = 0; s < S; ++s)
            for (int64_t h = 0; h < H; ++h) {
              const double* xr = &xv[((b * S + s) * H + h) * d];
              double* yr = &out[((b * S + s) * H + h) * d];
              for (int64_t j = 0; j < d / 2; ++j) {
                double th = angle(s, j);
                double c = std::cos(th), sn = std::sin(th);
                yr[2 * j] = xr[2 * j] * c - xr[2 * j + 1] * sn;
                yr[2 * j + 1] = xr[2 * j] * sn + xr[2 * j + 1] * c;
              }
            }
      },
      [B, S, H, d, angle](Node& self) {
        auto& gx = self.parents[0]->grad;
        for (int64_t b = 0; b < B; ++b)
          for (int64_t s = 0; s < S; ++s)
            for (int64_t h = 0; h < H; ++h) {
              const double* gy = &self.grad[((b * S + s) * H + h) * d];
              double* gr = &gx[((b * S + s) * H + h) * d];
              for (int64_t j = 0; j < d / 2; ++j) {
                double th = angle(s, j);
                double c = std::cos(th), sn = std::sin(th);
                gr[2 * j] += gy[2 * j] * c + gy[2 * j + 1] * sn;
                gr[2 * j + 1] += -gy[2 * j] * sn + gy[2 * j + 1] * c;
              }
            }
      });
}

// Scaled attention logits: q [B,S,H,d], k [B,S2,H,d] -> [B,H,S,S2]
inline Tensor attn_logits(const Tensor& q, const Tensor& k) {
  Shape qs = q.shape(), ks = k.shape();
  check(qs.size() == 4 && ks.size() == 4 && qs[0] == ks[0] && qs[2] == ks[2] && qs[3] == ks[3],
        "attn_logits: shape mismatch");
  int64_t B = qs[0], S = qs[1], H = qs[2], d = qs[3], S2 = ks[1];
  double sc = 1.0 / std::sqrt(double(d));
  const auto& qv = q.val();
  const auto& kv = k.val();
  return make_op(
      Shape{B, H, S, S2}, {q, k},
      [&](std::vector<double>& out) {
        for (int64_t b = 0; b < B; ++b)
          for (int64_t h = 0; h < H; ++h)
            for (int64_t i = 0; i < S; ++i) {
              const double* qr = &qv[((b * S + i) * H + h) * d];
              double* yr = &out[((b * H + h) * S + i) * S2];
              for (int64_t j = 0; j < S2; ++j) {
                const double* kr = &kv[((b * S2 + j) * H + h) * d];
                double acc = 0.0;
                for (int64_t t = 0; t < d; ++t) acc += qr[t] * kr[t];
                yr[j] = acc * sc;
              }
            }
      },
      [B, S, S2, H, d, sc](Node& self) {
        auto& gq = self.parents[0]->grad;
        auto& gk = self.parents[1]->grad;
        const auto& qv = self.parents[0]->val;
        const auto& kv = self.parents[1]->val;
        for (int64_t b = 0; b < B; ++b)
          for (int64_t h = 0; h < H; ++h)
            for (int64_t i = 0; i < S; ++i) {
              const double* gy = &self.grad[((b * H + h) * S + i) * S2];
              const double* qr = &qv[((b * S + i) * H + h) * d];
              double* gqr = &gq[((b * S + i) * H + h) * d];
              for (int64_t j = 0; j < S2; ++j) {
                double g = gy[j] * sc;
                if (g == 0.0) continue;
                const double* kr = &kv[((b * S2 + j) * H + h) * d];
                double* gkr = &gk[((b * S2 + j) * H + h) * d];
                for (int64_t t = 0; t < d; ++t) {
                  gqr[t] += g * kr[t];
                  gkr[t] += g * qr[t];
                }
              }
            }
      });
}

// p [B,H,S,S2], v [B,S2,H,d] -> [B,S,H,d]
inline Tensor attn_apply(const Tensor& p, const Tensor& v) {
  Shape ps = p.shape(), vs = v.shape();
  check(ps.size() == 4 && vs.size() == 4 && ps[0] == vs[0] && ps[1] == vs[2] && ps[3] == vs[1],
        "attn_apply: shape mismatch");
  int64_t B = ps[0], H = ps[1], S = ps[2], S2 = ps[3], d = vs[3];
  const auto& pv = p.val();
  const auto& vv = v.val();
  return make_op(
      Shape{B, S, H, d}, {p, v},
      [&](std::vector<double>& out) {
        std::fill(out.begin(), out.end(), 0.0);
        for (int64_t b = 0; b < B; ++b)
          for (int64_t h = 0; h < H; ++h)
            for (int64_t i = 0; i < S; ++i) {
              const double* pr = &pv[((b * H + h) * S + i) * S2];
              double* yr = &out[((b * S + i) * H + h) * d];
              for (int64_t j = 0; j < S2; ++j) {
                double w = pr[j];
                if (w == 0.0) continue;
                const double* vr = &vv[((b * S2 + j) * H + h) * d];
                for (int64_t t = 0; t < d; ++t) yr[t] += w * vr[t];
              }
            }
      },
      [B, H, S, S2, d](Node& self) {
        auto& gp = self.parents[0]->grad;
        auto& gv = self.parents[1]->grad;
        const auto& pv = self.parents[0]->val;
        const auto& vv = self.parents[1]->val;
        for (int64_t b = 0; b < B; ++b)
          for (int64_t h = 0; h < H; ++h)
            for (int64_t i = 0; i < S; ++i) {
              const double* gy = &self.grad[((b * S + i) * H + h) * d];
              const double* pr = &pv[((b * H + h) * S + i) * S2];
              double* gpr = &gp[((b * H + h) * S + i) * S2];
              for (int64_t j = 0; j < S2; ++j) {
                const double* vr = &vv[((b * S2 + j) * H + h) * d];
                double* gvr = &gv[((b * S2 + j) * H + h) * d];
                double w = pr[j];
                double accp = 0.0;
                for (int64_t t = 0; t < d; ++t) {
                  accp += gy[t] * vr[t];
                  gvr[t] += w * gy[t];
                }
                gpr[j] += accp;
              }
            }
      });
}

// ---- parameters ----

enum class Init { kFanInUniform, kZeros, kOnes };

struct ParamStore {
  std::map<std::string, Tensor> params;  // ordered, deterministic iteration
  Rng rng;

  explicit ParamStore(uint64_t seed = 0) : rng(seed) {}

  Tensor create(const std::string& name, Shape shape, Init init, int64_t fan_in = 0) {
    check(!params.count(name), "duplicate parameter name: " + name);
    Tensor t(shape, /*requires_grad=*/true);
    switch (init) {
      case Init::kFanInUniform: {
        check(fan_in > 0, "fan_in required for uniform init");
        double a = std::sqrt(1.0 / double(fan_in));
        // Draws are keyed to the parameter name so layer order does not
        // change initialization.
        Rng local = rng.fork(std::hash<std::string>{}(name));
        for (auto& v : t.val()) v = local.uniform(-a, a);
        break;
      }
      case Init::kZeros:
        break;
      case Init::kOnes:
        std::fill(t.val().begin(), t.val().end(), 1.0);
        break;
    }
    params.emplace(name, t);
    return t;
  }

  Tensor get(const std::string& name) const {
    auto it = params.find(name);
    check(it != params.end(), "unknown parameter: " + name);
    return it->second;
  }

  bool has(const std::string& name) const { return params.count(name) > 0; }

  void zero_grad() {
    for (auto& [name, t] : params) {
      t.node()->ensure_grad();
      std::fill(t.grad().begin(), t.grad().end(), 0.0);
    }
  }

  int64_t total_count() const {
    int64_t n = 0;
    for (const auto& [name, t] : params) n += t.size();
    return n;
  }
};

// Central-difference gradient verifier. `f` must be a pure function of x.
inline double fd_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                       double h = 1e-4) {
  x.node()->requires_grad = true;
  Tensor loss = f(x);
  check(loss.size() == 1, "fd_check: f must return a scalar");
  backward(loss);
  x.node()->ensure_grad();
  std::vector<double> g_ad = x.grad();
  double worst = 0.0;
  for (int64_t i = 0; i < x.size(); ++i) {
    double orig = x.val()[i];
    x.val()[i] = orig + h;
    double fp = f(x).item();
    x.val()[i] = orig - h;
    double fm = f(x).item();
    x.val()[i] = orig;
    double g_fd = (fp - fm) / (2.0 * h);
    double denom = std::max({std::abs(g_fd), std::abs(g_ad[i]), 1e-6});
    worst = std::max(worst, std::abs(g_fd - g_ad[i]) / denom);
  }
  return worst;
}

}  // namespace srcorrnet
