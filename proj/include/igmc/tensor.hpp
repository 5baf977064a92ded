#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "igmc/common.hpp"

namespace igmc {

// Dense row-major 2-D tensor. Handles share storage; copying a Tensor copies
// the handle, not the data. Gradients live next to the values and are
// accumulated additively across all uses of the tensor.
class Tensor {
public:
  Tensor() = default;

  static Tensor zeros(int rows, int cols, bool requires_grad = false) {
    Tensor t;
    t.d_ = std::make_shared<Data>();
    t.d_->rows = rows;
    t.d_->cols = cols;
    t.d_->val.assign(static_cast<size_t>(rows) * cols, Real(0));
    if (requires_grad) t.set_requires_grad(true);
    return t;
  }

  static Tensor from_rows(int rows, int cols, std::vector<Real> values,
                          bool requires_grad = false) {
    if (values.size() != static_cast<size_t>(rows) * cols)
      throw ArgumentError("tensor init: " + std::to_string(values.size()) +
                          " values for shape " + std::to_string(rows) + "x" +
                          std::to_string(cols));
    Tensor t = zeros(rows, cols);
    t.d_->val = std::move(values);
    if (requires_grad) t.set_requires_grad(true);
    return t;
  }

  static Tensor scalar(Real v, bool requires_grad = false) {
    return from_rows(1, 1, {v}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(d_); }
  int rows() const { return d_->rows; }
  int cols() const { return d_->cols; }
  size_t size() const { return d_->val.size(); }

  // A Tensor is a handle: constness of the handle does not protect the shared
  // payload (same convention as shared_ptr), which lets backward closures hold
  // cheap copies and still accumulate gradients.
  Real* data() const { return d_->val.data(); }
  Real* grad() const { return d_->grad.data(); }
  std::vector<Real>& values() const { return d_->val; }
  std::vector<Real>& grad_values() const { return d_->grad; }

  Real& at(int r, int c) const { return d_->val[static_cast<size_t>(r) * d_->cols + c]; }
  Real grad_at(int r, int c) const { return d_->grad[static_cast<size_t>(r) * d_->cols + c]; }

  // Value of a 1x1 tensor.
  Real item() const {
    if (size() != 1) throw ArgumentError("item() on non-scalar tensor");
    return d_->val[0];
  }

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool on) const {
    d_->requires_grad = on;
    if (on && d_->grad.size() != d_->val.size()) d_->grad.assign(d_->val.size(), Real(0));
  }
  void zero_grad() const {
    if (d_->requires_grad) std::fill(d_->grad.begin(), d_->grad.end(), Real(0));
  }

  bool same_storage(const Tensor& o) const { return d_ == o.d_; }

private:
  struct Data {
    int rows = 0, cols = 0;
    std::vector<Real> val;
    std::vector<Real> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Data> d_;
};

namespace detail {

// C[m x n] += A[m x k] * B[k x n], all row-major.
inline void mm_nn_acc(const Real* a, const Real* b, Real* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const Real* ai = a + static_cast<size_t>(i) * k;
    Real* ci = c + static_cast<size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const Real al = ai[l];
      if (al == Real(0)) continue;
      const Real* bl = b + static_cast<size_t>(l) * n;
      for (int j = 0; j < n; ++j) ci[j] += al * bl[j];
    }
  }
}

// C[m x k] += A[m x n] * B[k x n]^T  (i.e. A * B-transposed).
inline void mm_nt_acc(const Real* a, const Real* b, Real* c, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const Real* ai = a + static_cast<size_t>(i) * n;
    Real* ci = c + static_cast<size_t>(i) * k;
    for (int l = 0; l < k; ++l) {
      const Real* bl = b + static_cast<size_t>(l) * n;
      Real s = 0;
      for (int j = 0; j < n; ++j) s += ai[j] * bl[j];
      ci[l] += s;
    }
  }
}

// C[k x n] += A[m x k]^T * B[m x n].
inline void mm_tn_acc(const Real* a, const Real* b, Real* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const Real* ai = a + static_cast<size_t>(i) * k;
    const Real* bi = b + static_cast<size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const Real al = ai[l];
      if (al == Real(0)) continue;
      Real* cl = c + static_cast<size_t>(l) * n;
      for (int j = 0; j < n; ++j) cl[j] += al * bi[j];
    }
  }
}

inline std::string shape_str(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

}  // namespace detail

// Reverse-mode tape. Ops append a backward closure in execution order;
// backward() replays them in exact reverse order, then clears the tape.
// A non-recording tape evaluates forward only (eval mode).
class Tape {
public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

  // When on, every op output is scanned for non-finite values.
  bool check_finite = false;

  Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
      throw ArgumentError("matmul: " + detail::shape_str(a) + " vs " + detail::shape_str(b));
    Tensor out = Tensor::zeros(a.rows(), b.cols());
    detail::mm_nn_acc(a.data(), b.data(), out.data(), a.rows(), a.cols(), b.cols());
    finish(out, a.requires_grad() || b.requires_grad(), [a, b, out]() mutable {
      if (a.requires_grad())
        detail::mm_nt_acc(out.grad(), b.data(), a.grad(), a.rows(), b.cols(), a.cols());
      if (b.requires_grad())
        detail::mm_tn_acc(a.data(), out.grad(), b.grad(), a.rows(), a.cols(), b.cols());
    });
    return out;
  }

  Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    const size_t n = a.size();
    for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
    finish(out, a.requires_grad() || b.requires_grad(), [a, b, out]() mutable {
      const size_t n = out.size();
      if (a.requires_grad())
        for (size_t i = 0; i < n; ++i) a.grad()[i] += out.grad()[i];
      if (b.requires_grad())
        for (size_t i = 0; i < n; ++i) b.grad()[i] += out.grad()[i];
    });
    return out;
  }

  Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    const size_t n = a.size();
    for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
    finish(out, a.requires_grad() || b.requires_grad(), [a, b, out]() mutable {
      const size_t n = out.size();
      if (a.requires_grad())
        for (size_t i = 0; i < n; ++i) a.grad()[i] += out.grad()[i];
      if (b.requires_grad())
        for (size_t i = 0; i < n; ++i) b.grad()[i] -= out.grad()[i];
    });
    return out;
  }

  // a[m x n] + row-broadcast bias[1 x n].
  Tensor add_rowvec(const Tensor& a, const Tensor& bias) {
    if (bias.rows() != 1 || bias.cols() != a.cols())
      throw ArgumentError("add_rowvec: " + detail::shape_str(a) + " vs " +
                          detail::shape_str(bias));
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    for (int i = 0; i < a.rows(); ++i)
      for (int j = 0; j < a.cols(); ++j) out.at(i, j) = a.at(i, j) + bias.at(0, j);
    finish(out, a.requires_grad() || bias.requires_grad(), [a, bias, out]() mutable {
      if (a.requires_grad()) {
        const size_t n = out.size();
        for (size_t i = 0; i < n; ++i) a.grad()[i] += out.grad()[i];
      }
      if (bias.requires_grad())
        for (int i = 0; i < out.rows(); ++i)
          for (int j = 0; j < out.cols(); ++j)
            bias.grad()[j] += out.grad()[static_cast<size_t>(i) * out.cols() + j];
    });
    return out;
  }

  Tensor scale(const Tensor& a, Real c) {
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    const size_t n = a.size();
    for (size_t i = 0; i < n; ++i) out.data()[i] = c * a.data()[i];
    finish(out, a.requires_grad(), [a, out, c]() mutable {
      const size_t n = out.size();
      for (size_t i = 0; i < n; ++i) a.grad()[i] += c * out.grad()[i];
    });
    return out;
  }

  // axis 0: stack vertically (equal cols); axis 1: side by side (equal rows).
  Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ArgumentError("concat: no inputs");
    if (axis != 0 && axis != 1) throw ArgumentError("concat: axis must be 0 or 1");
    bool any_grad = false;
    for (const auto& p : parts) any_grad = any_grad || p.requires_grad();
    Tensor out;
    if (axis == 0) {
      int cols = parts[0].cols(), rows = 0;
      for (const auto& p : parts) {
        if (p.cols() != cols)
          throw ArgumentError("concat axis 0: column mismatch " + detail::shape_str(p));
        rows += p.rows();
      }
      out = Tensor::zeros(rows, cols);
      size_t off = 0;
      for (const auto& p : parts) {
        std::memcpy(out.data() + off, p.data(), p.size() * sizeof(Real));
        off += p.size();
      }
      finish(out, any_grad, [parts, out]() mutable {
        size_t off = 0;
        for (auto& p : parts) {
          if (p.requires_grad())
            for (size_t i = 0; i < p.size(); ++i) p.grad()[i] += out.grad()[off + i];
          off += p.size();
        }
      });
    } else {
      int rows = parts[0].rows(), cols = 0;
      for (const auto& p : parts) {
        if (p.rows() != rows)
          throw ArgumentError("concat axis 1: row mismatch " + detail::shape_str(p));
        cols += p.cols();
      }
      out = Tensor::zeros(rows, cols);
      int coff = 0;
      for (const auto& p : parts) {
        for (int i = 0; i < rows; ++i)
          std::memcpy(out.data() + static_cast<size_t>(i) * cols + coff,
                      p.data() + static_cast<size_t>(i) * p.cols(),
                      static_cast<size_t>(p.cols()) * sizeof(Real));
        coff += p.cols();
      }
      finish(out, any_grad, [parts, out]() mutable {
        int coff = 0;
        for (auto& p : parts) {
          if (p.requires_grad())
            for (int i = 0; i < p.rows(); ++i)
              for (int j = 0; j < p.cols(); ++j)
                p.grad()[static_cast<size_t>(i) * p.cols() + j] +=
                    out.grad()[static_cast<size_t>(i) * out.cols() + coff + j];
          coff += p.cols();
        }
      });
    }
    return out;
  }

  Tensor row_gather(const Tensor& x, std::vector<int> idx) {
    for (int i : idx)
      if (i < 0 || i >= x.rows())
        throw ArgumentError("row_gather: index " + std::to_string(i) + " out of " +
                            std::to_string(x.rows()) + " rows");
    const int n = x.cols();
    Tensor out = Tensor::zeros(static_cast<int>(idx.size()), n);
    for (size_t r = 0; r < idx.size(); ++r)
      std::memcpy(out.data() + r * n, x.data() + static_cast<size_t>(idx[r]) * n,
                  static_cast<size_t>(n) * sizeof(Real));
    finish(out, x.requires_grad(), [x, out, idx = std::move(idx)]() mutable {
      const int n = x.cols();
      for (size_t r = 0; r < idx.size(); ++r) {
        Real* g = x.grad() + static_cast<size_t>(idx[r]) * n;
        const Real* og = out.grad() + r * n;
        for (int j = 0; j < n; ++j) g[j] += og[j];
      }
    });
    return out;
  }

  // out[idx[i]] += w[i] * x[i] over input rows; out has out_rows rows.
  // With empty weights all w[i] = 1. Backward is the weighted row_gather.
  Tensor row_scatter_add(const Tensor& x, std::vector<int> idx, int out_rows,
                         std::vector<Real> weights = {}) {
    if (static_cast<int>(idx.size()) != x.rows())
      throw ArgumentError("row_scatter_add: " + std::to_string(idx.size()) +
                          " indices for " + std::to_string(x.rows()) + " rows");
    if (!weights.empty() && weights.size() != idx.size())
      throw ArgumentError("row_scatter_add: weight count mismatch");
    for (int i : idx)
      if (i < 0 || i >= out_rows)
        throw ArgumentError("row_scatter_add: index " + std::to_string(i) +
                            " out of " + std::to_string(out_rows) + " rows");
    const int n = x.cols();
    Tensor out = Tensor::zeros(out_rows, n);
    for (size_t r = 0; r < idx.size(); ++r) {
      const Real w = weights.empty() ? Real(1) : weights[r];
      Real* o = out.data() + static_cast<size_t>(idx[r]) * n;
      const Real* xi = x.data() + r * n;
      for (int j = 0; j < n; ++j) o[j] += w * xi[j];
    }
    finish(out, x.requires_grad(),
           [x, out, idx = std::move(idx), weights = std::move(weights)]() mutable {
             const int n = x.cols();
             for (size_t r = 0; r < idx.size(); ++r) {
               const Real w = weights.empty() ? Real(1) : weights[r];
               Real* g = x.grad() + r * n;
               const Real* og = out.grad() + static_cast<size_t>(idx[r]) * n;
               for (int j = 0; j < n; ++j) g[j] += w * og[j];
             }
           });
    return out;
  }

  // out[dst[e]] += w[e] * x[src[e]] over edges e; out has out_rows rows. With
  // empty weights all w[e] = 1. Fuses a row_gather with a row_scatter_add so the
  // edge-sized intermediate never materializes. Backward is the same pass with
  // src and dst swapped: grad_x[src[e]] += w[e] * grad_out[dst[e]].
  Tensor gather_scatter_add(const Tensor& x, std::vector<int> src, std::vector<int> dst,
                            int out_rows, std::vector<Real> weights = {}) {
    if (src.size() != dst.size())
      throw ArgumentError("gather_scatter_add: " + std::to_string(src.size()) +
                          " sources for " + std::to_string(dst.size()) + " destinations");
    if (!weights.empty() && weights.size() != src.size())
      throw ArgumentError("gather_scatter_add: weight count mismatch");
    for (int i : src)
      if (i < 0 || i >= x.rows())
        throw ArgumentError("gather_scatter_add: source " + std::to_string(i) + " out of " +
                            std::to_string(x.rows()) + " rows");
    for (int i : dst)
      if (i < 0 || i >= out_rows)
        throw ArgumentError("gather_scatter_add: destination " + std::to_string(i) +
                            " out of " + std::to_string(out_rows) + " rows");
    const int n = x.cols();
    Tensor out = Tensor::zeros(out_rows, n);
    for (size_t e = 0; e < src.size(); ++e) {
      const Real w = weights.empty() ? Real(1) : weights[e];
      Real* o = out.data() + static_cast<size_t>(dst[e]) * n;
      const Real* xi = x.data() + static_cast<size_t>(src[e]) * n;
      for (int j = 0; j < n; ++j) o[j] += w * xi[j];
    }
    finish(out, x.requires_grad(),
           [x, out, src = std::move(src), dst = std::move(dst),
            weights = std::move(weights)]() mutable {
             const int n = x.cols();
             for (size_t e = 0; e < src.size(); ++e) {
               const Real w = weights.empty() ? Real(1) : weights[e];
               Real* g = x.grad() + static_cast<size_t>(src[e]) * n;
               const Real* og = out.grad() + static_cast<size_t>(dst[e]) * n;
               for (int j = 0; j < n; ++j) g[j] += w * og[j];
             }
           });
    return out;
  }

  Tensor tanh(const Tensor& a) {
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    const size_t n = a.size();
    for (size_t i = 0; i < n; ++i) out.data()[i] = std::tanh(a.data()[i]);
    finish(out, a.requires_grad(), [a, out]() mutable {
      const size_t n = out.size();
      for (size_t i = 0; i < n; ++i) {
        const Real y = out.data()[i];
        a.grad()[i] += out.grad()[i] * (Real(1) - y * y);
      }
    });
    return out;
  }

  Tensor relu(const Tensor& a) {
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    const size_t n = a.size();
    for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] > Real(0) ? a.data()[i] : Real(0);
    finish(out, a.requires_grad(), [a, out]() mutable {
      const size_t n = out.size();
      for (size_t i = 0; i < n; ++i)
        if (a.data()[i] > Real(0)) a.grad()[i] += out.grad()[i];
    });
    return out;
  }

  // Inverted dropout: kept entries scaled by 1/(1-p) in training mode,
  // identity in eval mode.
  Tensor dropout(const Tensor& a, Real p, uint64_t seed, bool training) {
    if (p < Real(0) || p >= Real(1))
      throw ArgumentError("dropout: p must be in [0,1), got " + std::to_string(p));
    if (!training || p == Real(0)) return a;
    const size_t n = a.size();
    Rng rng(mix_seed(seed, 0x0d70u));
    std::vector<Real> mask(n);
    const Real keep_scale = Real(1) / (Real(1) - p);
    for (size_t i = 0; i < n; ++i) mask[i] = rng.next_unit() < p ? Real(0) : keep_scale;
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * mask[i];
    finish(out, a.requires_grad(), [a, out, mask = std::move(mask)]() mutable {
      const size_t n = out.size();
      for (size_t i = 0; i < n; ++i) a.grad()[i] += out.grad()[i] * mask[i];
    });
    return out;
  }

  // Column sums: m x n -> 1 x n.
  Tensor sum_rows(const Tensor& a) {
    Tensor out = Tensor::zeros(1, a.cols());
    for (int i = 0; i < a.rows(); ++i)
      for (int j = 0; j < a.cols(); ++j) out.data()[j] += a.at(i, j);
    finish(out, a.requires_grad(), [a, out]() mutable {
      for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j)
          a.grad()[static_cast<size_t>(i) * a.cols() + j] += out.grad()[j];
    });
    return out;
  }

  // Sum of squared entries -> 1 x 1.
  Tensor frobenius_sq(const Tensor& a) {
    Real s = 0;
    const size_t n = a.size();
    for (size_t i = 0; i < n; ++i) s += a.data()[i] * a.data()[i];
    Tensor out = Tensor::scalar(s);
    finish(out, a.requires_grad(), [a, out]() mutable {
      const Real g = out.grad()[0];
      const size_t n = a.size();
      for (size_t i = 0; i < n; ++i) a.grad()[i] += Real(2) * g * a.data()[i];
    });
    return out;
  }

  // Same data, new shape; element count must match.
  Tensor reshape(const Tensor& a, int rows, int cols) {
    if (static_cast<size_t>(rows) * cols != a.size())
      throw ArgumentError("reshape: " + detail::shape_str(a) + " to " +
                          std::to_string(rows) + "x" + std::to_string(cols));
    Tensor out = Tensor::from_rows(rows, cols, a.values());
    finish(out, a.requires_grad(), [a, out]() mutable {
      const size_t n = a.size();
      for (size_t i = 0; i < n; ++i) a.grad()[i] += out.grad()[i];
    });
    return out;
  }

  // Seeds d(loss)/d(loss) = 1, replays recorded ops in reverse, clears the tape.
  void backward(const Tensor& loss) {
    if (loss.size() != 1) throw ArgumentError("backward: loss must be scalar");
    if (ops_.empty()) throw ArgumentError("backward: empty tape");
    if (!loss.requires_grad())
      throw ArgumentError("backward: loss does not depend on any tracked tensor");
    loss.grad()[0] += Real(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    ops_.clear();
  }

private:
  void require_same_shape(const char* op, const Tensor& a, const Tensor& b) const {
    if (a.rows() != b.rows() || a.cols() != b.cols())
      throw ArgumentError(std::string(op) + ": " + detail::shape_str(a) + " vs " +
                          detail::shape_str(b));
  }

  void finish(Tensor& out, bool needs_grad, std::function<void()> bw) {
    if (check_finite) {
      for (size_t i = 0; i < out.size(); ++i)
        if (!std::isfinite(out.data()[i]))
          throw NumericalError("non-finite value in op output");
    }
    if (recording_ && needs_grad) {
      out.set_requires_grad(true);
      ops_.push_back(std::move(bw));
    }
  }

  bool recording_;
  std::vector<std::function<void()>> ops_;
};

}  // namespace igmc
