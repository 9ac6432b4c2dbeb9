#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "vlr/masking.hpp"
#include "vlr/tensor.hpp"

namespace vlr {

// Reverse-mode autodiff over tensor-granular ops. Values are computed
// eagerly; each op pushes a closure that scatters its output gradient back
// to its inputs. Ops only ever reference earlier nodes, so running the
// closures in reverse creation order is a valid topological sweep.
//
// Parameter leaves reference external storage for both value and gradient,
// which lets worker threads accumulate into private gradient buffers.
template <typename T>
class Tape {
 public:
  using Var = int;

  explicit Tape(bool with_grad = true) : with_grad_(with_grad) {}

  bool grad_enabled() const { return with_grad_; }

  // ----- leaves -----

  Var input(Tensor<T> v) {
    Node n;
    n.val = std::move(v);
    n.track = false;
    return push_(std::move(n));
  }

  Var param(const Tensor<T>* value, T* grad_sink) {
    Node n;
    n.ext_val = value;
    n.ext_grad = with_grad_ ? grad_sink : nullptr;
    n.track = with_grad_ && grad_sink != nullptr;
    return push_(std::move(n));
  }

  // ----- accessors -----

  const Tensor<T>& val(Var v) const {
    const Node& n = nodes_[static_cast<size_t>(v)];
    return n.ext_val ? *n.ext_val : n.val;
  }

  T* grad_ptr(Var v) {
    Node& n = nodes_[static_cast<size_t>(v)];
    if (!n.track) return nullptr;
    if (n.ext_grad) return n.ext_grad;
    if (n.grad.data.empty()) n.grad = Tensor<T>(val(v).shape);
    return n.grad.data.data();
  }

  // ----- ops -----

  Var add(Var a, Var b) {
    const Tensor<T>& ta = val(a);
    const Tensor<T>& tb = val(b);
    if (!ta.same_shape(tb)) throw ShapeMismatch("add: shapes differ");
    Tensor<T> out(ta.shape);
    for (size_t i = 0; i < out.data.size(); ++i)
      out.data[i] = ta.data[i] + tb.data[i];
    Var o = make_op_(std::move(out), {a, b});
    set_back_(o, [this, o, a, b]() {
      const T* g = grad_ptr(o);
      const size_t n = val(o).numel();
      if (T* ga = grad_ptr(a))
        for (size_t i = 0; i < n; ++i) ga[i] += g[i];
      if (T* gb = grad_ptr(b))
        for (size_t i = 0; i < n; ++i) gb[i] += g[i];
    });
    return o;
  }

  // y = x * W^T + b, x: [n, din], W: [dout, din], b: [dout]
  Var linear(Var x, Var w, Var b) {
    const Tensor<T>& tx = val(x);
    const Tensor<T>& tw = val(w);
    const Tensor<T>& tb = val(b);
    const int n = tx.rows(), din = tx.cols(), dout = tw.rows();
    if (tw.cols() != din || static_cast<int>(tb.numel()) != dout)
      throw ShapeMismatch("linear: shapes inconsistent");
    Tensor<T> out({n, dout});
    gemm(false, true, n, dout, din, T{1}, tx.data.data(), din, tw.data.data(),
         din, T{0}, out.data.data(), dout);
    for (int i = 0; i < n; ++i) {
      T* row = out.row(i);
      for (int j = 0; j < dout; ++j) row[j] += tb.data[static_cast<size_t>(j)];
    }
    Var o = make_op_(std::move(out), {x, w, b});
    set_back_(o, [this, o, x, w, b, n, din, dout]() {
      const T* g = grad_ptr(o);
      if (T* gx = grad_ptr(x))
        gemm(false, false, n, din, dout, T{1}, g, dout,
             val(w).data.data(), din, T{1}, gx, din);
      if (T* gw = grad_ptr(w))
        gemm(true, false, dout, din, n, T{1}, g, dout, val(x).data.data(),
             din, T{1}, gw, din);
      if (T* gb = grad_ptr(b))
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < dout; ++j)
            gb[j] += g[static_cast<size_t>(i) * dout + j];
    });
    return o;
  }

  Var layer_norm(Var x, Var gamma, Var beta, T eps = T{1e-5}) {
    const Tensor<T>& tx = val(x);
    const int n = tx.rows(), d = tx.cols();
    if (static_cast<int>(val(gamma).numel()) != d ||
        static_cast<int>(val(beta).numel()) != d)
      throw ShapeMismatch("layer_norm: gamma/beta size");
    Tensor<T> out({n, d});
    auto xhat = std::make_shared<Tensor<T>>(Tensor<T>({n, d}));
    auto inv = std::make_shared<std::vector<T>>(static_cast<size_t>(n));
    const T* gm = val(gamma).data.data();
    const T* bt = val(beta).data.data();
    for (int i = 0; i < n; ++i) {
      const T* row = tx.row(i);
      T mean = 0;
      for (int j = 0; j < d; ++j) mean += row[j];
      mean /= d;
      T var = 0;
      for (int j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
      var /= d;
      const T iv = T{1} / std::sqrt(var + eps);
      (*inv)[static_cast<size_t>(i)] = iv;
      T* xh = xhat->row(i);
      T* orow = out.row(i);
      for (int j = 0; j < d; ++j) {
        xh[j] = (row[j] - mean) * iv;
        orow[j] = xh[j] * gm[j] + bt[j];
      }
    }
    Var o = make_op_(std::move(out), {x, gamma, beta});
    set_back_(o, [this, o, x, gamma, beta, n, d, xhat, inv]() {
      const T* g = grad_ptr(o);
      const T* gm = val(gamma).data.data();
      T* gx = grad_ptr(x);
      T* gg = grad_ptr(gamma);
      T* gb = grad_ptr(beta);
      for (int i = 0; i < n; ++i) {
        const T* grow = g + static_cast<size_t>(i) * d;
        const T* xh = xhat->row(i);
        if (gg)
          for (int j = 0; j < d; ++j) gg[j] += grow[j] * xh[j];
        if (gb)
          for (int j = 0; j < d; ++j) gb[j] += grow[j];
        if (gx) {
          T sum_dy = 0, sum_dyxh = 0;
          for (int j = 0; j < d; ++j) {
            const T dy = grow[j] * gm[j];
            sum_dy += dy;
            sum_dyxh += dy * xh[j];
          }
          const T iv = (*inv)[static_cast<size_t>(i)];
          T* gxrow = gx + static_cast<size_t>(i) * d;
          for (int j = 0; j < d; ++j) {
            const T dy = grow[j] * gm[j];
            gxrow[j] += iv * (dy - sum_dy / d - xh[j] * sum_dyxh / d);
          }
        }
      }
    });
    return o;
  }

  Var gelu(Var x) {
    const Tensor<T>& tx = val(x);
    Tensor<T> out(tx.shape);
    for (size_t i = 0; i < out.data.size(); ++i) {
      const T v = tx.data[i];
      out.data[i] = T{0.5} * v * (T{1} + std::erf(v * T{0.7071067811865476}));
    }
    Var o = make_op_(std::move(out), {x});
    set_back_(o, [this, o, x]() {
      T* gx = grad_ptr(x);
      if (!gx) return;
      const T* g = grad_ptr(o);
      const Tensor<T>& tx = val(x);
      for (size_t i = 0; i < tx.data.size(); ++i) {
        const T v = tx.data[i];
        const T cdf = T{0.5} * (T{1} + std::erf(v * T{0.7071067811865476}));
        const T pdf = std::exp(T{-0.5} * v * v) * T{0.3989422804014327};
        gx[i] += g[i] * (cdf + v * pdf);
      }
    });
    return o;
  }

  // Scaled dot-product attention over pre-projected q/k/v, mask optional.
  // q: [nq, d], k/v: [nk, d], d split into n_heads. A mask row with no
  // allowed column falls back to attending column 0 (the BOS column in
  // every mask this project builds).
  Var mha(Var q, Var k, Var v, int n_heads, const AttentionMask* mask) {
    const Tensor<T>& tq = val(q);
    const Tensor<T>& tk = val(k);
    const Tensor<T>& tv = val(v);
    const int nq = tq.rows(), nk = tk.rows(), d = tq.cols();
    if (tk.cols() != d || tv.cols() != d || tv.rows() != nk)
      throw ShapeMismatch("mha: q/k/v shapes inconsistent");
    if (d % n_heads != 0) throw ShapeMismatch("mha: d_model % n_heads != 0");
    if (mask && (mask->n_q != nq || mask->n_c != nk))
      throw ShapeMismatch("mha: mask shape does not match q/k");
    const int dh = d / n_heads;
    const T scale = T{1} / std::sqrt(static_cast<T>(dh));

    auto probs = std::make_shared<Tensor<T>>(
        Tensor<T>({n_heads, nq * nk}));
    Tensor<T> out({nq, d});
    std::vector<T> scores(static_cast<size_t>(nq) * nk);
    for (int h = 0; h < n_heads; ++h) {
      const T* qh = tq.data.data() + h * dh;
      const T* kh = tk.data.data() + h * dh;
      const T* vh = tv.data.data() + h * dh;
      gemm(false, true, nq, nk, dh, scale, qh, d, kh, d, T{0}, scores.data(),
           nk);
      T* p = probs->row(h);
      for (int i = 0; i < nq; ++i) {
        const T* srow = scores.data() + static_cast<size_t>(i) * nk;
        T* prow = p + static_cast<size_t>(i) * nk;
        bool any = false;
        if (mask)
          for (int j = 0; j < nk; ++j) any = any || mask->at(i, j);
        T mx = -std::numeric_limits<T>::infinity();
        for (int j = 0; j < nk; ++j) {
          const bool ok = !mask || mask->at(i, j) || (!any && j == 0);
          if (ok && srow[j] > mx) mx = srow[j];
        }
        T sum = 0;
        for (int j = 0; j < nk; ++j) {
          const bool ok = !mask || mask->at(i, j) || (!any && j == 0);
          prow[j] = ok ? std::exp(srow[j] - mx) : T{0};
          sum += prow[j];
        }
        for (int j = 0; j < nk; ++j) prow[j] /= sum;
      }
      // ctx_h = P * v_h
      gemm(false, false, nq, dh, nk, T{1}, p, nk, vh, d, T{0},
           out.data.data() + h * dh, d);
    }
    Var o = make_op_(std::move(out), {q, k, v});
    set_back_(o, [this, o, q, k, v, n_heads, nq, nk, d, dh, scale, probs]() {
      const T* g = grad_ptr(o);
      T* gq = grad_ptr(q);
      T* gk = grad_ptr(k);
      T* gv = grad_ptr(v);
      std::vector<T> dp(static_cast<size_t>(nq) * nk);
      std::vector<T> ds(static_cast<size_t>(nq) * nk);
      for (int h = 0; h < n_heads; ++h) {
        const T* p = probs->row(h);
        const T* gh = g + h * dh;
        // dP = dctx * v^T
        gemm(false, true, nq, nk, dh, T{1}, gh, d,
             val(v).data.data() + h * dh, d, T{0}, dp.data(), nk);
        if (gv)
          gemm(true, false, nk, dh, nq, T{1}, p, nk, gh, d, T{1}, gv + h * dh,
               d);
        for (int i = 0; i < nq; ++i) {
          const T* prow = p + static_cast<size_t>(i) * nk;
          const T* dprow = dp.data() + static_cast<size_t>(i) * nk;
          T dot = 0;
          for (int j = 0; j < nk; ++j) dot += prow[j] * dprow[j];
          T* dsrow = ds.data() + static_cast<size_t>(i) * nk;
          for (int j = 0; j < nk; ++j)
            dsrow[j] = prow[j] * (dprow[j] - dot);
        }
        if (gq)
          gemm(false, false, nq, dh, nk, scale, ds.data(), nk,
               val(k).data.data() + h * dh, d, T{1}, gq + h * dh, d);
        if (gk)
          gemm(true, false, nk, dh, nq, scale, ds.data(), nk,
               val(q).data.data() + h * dh, d, T{1}, gk + h * dh, d);
      }
    });
    return o;
  }

  Var gather_rows(Var x, std::vector<int> idx) {
    const Tensor<T>& tx = val(x);
    const int d = tx.cols();
    Tensor<T> out({static_cast<int>(idx.size()), d});
    for (size_t i = 0; i < idx.size(); ++i)
      std::copy_n(tx.row(idx[i]), d, out.row(static_cast<int>(i)));
    Var o = make_op_(std::move(out), {x});
    auto ix = std::make_shared<std::vector<int>>(std::move(idx));
    set_back_(o, [this, o, x, ix]() {
      T* gx = grad_ptr(x);
      if (!gx) return;
      const T* g = grad_ptr(o);
      const int d = val(x).cols();
      for (size_t i = 0; i < ix->size(); ++i) {
        T* dst = gx + static_cast<size_t>((*ix)[i]) * d;
        const T* src = g + i * d;
        for (int j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
    return o;
  }

  Var slice_rows(Var x, int start, int len) {
    const Tensor<T>& tx = val(x);
    const int d = tx.cols();
    if (start < 0 || start + len > tx.rows())
      throw ShapeMismatch("slice_rows out of range");
    Tensor<T> out({len, d});
    std::copy_n(tx.row(start), static_cast<size_t>(len) * d, out.data.data());
    Var o = make_op_(std::move(out), {x});
    set_back_(o, [this, o, x, start, len]() {
      T* gx = grad_ptr(x);
      if (!gx) return;
      const T* g = grad_ptr(o);
      const int d = val(x).cols();
      T* dst = gx + static_cast<size_t>(start) * d;
      for (size_t i = 0; i < static_cast<size_t>(len) * d; ++i) dst[i] += g[i];
    });
    return o;
  }

  Var broadcast_row(Var x, int n) {
    const Tensor<T>& tx = val(x);
    const int d = static_cast<int>(tx.numel());
    Tensor<T> out({n, d});
    for (int i = 0; i < n; ++i) std::copy_n(tx.data.data(), d, out.row(i));
    Var o = make_op_(std::move(out), {x});
    set_back_(o, [this, o, x, n, d]() {
      T* gx = grad_ptr(x);
      if (!gx) return;
      const T* g = grad_ptr(o);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) gx[j] += g[static_cast<size_t>(i) * d + j];
    });
    return o;
  }

  // out[idx_a[i]] = a[i], out[idx_b[j]] = b[j]; the index sets must tile
  // 0..n_rows-1 exactly.
  Var assemble_rows(Var a, const std::vector<int>& idx_a, Var b,
                    const std::vector<int>& idx_b, int n_rows) {
    const Tensor<T>& ta = val(a);
    const Tensor<T>& tb = val(b);
    const int d = ta.cols();
    if (tb.rows() > 0 && tb.cols() != d)
      throw ShapeMismatch("assemble_rows: width mismatch");
    if (static_cast<int>(idx_a.size()) != ta.rows() ||
        static_cast<int>(idx_b.size()) != tb.rows() ||
        static_cast<int>(idx_a.size() + idx_b.size()) != n_rows)
      throw ShapeMismatch("assemble_rows: index sets do not tile the output");
    Tensor<T> out({n_rows, d});
    for (size_t i = 0; i < idx_a.size(); ++i)
      std::copy_n(ta.row(static_cast<int>(i)), d, out.row(idx_a[i]));
    for (size_t i = 0; i < idx_b.size(); ++i)
      std::copy_n(tb.row(static_cast<int>(i)), d, out.row(idx_b[i]));
    Var o = make_op_(std::move(out), {a, b});
    auto ia = std::make_shared<std::vector<int>>(idx_a);
    auto ib = std::make_shared<std::vector<int>>(idx_b);
    set_back_(o, [this, o, a, b, ia, ib, d]() {
      const T* g = grad_ptr(o);
      if (T* ga = grad_ptr(a))
        for (size_t i = 0; i < ia->size(); ++i)
          for (int j = 0; j < d; ++j)
            ga[i * d + j] += g[static_cast<size_t>((*ia)[i]) * d + j];
      if (T* gb = grad_ptr(b))
        for (size_t i = 0; i < ib->size(); ++i)
          for (int j = 0; j < d; ++j)
            gb[i * d + j] += g[static_cast<size_t>((*ib)[i]) * d + j];
    });
    return o;
  }

  // sum of squared residuals over the given rows (scalar node)
  Var sse_rows(Var pred, const Tensor<T>& target, std::vector<int> rows) {
    const Tensor<T>& tp = val(pred);
    if (!tp.same_shape(target)) throw ShapeMismatch("sse_rows: target shape");
    const int d = tp.cols();
    T acc = 0;
    for (int r : rows) {
      const T* p = tp.row(r);
      const T* t = target.row(r);
      for (int j = 0; j < d; ++j) acc += (p[j] - t[j]) * (p[j] - t[j]);
    }
    Tensor<T> out({1});
    out.data[0] = acc;
    Var o = make_op_(std::move(out), {pred});
    auto rw = std::make_shared<std::vector<int>>(std::move(rows));
    auto tg = std::make_shared<Tensor<T>>(target);
    set_back_(o, [this, o, pred, rw, tg, d]() {
      T* gp = grad_ptr(pred);
      if (!gp) return;
      const T g = grad_ptr(o)[0];
      const Tensor<T>& tp = val(pred);
      for (int r : *rw) {
        const T* p = tp.row(r);
        const T* t = tg->row(r);
        T* gr = gp + static_cast<size_t>(r) * d;
        for (int j = 0; j < d; ++j) gr[j] += g * T{2} * (p[j] - t[j]);
      }
    });
    return o;
  }

  // sum of softmax cross-entropies over rows with target >= 0 (scalar node)
  Var ce_rows(Var logits, std::vector<int> targets) {
    const Tensor<T>& tl = val(logits);
    const int n = tl.rows(), vsz = tl.cols();
    if (static_cast<int>(targets.size()) != n)
      throw ShapeMismatch("ce_rows: one target per row expected");
    T acc = 0;
    for (int i = 0; i < n; ++i) {
      if (targets[static_cast<size_t>(i)] < 0) continue;
      const T* row = tl.row(i);
      T mx = row[0];
      for (int j = 1; j < vsz; ++j) mx = std::max(mx, row[j]);
      T sum = 0;
      for (int j = 0; j < vsz; ++j) sum += std::exp(row[j] - mx);
      acc += std::log(sum) + mx - row[targets[static_cast<size_t>(i)]];
    }
    Tensor<T> out({1});
    out.data[0] = acc;
    Var o = make_op_(std::move(out), {logits});
    auto tg = std::make_shared<std::vector<int>>(std::move(targets));
    set_back_(o, [this, o, logits, tg, n, vsz]() {
      T* gl = grad_ptr(logits);
      if (!gl) return;
      const T g = grad_ptr(o)[0];
      const Tensor<T>& tl = val(logits);
      for (int i = 0; i < n; ++i) {
        const int t = (*tg)[static_cast<size_t>(i)];
        if (t < 0) continue;
        const T* row = tl.row(i);
        T mx = row[0];
        for (int j = 1; j < vsz; ++j) mx = std::max(mx, row[j]);
        T sum = 0;
        for (int j = 0; j < vsz; ++j) sum += std::exp(row[j] - mx);
        T* gr = gl + static_cast<size_t>(i) * vsz;
        for (int j = 0; j < vsz; ++j) {
          const T p = std::exp(row[j] - mx) / sum;
          gr[j] += g * (p - (j == t ? T{1} : T{0}));
        }
      }
    });
    return o;
  }

  // scalar = sum_i coef_i * term_i (each term a scalar node)
  Var weighted_sum(const std::vector<std::pair<Var, T>>& terms) {
    T acc = 0;
    for (const auto& [v, c] : terms) acc += c * val(v).data[0];
    Tensor<T> out({1});
    out.data[0] = acc;
    std::vector<Var> ins;
    for (const auto& [v, c] : terms) ins.push_back(v);
    Var o = make_op_(std::move(out), ins);
    auto ts = std::make_shared<std::vector<std::pair<Var, T>>>(terms);
    set_back_(o, [this, o, ts]() {
      const T g = grad_ptr(o)[0];
      for (const auto& [v, c] : *ts)
        if (T* gv = grad_ptr(v)) gv[0] += g * c;
    });
    return o;
  }

  void backward(Var root) {
    if (!with_grad_) throw Error("backward on a no-grad tape");
    if (val(root).numel() != 1) throw ShapeMismatch("backward root not scalar");
    T* g = grad_ptr(root);
    if (g) g[0] += T{1};
    for (int i = root; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.back && n.track) n.back();
    }
  }

  size_t mark() const { return nodes_.size(); }
  void rewind(size_t m) { nodes_.resize(m); }

 private:
  struct Node {
    Tensor<T> val;
    const Tensor<T>* ext_val = nullptr;
    Tensor<T> grad;
    T* ext_grad = nullptr;
    std::function<void()> back;
    bool track = false;
  };

  Var push_(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size()) - 1;
  }

  Var make_op_(Tensor<T> out, const std::vector<Var>& inputs) {
    Node n;
    n.val = std::move(out);
    if (with_grad_)
      for (Var v : inputs)
        n.track = n.track || nodes_[static_cast<size_t>(v)].track;
    return push_(std::move(n));
  }

  void set_back_(Var v, std::function<void()> f) {
    Node& n = nodes_[static_cast<size_t>(v)];
    if (n.track) n.back = std::move(f);
  }

  std::vector<Node> nodes_;
  bool with_grad_;
};

}  // namespace vlr
