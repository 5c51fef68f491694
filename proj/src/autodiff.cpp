#include "rsd/autodiff.hpp"

#include <cmath>

namespace rsd::ad {

namespace {

Tape& same_tape(Var a, Var b, const char* op) {
  if (a.tape == nullptr || a.tape != b.tape)
    throw ConfigError(std::string(op) + ": vars from different tapes");
  return *a.tape;
}

double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

Var Tape::leaf(Vec value) {
  nodes_.push_back(Node{std::move(value), Vec(), nullptr});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::emplace(Vec value, BackFn back) {
  nodes_.push_back(Node{std::move(value), Vec(), std::move(back)});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::accum(int idx, const Vec& g) {
  Vec& buf = nodes_[idx].grad;
  if (buf.size() == 0)
    buf = g;
  else
    buf += g;
}

void Tape::accum_segment(int idx, int offset, const Vec& g) {
  Vec& buf = nodes_[idx].grad;
  if (buf.size() == 0) buf = Vec::Zero(nodes_[idx].val.size());
  buf.segment(offset, g.size()) += g;
}

void Tape::backward(Var out) {
  if (out.tape != this) throw ConfigError("backward: var from another tape");
  if (nodes_[out.idx].val.size() != 1)
    throw ShapeError("backward: output must be scalar");
  for (auto& n : nodes_) n.grad.resize(0);
  nodes_[out.idx].grad = Vec::Ones(1);
  for (int i = out.idx; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.back && n.grad.size() != 0) n.back(*this, n.grad);
  }
  for (auto& n : nodes_)
    if (n.grad.size() == 0) n.grad = Vec::Zero(n.val.size());
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b, "add");
  require_same_size(t.val(a), t.val(b), "add");
  const int ia = a.idx, ib = b.idx;
  return t.emplace(t.val(a) + t.val(b), [ia, ib](Tape& tp, const Vec& g) {
    tp.accum(ia, g);
    tp.accum(ib, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b, "sub");
  require_same_size(t.val(a), t.val(b), "sub");
  const int ia = a.idx, ib = b.idx;
  return t.emplace(t.val(a) - t.val(b), [ia, ib](Tape& tp, const Vec& g) {
    tp.accum(ia, g);
    tp.accum(ib, -g);
  });
}

Var cmul(Var a, Var b) {
  Tape& t = same_tape(a, b, "cmul");
  require_same_size(t.val(a), t.val(b), "cmul");
  const int ia = a.idx, ib = b.idx;
  Vec v = t.val(a).cwiseProduct(t.val(b));
  return t.emplace(std::move(v), [ia, ib](Tape& tp, const Vec& g) {
    tp.accum(ia, g.cwiseProduct(tp.val_at(ib)));
    tp.accum(ib, g.cwiseProduct(tp.val_at(ia)));
  });
}

Var scale(Var a, double c) {
  Tape& t = *a.tape;
  const int ia = a.idx;
  return t.emplace(c * t.val(a), [ia, c](Tape& tp, const Vec& g) {
    tp.accum(ia, (c * g).eval());
  });
}

Var segment(Var x, int offset, int n) {
  Tape& t = *x.tape;
  if (offset < 0 || offset + n > t.val(x).size())
    throw ShapeError("segment: range out of bounds");
  const int ix = x.idx;
  return t.emplace(t.val(x).segment(offset, n),
                   [ix, offset](Tape& tp, const Vec& g) {
                     tp.accum_segment(ix, offset, g);
                   });
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat: no parts");
  Tape& t = *parts[0].tape;
  Eigen::Index total = 0;
  std::vector<int> idx;
  std::vector<int> sizes;
  for (Var p : parts) {
    same_tape(parts[0], p, "concat");
    idx.push_back(p.idx);
    sizes.push_back(static_cast<int>(t.val(p).size()));
    total += t.val(p).size();
  }
  Vec v(total);
  Eigen::Index at = 0;
  for (size_t i = 0; i < idx.size(); ++i) {
    v.segment(at, sizes[i]) = t.val_at(idx[i]);
    at += sizes[i];
  }
  return t.emplace(std::move(v), [idx, sizes](Tape& tp, const Vec& g) {
    int at = 0;
    for (size_t i = 0; i < idx.size(); ++i) {
      tp.accum(idx[i], g.segment(at, sizes[i]));
      at += sizes[i];
    }
  });
}

Var tanh_(Var x) {
  Tape& t = *x.tape;
  const int ix = x.idx;
  Vec v = t.val(x).array().tanh();
  Vec y = v;  // cached activation for the backward pass
  return t.emplace(std::move(v),
                   [ix, y = std::move(y)](Tape& tp, const Vec& g) {
                     tp.accum(
                         ix, (g.array() * (1.0 - y.array().square())).matrix());
                   });
}

Var sum(Var x) {
  Tape& t = *x.tape;
  const int ix = x.idx;
  const Eigen::Index n = t.val(x).size();
  return t.emplace(Vec::Constant(1, t.val(x).sum()),
                   [ix, n](Tape& tp, const Vec& g) {
                     tp.accum(ix, Vec::Constant(n, g[0]));
                   });
}

Var dot(Var a, Var b) {
  Tape& t = same_tape(a, b, "dot");
  require_same_size(t.val(a), t.val(b), "dot");
  const int ia = a.idx, ib = b.idx;
  return t.emplace(Vec::Constant(1, t.val(a).dot(t.val(b))),
                   [ia, ib](Tape& tp, const Vec& g) {
                     tp.accum(ia, (g[0] * tp.val_at(ib)).eval());
                     tp.accum(ib, (g[0] * tp.val_at(ia)).eval());
                   });
}

Var mean(Var x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.tape->val(x).size()));
}

Var detach(Var x) { return x.tape->constant(x.tape->val(x)); }

Var dense(Var W, Var x, Var b, int rows, int cols) {
  Tape& t = same_tape(W, x, "dense");
  same_tape(W, b, "dense");
  if (t.val(W).size() != static_cast<Eigen::Index>(rows) * cols ||
      t.val(x).size() != cols || t.val(b).size() != rows)
    throw ShapeError("dense: inconsistent dimensions");
  using RowMat =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> Wm(t.val(W).data(), rows, cols);
  Vec y = Wm * t.val(x) + t.val(b);
  const int iw = W.idx, ix = x.idx, ib = b.idx;
  return t.emplace(std::move(y),
                   [iw, ix, ib, rows, cols](Tape& tp, const Vec& g) {
                     Eigen::Map<const RowMat> Wm(tp.val_at(iw).data(), rows,
                                                 cols);
                     tp.accum(ix, (Wm.transpose() * g).eval());
                     RowMat gW = g * tp.val_at(ix).transpose();
                     tp.accum(iw, Eigen::Map<const Vec>(gW.data(),
                                                        gW.size()));
                     tp.accum(ib, g);
                   });
}

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Patch matrix: rows = spatial locations, cols = (c,ki,kj) flattened.
Mat im2col(const Vec& x, Shape s, int k) {
  const int pad = k / 2;
  Mat P = Mat::Zero(static_cast<Eigen::Index>(s.h) * s.w,
                    static_cast<Eigen::Index>(s.c) * k * k);
  for (int c = 0; c < s.c; ++c)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        const int col = (c * k + ki) * k + kj;
        for (int i = 0; i < s.h; ++i) {
          const int ii = i + ki - pad;
          if (ii < 0 || ii >= s.h) continue;
          for (int j = 0; j < s.w; ++j) {
            const int jj = j + kj - pad;
            if (jj < 0 || jj >= s.w) continue;
            P(i * s.w + j, col) = x[(c * s.h + ii) * s.w + jj];
          }
        }
      }
  return P;
}

void col2im_accum(const Mat& dP, Shape s, int k, Vec& dx) {
  const int pad = k / 2;
  for (int c = 0; c < s.c; ++c)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        const int col = (c * k + ki) * k + kj;
        for (int i = 0; i < s.h; ++i) {
          const int ii = i + ki - pad;
          if (ii < 0 || ii >= s.h) continue;
          for (int j = 0; j < s.w; ++j) {
            const int jj = j + kj - pad;
            if (jj < 0 || jj >= s.w) continue;
            dx[(c * s.h + ii) * s.w + jj] += dP(i * s.w + j, col);
          }
        }
      }
}

}  // namespace

Var conv2d(Var x, Var w, Var b, Shape in_shape, int out_c, int k) {
  Tape& t = same_tape(x, w, "conv2d");
  same_tape(x, b, "conv2d");
  if (k % 2 != 1) throw ConfigError("conv2d: kernel size must be odd");
  const int patch = in_shape.c * k * k;
  if (t.val(x).size() != in_shape.size() ||
      t.val(w).size() != static_cast<Eigen::Index>(out_c) * patch ||
      t.val(b).size() != out_c)
    throw ShapeError("conv2d: inconsistent dimensions");

  Mat P = im2col(t.val(x), in_shape, k);
  Eigen::Map<const RowMat> Wm(t.val(w).data(), out_c, patch);
  Mat Y = P * Wm.transpose();  // (h*w) x out_c
  const int hw = in_shape.h * in_shape.w;
  Vec y(static_cast<Eigen::Index>(out_c) * hw);
  for (int c = 0; c < out_c; ++c)
    for (int p = 0; p < hw; ++p) y[c * hw + p] = Y(p, c) + t.val(b)[c];

  const int ix = x.idx, iw = w.idx, ib = b.idx;
  return t.emplace(
      std::move(y), [ix, iw, ib, in_shape, out_c, k, patch, hw,
                     P = std::move(P)](Tape& tp, const Vec& g) {
        Mat dY(hw, out_c);
        for (int c = 0; c < out_c; ++c)
          for (int p = 0; p < hw; ++p) dY(p, c) = g[c * hw + p];
        // weights
        RowMat dW = dY.transpose() * P;  // out_c x patch
        tp.accum(iw, Eigen::Map<const Vec>(dW.data(), dW.size()));
        // bias
        Vec db = dY.colwise().sum();
        tp.accum(ib, db);
        // input
        Eigen::Map<const RowMat> Wm(tp.val_at(iw).data(), out_c, patch);
        Mat dP = dY * Wm;  // hw x patch
        Vec dx = Vec::Zero(in_shape.size());
        col2im_accum(dP, in_shape, k, dx);
        tp.accum(ix, dx);
      });
}

Var avgpool2(Var x, Shape in_shape) {
  Tape& t = *x.tape;
  if (in_shape.h % 2 != 0 || in_shape.w % 2 != 0)
    throw ShapeError("avgpool2: odd spatial size");
  const Shape os{in_shape.c, in_shape.h / 2, in_shape.w / 2};
  const Vec& xv = t.val(x);
  Vec y(os.size());
  for (int c = 0; c < os.c; ++c)
    for (int i = 0; i < os.h; ++i)
      for (int j = 0; j < os.w; ++j) {
        const int i2 = 2 * i, j2 = 2 * j;
        auto at = [&](int ii, int jj) {
          return xv[(c * in_shape.h + ii) * in_shape.w + jj];
        };
        y[(c * os.h + i) * os.w + j] =
            0.25 * (at(i2, j2) + at(i2 + 1, j2) + at(i2, j2 + 1) +
                    at(i2 + 1, j2 + 1));
      }
  const int ix = x.idx;
  return t.emplace(std::move(y), [ix, in_shape, os](Tape& tp, const Vec& g) {
    Vec dx = Vec::Zero(in_shape.size());
    for (int c = 0; c < os.c; ++c)
      for (int i = 0; i < os.h; ++i)
        for (int j = 0; j < os.w; ++j) {
          const double gv = 0.25 * g[(c * os.h + i) * os.w + j];
          for (int di = 0; di < 2; ++di)
            for (int dj = 0; dj < 2; ++dj)
              dx[(c * in_shape.h + 2 * i + di) * in_shape.w + 2 * j + dj] +=
                  gv;
        }
    tp.accum(ix, dx);
  });
}

Var upsample2(Var x, Shape in_shape) {
  Tape& t = *x.tape;
  const Shape os{in_shape.c, in_shape.h * 2, in_shape.w * 2};
  const Vec& xv = t.val(x);
  Vec y(os.size());
  for (int c = 0; c < os.c; ++c)
    for (int i = 0; i < os.h; ++i)
      for (int j = 0; j < os.w; ++j)
        y[(c * os.h + i) * os.w + j] =
            xv[(c * in_shape.h + i / 2) * in_shape.w + j / 2];
  const int ix = x.idx;
  return t.emplace(std::move(y), [ix, in_shape, os](Tape& tp, const Vec& g) {
    Vec dx = Vec::Zero(in_shape.size());
    for (int c = 0; c < os.c; ++c)
      for (int i = 0; i < os.h; ++i)
        for (int j = 0; j < os.w; ++j)
          dx[(c * in_shape.h + i / 2) * in_shape.w + j / 2] +=
              g[(c * os.h + i) * os.w + j];
    tp.accum(ix, dx);
  });
}

Var broadcast_channels(Var v, Shape out_shape) {
  Tape& t = *v.tape;
  if (t.val(v).size() != out_shape.c)
    throw ShapeError("broadcast_channels: channel count mismatch");
  const int hw = out_shape.h * out_shape.w;
  Vec y(out_shape.size());
  for (int c = 0; c < out_shape.c; ++c)
    y.segment(static_cast<Eigen::Index>(c) * hw, hw)
        .setConstant(t.val(v)[c]);
  const int iv = v.idx;
  return t.emplace(std::move(y),
                   [iv, out_shape, hw](Tape& tp, const Vec& g) {
                     Vec dv(out_shape.c);
                     for (int c = 0; c < out_shape.c; ++c)
                       dv[c] =
                           g.segment(static_cast<Eigen::Index>(c) * hw, hw)
                               .sum();
                     tp.accum(iv, dv);
                   });
}

Var channel_mean(Var x, Shape in_shape) {
  Tape& t = *x.tape;
  if (t.val(x).size() != in_shape.size())
    throw ShapeError("channel_mean: size mismatch");
  const int hw = in_shape.h * in_shape.w;
  Vec y(in_shape.c);
  for (int c = 0; c < in_shape.c; ++c)
    y[c] = t.val(x).segment(static_cast<Eigen::Index>(c) * hw, hw).mean();
  const int ix = x.idx;
  return t.emplace(std::move(y), [ix, in_shape, hw](Tape& tp, const Vec& g) {
    Vec dx(in_shape.size());
    for (int c = 0; c < in_shape.c; ++c)
      dx.segment(static_cast<Eigen::Index>(c) * hw, hw)
          .setConstant(g[c] / hw);
    tp.accum(ix, dx);
  });
}

Var normalize_channels(Var x, Shape in_shape, double eps) {
  Tape& t = *x.tape;
  if (t.val(x).size() != in_shape.size())
    throw ShapeError("normalize_channels: size mismatch");
  const int hw = in_shape.h * in_shape.w;
  const Vec& xv = t.val(x);
  Vec y(xv.size());
  for (int p = 0; p < hw; ++p) {
    double ss = eps;
    for (int c = 0; c < in_shape.c; ++c) {
      const double v = xv[c * hw + p];
      ss += v * v;
    }
    const double inv = 1.0 / std::sqrt(ss);
    for (int c = 0; c < in_shape.c; ++c) y[c * hw + p] = xv[c * hw + p] * inv;
  }
  const int ix = x.idx;
  return t.emplace(
      std::move(y), [ix, in_shape, hw, eps](Tape& tp, const Vec& g) {
        const Vec& xv = tp.val_at(ix);
        Vec dx(xv.size());
        for (int p = 0; p < hw; ++p) {
          double ss = eps, vg = 0.0;
          for (int c = 0; c < in_shape.c; ++c) {
            const double v = xv[c * hw + p];
            ss += v * v;
            vg += v * g[c * hw + p];
          }
          const double inv = 1.0 / std::sqrt(ss);
          const double inv3 = inv * inv * inv;
          for (int c = 0; c < in_shape.c; ++c)
            dx[c * hw + p] =
                g[c * hw + p] * inv - xv[c * hw + p] * vg * inv3;
        }
        tp.accum(ix, dx);
      });
}

Var bce_with_logits_mean(Var logits, const Vec& targets) {
  Tape& t = *logits.tape;
  require_same_size(t.val(logits), targets, "bce_with_logits_mean");
  const Vec& l = t.val(logits);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < l.size(); ++i)
    acc += softplus(l[i]) - targets[i] * l[i];
  const double n = static_cast<double>(l.size());
  const int il = logits.idx;
  return t.emplace(Vec::Constant(1, acc / n),
                   [il, targets, n](Tape& tp, const Vec& g) {
                     const Vec& l = tp.val_at(il);
                     Vec dl(l.size());
                     for (Eigen::Index i = 0; i < l.size(); ++i)
                       dl[i] = g[0] * (sigmoid(l[i]) - targets[i]) / n;
                     tp.accum(il, dl);
                   });
}

Var mean_sq_diff(Var a, Var b) {
  Var d = sub(a, b);
  return mean(cmul(d, d));
}

Var mean_sq(Var a) { return mean(cmul(a, a)); }

Var mean_dot(Var a, Var b) { return mean(cmul(a, b)); }

}  // namespace rsd::ad
