#pragma once

#include "rsd/types.hpp"

#include <functional>
#include <vector>

namespace rsd::ad {

class Tape;

/// Handle to a tape node. Cheap to copy; owns nothing.
struct Var {
  Tape* tape = nullptr;
  int idx = -1;
  bool valid() const { return tape != nullptr && idx >= 0; }
};

/// Reverse-mode tape over flat Eigen vectors. Nodes are created in
/// topological order; backward() replays them in reverse. Scalar results
/// are size-1 vectors.
class Tape {
 public:
  Var leaf(Vec value);
  Var constant(Vec value) { return leaf(std::move(value)); }
  Var constant(double value) { return leaf(Vec::Constant(1, value)); }

  const Vec& val(Var v) const { return nodes_[v.idx].val; }
  const Vec& grad(Var v) const { return nodes_[v.idx].grad; }
  double scalar(Var v) const { return nodes_[v.idx].val[0]; }

  /// Accumulates d(out)/d(node) into every node's grad buffer. Branches
  /// that never receive a gradient end up with zero-filled buffers.
  void backward(Var out);

  // Node plumbing used by the op free functions.
  using BackFn = std::function<void(Tape&, const Vec&)>;
  Var emplace(Vec value, BackFn back);
  void accum(int idx, const Vec& g);
  void accum_segment(int idx, int offset, const Vec& g);
  const Vec& val_at(int idx) const { return nodes_[idx].val; }

 private:
  struct Node {
    Vec val;
    Vec grad;
    BackFn back;  // called with this node's accumulated gradient
  };
  std::vector<Node> nodes_;
};

// ---- primitive ops -------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var cmul(Var a, Var b);  // elementwise product
Var scale(Var a, double c);
Var segment(Var x, int offset, int n);
Var concat(const std::vector<Var>& parts);
Var tanh_(Var x);
Var sum(Var x);     // scalar
Var dot(Var a, Var b);  // scalar
Var mean(Var x);    // scalar
Var detach(Var x);

/// Dense layer y = W x + b with W stored row-major as a flat var of size
/// rows*cols.
Var dense(Var W, Var x, Var b, int rows, int cols);

/// Same-padded stride-1 convolution on channel-major [c,h,w] data.
/// Weights are [out_c][in_c][k][k] flattened; bias has out_c entries.
Var conv2d(Var x, Var w, Var b, Shape in_shape, int out_c, int k);

Var avgpool2(Var x, Shape in_shape);
Var upsample2(Var x, Shape in_shape);

/// y[(c,i,j)] = v[c]; broadcasts a per-channel vector over the plane.
Var broadcast_channels(Var v, Shape out_shape);

/// y[c] = mean over the (h,w) plane of channel c.
Var channel_mean(Var x, Shape in_shape);

/// Per-pixel unit normalization across channels: v -> v / sqrt(|v|^2+eps).
Var normalize_channels(Var x, Shape in_shape, double eps = 1e-8);

/// Mean over elements of softplus(l) - t*l; equals the binary
/// cross-entropy of sigmoid(l) against targets t in {0,1}.
Var bce_with_logits_mean(Var logits, const Vec& targets);

// ---- composite helpers ---------------------------------------------------

Var mean_sq_diff(Var a, Var b);  // mean((a-b)^2)
Var mean_sq(Var a);              // mean(a^2)
Var mean_dot(Var a, Var b);      // mean(a.*b)

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(double c, Var a) { return scale(a, c); }

}  // namespace rsd::ad
