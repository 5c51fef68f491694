#include "rsd/autodiff.hpp"

#include "rsd/verify.hpp"
#include "rsd/rng.hpp"

#include <doctest.h>

using namespace rsd;

namespace {

// Composite graph exercising one op inside a smooth scalar reduction.
double run_fd(const std::function<ad::Var(ad::Tape&, ad::Var)>& body,
              int n, std::uint64_t seed = 7) {
  Rng rng(seed);
  Vec x = rng.normal_vec(n);
  auto loss = [&](const Vec& p) {
    ad::Tape t;
    ad::Var xp = t.leaf(p);
    return t.scalar(body(t, xp));
  };
  ad::Tape t;
  ad::Var xp = t.leaf(x);
  ad::Var out = body(t, xp);
  t.backward(out);
  auto rep = verify::fd_check(loss, x, t.grad(xp));
  return rep.max_rel_err;
}

}  // namespace

TEST_CASE("elementwise and reduction ops pass finite differences") {
  CHECK(run_fd([](ad::Tape& t, ad::Var x) {
          ad::Var y = ad::tanh_(ad::scale(x, 1.3));
          ad::Var z = ad::cmul(y, ad::add(x, y));
          return ad::mean_sq(ad::sub(z, ad::scale(x, 0.2)));
        }, 12) <= 1e-6);

  CHECK(run_fd([](ad::Tape& t, ad::Var x) {
          ad::Var a = ad::segment(x, 0, 4);
          ad::Var b = ad::segment(x, 4, 4);
          return ad::add(ad::dot(a, b), ad::mean(ad::cmul(a, a)));
        }, 8) <= 1e-6);

  CHECK(run_fd([](ad::Tape& t, ad::Var x) {
          ad::Var c = ad::concat({x, ad::tanh_(x)});
          return ad::sum(ad::cmul(c, c));
        }, 5) <= 1e-6);
}

TEST_CASE("dense layer forward and gradients") {
  Rng rng(11);
  const int rows = 3, cols = 4;
  Vec W = rng.normal_vec(rows * cols), x = rng.normal_vec(cols),
      b = rng.normal_vec(rows);
  ad::Tape t;
  ad::Var vw = t.leaf(W), vx = t.leaf(x), vb = t.leaf(b);
  ad::Var y = ad::dense(vw, vx, vb, rows, cols);
  // forward agrees with Eigen
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>
      Wm(W.data(), rows, cols);
  CHECK((t.val(y) - (Wm * x + b)).cwiseAbs().maxCoeff() <= 1e-14);

  ad::Var loss = ad::mean_sq(y);
  t.backward(loss);
  auto lw = [&](const Vec& p) {
    ad::Tape tt;
    ad::Var yy = ad::dense(tt.leaf(p), tt.leaf(x), tt.leaf(b), rows, cols);
    return tt.scalar(ad::mean_sq(yy));
  };
  CHECK(verify::fd_check(lw, W, t.grad(vw)).max_rel_err <= 1e-6);
  auto lx = [&](const Vec& p) {
    ad::Tape tt;
    ad::Var yy = ad::dense(tt.leaf(W), tt.leaf(p), tt.leaf(b), rows, cols);
    return tt.scalar(ad::mean_sq(yy));
  };
  CHECK(verify::fd_check(lx, x, t.grad(vx)).max_rel_err <= 1e-6);
}

TEST_CASE("conv2d forward matches a direct loop") {
  Rng rng(13);
  const Shape in{2, 4, 4};
  const int oc = 3, k = 3, pad = 1;
  Vec x = rng.normal_vec(in.size());
  Vec w = rng.normal_vec(oc * in.c * k * k);
  Vec b = rng.normal_vec(oc);
  ad::Tape t;
  ad::Var y =
      ad::conv2d(t.leaf(x), t.leaf(w), t.leaf(b), in, oc, k);
  // direct convolution
  for (int o = 0; o < oc; ++o)
    for (int i = 0; i < in.h; ++i)
      for (int j = 0; j < in.w; ++j) {
        double acc = b[o];
        for (int c = 0; c < in.c; ++c)
          for (int ki = 0; ki < k; ++ki)
            for (int kj = 0; kj < k; ++kj) {
              const int ii = i + ki - pad, jj = j + kj - pad;
              if (ii < 0 || ii >= in.h || jj < 0 || jj >= in.w) continue;
              acc += w[((o * in.c + c) * k + ki) * k + kj] *
                     x[(c * in.h + ii) * in.w + jj];
            }
        CHECK(t.val(y)[(o * in.h + i) * in.w + j] ==
              doctest::Approx(acc).epsilon(1e-12));
      }
}

TEST_CASE("conv2d, pooling and normalization pass finite differences") {
  const Shape in{2, 4, 4};
  const int oc = 3;
  Rng rng(17);
  Vec w = rng.normal_vec(oc * in.c * 9), b = rng.normal_vec(oc);

  CHECK(run_fd([&](ad::Tape& t, ad::Var x) {
          ad::Var y = ad::conv2d(x, t.constant(w), t.constant(b), in, oc, 3);
          return ad::mean_sq(ad::tanh_(y));
        }, in.size()) <= 1e-6);

  // gradient w.r.t. conv weights
  Vec x = rng.normal_vec(in.size());
  CHECK(run_fd([&](ad::Tape& t, ad::Var wv) {
          ad::Var y = ad::conv2d(t.constant(x), wv, t.constant(b), in, oc, 3);
          return ad::mean_sq(y);
        }, static_cast<int>(w.size()), 19) <= 1e-6);

  CHECK(run_fd([&](ad::Tape& t, ad::Var xv) {
          ad::Var p = ad::avgpool2(xv, in);
          ad::Var u = ad::upsample2(p, Shape{in.c, in.h / 2, in.w / 2});
          return ad::mean_sq_diff(u, xv);
        }, in.size()) <= 1e-6);

  CHECK(run_fd([&](ad::Tape& t, ad::Var xv) {
          return ad::mean_sq(ad::normalize_channels(xv, in));
        }, in.size()) <= 1e-6);

  CHECK(run_fd([&](ad::Tape& t, ad::Var xv) {
          ad::Var cm = ad::channel_mean(xv, in);
          ad::Var bc = ad::broadcast_channels(cm, in);
          return ad::mean_sq_diff(bc, xv);
        }, in.size()) <= 1e-6);
}

TEST_CASE("bce with logits values and gradient") {
  ad::Tape t;
  ad::Var zero = t.leaf(Vec::Zero(1));
  // D = 0.5: both targets give log 2
  CHECK(t.scalar(ad::bce_with_logits_mean(zero, Vec::Ones(1))) ==
        doctest::Approx(std::log(2.0)));
  CHECK(t.scalar(ad::bce_with_logits_mean(zero, Vec::Zero(1))) ==
        doctest::Approx(std::log(2.0)));

  CHECK(run_fd([](ad::Tape& tt, ad::Var x) {
          Vec targets(3);
          targets << 1, 0, 1;
          return ad::bce_with_logits_mean(x, targets);
        }, 3) <= 1e-6);
}

TEST_CASE("detach blocks gradient flow") {
  Rng rng(23);
  Vec x = rng.normal_vec(4);
  ad::Tape t;
  ad::Var vx = t.leaf(x);
  ad::Var loss = ad::mean_dot(ad::detach(vx), vx);
  t.backward(loss);
  // gradient is detached_value / n, not 2x/n
  CHECK((t.grad(vx) - x / 4.0).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("backward accumulates over shared subgraphs") {
  ad::Tape t;
  ad::Var x = t.leaf(Vec::Constant(1, 3.0));
  ad::Var y = ad::cmul(x, x);       // x^2
  ad::Var z = ad::add(y, y);        // 2 x^2
  t.backward(ad::sum(z));
  CHECK(t.grad(x)[0] == doctest::Approx(12.0));
}
