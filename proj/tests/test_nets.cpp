#include "rsd/nets.hpp"

#include "rsd/verify.hpp"
#include "rsd/rng.hpp"

#include <doctest.h>

using namespace rsd;

namespace {

ArchSpec conv_spec(int c = 1, int hw = 16, int base = 4) {
  ArchSpec a;
  a.kind = NetKind::kConv;
  a.data = Shape{c, hw, hw};
  a.base_width = base;
  a.temb_dim = 8;
  return a;
}

ArchSpec mlp_spec(int d = 3, int hidden = 16) {
  ArchSpec a;
  a.kind = NetKind::kMlp;
  a.data = Shape{d, 1, 1};
  a.base_width = hidden;
  a.temb_dim = 8;
  return a;
}

}  // namespace

TEST_CASE("arch spec round-trips through its text form") {
  ArchSpec a = conv_spec(2, 32, 16);
  a.noise_input = true;
  ArchSpec b = ArchSpec::parse(a.str());
  CHECK(b.kind == a.kind);
  CHECK(b.data == a.data);
  CHECK(b.base_width == a.base_width);
  CHECK(b.temb_dim == a.temb_dim);
  CHECK(b.noise_input == a.noise_input);
  CHECK_THROWS_AS(ArchSpec::parse("kind=conv bogus=1"), FormatError);
}

TEST_CASE("predictor output shape and seeded determinism") {
  auto net = make_toy_predictor(conv_spec(1, 16), 42);
  Rng rng(1);
  Vec x = rng.normal_vec(16 * 16), y = rng.normal_vec(16 * 16);
  Vec out = net.predict(x, y, 3);
  CHECK(out.size() == 16 * 16);
  for (int i = 0; i < out.size(); ++i) CHECK(std::isfinite(out[i]));

  auto net2 = make_toy_predictor(conv_spec(1, 16), 42);
  CHECK(net.params() == net2.params());
  auto net3 = make_toy_predictor(conv_spec(1, 16), 43);
  CHECK(net.params() != net3.params());

  CHECK_THROWS_AS(make_toy_predictor(conv_spec(1, 15), 1), ConfigError);
}

TEST_CASE("finite-difference gradient check on a random quadratic loss") {
  for (const ArchSpec& spec : {conv_spec(1, 8, 3), mlp_spec(2, 10)}) {
    auto net = make_toy_predictor(spec, 7);
    Rng rng(2);
    const int n = spec.data.size();
    Vec x = rng.normal_vec(n), y = rng.normal_vec(n);
    Vec target = rng.normal_vec(n);
    const int t = 2;

    auto loss = [&](const Vec& p) {
      ad::Tape tape;
      ad::Var pv = tape.leaf(p);
      auto b = net.build(tape, pv, tape.constant(x), tape.constant(y), t);
      return tape.scalar(ad::mean_sq_diff(b.out, tape.constant(target)));
    };
    ad::Tape tape;
    ad::Var pv = tape.leaf(net.params());
    auto b = net.build(tape, pv, tape.constant(x), tape.constant(y), t);
    tape.backward(ad::mean_sq_diff(b.out, tape.constant(target)));
    auto rep = verify::fd_check(loss, net.params(), tape.grad(pv), 1e-4, 80);
    CHECK(rep.max_rel_err <= 1e-3);
  }
}

TEST_CASE("promotion preserves the function and zero-inits the noise path") {
  for (const ArchSpec& spec : {conv_spec(1, 8, 3), mlp_spec(2, 10)}) {
    auto f = make_toy_predictor(spec, 11);
    auto g = promote_to_generator(f);
    CHECK(g.spec().noise_input);
    Rng rng(3);
    const int n = spec.data.size();
    Vec x = rng.normal_vec(n), y = rng.normal_vec(n);
    Vec base = f.predict(x, y, 2);
    Vec with_zero = g.generate(x, 2, y, Vec::Zero(n));
    Vec with_noise = g.generate(x, 2, y, rng.normal_vec(n));
    CHECK((with_zero - base).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK((with_noise - base).cwiseAbs().maxCoeff() <= 1e-6);

    // the noise pathway still receives gradient
    Vec eps = rng.normal_vec(n);
    auto loss = [&](const Vec& p) {
      PredictorNet tmp = g;
      tmp.params() = p;
      ad::Tape tape;
      ad::Var pv = tape.leaf(p);
      auto b = tmp.build(tape, pv, tape.constant(x), tape.constant(y), 2,
                         tape.constant(eps));
      return tape.scalar(ad::mean_sq(b.out));
    };
    ad::Tape tape;
    ad::Var pv = tape.leaf(g.params());
    auto b = g.build(tape, pv, tape.constant(x), tape.constant(y), 2,
                     tape.constant(eps));
    tape.backward(ad::mean_sq(b.out));
    const int off = g.segment_offset(spec.kind == NetKind::kConv
                                         ? "conv_in_w"
                                         : "l1_w");
    const int sz = g.segment_size(spec.kind == NetKind::kConv ? "conv_in_w"
                                                              : "l1_w");
    const Vec gseg = tape.grad(pv).segment(off, sz);
    CHECK(gseg.cwiseAbs().maxCoeff() > 0.0);
    auto rep = verify::fd_check(loss, g.params(), tape.grad(pv), 1e-4, 60);
    CHECK(rep.max_rel_err <= 1e-3);

    // after a step touching the noise pathway, eps matters
    PredictorNet moved = g;
    moved.params() += 0.05 * tape.grad(pv);
    Vec a0 = moved.generate(x, 2, y, Vec::Zero(n));
    Vec a1 = moved.generate(x, 2, y, eps);
    CHECK((a0 - a1).cwiseAbs().maxCoeff() > 1e-9);
  }
}

TEST_CASE("encoder features have the declared shape") {
  auto net = make_toy_predictor(conv_spec(1, 16, 4), 5);
  Rng rng(9);
  Vec x = rng.normal_vec(256), y = rng.normal_vec(256);
  Vec feat = net.encoder_features(x, y, 0);
  CHECK(feat.size() == net.feature_shape().size());
  CHECK(net.feature_shape() == Shape{8, 8, 8});
}

TEST_CASE("discriminator head produces finite logits and gradients") {
  auto net = make_toy_predictor(conv_spec(1, 8, 3), 21);
  DiscriminatorHead disc(net.feature_shape(), NetKind::kConv, 33);
  Rng rng(4);
  Vec feat = rng.normal_vec(net.feature_shape().size());
  const double l = disc.logit(feat);
  CHECK(std::isfinite(l));

  auto loss = [&](const Vec& p) {
    ad::Tape tape;
    ad::Var pv = tape.leaf(p);
    ad::Var logit = disc.build_logit(tape, pv, tape.constant(feat));
    return tape.scalar(ad::bce_with_logits_mean(logit, Vec::Ones(1)));
  };
  ad::Tape tape;
  ad::Var pv = tape.leaf(disc.params());
  ad::Var logit = disc.build_logit(tape, pv, tape.constant(feat));
  tape.backward(ad::bce_with_logits_mean(logit, Vec::Ones(1)));
  auto rep = verify::fd_check(loss, disc.params(), tape.grad(pv), 1e-4, 60);
  CHECK(rep.max_rel_err <= 1e-3);
}

TEST_CASE("perceptual proxy is a symmetric premetric") {
  PerceptualProxy proxy(Shape{1, 8, 8}, 4, 99);
  Rng rng(6);
  Vec a = rng.normal_vec(64), b = rng.normal_vec(64);
  CHECK(proxy.distance(a, a) == doctest::Approx(0.0));
  CHECK(proxy.distance(a, b) == doctest::Approx(proxy.distance(b, a)));
  CHECK(proxy.distance(a, b) > 0.0);

  // gradient w.r.t. the second argument
  auto loss = [&](const Vec& p) {
    ad::Tape tape;
    return tape.scalar(proxy.build_distance(tape, tape.constant(a),
                                            tape.leaf(p)));
  };
  ad::Tape tape;
  ad::Var vb = tape.leaf(b);
  tape.backward(proxy.build_distance(tape, tape.constant(a), vb));
  auto rep = verify::fd_check(loss, b, tape.grad(vb), 1e-4, 64);
  CHECK(rep.max_rel_err <= 1e-3);
}

TEST_CASE("proxy distance decreases along interpolation toward the target") {
  PerceptualProxy proxy(Shape{1, 8, 8}, 6, 123);
  Rng rng(31);
  for (int rep = 0; rep < 8; ++rep) {
    // smooth random images, as produced by the data pipeline
    Vec a(64), b(64);
    const double fa = rng.uniform_in(0.2, 1.0), fb = rng.uniform_in(0.2, 1.0);
    const double pa = rng.uniform_in(0, 6), pb = rng.uniform_in(0, 6);
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) {
        a[i * 8 + j] = 0.8 * std::sin(fa * i + pa) * std::cos(fa * j);
        b[i * 8 + j] = 0.8 * std::sin(fb * j + pb) * std::cos(fb * i);
      }
    double prev = proxy.distance(a, b);
    for (int k = 1; k <= 5; ++k) {
      const double lam = k / 5.0;
      Vec mid = (1 - lam) * b + lam * a;
      const double d = proxy.distance(a, mid);
      CHECK(d <= prev + 1e-12);
      prev = d;
    }
    CHECK(prev == doctest::Approx(0.0));
  }
}

TEST_CASE("build_features matches the features returned by build") {
  auto net = make_toy_predictor(conv_spec(1, 8, 3), 55);
  Rng rng(56);
  Vec x = rng.normal_vec(64), y = rng.normal_vec(64);
  ad::Tape tape;
  ad::Var p = tape.constant(net.params());
  auto b = net.build(tape, p, tape.constant(x), tape.constant(y), 2);
  ad::Var f =
      net.build_features(tape, p, tape.constant(x), tape.constant(y), 2);
  CHECK(tape.val(b.features) == tape.val(f));
}
