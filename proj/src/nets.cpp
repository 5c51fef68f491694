#include "rsd/nets.hpp"

#include <cmath>
#include <sstream>

namespace rsd {

namespace {

Vec seeded_normal(Rng& rng, int n, double std) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = std * rng.normal();
  return v;
}

std::string kind_str(NetKind k) { return k == NetKind::kConv ? "conv" : "mlp"; }

NetKind parse_kind(const std::string& s) {
  if (s == "conv") return NetKind::kConv;
  if (s == "mlp") return NetKind::kMlp;
  throw FormatError("unknown net kind: " + s);
}

}  // namespace

std::string ArchSpec::str() const {
  std::ostringstream os;
  os << "kind=" << kind_str(kind) << " c=" << data.c << " h=" << data.h
     << " w=" << data.w << " base=" << base_width << " temb=" << temb_dim
     << " noise=" << (noise_input ? 1 : 0);
  return os.str();
}

ArchSpec ArchSpec::parse(const std::string& text) {
  ArchSpec a;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos)
      throw FormatError("bad arch token: " + tok);
    const std::string key = tok.substr(0, eq);
    const std::string val = tok.substr(eq + 1);
    if (key == "kind")
      a.kind = parse_kind(val);
    else if (key == "c")
      a.data.c = std::stoi(val);
    else if (key == "h")
      a.data.h = std::stoi(val);
    else if (key == "w")
      a.data.w = std::stoi(val);
    else if (key == "base")
      a.base_width = std::stoi(val);
    else if (key == "temb")
      a.temb_dim = std::stoi(val);
    else if (key == "noise")
      a.noise_input = val != "0";
    else
      throw FormatError("unknown arch key: " + key);
  }
  return a;
}

Vec timestep_embedding(int t, int dim) {
  if (dim < 2 || dim % 2 != 0)
    throw ConfigError("timestep_embedding: dim must be even and >= 2");
  Vec e(dim);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    e[2 * i] = std::sin(t * freq);
    e[2 * i + 1] = std::cos(t * freq);
  }
  return e;
}

PredictorNet::PredictorNet(const ArchSpec& spec, std::uint64_t init_seed)
    : spec_(spec) {
  if (spec_.kind == NetKind::kConv) {
    if (spec_.data.h % 2 != 0 || spec_.data.w % 2 != 0)
      throw ConfigError("PredictorNet: conv variant needs even h, w");
    if (spec_.data.h < 2 || spec_.data.c < 1)
      throw ConfigError("PredictorNet: inconsistent data shape");
  }
  if (spec_.base_width < 1)
    throw ConfigError("PredictorNet: base_width must be >= 1");
  layout();
  Rng rng(init_seed);
  params_.resize(segments_.empty() ? 0
                                   : segments_.back().offset +
                                         segments_.back().size);
  for (const auto& seg : segments_) {
    if (seg.name.ends_with("_b")) {
      params_.segment(seg.offset, seg.size).setZero();
      continue;
    }
    // fan-in scaled init; fan recorded during layout via name lookup below
    int fan = 1;
    if (spec_.kind == NetKind::kConv) {
      const int c = spec_.data.c, F = spec_.base_width;
      const int cin = 2 * c + (spec_.noise_input ? c : 0);
      if (seg.name == "conv_in_w") fan = cin * 9;
      if (seg.name == "enc_w") fan = F * 9;
      if (seg.name == "temb_w") fan = spec_.temb_dim;
      if (seg.name == "mid_w") fan = 2 * F * 9;
      if (seg.name == "dec_w") fan = 3 * F * 9;
      if (seg.name == "out_w") fan = F * 9;
    } else {
      const int d = spec_.data.size(), H = spec_.base_width;
      const int in_dim = 2 * d + (spec_.noise_input ? d : 0) + spec_.temb_dim;
      if (seg.name == "l1_w") fan = in_dim;
      if (seg.name == "l2_w") fan = H;
      if (seg.name == "l3_w") fan = H;
    }
    params_.segment(seg.offset, seg.size) =
        seeded_normal(rng, seg.size, 1.0 / std::sqrt(double(fan)));
  }
  // Keep the output stage small so the residual start is near-identity.
  params_.segment(segment_offset(spec_.kind == NetKind::kConv ? "out_w"
                                                              : "l3_w"),
                  segment_size(spec_.kind == NetKind::kConv ? "out_w"
                                                            : "l3_w")) *=
      0.1;
}

void PredictorNet::layout() {
  segments_.clear();
  int at = 0;
  auto push = [&](const std::string& name, int size) {
    segments_.push_back({name, at, size});
    at += size;
  };
  if (spec_.kind == NetKind::kConv) {
    const int c = spec_.data.c, F = spec_.base_width, TE = spec_.temb_dim;
    const int cin = 2 * c + (spec_.noise_input ? c : 0);
    push("conv_in_w", F * cin * 9);
    push("conv_in_b", F);
    push("enc_w", 2 * F * F * 9);
    push("enc_b", 2 * F);
    push("temb_w", 2 * F * TE);
    push("temb_b", 2 * F);
    push("mid_w", 2 * F * 2 * F * 9);
    push("mid_b", 2 * F);
    push("dec_w", F * 3 * F * 9);
    push("dec_b", F);
    push("out_w", c * F * 9);
    push("out_b", c);
  } else {
    const int d = spec_.data.size(), H = spec_.base_width,
              TE = spec_.temb_dim;
    const int in_dim = 2 * d + (spec_.noise_input ? d : 0) + TE;
    push("l1_w", H * in_dim);
    push("l1_b", H);
    push("l2_w", H * H);
    push("l2_b", H);
    push("l3_w", d * H);
    push("l3_b", d);
  }
}

int PredictorNet::segment_offset(const std::string& name) const {
  for (const auto& s : segments_)
    if (s.name == name) return s.offset;
  throw ConfigError("no segment " + name);
}

int PredictorNet::segment_size(const std::string& name) const {
  for (const auto& s : segments_)
    if (s.name == name) return s.size;
  throw ConfigError("no segment " + name);
}

Shape PredictorNet::feature_shape() const {
  if (spec_.kind == NetKind::kConv)
    return Shape{2 * spec_.base_width, spec_.data.h / 2, spec_.data.w / 2};
  return Shape{spec_.base_width, 1, 1};
}

PredictorNet::Built PredictorNet::build(ad::Tape& tape, ad::Var p,
                                        ad::Var x_t, ad::Var y0, int t,
                                        ad::Var eps) const {
  auto seg = [&](const char* name) {
    return ad::segment(p, segment_offset(name), segment_size(name));
  };
  ad::Var skip;
  if (spec_.kind == NetKind::kConv) {
    const int c = spec_.data.c, F = spec_.base_width;
    const Shape s0{F, spec_.data.h, spec_.data.w};
    const Shape bott{2 * F, spec_.data.h / 2, spec_.data.w / 2};
    const Shape cat{3 * F, spec_.data.h, spec_.data.w};

    ad::Var feat = build_features(tape, p, x_t, y0, t, eps, &skip);
    ad::Var u = ad::upsample2(feat, bott);
    ad::Var d = ad::tanh_(ad::conv2d(ad::concat({u, skip}), seg("dec_w"),
                                     seg("dec_b"), cat, F, 3));
    ad::Var out = ad::conv2d(d, seg("out_w"), seg("out_b"), s0, c, 3);
    return Built{ad::add(out, x_t), feat};
  }

  const int d = spec_.data.size(), H = spec_.base_width;
  ad::Var h2 = build_features(tape, p, x_t, y0, t, eps, &skip);
  ad::Var out = ad::dense(seg("l3_w"), h2, seg("l3_b"), d, H);
  return Built{ad::add(out, x_t), h2};
}

ad::Var PredictorNet::build_features(ad::Tape& tape, ad::Var p, ad::Var x_t,
                                     ad::Var y0, int t, ad::Var eps,
                                     ad::Var* skip_out) const {
  if (spec_.noise_input && !eps.valid())
    throw ConfigError("PredictorNet::build: noise input required");
  if (!spec_.noise_input && eps.valid())
    throw ConfigError("PredictorNet::build: unexpected noise input");
  auto seg = [&](const char* name) {
    return ad::segment(p, segment_offset(name), segment_size(name));
  };
  ad::Var emb = tape.constant(timestep_embedding(t, spec_.temb_dim));

  if (spec_.kind == NetKind::kConv) {
    const int c = spec_.data.c, F = spec_.base_width;
    const int cin = 2 * c + (spec_.noise_input ? c : 0);
    const Shape in{cin, spec_.data.h, spec_.data.w};
    const Shape s0{F, spec_.data.h, spec_.data.w};
    const Shape half{F, spec_.data.h / 2, spec_.data.w / 2};
    const Shape bott{2 * F, spec_.data.h / 2, spec_.data.w / 2};

    std::vector<ad::Var> ins{x_t, y0};
    if (spec_.noise_input) ins.push_back(eps);
    ad::Var input = ad::concat(ins);
    ad::Var h0 = ad::tanh_(
        ad::conv2d(input, seg("conv_in_w"), seg("conv_in_b"), in, F, 3));
    ad::Var pdn = ad::avgpool2(h0, s0);
    ad::Var e = ad::tanh_(
        ad::conv2d(pdn, seg("enc_w"), seg("enc_b"), half, 2 * F, 3));
    ad::Var temb =
        ad::dense(seg("temb_w"), emb, seg("temb_b"), 2 * F, spec_.temb_dim);
    e = ad::add(e, ad::broadcast_channels(temb, bott));
    if (skip_out) *skip_out = h0;
    return ad::tanh_(ad::conv2d(e, seg("mid_w"), seg("mid_b"), bott, 2 * F,
                                3));
  }

  const int d = spec_.data.size(), H = spec_.base_width;
  const int in_dim = 2 * d + (spec_.noise_input ? d : 0) + spec_.temb_dim;
  std::vector<ad::Var> ins{x_t, y0};
  if (spec_.noise_input) ins.push_back(eps);
  ins.push_back(emb);
  ad::Var input = ad::concat(ins);
  ad::Var h1 =
      ad::tanh_(ad::dense(seg("l1_w"), input, seg("l1_b"), H, in_dim));
  if (skip_out) *skip_out = h1;
  return ad::tanh_(ad::dense(seg("l2_w"), h1, seg("l2_b"), H, H));
}

Vec PredictorNet::predict(const Vec& x_t, const Vec& y0, int t) const {
  ad::Tape tape;
  ad::Var p = tape.constant(params_);
  auto b = build(tape, p, tape.constant(x_t), tape.constant(y0), t);
  return tape.val(b.out);
}

Vec PredictorNet::generate(const Vec& x_t, int t, const Vec& y0,
                           const Vec& eps) const {
  ad::Tape tape;
  ad::Var p = tape.constant(params_);
  auto b = build(tape, p, tape.constant(x_t), tape.constant(y0), t,
                 tape.constant(eps));
  return tape.val(b.out);
}

Vec PredictorNet::encoder_features(const Vec& x, const Vec& y0,
                                   int t) const {
  ad::Tape tape;
  ad::Var p = tape.constant(params_);
  ad::Var f =
      build_features(tape, p, tape.constant(x), tape.constant(y0), t);
  return tape.val(f);
}

PredictorNet make_toy_predictor(const ArchSpec& spec, std::uint64_t seed) {
  return PredictorNet(spec, seed);
}

PredictorNet promote_to_generator(const PredictorNet& f) {
  if (f.spec().noise_input)
    throw ConfigError("promote_to_generator: already noise-conditioned");
  ArchSpec gs = f.spec();
  gs.noise_input = true;
  PredictorNet g(gs, /*init_seed=*/0);
  g.params().setZero();

  if (gs.kind == NetKind::kConv) {
    const int c = gs.data.c, F = gs.base_width;
    // First conv grows from 2c to 3c input channels; new block stays zero.
    const int po = f.segment_offset("conv_in_w");
    const int go = g.segment_offset("conv_in_w");
    for (int oc = 0; oc < F; ++oc)
      g.params().segment(go + oc * 3 * c * 9, 2 * c * 9) =
          f.params().segment(po + oc * 2 * c * 9, 2 * c * 9);
    for (const auto& seg : f.segments())
      if (seg.name != "conv_in_w")
        g.params().segment(g.segment_offset(seg.name), seg.size) =
            f.params().segment(seg.offset, seg.size);
  } else {
    const int d = gs.data.size(), TE = gs.temb_dim;
    const int H = gs.base_width;
    const int pin = 2 * d + TE, gin = 3 * d + TE;
    const int po = f.segment_offset("l1_w");
    const int go = g.segment_offset("l1_w");
    for (int r = 0; r < H; ++r) {
      g.params().segment(go + r * gin, 2 * d) =
          f.params().segment(po + r * pin, 2 * d);
      g.params().segment(go + r * gin + 3 * d, TE) =
          f.params().segment(po + r * pin + 2 * d, TE);
    }
    for (const auto& seg : f.segments())
      if (seg.name != "l1_w")
        g.params().segment(g.segment_offset(seg.name), seg.size) =
            f.params().segment(seg.offset, seg.size);
  }
  return g;
}

DiscriminatorHead::DiscriminatorHead(Shape feature_shape, NetKind kind,
                                     std::uint64_t seed)
    : feat_(feature_shape), kind_(kind) {
  width_ = std::max(4, feat_.c / 2);
  Rng rng(seed);
  if (kind_ == NetKind::kConv) {
    const int C = feat_.c, W = width_;
    params_.resize(W * C * 9 + W + W + 1);
    int at = 0;
    params_.segment(at, W * C * 9) =
        seeded_normal(rng, W * C * 9, 1.0 / std::sqrt(double(C * 9)));
    at += W * C * 9;
    params_.segment(at, W).setZero();  // conv bias
    at += W;
    params_.segment(at, W) =
        seeded_normal(rng, W, 1.0 / std::sqrt(double(W)));
    at += W;
    params_[at] = 0.0;  // logit bias
  } else {
    const int H = feat_.size(), W = std::max(4, H / 2);
    width_ = W;
    params_.resize(W * H + W + W + 1);
    int at = 0;
    params_.segment(at, W * H) =
        seeded_normal(rng, W * H, 1.0 / std::sqrt(double(H)));
    at += W * H;
    params_.segment(at, W).setZero();
    at += W;
    params_.segment(at, W) =
        seeded_normal(rng, W, 1.0 / std::sqrt(double(W)));
    at += W;
    params_[at] = 0.0;
  }
}

ad::Var DiscriminatorHead::build_logit(ad::Tape&, ad::Var p,
                                       ad::Var features) const {
  if (kind_ == NetKind::kConv) {
    const int C = feat_.c, W = width_;
    int at = 0;
    ad::Var cw = ad::segment(p, at, W * C * 9);
    at += W * C * 9;
    ad::Var cb = ad::segment(p, at, W);
    at += W;
    ad::Var lw = ad::segment(p, at, W);
    at += W;
    ad::Var lb = ad::segment(p, at, 1);
    ad::Var h = ad::tanh_(ad::conv2d(features, cw, cb, feat_, W, 3));
    ad::Var pooled = ad::channel_mean(h, Shape{W, feat_.h, feat_.w});
    return ad::add(ad::dot(lw, pooled), lb);
  }
  const int H = feat_.size(), W = width_;
  int at = 0;
  ad::Var w1 = ad::segment(p, at, W * H);
  at += W * H;
  ad::Var b1 = ad::segment(p, at, W);
  at += W;
  ad::Var w2 = ad::segment(p, at, W);
  at += W;
  ad::Var b2 = ad::segment(p, at, 1);
  ad::Var h = ad::tanh_(ad::dense(w1, features, b1, W, H));
  return ad::add(ad::dot(w2, h), b2);
}

double DiscriminatorHead::logit(const Vec& features) const {
  ad::Tape tape;
  ad::Var p = tape.constant(params_);
  return tape.scalar(build_logit(tape, p, tape.constant(features)));
}

std::string DiscriminatorHead::arch_text() const {
  std::ostringstream os;
  os << "disc kind=" << kind_str(kind_) << " featc=" << feat_.c
     << " feath=" << feat_.h << " featw=" << feat_.w;
  return os.str();
}

PerceptualProxy::PerceptualProxy(Shape pixel_shape, int width,
                                 std::uint64_t seed)
    : shape_(pixel_shape), width_(width) {
  conv_ = shape_.h % 4 == 0 && shape_.w % 4 == 0 && shape_.h >= 4;
  Rng rng(seed);
  offsets_.clear();
  std::vector<std::pair<int, int>> layers;  // (size, fan_in)
  if (conv_) {
    layers = {{width_ * shape_.c * 9, shape_.c * 9},
              {width_ * width_ * 9, width_ * 9},
              {width_ * width_ * 9, width_ * 9}};
  } else {
    const int d = shape_.size();
    layers = {{width_ * d, d}, {width_ * width_, width_},
              {width_ * width_, width_}};
  }
  int total = 0;
  for (auto& [sz, fan] : layers) {
    offsets_.push_back(total);
    total += sz;
  }
  params_.resize(total);
  for (size_t i = 0; i < layers.size(); ++i)
    params_.segment(offsets_[i], layers[i].first) = seeded_normal(
        rng, layers[i].first, 1.0 / std::sqrt(double(layers[i].second)));
}

std::vector<ad::Var> PerceptualProxy::features(ad::Tape& tape,
                                               ad::Var x) const {
  ad::Var p = tape.constant(params_);
  std::vector<ad::Var> out;
  if (conv_) {
    const Shape s1{width_, shape_.h, shape_.w};
    const Shape s2{width_, shape_.h / 2, shape_.w / 2};
    const Shape s3{width_, shape_.h / 4, shape_.w / 4};
    ad::Var zb = tape.constant(Vec::Zero(width_));
    ad::Var w1 = ad::segment(p, offsets_[0], width_ * shape_.c * 9);
    ad::Var f1 = ad::tanh_(ad::conv2d(x, w1, zb, shape_, width_, 3));
    out.push_back(ad::normalize_channels(f1, s1));
    ad::Var d1 = ad::avgpool2(f1, s1);
    ad::Var w2 = ad::segment(p, offsets_[1], width_ * width_ * 9);
    ad::Var f2 = ad::tanh_(ad::conv2d(d1, w2, zb, s2, width_, 3));
    out.push_back(ad::normalize_channels(f2, s2));
    ad::Var d2 = ad::avgpool2(f2, s2);
    ad::Var w3 = ad::segment(p, offsets_[2], width_ * width_ * 9);
    ad::Var f3 = ad::tanh_(ad::conv2d(d2, w3, zb, s3, width_, 3));
    out.push_back(ad::normalize_channels(f3, s3));
  } else {
    const int d = shape_.size();
    const Shape sf{width_, 1, 1};
    ad::Var zb = tape.constant(Vec::Zero(width_));
    ad::Var w1 = ad::segment(p, offsets_[0], width_ * d);
    ad::Var f1 = ad::tanh_(ad::dense(w1, x, zb, width_, d));
    out.push_back(ad::normalize_channels(f1, sf));
    ad::Var w2 = ad::segment(p, offsets_[1], width_ * width_);
    ad::Var f2 = ad::tanh_(ad::dense(w2, f1, zb, width_, width_));
    out.push_back(ad::normalize_channels(f2, sf));
    ad::Var w3 = ad::segment(p, offsets_[2], width_ * width_);
    ad::Var f3 = ad::tanh_(ad::dense(w3, f2, zb, width_, width_));
    out.push_back(ad::normalize_channels(f3, sf));
  }
  return out;
}

ad::Var PerceptualProxy::build_distance(ad::Tape& tape, ad::Var a,
                                        ad::Var b) const {
  auto fa = features(tape, a);
  auto fb = features(tape, b);
  ad::Var d = ad::mean_sq_diff(fa[0], fb[0]);
  for (size_t i = 1; i < fa.size(); ++i)
    d = ad::add(d, ad::mean_sq_diff(fa[i], fb[i]));
  return d;
}

double PerceptualProxy::distance(const Vec& a, const Vec& b) const {
  ad::Tape tape;
  return tape.scalar(
      build_distance(tape, tape.constant(a), tape.constant(b)));
}

}  // namespace rsd
