#include "rsd/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace rsd {

ToyKind parse_toy_kind(const std::string& s) {
  if (s == "gradients") return ToyKind::kGradients;
  if (s == "shapes") return ToyKind::kShapes;
  if (s == "texture") return ToyKind::kTexture;
  throw ConfigError("unknown toy data kind: " + s);
}

const char* to_string(ToyKind k) {
  switch (k) {
    case ToyKind::kGradients: return "gradients";
    case ToyKind::kShapes: return "shapes";
    default: return "texture";
  }
}

namespace {

// One plane wave with the given cycle count across the image.
void add_wave(Vec& img, int h, int w, double cycles, double angle,
              double phase, double amp) {
  const double kx = cycles * std::cos(angle) * 2.0 * M_PI / w;
  const double ky = cycles * std::sin(angle) * 2.0 * M_PI / h;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      img[i * w + j] += amp * std::sin(kx * j + ky * i + phase);
}

void add_blob(Vec& img, int h, int w, double cx, double cy, double rx,
              double ry, double value) {
  // Soft-edged ellipse; edge width ~1 pixel.
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const double dx = (j - cx) / rx, dy = (i - cy) / ry;
      const double d = std::sqrt(dx * dx + dy * dy);
      const double soft = 1.0 / (1.0 + std::exp((d - 1.0) * 2.0 * rx));
      img[i * w + j] += value * soft;
    }
}

Vec normalize_range(Vec img) {
  const double m = img.cwiseAbs().maxCoeff();
  if (m > 0) img *= 0.95 / m;
  return img;
}

Vec toy_channel(ToyKind kind, int h, int w, Rng& rng) {
  Vec img = Vec::Zero(h * w);
  switch (kind) {
    case ToyKind::kGradients: {
      const int n = 2 + rng.uniform_int(0, 1);
      for (int k = 0; k < n; ++k)
        add_wave(img, h, w, rng.uniform_in(0.3, 1.6),
                 rng.uniform_in(0.0, M_PI), rng.uniform_in(0.0, 2 * M_PI),
                 rng.uniform_in(0.4, 1.0));
      break;
    }
    case ToyKind::kShapes: {
      add_wave(img, h, w, rng.uniform_in(0.3, 0.8), rng.uniform_in(0.0, M_PI),
               rng.uniform_in(0.0, 2 * M_PI), 0.35);
      const int n = 2 + rng.uniform_int(0, 2);
      for (int k = 0; k < n; ++k)
        add_blob(img, h, w, rng.uniform_in(0.15, 0.85) * w,
                 rng.uniform_in(0.15, 0.85) * h,
                 rng.uniform_in(0.08, 0.28) * w,
                 rng.uniform_in(0.08, 0.28) * h,
                 rng.uniform() < 0.5 ? -1.0 : 1.0);
      break;
    }
    case ToyKind::kTexture: {
      add_wave(img, h, w, rng.uniform_in(0.3, 1.2), rng.uniform_in(0.0, M_PI),
               rng.uniform_in(0.0, 2 * M_PI), 0.5);
      const int n = 3 + rng.uniform_int(0, 2);
      for (int k = 0; k < n; ++k)
        add_wave(img, h, w, rng.uniform_in(double(h) / 8.0, double(h) / 3.0),
                 rng.uniform_in(0.0, M_PI), rng.uniform_in(0.0, 2 * M_PI),
                 rng.uniform_in(0.25, 0.6));
      break;
    }
  }
  return normalize_range(std::move(img));
}

}  // namespace

std::vector<Vec> make_toy_hr(ToyKind kind, int size, int count,
                             std::uint64_t seed, int channels) {
  if (size != 16 && size != 32 && size != 64)
    throw ConfigError("make_toy_hr: size must be one of {16, 32, 64}");
  if (count < 1) throw ConfigError("make_toy_hr: count must be >= 1");
  Rng root(seed);
  std::vector<Vec> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    Rng rng = root.fork(i);
    Vec img(channels * size * size);
    for (int c = 0; c < channels; ++c)
      img.segment(static_cast<Eigen::Index>(c) * size * size, size * size) =
          toy_channel(kind, size, size, rng);
    out.push_back(std::move(img));
  }
  return out;
}

namespace {

Vec gaussian_blur(const Vec& x, Shape s, double sigma) {
  if (sigma <= 0.0) return x;
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  Vec k(2 * r + 1);
  for (int i = -r; i <= r; ++i) k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  k /= k.sum();
  auto clampi = [](int v, int lo, int hi) { return std::min(std::max(v, lo), hi); };
  Vec tmp(x.size()), out(x.size());
  for (int c = 0; c < s.c; ++c) {
    const int base = c * s.h * s.w;
    for (int i = 0; i < s.h; ++i)
      for (int j = 0; j < s.w; ++j) {
        double acc = 0;
        for (int d = -r; d <= r; ++d)
          acc += k[d + r] * x[base + i * s.w + clampi(j + d, 0, s.w - 1)];
        tmp[base + i * s.w + j] = acc;
      }
    for (int i = 0; i < s.h; ++i)
      for (int j = 0; j < s.w; ++j) {
        double acc = 0;
        for (int d = -r; d <= r; ++d)
          acc += k[d + r] * tmp[base + clampi(i + d, 0, s.h - 1) * s.w + j];
        out[base + i * s.w + j] = acc;
      }
  }
  return out;
}

Vec box_downsample(const Vec& x, Shape s, int f) {
  const int oh = s.h / f, ow = s.w / f;
  Vec out(s.c * oh * ow);
  for (int c = 0; c < s.c; ++c)
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) {
        double acc = 0;
        for (int di = 0; di < f; ++di)
          for (int dj = 0; dj < f; ++dj)
            acc += x[(c * s.h + i * f + di) * s.w + j * f + dj];
        out[(c * oh + i) * ow + j] = acc / (f * f);
      }
  return out;
}

Vec bilinear_upsample(const Vec& x, Shape s, int f) {
  if (f == 1) return x;
  const int oh = s.h * f, ow = s.w * f;
  Vec out(s.c * oh * ow);
  for (int c = 0; c < s.c; ++c)
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) {
        // align-corners=false mapping back to the source grid
        double sy = (i + 0.5) / f - 0.5, sx = (j + 0.5) / f - 0.5;
        sy = std::min(std::max(sy, 0.0), double(s.h - 1));
        sx = std::min(std::max(sx, 0.0), double(s.w - 1));
        const int y0i = static_cast<int>(std::floor(sy));
        const int x0i = static_cast<int>(std::floor(sx));
        const int y1i = std::min(y0i + 1, s.h - 1);
        const int x1i = std::min(x0i + 1, s.w - 1);
        const double fy = sy - y0i, fx = sx - x0i;
        auto at = [&](int ii, int jj) { return x[(c * s.h + ii) * s.w + jj]; };
        out[(c * oh + i) * ow + j] =
            (1 - fy) * ((1 - fx) * at(y0i, x0i) + fx * at(y0i, x1i)) +
            fy * ((1 - fx) * at(y1i, x0i) + fx * at(y1i, x1i));
      }
  return out;
}

Vec quantize8(const Vec& x) {
  Vec out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = std::min(std::max(x[i], -1.0), 1.0);
    out[i] = std::round((v + 1.0) * 0.5 * 255.0) / 255.0 * 2.0 - 1.0;
  }
  return out;
}

}  // namespace

Vec degrade(const DegradationSpec& spec, const Vec& x0, Shape shape,
            Rng& rng) {
  if (spec.downscale < 1) throw ConfigError("degrade: downscale must be >= 1");
  if (shape.h % spec.downscale != 0 || shape.w % spec.downscale != 0)
    throw ConfigError("degrade: HR size not divisible by downscale factor");
  const double sigma = rng.uniform_in(spec.blur_sigma_min, spec.blur_sigma_max);
  const double nsig =
      rng.uniform_in(spec.noise_sigma_min, spec.noise_sigma_max);

  Vec y = gaussian_blur(x0, shape, sigma);
  const Shape lo{shape.c, shape.h / spec.downscale, shape.w / spec.downscale};
  if (spec.downscale > 1) y = box_downsample(y, shape, spec.downscale);
  if (nsig > 0.0) y += nsig * rng.normal_vec(y.size());
  if (spec.quantize) y = quantize8(y);
  return bilinear_upsample(y, lo, spec.downscale);
}

Dataset make_paired_dataset(ToyKind kind, int size, int count,
                            const DegradationSpec& spec, std::uint64_t seed,
                            int channels) {
  Dataset ds;
  ds.shape = Shape{channels, size, size};
  auto hrs = make_toy_hr(kind, size, count, seed, channels);
  Rng droot(Rng::mix(seed, 0x9d5f));
  for (int i = 0; i < count; ++i) {
    Rng r = droot.fork(i);
    PairedSample p;
    p.shape = ds.shape;
    p.x0 = std::move(hrs[i]);
    p.y0 = degrade(spec, p.x0, ds.shape, r);
    ds.samples.push_back(std::move(p));
  }
  return ds;
}

namespace {

constexpr char kMagic[4] = {'R', 'S', 'D', 'T'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ofstream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::ifstream& is, const std::string& path,
                       const char* field) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  if (!is)
    throw FormatError(path + ": truncated while reading " + field +
                      " at offset " + std::to_string(is.tellg()));
  return v;
}

void write_f32(std::ofstream& os, const Vec& v) {
  std::vector<float> buf(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i)
    buf[i] = static_cast<float>(v[i]);
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

Vec read_f32(std::ifstream& is, Eigen::Index n, const std::string& path) {
  std::vector<float> buf(n);
  is.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(n * sizeof(float)));
  if (!is)
    throw FormatError(path + ": truncated tensor payload at offset " +
                      std::to_string(is.tellg()));
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = buf[i];
  return v;
}

}  // namespace

void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("save_dataset: cannot open " + path);
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  write_u32(os, static_cast<std::uint32_t>(ds.samples.size()));
  write_u32(os, static_cast<std::uint32_t>(ds.shape.c));
  write_u32(os, static_cast<std::uint32_t>(ds.shape.h));
  write_u32(os, static_cast<std::uint32_t>(ds.shape.w));
  for (const auto& s : ds.samples) {
    write_f32(os, s.x0);
    write_f32(os, s.y0);
  }
  if (!os) throw IoError("save_dataset: write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("load_dataset: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError(path + ": bad magic at offset 0");
  const auto version = read_u32(is, path, "version");
  if (version != kVersion)
    throw FormatError(path + ": unsupported version " +
                      std::to_string(version));
  const auto count = read_u32(is, path, "count");
  Dataset ds;
  ds.shape.c = static_cast<int>(read_u32(is, path, "channels"));
  ds.shape.h = static_cast<int>(read_u32(is, path, "height"));
  ds.shape.w = static_cast<int>(read_u32(is, path, "width"));
  const Eigen::Index n = ds.shape.size();
  if (n <= 0) throw FormatError(path + ": empty tensor dims in header");
  for (std::uint32_t i = 0; i < count; ++i) {
    PairedSample p;
    p.shape = ds.shape;
    p.x0 = read_f32(is, n, path);
    p.y0 = read_f32(is, n, path);
    ds.samples.push_back(std::move(p));
  }
  return ds;
}

PairedSample encode_pair(const LatentCodec& codec, const PairedSample& pix) {
  PairedSample out;
  out.x0 = codec.encode(pix.x0);
  out.y0 = codec.encode(pix.y0);
  out.shape = codec.model_shape(pix.shape);
  return out;
}

TinyAutoencoderCodec::TinyAutoencoderCodec(Shape pixel_shape, int width,
                                           int latent_c, std::uint64_t seed)
    : pix_(pixel_shape), width_(width) {
  if (pix_.h % 2 != 0 || pix_.w % 2 != 0)
    throw ConfigError("TinyAutoencoderCodec: even spatial dims required");
  lat_ = Shape{latent_c, pix_.h / 2, pix_.w / 2};
  Rng rng(seed);
  // enc: conv c->W, conv W->latent_c (after pool); dec: conv latent_c->W,
  // conv W->c (after upsample). Biases zero, folded into the weight list.
  const int sizes[4] = {width_ * pix_.c * 9, latent_c * width_ * 9,
                        width_ * latent_c * 9, pix_.c * width_ * 9};
  const int fans[4] = {pix_.c * 9, width_ * 9, latent_c * 9, width_ * 9};
  int total = 0;
  for (int i = 0; i < 4; ++i) {
    off_.push_back(total);
    total += sizes[i];
  }
  params_.resize(total);
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < sizes[i]; ++k)
      params_[off_[i] + k] = rng.normal() / std::sqrt(double(fans[i]));
}

Shape TinyAutoencoderCodec::model_shape(Shape) const { return lat_; }

ad::Var TinyAutoencoderCodec::build_encode(ad::Tape& t, ad::Var x) const {
  ad::Var p = t.constant(params_);
  const int lc = lat_.c;
  ad::Var zb1 = t.constant(Vec::Zero(width_));
  ad::Var zb2 = t.constant(Vec::Zero(lc));
  ad::Var w1 = ad::segment(p, off_[0], width_ * pix_.c * 9);
  ad::Var h = ad::tanh_(ad::conv2d(x, w1, zb1, pix_, width_, 3));
  h = ad::avgpool2(h, Shape{width_, pix_.h, pix_.w});
  ad::Var w2 = ad::segment(p, off_[1], lc * width_ * 9);
  return ad::conv2d(h, w2, zb2, Shape{width_, lat_.h, lat_.w}, lc, 3);
}

ad::Var TinyAutoencoderCodec::build_decode(ad::Tape& t, ad::Var z) const {
  ad::Var p = t.constant(params_);
  ad::Var zb1 = t.constant(Vec::Zero(width_));
  ad::Var zb2 = t.constant(Vec::Zero(pix_.c));
  ad::Var w3 = ad::segment(p, off_[2], width_ * lat_.c * 9);
  ad::Var h = ad::tanh_(ad::conv2d(z, w3, zb1, lat_, width_, 3));
  h = ad::upsample2(h, Shape{width_, lat_.h, lat_.w});
  ad::Var w4 = ad::segment(p, off_[3], pix_.c * width_ * 9);
  return ad::conv2d(h, w4, zb2, Shape{width_, pix_.h, pix_.w}, pix_.c, 3);
}

Vec TinyAutoencoderCodec::encode(const Vec& pixels) const {
  ad::Tape t;
  return t.val(build_encode(t, t.constant(pixels)));
}

Vec TinyAutoencoderCodec::decode(const Vec& model) const {
  ad::Tape t;
  return t.val(build_decode(t, t.constant(model)));
}

double TinyAutoencoderCodec::train(const std::vector<Vec>& images, int steps,
                                   double lr, Rng& rng) {
  Vec m = Vec::Zero(params_.size()), v = Vec::Zero(params_.size());
  double last = 0.0;
  for (int it = 1; it <= steps; ++it) {
    const auto& img = images[rng.uniform_int(0, int(images.size()) - 1)];
    ad::Tape t;
    ad::Var p = t.leaf(params_);
    // rebuild encode/decode on a shared parameter leaf
    ad::Var zb1 = t.constant(Vec::Zero(width_));
    ad::Var zb2 = t.constant(Vec::Zero(lat_.c));
    ad::Var zb3 = t.constant(Vec::Zero(pix_.c));
    ad::Var x = t.constant(img);
    ad::Var w1 = ad::segment(p, off_[0], width_ * pix_.c * 9);
    ad::Var h = ad::tanh_(ad::conv2d(x, w1, zb1, pix_, width_, 3));
    h = ad::avgpool2(h, Shape{width_, pix_.h, pix_.w});
    ad::Var w2 = ad::segment(p, off_[1], lat_.c * width_ * 9);
    ad::Var z = ad::conv2d(h, w2, zb2, Shape{width_, lat_.h, lat_.w},
                           lat_.c, 3);
    ad::Var w3 = ad::segment(p, off_[2], width_ * lat_.c * 9);
    ad::Var g = ad::tanh_(ad::conv2d(z, w3, zb1, lat_, width_, 3));
    g = ad::upsample2(g, Shape{width_, lat_.h, lat_.w});
    ad::Var w4 = ad::segment(p, off_[3], pix_.c * width_ * 9);
    ad::Var rec = ad::conv2d(g, w4, zb3, Shape{width_, pix_.h, pix_.w},
                             pix_.c, 3);
    ad::Var loss = ad::mean_sq_diff(rec, x);
    t.backward(loss);
    last = t.scalar(loss);
    const Vec& grad = t.grad(p);
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v.array().max(0).matrix() + 0.001 * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(0.9, it);
    const double bc2 = 1.0 - std::pow(0.999, it);
    params_ -=
        (lr * (m / bc1).array() / ((v / bc2).array().sqrt() + 1e-8)).matrix();
  }
  return last;
}

double TinyAutoencoderCodec::reconstruction_error(
    const std::vector<Vec>& images) const {
  double acc = 0.0;
  for (const auto& img : images) {
    Vec rec = decode(encode(img));
    acc += (rec - img).squaredNorm() / img.size();
  }
  return acc / images.size();
}

}  // namespace rsd
