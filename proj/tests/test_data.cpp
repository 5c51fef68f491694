#include "rsd/data.hpp"

#include "rsd/checkpoint.hpp"
#include "rsd/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace rsd;

namespace {

// Mean squared spectrum magnitude over the high-frequency band, via a
// direct DFT (test-side oracle, no FFT dependency).
double high_band_energy(const Vec& img, int n) {
  double acc = 0.0;
  long count = 0;
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v) {
      const int fu = std::min(u, n - u), fv = std::min(v, n - v);
      if (fu + fv < n / 4) continue;  // keep only the high band
      double re = 0, im = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const double ang = -2.0 * M_PI * (double(u) * i + double(v) * j) / n;
          re += img[i * n + j] * std::cos(ang);
          im += img[i * n + j] * std::sin(ang);
        }
      acc += re * re + im * im;
      ++count;
    }
  return acc / count;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("toy HR data is deterministic, bounded and size-checked") {
  auto a = make_toy_hr(ToyKind::kShapes, 16, 5, 99);
  auto b = make_toy_hr(ToyKind::kShapes, 16, 5, 99);
  REQUIRE(a.size() == 5);
  for (int i = 0; i < 5; ++i) CHECK(a[i] == b[i]);
  for (const auto& img : a) {
    CHECK(img.maxCoeff() <= 1.0);
    CHECK(img.minCoeff() >= -1.0);
  }
  CHECK_THROWS_AS(make_toy_hr(ToyKind::kShapes, 20, 1, 0), ConfigError);
  CHECK_THROWS_AS(make_toy_hr(ToyKind::kShapes, 16, 0, 0), ConfigError);
}

TEST_CASE("texture has more high-frequency energy than gradients") {
  const int n = 16, count = 6;
  auto grad = make_toy_hr(ToyKind::kGradients, n, count, 7);
  auto text = make_toy_hr(ToyKind::kTexture, n, count, 7);
  double eg = 0, et = 0;
  for (int i = 0; i < count; ++i) {
    eg += high_band_energy(grad[i], n);
    et += high_band_energy(text[i], n);
  }
  CHECK(et > eg);
}

TEST_CASE("identity degradation returns the input bit-exactly") {
  DegradationSpec spec;
  spec.blur_sigma_min = spec.blur_sigma_max = 0.0;
  spec.noise_sigma_min = spec.noise_sigma_max = 0.0;
  spec.downscale = 1;
  spec.quantize = false;
  Rng rng(0);
  auto hr = make_toy_hr(ToyKind::kShapes, 16, 1, 3)[0];
  Vec y = degrade(spec, hr, Shape{1, 16, 16}, rng);
  CHECK(y == hr);
}

TEST_CASE("noise-only degradation has the configured standard deviation") {
  DegradationSpec spec;
  spec.blur_sigma_min = spec.blur_sigma_max = 0.0;
  spec.noise_sigma_min = spec.noise_sigma_max = 0.05;
  spec.downscale = 1;
  spec.quantize = false;
  Vec flat = Vec::Zero(64 * 64);
  Rng rng(5);
  Vec y = degrade(spec, flat, Shape{1, 64, 64}, rng);
  const double sd = std::sqrt(y.squaredNorm() / y.size());
  // SE of the sample sd ~ sigma/sqrt(2n)
  CHECK(std::abs(sd - 0.05) <= 3.0 * 0.05 / std::sqrt(2.0 * y.size()));
}

TEST_CASE("degradation shape contract and divisibility error") {
  DegradationSpec spec;
  spec.downscale = 4;
  Rng rng(2);
  auto hr = make_toy_hr(ToyKind::kTexture, 32, 1, 1)[0];
  Vec y = degrade(spec, hr, Shape{1, 32, 32}, rng);
  CHECK(y.size() == 32 * 32);

  Vec odd = Vec::Zero(30 * 30);
  CHECK_THROWS_AS(degrade(spec, odd, Shape{1, 30, 30}, rng), ConfigError);

  // determinism given (spec, seed, x0)
  Rng r1(77), r2(77);
  CHECK(degrade(spec, hr, Shape{1, 32, 32}, r1) ==
        degrade(spec, hr, Shape{1, 32, 32}, r2));
}

TEST_CASE("dataset container round-trips and rejects corruption") {
  DegradationSpec spec;
  auto ds = make_paired_dataset(ToyKind::kShapes, 16, 4, spec, 11);
  const std::string path = temp_path("rsd_test_dataset.bin");
  save_dataset(path, ds);
  auto back = load_dataset(path);
  CHECK(back.shape == ds.shape);
  REQUIRE(back.samples.size() == ds.samples.size());
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    // float32 storage: equality after one round-trip through float
    for (int k = 0; k < ds.samples[i].x0.size(); ++k) {
      CHECK(back.samples[i].x0[k] ==
            double(float(ds.samples[i].x0[k])));
      CHECK(back.samples[i].y0[k] ==
            double(float(ds.samples[i].y0[k])));
    }
  }
  // saving the loaded copy reproduces the file bytes
  const std::string path2 = temp_path("rsd_test_dataset2.bin");
  save_dataset(path2, back);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), {});
  std::string b2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(b1 == b2);

  // truncation and bad magic produce format errors naming an offset
  std::ofstream trunc(path2, std::ios::binary | std::ios::trunc);
  trunc.write(b1.data(), static_cast<std::streamsize>(b1.size() / 2));
  trunc.close();
  CHECK_THROWS_AS(load_dataset(path2), FormatError);
  std::ofstream bad(path2, std::ios::binary | std::ios::trunc);
  bad.write("XXXX", 4);
  bad.close();
  CHECK_THROWS_AS(load_dataset(path2), FormatError);
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("identity codec is exactly lossless") {
  IdentityCodec codec;
  Rng rng(8);
  Vec x = rng.normal_vec(64);
  CHECK(codec.decode(codec.encode(x)) == x);
  CHECK(codec.model_shape(Shape{1, 8, 8}) == Shape{1, 8, 8});
}

TEST_CASE("tiny autoencoder codec trains toward lower reconstruction error") {
  auto hrs = make_toy_hr(ToyKind::kGradients, 16, 8, 21);
  TinyAutoencoderCodec codec(Shape{1, 16, 16}, 6, 2, 5);
  const double before = codec.reconstruction_error(hrs);
  Rng rng(6);
  codec.train(hrs, 150, 3e-3, rng);
  const double after = codec.reconstruction_error(hrs);
  CHECK(after < before);
  CHECK(codec.model_shape(Shape{1, 16, 16}) == Shape{2, 8, 8});
}

TEST_CASE("checkpoint container round-trips bit-exactly") {
  ArchSpec spec;
  spec.kind = NetKind::kMlp;
  spec.data = Shape{2, 1, 1};
  spec.base_width = 6;
  spec.temb_dim = 4;
  PredictorNet net(spec, 314);
  const std::string path = temp_path("rsd_test_ckpt.bin");
  save_net(path, net);
  PredictorNet back = load_net(path);
  CHECK(back.spec().str() == net.spec().str());
  for (int i = 0; i < net.params().size(); ++i)
    CHECK(back.params()[i] == double(float(net.params()[i])));

  const std::string path2 = temp_path("rsd_test_ckpt2.bin");
  save_net(path2, back);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), {});
  std::string b2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(b1 == b2);

  // discriminator checkpoints carry their own arch line
  DiscriminatorHead disc(Shape{4, 4, 4}, NetKind::kConv, 3);
  save_disc(path2, disc);
  DiscriminatorHead dback = load_disc(path2);
  CHECK(dback.feature_shape() == disc.feature_shape());
  CHECK(dback.params().size() == disc.params().size());

  std::ofstream bad(path2, std::ios::binary | std::ios::trunc);
  bad.write("NOTCKPT", 7);
  bad.close();
  CHECK_THROWS_AS(load_checkpoint(path2), FormatError);
  std::remove(path.c_str());
  std::remove(path2.c_str());
}
