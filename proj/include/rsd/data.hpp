#pragma once

#include "rsd/autodiff.hpp"
#include "rsd/rng.hpp"
#include "rsd/types.hpp"

#include <string>
#include <vector>

namespace rsd {

enum class ToyKind { kGradients, kShapes, kTexture };

ToyKind parse_toy_kind(const std::string& s);
const char* to_string(ToyKind k);

struct Dataset {
  Shape shape;
  std::vector<PairedSample> samples;
};

/// Deterministic procedural HR images in [-1,1] with multi-scale content.
/// size must be one of {16, 32, 64}.
std::vector<Vec> make_toy_hr(ToyKind kind, int size, int count,
                             std::uint64_t seed, int channels = 1);

/// Blur -> downsample -> noise -> optional 8-bit quantize -> upsample.
struct DegradationSpec {
  double blur_sigma_min = 0.3;
  double blur_sigma_max = 1.2;
  int downscale = 4;
  double noise_sigma_min = 0.0;
  double noise_sigma_max = 0.03;
  bool quantize = true;
};

/// Returns y0 at the HR size (bilinear upsample of the degraded image).
Vec degrade(const DegradationSpec& spec, const Vec& x0, Shape shape,
            Rng& rng);

Dataset make_paired_dataset(ToyKind kind, int size, int count,
                            const DegradationSpec& spec, std::uint64_t seed,
                            int channels = 1);

// Binary container: magic "RSDT", version u32, count u32, c,h,w u32, then
// per sample x0 followed by y0 as little-endian float32, row-major.
void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

/// Pixel <-> model-space transform pair. The identity codec is exactly
/// lossless; other codecs report (never assume) their reconstruction error.
class LatentCodec {
 public:
  virtual ~LatentCodec() = default;
  virtual Vec encode(const Vec& pixels) const = 0;
  virtual Vec decode(const Vec& model) const = 0;
  virtual ad::Var build_decode(ad::Tape& tape, ad::Var model) const = 0;
  virtual Shape model_shape(Shape pixel_shape) const { return pixel_shape; }
  virtual std::string name() const = 0;
};

class IdentityCodec : public LatentCodec {
 public:
  Vec encode(const Vec& p) const override { return p; }
  Vec decode(const Vec& m) const override { return m; }
  ad::Var build_decode(ad::Tape&, ad::Var m) const override { return m; }
  std::string name() const override { return "identity"; }
};

/// Small frozen conv autoencoder (c -> width -> latent_c at half
/// resolution). Optional; train() runs a few reconstruction steps.
class TinyAutoencoderCodec : public LatentCodec {
 public:
  TinyAutoencoderCodec(Shape pixel_shape, int width, int latent_c,
                       std::uint64_t seed);
  Vec encode(const Vec& pixels) const override;
  Vec decode(const Vec& model) const override;
  ad::Var build_decode(ad::Tape& tape, ad::Var model) const override;
  Shape model_shape(Shape pixel_shape) const override;
  std::string name() const override { return "tiny_ae"; }

  /// Reconstruction training; returns the final mean squared error.
  double train(const std::vector<Vec>& images, int steps, double lr,
               Rng& rng);
  double reconstruction_error(const std::vector<Vec>& images) const;

 private:
  ad::Var build_encode(ad::Tape& tape, ad::Var pixels) const;
  Shape pix_;
  Shape lat_;
  int width_;
  Vec params_;
  std::vector<int> off_;
};

/// Encode both halves of a pair into model space.
PairedSample encode_pair(const LatentCodec& codec, const PairedSample& pix);

}  // namespace rsd
