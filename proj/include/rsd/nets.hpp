#pragma once

#include "rsd/autodiff.hpp"
#include "rsd/predictor.hpp"
#include "rsd/rng.hpp"
#include "rsd/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace rsd {

enum class NetKind { kConv, kMlp };

/// Architecture description; serialized verbatim into checkpoint headers.
struct ArchSpec {
  NetKind kind = NetKind::kConv;
  Shape data;             // model-space sample shape
  int base_width = 16;    // conv: base channel count; mlp: hidden width
  int temb_dim = 32;      // sinusoidal timestep embedding size (even)
  bool noise_input = false;  // accept an extra noise tensor alongside x_t

  std::string str() const;
  static ArchSpec parse(const std::string& text);
};

/// Standard sin/cos positional embedding of an integer timestep.
Vec timestep_embedding(int t, int dim);

/// Small trainable x0-predictor: a two-level conv encoder/decoder with the
/// conditioning image concatenated at the input, a timestep embedding added
/// at the bottleneck, and a global residual from x_t. The mlp variant uses
/// the same wiring on flat vectors. With noise_input set, a third input
/// tensor is concatenated channel-wise (the generator configuration).
class PredictorNet : public Predictor {
 public:
  PredictorNet(const ArchSpec& spec, std::uint64_t init_seed);

  const ArchSpec& spec() const { return spec_; }
  Vec& params() { return params_; }
  const Vec& params() const { return params_; }
  Shape feature_shape() const;

  struct Built {
    ad::Var out;
    ad::Var features;  // bottleneck activation (the GAN hook)
  };
  /// Graph forward sharing an externally created parameter leaf, so one
  /// tape can evaluate the net several times and accumulate one gradient.
  Built build(ad::Tape& tape, ad::Var params_leaf, ad::Var x_t, ad::Var y0,
              int t, ad::Var eps = {}) const;

  /// Encoder-only forward; stops at the bottleneck features (the decoder
  /// half never runs, which the GAN paths exploit). skip_out, when given,
  /// receives the pre-pool activation the decoder consumes.
  ad::Var build_features(ad::Tape& tape, ad::Var params_leaf, ad::Var x_t,
                         ad::Var y0, int t, ad::Var eps = {},
                         ad::Var* skip_out = nullptr) const;

  // Plain forwards (run a local tape; no gradients retained).
  Vec predict(const Vec& x_t, const Vec& y0, int t) const override;
  Vec generate(const Vec& x_t, int t, const Vec& y0, const Vec& eps) const;
  Vec encoder_features(const Vec& x, const Vec& y0, int t) const;

  struct Segment {
    std::string name;
    int offset;
    int size;
  };
  const std::vector<Segment>& segments() const { return segments_; }
  int segment_offset(const std::string& name) const;
  int segment_size(const std::string& name) const;

 private:
  void layout();
  ArchSpec spec_;
  std::vector<Segment> segments_;
  Vec params_;
};

PredictorNet make_toy_predictor(const ArchSpec& spec, std::uint64_t seed);

/// Copies every weight of `f` into a noise-conditioned net whose extra
/// input pathway is zero-initialized, so outputs match f for any eps at
/// the moment of promotion.
PredictorNet promote_to_generator(const PredictorNet& f);

/// Logit head on the predictor's bottleneck features.
class DiscriminatorHead {
 public:
  DiscriminatorHead(Shape feature_shape, NetKind kind, std::uint64_t seed);

  Vec& params() { return params_; }
  const Vec& params() const { return params_; }
  Shape feature_shape() const { return feat_; }
  NetKind kind() const { return kind_; }

  ad::Var build_logit(ad::Tape& tape, ad::Var params_leaf,
                      ad::Var features) const;
  double logit(const Vec& features) const;

  std::string arch_text() const;

 private:
  Shape feat_;
  NetKind kind_;
  int width_;
  Vec params_;
};

/// Frozen random-feature distance: three conv (or dense) stages at
/// decreasing resolution, unit-normalized per location, compared by mean
/// squared difference. Stands in for a pretrained perceptual metric.
class PerceptualProxy {
 public:
  PerceptualProxy(Shape pixel_shape, int width, std::uint64_t seed);

  double distance(const Vec& a, const Vec& b) const;
  ad::Var build_distance(ad::Tape& tape, ad::Var a, ad::Var b) const;
  Shape pixel_shape() const { return shape_; }

 private:
  std::vector<ad::Var> features(ad::Tape& tape, ad::Var x) const;
  Shape shape_;
  int width_;
  bool conv_;
  Vec params_;
  std::vector<int> offsets_;
};

}  // namespace rsd
