#pragma once

#include "rsd/data.hpp"
#include "rsd/losses.hpp"
#include "rsd/nets.hpp"
#include "rsd/schedule.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace rsd {

struct Adam {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;

  Vec m, v;
  long steps = 0;

  void init(Eigen::Index n) {
    m = Vec::Zero(n);
    v = Vec::Zero(n);
    steps = 0;
  }
  void update(Vec& params, const Vec& grad);
};

struct TeacherTrainConfig {
  int steps = 2000;
  int batch_size = 8;
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.95;
  bool weighted = false;
  std::uint64_t seed = 1;
};

struct TeacherLogRow {
  long step;
  double loss;
};

struct TeacherResult {
  PredictorNet net;
  std::vector<TeacherLogRow> log;
};

/// Denoiser training on the shifted marginals. Data is in pixel space and
/// is encoded once through the codec.
TeacherResult train_teacher(const TeacherTrainConfig& cfg, const Schedule& s,
                            const ArchSpec& arch, const Dataset& data,
                            const LatentCodec& codec,
                            Adam* resume_opt = nullptr,
                            long start_step = 0,
                            std::optional<PredictorNet> resume_net = {});

// ---- distillation -----------------------------------------------------------

struct DistillConfig {
  std::vector<int> timesteps;  // t_1 < ... < t_N == T
  int K = 5;                   // fake updates per generator update
  double lambda1 = 2.0;        // perceptual weight
  double lambda2 = 3e-3;       // GAN weight
  bool loss_norm = true;
  int steps = 1000;            // generator updates
  int batch_size = 8;
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.95;
  std::uint64_t seed = 2;
  bool weighted = false;
  bool full_grad = false;
  double ema_rate = 0.999;
  std::uint64_t disc_seed = 5;
};

void check_distill_config(const DistillConfig& cfg, int T);

/// One sampled training tuple (SampleEverything): encode the pair, draw the
/// generator conditioning step t_n from the subset, form z_{t_n} from the
/// true-data marginal, run the generator, then draw t uniform over 1..T
/// (2..T when weighted) and z_t from the marginal around the generation.
struct TrainingTuple {
  Vec z0, zy;
  int t_n = 0;
  Vec z_tn;
  Vec eps;
  Vec z0hat;
  int t = 0;
  Vec eps_prime;
  Vec z_t;
};

TrainingTuple sample_training_tuple(const Schedule& s,
                                    const PredictorNet& gen,
                                    const LatentCodec& codec,
                                    const PairedSample& pair,
                                    const std::vector<int>& timesteps,
                                    Rng& rng, bool weighted = false);

struct DistillState {
  PredictorNet generator;
  PredictorNet fake;
  DiscriminatorHead disc;
  Adam opt_gen, opt_fake, opt_disc;
  long gen_steps = 0;
  long fake_steps = 0;
  double loss_scale = 0.0;  // running mean of |L_theta|, 0 = unset
  Vec ema_params;

  DistillState(PredictorNet g, PredictorNet f, DiscriminatorHead d)
      : generator(std::move(g)), fake(std::move(f)), disc(std::move(d)) {}
};

DistillState init_distill_state(const DistillConfig& cfg,
                                const PredictorNet& teacher);

struct DistillLogRow {
  long step;
  double l_theta, l_fake, l_gan_d, l_gan_g, l_perc;
};

/// K fake/discriminator updates followed by one generator update with
/// L_theta + lambda1 L_perc + lambda2 L_gan; EMA tracked after each
/// generator step. Aborts with diagnostics on non-finite losses.
DistillLogRow distill_step(DistillState& state, const DistillConfig& cfg,
                           const Schedule& s, const PredictorNet& teacher,
                           const Dataset& data, const LatentCodec& codec,
                           const PerceptualProxy& proxy, Rng& rng);

struct DistillResult {
  PredictorNet generator;
  PredictorNet ema_generator;
  PredictorNet fake;
  DiscriminatorHead disc;
  std::vector<DistillLogRow> log;
};

using DistillCallback =
    std::function<void(long step, const DistillState& state)>;

DistillResult distill(const DistillConfig& cfg, const Schedule& s,
                      const PredictorNet& teacher, const Dataset& data,
                      const LatentCodec& codec, const PerceptualProxy& proxy,
                      const DistillCallback& on_checkpoint = nullptr,
                      int checkpoint_every = 0,
                      DistillState* resume_state = nullptr);

// ---- score-distillation baseline --------------------------------------------

struct VsdConfig {
  int K = 5;
  int steps = 1000;
  int batch_size = 8;
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.95;
  std::uint64_t seed = 3;
  bool weighted = false;
  double ema_rate = 0.999;
};

struct VsdLogRow {
  long step;
  double l_theta, l_fake;
};

struct VsdResult {
  PredictorNet generator;
  PredictorNet ema_generator;
  PredictorNet fake;
  std::vector<VsdLogRow> log;
};

/// Single-step variant: the generator always runs from the prior at t = T;
/// no GAN or perceptual terms.
VsdResult distill_vsd(const VsdConfig& cfg, const Schedule& s,
                      const PredictorNet& teacher, const Dataset& data,
                      const LatentCodec& codec);

}  // namespace rsd
