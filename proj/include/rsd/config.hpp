#pragma once

#include "rsd/data.hpp"
#include "rsd/nets.hpp"
#include "rsd/schedule.hpp"
#include "rsd/train.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace rsd {

/// Flat INI-style run configuration. Every knob has a default; unknown
/// keys are rejected with the offending line number; parse -> serialize ->
/// parse is idempotent.
struct RunConfig {
  struct ScheduleSec {
    int T = 15;
    double eta1 = 1e-3;
    double etaT = 0.999;
    double kappa = 1.0;
    std::string shape = "log_linear";
    double eta_low_max = 0.05;
    double eta_high_min = 0.95;
  } schedule;

  struct DataSec {
    std::string kind = "shapes";
    int size = 32;
    int channels = 1;
    int count = 2000;
    int test_count = 64;
    int downscale = 4;
    double blur_min = 0.3;
    double blur_max = 1.2;
    double noise_min = 0.0;
    double noise_max = 0.03;
    bool quantize = true;
    std::uint64_t seed = 1234;
    std::string codec = "identity";
  } data;

  struct TeacherSec {
    int steps = 2000;
    int batch = 8;
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.95;
    bool weighted = false;
    int base_width = 16;
    int temb = 32;
    std::uint64_t seed = 1;
  } teacher;

  struct DistillSec {
    int N = 4;
    std::string timesteps;  // optional explicit comma list; overrides N
    int K = 5;
    double lambda1 = 2.0;
    double lambda2 = 3e-3;
    bool loss_norm = true;
    int steps = 1000;
    int batch = 8;
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.95;
    bool weighted = false;
    bool full_grad = false;
    double ema = 0.999;
    std::uint64_t seed = 2;
    int proxy_width = 8;
    std::uint64_t proxy_seed = 77;
    std::uint64_t disc_seed = 5;
  } distill;

  struct VsdSec {
    int K = 5;
    int steps = 1000;
    int batch = 8;
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.95;
    bool weighted = false;
    double ema = 0.999;
    std::uint64_t seed = 3;
  } vsd;

  struct EvalSec {
    std::string seeds = "17";
    int window = 7;
    bool luma = true;
    int teacher_steps = 15;
  } eval;
};

RunConfig parse_config(const std::string& path);
RunConfig parse_config_text(const std::string& text,
                            const std::string& origin = "<memory>");
/// dotted_key is "section.key", as accepted on the command line.
void apply_override(RunConfig& cfg, const std::string& dotted_key,
                    const std::string& value);
std::string serialize_config(const RunConfig& cfg);
/// One "section.key = value (default ...)" line per knob.
std::string config_help();

// Typed views over the configuration.
Schedule make_schedule(const RunConfig& cfg);
ScheduleBounds<double> make_bounds(const RunConfig& cfg);
DegradationSpec make_degradation(const RunConfig& cfg);
ArchSpec make_teacher_arch(const RunConfig& cfg);
TeacherTrainConfig make_teacher_cfg(const RunConfig& cfg);
DistillConfig make_distill_cfg(const RunConfig& cfg);
VsdConfig make_vsd_cfg(const RunConfig& cfg);
std::vector<std::uint64_t> eval_seeds(const RunConfig& cfg);

}  // namespace rsd
