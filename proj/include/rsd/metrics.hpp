#pragma once

#include "rsd/data.hpp"
#include "rsd/nets.hpp"
#include "rsd/schedule.hpp"
#include "rsd/train.hpp"

#include <string>
#include <vector>

namespace rsd {

/// BT.601 luma for 3-channel data; identity otherwise.
Vec to_luma(const Vec& v, Shape s);

/// 10 log10(peak^2 / MSE) with peak = 2 for [-1,1] data; +inf when the
/// inputs are identical.
double psnr(const Vec& a, const Vec& b, Shape shape, bool luma = true);

/// Mean local SSIM over fully-valid box windows with the standard
/// stabilizers (K1 = 0.01, K2 = 0.03, L = 2).
double ssim(const Vec& a, const Vec& b, Shape shape, int window = 7,
            bool luma = true);

struct EvalRow {
  std::string method;
  int nfe = 1;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double perc_proxy = 0.0;
  double wall_time_s = 0.0;
};

struct EvalContext {
  const Schedule* schedule = nullptr;
  const LatentCodec* codec = nullptr;
  const PerceptualProxy* proxy = nullptr;
  const PredictorNet* teacher = nullptr;
  const PredictorNet* rsd_generator = nullptr;
  const PredictorNet* vsd_generator = nullptr;
  int ssim_window = 7;
  bool luma = true;
};

/// method is one of: "teacher@<k>", "rsd-student", "vsd-student",
/// "baseline" (the upsampled LR input itself). Metrics are averaged over
/// the test set and the given seeds.
EvalRow evaluate_method(const std::string& method, const EvalContext& ctx,
                        const Dataset& testset,
                        const std::vector<std::uint64_t>& seeds);

void write_eval_csv(const std::string& path,
                    const std::vector<EvalRow>& rows);
std::vector<EvalRow> read_eval_csv(const std::string& path);

/// Trains one RSD variant per grid entry (timestep-subset size N) and
/// evaluates each; rows are labeled rsd-N=<n>.
std::vector<EvalRow> ablate_multistep(const DistillConfig& base,
                                      const std::vector<int>& grid,
                                      const Schedule& s,
                                      const PredictorNet& teacher,
                                      const Dataset& train_data,
                                      const Dataset& test_data,
                                      const LatentCodec& codec,
                                      const PerceptualProxy& proxy,
                                      const std::vector<std::uint64_t>& seeds);

/// Four supervised-loss variants: distill-only, +perc, +gan, full.
std::vector<EvalRow> ablate_losses(const DistillConfig& base,
                                   const Schedule& s,
                                   const PredictorNet& teacher,
                                   const Dataset& train_data,
                                   const Dataset& test_data,
                                   const LatentCodec& codec,
                                   const PerceptualProxy& proxy,
                                   const std::vector<std::uint64_t>& seeds);

/// Line chart of (x = row index label, y = chosen metric) as a standalone
/// SVG file.
void write_metric_svg(const std::string& path,
                      const std::vector<EvalRow>& rows,
                      const std::string& metric);

}  // namespace rsd
