#include "rsd/metrics.hpp"

#include "rsd/diffusion.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace rsd {

Vec to_luma(const Vec& v, Shape s) {
  if (s.c != 3) return v;
  const int hw = s.h * s.w;
  Vec y(hw);
  for (int p = 0; p < hw; ++p)
    y[p] = 0.299 * v[p] + 0.587 * v[hw + p] + 0.114 * v[2 * hw + p];
  return y;
}

double psnr(const Vec& a, const Vec& b, Shape shape, bool luma) {
  require_same_size(a, b, "psnr");
  Vec xa = luma ? to_luma(a, shape) : a;
  Vec xb = luma ? to_luma(b, shape) : b;
  const double mse = (xa - xb).squaredNorm() / xa.size();
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  const double peak = 2.0;
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Vec& a, const Vec& b, Shape shape, int window, bool luma) {
  require_same_size(a, b, "ssim");
  // window = 1 degrades to the luminance term alone (variances vanish)
  if (window < 1 || window > std::min(shape.h, shape.w))
    throw ConfigError("ssim: window must be in 1..min(h,w)");
  const double C1 = (0.01 * 2.0) * (0.01 * 2.0);
  const double C2 = (0.03 * 2.0) * (0.03 * 2.0);

  Vec xa = luma ? to_luma(a, shape) : a;
  Vec xb = luma ? to_luma(b, shape) : b;
  const int c = luma ? 1 : shape.c;
  const int h = shape.h, w = shape.w;
  const double n = static_cast<double>(window) * window;

  double acc = 0.0;
  long count = 0;
  for (int ch = 0; ch < c; ++ch) {
    Eigen::Map<const Mat> A(xa.data() + static_cast<Eigen::Index>(ch) * h * w,
                            w, h);
    Eigen::Map<const Mat> B(xb.data() + static_cast<Eigen::Index>(ch) * h * w,
                            w, h);
    for (int i = 0; i + window <= h; ++i)
      for (int j = 0; j + window <= w; ++j) {
        const auto wa = A.block(j, i, window, window);
        const auto wb = B.block(j, i, window, window);
        const double ma = wa.sum() / n;
        const double mb = wb.sum() / n;
        const double va = wa.array().square().sum() / n - ma * ma;
        const double vb = wb.array().square().sum() / n - mb * mb;
        const double cov = (wa.array() * wb.array()).sum() / n - ma * mb;
        acc += ((2 * ma * mb + C1) * (2 * cov + C2)) /
               ((ma * ma + mb * mb + C1) * (va + vb + C2));
        ++count;
      }
  }
  return acc / count;
}

namespace {

std::vector<int> descending_steps(int T, int k) {
  // k evenly placed levels, visited high to low.
  std::vector<int> up = evenly_placed_timesteps(T, k);
  std::reverse(up.begin(), up.end());
  return up;
}

}  // namespace

EvalRow evaluate_method(const std::string& method, const EvalContext& ctx,
                        const Dataset& testset,
                        const std::vector<std::uint64_t>& seeds) {
  if (testset.samples.empty())
    throw ConfigError("evaluate_method: empty test set");
  if (seeds.empty())
    throw ConfigError("evaluate_method: need at least one seed");
  const Schedule& s = *ctx.schedule;
  const LatentCodec& codec = *ctx.codec;
  const int T = s.steps();

  EvalRow row;
  row.method = method;
  int nfe = 1;
  enum class Kind { kTeacher, kRsd, kVsd, kBaseline } kind;
  if (method.rfind("teacher@", 0) == 0) {
    kind = Kind::kTeacher;
    nfe = std::stoi(method.substr(8));
    if (nfe < 1 || nfe > T)
      throw ConfigError("evaluate_method: teacher step count outside 1..T");
    if (!ctx.teacher) throw IoError("evaluate_method: missing teacher");
  } else if (method == "rsd-student") {
    kind = Kind::kRsd;
    if (!ctx.rsd_generator)
      throw IoError("evaluate_method: missing rsd generator checkpoint");
  } else if (method == "vsd-student") {
    kind = Kind::kVsd;
    if (!ctx.vsd_generator)
      throw IoError("evaluate_method: missing vsd generator checkpoint");
  } else if (method == "baseline") {
    kind = Kind::kBaseline;
  } else {
    throw ConfigError("evaluate_method: unknown method " + method);
  }
  row.nfe = nfe;

  const auto steps = descending_steps(T, nfe);
  const int window =
      std::min(ctx.ssim_window, std::min(testset.shape.h, testset.shape.w));
  double psnr_acc = 0, ssim_acc = 0, perc_acc = 0, time_acc = 0;
  long count = 0;
  for (std::uint64_t seed : seeds) {
    Rng root(seed);
    for (size_t i = 0; i < testset.samples.size(); ++i) {
      const auto& pix = testset.samples[i];
      Rng rng = root.fork(i);
      const auto t0 = std::chrono::steady_clock::now();
      Vec out_pix;
      switch (kind) {
        case Kind::kBaseline:
          out_pix = pix.y0;
          break;
        case Kind::kTeacher: {
          Vec zy = codec.encode(pix.y0);
          Vec z0 = reverse_sample(s, *ctx.teacher, zy, steps,
                                  ReverseMode::kStochastic, rng);
          out_pix = codec.decode(z0);
          break;
        }
        case Kind::kRsd:
        case Kind::kVsd: {
          const PredictorNet* gen =
              kind == Kind::kRsd ? ctx.rsd_generator : ctx.vsd_generator;
          Vec zy = codec.encode(pix.y0);
          Vec z_T = sample_prior(s, zy, rng);
          Vec eps = rng.normal_vec(zy.size());
          Vec z0 = gen->generate(z_T, T, zy, eps);
          out_pix = codec.decode(z0);
          break;
        }
      }
      const auto t1 = std::chrono::steady_clock::now();
      time_acc += std::chrono::duration<double>(t1 - t0).count();
      psnr_acc += psnr(out_pix, pix.x0, testset.shape, ctx.luma);
      ssim_acc += ssim(out_pix, pix.x0, testset.shape, window, ctx.luma);
      perc_acc += ctx.proxy->distance(pix.x0, out_pix);
      ++count;
    }
  }
  row.psnr_db = psnr_acc / count;
  row.ssim = ssim_acc / count;
  row.perc_proxy = perc_acc / count;
  row.wall_time_s = time_acc / count;
  return row;
}

namespace {

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

void write_eval_csv(const std::string& path,
                    const std::vector<EvalRow>& rows) {
  std::ofstream os(path);
  if (!os) throw IoError("write_eval_csv: cannot open " + path);
  os << "method,nfe,psnr_db,ssim,perc_proxy,wall_time_s\n";
  for (const auto& r : rows)
    os << r.method << ',' << r.nfe << ',' << fmt(r.psnr_db) << ','
       << fmt(r.ssim) << ',' << fmt(r.perc_proxy) << ','
       << fmt(r.wall_time_s) << '\n';
}

std::vector<EvalRow> read_eval_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("read_eval_csv: cannot open " + path);
  std::string line;
  std::getline(is, line);  // header
  std::vector<EvalRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    EvalRow r;
    std::string tok;
    std::getline(ls, r.method, ',');
    std::getline(ls, tok, ',');
    r.nfe = std::stoi(tok);
    std::getline(ls, tok, ',');
    r.psnr_db = tok == "inf" ? std::numeric_limits<double>::infinity()
                             : std::stod(tok);
    std::getline(ls, tok, ',');
    r.ssim = std::stod(tok);
    std::getline(ls, tok, ',');
    r.perc_proxy = std::stod(tok);
    std::getline(ls, tok, ',');
    r.wall_time_s = std::stod(tok);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<EvalRow> ablate_multistep(
    const DistillConfig& base, const std::vector<int>& grid,
    const Schedule& s, const PredictorNet& teacher, const Dataset& train_data,
    const Dataset& test_data, const LatentCodec& codec,
    const PerceptualProxy& proxy, const std::vector<std::uint64_t>& seeds) {
  std::vector<EvalRow> rows;
  for (int n : grid) {
    DistillConfig cfg = base;
    cfg.timesteps = evenly_placed_timesteps(s.steps(), n);
    auto res = distill(cfg, s, teacher, train_data, codec, proxy);
    EvalContext ctx;
    ctx.schedule = &s;
    ctx.codec = &codec;
    ctx.proxy = &proxy;
    ctx.rsd_generator = &res.generator;
    EvalRow row = evaluate_method("rsd-student", ctx, test_data, seeds);
    row.method = "rsd-N=" + std::to_string(n);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<EvalRow> ablate_losses(
    const DistillConfig& base, const Schedule& s, const PredictorNet& teacher,
    const Dataset& train_data, const Dataset& test_data,
    const LatentCodec& codec, const PerceptualProxy& proxy,
    const std::vector<std::uint64_t>& seeds) {
  struct Variant {
    const char* name;
    double l1, l2;
  };
  const Variant variants[] = {{"distill-only", 0.0, 0.0},
                              {"w-perc", base.lambda1, 0.0},
                              {"w-gan", 0.0, base.lambda2},
                              {"full", base.lambda1, base.lambda2}};
  std::vector<EvalRow> rows;
  for (const auto& v : variants) {
    DistillConfig cfg = base;
    cfg.lambda1 = v.l1;
    cfg.lambda2 = v.l2;
    auto res = distill(cfg, s, teacher, train_data, codec, proxy);
    EvalContext ctx;
    ctx.schedule = &s;
    ctx.codec = &codec;
    ctx.proxy = &proxy;
    ctx.rsd_generator = &res.generator;
    EvalRow row = evaluate_method("rsd-student", ctx, test_data, seeds);
    row.method = v.name;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_metric_svg(const std::string& path,
                      const std::vector<EvalRow>& rows,
                      const std::string& metric) {
  if (rows.empty()) throw ConfigError("write_metric_svg: no rows");
  auto value = [&](const EvalRow& r) {
    if (metric == "psnr") return r.psnr_db;
    if (metric == "ssim") return r.ssim;
    if (metric == "perc") return r.perc_proxy;
    throw ConfigError("write_metric_svg: unknown metric " + metric);
  };
  double lo = value(rows[0]), hi = lo;
  for (const auto& r : rows) {
    lo = std::min(lo, value(r));
    hi = std::max(hi, value(r));
  }
  if (hi - lo < 1e-9) hi = lo + 1.0;
  const int W = 640, H = 400, ML = 60, MB = 60, MT = 20, MR = 20;
  std::ofstream os(path);
  if (!os) throw IoError("write_metric_svg: cannot open " + path);
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W
     << "' height='" << H << "'>\n";
  os << "<rect width='100%' height='100%' fill='white'/>\n";
  const int pw = W - ML - MR, ph = H - MT - MB;
  auto px = [&](size_t i) {
    return ML + (rows.size() == 1
                     ? pw / 2.0
                     : pw * static_cast<double>(i) / (rows.size() - 1));
  };
  auto py = [&](double v) { return MT + ph * (1.0 - (v - lo) / (hi - lo)); };
  os << "<polyline fill='none' stroke='steelblue' stroke-width='2' points='";
  for (size_t i = 0; i < rows.size(); ++i)
    os << px(i) << ',' << py(value(rows[i])) << ' ';
  os << "'/>\n";
  for (size_t i = 0; i < rows.size(); ++i) {
    os << "<circle cx='" << px(i) << "' cy='" << py(value(rows[i]))
       << "' r='3' fill='steelblue'/>\n";
    os << "<text x='" << px(i) << "' y='" << H - MB + 20
       << "' font-size='11' text-anchor='middle'>" << rows[i].method
       << "</text>\n";
  }
  os << "<text x='" << ML / 3 << "' y='" << MT + ph / 2
     << "' font-size='12' transform='rotate(-90 " << ML / 3 << ' '
     << MT + ph / 2 << ")' text-anchor='middle'>" << metric << "</text>\n";
  os << "<text x='" << ML << "' y='" << py(value(rows[0])) - 6
     << "' font-size='10'>" << fmt(value(rows[0])) << "</text>\n";
  os << "</svg>\n";
}

}  // namespace rsd
