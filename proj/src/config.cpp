#include "rsd/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

namespace rsd {

namespace {

struct Entry {
  std::string section;
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

int parse_int(const std::string& v) {
  try {
    size_t pos = 0;
    const int r = std::stoi(v, &pos);
    if (pos != v.size()) throw FormatError("not an integer: " + v);
    return r;
  } catch (const std::logic_error&) {
    throw FormatError("not an integer: " + v);
  }
}

std::uint64_t parse_u64(const std::string& v) {
  try {
    size_t pos = 0;
    const unsigned long long r = std::stoull(v, &pos);
    if (pos != v.size()) throw FormatError("not an integer: " + v);
    return r;
  } catch (const std::logic_error&) {
    throw FormatError("not an integer: " + v);
  }
}

double parse_double(const std::string& v) {
  try {
    size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw FormatError("not a number: " + v);
    return r;
  } catch (const std::logic_error&) {
    throw FormatError("not a number: " + v);
  }
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw FormatError("not a boolean: " + v);
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

#define ENTRY_INT(sec, name, field)                                       \
  {#sec, #name, [](const RunConfig& c) { return std::to_string(c.field); }, \
   [](RunConfig& c, const std::string& v) { c.field = parse_int(v); }}
#define ENTRY_U64(sec, name, field)                                       \
  {#sec, #name, [](const RunConfig& c) { return std::to_string(c.field); }, \
   [](RunConfig& c, const std::string& v) { c.field = parse_u64(v); }}
#define ENTRY_DBL(sec, name, field)                                     \
  {#sec, #name, [](const RunConfig& c) { return fmt_double(c.field); }, \
   [](RunConfig& c, const std::string& v) { c.field = parse_double(v); }}
#define ENTRY_BOOL(sec, name, field)                                        \
  {#sec, #name,                                                             \
   [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }, \
   [](RunConfig& c, const std::string& v) { c.field = parse_bool(v); }}
#define ENTRY_STR(sec, name, field)                       \
  {#sec, #name, [](const RunConfig& c) { return c.field; }, \
   [](RunConfig& c, const std::string& v) { c.field = v; }}

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = {
      ENTRY_INT(schedule, T, schedule.T),
      ENTRY_DBL(schedule, eta1, schedule.eta1),
      ENTRY_DBL(schedule, etaT, schedule.etaT),
      ENTRY_DBL(schedule, kappa, schedule.kappa),
      ENTRY_STR(schedule, shape, schedule.shape),
      ENTRY_DBL(schedule, eta_low_max, schedule.eta_low_max),
      ENTRY_DBL(schedule, eta_high_min, schedule.eta_high_min),

      ENTRY_STR(data, kind, data.kind),
      ENTRY_INT(data, size, data.size),
      ENTRY_INT(data, channels, data.channels),
      ENTRY_INT(data, count, data.count),
      ENTRY_INT(data, test_count, data.test_count),
      ENTRY_INT(data, downscale, data.downscale),
      ENTRY_DBL(data, blur_min, data.blur_min),
      ENTRY_DBL(data, blur_max, data.blur_max),
      ENTRY_DBL(data, noise_min, data.noise_min),
      ENTRY_DBL(data, noise_max, data.noise_max),
      ENTRY_BOOL(data, quantize, data.quantize),
      ENTRY_U64(data, seed, data.seed),
      ENTRY_STR(data, codec, data.codec),

      ENTRY_INT(teacher, steps, teacher.steps),
      ENTRY_INT(teacher, batch, teacher.batch),
      ENTRY_DBL(teacher, lr, teacher.lr),
      ENTRY_DBL(teacher, beta1, teacher.beta1),
      ENTRY_DBL(teacher, beta2, teacher.beta2),
      ENTRY_BOOL(teacher, weighted, teacher.weighted),
      ENTRY_INT(teacher, base_width, teacher.base_width),
      ENTRY_INT(teacher, temb, teacher.temb),
      ENTRY_U64(teacher, seed, teacher.seed),

      ENTRY_INT(distill, N, distill.N),
      ENTRY_STR(distill, timesteps, distill.timesteps),
      ENTRY_INT(distill, K, distill.K),
      ENTRY_DBL(distill, lambda1, distill.lambda1),
      ENTRY_DBL(distill, lambda2, distill.lambda2),
      ENTRY_BOOL(distill, loss_norm, distill.loss_norm),
      ENTRY_INT(distill, steps, distill.steps),
      ENTRY_INT(distill, batch, distill.batch),
      ENTRY_DBL(distill, lr, distill.lr),
      ENTRY_DBL(distill, beta1, distill.beta1),
      ENTRY_DBL(distill, beta2, distill.beta2),
      ENTRY_BOOL(distill, weighted, distill.weighted),
      ENTRY_BOOL(distill, full_grad, distill.full_grad),
      ENTRY_DBL(distill, ema, distill.ema),
      ENTRY_U64(distill, seed, distill.seed),
      ENTRY_INT(distill, proxy_width, distill.proxy_width),
      ENTRY_U64(distill, proxy_seed, distill.proxy_seed),
      ENTRY_U64(distill, disc_seed, distill.disc_seed),

      ENTRY_INT(vsd, K, vsd.K),
      ENTRY_INT(vsd, steps, vsd.steps),
      ENTRY_INT(vsd, batch, vsd.batch),
      ENTRY_DBL(vsd, lr, vsd.lr),
      ENTRY_DBL(vsd, beta1, vsd.beta1),
      ENTRY_DBL(vsd, beta2, vsd.beta2),
      ENTRY_BOOL(vsd, weighted, vsd.weighted),
      ENTRY_DBL(vsd, ema, vsd.ema),
      ENTRY_U64(vsd, seed, vsd.seed),

      ENTRY_STR(eval, seeds, eval.seeds),
      ENTRY_INT(eval, window, eval.window),
      ENTRY_BOOL(eval, luma, eval.luma),
      ENTRY_INT(eval, teacher_steps, eval.teacher_steps),
  };
  return entries;
}

#undef ENTRY_INT
#undef ENTRY_U64
#undef ENTRY_DBL
#undef ENTRY_BOOL
#undef ENTRY_STR

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const Entry* find_entry(const std::string& section, const std::string& key) {
  for (const auto& e : registry())
    if (e.section == section && e.key == key) return &e;
  return nullptr;
}

}  // namespace

RunConfig parse_config_text(const std::string& text,
                            const std::string& origin) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ConfigError(origin + ":" + std::to_string(lineno) +
                          ": malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    const Entry* e = find_entry(section, key);
    if (!e)
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": unknown key " + section + "." + key);
    try {
      e->set(cfg, value);
    } catch (const FormatError& err) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " +
                        err.what());
    }
  }
  return cfg;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("parse_config: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str(), path);
}

void apply_override(RunConfig& cfg, const std::string& dotted_key,
                    const std::string& value) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string::npos)
    throw ConfigError("override must be section.key=value: " + dotted_key);
  const Entry* e =
      find_entry(dotted_key.substr(0, dot), dotted_key.substr(dot + 1));
  if (!e) throw ConfigError("unknown config key " + dotted_key);
  e->set(cfg, value);
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream os;
  std::string section;
  for (const auto& e : registry()) {
    if (e.section != section) {
      if (!section.empty()) os << '\n';
      section = e.section;
      os << '[' << section << "]\n";
    }
    os << e.key << " = " << e.get(cfg) << '\n';
  }
  return os.str();
}

std::string config_help() {
  const RunConfig defaults;
  std::ostringstream os;
  for (const auto& e : registry())
    os << "  " << e.section << '.' << e.key << " (default "
       << e.get(defaults) << ")\n";
  return os.str();
}

Schedule make_schedule(const RunConfig& cfg) {
  ScheduleShape shape;
  if (cfg.schedule.shape == "log_linear")
    shape = ScheduleShape::kLogLinear;
  else if (cfg.schedule.shape == "linear")
    shape = ScheduleShape::kLinear;
  else
    throw ConfigError("schedule.shape must be log_linear or linear, got " +
                      cfg.schedule.shape);
  return build_schedule(cfg.schedule.T, cfg.schedule.eta1, cfg.schedule.etaT,
                        cfg.schedule.kappa, shape);
}

ScheduleBounds<double> make_bounds(const RunConfig& cfg) {
  return {cfg.schedule.eta_low_max, cfg.schedule.eta_high_min};
}

DegradationSpec make_degradation(const RunConfig& cfg) {
  DegradationSpec d;
  d.blur_sigma_min = cfg.data.blur_min;
  d.blur_sigma_max = cfg.data.blur_max;
  d.downscale = cfg.data.downscale;
  d.noise_sigma_min = cfg.data.noise_min;
  d.noise_sigma_max = cfg.data.noise_max;
  d.quantize = cfg.data.quantize;
  return d;
}

ArchSpec make_teacher_arch(const RunConfig& cfg) {
  ArchSpec a;
  a.kind = cfg.data.size > 1 ? NetKind::kConv : NetKind::kMlp;
  a.data = Shape{cfg.data.channels, cfg.data.size, cfg.data.size};
  a.base_width = cfg.teacher.base_width;
  a.temb_dim = cfg.teacher.temb;
  a.noise_input = false;
  return a;
}

TeacherTrainConfig make_teacher_cfg(const RunConfig& cfg) {
  TeacherTrainConfig t;
  t.steps = cfg.teacher.steps;
  t.batch_size = cfg.teacher.batch;
  t.lr = cfg.teacher.lr;
  t.beta1 = cfg.teacher.beta1;
  t.beta2 = cfg.teacher.beta2;
  t.weighted = cfg.teacher.weighted;
  t.seed = cfg.teacher.seed;
  return t;
}

DistillConfig make_distill_cfg(const RunConfig& cfg) {
  DistillConfig d;
  if (!cfg.distill.timesteps.empty()) {
    std::istringstream is(cfg.distill.timesteps);
    std::string tok;
    while (std::getline(is, tok, ','))
      d.timesteps.push_back(parse_int(trim(tok)));
  } else {
    d.timesteps = evenly_placed_timesteps(cfg.schedule.T, cfg.distill.N);
  }
  d.K = cfg.distill.K;
  d.lambda1 = cfg.distill.lambda1;
  d.lambda2 = cfg.distill.lambda2;
  d.loss_norm = cfg.distill.loss_norm;
  d.steps = cfg.distill.steps;
  d.batch_size = cfg.distill.batch;
  d.lr = cfg.distill.lr;
  d.beta1 = cfg.distill.beta1;
  d.beta2 = cfg.distill.beta2;
  d.weighted = cfg.distill.weighted;
  d.full_grad = cfg.distill.full_grad;
  d.ema_rate = cfg.distill.ema;
  d.seed = cfg.distill.seed;
  d.disc_seed = cfg.distill.disc_seed;
  return d;
}

VsdConfig make_vsd_cfg(const RunConfig& cfg) {
  VsdConfig v;
  v.K = cfg.vsd.K;
  v.steps = cfg.vsd.steps;
  v.batch_size = cfg.vsd.batch;
  v.lr = cfg.vsd.lr;
  v.beta1 = cfg.vsd.beta1;
  v.beta2 = cfg.vsd.beta2;
  v.weighted = cfg.vsd.weighted;
  v.ema_rate = cfg.vsd.ema;
  v.seed = cfg.vsd.seed;
  return v;
}

std::vector<std::uint64_t> eval_seeds(const RunConfig& cfg) {
  std::vector<std::uint64_t> out;
  std::istringstream is(cfg.eval.seeds);
  std::string tok;
  while (std::getline(is, tok, ',')) out.push_back(parse_u64(trim(tok)));
  if (out.empty()) throw ConfigError("eval.seeds must list at least one seed");
  return out;
}

}  // namespace rsd
