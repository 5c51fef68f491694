// Command-line front end: data synthesis, teacher training, distillation,
// evaluation, ablations, verification and plotting. Every run writes its
// effective configuration, checkpoints, CSV logs and reports into a run
// directory; (config, seed) determines every artifact byte except
// timestamps and wall-time columns.

#include <CLI11.hpp>

#include "rsd/checkpoint.hpp"
#include "rsd/config.hpp"
#include "rsd/metrics.hpp"
#include "rsd/oracles.hpp"
#include "rsd/train.hpp"
#include "rsd/verify.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

namespace fs = std::filesystem;
using namespace rsd;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string run_root;
  std::string out_dir;
  std::string name;
  std::string resume;
};

RunConfig effective_config(const CommonArgs& args) {
  RunConfig cfg;
  if (!args.resume.empty()) {
    const fs::path echo = fs::path(args.resume) / "config.ini";
    if (!fs::exists(echo))
      throw IoError("--resume: no config echo at " + echo.string());
    cfg = parse_config(echo.string());
  } else if (!args.config_path.empty()) {
    cfg = parse_config(args.config_path);
  }
  for (const auto& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects section.key=value, got " + kv);
    apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y%m%d-%H%M%S");
  return os.str();
}

fs::path prepare_run_dir(const CommonArgs& args, const std::string& kind,
                         const RunConfig& cfg) {
  fs::path dir;
  if (!args.resume.empty()) {
    dir = args.resume;
    if (!fs::exists(dir)) throw IoError("--resume: no such run directory");
  } else if (!args.out_dir.empty()) {
    dir = args.out_dir;
    fs::create_directories(dir);
  } else {
    std::string root = args.run_root;
    if (root.empty())
      if (const char* env = std::getenv("RSD_RUN_ROOT")) root = env;
    if (root.empty()) root = "runs";
    const std::string label = args.name.empty() ? kind : args.name;
    dir = fs::path(root) / (timestamp_utc() + "-" + label);
    fs::create_directories(dir);
  }
  std::ofstream echo(dir / "config.ini");
  if (!echo) throw IoError("cannot write config echo in " + dir.string());
  echo << serialize_config(cfg);
  return dir;
}

void write_teacher_log(const fs::path& path,
                       const std::vector<TeacherLogRow>& log, bool append) {
  std::ofstream os(path, append ? std::ios::app : std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string());
  if (!append) os << "step,loss\n";
  for (const auto& r : log)
    os << r.step << ',' << std::setprecision(17) << r.loss << '\n';
}

void write_distill_log(const fs::path& path,
                       const std::vector<DistillLogRow>& log, bool append) {
  std::ofstream os(path, append ? std::ios::app : std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string());
  if (!append) os << "step,L_theta,L_fake,L_gan_d,L_gan_g,L_perc\n";
  os << std::setprecision(17);
  for (const auto& r : log)
    os << r.step << ',' << r.l_theta << ',' << r.l_fake << ',' << r.l_gan_d
       << ',' << r.l_gan_g << ',' << r.l_perc << '\n';
}

void write_vsd_log(const fs::path& path, const std::vector<VsdLogRow>& log) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string());
  os << "step,L_theta,L_fake\n";
  os << std::setprecision(17);
  for (const auto& r : log)
    os << r.step << ',' << r.l_theta << ',' << r.l_fake << '\n';
}

int cmd_make_data(const CommonArgs& args) {
  RunConfig cfg = effective_config(args);
  fs::path dir = prepare_run_dir(args, "make-data", cfg);
  const ToyKind kind = parse_toy_kind(cfg.data.kind);
  const DegradationSpec spec = make_degradation(cfg);
  Dataset train = make_paired_dataset(kind, cfg.data.size, cfg.data.count,
                                      spec, cfg.data.seed,
                                      cfg.data.channels);
  Dataset test = make_paired_dataset(kind, cfg.data.size,
                                     cfg.data.test_count, spec,
                                     Rng::mix(cfg.data.seed, 0x7e57),
                                     cfg.data.channels);
  save_dataset((dir / "train.rsdt").string(), train);
  save_dataset((dir / "test.rsdt").string(), test);
  std::cout << "wrote " << (dir / "train.rsdt").string() << " ("
            << train.samples.size() << " pairs) and test.rsdt ("
            << test.samples.size() << " pairs)\n";
  return 0;
}

int cmd_train_teacher(const CommonArgs& args, const std::string& data_path) {
  RunConfig cfg = effective_config(args);
  fs::path dir = prepare_run_dir(args, "train-teacher", cfg);
  Schedule s = make_schedule(cfg);
  std::string data_file = data_path;
  if (data_file.empty() && !args.resume.empty())
    data_file = (fs::path(args.resume) / "train.rsdt").string();
  if (data_file.empty())
    throw ConfigError("train-teacher: --data is required");
  Dataset data = load_dataset(data_file);
  IdentityCodec codec;
  TeacherTrainConfig tcfg = make_teacher_cfg(cfg);
  ArchSpec arch = make_teacher_arch(cfg);
  arch.data = data.shape;

  const fs::path state_path = dir / "teacher_state.bin";
  const bool resuming = !args.resume.empty() && fs::exists(state_path);
  Adam opt;
  long start_step = 0;
  std::optional<PredictorNet> net;
  if (resuming) {
    StateBlob blob = load_state_blob(state_path.string());
    PredictorNet resumed(arch, 0);
    resumed.params() = blob.tensors.at("params");
    opt.m = blob.tensors.at("m");
    opt.v = blob.tensors.at("v");
    opt.steps = blob.counters.at("opt_steps");
    start_step = blob.counters.at("step");
    net = std::move(resumed);
  }

  auto res = train_teacher(tcfg, s, arch, data, codec, &opt, start_step,
                           std::move(net));
  save_net((dir / "teacher.ckpt").string(), res.net);
  StateBlob blob;
  blob.tensors["params"] = res.net.params();
  blob.tensors["m"] = opt.m;
  blob.tensors["v"] = opt.v;
  blob.counters["opt_steps"] = opt.steps;
  blob.counters["step"] = start_step + tcfg.steps;
  save_state_blob(state_path.string(), blob);
  write_teacher_log(dir / "teacher_log.csv", res.log, resuming);
  if (!resuming && data_file != (dir / "train.rsdt").string())
    fs::copy_file(data_file, dir / "train.rsdt",
                  fs::copy_options::overwrite_existing);
  std::cout << "teacher checkpoint: " << (dir / "teacher.ckpt").string()
            << "\nfinal loss: " << res.log.back().loss << '\n';
  return 0;
}

PerceptualProxy make_proxy(const RunConfig& cfg, Shape pixel_shape) {
  return PerceptualProxy(pixel_shape, cfg.distill.proxy_width,
                         cfg.distill.proxy_seed);
}

int cmd_distill(const CommonArgs& args, const std::string& method,
                const std::string& teacher_path,
                const std::string& data_path) {
  RunConfig cfg = effective_config(args);
  fs::path dir = prepare_run_dir(args, "distill-" + method, cfg);
  Schedule s = make_schedule(cfg);
  std::string data_file = data_path;
  if (data_file.empty() && !args.resume.empty())
    data_file = (fs::path(args.resume) / "train.rsdt").string();
  if (data_file.empty()) throw ConfigError("distill: --data is required");
  std::string tpath = teacher_path;
  if (tpath.empty() && !args.resume.empty())
    tpath = (fs::path(args.resume) / "teacher.ckpt").string();
  if (tpath.empty())
    throw ConfigError(
        "distill: --teacher is required (train one with train-teacher)");
  if (!fs::exists(tpath))
    throw IoError("distill: teacher checkpoint not found at " + tpath +
                  "; run train-teacher first");
  Dataset data = load_dataset(data_file);
  PredictorNet teacher = load_net(tpath);
  IdentityCodec codec;

  if (method == "vsd") {
    if (!args.resume.empty())
      throw ConfigError("distill --method vsd does not support --resume");
    VsdConfig vcfg = make_vsd_cfg(cfg);
    auto res = distill_vsd(vcfg, s, teacher, data, codec);
    save_net((dir / "generator.ckpt").string(), res.generator);
    save_net((dir / "generator_ema.ckpt").string(), res.ema_generator);
    save_net((dir / "fake.ckpt").string(), res.fake);
    write_vsd_log(dir / "distill_log.csv", res.log);
    std::cout << "vsd generator: " << (dir / "generator.ckpt").string()
              << '\n';
    return 0;
  }
  if (method != "rsd")
    throw ConfigError("distill: method must be rsd or vsd, got " + method);

  DistillConfig dcfg = make_distill_cfg(cfg);
  PerceptualProxy proxy = make_proxy(cfg, data.shape);

  const fs::path state_path = dir / "distill_state.bin";
  const bool resuming = !args.resume.empty() && fs::exists(state_path);
  DistillState state = init_distill_state(dcfg, teacher);
  if (resuming) {
    StateBlob blob = load_state_blob(state_path.string());
    state.generator.params() = blob.tensors.at("generator");
    state.fake.params() = blob.tensors.at("fake");
    state.disc.params() = blob.tensors.at("disc");
    state.ema_params = blob.tensors.at("ema");
    state.opt_gen.m = blob.tensors.at("opt_gen_m");
    state.opt_gen.v = blob.tensors.at("opt_gen_v");
    state.opt_fake.m = blob.tensors.at("opt_fake_m");
    state.opt_fake.v = blob.tensors.at("opt_fake_v");
    state.opt_disc.m = blob.tensors.at("opt_disc_m");
    state.opt_disc.v = blob.tensors.at("opt_disc_v");
    state.opt_gen.steps = blob.counters.at("opt_gen_steps");
    state.opt_fake.steps = blob.counters.at("opt_fake_steps");
    state.opt_disc.steps = blob.counters.at("opt_disc_steps");
    state.gen_steps = blob.counters.at("gen_steps");
    state.fake_steps = blob.counters.at("fake_steps");
    state.loss_scale = blob.tensors.at("loss_scale")[0];
  }

  auto persist = [&](const DistillState& st) {
    save_net((dir / "generator.ckpt").string(), st.generator);
    PredictorNet ema = st.generator;
    ema.params() = st.ema_params;
    save_net((dir / "generator_ema.ckpt").string(), ema);
    save_net((dir / "fake.ckpt").string(), st.fake);
    save_disc((dir / "disc.ckpt").string(), st.disc);
    StateBlob blob;
    blob.tensors["generator"] = st.generator.params();
    blob.tensors["fake"] = st.fake.params();
    blob.tensors["disc"] = st.disc.params();
    blob.tensors["ema"] = st.ema_params;
    blob.tensors["opt_gen_m"] = st.opt_gen.m;
    blob.tensors["opt_gen_v"] = st.opt_gen.v;
    blob.tensors["opt_fake_m"] = st.opt_fake.m;
    blob.tensors["opt_fake_v"] = st.opt_fake.v;
    blob.tensors["opt_disc_m"] = st.opt_disc.m;
    blob.tensors["opt_disc_v"] = st.opt_disc.v;
    blob.tensors["loss_scale"] = Vec::Constant(1, st.loss_scale);
    blob.counters["opt_gen_steps"] = st.opt_gen.steps;
    blob.counters["opt_fake_steps"] = st.opt_fake.steps;
    blob.counters["opt_disc_steps"] = st.opt_disc.steps;
    blob.counters["gen_steps"] = st.gen_steps;
    blob.counters["fake_steps"] = st.fake_steps;
    save_state_blob(state_path.string(), blob);
  };

  const int every = std::max(1, dcfg.steps / 10);
  auto res = distill(dcfg, s, teacher, data, codec, proxy,
                     [&](long, const DistillState& st) { persist(st); },
                     every, &state);
  write_distill_log(dir / "distill_log.csv", res.log, resuming);
  if (!resuming && data_file != (dir / "train.rsdt").string())
    fs::copy_file(data_file, dir / "train.rsdt",
                  fs::copy_options::overwrite_existing);
  if (!resuming && tpath != (dir / "teacher.ckpt").string())
    fs::copy_file(tpath, dir / "teacher.ckpt",
                  fs::copy_options::overwrite_existing);
  std::cout << "rsd generator: " << (dir / "generator.ckpt").string()
            << '\n';
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& test_path,
             const std::string& teacher_path, const std::string& rsd_path,
             const std::string& vsd_path, std::string methods_csv) {
  RunConfig cfg = effective_config(args);
  fs::path dir = prepare_run_dir(args, "eval", cfg);
  Schedule s = make_schedule(cfg);
  Dataset test = load_dataset(test_path);
  IdentityCodec codec;
  PerceptualProxy proxy = make_proxy(cfg, test.shape);

  EvalContext ctx;
  ctx.schedule = &s;
  ctx.codec = &codec;
  ctx.proxy = &proxy;
  ctx.ssim_window = cfg.eval.window;
  ctx.luma = cfg.eval.luma;
  std::optional<PredictorNet> teacher, rsd_gen, vsd_gen;
  if (!teacher_path.empty()) {
    teacher = load_net(teacher_path);
    ctx.teacher = &*teacher;
  }
  if (!rsd_path.empty()) {
    rsd_gen = load_net(rsd_path);
    ctx.rsd_generator = &*rsd_gen;
  }
  if (!vsd_path.empty()) {
    vsd_gen = load_net(vsd_path);
    ctx.vsd_generator = &*vsd_gen;
  }

  std::vector<std::string> methods;
  if (methods_csv.empty()) {
    methods.push_back("baseline");
    if (ctx.teacher) {
      methods.push_back("teacher@" + std::to_string(s.steps()));
      if (cfg.eval.teacher_steps != s.steps())
        methods.push_back("teacher@" +
                          std::to_string(cfg.eval.teacher_steps));
    }
    if (ctx.rsd_generator) methods.push_back("rsd-student");
    if (ctx.vsd_generator) methods.push_back("vsd-student");
  } else {
    std::istringstream is(methods_csv);
    std::string tok;
    while (std::getline(is, tok, ',')) methods.push_back(tok);
  }

  std::vector<EvalRow> rows;
  for (const auto& m : methods)
    rows.push_back(evaluate_method(m, ctx, test, eval_seeds(cfg)));
  write_eval_csv((dir / "report.csv").string(), rows);
  std::cout << "method,nfe,psnr_db,ssim,perc_proxy\n";
  for (const auto& r : rows)
    std::cout << r.method << ',' << r.nfe << ',' << r.psnr_db << ','
              << r.ssim << ',' << r.perc_proxy << '\n';
  std::cout << "report: " << (dir / "report.csv").string() << '\n';
  return 0;
}

int cmd_ablate(const CommonArgs& args, const std::string& kind,
               const std::string& teacher_path, const std::string& data_path,
               const std::string& test_path) {
  RunConfig cfg = effective_config(args);
  fs::path dir = prepare_run_dir(args, "ablate-" + kind, cfg);
  Schedule s = make_schedule(cfg);
  Dataset train = load_dataset(data_path);
  Dataset test = load_dataset(test_path);
  PredictorNet teacher = load_net(teacher_path);
  IdentityCodec codec;
  PerceptualProxy proxy = make_proxy(cfg, train.shape);
  DistillConfig base = make_distill_cfg(cfg);

  std::vector<EvalRow> rows;
  if (kind == "multistep") {
    rows = ablate_multistep(base, {1, 2, 4, 8, 15}, s, teacher, train, test,
                            codec, proxy, eval_seeds(cfg));
  } else if (kind == "losses") {
    rows = ablate_losses(base, s, teacher, train, test, codec, proxy,
                         eval_seeds(cfg));
  } else {
    throw ConfigError("ablate: kind must be multistep or losses");
  }
  const fs::path csv = dir / ("ablation_" + kind + ".csv");
  write_eval_csv(csv.string(), rows);
  write_metric_svg((dir / ("ablation_" + kind + ".svg")).string(), rows,
                   "psnr");
  std::cout << "ablation table: " << csv.string() << '\n';
  for (const auto& r : rows)
    std::cout << r.method << ": psnr=" << r.psnr_db << " ssim=" << r.ssim
              << " perc=" << r.perc_proxy << '\n';
  return 0;
}

int cmd_verify(const CommonArgs& args) {
  RunConfig cfg = effective_config(args);
  fs::path dir = prepare_run_dir(args, "verify", cfg);
  Schedule s = make_schedule(cfg);

  const std::string table = verify::schedule_table_csv(s);
  std::ofstream(dir / "schedule.csv") << table;
  std::cout << table;

  auto results = verify::run_all_checks(cfg.data.seed);
  verify::write_check_csv((dir / "verify.csv").string(), results);
  std::cout << "check,max_error,tolerance,pass\n";
  for (const auto& r : results)
    std::cout << r.name << ',' << r.max_error << ',' << r.tolerance << ','
              << (r.pass ? "1" : "0") << '\n';
  if (!verify::all_pass(results)) {
    std::cerr << "verification FAILED\n";
    return 2;
  }
  std::cout << "all checks passed\n";
  return 0;
}

int cmd_plot(const std::string& in_csv, const std::string& metric,
             const std::string& out_svg) {
  auto rows = read_eval_csv(in_csv);
  write_metric_svg(out_svg, rows, metric);
  std::cout << "wrote " << out_svg << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "rsd: residual-shifting diffusion super-resolution lab\n"
      "Configuration keys (override with --set section.key=value):\n" +
      config_help()};
  app.require_subcommand(1);

  CommonArgs common;
  app.add_option("--config", common.config_path, "INI configuration file");
  app.add_option("--set", common.overrides,
                 "override a key: section.key=value");
  app.add_option("--run-root", common.run_root,
                 "run directory root (or env RSD_RUN_ROOT)");
  app.add_option("--out", common.out_dir,
                 "exact run directory (skips timestamp naming)");
  app.add_option("--name", common.name, "run directory label");

  auto* mk = app.add_subcommand("make-data", "synthesize paired SR data");

  std::string data_path, teacher_path, test_path, rsd_path, vsd_path;
  std::string method, kind, methods_csv, metric = "psnr";
  std::string plot_in, plot_out;

  auto* tt = app.add_subcommand("train-teacher", "train the denoiser");
  tt->add_option("--data", data_path, "training dataset (.rsdt)");
  tt->add_option("--resume", common.resume, "continue a previous run");

  auto* di = app.add_subcommand("distill", "distill a one-step generator");
  di->add_option("--method", method, "rsd or vsd")->required();
  di->add_option("--teacher", teacher_path, "teacher checkpoint");
  di->add_option("--data", data_path, "training dataset (.rsdt)");
  di->add_option("--resume", common.resume, "continue a previous run");

  auto* ev = app.add_subcommand("eval", "evaluate checkpoints on a test set");
  ev->add_option("--test", test_path, "test dataset (.rsdt)")->required();
  ev->add_option("--teacher", teacher_path, "teacher checkpoint");
  ev->add_option("--rsd", rsd_path, "rsd generator checkpoint");
  ev->add_option("--vsd", vsd_path, "vsd generator checkpoint");
  ev->add_option("--methods", methods_csv,
                 "comma list, e.g. teacher@15,rsd-student");

  auto* ab = app.add_subcommand("ablate", "train and evaluate a grid");
  ab->add_option("--kind", kind, "multistep or losses")->required();
  ab->add_option("--teacher", teacher_path, "teacher checkpoint")
      ->required();
  ab->add_option("--data", data_path, "training dataset")->required();
  ab->add_option("--test", test_path, "test dataset")->required();

  auto* vf =
      app.add_subcommand("verify", "run the kernel/identity check suites");

  auto* pl = app.add_subcommand("plot", "render a report CSV as SVG");
  pl->add_option("--in", plot_in, "input report csv")->required();
  pl->add_option("--metric", metric, "psnr, ssim or perc");
  pl->add_option("--out", plot_out, "output svg path")->required();

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // usage problems exit 1; --help exits 0
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (mk->parsed()) return cmd_make_data(common);
    if (tt->parsed()) return cmd_train_teacher(common, data_path);
    if (di->parsed())
      return cmd_distill(common, method, teacher_path, data_path);
    if (ev->parsed())
      return cmd_eval(common, test_path, teacher_path, rsd_path, vsd_path,
                      methods_csv);
    if (ab->parsed())
      return cmd_ablate(common, kind, teacher_path, data_path, test_path);
    if (vf->parsed()) return cmd_verify(common);
    if (pl->parsed()) return cmd_plot(plot_in, metric, plot_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
