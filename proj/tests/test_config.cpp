#include "rsd/config.hpp"

#include <doctest.h>

using namespace rsd;

TEST_CASE("empty config text yields all defaults") {
  RunConfig cfg = parse_config_text("");
  CHECK(cfg.schedule.T == 15);
  CHECK(cfg.schedule.eta1 == doctest::Approx(1e-3));
  CHECK(cfg.schedule.etaT == doctest::Approx(0.999));
  CHECK(cfg.schedule.kappa == doctest::Approx(1.0));
  CHECK(cfg.schedule.shape == "log_linear");
}

TEST_CASE("shipped defaults match the published hyperparameters") {
  RunConfig cfg;
  CHECK(cfg.teacher.lr == doctest::Approx(5e-5));
  CHECK(cfg.distill.lr == doctest::Approx(5e-5));
  CHECK(cfg.teacher.beta1 == doctest::Approx(0.9));
  CHECK(cfg.teacher.beta2 == doctest::Approx(0.95));
  CHECK(cfg.distill.beta1 == doctest::Approx(0.9));
  CHECK(cfg.distill.beta2 == doctest::Approx(0.95));
  CHECK(cfg.distill.K == 5);
  CHECK(cfg.distill.lambda1 == doctest::Approx(2.0));
  CHECK(cfg.distill.lambda2 == doctest::Approx(3e-3));
  CHECK(cfg.distill.N == 4);
  CHECK(cfg.schedule.T == 15);
  // loss normalization follows the published training recipe by default
  CHECK(cfg.distill.loss_norm);
}

TEST_CASE("parse, serialize, parse is idempotent") {
  const std::string text =
      "[schedule]\nT = 7\nkappa = 1.5\n\n[distill]\nK = 3\nlambda2 = "
      "0.01\n[data]\nkind = texture\nquantize = false\n";
  RunConfig a = parse_config_text(text);
  CHECK(a.schedule.T == 7);
  CHECK(a.distill.K == 3);
  CHECK(a.data.kind == "texture");
  CHECK(!a.data.quantize);
  const std::string echo = serialize_config(a);
  RunConfig b = parse_config_text(echo);
  CHECK(serialize_config(b) == echo);
}

TEST_CASE("unknown keys and type mismatches carry the line number") {
  try {
    parse_config_text("[schedule]\nT = 7\nbogus = 1\n", "test.ini");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("test.ini:3") != std::string::npos);
    CHECK(msg.find("bogus") != std::string::npos);
  }
  try {
    parse_config_text("[schedule]\nT = banana\n", "test.ini");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("test.ini:2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config_text("T = 7\n"), ConfigError);  // no section
}

TEST_CASE("command-line overrides") {
  RunConfig cfg;
  apply_override(cfg, "distill.K", "9");
  CHECK(cfg.distill.K == 9);
  apply_override(cfg, "distill.lambda1", "2");
  CHECK(cfg.distill.lambda1 == doctest::Approx(2.0));
  apply_override(cfg, "distill.lambda2", "0.003");
  CHECK(cfg.distill.lambda2 == doctest::Approx(0.003));
  CHECK_THROWS_AS(apply_override(cfg, "distill.nope", "1"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "badform", "1"), ConfigError);
}

TEST_CASE("typed views build the documented objects") {
  RunConfig cfg;
  cfg.schedule.T = 6;
  Schedule s = make_schedule(cfg);
  CHECK(s.steps() == 6);
  CHECK(validate(s, make_bounds(cfg)).empty());

  cfg.distill.N = 4;
  DistillConfig d = make_distill_cfg(cfg);
  CHECK(d.timesteps.size() == 4);
  CHECK(d.timesteps.back() == 6);

  cfg.distill.timesteps = "2,4,6";
  d = make_distill_cfg(cfg);
  CHECK(d.timesteps == std::vector<int>{2, 4, 6});

  cfg.eval.seeds = "3, 5, 8";
  auto seeds = eval_seeds(cfg);
  CHECK(seeds == std::vector<std::uint64_t>{3, 5, 8});
}

TEST_CASE("config help names every knob with its default") {
  const std::string help = config_help();
  CHECK(help.find("schedule.T (default 15)") != std::string::npos);
  CHECK(help.find("distill.lambda2 (default 0.003") != std::string::npos);
  CHECK(help.find("teacher.lr (default 5") != std::string::npos);
}
