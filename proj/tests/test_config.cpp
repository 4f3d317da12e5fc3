#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "clothtrack/config.hpp"

using namespace ct;

TEST_SUITE("config") {

TEST_CASE("sections prefix keys and values are trimmed") {
  Config cfg = Config::parse_string(
      "top = 1\n"
      "[sim]\n"
      "dt =  0.00033  \n"
      "substeps = 100\n"
      "[fit]\n"
      "gamma = 240\n");
  CHECK(cfg.get_int("top", 0) == 1);
  CHECK(cfg.get_double("sim.dt", 0.0) == doctest::Approx(0.00033));
  CHECK(cfg.get_int("sim.substeps", 0) == 100);
  CHECK(cfg.get_double("fit.gamma", 0.0) == 240.0);
}

TEST_CASE("comments and blank lines are ignored") {
  Config cfg = Config::parse_string(
      "# full-line comment\n"
      "\n"
      "[a]\n"
      "x = 3 ; trailing comment\n"
      "y = 4 # hash comment\n");
  CHECK(cfg.get_int("a.x", 0) == 3);
  CHECK(cfg.get_int("a.y", 0) == 4);
}

TEST_CASE("parse errors carry origin and line number") {
  try {
    Config::parse_string("[a]\nno equals sign here\n", "scene.ini");
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("scene.ini:2") != std::string::npos);
  }
  CHECK_THROWS_AS(Config::parse_string("[unterminated\n"), InputError);
  CHECK_THROWS_AS(Config::parse_string("= value-without-key\n"), InputError);
}

TEST_CASE("typed getters validate their input") {
  Config cfg = Config::parse_string(
      "[a]\n"
      "num = 1.5\n"
      "text = hello\n"
      "flag_on = true\n"
      "flag_off = 0\n"
      "vec = 1 -2 3.5\n");
  CHECK(cfg.get_double("a.num", 0.0) == 1.5);
  CHECK(cfg.get_string("a.text", "") == "hello");
  CHECK(cfg.get_bool("a.flag_on", false));
  CHECK_FALSE(cfg.get_bool("a.flag_off", true));
  Vec3 v = cfg.get_vec3("a.vec", Vec3::Zero());
  CHECK(v.isApprox(Vec3(1, -2, 3.5)));
  // defaults when absent
  CHECK(cfg.get_double("a.missing", 7.0) == 7.0);
  CHECK(cfg.get_vec3("a.missing", Vec3(1, 1, 1)).isApprox(Vec3(1, 1, 1)));
  // type errors are loud, not silent
  CHECK_THROWS_AS(cfg.get_double("a.text", 0.0), InputError);
  CHECK_THROWS_AS(cfg.get_int("a.num", 0), InputError);
  CHECK_THROWS_AS(cfg.get_bool("a.text", false), InputError);
  CHECK_THROWS_AS(cfg.get_vec3("a.text", Vec3::Zero()), InputError);
  CHECK_THROWS_AS(cfg.require_string("a.missing"), InputError);
}

TEST_CASE("overrides replace parsed values") {
  Config cfg = Config::parse_string("[sim]\nsubsteps = 100\n");
  cfg.apply_override("sim.substeps=50");
  CHECK(cfg.get_int("sim.substeps", 0) == 50);
  cfg.apply_override("sim.dt = 0.001");
  CHECK(cfg.get_double("sim.dt", 0.0) == 0.001);
  CHECK_THROWS_AS(cfg.apply_override("no-equals"), InputError);
  CHECK_THROWS_AS(cfg.apply_override("=nameless"), InputError);
}

TEST_CASE("unknown keys are rejected with the offender named") {
  Config cfg = Config::parse_string("[sim]\ndt = 0.001\nsubstepz = 5\n");
  try {
    cfg.validate_keys(known_config_keys());
    FAIL("expected InputError");
  } catch (const InputError& e) {
    std::string msg = e.what();
    CHECK(msg.find("sim.substepz") != std::string::npos);
    CHECK(msg.find("sim.dt") == std::string::npos);
  }
  Config ok = Config::parse_string("[sim]\ndt = 0.001\n[fit]\niterations = 0\n");
  CHECK_NOTHROW(ok.validate_keys(known_config_keys()));
}

TEST_CASE("dump is sorted and reparses to the same config") {
  Config cfg = Config::parse_string("[zz]\nb = 2\n[aa]\na = 1\n");
  std::string d = cfg.dump();
  CHECK(d.find("aa.a") < d.find("zz.b"));
  Config again = Config::parse_string(d);
  CHECK(again.values() == cfg.values());
}

}  // TEST_SUITE
