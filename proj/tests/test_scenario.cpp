#include <doctest.h>

#include <cmath>

#include "onestate/scenario.hpp"

using namespace onestate;

namespace {

const char* kFlight = R"(
[plant]
model = flight-f4e
[input]
kind = constant
level = 1
[disturbance]
zeta0 = 1
zeta1 = 0.5
t_fault = 20
[noise]
sigma2 = 2
seed = 1
[horizon]
t_end = 40
tau = 0.112
align = snap
)";

// One state with A = -1, B = C = 1 and tau = ln 2: e^{tau A} = 1/2 and
// M = 1/2, so the whole run can be written down by hand.
const char* kToy = R"(
[plant]
model = explicit
a = -1
b = 1
c = 1
[disturbance]
t_fault = 1.3862943611198906
[noise]
sigma2 = 0
[horizon]
t_end = 2.772588722239781
tau = 0.6931471805599453
align = snap
)";

std::string field_of(const std::string& text) {
  try {
    parse_config_string(text);
  } catch (const ConfigError& e) {
    return e.field;
  }
  return "<no error>";
}

}  // namespace

TEST_CASE("defaults match the flight instance") {
  const ScenarioConfig c = parse_config_string("");
  CHECK(c.plant_model == "flight-f4e");
  CHECK(c.levels.zeta0 == 1.0);
  CHECK(c.levels.zeta1 == 0.5);
  CHECK(c.noise.sigma2 == 2.0);
  CHECK(c.design.epsilon == 1e-3);
  CHECK(c.design.window == 20.0);
  CHECK(c.input.is_constant());
  CHECK(*c.t_fault == 20.0);
  CHECK(c.t_end == 40.0);
}

TEST_CASE("config errors name the field") {
  CHECK(field_of("[noise]\nbogus = 1\n") == "noise.bogus");
  CHECK(field_of("[extra]\nx = 1\n") == "extra");
  CHECK(field_of("[noise]\nsigma2 = abc\n") == "noise.sigma2");
  CHECK(field_of("[noise]\nsigma2 = -1\n") == "noise.sigma2");
  CHECK(field_of("[noise]\nseed = 1.5\n") == "noise.seed");
  CHECK(field_of("[disturbance]\nzeta1 = 1\n") == "disturbance.zeta1");
  CHECK(field_of("[disturbance]\nzeta1 = 2\n") == "disturbance.zeta1");
  CHECK(field_of("[horizon]\ntau = 0\n") == "horizon.tau");
  CHECK(field_of("[horizon]\nalign = loose\n") == "horizon.align");
  CHECK(field_of("[run]\nmode = dance\n") == "run.mode");
  CHECK(field_of("[plant]\nmodel = explicit\na = 1\n") == "plant.b");
  CHECK(field_of("[plant]\nmodel = explicit\na = 1, 2; 3\nb = 1\nc = 1\n") == "plant.a");
  CHECK(field_of("[plant]\nmodel = explicit\na = 1\nb = 1; 1\nc = 1\n") == "plant");
  CHECK(field_of("[plant]\na = 1\n") == "plant.a");
  CHECK(field_of("[input]\nkind = square\n") == "input.kind");
  CHECK(field_of("[input]\nkind = sampled\nvalues = 1, 2\nstep = 0\n") == "input");
  CHECK(field_of("[input]\nkind = sampled\nvalues = 1, 2\n[horizon]\ntau = auto-design\n") ==
        "horizon.tau");
  CHECK(field_of("[design]\nepsilon = 1\n") == "design.epsilon");
  CHECK(field_of("[disturbance]\nt_fault = 50\n") == "disturbance.t_fault");
}

TEST_CASE("explicit matrices parse row by row") {
  const ScenarioConfig c = parse_config_string(
      "[plant]\nmodel = explicit\na = -1 2; 0 -3\nb = 0; 1\nc = 1, 0\n");
  REQUIRE(c.a);
  CHECK(c.a->rows() == 2);
  CHECK((*c.a)(0, 1) == 2.0);
  CHECK((*c.a)(1, 1) == -3.0);
  CHECK(c.b->rows() == 2);
  CHECK(c.c->cols() == 2);
}

TEST_CASE("duplicate sections are rejected") {
  CHECK_THROWS_AS(parse_config_string("[noise]\nsigma2 = 1\n[noise]\nseed = 2\n"), ConfigError);
}

TEST_CASE("special values") {
  const ScenarioConfig c =
      parse_config_string("[disturbance]\nt_fault = none\n[horizon]\ntau = auto-design\n");
  CHECK_FALSE(c.t_fault);
  CHECK_FALSE(c.tau);
  const ScenarioConfig s = parse_config_string(
      "[input]\nkind = sinusoid\namplitude = 2\nomega = 0.5\nphase = 0.1\n[run]\nmode = sweep\n");
  CHECK(s.input.is_periodic());
  CHECK(s.mode == RunMode::sweep);
  CHECK(parse_run_mode("monte-carlo") == RunMode::monte_carlo);
}

TEST_CASE("strict alignment rejects off-grid horizons") {
  ScenarioConfig c = parse_config_string(kFlight);
  c.align = GridAlign::strict;
  try {
    resolve(c);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field == "horizon.t_end");
  }
  c.tau = 0.1;
  const ResolvedScenario r = resolve(c);
  CHECK(r.steps == 400);
  CHECK(*r.k_fault == 200);
  CHECK(std::abs(r.steps * r.tau - c.t_end) <= 1e-9);
}

TEST_CASE("snap alignment rounds up") {
  const ResolvedScenario r = resolve(parse_config_string(kFlight));
  CHECK(r.steps == 358);
  CHECK(*r.k_fault == 179);
  CHECK(r.t_end == doctest::Approx(358 * 0.112));
}

TEST_CASE("auto-design resolves tau") {
  ScenarioConfig c = parse_config_string(kFlight);
  c.tau.reset();
  const ResolvedScenario r = resolve(c);
  REQUIRE(r.design);
  CHECK(r.tau == doctest::Approx(0.112).epsilon(0.02));
  c.noise.sigma2 = 40.0;
  c.design.sigma2 = 40.0;
  CHECK_THROWS_AS(resolve(c), InfeasibleDesign);

  std::string text = kFlight;
  text.replace(text.find("kind = constant"), 15, "kind = sinusoid");
  ScenarioConfig s = parse_config_string(text);
  s.tau.reset();
  const ResolvedScenario rs = resolve(s);
  REQUIRE(rs.sweep);
  CHECK(rs.tau == rs.sweep->argmax);
}

TEST_CASE("golden trace CSV") {
  const RunReport rep = run_trace(parse_config_string(kToy));
  const std::string expected =
      "k,t,y,r,zhat,z,e_norm,d_norm,y_nominal,y_uncompensated\n"
      "0,0,0,0,nominal,nominal,0,0,0,0\n"
      "1,0.69314718056,0.5,0.5,nominal,nominal,0,0,0.5,0.5\n"
      "2,1.38629436112,0.75,0.75,nominal,nominal,0,0,0.75,0.75\n"
      "3,2.07944154168,0.625,0.625,faulty,faulty,0.25,0,0.875,0.625\n"
      "4,2.77258872224,0.8125,0.8125,faulty,faulty,0.125,0,0.9375,0.5625\n";
  CHECK(rep.files.at("trace.csv") == expected);
  CHECK(rep.summary["schema_version"] == kSchemaVersion);
  CHECK(rep.summary["grid"]["k_fault"] == 2);
  CHECK(rep.summary["trace"]["errors"] == 0);
  CHECK(rep.summary["trace"]["peak_deviation_post"].get<double>() == doctest::Approx(0.25));
}

TEST_CASE("vector outputs get numbered columns") {
  const RunReport rep = run_trace(parse_config_string(
      "[plant]\nmodel = explicit\na = -1 0; 0 -2\nb = 1; 1\nc = 1 0; 0 1\n"
      "[horizon]\nt_end = 1\ntau = 0.5\n[disturbance]\nt_fault = 0.5\n"));
  const std::string& csv = rep.files.at("trace.csv");
  CHECK(csv.substr(0, csv.find('\n')) ==
        "k,t,y1,y2,r1,r2,zhat,z,e_norm,d_norm,y_nominal1,y_nominal2,y_uncompensated1,"
        "y_uncompensated2");
}

TEST_CASE("dense output is opt-in") {
  ScenarioConfig c = parse_config_string(kToy);
  CHECK(run_trace(c).files.count("trace_dense.csv") == 0);
  c.dense_refine = 4;
  const RunReport rep = run_trace(c);
  const std::string& dense = rep.files.at("trace_dense.csv");
  CHECK(dense.substr(0, dense.find('\n')) == "t,y,y_nominal,y_uncompensated");
  CHECK(std::count(dense.begin(), dense.end(), '\n') == 1 + 4 * 4 + 1);
}

TEST_CASE("reports are bit-identical for the same config and seed") {
  const ScenarioConfig c = parse_config_string(kFlight);
  const RunReport a = run_trace(c);
  const RunReport b = run_trace(c);
  CHECK(a.summary.dump() == b.summary.dump());
  CHECK(a.files == b.files);
  const RunReport ma = run_montecarlo(c, 8);
  const RunReport mb = run_montecarlo(c, 8);
  CHECK(ma.summary.dump() == mb.summary.dump());
  CHECK(ma.files == mb.files);
  ScenarioConfig other = c;
  other.noise.seed = 2;
  CHECK(run_trace(other).files.at("trace.csv") != a.files.at("trace.csv"));
}

TEST_CASE("parallel_for visits every index once") {
  std::vector<int> hits(1000, 0);
  parallel_for(1000, [&](int i) { hits[static_cast<std::size_t>(i)] += 1; });
  for (int h : hits) CHECK(h == 1);
  CHECK_THROWS(parallel_for(10, [](int i) {
    if (i == 7) throw std::runtime_error("boom");
  }));
}

TEST_CASE("design run emits the sweep tables") {
  ScenarioConfig c = parse_config_string(kFlight);
  c.sigma2_points = 50;
  const RunReport rep = run_design(c);
  CHECK(rep.exit_code == 0);
  CHECK(rep.summary["design"]["tau_opt"].get<double>() == doctest::Approx(0.112).epsilon(0.02));
  CHECK(rep.summary["sigma2_boundary"].get<double>() == doctest::Approx(34.72).epsilon(0.5 / 34.72));
  const std::string& edp = rep.files.at("sweep_edp.csv");
  CHECK(edp.substr(0, edp.find('\n')) == "tau,steps,edp,edp_floor,edp_real,peak,feasible");
  const std::string& cm = rep.files.at("sweep_cm.csv");
  CHECK(cm.substr(0, cm.find('\n')) == "tau,cm,is_tau0");
  const std::string& sig = rep.files.at("sweep_sigma.csv");
  CHECK(sig.substr(0, sig.find('\n')) == "sigma2,tau_opt,feasible");

  c.noise.sigma2 = 40.0;
  c.design.sigma2 = 40.0;
  const RunReport bad = run_design(c);
  CHECK(bad.exit_code == 3);
  CHECK(bad.files.count("sweep_edp.csv") == 1);
}

TEST_CASE("sweep run for f = sin t") {
  const RunReport rep = run_sweep(parse_config_string("[input]\nkind = sinusoid\n"));
  const auto suitable = rep.summary["sweep"]["suitable"].get<std::vector<double>>();
  auto has = [&](double x) {
    return std::any_of(suitable.begin(), suitable.end(), [&](double y) { return std::abs(x - y) < 1e-9; });
  };
  CHECK(has(0.525));
  CHECK(has(0.35));
  const std::string& csv = rep.files.at("sweep_periodic.csv");
  CHECK(csv.substr(0, csv.find('\n')) == "tau,steps,edp,log_edp,peak,suitable,argmax");
}

TEST_CASE("validate-dep") {
  SUBCASE("zero noise gives exact zeros") {
    ScenarioConfig c = parse_config_string(kFlight);
    c.noise.sigma2 = 0.0;
    const RunReport rep = run_validate_dep(c, 10000);
    CHECK(rep.summary["validate_dep"]["all_inside"] == true);
    const std::string& csv = rep.files.at("dep_validation.csv");
    CHECK(csv.find(",0,10000,0,0,0,1\n") != std::string::npos);
  }
  SUBCASE("flight, tau = 0.112, sigma^2 = 2, 1e5 trials") {
    const RunReport rep = run_validate_dep(parse_config_string(kFlight), 100000);
    CHECK(rep.summary["validate_dep"]["outside_band"] == 0);
  }
  SUBCASE("too few trials") {
    CHECK_THROWS_AS(run_validate_dep(parse_config_string(kFlight), 100), ConfigError);
  }
}

TEST_CASE("binomial band") {
  const auto [lo, hi] = binomial_band(100000, 0.1);
  const double sd = std::sqrt(100000 * 0.1 * 0.9);
  CHECK(lo == doctest::Approx(10000 - 3 * sd).epsilon(0.002));
  CHECK(hi == doctest::Approx(10000 + 3 * sd).epsilon(0.002));
  CHECK(binomial_band(10000, 0.0) == std::pair<long, long>{0, 0});
  CHECK(binomial_band(10000, 6e-6).first == 0);
  CHECK(binomial_band(10000, 6e-6).second >= 1);
  CHECK(binomial_band(10000, 6e-6).second <= 2);
}

TEST_CASE("config echo round-trips the main fields") {
  const ScenarioConfig c = parse_config_string(kToy);
  const nlohmann::json j = c.to_json();
  CHECK(j["plant"]["model"] == "explicit");
  CHECK(j["plant"]["a"][0][0] == -1.0);
  CHECK(j["horizon"]["align"] == "snap");
  CHECK(j["noise"]["sigma2"] == 0.0);
  CHECK(parse_config_string("[horizon]\ntau = auto-design\n").to_json()["horizon"]["tau"] ==
        "auto-design");
}
