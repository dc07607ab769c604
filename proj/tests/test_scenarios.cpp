#include "blendlab/scenarios.hpp"

#include "catch_amalgamated.hpp"

#include <filesystem>
#include <fstream>

using namespace blendlab;

TEST_CASE("config parsing and validation") {
  std::map<std::string, std::string> kv{{"ss", "1"},     {"u", "1"},
                                        {"c", "1"},      {"lambda", "0.75"},
                                        {"nu", "0.1"},   {"b", "0.9"},
                                        {"seed", "42"},  {"delta", "0.3"}};
  ScenarioConfig cfg = ScenarioConfig::from_kv(kv);
  CHECK(cfg.seed == 42);
  cfg.validate_common();

  kv["nu"] = "0.8";
  CHECK_THROWS_WITH(ScenarioConfig::from_kv(kv).validate_common(),
                    Catch::Matchers::ContainsSubstring("nu < lambda"));
  kv["nu"] = "0.1";
  kv["b"] = "0.2";
  CHECK_THROWS_AS(ScenarioConfig::from_kv(kv).validate_common(), std::invalid_argument);
  kv["b"] = "0.9";
  kv["bogus"] = "1";
  CHECK_THROWS_WITH(ScenarioConfig::from_kv(kv), Catch::Matchers::ContainsSubstring("unknown key"));

  ScenarioConfig bad_fold;
  bad_fold.dims = Dimensions{1, 2, 3, 1, 1};
  CHECK_THROWS_WITH(bad_fold.validate_folding(),
                    Catch::Matchers::ContainsSubstring("c = u^2"));

  ScenarioConfig d0;
  d0.dims = Dimensions{1, 1, 1, 1, 0};
  CHECK_THROWS_WITH(d0.validate_jets(), Catch::Matchers::ContainsSubstring("d >= 1"));
}

TEST_CASE("config file round trip") {
  const std::string path = "/tmp/blendlab_test_config.txt";
  {
    std::ofstream out(path);
    out << "# comment line\n";
    out << "lambda = 0.75\n";
    out << "nu = 0.1    # trailing comment\n";
    out << "seed = 7\n";
  }
  ScenarioConfig cfg = ScenarioConfig::from_file(path);
  CHECK(cfg.lambda == 0.75);
  CHECK(cfg.nu == 0.1);
  CHECK(cfg.seed == 7);
}

TEST_CASE("run_covering passes on defaults and reproduces the b = 1 failure") {
  ScenarioConfig cfg;
  PipelineReport rep = run_covering(cfg);
  CHECK(rep.pass);
  REQUIRE(rep.stages.size() >= 3);
  CHECK(rep.stages[0].name == "plain_covering");
  CHECK(rep.stages[0].pass);
  bool found_L = false;
  for (const auto& [k, v] : rep.stages[0].details)
    if (k == "lebesgue_number") {
      CHECK(std::stod(v) == Catch::Approx(0.85).margin(0.01));
      found_L = true;
    }
  CHECK(found_L);
  CHECK(rep.stages[1].name == "b1_failure_reproduced");
  CHECK(rep.stages[1].pass);
  CHECK(rep.stages[2].name == "jet_covering");
  CHECK(rep.stages[2].pass);
}

TEST_CASE("run_blender succeeds on a reduced batch") {
  ScenarioConfig cfg;
  cfg.n_discs = 50;
  PipelineReport rep = run_blender(cfg);
  CHECK(rep.pass);
}

TEST_CASE("run_tangency produces a certificate and survives perturbations") {
  ScenarioConfig cfg;
  cfg.eta = 1e-3;
  cfg.n_perturbations = 5;
  PipelineReport rep = run_tangency(cfg);
  CHECK(rep.pass);
  bool have_cert = false;
  for (const auto& [name, blob] : rep.artifacts)
    if (name == "tangency_certificate") have_cert = blob.find("max_principal_angle") !=
                                                     std::string::npos;
  CHECK(have_cert);

  ScenarioConfig bad = cfg;
  bad.dims = Dimensions{1, 2, 3, 1, 1};
  CHECK_THROWS_AS(run_tangency(bad), std::invalid_argument);
}

TEST_CASE("run_cycle_unfolding passes at all anchors and rejects d = 0") {
  ScenarioConfig cfg;
  PipelineReport rep = run_cycle_unfolding(cfg);
  CHECK(rep.pass);
  CHECK(rep.stages.size() == 3);  // anchors 0, +0.1, -0.1

  ScenarioConfig d0 = cfg;
  d0.dims.d = 0;
  CHECK_THROWS_AS(run_cycle_unfolding(d0), std::invalid_argument);
}

TEST_CASE("run_paratangency passes and projects onto the tangency data") {
  ScenarioConfig cfg;
  PipelineReport rep = run_paratangency(cfg);
  CHECK(rep.pass);
  bool gap_small = false;
  for (const auto& st : rep.stages)
    for (const auto& [k, v] : st.details)
      if (k == "order0_projection_gap") gap_small = std::stod(v) < 1e-8;
  CHECK(gap_small);
}

TEST_CASE("run_appendix_verify reports the three-way agreement") {
  ScenarioConfig cfg;
  PipelineReport rep = run_appendix_verify(cfg);
  CHECK(rep.pass);
  for (const auto& st : rep.stages) CHECK(st.pass);
}

TEST_CASE("run_sweep reports the maximal passing eta per pipeline") {
  ScenarioConfig cfg;
  cfg.n_perturbations = 3;  // reduced batch; the acceptance suite runs 20
  PipelineReport rep = run_sweep(cfg);
  CHECK(rep.pass);
  for (const auto& st : rep.stages) {
    bool found = false;
    for (const auto& [k, v] : st.details)
      if (k == "max_passing_eta") {
        CHECK(std::stod(v) >= 1e-3);
        found = true;
      }
    CHECK(found);
  }
}

TEST_CASE("norm_report pairs the spectral norm with its co-norm") {
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 2.0;
  d(1, 1) = 0.5;
  NormReport r = norm_report(d);
  CHECK(r.sup_norm == Catch::Approx(2.0));
  CHECK(r.co_norm == Catch::Approx(0.5));
  CHECK(r.co_norm <= r.sup_norm);
}

TEST_CASE("reports are deterministic and serializable") {
  ScenarioConfig cfg;
  cfg.n_discs = 20;
  PipelineReport r1 = run_blender(cfg);
  PipelineReport r2 = run_blender(cfg);
  CHECK(r1.to_text() == r2.to_text());
  CHECK(r1.to_csv() == r2.to_csv());

  cfg.seed = 2;
  PipelineReport r3 = run_blender(cfg);
  CHECK(r1.to_text() != r3.to_text());

  // CSV has the expected header and one row per stage detail
  const std::string csv = r1.to_csv();
  CHECK(csv.rfind("pipeline,stage,status,key,value", 0) == 0);

  // file output
  cfg.out_dir = "/tmp/blendlab_test_reports";
  cfg.format = "csv";
  std::filesystem::remove_all(cfg.out_dir);
  write_report_files(r1, cfg);
  CHECK(std::filesystem::exists(cfg.out_dir + "/blender_report.txt"));
  CHECK(std::filesystem::exists(cfg.out_dir + "/blender_report.csv"));
}
