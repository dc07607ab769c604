#pragma once

// Scenario pipelines: each reproduces one construction end to end at desk
// scale, re-validating every hypothesis inequality, and emits a structured
// text / CSV report with embedded certificates.

#include "blendlab/jets.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>

namespace blendlab {

// ---------------------------------------------------------------------------

struct ScenarioConfig {
  Dimensions dims{1, 1, 1, 1, 1};
  double lambda = 0.75;
  double beta = 0.8;
  double nu = 0.1;
  double b = 0.9;
  double theta = 0.5;
  double epsilon = 0.0;  // 0 -> default 0.1 * min(sqrt(delta), theta)
  double delta = 0.3;
  double alpha = 2.0;
  int N = 100;
  double tol = 1e-10;
  double eta = 0.0;
  std::uint64_t seed = 1;
  int n_discs = 1000;
  int n_perturbations = 20;
  int r_budget = 0;  // 0 -> d + 2; differentiability metadata only
  std::string out_dir;
  std::string format = "text";

  double effective_epsilon() const {
    return epsilon > 0.0 ? epsilon
                         : 0.1 * std::min(std::sqrt(std::max(delta, 1e-12)), theta);
  }
  int effective_r() const { return r_budget > 0 ? r_budget : dims.d + 2; }

  static ScenarioConfig from_kv(const std::map<std::string, std::string>& kv);
  static ScenarioConfig from_file(const std::string& path);

  // Structural hypothesis checks shared by every pipeline; the delta < L
  // bound needs the computed Lebesgue number and is re-validated inside the
  // pipelines.
  void validate_common() const {
    dims.validate();
    require(nu < lambda && lambda < beta && beta < 1.0,
            "config: need nu < lambda < beta < 1");
    require(0.5 < lambda, "config: need 1/2 < lambda");
    const double lo = (1.0 - lambda) / lambda;
    require(lo < b && b < 1.0, "config: need (1-lambda)/lambda < b < 1");
    require(delta > 0.0 && alpha > 0.0 && theta > 0.0, "config: positive parameters");
  }
  void validate_folding() const {
    if (!dims.folding_compatible())
      throw std::invalid_argument("config: folding pipelines require c = u^2");
    // Thm-D-style dimension bound with c read as the tangency codimension u.
    if (!(dims.m() > dims.u * dims.u + dims.u))
      throw std::invalid_argument("config: tangency pipelines require m > u^2 + u");
  }
  void validate_jets() const {
    require(dims.k >= 1, "config: jet pipelines require k >= 1");
    if (dims.d < 1)
      throw std::invalid_argument("config: jet pipelines require d >= 1");
    if (!(dims.d < effective_r()))
      throw std::invalid_argument("config: need d < r differentiability budget");
  }
  void validate_cycle() const {
    if (!(dims.m() > 1 + dims.c))
      throw std::invalid_argument("config: cycle pipelines require m > 1 + c");
    validate_jets();
  }
  void validate_paratangency() const {
    validate_folding();
    validate_jets();
    if (!(dims.d < effective_r() - 1))
      throw std::invalid_argument("config: paratangency requires d < r - 1");
  }
};

inline ScenarioConfig ScenarioConfig::from_kv(
    const std::map<std::string, std::string>& kv) {
  ScenarioConfig cfg;
  for (const auto& [key, val] : kv) {
    if (key == "ss") cfg.dims.ss = std::stoi(val);
    else if (key == "u") cfg.dims.u = std::stoi(val);
    else if (key == "c") cfg.dims.c = std::stoi(val);
    else if (key == "k") cfg.dims.k = std::stoi(val);
    else if (key == "d") cfg.dims.d = std::stoi(val);
    else if (key == "lambda") cfg.lambda = std::stod(val);
    else if (key == "beta") cfg.beta = std::stod(val);
    else if (key == "nu") cfg.nu = std::stod(val);
    else if (key == "b") cfg.b = std::stod(val);
    else if (key == "theta") cfg.theta = std::stod(val);
    else if (key == "epsilon") cfg.epsilon = std::stod(val);
    else if (key == "delta") cfg.delta = std::stod(val);
    else if (key == "alpha") cfg.alpha = std::stod(val);
    else if (key == "N") cfg.N = std::stoi(val);
    else if (key == "tol") cfg.tol = std::stod(val);
    else if (key == "eta") cfg.eta = std::stod(val);
    else if (key == "seed") cfg.seed = std::stoull(val);
    else if (key == "n_discs") cfg.n_discs = std::stoi(val);
    else if (key == "n_perturbations") cfg.n_perturbations = std::stoi(val);
    else if (key == "r") cfg.r_budget = std::stoi(val);
    else if (key == "out") cfg.out_dir = val;
    else if (key == "format") cfg.format = val;
    else if (key == "pipeline") { /* informational */ }
    else throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  return cfg;
}

inline ScenarioConfig ScenarioConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b2 = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b2 - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (!key.empty()) kv[key] = val;
  }
  return from_kv(kv);
}

// ---------------------------------------------------------------------------

struct StageResult {
  std::string name;
  bool pass = false;
  std::vector<std::pair<std::string, std::string>> details;

  void put(const std::string& key, double v) { details.emplace_back(key, format_double(v)); }
  void put(const std::string& key, const std::string& v) { details.emplace_back(key, v); }
};

struct PipelineReport {
  std::string pipeline;
  bool pass = false;
  std::vector<StageResult> stages;
  std::vector<std::pair<std::string, std::string>> artifacts;  // certificates etc
  double elapsed_seconds = 0.0;  // console only, never serialized

  StageResult& stage(const std::string& name) {
    StageResult st;
    st.name = name;
    stages.push_back(std::move(st));
    return stages.back();
  }
  void finalize() {
    pass = !stages.empty();
    for (const auto& s : stages) pass = pass && s.pass;
  }

  std::string to_text() const {
    std::ostringstream os;
    os << "pipeline: " << pipeline << "\n";
    os << "result: " << (pass ? "pass" : "fail") << "\n";
    for (const auto& s : stages) {
      os << "stage: " << s.name << " [" << (s.pass ? "pass" : "fail") << "]\n";
      for (const auto& [k, v] : s.details) os << "  " << k << ": " << v << "\n";
    }
    for (const auto& [name, blob] : artifacts) {
      os << "artifact: " << name << "\n";
      std::istringstream is(blob);
      std::string line;
      while (std::getline(is, line)) os << "  " << line << "\n";
    }
    return os.str();
  }
  std::string to_csv() const {
    std::ostringstream os;
    os << "pipeline,stage,status,key,value\n";
    for (const auto& s : stages) {
      if (s.details.empty())
        os << pipeline << "," << s.name << "," << (s.pass ? "pass" : "fail") << ",,\n";
      for (const auto& [k, v] : s.details)
        os << pipeline << "," << s.name << "," << (s.pass ? "pass" : "fail") << ","
           << k << "," << v << "\n";
    }
    return os.str();
  }
};

inline void write_report_files(const PipelineReport& rep, const ScenarioConfig& cfg) {
  if (cfg.out_dir.empty()) return;
  std::filesystem::create_directories(cfg.out_dir);
  const std::string base = cfg.out_dir + "/" + rep.pipeline + "_report";
  {
    std::ofstream out(base + ".txt");
    out << rep.to_text();
  }
  if (cfg.format == "csv") {
    std::ofstream out(base + ".csv");
    out << rep.to_csv();
  }
}

// ---------------------------------------------------------------------------
// Candidate-set shrink at nonzero anchors: conditioned on the higher-order
// sign choices, the order-0 translations only span
// (1-lambda)(1 - sum_{iota != 0} |a0^iota|), so the candidate must shrink.

inline double anchored_bhat(double b, const Vector& a0,
                            const std::shared_ptr<const MultiIndexSet>& mis) {
  double tau = 0.0;
  for (int p = 1; p < mis->size(); ++p) {
    double mono = 1.0;
    for (int i = 0; i < mis->k; ++i)
      for (int e = 0; e < mis->idx[p][i]; ++e) mono *= std::abs(a0(i));
    tau += mono;
  }
  return std::min(b, 1.0 - tau - 0.05);
}

// ---------------------------------------------------------------------------

inline PipelineReport run_covering(const ScenarioConfig& cfg) {
  PipelineReport rep;
  rep.pipeline = "covering";
  cfg.validate_common();

  {
    StageResult& st = rep.stage("plain_covering");
    FiberIFS ifs = standard_fiber_ifs(cfg.lambda, cfg.dims.c, cfg.b);
    CoveringCertificate cert = check_covering(ifs);
    double L = 0.0, dmax = 0.0;
    if (cert.covered) {
      L = lebesgue_number(ifs, cert);
      cert.lebesgue_number = L;
      dmax = delta_bound(cfg.lambda, L);
    }
    st.pass = cert.covered;
    st.put("margin", cert.margin);
    st.put("lebesgue_number", L);
    st.put("delta_max", dmax);
    st.put("delta_config_admissible", cfg.delta < dmax ? "true" : "false");
    rep.artifacts.emplace_back("plain_covering_certificate", cert.to_text());
  }
  {
    // Open-question reproduction: the paper's B = (-1,1)^c reading fails the
    // strict covering at the endpoint fixed points.
    StageResult& st = rep.stage("b1_failure_reproduced");
    FiberIFS ifs = standard_fiber_ifs(cfg.lambda, cfg.dims.c, 1.0, /*checked=*/false);
    CoveringCertificate cert = check_covering(ifs);
    bool witness_near_one = false;
    for (const auto& w : cert.failures)
      if (std::abs(sup_norm(w) - 1.0) < 1e-3) witness_near_one = true;
    st.pass = !cert.covered && witness_near_one;
    st.put("status", cert.covered ? "covered" : "uncovered");
    st.put("witnesses", static_cast<double>(cert.failures.size()));
    rep.artifacts.emplace_back("b1_certificate", cert.to_text());
  }
  if (cfg.dims.k >= 1 && cfg.dims.d >= 1) {
    StageResult& st = rep.stage("jet_covering");
    FiberIFS plain = standard_fiber_ifs(cfg.lambda, cfg.dims.c, cfg.b);
    CoveringCertificate pcert = check_covering(plain);
    const double L = pcert.covered ? lebesgue_number(plain, pcert) : 0.0;
    FiberIFS ifs = jet_fiber_ifs(cfg.lambda, cfg.dims.k, cfg.dims.d, cfg.dims.c, cfg.b);
    CoveringCertificate cert = check_covering(ifs);
    double Lh = 0.0;
    if (cert.covered) Lh = lebesgue_number(ifs, cert);
    st.pass = cert.covered;
    st.put("jet_dim", static_cast<double>(ifs.c()));
    st.put("lebesgue_number_hat", Lh);
    st.put("delta_max_hat", cert.covered ? delta_bound(cfg.lambda, Lh) : 0.0);
    // the jet cover's Lebesgue number never exceeds the plain one; computed
    // directly, reported as a comparison
    st.put("lebesgue_hat_le_plain", Lh <= L + 1e-12 ? "true" : "false");
  }
  rep.finalize();
  return rep;
}

// ---------------------------------------------------------------------------

inline PipelineReport run_blender(const ScenarioConfig& cfg) {
  PipelineReport rep;
  rep.pipeline = "blender";
  cfg.validate_common();

  SkewProductSystem sys = affine_model(cfg.dims, cfg.lambda, cfg.nu, cfg.b, cfg.beta);
  CoveringCertificate cov = check_covering(sys.fiber);
  const double L = cov.covered ? lebesgue_number(sys.fiber, cov) : 0.0;
  const double dmax = cov.covered ? delta_bound(cfg.lambda, L) : 0.0;
  {
    StageResult& st = rep.stage("model_and_covering");
    st.pass = cov.covered && cfg.delta < dmax;
    st.put("lebesgue_number", L);
    st.put("delta_max", dmax);
  }
  {
    StageResult& st = rep.stage("randomized_discs");
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    int attempted = 0, certified = 0, succeeded = 0;
    double worst_residual = 0.0, worst_margin = std::numeric_limits<double>::infinity();
    const double delta = std::min(cfg.delta, 0.95 * dmax);
    while (certified < cfg.n_discs && attempted < 20 * cfg.n_discs) {
      ++attempted;
      const double y0 = 0.85 * uni(rng);
      const double amp = 0.8 * delta * std::abs(uni(rng));
      const double freq = 1.0 + 2.0 * std::abs(uni(rng));
      if (std::abs(y0) + amp > cfg.b - 0.01) continue;
      HorizontalDisc disc;
      disc.domain = sys.base.stable_box;
      Vector g0 = sys.base.cells[attempted % sys.kappa()].center();
      const int cdim = sys.c();
      disc.g = [g0](const Vector&) { return g0; };
      disc.h = [y0, amp, freq, cdim](const Vector& xi) {
        Vector h(cdim);
        for (int i = 0; i < cdim; ++i)
          h(i) = y0 + amp * std::sin(freq * xi(0) + 0.37 * i);
        return h;
      };
      disc.alpha = cfg.alpha;
      disc.delta = delta;
      disc.anchor = Vector::Constant(cdim, y0);
      HorizontalCertificate cert = certify_horizontal(disc, sys, 33);
      if (!cert.ok) continue;
      ++certified;
      BlenderOracleResult res = blender_intersection(sys, disc, 60, cfg.tol, &cert);
      if (res.success) {
        ++succeeded;
        worst_residual = std::max(worst_residual, res.witness.disc_residual);
        worst_margin = std::min(worst_margin, res.witness.containment_margin);
      }
    }
    st.pass = certified == cfg.n_discs && succeeded == certified &&
              worst_residual < 1e-10 && worst_margin >= 0.0;
    st.put("discs", static_cast<double>(certified));
    st.put("succeeded", static_cast<double>(succeeded));
    st.put("worst_disc_residual", worst_residual);
    st.put("worst_containment_margin", worst_margin);
  }
  rep.finalize();
  return rep;
}

// ---------------------------------------------------------------------------

struct TangencyRunResult {
  bool ok = false;
  TangencyCertificate certificate;
  double chart_rate = 0.0;  // certified chart contraction at the chosen theta
  std::string message;
};

// One tangency construction pass: model -> Grassmann lift -> folding disc ->
// oracle -> certificate.  eta > 0 perturbs both the system and the manifold.
inline TangencyRunResult tangency_single_run(const ScenarioConfig& cfg, double eta,
                                             std::uint64_t seed) {
  TangencyRunResult out;
  SkewProductSystem sys = affine_model(cfg.dims, cfg.lambda, cfg.nu, cfg.b, cfg.beta);
  FoldingManifold fold = standard_folding(cfg.dims, cfg.effective_epsilon(), cfg.b);
  if (eta > 0.0) {
    sys = perturb_system(sys, eta, seed);
    fold = perturb_folding(fold, eta, seed + 1);
  }
  CoveringCertificate cov = check_covering(sys.fiber);
  if (!cov.covered) {
    out.message = "fiber covering failed";
    return out;
  }
  const double L = lebesgue_number(sys.fiber, cov);
  if (!(cfg.delta < delta_bound(sys.fiber.lambda, L))) {
    out.message = "delta exceeds lambda*L/2";
    return out;
  }
  const double theta_g = std::min(cfg.theta, fold.chart_radius());
  GrassmannSystem g = grassmann_skew_model(sys, theta_g);
  out.chart_rate = g.contraction_rho;
  FoldingCertificate fc = certify_folding(fold, cfg.alpha, sys.base.nu, cfg.delta, 4,
                                          theta_g, seed + 2);
  if (!fc.ok) {
    out.message = "folding certification failed: " + fc.failures.front();
    return out;
  }
  HorizontalDisc disc = induced_disc(fold, g, cfg.alpha, cfg.delta);
  HorizontalCertificate hc = certify_horizontal(disc, g.system, 5);
  if (!hc.ok) {
    out.message = "induced disc failed horizontality";
    return out;
  }
  BlenderOracleResult res = blender_intersection(g.system, disc, cfg.N, cfg.tol, &hc);
  if (!res.success) {
    out.message = "oracle failed: " + res.message;
    return out;
  }
  out.certificate = certify_tangency(fold, g, res.witness, theta_g);
  out.ok = out.certificate.max_angle < 1e-8 && out.certificate.unstable_cone_ok &&
           out.certificate.stable_cone_clear;
  if (!out.ok) out.message = "certificate checks failed";
  return out;
}

inline PipelineReport run_tangency(const ScenarioConfig& cfg) {
  PipelineReport rep;
  rep.pipeline = "tangency";
  cfg.validate_common();
  cfg.validate_folding();

  {
    StageResult& st = rep.stage("unperturbed_certificate");
    TangencyRunResult run = tangency_single_run(cfg, 0.0, cfg.seed);
    st.pass = run.ok;
    if (!run.message.empty()) st.put("message", run.message);
    if (run.ok) {
      st.put("max_principal_angle", run.certificate.max_angle);
      st.put("codimension", static_cast<double>(run.certificate.codimension));
      st.put("chart_rate", run.chart_rate);
      rep.artifacts.emplace_back("tangency_certificate", run.certificate.to_text());
    }
  }
  if (cfg.eta > 0.0) {
    StageResult& st = rep.stage("perturbation_sweep");
    int passed = 0;
    double worst_angle = 0.0;
    for (int i = 0; i < cfg.n_perturbations; ++i) {
      TangencyRunResult run = tangency_single_run(cfg, cfg.eta, cfg.seed + 101 * i);
      if (run.ok) {
        ++passed;
        worst_angle = std::max(worst_angle, run.certificate.max_angle);
      }
    }
    st.pass = passed == cfg.n_perturbations;
    st.put("eta", cfg.eta);
    st.put("passed", static_cast<double>(passed));
    st.put("of", static_cast<double>(cfg.n_perturbations));
    st.put("worst_angle", worst_angle);
  }
  rep.finalize();
  return rep;
}

// ---------------------------------------------------------------------------

inline std::vector<Vector> anchor_grid(int k) {
  // {0, +-0.1}^k sampled: the origin plus axis shifts
  std::vector<Vector> anchors{Vector::Zero(k)};
  for (int i = 0; i < k; ++i) {
    Vector p = Vector::Zero(k);
    p(i) = 0.1;
    anchors.push_back(p);
    anchors.push_back(-p);
  }
  return anchors;
}

inline PipelineReport run_cycle_unfolding(const ScenarioConfig& cfg) {
  PipelineReport rep;
  rep.pipeline = "cycle-unfolding";
  cfg.validate_common();
  cfg.validate_cycle();

  ParamFamily fam =
      family_affine_model(cfg.dims, cfg.lambda, cfg.nu, cfg.b, cfg.beta);

  for (const Vector& a0 : anchor_grid(cfg.dims.k)) {
    std::ostringstream label;
    label << "anchor";
    for (Eigen::Index i = 0; i < a0.size(); ++i) label << "_" << a0(i);
    StageResult& st = rep.stage(label.str());
    try {
      const double bh = anchored_bhat(cfg.b, a0, fam.mis);
      JetModel jm = jet_skew_model(fam, a0, bh);
      CoveringCertificate cov = check_covering(jm.system.fiber);
      if (!cov.covered) throw construction_error("jet covering failed");
      st.put("bhat", bh);
      st.put("jet_margin", cov.margin);
      // the lifted stable cone keeps the original width alpha
      st.put("jet_cone_width_alpha",
             jm.system.base.cone_invariance_sampled() ? "certified" : "violated");

      SkewProductSystem slice = fam.slice_at(a0);
      HorizontalDisc flat = HorizontalDisc::make_flat(
          slice.base.stable_box, slice.base.cells[0].center(),
          Vector::Zero(cfg.dims.c), cfg.alpha, cfg.delta);
      DiscFamily family = DiscFamily::constant(flat);
      HorizontalDisc lifted = lift_disc_family(family, jm);
      UnfoldingWitness w = parablender_witness(jm, lifted, cfg.N, cfg.tol);
      st.put("jet_residual", w.jet_residual);
      st.put("containment_margin", w.raw.containment_margin);

      SlopeReport base_slope = unfolding_order_check(w, fam, family);
      st.put("unperturbed_slope",
             base_slope.at_floor ? std::string("floor") : format_double(base_slope.slope));

      ParamFamily pert = perturb_family(fam, std::max(cfg.eta, 1e-3), cfg.seed,
                                        /*above_order_only=*/true, a0);
      SlopeReport pert_slope = unfolding_order_check(w, pert, family);
      st.put("perturbed_slope", pert_slope.slope);

      // Def 5.1 robustness sampled: the witness persists for a perturbed
      // family (all coefficient orders) at the same anchor.
      ParamFamily pert_full =
          perturb_family(fam, std::max(cfg.eta, 1e-3), cfg.seed + 7, false);
      JetModel jm2 = jet_skew_model(pert_full, a0, bh - 0.01);
      HorizontalDisc lifted2 = lift_disc_family(family, jm2);
      UnfoldingWitness w2 = parablender_witness(jm2, lifted2, cfg.N, cfg.tol);
      st.put("perturbed_jet_residual", w2.jet_residual);

      st.pass = w.jet_residual < cfg.tol && base_slope.passed && pert_slope.passed &&
                w2.jet_residual < cfg.tol && w.raw.containment_margin >= 0.0;
      if (a0.isZero())
        rep.artifacts.emplace_back("unfolding_witness", w.to_text());
    } catch (const std::exception& ex) {
      st.pass = false;
      st.put("error", std::string(ex.what()));
    }
  }
  rep.finalize();
  return rep;
}

// ---------------------------------------------------------------------------

inline PipelineReport run_paratangency(const ScenarioConfig& cfg) {
  PipelineReport rep;
  rep.pipeline = "paratangency";
  cfg.validate_common();
  cfg.validate_paratangency();

  ParamFamily fam =
      family_affine_model(cfg.dims, cfg.lambda, cfg.nu, cfg.b, cfg.beta);
  FoldingManifold fold = standard_folding(cfg.dims, cfg.effective_epsilon(), cfg.b);

  for (const Vector& a0 : anchor_grid(cfg.dims.k)) {
    std::ostringstream label;
    label << "anchor";
    for (Eigen::Index i = 0; i < a0.size(); ++i) label << "_" << a0(i);
    StageResult& st = rep.stage(label.str());
    try {
      const double bh = anchored_bhat(cfg.b, a0, fam.mis);
      const double theta_g = std::min(cfg.theta, fold.chart_radius());
      JetGrassmannModel jg = jet_grassmann_model(fam, a0, theta_g, bh);
      CoveringCertificate cov = check_covering(jg.system.fiber);
      if (!cov.covered) throw construction_error("jet covering failed");

      JetChartReport chart = verify_jet_chart_linearization(jg, fam, a0);
      st.put("chart_max_diag", chart.max_diag);
      st.put("chart_offdiag", chart.max_offdiag);
      if (!chart.ok) throw construction_error("chart linearization: " + chart.message);

      HorizontalDisc disc = lifted_folding_disc(fold, jg, cfg.alpha, cfg.delta);
      HorizontalCertificate hc = certify_horizontal(disc, jg.system, 3);
      if (!hc.ok) throw construction_error("lifted folding disc failed horizontality");
      BlenderOracleResult res =
          blender_intersection(jg.system, disc, cfg.N, cfg.tol, &hc);
      if (!res.success) throw construction_error("oracle failed: " + res.message);

      // split jets on the Grassmann bundle
      const UnstablePlane plane = local_unstable_plane(jg.system, res.witness.itinerary);
      const double jet_residual =
          std::max(sup_dist(plane.stable_pt,
                            jg.system.stable_part(res.witness.point_q)),
                   sup_dist(plane.fiber_pt, jg.system.fiber_part(res.witness.point_q)));
      st.put("jet_residual", jet_residual);

      // order-0 projection replayed on the slice Grassmann system
      SkewProductSystem slice = fam.slice_at(a0);
      GrassmannSystem gslice = grassmann_skew_model(slice, theta_g);
      HorizontalDisc plain_disc = induced_disc(fold, gslice, cfg.alpha, cfg.delta);
      BlenderOracleResult replay =
          blender_replay(gslice.system, plain_disc, res.witness.itinerary, cfg.tol);
      if (!replay.success)
        throw construction_error("order-0 replay failed: " + replay.message);
      const int dssG = gslice.system.d_ss();
      Vector proj0(gslice.system.state_dim());
      {
        const int ssdu = dssG;  // level-0 stable block
        const int ss = cfg.dims.ss;
        const int du = gslice.chart_dim();
        const int q = fam.mis->size();
        const Vector s_jet = jg.system.stable_part(res.witness.point_q);
        const Vector u_jet = jg.system.unstable_part(res.witness.point_q);
        const Vector y_jet = jg.system.fiber_part(res.witness.point_q);
        proj0.head(ss + du) = s_jet.head(ss + du);
        proj0.segment(ss + du, cfg.dims.u) = u_jet.head(cfg.dims.u);
        proj0.tail(cfg.dims.c) = y_jet.head(cfg.dims.c);
        (void)ssdu;
        (void)q;
      }
      const double proj_gap = sup_dist(proj0, replay.witness.point_q);
      st.put("order0_projection_gap", proj_gap);

      TangencyCertificate tc = certify_tangency(fold, gslice, replay.witness, theta_g);
      st.put("max_principal_angle", tc.max_angle);

      // unfolding slope on the Grassmann bundle: fiber realization along the
      // itinerary against the plain disc over the representative
      const Jet pulled = Jet::unflatten(fam.mis, cfg.dims.c, res.final_anchor);
      const Jet u_jet_rep =
          Jet::unflatten(fam.mis, cfg.dims.u,
                         jg.system.unstable_part(res.witness.point_q));
      const Vector s0 = proj0.head(dssG);
      ParamFamily pert = perturb_family(fam, std::max(cfg.eta, 1e-3), cfg.seed,
                                        /*above_order_only=*/true, a0);
      auto slope_for = [&](const ParamFamily& f) {
        std::vector<double> radii, dists;
        const int samples = 10;
        for (int si = 0; si < samples; ++si) {
          const double r = std::pow(10.0, -4.0 + 3.0 * si / (samples - 1));
          double worst = 0.0;
          for (double sgn : {1.0, -1.0}) {
            Vector a = a0;
            a(0) += sgn * r;
            Vector s_arg = Vector::Constant(1, sgn * r);
            Vector y = pulled.eval(s_arg);
            for (auto it = res.witness.itinerary.rbegin();
                 it != res.witness.itinerary.rend(); ++it)
              y = f.fiber_map_at(*it, a)(y);
            Vector x_a(gslice.system.state_dim());
            x_a << s0, u_jet_rep.eval(s_arg), y;
            Vector y_a = plain_disc.point(s0);
            worst = std::max(worst, sup_dist(x_a, y_a));
          }
          radii.push_back(r);
          dists.push_back(worst);
        }
        bool floor = true;
        for (double dd : dists) floor = floor && dd < 1e-12;
        if (floor) return std::make_pair(true, std::numeric_limits<double>::infinity());
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        int n = 0;
        for (std::size_t i = 0; i < radii.size(); ++i) {
          if (dists[i] < 1e-15) continue;
          const double lx = std::log(radii[i]), ly = std::log(dists[i]);
          sx += lx;
          sy += ly;
          sxx += lx * lx;
          sxy += lx * ly;
          ++n;
        }
        const double slope = n >= 2 ? (n * sxy - sx * sy) / (n * sxx - sx * sx) : 0.0;
        return std::make_pair(false, slope);
      };
      const auto [base_floor, base_slope] = slope_for(fam);
      const auto [pert_floor, pert_slope] = slope_for(pert);
      st.put("unperturbed_slope",
             base_floor ? std::string("floor") : format_double(base_slope));
      st.put("perturbed_slope", pert_slope);

      st.pass = jet_residual < cfg.tol && proj_gap < 1e-8 && tc.max_angle < 1e-8 &&
                (base_floor || base_slope > cfg.dims.d + 0.3) &&
                (pert_floor || pert_slope > cfg.dims.d + 0.3);
      if (a0.isZero()) {
        rep.artifacts.emplace_back("paratangency_certificate", tc.to_text());
        rep.artifacts.emplace_back("paratangency_witness", res.witness.to_text());
      }
    } catch (const std::exception& ex) {
      st.pass = false;
      st.put("error", std::string(ex.what()));
    }
  }
  rep.finalize();
  return rep;
}

// ---------------------------------------------------------------------------

inline PipelineReport run_appendix_verify(const ScenarioConfig& cfg) {
  PipelineReport rep;
  rep.pipeline = "appendix-verify";
  cfg.validate_common();

  for (int u : {1, 2}) {
    Dimensions dims{1, u, u * u, 1, 1};
    StageResult& st = rep.stage("derivative_three_ways_u" + std::to_string(u));
    try {
      FoldingManifold s = standard_folding(dims, u == 1 ? 0.06 : 0.05, cfg.b);
      AppendixReport ar = appendix_derivative_check(s);
      st.pass = ar.ok;
      st.put("det_A", static_cast<double>(ar.det_A));
      st.put("norm_fd", ar.norm_fd);
      st.put("norm_cramer", ar.norm_cramer);
      st.put("norm_cofactor", ar.norm_cofactor);
      st.put("max_pairwise_diff", ar.max_pairwise_diff);
      st.put("dh_norm_at_0", ar.dh_norm);
      if (u == 2 && std::abs(ar.dh_norm - 1.0) > 1e-12) st.pass = false;
    } catch (const std::exception& ex) {
      st.pass = false;
      st.put("error", std::string(ex.what()));
    }
  }
  for (int u : {1, 2}) {
    Dimensions dims{1, u, u * u, 1, 1};
    StageResult& st = rep.stage("lifted_disc_bound_u" + std::to_string(u));
    try {
      FoldingManifold s = standard_folding(dims, u == 1 ? 0.06 : 0.05, cfg.b);
      ParamFamily fam = family_affine_model(dims, cfg.lambda, u == 1 ? cfg.nu : 0.05,
                                            cfg.b, cfg.beta);
      JetGrassmannModel jg =
          jet_grassmann_model(fam, Vector::Zero(1), s.chart_radius(), cfg.b);
      HorizontalDisc disc = lifted_folding_disc(s, jg, cfg.alpha, cfg.delta);
      const double dh = lifted_dh_norm(s, jg, disc, u == 1 ? 24 : 8, cfg.seed);
      st.pass = dh <= 1.0 + 0.05;
      st.put("lifted_dh_norm", dh);
    } catch (const std::exception& ex) {
      st.pass = false;
      st.put("error", std::string(ex.what()));
    }
  }
  rep.finalize();
  return rep;
}

// ---------------------------------------------------------------------------

inline PipelineReport run_pipeline(const std::string& name, const ScenarioConfig& cfg);

inline PipelineReport run_sweep(const ScenarioConfig& cfg) {
  PipelineReport rep;
  rep.pipeline = "sweep";
  const std::vector<std::string> pipelines{"tangency", "cycle-unfolding",
                                           "paratangency"};
  for (const auto& name : pipelines) {
    StageResult& st = rep.stage(name + "_robustness");
    double max_passing_eta = 0.0;
    bool base_ok = true;
    for (double eta : {1e-3, 3e-3, 1e-2, 3e-2}) {
      ScenarioConfig sub = cfg;
      sub.eta = eta;
      sub.out_dir.clear();
      sub.n_perturbations = eta == 1e-3 ? cfg.n_perturbations : 5;
      bool all_pass = true;
      try {
        PipelineReport r = run_pipeline(name, sub);
        all_pass = r.pass;
      } catch (const std::exception&) {
        all_pass = false;
      }
      if (all_pass) max_passing_eta = eta;
      else break;
      if (eta == 1e-3) base_ok = all_pass;
    }
    st.pass = base_ok && max_passing_eta >= 1e-3;
    st.put("max_passing_eta", max_passing_eta);
  }
  rep.finalize();
  return rep;
}

inline PipelineReport run_pipeline(const std::string& name, const ScenarioConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  PipelineReport rep;
  if (name == "covering") rep = run_covering(cfg);
  else if (name == "blender") rep = run_blender(cfg);
  else if (name == "tangency") rep = run_tangency(cfg);
  else if (name == "cycle-unfolding") rep = run_cycle_unfolding(cfg);
  else if (name == "paratangency") rep = run_paratangency(cfg);
  else if (name == "appendix-verify") rep = run_appendix_verify(cfg);
  else if (name == "sweep") rep = run_sweep(cfg);
  else throw std::invalid_argument("unknown pipeline '" + name + "'");
  rep.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_report_files(rep, cfg);
  return rep;
}

}  // namespace blendlab
