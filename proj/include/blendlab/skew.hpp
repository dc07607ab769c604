#pragma once

// Skew-product systems over affine horseshoes, horizontal discs, and the
// constructive intersection oracle: greedy symbol choice by pull-back margin,
// nested stable domains, exact affine chains.

#include "blendlab/covering.hpp"
#include "blendlab/numerics.hpp"

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace blendlab {

struct symbol_infeasible_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Horseshoe base: kappa affine branches on stable x unstable coordinates with
// block-diagonal linear parts diag(S_l, U_l).  Each branch carries its Markov
// cell I_l in the unstable box; the branch image of I_l covers the full
// unstable box (full shift on kappa symbols).

struct HorseshoeBase {
  IntervalBox stable_box;             // d_ss-dimensional
  IntervalBox unstable_box;           // d_u-dimensional
  std::vector<IntervalBox> cells;     // kappa disjoint subboxes of unstable_box
  std::vector<AffineMap> branches;    // on R^{d_ss + d_u}
  double nu = 0.0;                    // ||S_l||, ||U_l^{-1}|| < nu
  double alpha = 2.0;                 // stable cone width

  int d_ss() const { return stable_box.dim(); }
  int d_u() const { return unstable_box.dim(); }
  int kappa() const { return static_cast<int>(branches.size()); }

  Matrix S(int l) const { return branches[l].linear.topLeftCorner(d_ss(), d_ss()); }
  Matrix U(int l) const { return branches[l].linear.bottomRightCorner(d_u(), d_u()); }
  Vector w_s(int l) const { return branches[l].offset.head(d_ss()); }
  Vector w_u(int l) const { return branches[l].offset.tail(d_u()); }

  AffineMap stable_affine(int l) const { return AffineMap(S(l), w_s(l)); }
  AffineMap unstable_affine(int l) const { return AffineMap(U(l), w_u(l)); }

  void validate() const {
    require(kappa() >= 1 && static_cast<int>(cells.size()) == kappa(),
            "HorseshoeBase: cells/branches mismatch");
    require(0.0 < nu && nu < 1.0, "HorseshoeBase: nu must lie in (0,1)");
    for (int l = 0; l < kappa(); ++l) {
      require(branches[l].dim_in() == d_ss() + d_u(), "HorseshoeBase: branch dims");
      // block-diagonal structure
      const Matrix& lin = branches[l].linear;
      require(lin.topRightCorner(d_ss(), d_u()).cwiseAbs().maxCoeff() == 0.0 &&
                  lin.bottomLeftCorner(d_u(), d_ss()).cwiseAbs().maxCoeff() == 0.0,
              "HorseshoeBase: branches must be block-diagonal");
      require(op_norm2(S(l)) < nu, "HorseshoeBase: ||S_l|| must stay below nu");
      require(op_norm2(U(l).inverse()) < nu,
              "HorseshoeBase: ||U_l^{-1}|| must stay below nu");
      require(unstable_box.contains(cells[l]), "HorseshoeBase: cell outside box");
      // Markov full-shift: the branch image of its cell covers the unstable box.
      const IntervalBox img = affine_image_box(unstable_affine(l), cells[l]);
      require(img.contains(unstable_box),
              "HorseshoeBase: branch image of I_l must cover the unstable box");
    }
    for (int a = 0; a < kappa(); ++a)
      for (int b = a + 1; b < kappa(); ++b) {
        bool separated = false;
        for (int i = 0; i < d_u(); ++i)
          if (cells[a].iv[i].hi < cells[b].iv[i].lo ||
              cells[b].iv[i].hi < cells[a].iv[i].lo)
            separated = true;
        require(separated, "HorseshoeBase: Markov cells overlap");
      }
  }

  // Sampled check of DF^{-1} C^ss_alpha subset C^ss_{nu^2 alpha}.
  bool cone_invariance_sampled(int samples = 64, std::uint64_t seed = 2) const {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    for (int l = 0; l < kappa(); ++l) {
      const Matrix Sinv = S(l).inverse();
      const Matrix Uinv = U(l).inverse();
      for (int s = 0; s < samples; ++s) {
        Vector vs(d_ss()), vu(d_u());
        for (int i = 0; i < d_ss(); ++i) vs(i) = gauss(rng);
        for (int i = 0; i < d_u(); ++i) vu(i) = gauss(rng);
        if (vs.norm() == 0.0) continue;
        vu *= alpha * 0.999 / std::max(1e-300, vu.norm() / vs.norm());
        // (vs,vu) in C^ss_alpha; pull back and test the shrunken cone
        const Vector ws = Sinv * vs;
        const Vector wu = Uinv * vu;
        if (wu.norm() >= nu * nu * alpha * ws.norm()) return false;
      }
    }
    return true;
  }

  int locate_cell(const Vector& u_pt) const {
    int best = -1;
    double best_margin = -std::numeric_limits<double>::infinity();
    for (int l = 0; l < kappa(); ++l) {
      const double m = cells[l].boundary_margin(u_pt);
      if (m > best_margin) {
        best_margin = m;
        best = l;
      }
    }
    return best_margin >= 0.0 ? best : -1;
  }
};

// Builds the kappa-symbol affine horseshoe in (-2,2)^{ss+u}: S_l = (nu/2) Id
// with a small per-branch stable offset, Markov cells on an odd grid so that
// the first cell is centered at the origin, U_l mapping each cell affinely
// onto [-2,2]^u.
inline HorseshoeBase make_horseshoe(int ss, int u, double nu, int kappa,
                                    double alpha = 2.0) {
  require(ss >= 1 && u >= 1, "make_horseshoe: dimensions");
  require(0.0 < nu && nu < 1.0, "make_horseshoe: nu in (0,1)");
  if (kappa > 4096)
    throw construction_error("make_horseshoe: branch count " + std::to_string(kappa) +
                             " exceeds the 4096 cap; reduce c, k or d");
  int grid = 1;
  while (std::pow(grid, u) < kappa) grid += 2;  // odd grid keeps a cell at 0

  const double spacing = 4.0 / grid;
  const double half_width = std::min(0.4 * spacing, 0.95 * nu * 2.0);
  if (!(half_width > 0.0))
    throw construction_error("make_horseshoe: cells do not fit; enlarge u or shrink kappa");

  // Enumerate grid cells, closest to the origin first (sup metric, then lex).
  struct Cell {
    Vector center;
    double dist;
    long lex;
  };
  std::vector<Cell> all;
  std::vector<int> idx(u, 0);
  long lex = 0;
  while (true) {
    Vector c(u);
    for (int a = 0; a < u; ++a) c(a) = (idx[a] - (grid - 1) / 2) * spacing;
    all.push_back({c, sup_norm(c), lex++});
    int a = 0;
    while (a < u && ++idx[a] == grid) idx[a++] = 0;
    if (a == u) break;
  }
  std::sort(all.begin(), all.end(), [](const Cell& a, const Cell& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    return a.lex < b.lex;
  });

  HorseshoeBase base;
  base.stable_box = IntervalBox::cube(ss, 2.0);
  base.unstable_box = IntervalBox::cube(u, 2.0);
  base.nu = nu;
  base.alpha = alpha;
  for (int l = 0; l < kappa; ++l) {
    const Vector& c = all[l].center;
    base.cells.push_back(IntervalBox::from_center(c, half_width));

    Matrix lin = Matrix::Zero(ss + u, ss + u);
    lin.topLeftCorner(ss, ss) = (nu / 2.0) * Matrix::Identity(ss, ss);
    // slight overshoot keeps the cell image covering the box under roundoff
    const double scale = (2.0 + 1e-6) / half_width;
    lin.bottomRightCorner(u, u) = scale * Matrix::Identity(u, u);
    Vector off(ss + u);
    const double spread = kappa > 1 ? (double(l) / (kappa - 1) - 0.5) * 0.3 : 0.0;
    for (int i = 0; i < ss; ++i) off(i) = spread;
    for (int i = 0; i < u; ++i) off(ss + i) = -c(i) * scale;
    base.branches.emplace_back(lin, off);
  }
  base.validate();
  return base;
}

// ---------------------------------------------------------------------------

struct SkewProductSystem {
  HorseshoeBase base;
  FiberIFS fiber;

  int d_ss() const { return base.d_ss(); }
  int d_u() const { return base.d_u(); }
  int c() const { return fiber.c(); }
  int state_dim() const { return d_ss() + d_u() + c(); }
  int kappa() const { return base.kappa(); }

  void validate() const {
    base.validate();
    fiber.validate();
    require(base.kappa() == fiber.kappa(),
            "SkewProductSystem: base and fiber branch counts differ");
    if (!(base.nu < fiber.lambda))
      throw std::invalid_argument(
          "SkewProductSystem: domination nu < lambda violated (nu=" +
          format_double(base.nu) + ", lambda=" + format_double(fiber.lambda) + ")");
  }

  Vector stable_part(const Vector& q) const { return q.head(d_ss()); }
  Vector unstable_part(const Vector& q) const { return q.segment(d_ss(), d_u()); }
  Vector fiber_part(const Vector& q) const { return q.tail(c()); }
  Vector assemble(const Vector& s, const Vector& u, const Vector& y) const {
    Vector q(state_dim());
    q << s, u, y;
    return q;
  }

  Vector branch_forward(int l, const Vector& q) const {
    const Vector b = base.branches[l](q.head(d_ss() + d_u()));
    const Vector y = fiber.maps[l](q.tail(c()));
    Vector out(state_dim());
    out << b, y;
    return out;
  }
  Vector branch_backward(int l, const Vector& q) const {
    const Vector b = base.branches[l].inverse()(q.head(d_ss() + d_u()));
    const Vector y = fiber.maps[l].inverse()(q.tail(c()));
    Vector out(state_dim());
    out << b, y;
    return out;
  }
};

// The affine model: kappa = 2^c branches paired with the standard fiber IFS.
inline SkewProductSystem affine_model(const Dimensions& dims, double lambda, double nu,
                                      double b, double beta = 0.0) {
  dims.validate();
  if (!(nu < lambda))
    throw std::invalid_argument("affine_model: domination nu < lambda violated");
  const int kappa = 1 << dims.c;
  SkewProductSystem sys;
  sys.base = make_horseshoe(dims.ss, dims.u, nu, kappa);
  sys.fiber = standard_fiber_ifs(lambda, dims.c, b);
  if (beta > 0.0) {
    require(lambda < beta && beta < 1.0, "affine_model: need lambda < beta < 1");
    sys.fiber.beta = beta;
  }
  sys.validate();
  return sys;
}

// Seeded perturbation inside the locally affine class: branch matrices and
// offsets move by O(eta), the Markov cell images keep covering the unstable
// box, and all hyperbolicity bands are re-validated.
inline SkewProductSystem perturb_system(const SkewProductSystem& sys, double eta,
                                        std::uint64_t seed) {
  require(eta >= 0.0, "perturb_system: eta >= 0");
  if (eta == 0.0) return sys;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::uniform_real_distribution<double> pos(0.5, 1.0);

  SkewProductSystem out = sys;
  const int ss = sys.d_ss(), u = sys.d_u(), c = sys.c();
  for (int l = 0; l < sys.kappa(); ++l) {
    Matrix Sl = sys.base.S(l);
    for (int i = 0; i < ss; ++i)
      for (int j = 0; j < ss; ++j) Sl(i, j) += eta * uni(rng);
    // Expand U slightly so the cell image still covers the unstable box.
    const double grow = 1.0 + eta * pos(rng);
    Matrix Ul = sys.base.U(l) * grow;
    Vector ws = sys.base.w_s(l);
    for (int i = 0; i < ss; ++i) ws(i) += eta * uni(rng);
    Vector wu = sys.base.w_u(l) * grow;
    for (int i = 0; i < u; ++i) wu(i) += 0.25 * eta * uni(rng) * 2.0;

    Matrix lin = Matrix::Zero(ss + u, ss + u);
    lin.topLeftCorner(ss, ss) = Sl;
    lin.bottomRightCorner(u, u) = Ul;
    Vector off(ss + u);
    off << ws, wu;
    out.base.branches[l] = AffineMap(lin, off);

    Matrix Tl = sys.fiber.maps[l].linear;
    for (int i = 0; i < c; ++i)
      for (int j = 0; j < c; ++j) Tl(i, j) += eta * uni(rng);
    Vector wc = sys.fiber.maps[l].offset;
    for (int i = 0; i < c; ++i) wc(i) += eta * uni(rng);
    out.fiber.maps[l] = AffineMap(Tl, wc);
  }
  // Widen the declared bands just enough for the perturbed rates.
  out.fiber.lambda = sys.fiber.lambda * (1.0 - 4.0 * eta);
  out.fiber.beta = std::min(0.999, sys.fiber.beta * (1.0 + 4.0 * eta));
  out.fiber.product_structure = false;
  out.fiber.axis_images.clear();
  out.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Horizontal discs: graphs xi -> (xi, g(xi), h(xi)) over the stable box.

struct HorizontalDisc {
  IntervalBox domain;  // the system's stable box
  std::function<Vector(const Vector&)> g;  // -> R^{d_u}
  std::function<Vector(const Vector&)> h;  // -> R^{c}
  double alpha = 2.0;
  double delta = 0.3;
  Vector anchor;          // point of B
  double lipschitz_C = 0.0;  // certified Lipschitz bound of h
  double g_slope = 0.0;      // certified sup ||Dg||_inf

  struct AffineData {
    Matrix G;
    Vector g0;
    Matrix H;
    Vector h0;
  };
  std::optional<AffineData> affine;

  Vector point(const Vector& xi) const {
    Vector p(xi.size() + g(xi).size() + h(xi).size());
    p << xi, g(xi), h(xi);
    return p;
  }

  static HorizontalDisc make_affine(const IntervalBox& domain, const Matrix& G,
                                    const Vector& g0, const Matrix& H, const Vector& h0,
                                    double alpha, double delta, const Vector& anchor) {
    HorizontalDisc d;
    d.domain = domain;
    d.affine = AffineData{G, g0, H, h0};
    d.g = [G, g0](const Vector& xi) -> Vector { return G * xi + g0; };
    d.h = [H, h0](const Vector& xi) -> Vector { return H * xi + h0; };
    d.alpha = alpha;
    d.delta = delta;
    d.anchor = anchor;
    d.lipschitz_C = op_norm_inf(H);
    d.g_slope = op_norm_inf(G);
    return d;
  }

  static HorizontalDisc make_flat(const IntervalBox& domain, const Vector& g0,
                                  const Vector& h0, double alpha, double delta) {
    return make_affine(domain, Matrix::Zero(g0.size(), domain.dim()), g0,
                       Matrix::Zero(h0.size(), domain.dim()), h0, alpha, delta, h0);
  }
};

// ---------------------------------------------------------------------------

struct HorizontalCertificate {
  bool ok = false;
  int cell = -1;                    // which I_l the unstable graph lands in
  double slope_sup = 0.0;           // measured sup ||Dg||
  double anchor_sup = 0.0;          // measured sup d(anchor, h(xi))
  double lipschitz = 0.0;           // measured Lipschitz bound of h
  double margin_slope = 0.0;        // alpha - slope_sup
  double margin_anchor = 0.0;       // delta - anchor_sup
  double margin_lip = 0.0;          // delta - lipschitz * nu
  std::vector<int> failed;          // violated condition indices (1,2,3)
  std::string to_text() const {
    std::ostringstream os;
    os << "horizontal_certificate: ok=" << (ok ? "true" : "false") << " cell=" << cell
       << " slope=" << format_double(slope_sup) << " anchor_sup="
       << format_double(anchor_sup) << " lipschitz=" << format_double(lipschitz)
       << " margins=[" << format_double(margin_slope) << ", "
       << format_double(margin_anchor) << ", " << format_double(margin_lip) << "]";
    if (!failed.empty()) {
      os << " failed=";
      for (int f : failed) os << f << ",";
    }
    return os.str();
  }
};

namespace detail {

// Iterate over a grid_n^dim grid of the box (includes the boundary).
template <typename F>
void for_each_grid_point(const IntervalBox& box, int grid_n, F&& f) {
  const int dim = box.dim();
  std::vector<int> idx(dim, 0);
  while (true) {
    Vector x(dim);
    for (int a = 0; a < dim; ++a)
      x(a) = grid_n == 1 ? box.iv[a].mid()
                         : box.iv[a].lo + box.iv[a].width() * idx[a] / (grid_n - 1);
    f(x);
    int a = 0;
    while (a < dim && ++idx[a] == grid_n) idx[a++] = 0;
    if (a == dim) return;
  }
}

}  // namespace detail

// Checks the three horizontality conditions on a grid; finite-difference
// derivative bounds are inflated by the observed grid modulus.
inline HorizontalCertificate certify_horizontal(const HorizontalDisc& disc,
                                                const SkewProductSystem& sys,
                                                int grid_n = 7) {
  HorizontalCertificate cert;
  const double nu = sys.base.nu;

  double slope = 0.0, lip = 0.0, anchor_sup = 0.0;
  double slope_mod = 0.0, lip_mod = 0.0;
  if (disc.affine) {
    slope = op_norm_inf(disc.affine->G);
    lip = op_norm_inf(disc.affine->H);
    detail::for_each_grid_point(disc.domain, grid_n, [&](const Vector& xi) {
      anchor_sup = std::max(anchor_sup, sup_dist(disc.anchor, disc.h(xi)));
    });
  } else {
    double prev_slope = -1.0, prev_lip = -1.0;
    detail::for_each_grid_point(disc.domain, grid_n, [&](const Vector& xi) {
      anchor_sup = std::max(anchor_sup, sup_dist(disc.anchor, disc.h(xi)));
      const Matrix jg = finite_diff_jacobian(disc.g, xi);
      const Matrix jh = finite_diff_jacobian(disc.h, xi);
      const double sg = op_norm_inf(jg), sh = op_norm_inf(jh);
      if (prev_slope >= 0.0) {
        slope_mod = std::max(slope_mod, std::abs(sg - prev_slope));
        lip_mod = std::max(lip_mod, std::abs(sh - prev_lip));
      }
      prev_slope = sg;
      prev_lip = sh;
      slope = std::max(slope, sg);
      lip = std::max(lip, sh);
    });
    slope += slope_mod;
    lip += lip_mod;
  }
  if (!disc.affine) {
    // Lipschitz continuity of h closes the grid gaps in the anchor sup.
    const double grid_step =
        grid_n > 1 ? disc.domain.diameter() / (grid_n - 1) : disc.domain.diameter();
    anchor_sup += 0.5 * lip * grid_step;
  }

  cert.slope_sup = slope;
  cert.lipschitz = lip;
  cert.anchor_sup = anchor_sup;
  cert.margin_slope = disc.alpha - slope;
  cert.margin_anchor = disc.delta - anchor_sup;
  cert.margin_lip = disc.delta - lip * nu;

  if (cert.margin_slope < 0.0) cert.failed.push_back(1);
  if (cert.margin_anchor <= 0.0) cert.failed.push_back(2);
  if (cert.margin_lip <= 0.0) cert.failed.push_back(3);

  // The unstable graph must land in a single Markov cell and the central
  // values must stay in closure(B).
  cert.cell = sys.base.locate_cell(disc.g(disc.domain.center()));
  bool placed = cert.cell >= 0;
  detail::for_each_grid_point(disc.domain, std::min(grid_n, 5), [&](const Vector& xi) {
    if (cert.cell >= 0 && sys.base.cells[cert.cell].boundary_margin(disc.g(xi)) < 0.0)
      placed = false;
    if (sys.fiber.candidate_B.boundary_margin(disc.h(xi)) < -1e-12) placed = false;
  });
  if (!placed) cert.failed.push_back(0);

  cert.ok = cert.failed.empty();
  return cert;
}

// ---------------------------------------------------------------------------
// Graph transform: the connected component of Phi^{-1}(disc) over R_l x D,
// re-parameterized over the full stable box.

inline HorizontalDisc graph_transform_pullback(const SkewProductSystem& sys,
                                               const HorizontalDisc& disc, int l) {
  require(l >= 0 && l < sys.kappa(), "graph_transform_pullback: bad symbol");
  const AffineMap Tinv = sys.fiber.maps[l].inverse();
  const Vector anchor_p = Tinv(disc.anchor);
  if (sys.fiber.candidate_B.boundary_margin(anchor_p) <= 0.0)
    throw symbol_infeasible_error("graph_transform_pullback: anchor pull-back escapes B "
                                  "for symbol " + std::to_string(l));

  const Matrix Sl = sys.base.S(l);
  const Vector wsl = sys.base.w_s(l);
  const AffineMap Uinv = sys.base.unstable_affine(l).inverse();

  HorizontalDisc out;
  out.domain = disc.domain;
  out.alpha = disc.alpha;
  out.delta = disc.delta;
  out.anchor = anchor_p;
  out.lipschitz_C = disc.lipschitz_C * op_norm_inf(Tinv.linear) * op_norm_inf(Sl);
  out.g_slope = disc.g_slope * op_norm_inf(Uinv.linear) * op_norm_inf(Sl);

  if (disc.affine) {
    const auto& a = *disc.affine;
    // g'(x) = Uinv(G (S x + w) + g0), h'(x) = Tinv(H (S x + w) + h0)
    Matrix G2 = Uinv.linear * a.G * Sl;
    Vector g02 = Uinv(a.G * wsl + a.g0);
    Matrix H2 = Tinv.linear * a.H * Sl;
    Vector h02 = Tinv(a.H * wsl + a.h0);
    out.affine = HorizontalDisc::AffineData{G2, g02, H2, h02};
    out.g = [G2, g02](const Vector& xi) -> Vector { return G2 * xi + g02; };
    out.h = [H2, h02](const Vector& xi) -> Vector { return H2 * xi + h02; };
  } else {
    auto g0 = disc.g;
    auto h0 = disc.h;
    out.g = [g0, Uinv, Sl, wsl](const Vector& xi) -> Vector {
      return Uinv(g0(Sl * xi + wsl));
    };
    out.h = [h0, Tinv, Sl, wsl](const Vector& xi) -> Vector {
      return Tinv(h0(Sl * xi + wsl));
    };
  }
  return out;
}

// ---------------------------------------------------------------------------

struct IntersectionWitness {
  Vector point_q;
  std::vector<int> itinerary;  // pull-back symbols l_1..l_N
  Vector xi_star;              // original disc parameter of q
  double domain_diameter = 0.0;
  double disc_residual = 0.0;
  double containment_margin = 0.0;
  double shadow_distance = 0.0;

  std::string to_text() const {
    std::ostringstream os;
    os << "intersection_witness:\n  point_q:";
    for (Eigen::Index i = 0; i < point_q.size(); ++i)
      os << " " << format_double(point_q(i));
    os << "\n  itinerary:";
    for (int l : itinerary) os << " " << l;
    os << "\n  domain_diameter: " << format_double(domain_diameter)
       << "\n  disc_residual: " << format_double(disc_residual)
       << "\n  containment_margin: " << format_double(containment_margin)
       << "\n  shadow_distance: " << format_double(shadow_distance) << "\n";
    return os.str();
  }
};

struct BlenderOracleResult {
  bool success = false;
  int failed_step = -1;
  std::string message;
  IntersectionWitness witness;
  Vector final_anchor;  // pulled-back anchor after N steps (fiber coords)
};

struct BackwardOrbit {
  std::vector<Vector> states;   // q_0, q_{-1}, ..., q_{-N}
  std::vector<double> margins;  // containment margin per state
  int first_escape = -1;
  double min_margin = std::numeric_limits<double>::infinity();
  // Sup distance between q and the verified orbit at time 0.  Backward
  // iteration amplifies roundoff by ||S^{-1}||^j, so no verifier can follow
  // the literal backward orbit of a floating-point q; instead the stable and
  // fiber coordinates of the orbit are rebuilt by contracting forward
  // compositions from the itinerary tail, which pins them to within
  // nu^N resp. lambda^N.  A small shadow distance certifies that a true
  // backward orbit stays in closure(U) within that distance of q.
  double shadow_distance = std::numeric_limits<double>::infinity();
};

inline BackwardOrbit backward_orbit(const SkewProductSystem& sys, const Vector& q,
                                    const std::vector<int>& itinerary) {
  const int N = static_cast<int>(itinerary.size());
  BackwardOrbit orbit;

  // Unstable coordinates contract backward: iterate directly.
  std::vector<Vector> u_orbit(N + 1);
  u_orbit[0] = sys.unstable_part(q);
  for (int j = 1; j <= N; ++j)
    u_orbit[j] = sys.base.unstable_affine(itinerary[j - 1]).inverse()(u_orbit[j - 1]);

  // Stable and fiber coordinates contract forward: rebuild from the tail.
  std::vector<Vector> s_orbit(N + 1), y_orbit(N + 1);
  s_orbit[N] = sys.base.stable_box.center();
  y_orbit[N] = sys.fiber.domain_D.center();
  for (int j = N; j >= 1; --j) {
    s_orbit[j - 1] = sys.base.S(itinerary[j - 1]) * s_orbit[j] +
                     sys.base.w_s(itinerary[j - 1]);
    y_orbit[j - 1] = sys.fiber.maps[itinerary[j - 1]](y_orbit[j]);
  }
  orbit.shadow_distance = std::max(sup_dist(s_orbit[0], sys.stable_part(q)),
                                   sup_dist(y_orbit[0], sys.fiber_part(q)));

  for (int j = 0; j <= N; ++j) {
    const Vector state = sys.assemble(s_orbit[j], u_orbit[j], y_orbit[j]);
    double cell_margin;
    if (j == 0) {
      cell_margin = -std::numeric_limits<double>::infinity();
      for (const auto& cell : sys.base.cells)
        cell_margin = std::max(cell_margin, cell.boundary_margin(u_orbit[j]));
    } else {
      cell_margin = sys.base.cells[itinerary[j - 1]].boundary_margin(u_orbit[j]);
    }
    const double m = std::min({sys.base.stable_box.boundary_margin(s_orbit[j]),
                               cell_margin,
                               sys.fiber.domain_D.boundary_margin(y_orbit[j])});
    orbit.states.push_back(state);
    orbit.margins.push_back(m);
    orbit.min_margin = std::min(orbit.min_margin, m);
    if (m < 0.0 && orbit.first_escape < 0) orbit.first_escape = j;
  }
  return orbit;
}

// ---------------------------------------------------------------------------
// The intersection oracle.  Greedy loop: at each step pick the symbol whose
// anchor pull-back sits deepest in B among those whose certified central
// range pulls back into B; stop after N steps and read the witness off the
// nested stable domains.

inline BlenderOracleResult blender_intersection(const SkewProductSystem& sys,
                                                const HorizontalDisc& disc, int N,
                                                double tol,
                                                const HorizontalCertificate* pre_cert =
                                                    nullptr) {
  sys.validate();
  HorizontalCertificate cert = pre_cert ? *pre_cert : certify_horizontal(disc, sys);
  BlenderOracleResult res;
  if (!cert.ok) {
    res.message = "disc failed horizontality certification";
    return res;
  }

  std::vector<AffineMap> Tinv, Uinv;
  std::vector<double> Tinv_norm, S_norm;
  for (int l = 0; l < sys.kappa(); ++l) {
    Tinv.push_back(sys.fiber.maps[l].inverse());
    Uinv.push_back(sys.base.unstable_affine(l).inverse());
    Tinv_norm.push_back(op_norm_inf(Tinv.back().linear));
    S_norm.push_back(op_norm_inf(sys.base.S(l)));
  }

  const IntervalBox& B = sys.fiber.candidate_B;
  const Vector xi_center = disc.domain.center();
  const double dom_rad = 0.5 * disc.domain.diameter();

  AffineMap stable_chain = AffineMap::identity(sys.d_ss());   // current -> original
  AffineMap fiber_chain = AffineMap::identity(sys.c());       // original value -> current
  AffineMap gchain = AffineMap::identity(sys.d_u());          // original g -> current

  // Working anchor: re-centered each step on the pulled-back disc's value at
  // the domain center.  Pulling the initial anchor instead lets the distance
  // to the (shrinking) disc range grow by 1/lambda per step; re-centering
  // keeps the certified range radius at lip_n * ||S|| * dom_rad, which
  // collapses geometrically under domination.
  Vector anchor = disc.h(xi_center);
  double lip = cert.lipschitz;

  std::vector<int> itin;
  for (int step = 0; step < N; ++step) {
    int best = -1;
    double best_anchor_margin = -std::numeric_limits<double>::infinity();
    double best_rad = 0.0;
    Vector best_anchor;
    for (int l = 0; l < sys.kappa(); ++l) {
      // pulled-back central value at the sub-domain center, via the chains
      const Vector xi_sub = sys.base.S(l) * xi_center + sys.base.w_s(l);
      const Vector anchor_p = Tinv[l](fiber_chain(disc.h(stable_chain(xi_sub))));
      const double am = B.boundary_margin(anchor_p);
      if (am <= 0.0) continue;
      const double new_rad = Tinv_norm[l] * lip * S_norm[l] * dom_rad * (1.0 + 1e-12);
      if (am - new_rad <= 0.0) continue;
      if (am > best_anchor_margin + 1e-15) {
        best_anchor_margin = am;
        best = l;
        best_rad = new_rad;
        best_anchor = anchor_p;
      }
    }
    if (best < 0) {
      res.failed_step = step;
      res.message = "no feasible symbol at step " + std::to_string(step) +
                    " (covering margin exhausted)";
      return res;
    }
    itin.push_back(best);
    anchor = best_anchor;
    lip *= Tinv_norm[best] * S_norm[best];
    stable_chain = stable_chain.compose(sys.base.stable_affine(best));
    fiber_chain = AffineMap(Tinv[best].linear * fiber_chain.linear,
                            Tinv[best](fiber_chain.offset));
    gchain = AffineMap(Uinv[best].linear * gchain.linear, Uinv[best](gchain.offset));
  }

  const Vector xi_star = stable_chain(xi_center);
  Vector q = disc.point(xi_star);

  IntersectionWitness w;
  w.point_q = q;
  w.itinerary = itin;
  w.xi_star = xi_star;
  // The image diameter of a box under an affine map depends only on the
  // linear part; computing it directly avoids the ulp floor of the
  // outward-rounded enclosure.
  {
    double diam = 0.0;
    for (int i = 0; i < sys.d_ss(); ++i) {
      double wsum = 0.0;
      for (int j = 0; j < sys.d_ss(); ++j)
        wsum += std::abs(stable_chain.linear(i, j)) * disc.domain.iv[j].width();
      diam = std::max(diam, wsum);
    }
    w.domain_diameter = diam;
  }

  // Independent re-evaluation plus a forward replay of the pulled-back center
  // through the contracting coordinates.  The unstable coordinate is excluded
  // here (roundoff amplifies under the expanding chain); backward_orbit
  // validates it in the contracting direction instead.
  const Vector q_reeval = disc.point(sys.stable_part(q));
  double residual = sup_dist(q_reeval, q);
  Vector ps = xi_center;
  Vector pf = fiber_chain(disc.h(xi_star));
  for (int j = static_cast<int>(itin.size()) - 1; j >= 0; --j) {
    ps = sys.base.S(itin[j]) * ps + sys.base.w_s(itin[j]);
    pf = sys.fiber.maps[itin[j]](pf);
  }
  residual = std::max(residual, sup_dist(ps, sys.stable_part(q)));
  residual = std::max(residual, sup_dist(pf, sys.fiber_part(q)));
  w.disc_residual = residual;

  const BackwardOrbit orbit = backward_orbit(sys, q, itin);
  w.containment_margin = orbit.min_margin;
  w.shadow_distance = orbit.shadow_distance;

  // The fiber value along an itinerary is pinned only to lambda^N.
  const double shadow_allow =
      std::max(tol, 8.0 * std::pow(sys.fiber.lambda, N) * sys.fiber.domain_D.diameter());
  res.success = orbit.first_escape < 0 && w.disc_residual < tol &&
                orbit.shadow_distance <= shadow_allow;
  if (!res.success) {
    if (orbit.first_escape >= 0)
      res.message =
          "backward containment failed at step " + std::to_string(orbit.first_escape);
    else if (w.disc_residual >= tol)
      res.message = "disc residual above tolerance";
    else
      res.message = "backward orbit shadows the witness only to " +
                    format_double(orbit.shadow_distance);
  }
  res.witness = w;
  res.final_anchor = anchor;
  return res;
}

// Replay a prescribed itinerary instead of choosing symbols greedily; used to
// cross-check witnesses between related systems.
inline BlenderOracleResult blender_replay(const SkewProductSystem& sys,
                                          const HorizontalDisc& disc,
                                          const std::vector<int>& itinerary,
                                          double tol) {
  BlenderOracleResult res;
  AffineMap stable_chain = AffineMap::identity(sys.d_ss());
  Vector anchor = disc.h(disc.domain.center());
  const IntervalBox& B = sys.fiber.candidate_B;
  for (std::size_t j = 0; j < itinerary.size(); ++j) {
    const int l = itinerary[j];
    if (l < 0 || l >= sys.kappa()) {
      res.message = "replay: bad symbol at step " + std::to_string(j);
      return res;
    }
    anchor = sys.fiber.maps[l].inverse()(anchor);
    if (B.boundary_margin(anchor) <= 0.0) {
      res.failed_step = static_cast<int>(j);
      res.message = "replay: anchor escapes B at step " + std::to_string(j);
      return res;
    }
    stable_chain = stable_chain.compose(sys.base.stable_affine(l));
  }
  const Vector xi_star = stable_chain(disc.domain.center());
  IntersectionWitness w;
  w.point_q = disc.point(xi_star);
  w.itinerary = itinerary;
  w.xi_star = xi_star;
  {
    double diam = 0.0;
    for (int i = 0; i < sys.d_ss(); ++i) {
      double wsum = 0.0;
      for (int j2 = 0; j2 < sys.d_ss(); ++j2)
        wsum += std::abs(stable_chain.linear(i, j2)) * disc.domain.iv[j2].width();
      diam = std::max(diam, wsum);
    }
    w.domain_diameter = diam;
  }
  const BackwardOrbit orbit = backward_orbit(sys, w.point_q, itinerary);
  w.containment_margin = orbit.min_margin;
  w.shadow_distance = orbit.shadow_distance;
  w.disc_residual = 0.0;
  const double shadow_allow =
      std::max(tol, 8.0 * std::pow(sys.fiber.lambda, (int)itinerary.size()) *
                        sys.fiber.domain_D.diameter());
  res.success = orbit.first_escape < 0 && orbit.shadow_distance <= shadow_allow;
  if (!res.success) res.message = "replay: containment or shadowing failed";
  res.witness = w;
  res.final_anchor = anchor;
  return res;
}

// ---------------------------------------------------------------------------

struct UnstablePlane {
  Vector stable_pt;  // d_ss
  Vector fiber_pt;   // c
  Matrix direction;  // state_dim x d_u, the E^u block basis

  Vector point_at(const SkewProductSystem& sys, const Vector& u_coord) const {
    return sys.assemble(stable_pt, u_coord, fiber_pt);
  }
};

// Exact local unstable plane of the affine model along an itinerary: the
// plane through the witness parallel to E^u.
inline UnstablePlane local_unstable_plane(const SkewProductSystem& sys,
                                          const std::vector<int>& itinerary) {
  Vector s = Vector::Zero(sys.d_ss());
  Vector y = Vector::Zero(sys.c());
  for (auto it = itinerary.rbegin(); it != itinerary.rend(); ++it) {
    s = sys.base.S(*it) * s + sys.base.w_s(*it);
    y = sys.fiber.maps[*it](y);
  }
  UnstablePlane plane;
  plane.stable_pt = s;
  plane.fiber_pt = y;
  plane.direction = Matrix::Zero(sys.state_dim(), sys.d_u());
  plane.direction.block(sys.d_ss(), 0, sys.d_u(), sys.d_u()) =
      Matrix::Identity(sys.d_u(), sys.d_u());
  return plane;
}

}  // namespace blendlab
