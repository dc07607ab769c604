#pragma once

// Folding manifolds: the explicit quadratic model, tangency parameter solves
// A(E) t = c(E), smooth bump perturbations, the induced disc on the
// Grassmannian model, and the three-route derivative estimates at E^u.

#include "blendlab/grassmann.hpp"

#include <array>
#include <optional>

namespace blendlab {

// ---------------------------------------------------------------------------

struct FoldingPerturbation {
  ProductBump bump;   // over (x, t) with unit amplitude profile
  Vector amps;        // per-component amplitudes for the first u central coords
  double eta = 0.0;   // requested C^2 size
  std::uint64_t seed = 0;
};

// S(x,t) = (x, (t_1..t_u), h(x,t)) with
//   h_i = sum_j t_{j+1} t_{ju+i} (+ bump_i)   for i <= u,
//   h_i = t_i                                  for i > u.
struct FoldingManifold {
  Dimensions dims;  // requires c = u^2
  double epsilon = 0.05;
  std::optional<FoldingPerturbation> perturbation;

  int ss() const { return dims.ss; }
  int u() const { return dims.u; }
  int c() const { return dims.c; }
  int m() const { return dims.m(); }

  // Radius of the chart ball around E^u on which t(x,E) is guaranteed to stay
  // inside [-eps,eps]^c: the solve gain ||A(E^u)^{-1}||_inf is at most 3/2 on
  // the desk-scale models, so half of epsilon leaves a safety margin.
  double chart_radius() const { return 0.5 * epsilon; }

  // quadratic part H_i(t) = sum_j t_j t_{j*u+i}   (0-based)
  Vector quad_H(const Vector& t) const {
    Vector H = Vector::Zero(u());
    for (int i = 0; i < u(); ++i)
      for (int j = 0; j < u(); ++j) H(i) += t(j) * t(j * u() + i);
    return H;
  }
  Matrix quad_dH(const Vector& t) const {
    Matrix dH = Matrix::Zero(u(), c());
    for (int i = 0; i < u(); ++i)
      for (int j = 0; j < u(); ++j) {
        dH(i, j) += t(j * u() + i);
        dH(i, j * u() + i) += t(j);
      }
    return dH;
  }

  Vector bump_values(const Vector& x, const Vector& t) const {
    Vector v = Vector::Zero(u());
    if (!perturbation) return v;
    Vector xt(ss() + c());
    xt << x, t;
    const double profile = perturbation->bump.value(xt);
    for (int i = 0; i < u(); ++i) v(i) = perturbation->amps(i) * profile;
    return v;
  }

  Vector central(const Vector& x, const Vector& t) const {
    Vector h(c());
    h.head(u()) = quad_H(t) + bump_values(x, t);
    for (int i = u(); i < c(); ++i) h(i) = t(i);
    return h;
  }

  // d central / d t  (c x c)  and  d central / d x  (c x ss)
  Matrix dcentral_dt(const Vector& x, const Vector& t) const {
    Matrix d = Matrix::Zero(c(), c());
    d.topRows(u()) = quad_dH(t);
    for (int i = u(); i < c(); ++i) d(i, i) = 1.0;
    if (perturbation) {
      Vector xt(ss() + c());
      xt << x, t;
      const Vector grad = perturbation->bump.gradient(xt);
      for (int i = 0; i < u(); ++i)
        d.row(i).head(c()) += perturbation->amps(i) * grad.tail(c()).transpose();
    }
    return d;
  }
  Matrix dcentral_dx(const Vector& x, const Vector& t) const {
    Matrix d = Matrix::Zero(c(), ss());
    if (perturbation) {
      Vector xt(ss() + c());
      xt << x, t;
      const Vector grad = perturbation->bump.gradient(xt);
      for (int i = 0; i < u(); ++i)
        d.row(i) = perturbation->amps(i) * grad.head(ss()).transpose();
    }
    return d;
  }

  Vector embed(const Vector& x, const Vector& t) const {
    Vector p(m());
    p.head(ss()) = x;
    p.segment(ss(), u()) = t.head(u());
    p.tail(c()) = central(x, t);
    return p;
  }

  // m x (ss + c) tangent frame of S at (x, t); columns are d/dx_i, d/dt_j.
  Matrix tangent_frame(const Vector& x, const Vector& t) const {
    Matrix f = Matrix::Zero(m(), ss() + c());
    f.topLeftCorner(ss(), ss()) = Matrix::Identity(ss(), ss());
    for (int j = 0; j < u(); ++j) f(ss() + j, ss() + j) = 1.0;
    f.bottomLeftCorner(c(), ss()) = dcentral_dx(x, t);
    f.bottomRightCorner(c(), c()) = dcentral_dt(x, t);
    return f;
  }
};

inline FoldingManifold standard_folding(const Dimensions& dims, double epsilon,
                                        double b_slab = 0.9) {
  dims.validate();
  if (!dims.folding_compatible())
    throw std::invalid_argument("standard_folding: requires c = u^2 (got c=" +
                                std::to_string(dims.c) + ", u=" +
                                std::to_string(dims.u) + ")");
  require(epsilon > 0.0, "standard_folding: epsilon must be positive");
  require(dims.u * epsilon * epsilon < b_slab && epsilon < b_slab,
          "standard_folding: epsilon too large for the candidate slab");
  FoldingManifold s;
  s.dims = dims;
  s.epsilon = epsilon;
  return s;
}

inline FoldingManifold perturb_folding(const FoldingManifold& s, double eta,
                                       std::uint64_t seed) {
  require(eta >= 0.0, "perturb_folding: eta >= 0");
  if (eta == 0.0) return s;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);

  FoldingPerturbation p;
  p.eta = eta;
  p.seed = seed;
  const int nvars = s.ss() + s.c();
  p.bump.center = Vector::Zero(nvars);
  p.bump.radius = Vector::Zero(nvars);
  for (int i = 0; i < s.ss(); ++i) {
    p.bump.center(i) = uni(rng);
    p.bump.radius(i) = 2.0;
  }
  const double rt = std::max(4.0 * s.epsilon, 0.2);
  for (int i = 0; i < s.c(); ++i) {
    p.bump.center(s.ss() + i) = 0.25 * s.epsilon * uni(rng);
    p.bump.radius(s.ss() + i) = rt;
  }
  p.bump.amplitude = 1.0;
  const double unit_c2 = p.bump.c2_bound();
  p.amps = Vector(s.u());
  for (int i = 0; i < s.u(); ++i) p.amps(i) = uni(rng);
  const double amax = sup_norm(p.amps);
  // scale so the analytic C^2 size of the perturbation is exactly eta
  p.amps *= (amax > 0.0 ? eta / (unit_c2 * amax) : 0.0);

  FoldingManifold out = s;
  out.perturbation = p;
  return out;
}

// ---------------------------------------------------------------------------
// Tangency system.  For frame vectors v_k = (a_k, b_k, c_k) of E, membership
// in T_z S pins t' = (b_k, c_k[u..c-1]) and leaves the u*u = c conditions
// c_{k,i} = (d central_i)(t'_k; a_k), collected as rows (k,i), k-major.

inline Vector frame_tprime(const FoldingManifold& s, const GrassmannPoint& E, int k) {
  Vector tp(s.c());
  // b_k = e_k in the graph chart; the trailing entries come from c_k
  for (int i = 0; i < s.u(); ++i) tp(i) = (i == k) ? 1.0 : 0.0;
  for (int i = s.u(); i < s.c(); ++i) tp(i) = E.e(s.ss() + i, k);
  return tp;
}

// A(E) t = c(E): A depends only on the t'_k blocks, c stacks c_{k,i}.
inline std::pair<Matrix, Vector> assemble_A_c(const FoldingManifold& s,
                                              const GrassmannPoint& E) {
  require(E.ss == s.ss() && E.u == s.u() && E.c == s.c(),
          "assemble_A_c: dimension mismatch");
  const int u = s.u(), c = s.c();
  Matrix A = Matrix::Zero(c, c);
  Vector cvec(c);
  for (int k = 0; k < u; ++k) {
    const Vector tp = frame_tprime(s, E, k);
    for (int i = 0; i < u; ++i) {
      const int row = k * u + i;
      for (int j = 0; j < u; ++j) {
        A(row, j * u + i) += tp(j);
        A(row, j) += tp(j * u + i);
      }
      cvec(row) = E.e(s.ss() + i, k);
    }
  }
  return {A, cvec};
}

// Exact integer A(E^u) and its determinant (Bareiss), for u up to desk scale.
inline std::vector<std::vector<long long>> folding_A_int_at_Eu(int u) {
  const int c = u * u;
  std::vector<std::vector<long long>> A(c, std::vector<long long>(c, 0));
  for (int k = 0; k < u; ++k)
    for (int i = 0; i < u; ++i) {
      const int row = k * u + i;
      for (int j = 0; j < u; ++j) {
        // t'_k = e_k: entries t'_k[j] = delta_{jk}; t'_k[j*u+i] = 0 unless
        // j*u + i < u, i.e. j = 0 and i = k index into the b-part
        if (j == k) A[row][j * u + i] += 1;
        const int l = j * u + i;
        A[row][j] += (l == k) ? 1 : 0;
      }
    }
  return A;
}

inline long long integer_determinant(std::vector<std::vector<long long>> a) {
  const int n = static_cast<int>(a.size());
  long long prev = 1, sign = 1;
  for (int k = 0; k < n - 1; ++k) {
    if (a[k][k] == 0) {
      int swap_row = -1;
      for (int r = k + 1; r < n; ++r)
        if (a[r][k] != 0) {
          swap_row = r;
          break;
        }
      if (swap_row < 0) return 0;
      std::swap(a[k], a[swap_row]);
      sign = -sign;
    }
    for (int i = k + 1; i < n; ++i)
      for (int j = k + 1; j < n; ++j)
        a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
    prev = a[k][k];
  }
  return sign * a[n - 1][n - 1];
}

// ---------------------------------------------------------------------------

struct TangencySolve {
  Vector t;
  double residual = 0.0;
  int iterations = 0;
  double A_det = 0.0;
};

// Residual of the tangency conditions at parameter t for plane E at base x.
inline Vector tangency_residual(const FoldingManifold& s, const Vector& x,
                                const GrassmannPoint& E, const Vector& t) {
  const int u = s.u();
  const Matrix dht = s.dcentral_dt(x, t);
  const Matrix dhx = s.dcentral_dx(x, t);
  Vector r(s.c());
  for (int k = 0; k < u; ++k) {
    const Vector tp = frame_tprime(s, E, k);
    const Vector a_k = E.e.topRows(s.ss()).col(k);
    for (int i = 0; i < u; ++i)
      r(k * u + i) = dht.row(i).dot(tp) + dhx.row(i).dot(a_k) - E.e(s.ss() + i, k);
  }
  return r;
}

inline TangencySolve solve_tangency_params(const FoldingManifold& s, const Vector& x,
                                           const GrassmannPoint& E, double tol = 1e-12,
                                           int max_iter = 50,
                                           const Vector* start = nullptr) {
  const auto [A, cvec] = assemble_A_c(s, E);
  TangencySolve sol;
  sol.A_det = A.determinant();
  if (std::abs(sol.A_det) < 0.1)
    throw singular_matrix_error("solve_tangency_params: |det A(E)| = " +
                                format_double(std::abs(sol.A_det)) +
                                " below the 0.1 conditioning threshold");
  if (!s.perturbation) {
    sol.t = A.lu().solve(cvec);
    sol.iterations = 0;
    sol.residual = sup_norm(tangency_residual(s, x, E, sol.t));
  } else {
    Vector t = start ? *start : Vector::Zero(s.c());
    double rnorm = sup_norm(tangency_residual(s, x, E, t));
    int it = 0;
    for (; it < max_iter && rnorm > tol; ++it) {
      const Matrix jac = finite_diff_jacobian(
          [&](const Vector& tt) { return tangency_residual(s, x, E, tt); }, t, 1e-7);
      const Vector step = jac.lu().solve(tangency_residual(s, x, E, t));
      double damp = 1.0;
      Vector t_next = t - step;
      double r_next = sup_norm(tangency_residual(s, x, E, t_next));
      while (r_next > rnorm && damp > 1e-4) {
        damp *= 0.5;
        t_next = t - damp * step;
        r_next = sup_norm(tangency_residual(s, x, E, t_next));
      }
      t = t_next;
      rnorm = r_next;
    }
    if (rnorm > tol)
      throw newton_error("solve_tangency_params: Newton stalled at residual " +
                         format_double(rnorm));
    sol.t = t;
    sol.iterations = it;
    sol.residual = rnorm;
  }
  if (!IntervalBox::cube(s.c(), s.epsilon).contains(sol.t))
    throw std::domain_error(
        "solve_tangency_params: t escapes [-eps,eps]^c (epsilon too small for this E)");
  return sol;
}

// ---------------------------------------------------------------------------
// The paper-style norm for Dt: derivatives are taken along the diagonal
// direction of each frame vector's leading central coordinates,
//   max_i max_k | sum_{iota<u} dt_i / dc_{k,iota} |.
// The induced infinity norm would see 3/2 already at u = 2; the appendix
// bound <= 1 holds in this directional convention.

inline double frame_diagonal_norm(const Matrix& dt, int ss, int u, int c) {
  double best = 0.0;
  for (int i = 0; i < dt.rows(); ++i)
    for (int k = 0; k < u; ++k) {
      double acc = 0.0;
      for (int iota = 0; iota < u; ++iota) acc += dt(i, k * (ss + c) + ss + iota);
      best = std::max(best, std::abs(acc));
    }
  return best;
}

// Dt at E as a (c x chart_dim) matrix by finite differences of the solver.
inline Matrix tangency_dt_fd(const FoldingManifold& s, const Vector& x,
                             const GrassmannPoint& E, double h = 1e-6) {
  const int chart = (s.ss() + s.c()) * s.u();
  const Vector e0 = E.chart_coords();
  Matrix dt(s.c(), chart);
  for (int j = 0; j < chart; ++j) {
    Vector ep = e0, em = e0;
    ep(j) += h;
    em(j) -= h;
    const GrassmannPoint Ep = GrassmannPoint::from_chart(s.ss(), s.u(), s.c(), ep);
    const GrassmannPoint Em = GrassmannPoint::from_chart(s.ss(), s.u(), s.c(), em);
    dt.col(j) =
        (solve_tangency_params(s, x, Ep).t - solve_tangency_params(s, x, Em).t) /
        (2.0 * h);
  }
  return dt;
}

struct AppendixReport {
  bool ok = false;
  bool skipped = false;  // perturbed manifolds have no closed form at E^u
  double norm_fd = 0.0, norm_cramer = 0.0, norm_cofactor = 0.0;
  double max_pairwise_diff = 0.0;
  double dh_norm = 0.0;  // ||Dh||_inf at t = 0
  long long det_A = 0;
  std::string message;
};

// Dt(E^u) three ways: finite differences of the solver, Cramer/Jacobi closed
// form (columns of A^{-1}), and the cofactor formula with exact integers.
inline AppendixReport appendix_derivative_check(const FoldingManifold& s) {
  AppendixReport rep;
  if (s.perturbation) {
    rep.skipped = true;
    rep.message = "closed forms hold only for the unperturbed model at E^u";
    return rep;
  }
  const int ss = s.ss(), u = s.u(), c = s.c();
  const int chart = (ss + c) * u;
  const Vector x0 = Vector::Zero(ss);
  const GrassmannPoint Eu(ss, u, c);

  const Matrix dt_fd = tangency_dt_fd(s, x0, Eu);

  const auto [A, cvec] = assemble_A_c(s, Eu);
  (void)cvec;
  const Matrix Ainv = A.lu().inverse();
  Matrix dt_cramer = Matrix::Zero(c, chart);
  Matrix dt_cofactor = Matrix::Zero(c, chart);

  const auto Aint = folding_A_int_at_Eu(u);
  rep.det_A = integer_determinant(Aint);
  auto cofactor = [&](int row, int col) {
    std::vector<std::vector<long long>> minor;
    for (int r = 0; r < c; ++r) {
      if (r == row) continue;
      std::vector<long long> line;
      for (int cc = 0; cc < c; ++cc)
        if (cc != col) line.push_back(Aint[r][cc]);
      minor.push_back(std::move(line));
    }
    const long long md = minor.empty() ? 1 : integer_determinant(minor);
    return (((row + col) % 2 == 0) ? md : -md);
  };

  // dt_i/dc_{k,iota} corresponds to the flattened cvec slot k*u + iota.
  for (int k = 0; k < u; ++k)
    for (int iota = 0; iota < u; ++iota) {
      const int slot = k * u + iota;
      const int col = k * (ss + c) + ss + iota;
      for (int i = 0; i < c; ++i) {
        dt_cramer(i, col) = Ainv(i, slot);
        dt_cofactor(i, col) =
            static_cast<double>(cofactor(slot, i)) / static_cast<double>(rep.det_A);
      }
    }

  rep.max_pairwise_diff =
      std::max({(dt_fd - dt_cramer).cwiseAbs().maxCoeff(),
                (dt_fd - dt_cofactor).cwiseAbs().maxCoeff(),
                (dt_cramer - dt_cofactor).cwiseAbs().maxCoeff()});
  rep.norm_fd = frame_diagonal_norm(dt_fd, ss, u, c);
  rep.norm_cramer = frame_diagonal_norm(dt_cramer, ss, u, c);
  rep.norm_cofactor = frame_diagonal_norm(dt_cofactor, ss, u, c);
  rep.dh_norm = op_norm_inf(s.dcentral_dt(x0, Vector::Zero(c)));

  rep.ok = rep.max_pairwise_diff < 1e-6 && rep.norm_fd <= 1.0 + 1e-9 &&
           rep.norm_cramer <= 1.0 + 1e-9 && rep.norm_cofactor <= 1.0 + 1e-9;
  if (!rep.ok)
    rep.message = "three-route disagreement " + format_double(rep.max_pairwise_diff) +
                  " or norm above 1";
  return rep;
}

// ---------------------------------------------------------------------------

struct FoldingCertificate {
  bool ok = false;
  double anchor_sup = 0.0;       // sup |h| over the grid (anchor y = 0)
  double dh_norm = 0.0;          // sup ||Dh||_inf over the t-grid
  double dt_norm = 0.0;          // sup frame-diagonal ||Dt|| over the (x,E)-grid
  double uniqueness_gap = 0.0;   // worst two-start Newton disagreement
  double solve_residual = 0.0;   // worst containment residual
  double margin_item3 = 0.0;     // delta - C*nu with C = dh*max(1,dt)
  std::vector<std::string> failures;
};

inline FoldingCertificate certify_folding(const FoldingManifold& s, double alpha,
                                          double nu, double delta, int grid_n = 5,
                                          double theta = -1.0,
                                          std::uint64_t seed = 11) {
  FoldingCertificate cert;
  const int ss = s.ss(), u = s.u(), c = s.c();
  if (theta <= 0.0) theta = s.chart_radius();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);

  // (2) anchor closeness on a t-grid (the embedding form holds by
  // construction: the first ss+u coordinates and the trailing c-u central
  // coordinates reproduce (x,t), so S is injective).
  detail::for_each_grid_point(IntervalBox::cube(c, s.epsilon), 3, [&](const Vector& t) {
    Vector x = Vector::Zero(ss);
    cert.anchor_sup = std::max(cert.anchor_sup, sup_norm(s.central(x, t)));
    cert.dh_norm = std::max(cert.dh_norm, op_norm_inf(s.dcentral_dt(x, t)));
  });
  if (!(cert.anchor_sup < delta))
    cert.failures.push_back("condition 2: central values stray " +
                            format_double(cert.anchor_sup) + " >= delta");

  // (3) tangency solves over an (x, E)-grid inside the chart ball.
  for (int trial = 0; trial < grid_n * grid_n; ++trial) {
    Vector x(ss);
    for (int i = 0; i < ss; ++i) x(i) = 2.0 * uni(rng);
    GrassmannPoint E(ss, u, c);
    for (int i = 0; i < ss + c; ++i)
      for (int j = 0; j < u; ++j) E.e(i, j) = 0.5 * theta * uni(rng);
    try {
      const TangencySolve sol = solve_tangency_params(s, x, E);
      cert.solve_residual = std::max(cert.solve_residual, sol.residual);
      // uniqueness: a second Newton start must land on the same t
      Vector start(c);
      for (int i = 0; i < c; ++i) start(i) = s.epsilon * uni(rng);
      if (s.perturbation) {
        const TangencySolve sol2 = solve_tangency_params(s, x, E, 1e-12, 50, &start);
        cert.uniqueness_gap =
            std::max(cert.uniqueness_gap, sup_dist(sol.t, sol2.t));
      }
      const Matrix dt = tangency_dt_fd(s, x, E);
      cert.dt_norm = std::max(cert.dt_norm, frame_diagonal_norm(dt, ss, u, c));
    } catch (const std::exception& ex) {
      cert.failures.push_back(std::string("condition 3 solve: ") + ex.what());
      break;
    }
  }
  if (cert.uniqueness_gap > 1e-9)
    cert.failures.push_back("uniqueness: Newton starts disagree by " +
                            format_double(cert.uniqueness_gap));

  const double C = cert.dh_norm * std::max(1.0, cert.dt_norm);
  cert.margin_item3 = delta - C * nu;
  if (!(cert.margin_item3 > 0.0))
    cert.failures.push_back("condition 3: C*nu = " + format_double(C * nu) +
                            " >= delta");
  if (!(cert.dt_norm <= alpha))
    cert.failures.push_back("condition 3: ||Dt|| exceeds alpha");

  cert.ok = cert.failures.empty();
  return cert;
}

// ---------------------------------------------------------------------------
// The induced disc on the Grassmannian model: over (x, chart(E)) the graph
// maps are g = t(x,E)_{1..u} (unstable) and h = central(x, t(x,E)).

inline HorizontalDisc induced_disc(const FoldingManifold& s, const GrassmannSystem& g,
                                   double alpha, double delta) {
  require(s.ss() == g.ambient.ss && s.u() == g.ambient.u && s.c() == g.ambient.c,
          "induced_disc: manifold and Grassmann system dimensions differ");
  const int ss = s.ss(), u = s.u(), c = s.c();
  const int chart = g.chart_dim();
  FoldingManifold sm = s;  // owned copy for the closures

  HorizontalDisc disc;
  disc.domain = g.system.base.stable_box;
  disc.alpha = alpha;
  disc.delta = delta;
  disc.anchor = Vector::Zero(c);
  auto solve_at = [sm, ss, u, c, chart](const Vector& xi) {
    const Vector x = xi.head(ss);
    const GrassmannPoint E =
        GrassmannPoint::from_chart(ss, u, c, xi.segment(ss, chart));
    return std::make_pair(x, solve_tangency_params(sm, x, E).t);
  };
  disc.g = [solve_at, u](const Vector& xi) -> Vector {
    return solve_at(xi).second.head(u);
  };
  disc.h = [solve_at, sm](const Vector& xi) -> Vector {
    const auto [x, t] = solve_at(xi);
    return sm.central(x, t);
  };
  return disc;
}

// ---------------------------------------------------------------------------

struct TangencyCertificate {
  Vector point_x;          // tangency point in R^m
  GrassmannPoint plane_E;  // the witness plane
  Vector t_param;          // fold parameter with E subset T_{S(x,t)}S
  std::vector<int> itinerary;
  std::vector<double> containment_angles;
  int codimension = 0;
  double max_angle = 0.0;
  bool unstable_cone_ok = false;   // plane inside the unstable cone
  bool stable_cone_clear = false;  // plane outside the strong-stable cone

  std::string to_text() const {
    std::ostringstream os;
    os << "tangency_certificate:\n  point_x:";
    for (Eigen::Index i = 0; i < point_x.size(); ++i)
      os << " " << format_double(point_x(i));
    os << "\n  codimension: " << codimension
       << "\n  max_principal_angle: " << format_double(max_angle)
       << "\n  unstable_cone_ok: " << (unstable_cone_ok ? "true" : "false")
       << "\n  stable_cone_clear: " << (stable_cone_clear ? "true" : "false")
       << "\n  itinerary:";
    for (int l : itinerary) os << " " << l;
    os << "\n";
    return os.str();
  }
};

// Assemble the tangency certificate from a Grassmann-model witness: solve the
// fold parameter for the witness plane, compare the plane against the tangent
// space of S, and run the cone-disjointness checks.
inline TangencyCertificate certify_tangency(const FoldingManifold& s,
                                            const GrassmannSystem& g,
                                            const IntersectionWitness& witness,
                                            double theta) {
  TangencyCertificate cert;
  cert.itinerary = witness.itinerary;
  cert.codimension = s.u();

  const Vector q = witness.point_q;
  const GrassmannPoint E = g.plane(q);
  cert.plane_E = E;
  const Vector x_ss = q.head(s.ss());
  const TangencySolve sol = solve_tangency_params(s, x_ss, E);
  cert.t_param = sol.t;
  cert.point_x = s.embed(x_ss, sol.t);

  const Matrix frame_S = s.tangent_frame(x_ss, sol.t);
  cert.containment_angles = principal_angles(E.frame(), frame_S);
  cert.max_angle = cert.containment_angles.empty() ? 0.0
                                                   : cert.containment_angles.back();

  // weak-partial-hyperbolicity: the plane sits in the unstable cone and
  // misses the strong-stable cone
  const Matrix f = E.frame();
  double worst_u = 0.0, worst_s = std::numeric_limits<double>::infinity();
  for (int k = 0; k < f.cols(); ++k) {
    const double ns = f.col(k).head(s.ss()).norm();
    const double nu_ = f.col(k).segment(s.ss(), s.u()).norm();
    const double nc = f.col(k).tail(s.c()).norm();
    worst_u = std::max(worst_u, std::hypot(ns, nc) / std::max(1e-300, nu_));
    worst_s = std::min(worst_s, nu_ + nc);
  }
  cert.unstable_cone_ok = worst_u < theta;
  cert.stable_cone_clear = worst_s > 0.5;  // far from ||v|| < alpha ||u|| with u ~ 0
  return cert;
}

}  // namespace blendlab
