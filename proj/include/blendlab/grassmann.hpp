#pragma once

// u-planes in R^m as graphs over E^u, the induced action of linear maps, and
// the skew-product model on base x chart coordinates.

#include "blendlab/skew.hpp"

#include <vector>

namespace blendlab {

// A u-plane near E^u = {0}^ss x R^u x {0}^c in graph form: the plane spanned
// by the columns of [e_ss; I_u; e_c].  chart(E) = 0 exactly at E^u.
struct GrassmannPoint {
  int ss = 0, u = 0, c = 0;
  Matrix e;  // (ss + c) x u; rows 0..ss-1 are e_ss, rows ss..ss+c-1 are e_c

  GrassmannPoint() = default;
  GrassmannPoint(int ss_, int u_, int c_)
      : ss(ss_), u(u_), c(c_), e(Matrix::Zero(ss_ + c_, u_)) {}

  int m() const { return ss + u + c; }
  Matrix e_ss() const { return e.topRows(ss); }
  Matrix e_c() const { return e.bottomRows(c); }
  double chart_norm() const { return e.size() == 0 ? 0.0 : op_norm2(e); }

  // m x u frame whose columns span the plane.
  Matrix frame() const {
    Matrix f(m(), u);
    f.topRows(ss) = e.topRows(ss);
    f.middleRows(ss, u) = Matrix::Identity(u, u);
    f.bottomRows(c) = e.bottomRows(c);
    return f;
  }

  Vector chart_coords() const {
    Vector v(e.size());
    for (int j = 0; j < e.cols(); ++j)
      for (int i = 0; i < e.rows(); ++i) v(j * e.rows() + i) = e(i, j);
    return v;
  }
  static GrassmannPoint from_chart(int ss, int u, int c, const Vector& v) {
    GrassmannPoint p(ss, u, c);
    require(v.size() == (ss + c) * u, "GrassmannPoint: chart size mismatch");
    for (int j = 0; j < u; ++j)
      for (int i = 0; i < ss + c; ++i) p.e(i, j) = v(j * (ss + c) + i);
    return p;
  }
};

// Induced action E -> M E, re-solved for graph form over the middle block.
inline GrassmannPoint plane_action(const Matrix& M, const GrassmannPoint& E,
                                   double sing_tol = 1e-10) {
  require(M.rows() == E.m() && M.cols() == E.m(), "plane_action: matrix size");
  const Matrix A = M * E.frame();
  const Matrix A_u = A.middleRows(E.ss, E.u);
  Eigen::FullPivLU<Matrix> lu(A_u);
  if (!lu.isInvertible() || conorm(A_u) < sing_tol * std::max(1.0, op_norm2(A_u)))
    throw chart_escape_error("plane_action: image plane escapes the graph chart");
  const Matrix Ainv = lu.inverse();
  GrassmannPoint out(E.ss, E.u, E.c);
  out.e.topRows(E.ss) = A.topRows(E.ss) * Ainv;
  out.e.bottomRows(E.c) = A.bottomRows(E.c) * Ainv;
  return out;
}

// Principal angles of span(E) against span(F), ascending.  Containment
// E subset F holds iff all angles vanish (up to tolerance).
inline std::vector<double> principal_angles(const Matrix& E, const Matrix& F) {
  require(E.rows() == F.rows(), "principal_angles: ambient dimension mismatch");
  auto orthonormal = [](const Matrix& X) {
    Eigen::HouseholderQR<Matrix> qr(X);
    Matrix q = qr.householderQ() * Matrix::Identity(X.rows(), X.cols());
    Matrix r = qr.matrixQR().topRows(X.cols()).triangularView<Eigen::Upper>();
    for (int j = 0; j < X.cols(); ++j)
      if (std::abs(r(j, j)) < 1e-12 * std::max(1.0, op_norm2(X)))
        throw std::invalid_argument("principal_angles: rank-deficient frame");
    return q;
  };
  const Matrix qe = orthonormal(E);
  const Matrix qf = orthonormal(F);
  // Sine-based route: the singular values of (I - P_F) Q_E are the sines of
  // the principal angles, which stays accurate near zero where acos of the
  // cosine route loses half the digits.
  const Matrix residual = qe - qf * (qf.transpose() * qe);
  Eigen::JacobiSVD<Matrix> svd(residual);
  std::vector<double> angles;
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) {
    const double s = std::clamp(svd.singularValues()(i), 0.0, 1.0);
    angles.push_back(std::asin(s));
  }
  std::sort(angles.begin(), angles.end());
  return angles;
}

inline bool plane_contained(const Matrix& E, const Matrix& F, double tol = 1e-8) {
  const auto angles = principal_angles(E, F);
  return angles.empty() ? true : angles.back() <= tol;
}

// ---------------------------------------------------------------------------

struct ConeInvarianceReport {
  bool ok = false;
  std::vector<double> branch_rates;   // exact chart-operator norms
  std::vector<Matrix> chart_operators;
  double max_rate = 0.0;
  double bound = 0.0;  // beta * nu
  int violating_branch = -1;
  std::string message;
};

// Full m x m differential of branch l of the skew product (block diagonal).
inline Matrix branch_differential(const SkewProductSystem& sys, int l) {
  const int n = sys.d_ss() + sys.d_u(), m = n + sys.c();
  Matrix M = Matrix::Zero(m, m);
  M.topLeftCorner(n, n) = sys.base.branches[l].linear;
  M.bottomRightCorner(sys.c(), sys.c()) = sys.fiber.maps[l].linear;
  return M;
}

// For the affine model the induced chart map is linear; build it by applying
// the action to the chart basis and certify the rate beta*nu.
inline ConeInvarianceReport verify_cone_invariance(const SkewProductSystem& sys,
                                                   double theta, int samples = 32,
                                                   double tol = 1e-9) {
  const int ss = sys.d_ss(), u = sys.d_u(), c = sys.c();
  const int du = (ss + c) * u;
  ConeInvarianceReport rep;
  rep.bound = sys.fiber.beta * sys.base.nu;

  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);

  for (int l = 0; l < sys.kappa(); ++l) {
    const Matrix M = branch_differential(sys, l);
    GrassmannPoint zero(ss, u, c);
    const GrassmannPoint img0 = plane_action(M, zero);
    if (img0.chart_norm() > tol) {
      rep.violating_branch = l;
      rep.message = "branch " + std::to_string(l) + " does not fix E^u";
      return rep;
    }
    Matrix L(du, du);
    for (int j = 0; j < du; ++j) {
      Vector basis = Vector::Zero(du);
      basis(j) = 1.0;
      const GrassmannPoint p = GrassmannPoint::from_chart(ss, u, c, basis);
      L.col(j) = plane_action(M, p).chart_coords();
    }
    // exactness of the linear model on sampled chart points inside the cone
    for (int s = 0; s < samples; ++s) {
      Vector v(du);
      for (int i = 0; i < du; ++i) v(i) = theta * uni(rng);
      GrassmannPoint p = GrassmannPoint::from_chart(ss, u, c, v);
      if (p.chart_norm() >= theta) continue;
      GrassmannPoint q;
      try {
        q = plane_action(M, p);
      } catch (const chart_escape_error&) {
        rep.violating_branch = l;
        rep.message = "chart escape on branch " + std::to_string(l);
        return rep;
      }
      if (sup_norm(q.chart_coords() - L * v) > 1e-8 * std::max(1.0, sup_norm(v))) {
        rep.violating_branch = l;
        rep.message = "branch " + std::to_string(l) + " chart action is not linear";
        return rep;
      }
    }
    const double rate = op_norm2(L);
    rep.branch_rates.push_back(rate);
    rep.chart_operators.push_back(L);
    rep.max_rate = std::max(rep.max_rate, rate);
    if (rate > rep.bound + tol) {
      rep.violating_branch = l;
      rep.message = "branch " + std::to_string(l) + " chart rate " +
                    format_double(rate) + " exceeds beta*nu = " +
                    format_double(rep.bound);
      return rep;
    }
  }
  rep.ok = true;
  return rep;
}

// ---------------------------------------------------------------------------

struct GrassmannSystem {
  SkewProductSystem system;  // base state (x_ss, chart(e), x_u), fiber y
  Dimensions ambient;        // dimensions of the underlying model
  double theta = 0.5;
  double contraction_rho = 0.0;  // certified chart rate <= beta*nu
  int d_G_ss = 0;

  int chart_dim() const { return (ambient.ss + ambient.c) * ambient.u; }

  // Split a Grassmann-system state into the ambient point and the plane.
  Vector ambient_point(const Vector& q) const {
    const int ss = ambient.ss, u = ambient.u, c = ambient.c;
    Vector x(ss + u + c);
    x.head(ss) = q.head(ss);
    x.segment(ss, u) = q.segment(ss + chart_dim(), u);
    x.tail(c) = q.tail(c);
    return x;
  }
  GrassmannPoint plane(const Vector& q) const {
    return GrassmannPoint::from_chart(ambient.ss, ambient.u, ambient.c,
                                      q.segment(ambient.ss, chart_dim()));
  }
};

// The induced skew product on (x, E): base state gains the chart coordinates
// as extra stable directions with the exact linear chart maps, the fiber IFS
// is unchanged.
inline GrassmannSystem grassmann_skew_model(const SkewProductSystem& sys, double theta,
                                            const ConeInvarianceReport* pre = nullptr) {
  ConeInvarianceReport rep = pre ? *pre : verify_cone_invariance(sys, theta);
  if (!rep.ok)
    throw construction_error("grassmann_skew_model: cone invariance failed: " +
                             rep.message);
  const int ss = sys.d_ss(), u = sys.d_u(), c = sys.c();
  const int du = (ss + c) * u;

  GrassmannSystem g;
  g.ambient = Dimensions{ss, u, c};
  g.theta = theta;
  g.contraction_rho = rep.max_rate;
  g.d_G_ss = ss + u * (ss + u + c - u);

  HorseshoeBase base;
  base.nu = sys.base.nu;
  base.alpha = sys.base.alpha;
  std::vector<Interval> sbox;
  for (int i = 0; i < ss; ++i) sbox.push_back(sys.base.stable_box.iv[i]);
  for (int i = 0; i < du; ++i) sbox.emplace_back(-theta, theta);
  base.stable_box = IntervalBox(sbox);
  base.unstable_box = sys.base.unstable_box;
  base.cells = sys.base.cells;
  for (int l = 0; l < sys.kappa(); ++l) {
    Matrix lin = Matrix::Zero(ss + du + u, ss + du + u);
    lin.topLeftCorner(ss, ss) = sys.base.S(l);
    lin.block(ss, ss, du, du) = rep.chart_operators[l];
    lin.bottomRightCorner(u, u) = sys.base.U(l);
    Vector off = Vector::Zero(ss + du + u);
    off.head(ss) = sys.base.w_s(l);
    off.tail(u) = sys.base.w_u(l);
    base.branches.emplace_back(lin, off);
  }
  base.validate();

  g.system.base = base;
  g.system.fiber = sys.fiber;
  g.system.validate();
  require(g.system.d_ss() == g.d_G_ss,
          "grassmann_skew_model: stable index bookkeeping mismatch");
  return g;
}

}  // namespace blendlab
