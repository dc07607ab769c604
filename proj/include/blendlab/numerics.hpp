#pragma once

// Small dense linear algebra, interval boxes, affine maps and finite
// differences shared by every other header in this library.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace blendlab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct singular_matrix_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct chart_escape_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct newton_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct construction_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// ---------------------------------------------------------------------------
// Dimensions

struct Dimensions {
  int ss = 1;  // strong-stable
  int u = 1;   // unstable
  int c = 1;   // central
  int k = 0;   // parameter count
  int d = 0;   // jet order

  int m() const { return ss + u + c; }
  int n() const { return ss + u; }

  void validate() const {
    require(ss >= 1 && u >= 1 && c >= 1, "Dimensions: ss,u,c must be positive");
    require(k >= 0 && d >= 0, "Dimensions: k,d must be non-negative");
  }
  bool folding_compatible() const { return c == u * u; }
};

// ---------------------------------------------------------------------------
// Norms (sup metric everywhere for state-space distances; spectral norm for
// operator estimates so that the co-norm is the smallest singular value).

inline double sup_norm(const Vector& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

inline double sup_dist(const Vector& a, const Vector& b) {
  return sup_norm(a - b);
}

inline double op_norm2(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

// Induced infinity norm: max absolute row sum.
inline double op_norm_inf(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return m.cwiseAbs().rowwise().sum().maxCoeff();
}

// Co-norm m(T) = ||T^{-1}||^{-1}: the smallest singular value.
inline double conorm(const Matrix& m) {
  require(m.rows() == m.cols(), "conorm: matrix must be square");
  Eigen::JacobiSVD<Matrix> svd(m);
  const double smin = svd.singularValues()(svd.singularValues().size() - 1);
  const double smax = svd.singularValues()(0);
  if (!(smin > smax * 1e-14) || smin == 0.0)
    throw singular_matrix_error("conorm: matrix is singular to working precision");
  return smin;
}

struct NormReport {
  double sup_norm = 0.0;
  double co_norm = 0.0;
  int grid_resolution = 0;
};

// Spectral norm and co-norm of an operator; grid_resolution records the
// sampling density when the operator was estimated on a grid (0 = exact).
inline NormReport norm_report(const Matrix& m, int grid_resolution = 0) {
  NormReport r;
  r.sup_norm = op_norm2(m);
  r.co_norm = conorm(m);
  r.grid_resolution = grid_resolution;
  return r;
}

// ---------------------------------------------------------------------------
// Intervals with outward rounding.  Every arithmetic step widens the result
// by one ulp per bound so that enclosures stay sound.

inline double step_down(double x) {
  return std::nextafter(x, -std::numeric_limits<double>::infinity());
}
inline double step_up(double x) {
  return std::nextafter(x, std::numeric_limits<double>::infinity());
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  Interval() = default;
  Interval(double a, double b) : lo(a), hi(b) {
    require(lo <= hi, "Interval: lo must not exceed hi");
  }
  static Interval point(double x) { return Interval(x, x); }

  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
  bool contains(double x) const { return lo <= x && x <= hi; }
  bool contains(const Interval& o) const { return lo <= o.lo && o.hi <= hi; }
  // Strict interior containment margin against the open interval (lo,hi);
  // negative if any part of `o` pokes out.
  double interior_margin(const Interval& o) const {
    return std::min(o.lo - lo, hi - o.hi);
  }
};

inline Interval out_add(const Interval& a, const Interval& b) {
  return {step_down(a.lo + b.lo), step_up(a.hi + b.hi)};
}

inline Interval out_scale(double s, const Interval& a) {
  const double p = s * a.lo, q = s * a.hi;
  return {step_down(std::min(p, q)), step_up(std::max(p, q))};
}

struct IntervalBox {
  std::vector<Interval> iv;
  bool open = false;  // bookkeeping flag for candidate sets stored as closed boxes

  IntervalBox() = default;
  explicit IntervalBox(std::vector<Interval> v, bool open_flag = false)
      : iv(std::move(v)), open(open_flag) {}

  static IntervalBox cube(int dim, double half_width, bool open_flag = false) {
    return IntervalBox(std::vector<Interval>(dim, Interval(-half_width, half_width)),
                       open_flag);
  }
  static IntervalBox from_center(const Vector& c, double half_width) {
    std::vector<Interval> v;
    v.reserve(c.size());
    for (Eigen::Index i = 0; i < c.size(); ++i)
      v.emplace_back(c(i) - half_width, c(i) + half_width);
    return IntervalBox(std::move(v));
  }

  int dim() const { return static_cast<int>(iv.size()); }
  // Sup-metric diameter: the largest axis width.
  double diameter() const {
    double w = 0.0;
    for (const auto& i : iv) w = std::max(w, i.width());
    return w;
  }
  Vector center() const {
    Vector c(dim());
    for (int i = 0; i < dim(); ++i) c(i) = iv[i].mid();
    return c;
  }
  Vector lower() const {
    Vector c(dim());
    for (int i = 0; i < dim(); ++i) c(i) = iv[i].lo;
    return c;
  }
  Vector upper() const {
    Vector c(dim());
    for (int i = 0; i < dim(); ++i) c(i) = iv[i].hi;
    return c;
  }
  bool contains(const Vector& x) const {
    for (int i = 0; i < dim(); ++i)
      if (!iv[i].contains(x(i))) return false;
    return true;
  }
  bool contains(const IntervalBox& o) const {
    for (int i = 0; i < dim(); ++i)
      if (!iv[i].contains(o.iv[i])) return false;
    return true;
  }
  // Signed sup-metric distance from x to the complement; positive inside.
  double boundary_margin(const Vector& x) const {
    double m = std::numeric_limits<double>::infinity();
    for (int i = 0; i < dim(); ++i)
      m = std::min(m, std::min(x(i) - iv[i].lo, iv[i].hi - x(i)));
    return m;
  }
  // Margin of `o` inside the open interior of this box; negative if outside.
  double interior_margin(const IntervalBox& o) const {
    double m = std::numeric_limits<double>::infinity();
    for (int i = 0; i < dim(); ++i) m = std::min(m, iv[i].interior_margin(o.iv[i]));
    return m;
  }
  int widest_axis() const {
    int a = 0;
    for (int i = 1; i < dim(); ++i)
      if (iv[i].width() > iv[a].width()) a = i;
    return a;
  }
  std::pair<IntervalBox, IntervalBox> split(int axis) const {
    IntervalBox a = *this, b = *this;
    const double m = iv[axis].mid();
    a.iv[axis] = Interval(iv[axis].lo, m);
    b.iv[axis] = Interval(m, iv[axis].hi);
    return {a, b};
  }
};

// ---------------------------------------------------------------------------
// Affine maps x -> A x + b.

struct AffineMap {
  Matrix linear;
  Vector offset;

  AffineMap() = default;
  AffineMap(Matrix a, Vector b) : linear(std::move(a)), offset(std::move(b)) {
    require(linear.rows() == offset.size(), "AffineMap: shape mismatch");
  }
  static AffineMap identity(int dim) {
    return AffineMap(Matrix::Identity(dim, dim), Vector::Zero(dim));
  }

  int dim_out() const { return static_cast<int>(linear.rows()); }
  int dim_in() const { return static_cast<int>(linear.cols()); }

  Vector operator()(const Vector& x) const { return linear * x + offset; }

  double condition_number() const {
    Eigen::JacobiSVD<Matrix> svd(linear);
    const auto& s = svd.singularValues();
    const double smin = s(s.size() - 1);
    if (smin == 0.0) throw singular_matrix_error("AffineMap: linear part singular");
    return s(0) / smin;
  }

  AffineMap inverse() const {
    require(linear.rows() == linear.cols(), "AffineMap::inverse: not square");
    Eigen::FullPivLU<Matrix> lu(linear);
    if (!lu.isInvertible())
      throw singular_matrix_error("AffineMap::inverse: linear part singular");
    Matrix inv = lu.inverse();
    return AffineMap(inv, -inv * offset);
  }

  // this(other(x)) as a single affine map.
  AffineMap compose(const AffineMap& other) const {
    return AffineMap(linear * other.linear, linear * other.offset + offset);
  }
};

// Outward-rounded enclosure of f(b).
inline IntervalBox affine_image_box(const AffineMap& f, const IntervalBox& b) {
  require(f.dim_in() == b.dim(), "affine_image_box: dimension mismatch");
  std::vector<Interval> out;
  out.reserve(f.dim_out());
  for (int i = 0; i < f.dim_out(); ++i) {
    Interval acc = Interval::point(f.offset(i));
    for (int j = 0; j < f.dim_in(); ++j) {
      const double a = f.linear(i, j);
      if (a == 0.0) continue;
      acc = out_add(acc, out_scale(a, b.iv[j]));
    }
    out.push_back(acc);
  }
  return IntervalBox(std::move(out));
}

// ---------------------------------------------------------------------------
// Central finite differences.  Step is relative to coordinate scale.

inline constexpr double kDefaultFdStep = 1e-5;

inline Matrix finite_diff_jacobian(const std::function<Vector(const Vector&)>& f,
                                   const Vector& x, double h = kDefaultFdStep) {
  require(h > 0, "finite_diff_jacobian: step must be positive");
  const Vector f0 = f(x);
  Matrix jac(f0.size(), x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double hj = h * std::max(1.0, std::abs(x(j)));
    Vector xp = x, xm = x;
    xp(j) += hj;
    xm(j) -= hj;
    jac.col(j) = (f(xp) - f(xm)) / (2.0 * hj);
  }
  return jac;
}

// ---------------------------------------------------------------------------
// Compactly supported bump kernel k(s) = (1-s^2)^3 on |s|<=1.  C^2 with
// analytically computable derivative bounds: |k|<=1, |k'|<=96/(25*sqrt(5)),
// |k''|<=6.

struct BumpKernel {
  static double k(double s) {
    const double w = 1.0 - s * s;
    return w <= 0.0 ? 0.0 : w * w * w;
  }
  static double dk(double s) {
    const double w = 1.0 - s * s;
    return w <= 0.0 ? 0.0 : -6.0 * s * w * w;
  }
  static double d2k(double s) {
    const double w = 1.0 - s * s;
    return w <= 0.0 ? 0.0 : w * (30.0 * s * s - 6.0);
  }
  static double d3k(double s) {
    const double w = 1.0 - s * s;
    return w <= 0.0 ? 0.0 : s * (72.0 - 120.0 * s * s);
  }
  // nth derivative, n <= 3
  static double deriv(double s, int n) {
    switch (n) {
      case 0: return k(s);
      case 1: return dk(s);
      case 2: return d2k(s);
      case 3: return d3k(s);
      default: throw std::invalid_argument("BumpKernel::deriv: order > 3");
    }
  }
  static constexpr double sup_k = 1.0;
  static constexpr double sup_dk = 1.7172608078;   // 96/(25 sqrt 5)
  static constexpr double sup_d2k = 6.0;
};

// Product bump  amp * prod_i k((y_i - c_i)/r_i)  with analytic partials.
struct ProductBump {
  Vector center;
  Vector radius;
  double amplitude = 0.0;

  double value(const Vector& y) const {
    double v = amplitude;
    for (Eigen::Index i = 0; i < center.size(); ++i)
      v *= BumpKernel::k((y(i) - center(i)) / radius(i));
    return v;
  }
  Vector gradient(const Vector& y) const {
    const Eigen::Index n = center.size();
    std::vector<double> ks(n), ds(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double s = (y(i) - center(i)) / radius(i);
      ks[i] = BumpKernel::k(s);
      ds[i] = BumpKernel::dk(s) / radius(i);
    }
    Vector g(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      double v = amplitude;
      for (Eigen::Index j = 0; j < n; ++j) v *= (j == i) ? ds[j] : ks[j];
      g(i) = v;
    }
    return g;
  }
  Matrix hessian(const Vector& y) const {
    const Eigen::Index n = center.size();
    std::vector<double> ks(n), ds(n), d2s(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double s = (y(i) - center(i)) / radius(i);
      ks[i] = BumpKernel::k(s);
      ds[i] = BumpKernel::dk(s) / radius(i);
      d2s[i] = BumpKernel::d2k(s) / (radius(i) * radius(i));
    }
    Matrix h(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        double v = amplitude;
        for (Eigen::Index l = 0; l < n; ++l) {
          if (l == i && l == j) v *= d2s[l];
          else if (l == i || l == j) v *= ds[l];
          else v *= ks[l];
        }
        h(i, j) = v;
      }
    return h;
  }
  // Analytic bound on the C^2 size given amplitude and radii.
  double c2_bound() const {
    double rmin = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < radius.size(); ++i) rmin = std::min(rmin, radius(i));
    const double d1 = BumpKernel::sup_dk / rmin;
    const double d2 = BumpKernel::sup_d2k / (rmin * rmin);
    return std::abs(amplitude) * std::max({1.0, d1, std::max(d2, d1 * d1)});
  }
};

// ---------------------------------------------------------------------------
// Misc small helpers.

inline long long binom(int n, int r) {
  if (r < 0 || r > n) return 0;
  r = std::min(r, n - r);
  long long acc = 1;
  for (int i = 1; i <= r; ++i) acc = acc * (n - r + i) / i;
  return acc;
}

inline std::string format_double(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

}  // namespace blendlab
