#pragma once

// Truncated jet algebra at a parameter value, the induced dynamics on jet
// space, jet fiber IFS, jet-space skew models, constant-family disc lifts,
// parablender witnesses, unfolding-order checks and the jet-Grassmannian
// model.
//
// Convention: jets store Taylor coefficients d^i z / i! per multi-index, so a
// jet doubles as the degree-d polynomial representative and the translation
// jet of a polynomial is its coefficient table.

#include "blendlab/folding.hpp"

#include <map>
#include <memory>

namespace blendlab {

// ---------------------------------------------------------------------------

struct MultiIndexSet {
  int k = 0, d = 0;
  std::vector<std::vector<int>> idx;    // graded lexicographic, idx[0] = 0
  std::vector<std::vector<int>> add_table;  // position of idx[p]+idx[q], -1 if out

  int size() const { return static_cast<int>(idx.size()); }
  int degree(int p) const {
    int s = 0;
    for (int v : idx[p]) s += v;
    return s;
  }
  int position(const std::vector<int>& mi) const {
    for (int p = 0; p < size(); ++p)
      if (idx[p] == mi) return p;
    return -1;
  }

  static std::shared_ptr<const MultiIndexSet> make(int k, int d) {
    require(k >= 1 && d >= 0, "MultiIndexSet: need k >= 1, d >= 0");
    auto mis = std::make_shared<MultiIndexSet>();
    mis->k = k;
    mis->d = d;
    std::vector<int> cur(k, 0);
    for (int deg = 0; deg <= d; ++deg) {
      // enumerate |iota| = deg in lexicographic order
      std::function<void(int, int)> rec = [&](int pos, int rem) {
        if (pos == k - 1) {
          cur[pos] = rem;
          mis->idx.push_back(cur);
          return;
        }
        for (int v = rem; v >= 0; --v) {
          cur[pos] = v;
          rec(pos + 1, rem - v);
        }
      };
      rec(0, deg);
    }
    const int q = mis->size();
    mis->add_table.assign(q, std::vector<int>(q, -1));
    for (int p = 0; p < q; ++p)
      for (int r = 0; r < q; ++r) {
        std::vector<int> sum(k);
        int deg = 0;
        for (int i = 0; i < k; ++i) {
          sum[i] = mis->idx[p][i] + mis->idx[r][i];
          deg += sum[i];
        }
        if (deg <= d) mis->add_table[p][r] = mis->position(sum);
      }
    return mis;
  }
};

inline long long jet_dim(long long base_dim, int k, int d) {
  require(base_dim >= 1 && k >= 1 && d >= 0, "jet_dim: arguments must be positive");
  return base_dim * binom(d + k, d);
}

// ---------------------------------------------------------------------------
// Scalar jets: truncated multivariate polynomials over a shared index set.

struct JetScalar {
  std::shared_ptr<const MultiIndexSet> mis;
  Vector c;

  JetScalar() = default;
  explicit JetScalar(std::shared_ptr<const MultiIndexSet> m)
      : mis(std::move(m)), c(Vector::Zero(mis->size())) {}
  static JetScalar constant(std::shared_ptr<const MultiIndexSet> m, double v) {
    JetScalar j(std::move(m));
    j.c(0) = v;
    return j;
  }

  double value() const { return c(0); }

  JetScalar operator+(const JetScalar& o) const {
    JetScalar r = *this;
    r.c += o.c;
    return r;
  }
  JetScalar operator-(const JetScalar& o) const {
    JetScalar r = *this;
    r.c -= o.c;
    return r;
  }
  JetScalar operator*(double s) const {
    JetScalar r = *this;
    r.c *= s;
    return r;
  }
  JetScalar operator*(const JetScalar& o) const {
    JetScalar r(mis);
    const int q = mis->size();
    for (int p = 0; p < q; ++p) {
      if (c(p) == 0.0) continue;
      for (int s = 0; s < q; ++s) {
        const int t = mis->add_table[p][s];
        if (t >= 0) r.c(t) += c(p) * o.c(s);
      }
    }
    return r;
  }
  // multiplicative inverse (Neumann series), constant term must not vanish
  JetScalar inverse() const {
    const double c0 = c(0);
    if (std::abs(c0) < 1e-300)
      throw singular_matrix_error("JetScalar::inverse: zero constant term");
    JetScalar w = *this;
    w.c(0) = 0.0;
    w = w * (1.0 / c0);
    JetScalar acc = constant(mis, 1.0);
    JetScalar pw = constant(mis, 1.0);
    for (int n = 1; n <= mis->d; ++n) {
      pw = pw * w;
      acc = (n % 2 == 0) ? acc + pw : acc - pw;
    }
    return acc * (1.0 / c0);
  }
};

// f applied to a jet, given derivatives f, f', ..., f^{(d)} at the constant
// term: f(j) = sum_n f^{(n)}(j_0)/n! (j - j_0)^n truncated.
inline JetScalar jet_compose_univariate(const std::vector<double>& derivs,
                                        const JetScalar& j) {
  const int d = j.mis->d;
  require(static_cast<int>(derivs.size()) >= d + 1,
          "jet_compose_univariate: not enough derivatives");
  JetScalar w = j;
  w.c(0) = 0.0;
  JetScalar acc = JetScalar::constant(j.mis, derivs[0]);
  JetScalar pw = JetScalar::constant(j.mis, 1.0);
  double fact = 1.0;
  for (int n = 1; n <= d; ++n) {
    pw = pw * w;
    fact *= n;
    acc = acc + pw * (derivs[n] / fact);
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Vector-valued jets.  Flattened layout is index-major: coordinate of
// (multi-index position p, component i) is p * dim + i, so the jet lift of a
// linear map is block-diagonal.

struct Jet {
  std::shared_ptr<const MultiIndexSet> mis;
  Matrix coeffs;  // dim x q

  Jet() = default;
  Jet(std::shared_ptr<const MultiIndexSet> m, int dim)
      : mis(std::move(m)), coeffs(Matrix::Zero(dim, mis->size())) {}

  int dim() const { return static_cast<int>(coeffs.rows()); }
  int q() const { return static_cast<int>(coeffs.cols()); }

  Vector flatten() const {
    Vector v(dim() * q());
    for (int p = 0; p < q(); ++p)
      for (int i = 0; i < dim(); ++i) v(p * dim() + i) = coeffs(i, p);
    return v;
  }
  static Jet unflatten(std::shared_ptr<const MultiIndexSet> m, int dim,
                       const Vector& v) {
    Jet j(m, dim);
    require(v.size() == dim * j.q(), "Jet::unflatten: size mismatch");
    for (int p = 0; p < j.q(); ++p)
      for (int i = 0; i < dim; ++i) j.coeffs(i, p) = v(p * dim + i);
    return j;
  }

  JetScalar component(int i) const {
    JetScalar s(mis);
    s.c = coeffs.row(i).transpose();
    return s;
  }
  void set_component(int i, const JetScalar& s) { coeffs.row(i) = s.c.transpose(); }

  // evaluate the polynomial representative at parameter a
  Vector eval(const Vector& a) const {
    Vector out = Vector::Zero(dim());
    for (int p = 0; p < q(); ++p) {
      double mono = 1.0;
      for (int i = 0; i < mis->k; ++i)
        for (int e = 0; e < mis->idx[p][i]; ++e) mono *= a(i);
      out += coeffs.col(p) * mono;
    }
    return out;
  }

  // Taylor re-expansion at a0: coefficients of P(a0 + s) in s, truncated to
  // the target index set (defaults to the own one).
  Jet shift(const Vector& a0,
            std::shared_ptr<const MultiIndexSet> target = nullptr) const {
    auto tgt = target ? target : mis;
    Jet out(tgt, dim());
    const int k = mis->k;
    for (int p = 0; p < q(); ++p) {
      // expand prod_j (a0_j + s_j)^{m_j}
      std::vector<int> r(k, 0);
      std::function<void(int, double)> rec = [&](int pos, double factor) {
        if (pos == k) {
          const int t = tgt->position(r);
          if (t >= 0) out.coeffs.col(t) += coeffs.col(p) * factor;
          return;
        }
        const int mj = mis->idx[p][pos];
        double pw = 1.0;  // a0^{m_j - r_j} built downward
        for (int rj = mj; rj >= 0; --rj) {
          r[pos] = rj;
          double a0pw = 1.0;
          for (int e = 0; e < mj - rj; ++e) a0pw *= a0(pos);
          rec(pos + 1, factor * binom(mj, rj) * a0pw);
        }
        r[pos] = 0;
        (void)pw;
      };
      rec(0, 1.0);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Small dense linear solves over the jet ring (Gaussian elimination with
// pivoting on constant terms).

inline std::vector<JetScalar> jet_solve(std::vector<std::vector<JetScalar>> A,
                                        std::vector<JetScalar> b) {
  const int n = static_cast<int>(A.size());
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(A[r][col].value()) > std::abs(A[piv][col].value())) piv = r;
    std::swap(A[col], A[piv]);
    std::swap(b[col], b[piv]);
    const JetScalar inv = A[col][col].inverse();
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      const JetScalar f = A[r][col] * inv;
      for (int cc = col; cc < n; ++cc) A[r][cc] = A[r][cc] - f * A[col][cc];
      b[r] = b[r] - f * b[col];
    }
  }
  std::vector<JetScalar> x;
  x.reserve(n);
  for (int i = 0; i < n; ++i) x.push_back(A[i][i].inverse() * b[i]);
  return x;
}

// ---------------------------------------------------------------------------
// Parametric families of affine fiber maps: y -> T y + offset(a) with a
// polynomial offset of degree <= d_rep (> d only for perturbations above the
// jet order).

struct FiberFamilyMap {
  Matrix T;
  Jet offset;  // over the representation index set, values in R^c
};

struct ParamFamily {
  Dimensions dims;  // ss, u, c, k, d
  int d_rep = 1;
  std::shared_ptr<const MultiIndexSet> mis;      // (k, d)
  std::shared_ptr<const MultiIndexSet> mis_rep;  // (k, d_rep)
  HorseshoeBase base;                            // parameter-independent
  std::vector<FiberFamilyMap> fiber;
  double lambda = 0.75, beta = 0.875, b = 0.9;

  int kappa() const { return static_cast<int>(fiber.size()); }
  int q() const { return mis->size(); }

  AffineMap fiber_map_at(int l, const Vector& a) const {
    return AffineMap(fiber[l].T, fiber[l].offset.eval(a));
  }
  SkewProductSystem slice_at(const Vector& a) const {
    SkewProductSystem sys;
    sys.base = base;
    sys.fiber.lambda = lambda;
    sys.fiber.beta = beta;
    sys.fiber.domain_D = IntervalBox::cube(dims.c, 2.0);
    sys.fiber.candidate_B = IntervalBox::cube(dims.c, b, true);
    for (int l = 0; l < kappa(); ++l) sys.fiber.maps.push_back(fiber_map_at(l, a));
    sys.validate();
    return sys;
  }
};

// The parametric analogue of the affine model: kappa = (2^{|Y|})^c branches,
// fiber maps lambda y + P_l(a) with P_l running over all sign patterns
// (1-lambda) {-1,+1}^Y per component.
inline ParamFamily family_affine_model(const Dimensions& dims, double lambda, double nu,
                                       double b, double beta = 0.0) {
  dims.validate();
  require(dims.k >= 1 && dims.d >= 1, "family_affine_model: need k, d >= 1");
  require(0.5 < lambda && lambda < 1.0, "family_affine_model: need 1/2 < lambda < 1");
  if (!(nu < lambda))
    throw std::invalid_argument("family_affine_model: domination nu < lambda violated");

  ParamFamily fam;
  fam.dims = dims;
  fam.d_rep = dims.d;
  fam.mis = MultiIndexSet::make(dims.k, dims.d);
  fam.mis_rep = fam.mis;
  fam.lambda = lambda;
  fam.beta = beta > 0.0 ? beta : 0.5 * (1.0 + lambda);
  fam.b = b;
  const int q = fam.q();
  if (q * dims.c > 12)
    throw construction_error("family_affine_model: |Y|*c = " +
                             std::to_string(q * dims.c) +
                             " exceeds the branch budget (max 12)");
  const long kappa = 1L << (q * dims.c);
  fam.base = make_horseshoe(dims.ss, dims.u, nu, static_cast<int>(kappa));
  for (long l = 0; l < kappa; ++l) {
    FiberFamilyMap fm;
    fm.T = lambda * Matrix::Identity(dims.c, dims.c);
    fm.offset = Jet(fam.mis_rep, dims.c);
    for (int i = 0; i < dims.c; ++i)
      for (int p = 0; p < q; ++p) {
        const bool plus = (l >> (i * q + p)) & 1;
        fm.offset.coeffs(i, p) = (plus ? 1.0 : -1.0) * (1.0 - lambda);
      }
    fam.fiber.push_back(std::move(fm));
  }
  return fam;
}

// Seeded perturbation of the family: coefficient noise at all represented
// orders, or only above order d when `above_order_only` is set (those terms
// drive the unfolding slope).  Above-order is relative to the anchor: noise
// enters in powers of (a - anchor), since a plain degree-(d+1) monomial in a
// re-expands into low orders at a shifted anchor.
inline ParamFamily perturb_family(const ParamFamily& fam, double eta,
                                  std::uint64_t seed, bool above_order_only = false,
                                  const Vector& anchor = Vector()) {
  require(eta >= 0.0, "perturb_family: eta >= 0");
  if (eta == 0.0) return fam;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  const Vector a0 = anchor.size() ? anchor : Vector::Zero(fam.dims.k);
  ParamFamily out = fam;
  out.d_rep = fam.dims.d + 1;
  out.mis_rep = MultiIndexSet::make(fam.dims.k, out.d_rep);
  for (auto& fm : out.fiber) {
    Jet wide(out.mis_rep, fam.dims.c);
    for (int p = 0; p < fm.offset.q(); ++p) {
      const int tgt = out.mis_rep->position(fam.mis_rep->idx[p]);
      wide.coeffs.col(tgt) = fm.offset.coeffs.col(p);
    }
    Jet noise(out.mis_rep, fam.dims.c);  // centered at the anchor
    for (int p = 0; p < out.mis_rep->size(); ++p) {
      if (above_order_only && out.mis_rep->degree(p) <= fam.dims.d) continue;
      for (int i = 0; i < fam.dims.c; ++i) noise.coeffs(i, p) = eta * uni(rng);
    }
    wide.coeffs += noise.shift(-a0).coeffs;
    fm.offset = wide;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Jet fiber IFS on J(R^c): each family branch induces lambda * id plus a
// translation by the branch's coefficient table re-expanded at the anchor.

inline FiberIFS jet_fiber_ifs_at(const ParamFamily& fam, const Vector& a0,
                                 double b_hat) {
  const int c = fam.dims.c, q = fam.q();
  FiberIFS ifs;
  ifs.lambda = fam.lambda;
  ifs.beta = fam.beta;
  ifs.domain_D = IntervalBox::cube(c * q, 2.0);
  ifs.candidate_B = IntervalBox::cube(c * q, b_hat, true);
  const bool at_zero = sup_norm(a0) == 0.0;
  for (int l = 0; l < fam.kappa(); ++l) {
    const Jet trans = fam.fiber[l].offset.shift(a0, fam.mis);
    require(op_norm2(fam.fiber[l].T - fam.lambda * Matrix::Identity(c, c)) < 1e-12,
            "jet_fiber_ifs_at: fiber linear parts must equal lambda*id");
    ifs.maps.emplace_back(fam.lambda * Matrix::Identity(c * q, c * q),
                          trans.flatten());
  }
  if (at_zero && fam.d_rep == fam.dims.d) {
    // all sign combinations appear independently per jet coordinate
    ifs.product_structure = true;
    ifs.axis_images.assign(c * q, {});
    const Interval bi(-b_hat, b_hat);
    for (int axis = 0; axis < c * q; ++axis) {
      ifs.axis_images[axis].push_back(out_add(out_scale(fam.lambda, bi),
                                              Interval::point(-(1.0 - fam.lambda))));
      ifs.axis_images[axis].push_back(out_add(out_scale(fam.lambda, bi),
                                              Interval::point(1.0 - fam.lambda)));
    }
  }
  return ifs;
}

// Standalone constructor matching the worked example: k, d, c given directly.
inline FiberIFS jet_fiber_ifs(double lambda, int k, int d, int c, double b_hat = 0.9) {
  Dimensions dims{1, 1, c, k, d};
  ParamFamily fam = family_affine_model(dims, lambda, lambda / 7.0, 0.9);
  return jet_fiber_ifs_at(fam, Vector::Zero(k), b_hat);
}

// ---------------------------------------------------------------------------
// Jet lift of the base horseshoe and assembled jet skew model.

struct JetModel {
  SkewProductSystem system;
  std::shared_ptr<const MultiIndexSet> mis;
  Dimensions dims;
  Vector anchor_a;  // parameter the jets are based at
  double rho = 0.05;
  int d_hat_ss = 0, d_hat_c = 0;
};

inline JetModel jet_skew_model(const ParamFamily& fam, const Vector& a0,
                               double b_hat, double rho = 0.05) {
  const int ss = fam.dims.ss, u = fam.dims.u, q = fam.q();
  JetModel jm;
  jm.mis = fam.mis;
  jm.dims = fam.dims;
  jm.anchor_a = a0;
  jm.rho = rho;
  jm.d_hat_ss = ss * q;
  jm.d_hat_c = fam.dims.c * q;

  HorseshoeBase base;
  base.nu = fam.base.nu;
  base.alpha = fam.base.alpha;
  std::vector<Interval> sbox;
  for (int p = 0; p < q; ++p)
    for (int i = 0; i < ss; ++i)
      sbox.push_back(p == 0 ? fam.base.stable_box.iv[i] : Interval(-rho, rho));
  base.stable_box = IntervalBox(sbox);
  std::vector<Interval> ubox;
  for (int p = 0; p < q; ++p)
    for (int i = 0; i < u; ++i)
      ubox.push_back(fam.base.unstable_box.iv[i]);
  base.unstable_box = IntervalBox(ubox);

  for (int l = 0; l < fam.kappa(); ++l) {
    const Matrix S = fam.base.S(l), U = fam.base.U(l);
    Matrix lin = Matrix::Zero((ss + u) * q, (ss + u) * q);
    for (int p = 0; p < q; ++p) {
      lin.block(p * ss, p * ss, ss, ss) = S;
      lin.block(ss * q + p * u, ss * q + p * u, u, u) = U;
    }
    Vector off = Vector::Zero((ss + u) * q);
    off.head(ss) = fam.base.w_s(l);
    off.segment(ss * q, u) = fam.base.w_u(l);
    base.branches.emplace_back(lin, off);

    // Markov cell: level 0 is the original cell, higher levels are the
    // preimages of the unstable box under the linear part (no offset above
    // level 0), so the branch image covers it.
    std::vector<Interval> cell;
    const IntervalBox pre = affine_image_box(
        AffineMap(fam.base.U(l).inverse(), Vector::Zero(u)),
        fam.base.unstable_box);
    for (int p = 0; p < q; ++p)
      for (int i = 0; i < u; ++i)
        cell.push_back(p == 0 ? fam.base.cells[l].iv[i] : pre.iv[i]);
    base.cells.emplace_back(cell);
  }
  base.validate();

  jm.system.base = base;
  jm.system.fiber = jet_fiber_ifs_at(fam, a0, b_hat);
  jm.system.validate();
  require(jm.system.d_ss() == jm.d_hat_ss && jm.system.c() == jm.d_hat_c,
          "jet_skew_model: dimension bookkeeping mismatch");
  return jm;
}

// Branch map induced on jets by a fiber family: j -> T j + jet(P_l at a0).
inline Jet induced_fiber_jet_map(const ParamFamily& fam, int l, const Jet& j,
                                 const Vector& a0) {
  Jet out(j.mis, j.dim());
  out.coeffs = fam.fiber[l].T * j.coeffs;
  out.coeffs += fam.fiber[l].offset.shift(a0, j.mis).coeffs;
  return out;
}

// Base map induced on jets (parameter-independent affine branch): derivative
// coefficients transform linearly by the branch linear part.
inline Jet induced_base_jet_map(const ParamFamily& fam, int l, const Jet& j) {
  Jet out(j.mis, j.dim());
  out.coeffs = fam.base.branches[l].linear * j.coeffs;
  out.coeffs.col(0) += fam.base.branches[l].offset;
  return out;
}

// ---------------------------------------------------------------------------
// Constant (and almost-constant) families of affine discs and their lifts.

struct DiscFamily {
  IntervalBox domain;
  HorizontalDisc::AffineData data;  // the a = 0 member
  double alpha = 2.0, delta = 0.3;
  Vector anchor;
  Jet translation;  // R^c-valued polynomial added to h; zero for constant families

  HorizontalDisc disc_at(const Vector& a) const {
    Vector h0 = data.h0;
    if (translation.dim() > 0) h0 += translation.eval(a);
    return HorizontalDisc::make_affine(domain, data.G, data.g0, data.H, h0, alpha,
                                       delta, anchor + (h0 - data.h0));
  }

  static DiscFamily constant(const HorizontalDisc& disc) {
    require(disc.affine.has_value(), "DiscFamily: affine disc required");
    DiscFamily f;
    f.domain = disc.domain;
    f.data = *disc.affine;
    f.alpha = disc.alpha;
    f.delta = disc.delta;
    f.anchor = disc.anchor;
    return f;
  }
};

// Lift of an almost-constant family of affine discs to the jet model:
// exact affine disc over the jet stable box, central level-0 map h_0 with
// zero higher levels plus the family's own parameter derivatives.
inline HorizontalDisc lift_disc_family(const DiscFamily& fam_disc, const JetModel& jm) {
  const int ss = jm.dims.ss, u = jm.dims.u, c = jm.dims.c, q = jm.mis->size();
  const Matrix& G = fam_disc.data.G;
  const Matrix& H = fam_disc.data.H;

  Matrix Gh = Matrix::Zero(u * q, ss * q);
  Matrix Hh = Matrix::Zero(c * q, ss * q);
  for (int p = 0; p < q; ++p) {
    Gh.block(p * u, p * ss, u, ss) = G;
    Hh.block(p * c, p * ss, c, ss) = H;
  }
  Vector g0 = Vector::Zero(u * q);
  g0.head(u) = fam_disc.data.g0;
  Vector h0 = Vector::Zero(c * q);
  h0.head(c) = fam_disc.data.h0;
  if (fam_disc.translation.dim() > 0) {
    const Jet tr = fam_disc.translation.shift(jm.anchor_a, jm.mis);
    h0 += tr.flatten();
  }
  Vector anchor = Vector::Zero(c * q);
  anchor.head(c) = fam_disc.anchor;

  return HorizontalDisc::make_affine(jm.system.base.stable_box, Gh, g0, Hh, h0,
                                     fam_disc.alpha, fam_disc.delta, anchor);
}

// ---------------------------------------------------------------------------

struct UnfoldingWitness {
  Jet jet_x;  // on the lifted local unstable manifold
  Jet jet_y;  // on the lifted disc
  int order = 1;
  double jet_residual = 0.0;
  std::vector<int> itinerary;
  Vector anchor_parameter;
  Vector pulled_anchor;  // fiber-jet anchor after N pullbacks (flattened)
  IntersectionWitness raw;

  std::string to_text() const {
    std::ostringstream os;
    os << "unfolding_witness:\n  order: " << order
       << "\n  jet_residual: " << format_double(jet_residual) << "\n  anchor_a:";
    for (Eigen::Index i = 0; i < anchor_parameter.size(); ++i)
      os << " " << format_double(anchor_parameter(i));
    os << "\n  itinerary:";
    for (int l : itinerary) os << " " << l;
    os << "\n";
    return os.str();
  }
};

// Runs the intersection oracle on the jet model and splits the witness into
// the unstable-manifold jet (rebuilt independently from the itinerary) and
// the disc jet.
inline UnfoldingWitness parablender_witness(const JetModel& jm,
                                            const HorizontalDisc& jet_disc, int N,
                                            double tol) {
  BlenderOracleResult res = blender_intersection(jm.system, jet_disc, N, tol);
  if (!res.success)
    throw construction_error("parablender_witness: oracle failed: " + res.message);

  const int ss = jm.dims.ss, u = jm.dims.u, c = jm.dims.c, q = jm.mis->size();
  const UnstablePlane plane = local_unstable_plane(jm.system, res.witness.itinerary);

  UnfoldingWitness w;
  w.order = jm.dims.d;
  w.itinerary = res.witness.itinerary;
  w.anchor_parameter = jm.anchor_a;
  w.pulled_anchor = res.final_anchor;
  w.raw = res.witness;

  const Vector q_state = res.witness.point_q;
  const Vector s_disc = jm.system.stable_part(q_state);
  const Vector u_disc = jm.system.unstable_part(q_state);
  const Vector y_disc = jm.system.fiber_part(q_state);

  auto assemble_jet = [&](const Vector& s, const Vector& uu, const Vector& y) {
    Jet j(jm.mis, ss + u + c);
    for (int p = 0; p < q; ++p) {
      for (int i = 0; i < ss; ++i) j.coeffs(i, p) = s(p * ss + i);
      for (int i = 0; i < u; ++i) j.coeffs(ss + i, p) = uu(p * u + i);
      for (int i = 0; i < c; ++i) j.coeffs(ss + u + i, p) = y(p * c + i);
    }
    return j;
  };
  w.jet_y = assemble_jet(s_disc, u_disc, y_disc);
  w.jet_x = assemble_jet(plane.stable_pt, u_disc, plane.fiber_pt);
  w.jet_residual = std::max(sup_dist(plane.stable_pt, s_disc),
                            sup_dist(plane.fiber_pt, y_disc));
  return w;
}

// ---------------------------------------------------------------------------
// Empirical unfolding order: realize x_a on W^u_loc(z_a) and y_a on D_a near
// the polynomial representatives and fit log d(x_a, y_a) against log ||a||.

struct SlopeReport {
  double slope = 0.0;
  bool at_floor = false;  // distances at machine precision; counts as a pass
  bool passed = false;
  std::vector<double> radii;
  std::vector<double> distances;
};

inline SlopeReport unfolding_order_check(const UnfoldingWitness& w,
                                         const ParamFamily& fam,
                                         const DiscFamily& disc_family,
                                         int samples = 12) {
  const int k = fam.dims.k, ss = fam.dims.ss, u = fam.dims.u, c = fam.dims.c;
  const int q = fam.q();
  SlopeReport rep;

  std::vector<Vector> dirs;
  for (int i = 0; i < k; ++i) {
    Vector e = Vector::Zero(k);
    e(i) = 1.0;
    dirs.push_back(e);
    dirs.push_back(-e);
  }
  const Jet pulled = Jet::unflatten(fam.mis, c, w.pulled_anchor);
  const Jet jet_x_u = [&] {
    Jet j(fam.mis, u);
    for (int p = 0; p < q; ++p)
      for (int i = 0; i < u; ++i) j.coeffs(i, p) = w.jet_x.coeffs(ss + i, p);
    return j;
  }();
  const Jet jet_x_s = [&] {
    Jet j(fam.mis, ss);
    for (int p = 0; p < q; ++p)
      for (int i = 0; i < ss; ++i) j.coeffs(i, p) = w.jet_x.coeffs(i, p);
    return j;
  }();

  for (int si = 0; si < samples; ++si) {
    const double r = std::pow(10.0, -4.0 + 3.0 * si / (samples - 1));
    double worst = 0.0;
    for (const auto& dir : dirs) {
      const Vector a = w.anchor_parameter + r * dir;
      const Vector s_arg = r * dir;  // representative argument relative to anchor

      // x_a: strong-stable from the itinerary limit, unstable from the jet
      // representative, fiber from the exact composition of the true family
      // maps along the itinerary applied to the pulled anchor representative.
      Vector y = pulled.eval(s_arg);
      for (auto it = w.itinerary.rbegin(); it != w.itinerary.rend(); ++it)
        y = fam.fiber_map_at(*it, a)(y);
      Vector x_a(ss + u + c);
      x_a << jet_x_s.coeffs.col(0), jet_x_u.eval(s_arg), y;

      // y_a: the disc-family point over the representative's base parameter
      const HorizontalDisc da = disc_family.disc_at(a);
      const Vector xi = jet_x_s.eval(s_arg);
      Vector y_a(ss + u + c);
      y_a << xi, da.g(xi), da.h(xi);

      worst = std::max(worst, sup_dist(x_a, y_a));
    }
    rep.radii.push_back(r);
    rep.distances.push_back(worst);
  }

  double floor_level = 1e-12;
  bool all_floor = true;
  for (double dd : rep.distances) all_floor = all_floor && dd < floor_level;
  if (all_floor) {
    rep.at_floor = true;
    rep.passed = true;
    rep.slope = std::numeric_limits<double>::infinity();
    return rep;
  }
  // least-squares slope of log d vs log r
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = 0; i < rep.radii.size(); ++i) {
    if (rep.distances[i] < 1e-15) continue;
    const double lx = std::log(rep.radii[i]), ly = std::log(rep.distances[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++n;
  }
  rep.slope = n >= 2 ? (n * sxy - sx * sy) / (n * sxx - sx * sx) : 0.0;
  rep.passed = rep.slope > fam.dims.d + 0.3;
  return rep;
}

// ---------------------------------------------------------------------------
// Jet lift of the Grassmannian model: base state J(x_ss, e, x_u), chart maps
// lifted blockwise (the chart action of the affine model is exactly linear).

struct JetGrassmannModel {
  SkewProductSystem system;
  std::shared_ptr<const MultiIndexSet> mis;
  Dimensions dims;
  Vector anchor_a;
  double theta = 0.0, rho = 0.05;
  int d_hat_G_ss = 0;
  std::vector<Matrix> chart_ops;  // per-branch chart operators of the slice

  int chart_dim() const { return (dims.ss + dims.c) * dims.u; }
};

inline JetGrassmannModel jet_grassmann_model(const ParamFamily& fam, const Vector& a0,
                                             double theta, double b_hat,
                                             double rho = 0.05) {
  const SkewProductSystem slice = fam.slice_at(a0);
  ConeInvarianceReport cone = verify_cone_invariance(slice, theta);
  if (!cone.ok)
    throw construction_error("jet_grassmann_model: cone invariance failed: " +
                             cone.message);
  const int ss = fam.dims.ss, u = fam.dims.u, q = fam.q();
  const int du = (ss + fam.dims.c) * u;

  JetGrassmannModel jg;
  jg.mis = fam.mis;
  jg.dims = fam.dims;
  jg.anchor_a = a0;
  jg.theta = theta;
  jg.rho = rho;
  jg.chart_ops = cone.chart_operators;
  jg.d_hat_G_ss = (ss + du) * q;

  HorseshoeBase base;
  base.nu = fam.base.nu;
  base.alpha = fam.base.alpha;
  std::vector<Interval> sbox;
  for (int p = 0; p < q; ++p) {
    for (int i = 0; i < ss; ++i)
      sbox.push_back(p == 0 ? fam.base.stable_box.iv[i] : Interval(-rho, rho));
    for (int i = 0; i < du; ++i)
      sbox.push_back(p == 0 ? Interval(-theta, theta) : Interval(-rho, rho));
  }
  base.stable_box = IntervalBox(sbox);
  std::vector<Interval> ubox;
  for (int p = 0; p < q; ++p)
    for (int i = 0; i < u; ++i) ubox.push_back(fam.base.unstable_box.iv[i]);
  base.unstable_box = IntervalBox(ubox);

  const int dss_blk = ss + du;
  for (int l = 0; l < fam.kappa(); ++l) {
    Matrix blk = Matrix::Zero(dss_blk, dss_blk);
    blk.topLeftCorner(ss, ss) = fam.base.S(l);
    blk.bottomRightCorner(du, du) = cone.chart_operators[l];
    Matrix lin = Matrix::Zero(dss_blk * q + u * q, dss_blk * q + u * q);
    for (int p = 0; p < q; ++p) {
      lin.block(p * dss_blk, p * dss_blk, dss_blk, dss_blk) = blk;
      lin.block(dss_blk * q + p * u, dss_blk * q + p * u, u, u) = fam.base.U(l);
    }
    Vector off = Vector::Zero(dss_blk * q + u * q);
    off.head(ss) = fam.base.w_s(l);
    off.segment(dss_blk * q, u) = fam.base.w_u(l);
    base.branches.emplace_back(lin, off);

    std::vector<Interval> cell;
    const IntervalBox pre = affine_image_box(
        AffineMap(fam.base.U(l).inverse(), Vector::Zero(u)),
        fam.base.unstable_box);
    for (int p = 0; p < q; ++p)
      for (int i = 0; i < u; ++i)
        cell.push_back(p == 0 ? fam.base.cells[l].iv[i] : pre.iv[i]);
    base.cells.emplace_back(cell);
  }
  base.validate();

  jg.system.base = base;
  jg.system.fiber = jet_fiber_ifs_at(fam, a0, b_hat);
  jg.system.validate();
  require(jg.system.d_ss() == jg.d_hat_G_ss,
          "jet_grassmann_model: stable index bookkeeping mismatch");
  return jg;
}

// Jet-arithmetic plane action: the chart map evaluated on jet-valued chart
// coordinates through the graph re-solve, used to verify the block-triangular
// linearization of the lifted chart dynamics.
inline Jet jet_plane_action(const Matrix& M, const Jet& chart_jet, int ss, int u,
                            int c) {
  const int m = ss + u + c;
  auto mis = chart_jet.mis;
  // frame columns as jet scalars
  std::vector<std::vector<JetScalar>> frame(m, std::vector<JetScalar>(u));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < u; ++j) frame[i][j] = JetScalar::constant(mis, 0.0);
  for (int j = 0; j < u; ++j) {
    for (int i = 0; i < ss; ++i)
      frame[i][j] = chart_jet.component(j * (ss + c) + i);
    frame[ss + j][j] = JetScalar::constant(mis, 1.0);
    for (int i = 0; i < c; ++i)
      frame[ss + u + i][j] = chart_jet.component(j * (ss + c) + ss + i);
  }
  // A = M * frame
  std::vector<std::vector<JetScalar>> A(m, std::vector<JetScalar>(u));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < u; ++j) {
      JetScalar acc = JetScalar::constant(mis, 0.0);
      for (int r = 0; r < m; ++r)
        if (M(i, r) != 0.0) acc = acc + frame[r][j] * M(i, r);
      A[i][j] = acc;
    }
  // solve the middle block column by column: e' = [A_ss; A_c] A_u^{-1}
  Jet out(mis, (ss + c) * u);
  for (int j = 0; j < u; ++j) {
    std::vector<std::vector<JetScalar>> Au(u, std::vector<JetScalar>(u));
    for (int r = 0; r < u; ++r)
      for (int s2 = 0; s2 < u; ++s2) Au[r][s2] = A[ss + r][s2];
    std::vector<JetScalar> rhs(u);
    for (int r = 0; r < u; ++r) rhs[r] = JetScalar::constant(mis, r == j ? 1.0 : 0.0);
    const std::vector<JetScalar> col = jet_solve(Au, rhs);  // A_u^{-1} e_j
    for (int i = 0; i < ss; ++i) {
      JetScalar acc = JetScalar::constant(mis, 0.0);
      for (int s2 = 0; s2 < u; ++s2) acc = acc + A[i][s2] * col[s2];
      out.set_component(j * (ss + c) + i, acc);
    }
    for (int i = 0; i < c; ++i) {
      JetScalar acc = JetScalar::constant(mis, 0.0);
      for (int s2 = 0; s2 < u; ++s2) acc = acc + A[ss + u + i][s2] * col[s2];
      out.set_component(j * (ss + c) + ss + i, acc);
    }
  }
  return out;
}

struct JetChartReport {
  bool ok = false;
  double max_offdiag = 0.0;   // lower-triangular coupling allowed; upper must vanish
  double max_diag = 0.0;      // largest |diagonal| entry
  double bound = 0.0;         // beta * nu
  Matrix jacobian;
  std::string message;
};

// Finite-difference Jacobian of the lifted chart map at J(E^u) = 0; verifies
// block-triangularity with diagonal blocks dominated by beta*nu.
inline JetChartReport verify_jet_chart_linearization(const JetGrassmannModel& jg,
                                                     const ParamFamily& fam,
                                                     const Vector& a0,
                                                     double tol = 1e-6) {
  const int ss = jg.dims.ss, u = jg.dims.u, c = jg.dims.c;
  const int du = (ss + c) * u;
  const int q = jg.mis->size();
  JetChartReport rep;
  rep.bound = fam.beta * fam.base.nu;

  const SkewProductSystem slice = fam.slice_at(a0);
  for (int l = 0; l < fam.kappa(); ++l) {
    const Matrix M = branch_differential(slice, l);
    auto lifted = [&](const Vector& v) -> Vector {
      return jet_plane_action(M, Jet::unflatten(jg.mis, du, v), ss, u, c).flatten();
    };
    const Matrix jac =
        finite_diff_jacobian(lifted, Vector::Zero(du * q), 1e-6);
    if (l == 0) rep.jacobian = jac;
    for (int i = 0; i < du * q; ++i)
      for (int j = 0; j < du * q; ++j) {
        const int pi = i / du, pj = j / du;
        if (i == j) rep.max_diag = std::max(rep.max_diag, std::abs(jac(i, j)));
        else if (jg.mis->degree(pj) > jg.mis->degree(pi) ||
                 (pi != pj && jg.mis->degree(pj) == jg.mis->degree(pi)))
          // coupling from strictly higher (or parallel) jet levels must vanish
          rep.max_offdiag = std::max(rep.max_offdiag, std::abs(jac(i, j)));
        else if (pi == pj && i != j)
          rep.max_offdiag = std::max(rep.max_offdiag, std::abs(jac(i, j)));
      }
  }
  rep.ok = rep.max_offdiag <= tol && rep.max_diag <= rep.bound + tol;
  if (!rep.ok)
    rep.message = "triangularity violated (offdiag " + format_double(rep.max_offdiag) +
                  ") or diagonal " + format_double(rep.max_diag) + " above " +
                  format_double(rep.bound);
  return rep;
}

// ---------------------------------------------------------------------------
// Jet evaluation of the folding tangency solve and the lifted folding disc.

inline Jet jet_tangency_solve(const FoldingManifold& s, const Jet& x_jet,
                              const Jet& chart_jet) {
  const int ss = s.ss(), u = s.u(), c = s.c();
  auto mis = chart_jet.mis;
  // A(E) entries are affine in the chart entries; c(E) entries are chart
  // entries.  Assemble over the jet ring and solve.
  std::vector<std::vector<JetScalar>> A(c, std::vector<JetScalar>(c));
  std::vector<JetScalar> cvec(c);
  for (int r = 0; r < c; ++r)
    for (int s2 = 0; s2 < c; ++s2) A[r][s2] = JetScalar::constant(mis, 0.0);
  for (int k = 0; k < u; ++k) {
    // t'_k = (e_k, c_k[u..c-1])
    std::vector<JetScalar> tp(c);
    for (int i = 0; i < u; ++i) tp[i] = JetScalar::constant(mis, i == k ? 1.0 : 0.0);
    for (int i = u; i < c; ++i)
      tp[i] = chart_jet.component(k * (ss + c) + ss + i);
    for (int i = 0; i < u; ++i) {
      const int row = k * u + i;
      for (int j = 0; j < u; ++j) {
        A[row][j * u + i] = A[row][j * u + i] + tp[j];
        A[row][j] = A[row][j] + tp[j * u + i];
      }
      cvec[row] = chart_jet.component(k * (ss + c) + ss + i);
    }
  }
  if (s.perturbation) {
    // Newton over the jet ring: full steps with the constant-term Jacobian
    // converge after d+1 sweeps for polynomial data.
    Jet t(mis, c);
    // order-0 solve by the scalar path
    GrassmannPoint E0(ss, u, c);
    Vector ccoords(chart_jet.dim());
    for (int i = 0; i < chart_jet.dim(); ++i) ccoords(i) = chart_jet.coeffs(i, 0);
    E0 = GrassmannPoint::from_chart(ss, u, c, ccoords);
    Vector x0(ss);
    for (int i = 0; i < ss; ++i) x0(i) = x_jet.coeffs(i, 0);
    t.coeffs.col(0) = solve_tangency_params(s, x0, E0).t;

    auto residual_jet = [&](const Jet& tj) -> std::vector<JetScalar> {
      // residual rows (k,i): dcentral_i(t') + dcentral_x * a_k - c_{k,i}
      // for the quadratic model: g_i(t'_k, t) + bump terms
      std::vector<JetScalar> r(c);
      // bump contribution needs the smooth kernel on jets
      for (int k2 = 0; k2 < u; ++k2) {
        std::vector<JetScalar> tp(c);
        for (int i = 0; i < u; ++i)
          tp[i] = JetScalar::constant(mis, i == k2 ? 1.0 : 0.0);
        for (int i = u; i < c; ++i)
          tp[i] = chart_jet.component(k2 * (ss + c) + ss + i);
        for (int i = 0; i < u; ++i) {
          JetScalar acc = JetScalar::constant(mis, 0.0);
          for (int j = 0; j < u; ++j) {
            acc = acc + tp[j] * tj.component(j * u + i);
            acc = acc + tj.component(j) * tp[j * u + i];
          }
          // bump: grad_t kappa . t'_k + grad_x kappa . a_k evaluated on jets
          if (s.perturbation) {
            const auto& P = *s.perturbation;
            // profile factors over (x, t)
            std::vector<JetScalar> kx(ss), kt(c), dkx(ss), dkt(c);
            for (int v = 0; v < ss; ++v) {
              const JetScalar sv =
                  (x_jet.component(v) - JetScalar::constant(mis, P.bump.center(v))) *
                  (1.0 / P.bump.radius(v));
              const double s0 = sv.value();
              kx[v] = jet_compose_univariate({BumpKernel::k(s0), BumpKernel::dk(s0),
                                              BumpKernel::d2k(s0), BumpKernel::d3k(s0)},
                                             sv);
              dkx[v] = jet_compose_univariate(
                           {BumpKernel::dk(s0), BumpKernel::d2k(s0),
                            BumpKernel::d3k(s0), 0.0},
                           sv) *
                       (1.0 / P.bump.radius(v));
            }
            for (int v = 0; v < c; ++v) {
              const JetScalar sv = (tj.component(v) -
                                    JetScalar::constant(mis, P.bump.center(ss + v))) *
                                   (1.0 / P.bump.radius(ss + v));
              const double s0 = sv.value();
              kt[v] = jet_compose_univariate({BumpKernel::k(s0), BumpKernel::dk(s0),
                                              BumpKernel::d2k(s0), BumpKernel::d3k(s0)},
                                             sv);
              dkt[v] = jet_compose_univariate(
                           {BumpKernel::dk(s0), BumpKernel::d2k(s0),
                            BumpKernel::d3k(s0), 0.0},
                           sv) *
                       (1.0 / P.bump.radius(ss + v));
            }
            // d kappa_i / d t_v * t'_k[v]  and  d kappa_i / d x_v * a_k[v]
            JetScalar bump_acc = JetScalar::constant(mis, 0.0);
            for (int v = 0; v < c; ++v) {
              JetScalar prod = dkt[v];
              for (int w2 = 0; w2 < c; ++w2)
                if (w2 != v) prod = prod * kt[w2];
              for (int w2 = 0; w2 < ss; ++w2) prod = prod * kx[w2];
              bump_acc = bump_acc + prod * tp[v];
            }
            for (int v = 0; v < ss; ++v) {
              JetScalar prod = dkx[v];
              for (int w2 = 0; w2 < ss; ++w2)
                if (w2 != v) prod = prod * kx[w2];
              for (int w2 = 0; w2 < c; ++w2) prod = prod * kt[w2];
              // a_k = chart rows 0..ss-1 of column k
              bump_acc = bump_acc + prod * chart_jet.component(k2 * (ss + c) + v);
            }
            acc = acc + bump_acc * P.amps(i);
          }
          r[k2 * u + i] = acc - chart_jet.component(k2 * (ss + c) + ss + i);
        }
      }
      return r;
    };

    const Matrix J0 = finite_diff_jacobian(
        [&](const Vector& tt) {
          GrassmannPoint E = E0;
          return tangency_residual(s, x0, E, tt);
        },
        t.coeffs.col(0), 1e-7);
    const Matrix J0inv = J0.lu().inverse();
    for (int sweep = 0; sweep <= mis->d + 1; ++sweep) {
      const std::vector<JetScalar> r = residual_jet(t);
      Matrix rc(c, mis->size());
      for (int i = 0; i < c; ++i) rc.row(i) = r[i].c.transpose();
      t.coeffs -= J0inv * rc;
    }
    return t;
  }
  return [&] {
    Jet t(mis, c);
    const std::vector<JetScalar> sol = jet_solve(A, cvec);
    for (int i = 0; i < c; ++i) t.set_component(i, sol[i]);
    return t;
  }();
}

// The lifted folding disc on the jet-Grassmannian model: over jets of
// (x_ss, e) the unstable coordinate is the jet of t_{1..u} and the central
// coordinate the jet of h(x, t(x,E)).
inline HorizontalDisc lifted_folding_disc(const FoldingManifold& s,
                                          const JetGrassmannModel& jg, double alpha,
                                          double delta) {
  const int ss = s.ss(), u = s.u(), c = s.c();
  const int du = (ss + c) * u;
  const int q = jg.mis->size();
  auto mis = jg.mis;
  FoldingManifold sm = s;

  HorizontalDisc disc;
  disc.domain = jg.system.base.stable_box;
  disc.alpha = alpha;
  disc.delta = delta;
  disc.anchor = Vector::Zero(c * q);

  auto split = [mis, ss, du, q](const Vector& xi) {
    Jet xj(mis, ss), ej(mis, du);
    for (int p = 0; p < q; ++p) {
      for (int i = 0; i < ss; ++i) xj.coeffs(i, p) = xi(p * (ss + du) + i);
      for (int i = 0; i < du; ++i) ej.coeffs(i, p) = xi(p * (ss + du) + ss + i);
    }
    return std::make_pair(xj, ej);
  };
  disc.g = [sm, split, u, q](const Vector& xi) -> Vector {
    const auto [xj, ej] = split(xi);
    const Jet t = jet_tangency_solve(sm, xj, ej);
    Jet gj(t.mis, u);
    gj.coeffs = t.coeffs.topRows(u);
    return gj.flatten();
  };
  disc.h = [sm, split, u, c, q](const Vector& xi) -> Vector {
    const auto [xj, ej] = split(xi);
    auto mis2 = xj.mis;
    const Jet t = jet_tangency_solve(sm, xj, ej);
    Jet hj(mis2, c);
    // quadratic part H_i = sum_j t_j t_{ju+i} over the jet ring
    for (int i = 0; i < u; ++i) {
      JetScalar acc = JetScalar::constant(mis2, 0.0);
      for (int j = 0; j < u; ++j)
        acc = acc + t.component(j) * t.component(j * u + i);
      hj.set_component(i, acc);
    }
    if (sm.perturbation) {
      const auto& P = *sm.perturbation;
      JetScalar prof = JetScalar::constant(mis2, 1.0);
      for (int v = 0; v < sm.ss(); ++v) {
        const JetScalar sv =
            (xj.component(v) - JetScalar::constant(mis2, P.bump.center(v))) *
            (1.0 / P.bump.radius(v));
        const double s0 = sv.value();
        prof = prof * jet_compose_univariate({BumpKernel::k(s0), BumpKernel::dk(s0),
                                              BumpKernel::d2k(s0), BumpKernel::d3k(s0)},
                                             sv);
      }
      for (int v = 0; v < c; ++v) {
        const JetScalar sv =
            (t.component(v) - JetScalar::constant(mis2, P.bump.center(sm.ss() + v))) *
            (1.0 / P.bump.radius(sm.ss() + v));
        const double s0 = sv.value();
        prof = prof * jet_compose_univariate({BumpKernel::k(s0), BumpKernel::dk(s0),
                                              BumpKernel::d2k(s0), BumpKernel::d3k(s0)},
                                             sv);
      }
      for (int i = 0; i < u; ++i)
        hj.set_component(i, hj.component(i) + prof * P.amps(i));
    }
    for (int i = u; i < c; ++i) hj.set_component(i, t.component(i));
    return hj.flatten();
  };
  return disc;
}

// Prop-A.2-style bound for the lifted central map: finite differences over
// the chart-jet coordinates, measured in the frame-diagonal convention per
// jet level.
inline double lifted_dh_norm(const FoldingManifold& s, const JetGrassmannModel& jg,
                             const HorizontalDisc& disc, int grid_samples = 24,
                             std::uint64_t seed = 17) {
  const int ss = s.ss(), u = s.u(), c = s.c();
  const int du = (ss + c) * u;
  const int q = jg.mis->size();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  double best = 0.0;
  for (int trial = 0; trial < grid_samples; ++trial) {
    Vector xi = Vector::Zero((ss + du) * q);
    for (int p = 0; p < q; ++p)
      for (int i = 0; i < ss + du; ++i) {
        const double hw = disc.domain.iv[p * (ss + du) + i].hi;
        xi(p * (ss + du) + i) = hw * uni(rng);
      }
    const Matrix jac = finite_diff_jacobian(disc.h, xi, 1e-6);
    // columns of the chart coordinates at each level p
    for (int row = 0; row < c * q; ++row)
      for (int p = 0; p < q; ++p)
        for (int k = 0; k < u; ++k) {
          double acc = 0.0;
          for (int iota = 0; iota < u; ++iota) {
            const int col = p * (ss + du) + ss + k * (ss + c) + ss + iota;
            acc += jac(row, col);
          }
          best = std::max(best, std::abs(acc));
        }
  }
  return best;
}

}  // namespace blendlab
