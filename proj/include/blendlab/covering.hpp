#pragma once

// Fiber IFS of affine contractions, the covering check for the candidate
// set B, Lebesgue numbers of the resulting open cover and the admissible
// bound on the disc parameter delta.

#include "blendlab/numerics.hpp"

#include <map>
#include <string>
#include <vector>

namespace blendlab {

// ---------------------------------------------------------------------------

struct FiberIFS {
  std::vector<AffineMap> maps;  // kappa affine contractions on R^c
  double lambda = 0.0;          // lower contraction bound
  double beta = 0.0;            // upper contraction bound
  IntervalBox domain_D;         // the cube D
  IntervalBox candidate_B;      // candidate open set B (stored closed, open flag set)

  // Set when the IFS is a full product of per-axis families; enables exact
  // per-axis Lebesgue numbers.  axis_images[a] lists the 1-D images of the
  // B-interval on axis a over all maps.
  bool product_structure = false;
  std::vector<std::vector<Interval>> axis_images;

  int c() const { return domain_D.dim(); }
  int kappa() const { return static_cast<int>(maps.size()); }

  void validate() const {
    require(!maps.empty(), "FiberIFS: no maps");
    require(0.0 < lambda && lambda < beta && beta < 1.0,
            "FiberIFS: need 0 < lambda < beta < 1");
    for (const auto& f : maps) {
      require(f.dim_in() == c() && f.dim_out() == c(), "FiberIFS: map dimension");
      const IntervalBox img = affine_image_box(f, domain_D);
      require(domain_D.interior_margin(img) > 0.0,
              "FiberIFS: map does not send closure(D) into D");
      const double co = conorm(f.linear);
      const double no = op_norm2(f.linear);
      // Lower band non-strict up to roundoff: the standard maps contract at
      // exactly lambda.
      require(lambda <= co * (1.0 + 1e-12) && no < beta,
              "FiberIFS: contraction rates escape the (lambda,beta) band");
    }
    require(domain_D.contains(candidate_B), "FiberIFS: B must sit inside D");
  }
};

// Open images phi_l(B), as outward-rounded enclosures.
inline std::vector<IntervalBox> open_cover_images(const FiberIFS& ifs) {
  std::vector<IntervalBox> images;
  images.reserve(ifs.maps.size());
  for (const auto& f : ifs.maps) images.push_back(affine_image_box(f, ifs.candidate_B));
  return images;
}

// ---------------------------------------------------------------------------

struct CoveringCertificate {
  enum class Status { covered, uncovered, indeterminate };
  Status status = Status::indeterminate;
  bool covered = false;
  double margin = 0.0;           // min over leaves of best interior margin
  double lebesgue_number = 0.0;  // filled by lebesgue_number()
  std::vector<Vector> failures;  // witness points outside every open image
  std::vector<IntervalBox> undecided;
  int subdivision_depth = 0;
  long leaves_checked = 0;

  std::string to_text() const {
    std::ostringstream os;
    os << "covering_certificate:\n";
    os << "  status: "
       << (status == Status::covered ? "covered"
                                     : (status == Status::uncovered ? "uncovered"
                                                                    : "indeterminate"))
       << "\n";
    os << "  margin: " << format_double(margin) << "\n";
    os << "  lebesgue_number: " << format_double(lebesgue_number) << "\n";
    os << "  subdivision_depth: " << subdivision_depth << "\n";
    os << "  leaves_checked: " << leaves_checked << "\n";
    os << "  failures: " << failures.size() << "\n";
    for (const auto& w : failures) {
      os << "    -";
      for (Eigen::Index i = 0; i < w.size(); ++i) os << " " << format_double(w(i));
      os << "\n";
    }
    return os.str();
  }
};

// ---------------------------------------------------------------------------
// Standard product IFS of Example-type maps phi_pm(t) = lambda t +- (1-lambda)
// on each axis; kappa = 2^c maps; D = (-2,2)^c, B = (-b,b)^c.
//
// The admissible band (1-lambda)/lambda < b < 1 keeps the closure of B
// strictly inside the union of open images: at b = 1 the endpoints +-1 are
// fixed points and lie only on the image boundaries.  `checked=false` skips
// the band test so the b = 1 failure case can be reproduced.

inline FiberIFS standard_fiber_ifs(double lambda, int c, double b, bool checked = true) {
  require(0.5 < lambda && lambda < 1.0, "standard_fiber_ifs: need 1/2 < lambda < 1");
  require(c >= 1, "standard_fiber_ifs: need c >= 1");
  if (checked) {
    const double lo = (1.0 - lambda) / lambda;
    if (!(lo < b && b < 1.0)) {
      std::ostringstream os;
      os << "standard_fiber_ifs: b=" << b << " violates (1-lambda)/lambda < b < 1 (= "
         << lo << " < b < 1)";
      throw std::invalid_argument(os.str());
    }
  }
  require(c <= 12, "standard_fiber_ifs: covering checks beyond c=12 unsupported");

  FiberIFS ifs;
  ifs.lambda = lambda;
  ifs.beta = 0.5 * (1.0 + lambda);  // callers may tighten; rates equal lambda exactly
  ifs.domain_D = IntervalBox::cube(c, 2.0);
  ifs.candidate_B = IntervalBox::cube(c, b, /*open=*/true);
  const int kappa = 1 << c;
  for (int mask = 0; mask < kappa; ++mask) {
    Vector off(c);
    for (int a = 0; a < c; ++a) {
      const bool plus = (mask >> a) & 1;  // axis a sign; '-' before '+' lexicographically
      off(a) = (plus ? 1.0 : -1.0) * (1.0 - lambda);
    }
    ifs.maps.emplace_back(Matrix::Identity(c, c) * lambda, off);
  }
  ifs.product_structure = true;
  ifs.axis_images.assign(c, {});
  for (int a = 0; a < c; ++a) {
    const Interval bi(-b, b);
    ifs.axis_images[a].push_back(out_add(out_scale(lambda, bi),
                                         Interval::point(-(1.0 - lambda))));
    ifs.axis_images[a].push_back(out_add(out_scale(lambda, bi),
                                         Interval::point(1.0 - lambda)));
  }
  return ifs;
}

// ---------------------------------------------------------------------------
// Sound covering check by adaptive bisection of closure(B).
//
// covered: every leaf lies strictly inside some open image with positive
//          margin.
// uncovered: witness point found outside all open images (exact point test).
// indeterminate: depth exhausted with neither.

namespace detail {

inline bool point_in_open_box(const IntervalBox& box, const Vector& x) {
  for (int i = 0; i < box.dim(); ++i)
    if (!(box.iv[i].lo < x(i) && x(i) < box.iv[i].hi)) return false;
  return true;
}

}  // namespace detail

inline CoveringCertificate check_covering(const FiberIFS& ifs, int max_depth = 40) {
  ifs.validate();
  CoveringCertificate cert;
  cert.margin = std::numeric_limits<double>::infinity();

  // Leaf \subset phi_l(B) iff phi_l^{-1}(leaf) \subset B.  The outward-rounded
  // enclosure of the pullback keeps this direction sound; an image-space
  // margin is recovered through the co-norm.
  std::vector<AffineMap> inverses;
  std::vector<double> conorms;
  for (const auto& f : ifs.maps) {
    inverses.push_back(f.inverse());
    conorms.push_back(conorm(f.linear));
  }

  struct Item {
    IntervalBox box;
    int depth;
  };
  std::vector<Item> stack{{ifs.candidate_B, 0}};
  while (!stack.empty()) {
    Item it = stack.back();
    stack.pop_back();
    ++cert.leaves_checked;
    cert.subdivision_depth = std::max(cert.subdivision_depth, it.depth);

    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < inverses.size(); ++l) {
      const IntervalBox pre = affine_image_box(inverses[l], it.box);
      const double m = ifs.candidate_B.interior_margin(pre);
      if (m > 0.0) best = std::max(best, m * conorms[l]);
    }
    if (best > 0.0) {
      cert.margin = std::min(cert.margin, best);
      continue;
    }
    // Point disproof at corners and center: a point whose pullbacks all leave
    // the open set B lies outside every open image.
    for (const Vector& p : {it.box.center(), it.box.lower(), it.box.upper()}) {
      bool inside_some = false;
      for (const auto& inv : inverses)
        if (detail::point_in_open_box(ifs.candidate_B, inv(p))) {
          inside_some = true;
          break;
        }
      if (!inside_some) {
        cert.failures.push_back(p);
        cert.status = CoveringCertificate::Status::uncovered;
      }
    }
    if (cert.status == CoveringCertificate::Status::uncovered) {
      cert.covered = false;
      cert.margin = 0.0;
      return cert;
    }
    if (it.depth >= max_depth) {
      cert.undecided.push_back(it.box);
      continue;
    }
    auto halves = it.box.split(it.box.widest_axis());
    stack.push_back({halves.first, it.depth + 1});
    stack.push_back({halves.second, it.depth + 1});
  }

  if (!cert.undecided.empty()) {
    cert.status = CoveringCertificate::Status::indeterminate;
    cert.covered = false;
    cert.margin = 0.0;
    for (const auto& b : cert.undecided) cert.failures.push_back(b.center());
  } else {
    cert.status = CoveringCertificate::Status::covered;
    cert.covered = true;
  }
  return cert;
}

// ---------------------------------------------------------------------------
// Lebesgue number of an open cover of `box` by `elements`.
//
// 1-D exact: the smallest length of a closed sub-interval of `box` escaping
// every element.  Products under the sup metric reduce axis by axis when the
// cover is a full product family.

inline double lebesgue_number_1d(const Interval& box, const std::vector<Interval>& elems) {
  // Escaping interval [p,q] within the box: for every element, p <= a_i or
  // q >= b_i.  With q(p) = max{b_i : a_i < p} the minimum of q(p) - p is
  // attained at p in {a_i} (plus the box ends).
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> candidates{box.lo, box.hi};
  for (const auto& e : elems)
    if (e.lo >= box.lo && e.lo <= box.hi) candidates.push_back(e.lo);
  for (double p : candidates) {
    double q = p;
    for (const auto& e : elems)
      if (e.lo < p) q = std::max(q, e.hi);
    if (q <= box.hi) best = std::min(best, q - p);
  }
  if (!std::isfinite(best)) return box.width();  // nothing escapes a single big element
  return best;
}

// Grid lower bound valid for any cover.  Escaping is monotone in box size, so
// if no anchored cube of edge len+2*step escapes every element, no set of
// diameter len escapes either, and len bounds the Lebesgue number from below.
inline double lebesgue_number_grid(const IntervalBox& box,
                                   const std::vector<IntervalBox>& elems,
                                   int grid_n = 64) {
  const int dim = box.dim();
  double step = 0.0;
  for (int a = 0; a < dim; ++a) step = std::max(step, box.iv[a].width() / grid_n);

  auto some_escaping_cube = [&](double edge) {
    std::vector<int> idx(dim, 0);
    while (true) {
      IntervalBox cand = box;
      bool in_range = true;
      for (int a = 0; a < dim; ++a) {
        const double lo = box.iv[a].lo + step * idx[a];
        if (lo + edge > box.iv[a].hi + 1e-15) {
          in_range = false;
          break;
        }
        cand.iv[a] = Interval(lo, std::min(lo + edge, box.iv[a].hi));
      }
      if (in_range) {
        bool escapes_all = true;
        for (const auto& e : elems) {
          bool strictly_inside = true;
          for (int a = 0; a < dim; ++a)
            if (!(e.iv[a].lo < cand.iv[a].lo && cand.iv[a].hi < e.iv[a].hi)) {
              strictly_inside = false;
              break;
            }
          if (strictly_inside) {
            escapes_all = false;
            break;
          }
        }
        if (escapes_all) return true;
      }
      int a = 0;
      while (a < dim && ++idx[a] > grid_n) idx[a++] = 0;
      if (a == dim) return false;
    }
  };

  double lo = 0.0, hi = box.diameter();
  for (int iter = 0; iter < 40; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (some_escaping_cube(mid + 2.0 * step)) hi = mid;
    else lo = mid;
  }
  return std::max(0.0, lo);
}

inline double lebesgue_number_of_cover(const IntervalBox& box,
                                       const std::vector<IntervalBox>& elems) {
  if (box.dim() == 1) {
    std::vector<Interval> e1;
    e1.reserve(elems.size());
    for (const auto& e : elems) e1.push_back(e.iv[0]);
    return lebesgue_number_1d(box.iv[0], e1);
  }
  return lebesgue_number_grid(box, elems);
}

inline double lebesgue_number(const FiberIFS& ifs, const CoveringCertificate& cert) {
  require(cert.covered, "lebesgue_number: covering certificate required");
  if (ifs.product_structure) {
    double L = std::numeric_limits<double>::infinity();
    for (int a = 0; a < ifs.c(); ++a)
      L = std::min(L, lebesgue_number_1d(ifs.candidate_B.iv[a], ifs.axis_images[a]));
    return L;
  }
  return lebesgue_number_of_cover(ifs.candidate_B, open_cover_images(ifs));
}

// ---------------------------------------------------------------------------

inline double delta_bound(double lambda, double L) {
  require(0.0 < lambda && lambda < 1.0, "delta_bound: need lambda in (0,1)");
  require(L >= 0.0, "delta_bound: need L >= 0");
  return lambda * L / 2.0;
}

}  // namespace blendlab
