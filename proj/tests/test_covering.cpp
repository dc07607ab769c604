#include "blendlab/covering.hpp"

#include "catch_amalgamated.hpp"

#include <random>

using namespace blendlab;

namespace {

// Brute-force Lebesgue number oracle: scan interval positions on a fine grid
// and find the shortest sub-interval of the box escaping every element.
double lebesgue_brute_force_1d(const Interval& box, const std::vector<Interval>& elems,
                               int grid = 4000) {
  double best = box.width();
  for (int i = 0; i <= grid; ++i) {
    const double p = box.lo + box.width() * i / grid;
    for (int j = i; j <= grid; ++j) {
      const double q = box.lo + box.width() * j / grid;
      bool escapes_all = true;
      for (const auto& e : elems)
        if (e.lo < p && q < e.hi) {
          escapes_all = false;
          break;
        }
      if (escapes_all) {
        best = std::min(best, q - p);
        break;  // longer intervals from p only get worse
      }
    }
  }
  return best;
}

}  // namespace

TEST_CASE("standard_fiber_ifs builds the Example maps") {
  FiberIFS ifs = standard_fiber_ifs(0.75, 1, 0.9);
  REQUIRE(ifs.kappa() == 2);
  // '-' branch first, '+' second
  CHECK(ifs.maps[0].linear(0, 0) == Catch::Approx(0.75));
  CHECK(ifs.maps[0].offset(0) == Catch::Approx(-0.25));
  CHECK(ifs.maps[1].offset(0) == Catch::Approx(0.25));
  CHECK(ifs.candidate_B.iv[0].lo == Catch::Approx(-0.9));
  CHECK(ifs.candidate_B.iv[0].hi == Catch::Approx(0.9));
  ifs.validate();

  FiberIFS ifs2 = standard_fiber_ifs(0.75, 2, 0.9);
  CHECK(ifs2.kappa() == 4);
  ifs2.validate();
}

TEST_CASE("standard_fiber_ifs rejects b outside the admissible band") {
  // (1 - 0.6)/0.6 = 2/3 > 0.5
  CHECK_THROWS_WITH(standard_fiber_ifs(0.6, 1, 0.5),
                    Catch::Matchers::ContainsSubstring("(1-lambda)/lambda"));
  CHECK_THROWS_AS(standard_fiber_ifs(0.75, 1, 1.0), std::invalid_argument);
  // unchecked construction allows the b = 1 reproduction case
  CHECK_NOTHROW(standard_fiber_ifs(0.75, 1, 1.0, /*checked=*/false));
}

TEST_CASE("check_covering certifies the standard example") {
  FiberIFS ifs = standard_fiber_ifs(0.75, 1, 0.9);
  CoveringCertificate cert = check_covering(ifs);
  CHECK(cert.covered);
  CHECK(cert.status == CoveringCertificate::Status::covered);
  CHECK(cert.margin > 0.0);
  CHECK(cert.failures.empty());

  // images (-0.925, 0.425) and (-0.425, 0.925) cover [-0.9, 0.9]
  auto images = open_cover_images(ifs);
  CHECK(images[0].iv[0].lo == Catch::Approx(-0.925).margin(1e-12));
  CHECK(images[1].iv[0].hi == Catch::Approx(0.925).margin(1e-12));
}

TEST_CASE("check_covering fails at b = 1 with witnesses at the fixed points") {
  FiberIFS ifs = standard_fiber_ifs(0.75, 1, 1.0, /*checked=*/false);
  CoveringCertificate cert = check_covering(ifs);
  CHECK_FALSE(cert.covered);
  CHECK(cert.status == CoveringCertificate::Status::uncovered);
  REQUIRE_FALSE(cert.failures.empty());
  bool near_endpoint = false;
  for (const auto& w : cert.failures)
    if (std::abs(std::abs(w(0)) - 1.0) < 1e-3) near_endpoint = true;
  CHECK(near_endpoint);
}

TEST_CASE("a single strict contraction cannot cover its own domain") {
  FiberIFS ifs;
  ifs.lambda = 0.7;
  ifs.beta = 0.8;
  ifs.domain_D = IntervalBox::cube(1, 2.0);
  ifs.candidate_B = IntervalBox::cube(1, 0.9, true);
  ifs.maps.emplace_back(Matrix::Identity(1, 1) * 0.75, Vector::Zero(1));
  CoveringCertificate cert = check_covering(ifs);
  CHECK_FALSE(cert.covered);
  REQUIRE_FALSE(cert.failures.empty());
  bool near_pm09 = false;
  for (const auto& w : cert.failures)
    if (std::abs(std::abs(w(0)) - 0.9) < 0.3) near_pm09 = true;
  CHECK(near_pm09);
}

TEST_CASE("lebesgue number of the standard cover is 0.85") {
  FiberIFS ifs = standard_fiber_ifs(0.75, 1, 0.9);
  CoveringCertificate cert = check_covering(ifs);
  const double L = lebesgue_number(ifs, cert);
  CHECK(L == Catch::Approx(0.85).margin(1e-9));

  // brute-force oracle over interval positions
  std::vector<Interval> elems{{-0.925, 0.425}, {-0.425, 0.925}};
  const double L_oracle = lebesgue_brute_force_1d(Interval(-0.9, 0.9), elems);
  CHECK(std::abs(L - L_oracle) < 2e-3);
}

TEST_CASE("product cover in c=2 has the 1-D Lebesgue number") {
  FiberIFS ifs2 = standard_fiber_ifs(0.75, 2, 0.9);
  CoveringCertificate cert2 = check_covering(ifs2);
  REQUIRE(cert2.covered);
  const double L2 = lebesgue_number(ifs2, cert2);
  CHECK(L2 == Catch::Approx(0.85).margin(1e-9));

  // 2-D grid oracle (lower bound within grid slack)
  const double Lg = lebesgue_number_grid(ifs2.candidate_B, open_cover_images(ifs2), 120);
  CHECK(Lg <= L2 + 1e-12);
  CHECK(Lg > L2 - 0.05);
}

TEST_CASE("single covering element gives L at least the diameter") {
  IntervalBox box = IntervalBox::cube(1, 0.9);
  std::vector<IntervalBox> elems{IntervalBox::cube(1, 1.0)};
  CHECK(lebesgue_number_of_cover(box, elems) >= box.diameter() - 1e-12);
}

TEST_CASE("delta_bound") {
  CHECK(delta_bound(0.75, 0.85) == Catch::Approx(0.31875));
  CHECK(delta_bound(0.6, 0.0) == Catch::Approx(0.0));
  CHECK_THROWS_AS(delta_bound(1.0, 0.85), std::invalid_argument);
}

TEST_CASE("covering soundness: sampled points sit inside open images with margin") {
  FiberIFS ifs = standard_fiber_ifs(0.75, 1, 0.9);
  CoveringCertificate cert = check_covering(ifs);
  REQUIRE(cert.covered);
  auto images = open_cover_images(ifs);
  const int grid = 2000;
  for (int i = 0; i <= grid; ++i) {
    Vector p(1);
    p(0) = -0.9 + 1.8 * i / grid;
    double best = -1.0;
    for (const auto& img : images) best = std::max(best, img.boundary_margin(p));
    CHECK(best >= cert.margin / 2.0);
  }
}

TEST_CASE("covering margin shrinks when B grows and false never flips under depth cuts") {
  FiberIFS small = standard_fiber_ifs(0.75, 1, 0.8);
  FiberIFS large = standard_fiber_ifs(0.75, 1, 0.95);
  CoveringCertificate cs = check_covering(small);
  CoveringCertificate cl = check_covering(large);
  REQUIRE(cs.covered);
  REQUIRE(cl.covered);
  CHECK(cl.margin <= cs.margin + 1e-12);

  FiberIFS bad = standard_fiber_ifs(0.75, 1, 1.0, false);
  for (int depth : {4, 8, 16, 40}) {
    CoveringCertificate cert = check_covering(bad, depth);
    CHECK_FALSE(cert.covered);
  }
}

TEST_CASE("contraction band holds on sampled finite-difference jacobians") {
  FiberIFS ifs = standard_fiber_ifs(0.75, 2, 0.9);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> uni(-1.9, 1.9);
  for (const auto& f : ifs.maps) {
    for (int s = 0; s < 10; ++s) {
      Vector y(2);
      y << uni(rng), uni(rng);
      Matrix jac = finite_diff_jacobian([&](const Vector& x) { return f(x); }, y);
      CHECK(conorm(jac) > ifs.lambda - 1e-6);
      CHECK(op_norm2(jac) < ifs.beta + 1e-6);
    }
  }
}
