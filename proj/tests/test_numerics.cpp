#include "blendlab/numerics.hpp"

#include "catch_amalgamated.hpp"

#include <random>

using namespace blendlab;

TEST_CASE("conorm on simple matrices") {
  CHECK(conorm(Matrix::Identity(3, 3)) == Catch::Approx(1.0));
  CHECK(conorm(Matrix::Identity(7, 7)) == Catch::Approx(1.0));

  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 2.0;
  d(1, 1) = 3.0;
  CHECK(conorm(d) == Catch::Approx(2.0));

  Matrix s(1, 1);
  s(0, 0) = 0.75;
  CHECK(conorm(s) == Catch::Approx(0.75));
}

TEST_CASE("conorm rejects singular matrices") {
  Matrix z = Matrix::Zero(2, 2);
  z(0, 0) = 1.0;
  CHECK_THROWS_AS(conorm(z), singular_matrix_error);
}

TEST_CASE("conorm times norm of inverse equals one") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 6);
    Matrix m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = gauss(rng);
    m += 3.0 * Matrix::Identity(n, n);  // keep comfortably invertible
    const double co = conorm(m);
    const double inv_norm = op_norm2(m.inverse());
    CHECK(std::abs(co * inv_norm - 1.0) < 1e-12);
  }
}

TEST_CASE("affine_image_box on interval endpoints") {
  // phi_+(t) = 0.75 t + 0.25 over [-0.9, 0.9]
  AffineMap plus(Matrix::Identity(1, 1) * 0.75, Vector::Constant(1, 0.25));
  IntervalBox b(std::vector<Interval>{Interval(-0.9, 0.9)});
  IntervalBox img = affine_image_box(plus, b);
  CHECK(img.iv[0].lo == Catch::Approx(-0.425).margin(1e-12));
  CHECK(img.iv[0].hi == Catch::Approx(0.925).margin(1e-12));

  // Sampling oracle: the enclosure contains every sampled image and is tight.
  double lo = 1e30, hi = -1e30;
  for (int i = 0; i <= 1000; ++i) {
    const double t = -0.9 + 1.8 * i / 1000.0;
    const double y = 0.75 * t + 0.25;
    CHECK(img.iv[0].contains(y));
    lo = std::min(lo, y);
    hi = std::max(hi, y);
  }
  CHECK(img.iv[0].lo >= lo - 1e-9);
  CHECK(img.iv[0].hi <= hi + 1e-9);

  AffineMap minus(Matrix::Identity(1, 1) * 0.75, Vector::Constant(1, -0.25));
  IntervalBox img2 = affine_image_box(minus, b);
  CHECK(img2.iv[0].lo == Catch::Approx(-0.925).margin(1e-12));
  CHECK(img2.iv[0].hi == Catch::Approx(0.425).margin(1e-12));
}

TEST_CASE("affine_image_box identity returns the same box") {
  IntervalBox b(std::vector<Interval>{Interval(-1.0, 2.0), Interval(0.5, 0.75)});
  IntervalBox img = affine_image_box(AffineMap::identity(2), b);
  for (int i = 0; i < 2; ++i) {
    CHECK(img.iv[i].lo == Catch::Approx(b.iv[i].lo).margin(1e-14));
    CHECK(img.iv[i].hi == Catch::Approx(b.iv[i].hi).margin(1e-14));
  }
}

TEST_CASE("affine_image_box is monotone") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 4);
    Matrix a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = uni(rng);
    Vector off(n);
    for (int i = 0; i < n; ++i) off(i) = uni(rng);
    AffineMap f(a, off);

    std::vector<Interval> big, small;
    for (int i = 0; i < n; ++i) {
      const double c = uni(rng), w = 0.5 + 0.5 * std::abs(uni(rng));
      big.emplace_back(c - w, c + w);
      const double s = 0.3 * w;
      small.emplace_back(c - s, c + s);
    }
    IntervalBox bigger(big), smaller(small);
    IntervalBox im_b = affine_image_box(f, bigger);
    IntervalBox im_s = affine_image_box(f, smaller);
    CHECK(im_b.contains(im_s));
  }
}

TEST_CASE("finite_diff_jacobian exact on affine maps") {
  Matrix a(2, 2);
  a << 1.5, -0.25, 0.0, 2.0;
  Vector off(2);
  off << 0.1, -0.3;
  AffineMap f(a, off);
  Vector x(2);
  x << 0.4, -1.2;
  Matrix jac = finite_diff_jacobian([&](const Vector& y) { return f(y); }, x);
  CHECK((jac - a).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("finite_diff_jacobian on scalar square") {
  auto f = [](const Vector& v) {
    Vector r(1);
    r(0) = v(0) * v(0);
    return r;
  };
  Vector x(1);
  x << 1.0;
  CHECK(std::abs(finite_diff_jacobian(f, x)(0, 0) - 2.0) < 1e-9);

  // derivative of the u=1 central fold coordinate t^2 at t=0.3 is 0.6
  x << 0.3;
  CHECK(std::abs(finite_diff_jacobian(f, x)(0, 0) - 0.6) < 1e-8);
}

TEST_CASE("finite_diff_jacobian matches analytic jacobian of random quadratics") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  const double h = kDefaultFdStep;
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 3);
    // f_i(x) = x^T Q_i x + b_i . x
    std::vector<Matrix> q(n);
    Matrix b(n, n);
    for (int i = 0; i < n; ++i) {
      q[i] = Matrix(n, n);
      for (int r = 0; r < n; ++r)
        for (int s = 0; s < n; ++s) q[i](r, s) = uni(rng);
      q[i] = 0.5 * (q[i] + q[i].transpose().eval());
      for (int j = 0; j < n; ++j) b(i, j) = uni(rng);
    }
    auto f = [&](const Vector& x) {
      Vector r(n);
      for (int i = 0; i < n; ++i) r(i) = x.dot(q[i] * x) + b.row(i).dot(x);
      return r;
    };
    Vector x(n);
    for (int i = 0; i < n; ++i) x(i) = uni(rng);
    Matrix jac = finite_diff_jacobian(f, x, h);
    Matrix exact(n, n);
    for (int i = 0; i < n; ++i) exact.row(i) = (2.0 * q[i] * x + b.row(i).transpose()).transpose();
    CHECK((jac - exact).cwiseAbs().maxCoeff() < 10.0 * h * h + 1e-12);
  }
}

TEST_CASE("interval box helpers") {
  IntervalBox b = IntervalBox::cube(2, 1.0);
  CHECK(b.diameter() == Catch::Approx(2.0));
  Vector x(2);
  x << 0.25, -0.5;
  CHECK(b.boundary_margin(x) == Catch::Approx(0.5));
  auto halves = b.split(0);
  CHECK(halves.first.iv[0].hi == Catch::Approx(0.0));
  CHECK(halves.second.iv[0].lo == Catch::Approx(0.0));
  CHECK(halves.first.iv[1].lo == Catch::Approx(-1.0));
}

TEST_CASE("product bump respects its analytic C2 bound") {
  ProductBump bump;
  bump.center = Vector::Zero(2);
  bump.radius = Vector::Constant(2, 0.5);
  bump.amplitude = 1e-3;
  const double bound = bump.c2_bound();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> uni(-0.6, 0.6);
  for (int i = 0; i < 500; ++i) {
    Vector y(2);
    y << uni(rng), uni(rng);
    CHECK(std::abs(bump.value(y)) <= bound + 1e-15);
    CHECK(sup_norm(bump.gradient(y)) <= bound + 1e-12);
    CHECK(bump.hessian(y).cwiseAbs().maxCoeff() <= bound + 1e-9);
  }
}
