#include "test_util.hpp"

#include "fluidsformer/errors.hpp"

#include <doctest.h>

using namespace fluidsformer;
using fftest::random_field;

TEST_CASE("grid dims validation") {
  CHECK_NOTHROW((GridDims{4, 4, 0.1}.validate()));
  CHECK_THROWS_AS((GridDims{3, 4, 0.1}.validate()), InvalidArgument);
  CHECK_THROWS_AS((GridDims{4, 4, 0.0}.validate()), InvalidArgument);
}

TEST_CASE("staggered layout sizes") {
  MacVelocity2 v(GridDims{5, 4, 1.0});
  CHECK(v.u_data().size() == 6 * 4);
  CHECK(v.v_data().size() == 5 * 5);
  CHECK(Field2(GridDims{5, 4, 1.0}).data().size() == 20);
}

TEST_CASE("bilinear sampling") {
  const GridDims d{4, 4, 1.0};
  SUBCASE("constant field") {
    Field2 f(d, 0.37);
    SplitMix64 rng(1);
    for (int k = 0; k < 100; ++k)
      CHECK(sample_bilinear(f, {rng.uniform(-2, 6), rng.uniform(-2, 6)}) ==
            doctest::Approx(0.37).epsilon(1e-15));
  }
  SUBCASE("cell center returns the stored value") {
    SplitMix64 rng(2);
    Field2 f = random_field(d, rng);
    for (int j = 0; j < 4; ++j)
      for (int i = 0; i < 4; ++i) CHECK(sample_bilinear(f, cell_center(d, i, j)) == f(i, j));
  }
  SUBCASE("ramp midway between centers") {
    Field2 f(d);
    for (int j = 0; j < 4; ++j)
      for (int i = 0; i < 4; ++i) f(i, j) = i;
    // centers (1, j) and (2, j) sit at x = 1.5 and 2.5
    CHECK(sample_bilinear(f, {2.0, 1.5}) == doctest::Approx(1.5));
  }
  SUBCASE("out of range positions clamp") {
    Field2 f(d);
    for (int j = 0; j < 4; ++j)
      for (int i = 0; i < 4; ++i) f(i, j) = i + 10 * j;
    CHECK(sample_bilinear(f, {-5.0, -5.0}) == f(0, 0));
    CHECK(sample_bilinear(f, {50.0, 50.0}) == f(3, 3));
  }
}

TEST_CASE("bilinear sampling obeys the discrete max principle") {
  const GridDims d{8, 6, 0.5};
  SplitMix64 rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    Field2 f = random_field(d, rng, -3.0, 3.0);
    const Eigen::Vector2d p(rng.uniform(-1.0, 5.0), rng.uniform(-1.0, 4.0));
    // stencil corners of the clamped point
    const double gx = std::clamp(p.x() / d.dx - 0.5, 0.0, d.nx - 1.0);
    const double gy = std::clamp(p.y() / d.dx - 0.5, 0.0, d.ny - 1.0);
    const int i0 = std::min(int(gx), d.nx - 2), j0 = std::min(int(gy), d.ny - 2);
    const double vals[] = {f(i0, j0), f(i0 + 1, j0), f(i0, j0 + 1), f(i0 + 1, j0 + 1)};
    const double s = sample_bilinear(f, p);
    CHECK(s >= *std::min_element(vals, vals + 4) - 1e-12);
    CHECK(s <= *std::max_element(vals, vals + 4) + 1e-12);
  }
}

TEST_CASE("divergence") {
  const GridDims d{6, 5, 0.25};
  SUBCASE("zero velocity") {
    CHECK(divergence(MacVelocity2(d)).data().abs().maxCoeff() == 0.0);
  }
  SUBCASE("uniform translation") {
    MacVelocity2 v(d);
    v.u_data().setConstant(0.7);
    CHECK(divergence(v).data().abs().maxCoeff() == doctest::Approx(0.0));
  }
  SUBCASE("linear ramp has unit divergence") {
    MacVelocity2 v(d);
    for (int j = 0; j < d.ny; ++j)
      for (int i = 0; i <= d.nx; ++i) v.u(i, j) = i * d.dx;
    const Field2 div = divergence(v);
    for (double x : div.data()) CHECK(x == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("boolean combination") {
  const GridDims d{8, 8, 1.0};
  SplitMix64 rng(4);
  const Field2 a = random_field(d, rng), b = random_field(d, rng);
  CHECK(boolean_combine(a, a, BooleanOp::subtract).data().abs().maxCoeff() == 0.0);
  CHECK((boolean_combine(a, a, BooleanOp::intersect).data() == a.data()).all());
  const Field2 c = boolean_combine(Field2(d, 0.7), Field2(d, 0.6), BooleanOp::add);
  CHECK((c.data() == 1.0).all());
  CHECK((boolean_combine(a, b, BooleanOp::add).data() ==
         boolean_combine(b, a, BooleanOp::add).data())
            .all());
  CHECK_THROWS_AS(boolean_combine(a, Field2(GridDims{4, 8, 1.0}), BooleanOp::add),
                  DimensionMismatch);
  CHECK(parse_boolean_op("intersect") == BooleanOp::intersect);
  CHECK_THROWS_AS(parse_boolean_op("xor"), InvalidArgument);
}

TEST_CASE("boolean algebra on random pairs") {
  const GridDims d{12, 10, 1.0};
  SplitMix64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Field2 a = random_field(d, rng), b = random_field(d, rng),
                 c = random_field(d, rng);
    const auto add_ab = boolean_combine(a, b, BooleanOp::add);
    CHECK((add_ab.data() == boolean_combine(b, a, BooleanOp::add).data()).all());
    CHECK(add_ab.min() >= 0.0);
    CHECK(add_ab.max() <= 1.0);
    const auto i_ab = boolean_combine(a, b, BooleanOp::intersect);
    CHECK((i_ab.data() == boolean_combine(b, a, BooleanOp::intersect).data()).all());
    CHECK((boolean_combine(i_ab, c, BooleanOp::intersect).data() ==
           boolean_combine(a, boolean_combine(b, c, BooleanOp::intersect),
                           BooleanOp::intersect)
               .data())
              .all());
    const auto s_ab = boolean_combine(a, b, BooleanOp::subtract);
    CHECK(s_ab.min() >= 0.0);
    CHECK(s_ab.max() <= 1.0);
  }
}

TEST_CASE("normalization") {
  NormStats s{0.0, 2.0};
  CHECK(s.normalize(0.0) == -1.0);
  CHECK(s.normalize(1.0) == 0.0);
  CHECK(s.normalize(0.5) == doctest::Approx(-0.5));
  CHECK_THROWS_AS((NormStats{1.0, 1.0}.validate()), InvalidArgument);
  CHECK_THROWS_AS(normalize(Field2(GridDims{4, 4, 1.0}), NormStats{2.0, 1.0}),
                  InvalidArgument);

  SplitMix64 rng(6);
  for (int k = 0; k < 10000; ++k) {
    const double lo = rng.uniform(-10, 10), hi = lo + rng.uniform(1e-3, 20);
    const NormStats st{lo, hi};
    const double x = rng.uniform(lo - 5, hi + 5);
    CHECK(st.denormalize(st.normalize(x)) ==
          doctest::Approx(x).epsilon(1e-6).scale(std::max(std::abs(lo), std::abs(hi))));
  }
  const NormStats degenerate = compute_norm_stats(0.5, 0.5);
  CHECK(degenerate.hi > degenerate.lo);
}

TEST_CASE("centered velocity averages faces") {
  const GridDims d{4, 4, 1.0};
  MacVelocity2 v(d);
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i <= 4; ++i) v.u(i, j) = i;
  const Field2 cu = centered_u(v);
  CHECK(cu(0, 0) == 0.5);
  CHECK(cu(3, 2) == 3.5);
}
