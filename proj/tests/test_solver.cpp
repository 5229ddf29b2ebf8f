#include "test_util.hpp"

#include "fluidsformer/errors.hpp"

#include <doctest.h>

#include <numbers>

using namespace fluidsformer;
using fftest::random_field;
using fftest::random_velocity;

namespace {

SceneConfig quiet_scene(int n = 16) {
  SceneConfig s;
  s.dims = {n, n, 1.0 / n};
  s.frames = 3;
  s.substeps_per_frame = 2;
  s.buoyancy = 0.0;
  s.initial_noise = 0.0;
  s.emitter.rate = 0.0;
  s.emitter.mode = EmitterMode::emission;
  return s;
}

/// Discretely divergence-free field from a node streamfunction that
/// vanishes on the walls.
MacVelocity2 stream_velocity(const GridDims &d, SplitMix64 &rng) {
  Eigen::ArrayXXd psi = Eigen::ArrayXXd::Zero(d.nx + 1, d.ny + 1);
  for (int j = 1; j < d.ny; ++j)
    for (int i = 1; i < d.nx; ++i) psi(i, j) = rng.uniform(-1, 1) * d.dx;
  MacVelocity2 v(d);
  for (int j = 0; j < d.ny; ++j)
    for (int i = 0; i <= d.nx; ++i) v.u(i, j) = (psi(i, j + 1) - psi(i, j)) / d.dx;
  for (int j = 0; j <= d.ny; ++j)
    for (int i = 0; i < d.nx; ++i) v.v(i, j) = -(psi(i + 1, j) - psi(i, j)) / d.dx;
  return v;
}

double max_div(const MacVelocity2 &v) { return divergence(v).data().abs().maxCoeff(); }

} // namespace

TEST_CASE("advection with zero velocity is the identity") {
  const GridDims d{10, 8, 0.1};
  SplitMix64 rng(1);
  const Field2 f = random_field(d, rng);
  const Field2 out = advect_semi_lagrangian(f, MacVelocity2(d), 0.3);
  CHECK((out.data() == f.data()).all());
}

TEST_CASE("advection by whole cells translates the field") {
  const GridDims d{12, 9, 0.25};
  SplitMix64 rng(2);
  const Field2 f = random_field(d, rng);
  for (int k : {1, 2}) {
    MacVelocity2 v(d);
    v.u_data().setConstant(0.5);
    const Field2 out = advect_semi_lagrangian(f, v, k * 0.5); // c dt = k dx
    for (int j = 0; j < d.ny; ++j)
      for (int i = k; i < d.nx; ++i) CHECK(out(i, j) == f(i - k, j));
  }
  MacVelocity2 up(d);
  up.v_data().setConstant(-0.25);
  const Field2 down = advect_semi_lagrangian(f, up, 1.0);
  for (int j = 0; j < d.ny - 1; ++j)
    for (int i = 0; i < d.nx; ++i) CHECK(down(i, j) == f(i, j + 1));
}

TEST_CASE("advection rejects CFL above 2") {
  const GridDims d{8, 8, 0.1};
  MacVelocity2 v(d);
  v.u_data().setConstant(1.0);
  CHECK_NOTHROW(advect_semi_lagrangian(Field2(d), v, 0.2));
  CHECK_THROWS_AS(advect_semi_lagrangian(Field2(d), v, 0.21), InvalidArgument);
  CHECK(cfl_number(v, 0.1) == doctest::Approx(1.0));
}

TEST_CASE("advection never creates new extrema") {
  const GridDims d{16, 16, 1.0 / 16};
  SplitMix64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Field2 f = random_field(d, rng, -2.0, 3.0);
    const MacVelocity2 v = random_velocity(d, rng, 1.0);
    const double dt = rng.uniform(0.0, 2.0) * d.dx / std::max(v.max_abs(), 1e-9);
    const Field2 out = advect_semi_lagrangian(f, v, dt);
    CHECK(out.min() >= f.min() - 1e-12);
    CHECK(out.max() <= f.max() + 1e-12);
  }
}

TEST_CASE("rotating blob after one revolution") {
  const int n = 128;
  const GridDims d{n, n, 1.0 / n};
  const double omega = 2.0 * std::numbers::pi; // one revolution per unit time
  MacVelocity2 vel(d);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i <= n; ++i) vel.u(i, j) = -omega * ((j + 0.5) * d.dx - 0.5);
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i < n; ++i) vel.v(i, j) = omega * ((i + 0.5) * d.dx - 0.5);
  Field2 blob(d);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector2d p = cell_center(d, i, j) - Eigen::Vector2d(0.5, 0.7);
      blob(i, j) = std::exp(-p.squaredNorm() / (2 * 0.1 * 0.1));
    }
  const int steps = 250; // CFL about 1.6 at the domain corners
  Field2 f = blob;
  for (int k = 0; k < steps; ++k) f = advect_semi_lagrangian(f, vel, 1.0 / steps);
  const double rel = std::sqrt((f.data() - blob.data()).square().sum() /
                               blob.data().square().sum());
  MESSAGE("rotating blob relative L2 error: " << rel);
  CHECK(rel < 0.25);
}

TEST_CASE("projection reaches the divergence tolerance") {
  const GridDims d{32, 32, 1.0 / 32};
  SplitMix64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const MacVelocity2 v = random_velocity(d, rng, 1.0);
    const auto once = project(v, {}, 1e-5, 400);
    CHECK(once.converged);
    CHECK(max_div(once.velocity) <= 1e-5);
    CHECK(once.max_divergence <= 1e-5);
    const auto twice = project(once.velocity, {}, 1e-5, 400);
    const double diff = std::max(
        (twice.velocity.u_data() - once.velocity.u_data()).abs().maxCoeff(),
        (twice.velocity.v_data() - once.velocity.v_data()).abs().maxCoeff());
    CHECK(diff <= 10 * 1e-5);
  }
}

TEST_CASE("projection leaves divergence-free fields unchanged") {
  const GridDims d{24, 20, 1.0 / 24};
  SplitMix64 rng(5);
  const MacVelocity2 v = stream_velocity(d, rng);
  REQUIRE(max_div(v) < 1e-10);
  const auto out = project(v, {}, 1e-5, 400);
  CHECK((out.velocity.u_data() - v.u_data()).abs().maxCoeff() < 1e-6);
  CHECK((out.velocity.v_data() - v.v_data()).abs().maxCoeff() < 1e-6);
  const auto zero = project(MacVelocity2(d), {}, 1e-5, 400);
  CHECK(zero.velocity.max_abs() == 0.0);
}

TEST_CASE("projection with an obstacle keeps solid faces closed") {
  const GridDims d{32, 32, 1.0 / 32};
  const Occupancy solids = make_occupancy(d, Obstacle{{0.5, 0.5}, 0.15});
  SplitMix64 rng(6);
  const auto out = project(random_velocity(d, rng), solids, 1e-5, 400);
  CHECK(out.converged);
  const Field2 div = divergence(out.velocity);
  for (int j = 0; j < d.ny; ++j)
    for (int i = 0; i < d.nx; ++i) {
      const int c = j * d.nx + i;
      if (is_solid(solids, c)) {
        CHECK(out.velocity.u(i, j) == 0.0);
        CHECK(out.velocity.u(i + 1, j) == 0.0);
        CHECK(out.velocity.v(i, j) == 0.0);
        CHECK(out.velocity.v(i, j + 1) == 0.0);
      } else {
        CHECK(std::abs(div(i, j)) <= 1e-5);
      }
    }
}

TEST_CASE("projection reports non-convergence") {
  const GridDims d{32, 32, 1.0 / 32};
  SplitMix64 rng(7);
  const auto out = project(random_velocity(d, rng), {}, 1e-12, 2);
  CHECK_FALSE(out.converged);
  CHECK(out.iterations <= 2);
}

TEST_CASE("a quiet scene stays still") {
  const SceneConfig s = quiet_scene();
  const SimState a = initial_state(s);
  const SimState b = step(a, s, s.substep_dt());
  CHECK((b.density.data() == a.density.data()).all());
  CHECK(b.velocity.max_abs() == 0.0);
  CHECK(b.time == doctest::Approx(a.time + s.substep_dt()));
}

TEST_CASE("emitter injects rate * dt per emitter cell") {
  SceneConfig s = quiet_scene(32);
  s.emitter.rate = 1.5;
  const SimState a = initial_state(s);
  const double dt = s.substep_dt();
  const SimState b = step(a, s, dt);
  const double expected = s.emitter.rate * dt * emitter_cells(s, a.solids).size();
  REQUIRE(expected > 0.0);
  CHECK(b.density.sum() == doctest::Approx(expected).epsilon(0.01));
}

TEST_CASE("density stays bounded and mass never grows without a source") {
  SceneConfig s = quiet_scene(32);
  s.initial_noise = 0.3;
  s.buoyancy = 2.0;
  SimState st = initial_state(s);
  SplitMix64 rng(8);
  st.density = random_field(s.dims, rng, 0.0, 0.8);
  for (int k = 0; k < 20; ++k) {
    const SimState next = step(st, s, s.substep_dt());
    CHECK(next.density.sum() <= st.density.sum() + 1e-9);
    CHECK(next.density.max() <= st.density.max() + 1e-12);
    CHECK(next.density.min() >= 0.0);
    CHECK(next.converged);
    CHECK(max_div(next.velocity) <= s.projection_tol);
    st = next;
  }
}

TEST_CASE("scenario bookkeeping and determinism") {
  SceneConfig s;
  s.dims = {32, 32, 1.0 / 32};
  s.frames = 50;
  s.substeps_per_frame = 4;
  s.seed = 11;
  const SimSequence a = generate_scenario(s);
  CHECK(a.dense.size() == 197);
  CHECK(a.keyframe_count() == 50);
  CHECK(a.keyframe(3).time == doctest::Approx(3 * s.dt));
  const SimSequence b = generate_scenario(s);
  for (std::size_t k = 0; k < a.dense.size(); ++k) {
    CHECK((a.dense[k].density.data() == b.dense[k].density.data()).all());
    CHECK((a.dense[k].velocity.u_data() == b.dense[k].velocity.u_data()).all());
  }
  for (const auto &st : a.dense) CHECK(st.density.max() <= s.density_max);
}

TEST_CASE("obstacle cells hold no density") {
  SceneConfig s;
  s.dims = {32, 32, 1.0 / 32};
  s.frames = 12;
  s.obstacle = Obstacle{{0.5, 0.45}, 0.12};
  const SimSequence seq = generate_scenario(s);
  const Occupancy solids = make_occupancy(s.dims, s.obstacle);
  int solid_cells = 0;
  for (const auto &st : seq.dense)
    for (int c = 0; c < s.dims.cells(); ++c)
      if (is_solid(solids, c)) {
        ++solid_cells;
        CHECK(st.density.data()[c] == 0.0);
      }
  CHECK(solid_cells > 0);
  CHECK(seq.dense.back().density.sum() > 0.0);
}

TEST_CASE("scene validation") {
  SceneConfig s;
  s.frames = 1;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s = SceneConfig{};
  s.dt = 0.0;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s = SceneConfig{};
  s.emitter.center = {2.0, 0.5};
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
}

TEST_CASE("randomized scenes are valid and seed-determined") {
  SceneConfig base;
  base.dims = {32, 32, 1.0 / 32};
  int obstacles = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const SceneConfig a = randomize_scene(base, seed);
    const SceneConfig b = randomize_scene(base, seed);
    CHECK_NOTHROW(a.validate());
    CHECK(a.emitter.center == b.emitter.center);
    CHECK(a.seed == b.seed);
    obstacles += a.obstacle.has_value();
  }
  CHECK(obstacles > 0);
  CHECK(obstacles < 40);
}
