#include "fluidsformer/solver.hpp"

#include "fluidsformer/errors.hpp"
#include "fluidsformer/rng.hpp"

#include <algorithm>
#include <cmath>

namespace fluidsformer {

EmitterMode parse_emitter_mode(std::string_view name) {
  if (name == "inflow") return EmitterMode::inflow;
  if (name == "emission") return EmitterMode::emission;
  throw InvalidArgument("unknown emitter mode '" + std::string(name) + "'");
}

std::string_view to_string(EmitterMode mode) {
  return mode == EmitterMode::inflow ? "inflow" : "emission";
}

namespace {

bool disc_inside(const GridDims &dims, const Eigen::Vector2d &c, double r) {
  return r > 0.0 && c.x() - r >= 0.0 && c.y() - r >= 0.0 &&
         c.x() + r <= dims.width() && c.y() + r <= dims.height();
}

} // namespace

void SceneConfig::validate() const {
  dims.validate();
  if (!(dt > 0.0)) throw InvalidArgument("scene dt must be > 0");
  if (substeps_per_frame < 1)
    throw InvalidArgument("substeps_per_frame must be >= 1");
  if (frames < 2) throw InvalidArgument("scene needs at least 2 frames");
  if (!disc_inside(dims, emitter.center, emitter.radius))
    throw InvalidArgument("emitter must lie inside the domain");
  if (emitter.rate < 0.0) throw InvalidArgument("emitter rate must be >= 0");
  if (obstacle && !disc_inside(dims, obstacle->center, obstacle->radius))
    throw InvalidArgument("obstacle must lie inside the domain");
  if (!(density_max > 0.0)) throw InvalidArgument("density_max must be > 0");
  if (!(projection_tol > 0.0) || projection_max_iters < 1)
    throw InvalidArgument("projection settings must be positive");
}

Occupancy make_occupancy(const GridDims &dims,
                         const std::optional<Obstacle> &obstacle) {
  Occupancy solids(dims.cells(), 0);
  if (!obstacle) return solids;
  for (int j = 0; j < dims.ny; ++j)
    for (int i = 0; i < dims.nx; ++i)
      if ((cell_center(dims, i, j) - obstacle->center).norm() <=
          obstacle->radius)
        solids[j * dims.nx + i] = 1;
  return solids;
}

double cfl_number(const MacVelocity2 &vel, double dt) {
  return dt * vel.max_abs() / vel.dims().dx;
}

Field2 advect_semi_lagrangian(const Field2 &field, const MacVelocity2 &vel,
                              double dt) {
  if (!(field.dims() == vel.dims()))
    throw DimensionMismatch("advection field and velocity grids differ");
  const double cfl = cfl_number(vel, dt);
  if (cfl > 2.0 * (1.0 + 1e-6))
    throw InvalidArgument("advection CFL number " + std::to_string(cfl) +
                          " exceeds 2");
  const GridDims &d = field.dims();
  Field2 out(d);
  // backtrace in cell units so that a zero displacement lands exactly on
  // the source cell
  const double scale = dt / d.dx;
  for (int j = 0; j < d.ny; ++j) {
    for (int i = 0; i < d.nx; ++i) {
      const double uc = 0.5 * (vel.u(i, j) + vel.u(i + 1, j));
      const double vc = 0.5 * (vel.v(i, j) + vel.v(i, j + 1));
      out(i, j) = sample_cells(field, i - scale * uc, j - scale * vc);
    }
  }
  return out;
}

MacVelocity2 advect_velocity(const MacVelocity2 &vel, double dt) {
  const GridDims &d = vel.dims();
  MacVelocity2 out(vel);
  for (int j = 0; j < d.ny; ++j) {
    for (int i = 1; i < d.nx; ++i) {
      const Eigen::Vector2d pos(i * d.dx, (j + 0.5) * d.dx);
      out.u(i, j) = sample_u(vel, pos - dt * sample_velocity(vel, pos));
    }
  }
  for (int j = 1; j < d.ny; ++j) {
    for (int i = 0; i < d.nx; ++i) {
      const Eigen::Vector2d pos((i + 0.5) * d.dx, j * d.dx);
      out.v(i, j) = sample_v(vel, pos - dt * sample_velocity(vel, pos));
    }
  }
  return out;
}

namespace {

bool u_face_open(const GridDims &d, const Occupancy &solids, int i, int j) {
  if (i <= 0 || i >= d.nx) return false;
  return !is_solid(solids, j * d.nx + i - 1) && !is_solid(solids, j * d.nx + i);
}

bool v_face_open(const GridDims &d, const Occupancy &solids, int i, int j) {
  if (j <= 0 || j >= d.ny) return false;
  return !is_solid(solids, (j - 1) * d.nx + i) &&
         !is_solid(solids, j * d.nx + i);
}

// Matrix-free 5-point Laplacian restricted to fluid cells, stored as the
// diagonal plus the +x / +y couplings (each -1 or 0).
struct PoissonSystem {
  int nx = 0, ny = 0;
  Eigen::ArrayXd diag, plus_i, plus_j;

  void apply(const Eigen::ArrayXd &x, Eigen::ArrayXd &y) const {
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        const int c = j * nx + i;
        double acc = diag[c] * x[c];
        if (i + 1 < nx) acc += plus_i[c] * x[c + 1];
        if (i > 0) acc += plus_i[c - 1] * x[c - 1];
        if (j + 1 < ny) acc += plus_j[c] * x[c + nx];
        if (j > 0) acc += plus_j[c - nx] * x[c - nx];
        y[c] = acc;
      }
    }
  }
};

class MicPreconditioner {
public:
  explicit MicPreconditioner(const PoissonSystem &a) : a_(a) {
    constexpr double tau = 0.97;
    constexpr double sigma = 0.25;
    const int nx = a.nx;
    precon_ = Eigen::ArrayXd::Zero(a.diag.size());
    for (int j = 0; j < a.ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        const int c = j * nx + i;
        if (a.diag[c] <= 0.0) continue;
        double e = a.diag[c];
        if (i > 0) {
          const double pi = a.plus_i[c - 1] * precon_[c - 1];
          e -= pi * pi + tau * a.plus_i[c - 1] * a.plus_j[c - 1] *
                             precon_[c - 1] * precon_[c - 1];
        }
        if (j > 0) {
          const double pj = a.plus_j[c - nx] * precon_[c - nx];
          e -= pj * pj + tau * a.plus_j[c - nx] * a.plus_i[c - nx] *
                             precon_[c - nx] * precon_[c - nx];
        }
        if (e < sigma * a.diag[c]) e = a.diag[c];
        precon_[c] = 1.0 / std::sqrt(e);
      }
    }
  }

  void apply(const Eigen::ArrayXd &r, Eigen::ArrayXd &z) const {
    const int nx = a_.nx, ny = a_.ny;
    Eigen::ArrayXd q = Eigen::ArrayXd::Zero(r.size());
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        const int c = j * nx + i;
        if (a_.diag[c] <= 0.0) continue;
        double t = r[c];
        if (i > 0) t -= a_.plus_i[c - 1] * precon_[c - 1] * q[c - 1];
        if (j > 0) t -= a_.plus_j[c - nx] * precon_[c - nx] * q[c - nx];
        q[c] = t * precon_[c];
      }
    }
    z.setZero(r.size());
    for (int j = ny - 1; j >= 0; --j) {
      for (int i = nx - 1; i >= 0; --i) {
        const int c = j * nx + i;
        if (a_.diag[c] <= 0.0) continue;
        double t = q[c];
        if (i + 1 < nx) t -= a_.plus_i[c] * precon_[c] * z[c + 1];
        if (j + 1 < ny) t -= a_.plus_j[c] * precon_[c] * z[c + nx];
        z[c] = t * precon_[c];
      }
    }
  }

private:
  const PoissonSystem &a_;
  Eigen::ArrayXd precon_;
};

double max_fluid_divergence(const MacVelocity2 &vel, const Occupancy &solids) {
  const Field2 div = divergence(vel);
  double worst = 0.0;
  for (int c = 0; c < div.dims().cells(); ++c)
    if (!is_solid(solids, c)) worst = std::max(worst, std::abs(div.data()[c]));
  return worst;
}

} // namespace

void enforce_boundaries(MacVelocity2 &vel, const Occupancy &solids) {
  const GridDims &d = vel.dims();
  for (int j = 0; j < d.ny; ++j)
    for (int i = 0; i <= d.nx; ++i)
      if (!u_face_open(d, solids, i, j)) vel.u(i, j) = 0.0;
  for (int j = 0; j <= d.ny; ++j)
    for (int i = 0; i < d.nx; ++i)
      if (!v_face_open(d, solids, i, j)) vel.v(i, j) = 0.0;
}

ProjectionResult project(const MacVelocity2 &vel, const Occupancy &solids,
                         double tol, int max_iters) {
  if (!(tol > 0.0)) throw InvalidArgument("projection tolerance must be > 0");
  const GridDims &d = vel.dims();
  const int n = d.cells();

  ProjectionResult result{vel, Field2(d), false, 0, 0.0};
  MacVelocity2 &out = result.velocity;
  enforce_boundaries(out, solids);

  PoissonSystem a{d.nx, d.ny, Eigen::ArrayXd::Zero(n), Eigen::ArrayXd::Zero(n),
                  Eigen::ArrayXd::Zero(n)};
  for (int j = 0; j < d.ny; ++j) {
    for (int i = 0; i < d.nx; ++i) {
      const int c = j * d.nx + i;
      if (is_solid(solids, c)) continue;
      a.diag[c] = u_face_open(d, solids, i, j) + u_face_open(d, solids, i + 1, j) +
                  v_face_open(d, solids, i, j) + v_face_open(d, solids, i, j + 1);
      if (u_face_open(d, solids, i + 1, j)) a.plus_i[c] = -1.0;
      if (v_face_open(d, solids, i, j + 1)) a.plus_j[c] = -1.0;
    }
  }

  const double dx2 = d.dx * d.dx;
  const Field2 div = divergence(out);
  Eigen::ArrayXd b = Eigen::ArrayXd::Zero(n);
  int active = 0;
  for (int c = 0; c < n; ++c) {
    if (a.diag[c] > 0.0) {
      b[c] = -div.data()[c] * dx2;
      ++active;
    }
  }
  // Closed box: the Neumann system is only consistent for zero net source.
  if (active > 0) {
    const double mean = b.sum() / active;
    for (int c = 0; c < n; ++c)
      if (a.diag[c] > 0.0) b[c] -= mean;
  }

  const double target = 0.5 * tol * dx2;
  Eigen::ArrayXd p = Eigen::ArrayXd::Zero(n);
  Eigen::ArrayXd r = b;
  int iters = 0;
  if (r.abs().maxCoeff() > target) {
    MicPreconditioner precon(a);
    Eigen::ArrayXd z(n), s(n);
    precon.apply(r, z);
    s = z;
    double sigma = (z * r).sum();
    while (iters < max_iters) {
      ++iters;
      a.apply(s, z);
      const double denom = (z * s).sum();
      if (denom == 0.0) break;
      const double alpha = sigma / denom;
      p += alpha * s;
      r -= alpha * z;
      if (r.abs().maxCoeff() <= target) break;
      precon.apply(r, z);
      const double sigma_new = (z * r).sum();
      s = z + (sigma_new / sigma) * s;
      sigma = sigma_new;
    }
  }
  result.iterations = iters;

  for (int j = 0; j < d.ny; ++j)
    for (int i = 1; i < d.nx; ++i)
      if (u_face_open(d, solids, i, j))
        out.u(i, j) -= (p[j * d.nx + i] - p[j * d.nx + i - 1]) / d.dx;
  for (int j = 1; j < d.ny; ++j)
    for (int i = 0; i < d.nx; ++i)
      if (v_face_open(d, solids, i, j))
        out.v(i, j) -= (p[j * d.nx + i] - p[(j - 1) * d.nx + i]) / d.dx;

  result.pressure = Field2(d, std::move(p));
  result.max_divergence = max_fluid_divergence(out, solids);
  result.converged = result.max_divergence <= tol;
  return result;
}

std::vector<int> emitter_cells(const SceneConfig &scene,
                               const Occupancy &solids) {
  std::vector<int> cells;
  const GridDims &d = scene.dims;
  for (int j = 0; j < d.ny; ++j)
    for (int i = 0; i < d.nx; ++i)
      if ((cell_center(d, i, j) - scene.emitter.center).norm() <=
              scene.emitter.radius &&
          !is_solid(solids, j * d.nx + i))
        cells.push_back(j * d.nx + i);
  return cells;
}

SimState initial_state(const SceneConfig &scene) {
  scene.validate();
  const GridDims &d = scene.dims;
  SimState state{Field2(d), MacVelocity2(d), Field2(d),
                 make_occupancy(d, scene.obstacle), 0.0, true};
  if (scene.initial_noise > 0.0) {
    SplitMix64 rng(scene.seed);
    for (Eigen::Index k = 0; k < state.velocity.u_data().size(); ++k)
      state.velocity.u_data()[k] = scene.initial_noise * rng.uniform(-1.0, 1.0);
    for (Eigen::Index k = 0; k < state.velocity.v_data().size(); ++k)
      state.velocity.v_data()[k] = scene.initial_noise * rng.uniform(-1.0, 1.0);
    ProjectionResult proj = project(state.velocity, state.solids,
                                    scene.projection_tol,
                                    scene.projection_max_iters);
    state.velocity = std::move(proj.velocity);
    state.pressure = std::move(proj.pressure);
    state.converged = proj.converged;
  }
  return state;
}

SimState step(const SimState &state, const SceneConfig &scene, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("step dt must be > 0");
  const GridDims &d = scene.dims;
  SimState next = state;

  // (1) sources
  for (int c : emitter_cells(scene, next.solids)) {
    double &rho = next.density.data()[c];
    rho = std::min(rho + scene.emitter.rate * dt, scene.density_max);
    if (scene.emitter.mode == EmitterMode::inflow) {
      const int i = c % d.nx, j = c / d.nx;
      next.velocity.v(i, j) = scene.emitter.inflow_speed;
      next.velocity.v(i, j + 1) = scene.emitter.inflow_speed;
    }
  }

  // (2) buoyancy on interior v-faces
  if (scene.buoyancy != 0.0) {
    for (int j = 1; j < d.ny; ++j)
      for (int i = 0; i < d.nx; ++i)
        next.velocity.v(i, j) +=
            dt * scene.buoyancy * 0.5 *
            (next.density(i, j - 1) + next.density(i, j));
  }
  enforce_boundaries(next.velocity, next.solids);

  // (3) self-advection, (4) projection
  const double limit = scene.max_speed();
  next.velocity.u_data() = next.velocity.u_data().max(-limit).min(limit);
  next.velocity.v_data() = next.velocity.v_data().max(-limit).min(limit);
  MacVelocity2 advected = advect_velocity(next.velocity, dt);
  ProjectionResult proj = project(advected, next.solids, scene.projection_tol,
                                  scene.projection_max_iters);
  next.velocity = std::move(proj.velocity);
  next.pressure = std::move(proj.pressure);
  next.converged = proj.converged;
  // Uniform rescaling keeps the field divergence-free.
  const double peak = next.velocity.max_abs();
  if (peak > limit) {
    next.velocity.u_data() *= limit / peak;
    next.velocity.v_data() *= limit / peak;
  }

  // (5) density transport with the divergence-free velocity
  const double mass_before = next.density.sum();
  next.density = advect_semi_lagrangian(next.density, next.velocity, dt);
  for (int c = 0; c < d.cells(); ++c)
    if (is_solid(next.solids, c)) next.density.data()[c] = 0.0;
  const double mass_after = next.density.sum();
  if (mass_after > mass_before && mass_after > 0.0)
    next.density.data() *= mass_before / mass_after;

  next.time = state.time + dt;
  return next;
}

SimSequence generate_scenario(const SceneConfig &scene) {
  scene.validate();
  SimSequence seq;
  seq.stride = scene.substeps_per_frame;
  const int steps = (scene.frames - 1) * scene.substeps_per_frame;
  seq.dense.reserve(steps + 1);
  seq.dense.push_back(initial_state(scene));
  if (!seq.dense.back().converged)
    throw ConvergenceError("initial projection did not converge");
  const double dt = scene.substep_dt();
  for (int s = 0; s < steps; ++s) {
    SimState next = step(seq.dense.back(), scene, dt);
    if (!next.converged)
      throw ConvergenceError("pressure projection did not converge at step " +
                             std::to_string(s + 1) + " (seed " +
                             std::to_string(scene.seed) + ")");
    // Keep the time stamp exact rather than accumulated.
    next.time = (s + 1) * dt;
    seq.dense.push_back(std::move(next));
  }
  return seq;
}

SceneConfig randomize_scene(const SceneConfig &base, std::uint64_t seed) {
  SceneConfig scene = base;
  SplitMix64 rng(seed);
  const double w = base.dims.width();
  const double h = base.dims.height();
  scene.seed = rng.next_u64();
  scene.emitter.radius = rng.uniform(0.06, 0.12) * w;
  scene.emitter.center = {rng.uniform(0.25, 0.75) * w,
                          rng.uniform(0.12, 0.25) * h};
  scene.emitter.center.y() =
      std::max(scene.emitter.center.y(), scene.emitter.radius + base.dims.dx);
  scene.emitter.mode =
      rng.uniform() < 0.5 ? EmitterMode::inflow : EmitterMode::emission;
  scene.obstacle.reset();
  if (rng.uniform() < 0.5) {
    Obstacle ob;
    ob.radius = rng.uniform(0.08, 0.14) * w;
    ob.center = {rng.uniform(0.25, 0.75) * w, rng.uniform(0.45, 0.75) * h};
    const double gap = (ob.center - scene.emitter.center).norm() - ob.radius -
                       scene.emitter.radius;
    if (gap > 2.0 * base.dims.dx) scene.obstacle = ob;
  }
  return scene;
}

} // namespace fluidsformer
