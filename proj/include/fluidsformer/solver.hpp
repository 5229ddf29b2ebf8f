#ifndef FLUIDSFORMER_SOLVER_HPP_
#define FLUIDSFORMER_SOLVER_HPP_

#include "fluidsformer/grid.hpp"

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace fluidsformer {

/// Per-cell solid flags (1 = solid). An empty vector means no solids.
using Occupancy = std::vector<std::uint8_t>;

enum class EmitterMode {
  inflow,   ///< density source that also drives the emitter faces upward
  emission, ///< density source only; motion comes from buoyancy
};

EmitterMode parse_emitter_mode(std::string_view name);
std::string_view to_string(EmitterMode mode);

struct Emitter {
  Eigen::Vector2d center{0.5, 0.15};
  double radius = 0.08;
  double rate = 2.0; ///< density per unit time added to each emitter cell
  EmitterMode mode = EmitterMode::inflow;
  double inflow_speed = 0.5;
};

struct Obstacle {
  Eigen::Vector2d center{0.5, 0.6};
  double radius = 0.1;
};

struct SceneConfig {
  GridDims dims{64, 64, 1.0 / 64.0};
  double dt = 0.1; ///< keyframe timestep
  int substeps_per_frame = 4;
  int frames = 50;
  Emitter emitter;
  double buoyancy = 4.0;
  std::optional<Obstacle> obstacle;
  std::uint64_t seed = 0;
  double initial_noise = 0.05; ///< amplitude of the seeded initial velocity
  double density_max = 1.0;
  double projection_tol = 1e-5;
  int projection_max_iters = 400;

  double substep_dt() const { return dt / substeps_per_frame; }
  /// Face speeds are capped so that one keyframe interval moves at most
  /// two cells; this keeps keyframe-scale re-advection within its CFL limit.
  double max_speed() const { return 2.0 * dims.dx / dt; }
  void validate() const;
};

struct SimState {
  Field2 density;
  MacVelocity2 velocity;
  Field2 pressure;
  Occupancy solids;
  double time = 0.0;
  bool converged = true;
};

struct ProjectionResult {
  MacVelocity2 velocity;
  Field2 pressure;
  bool converged = false;
  int iterations = 0;
  double max_divergence = 0.0; ///< L-infinity over fluid cells
};

struct SimSequence {
  std::vector<SimState> dense;
  int stride = 1; ///< dense steps per keyframe interval

  std::size_t keyframe_count() const { return (dense.size() - 1) / stride + 1; }
  const SimState &keyframe(std::size_t k) const { return dense[k * stride]; }
};

Occupancy make_occupancy(const GridDims &dims,
                         const std::optional<Obstacle> &obstacle);

inline bool is_solid(const Occupancy &solids, int cell) {
  return !solids.empty() && solids[cell] != 0;
}

/// dt * max|u| / dx using face velocities.
double cfl_number(const MacVelocity2 &vel, double dt);

/// First-order semi-Lagrangian transport of a cell-centered field.
/// Throws InvalidArgument if the CFL number exceeds 2.
Field2 advect_semi_lagrangian(const Field2 &field, const MacVelocity2 &vel,
                              double dt);

/// Self-advection of the staggered velocity (walls stay untouched).
MacVelocity2 advect_velocity(const MacVelocity2 &vel, double dt);

/// Zeroes the normal component on domain walls and on faces touching solids.
void enforce_boundaries(MacVelocity2 &vel, const Occupancy &solids);

/// Pressure projection by MIC(0)-preconditioned conjugate gradient on the
/// 5-point Poisson stencil with free-slip walls.
ProjectionResult project(const MacVelocity2 &vel, const Occupancy &solids,
                         double tol, int max_iters);

/// Cells whose centers lie inside the emitter disc and outside solids.
std::vector<int> emitter_cells(const SceneConfig &scene,
                               const Occupancy &solids);

SimState initial_state(const SceneConfig &scene);

/// One operator-split step: inject, buoyancy, advect velocity, project,
/// advect density.
SimState step(const SimState &state, const SceneConfig &scene, double dt);

/// Dense substep sequence with keyframes every `substeps_per_frame` steps.
/// Throws ConvergenceError if any projection fails to converge.
SimSequence generate_scenario(const SceneConfig &scene);

/// Draws emitter placement, emitter mode, optional obstacle and noise seed
/// for dataset scenario generation.
SceneConfig randomize_scene(const SceneConfig &base, std::uint64_t seed);

} // namespace fluidsformer

#endif // FLUIDSFORMER_SOLVER_HPP_
