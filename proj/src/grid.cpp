#include "fluidsformer/grid.hpp"

#include "fluidsformer/errors.hpp"

#include <algorithm>
#include <cmath>

namespace fluidsformer {

void GridDims::validate() const {
  if (nx < 4 || ny < 4 || !(dx > 0.0) || !std::isfinite(dx))
    throw InvalidArgument("grid dims must satisfy nx, ny >= 4 and dx > 0, got " +
                          to_string());
}

std::string GridDims::to_string() const {
  return std::to_string(nx) + "x" + std::to_string(ny) +
         " (dx=" + std::to_string(dx) + ")";
}

Field2::Field2(const GridDims &dims, double value)
    : dims_(dims), data_(Eigen::ArrayXd::Constant(dims.cells(), value)) {
  dims_.validate();
}

Field2::Field2(const GridDims &dims, Eigen::ArrayXd data)
    : dims_(dims), data_(std::move(data)) {
  dims_.validate();
  if (data_.size() != dims_.cells())
    throw ShapeError("field data length " + std::to_string(data_.size()) +
                     " does not match grid " + dims_.to_string());
}

MacVelocity2::MacVelocity2(const GridDims &dims)
    : dims_(dims), u_(Eigen::ArrayXd::Zero((dims.nx + 1) * dims.ny)),
      v_(Eigen::ArrayXd::Zero(dims.nx * (dims.ny + 1))) {
  dims_.validate();
}

MacVelocity2::MacVelocity2(const GridDims &dims, Eigen::ArrayXd u,
                           Eigen::ArrayXd v)
    : dims_(dims), u_(std::move(u)), v_(std::move(v)) {
  dims_.validate();
  if (u_.size() != (dims_.nx + 1) * dims_.ny ||
      v_.size() != dims_.nx * (dims_.ny + 1))
    throw ShapeError("staggered velocity arrays do not match grid " +
                     dims_.to_string());
}

double MacVelocity2::max_abs() const {
  return std::max(u_.abs().maxCoeff(), v_.abs().maxCoeff());
}

void NormStats::validate() const {
  if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi))
    throw InvalidArgument("degenerate normalization statistics: lo=" +
                          std::to_string(lo) + " hi=" + std::to_string(hi));
}

BooleanOp parse_boolean_op(std::string_view name) {
  if (name == "add") return BooleanOp::add;
  if (name == "subtract") return BooleanOp::subtract;
  if (name == "intersect") return BooleanOp::intersect;
  throw InvalidArgument("unknown boolean op '" + std::string(name) + "'");
}

std::string_view to_string(BooleanOp op) {
  switch (op) {
  case BooleanOp::add: return "add";
  case BooleanOp::subtract: return "subtract";
  case BooleanOp::intersect: return "intersect";
  }
  return "?";
}

namespace {

// Bilinear lookup on a w x h row-major lattice at fractional lattice
// coordinates; coordinates are clamped to [0, w-1] x [0, h-1].
double bilerp(const Eigen::ArrayXd &data, int w, int h, double fx, double fy) {
  fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
  fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
  const int i0 = std::min(static_cast<int>(fx), w - 2);
  const int j0 = std::min(static_cast<int>(fy), h - 2);
  const double tx = fx - i0;
  const double ty = fy - j0;
  const double *row0 = data.data() + j0 * w + i0;
  const double *row1 = row0 + w;
  const double a = (1.0 - tx) * row0[0] + tx * row0[1];
  const double b = (1.0 - tx) * row1[0] + tx * row1[1];
  return (1.0 - ty) * a + ty * b;
}

} // namespace

double sample_bilinear(const Field2 &field, const Eigen::Vector2d &pos) {
  const double dx = field.dims().dx;
  return bilerp(field.data(), field.nx(), field.ny(), pos.x() / dx - 0.5,
                pos.y() / dx - 0.5);
}

double sample_cells(const Field2 &field, double fi, double fj) {
  return bilerp(field.data(), field.nx(), field.ny(), fi, fj);
}

double sample_u(const MacVelocity2 &vel, const Eigen::Vector2d &pos) {
  const GridDims &d = vel.dims();
  return bilerp(vel.u_data(), d.nx + 1, d.ny, pos.x() / d.dx,
                pos.y() / d.dx - 0.5);
}

double sample_v(const MacVelocity2 &vel, const Eigen::Vector2d &pos) {
  const GridDims &d = vel.dims();
  return bilerp(vel.v_data(), d.nx, d.ny + 1, pos.x() / d.dx - 0.5,
                pos.y() / d.dx);
}

Eigen::Vector2d sample_velocity(const MacVelocity2 &vel,
                                const Eigen::Vector2d &pos) {
  return {sample_u(vel, pos), sample_v(vel, pos)};
}

Field2 centered_u(const MacVelocity2 &vel) {
  Field2 out(vel.dims());
  for (int j = 0; j < out.ny(); ++j)
    for (int i = 0; i < out.nx(); ++i)
      out(i, j) = 0.5 * (vel.u(i, j) + vel.u(i + 1, j));
  return out;
}

Field2 centered_v(const MacVelocity2 &vel) {
  Field2 out(vel.dims());
  for (int j = 0; j < out.ny(); ++j)
    for (int i = 0; i < out.nx(); ++i)
      out(i, j) = 0.5 * (vel.v(i, j) + vel.v(i, j + 1));
  return out;
}

Field2 divergence(const MacVelocity2 &vel) {
  Field2 out(vel.dims());
  const double inv_dx = 1.0 / vel.dims().dx;
  for (int j = 0; j < out.ny(); ++j)
    for (int i = 0; i < out.nx(); ++i)
      out(i, j) = (vel.u(i + 1, j) - vel.u(i, j) + vel.v(i, j + 1) -
                   vel.v(i, j)) *
                  inv_dx;
  return out;
}

Field2 boolean_combine(const Field2 &a, const Field2 &b, BooleanOp op,
                       double rho_max) {
  if (!(a.dims() == b.dims()))
    throw DimensionMismatch("incompatible keyframes: " + a.dims().to_string() +
                            " vs " + b.dims().to_string());
  Eigen::ArrayXd out;
  switch (op) {
  case BooleanOp::add:
    out = (a.data() + b.data()).min(rho_max);
    break;
  case BooleanOp::subtract:
    out = (a.data() - b.data()).max(0.0);
    break;
  case BooleanOp::intersect:
    out = a.data().min(b.data());
    break;
  }
  // Inputs are expected in [0, rho_max]; keep the output there regardless.
  return Field2(a.dims(), out.max(0.0).min(rho_max));
}

Field2 normalize(const Field2 &field, const NormStats &stats) {
  stats.validate();
  const double scale = 2.0 / (stats.hi - stats.lo);
  return Field2(field.dims(), (field.data() - stats.lo) * scale - 1.0);
}

Field2 denormalize(const Field2 &field, const NormStats &stats) {
  stats.validate();
  const double scale = 0.5 * (stats.hi - stats.lo);
  return Field2(field.dims(), (field.data() + 1.0) * scale + stats.lo);
}

NormStats compute_norm_stats(double lo, double hi) {
  if (!(hi > lo)) hi = lo + 1.0;
  return {lo, hi};
}

} // namespace fluidsformer
