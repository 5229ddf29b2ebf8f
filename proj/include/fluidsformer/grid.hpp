#ifndef FLUIDSFORMER_GRID_HPP_
#define FLUIDSFORMER_GRID_HPP_

#include <Eigen/Core>

#include <string>
#include <string_view>

namespace fluidsformer {

/// Uniform square-cell grid. Cell (i, j) has its center at
/// ((i + 0.5) dx, (j + 0.5) dx); j indexes rows (the y axis).
struct GridDims {
  int nx = 0;
  int ny = 0;
  double dx = 1.0;

  int cells() const { return nx * ny; }
  double width() const { return nx * dx; }
  double height() const { return ny * dx; }
  void validate() const;
  std::string to_string() const;

  friend bool operator==(const GridDims &, const GridDims &) = default;
};

/// Cell-centered scalar field, row-major (index j * nx + i).
class Field2 {
public:
  Field2() = default;
  explicit Field2(const GridDims &dims, double value = 0.0);
  Field2(const GridDims &dims, Eigen::ArrayXd data);

  const GridDims &dims() const { return dims_; }
  int nx() const { return dims_.nx; }
  int ny() const { return dims_.ny; }

  double &operator()(int i, int j) { return data_[j * dims_.nx + i]; }
  double operator()(int i, int j) const { return data_[j * dims_.nx + i]; }

  Eigen::ArrayXd &data() { return data_; }
  const Eigen::ArrayXd &data() const { return data_; }

  double sum() const { return data_.sum(); }
  double min() const { return data_.minCoeff(); }
  double max() const { return data_.maxCoeff(); }
  bool all_finite() const { return data_.allFinite(); }

private:
  GridDims dims_;
  Eigen::ArrayXd data_;
};

/// MAC-staggered velocity. u(i, j) lives on the x-face at (i dx, (j+0.5) dx)
/// for i in [0, nx]; v(i, j) on the y-face at ((i+0.5) dx, j dx) for j in
/// [0, ny]. Both arrays are row-major.
class MacVelocity2 {
public:
  MacVelocity2() = default;
  explicit MacVelocity2(const GridDims &dims);
  MacVelocity2(const GridDims &dims, Eigen::ArrayXd u, Eigen::ArrayXd v);

  const GridDims &dims() const { return dims_; }

  double &u(int i, int j) { return u_[j * (dims_.nx + 1) + i]; }
  double u(int i, int j) const { return u_[j * (dims_.nx + 1) + i]; }
  double &v(int i, int j) { return v_[j * dims_.nx + i]; }
  double v(int i, int j) const { return v_[j * dims_.nx + i]; }

  Eigen::ArrayXd &u_data() { return u_; }
  const Eigen::ArrayXd &u_data() const { return u_; }
  Eigen::ArrayXd &v_data() { return v_; }
  const Eigen::ArrayXd &v_data() const { return v_; }

  /// Largest absolute face velocity.
  double max_abs() const;
  bool all_finite() const { return u_.allFinite() && v_.allFinite(); }

private:
  GridDims dims_;
  Eigen::ArrayXd u_;
  Eigen::ArrayXd v_;
};

/// Affine range of one field; maps [lo, hi] onto [-1, 1].
struct NormStats {
  double lo = 0.0;
  double hi = 1.0;

  void validate() const;
  double normalize(double x) const { return 2.0 * (x - lo) / (hi - lo) - 1.0; }
  double denormalize(double y) const { return lo + 0.5 * (y + 1.0) * (hi - lo); }
};

/// Statistics for every field the model sees.
struct FieldNormalization {
  NormStats density;
  NormStats u;
  NormStats v;
};

enum class BooleanOp { add, subtract, intersect };

BooleanOp parse_boolean_op(std::string_view name);
std::string_view to_string(BooleanOp op);

/// Bilinear interpolation of cell-center values at a world-space point.
/// The point is clamped to the rectangle spanned by the outer cell centers.
double sample_bilinear(const Field2 &field, const Eigen::Vector2d &pos);
/// Same lookup at fractional cell indices; (i, j) is the center of cell
/// (i, j), so integer arguments return stored values exactly.
double sample_cells(const Field2 &field, double fi, double fj);

/// Staggered-component samplers with the same clamping rule.
double sample_u(const MacVelocity2 &vel, const Eigen::Vector2d &pos);
double sample_v(const MacVelocity2 &vel, const Eigen::Vector2d &pos);
Eigen::Vector2d sample_velocity(const MacVelocity2 &vel,
                                const Eigen::Vector2d &pos);

/// Face velocities averaged to cell centers.
Field2 centered_u(const MacVelocity2 &vel);
Field2 centered_v(const MacVelocity2 &vel);

inline Eigen::Vector2d cell_center(const GridDims &dims, int i, int j) {
  return {(i + 0.5) * dims.dx, (j + 0.5) * dims.dx};
}

Field2 divergence(const MacVelocity2 &vel);

/// Throws DimensionMismatch when the fields do not share dims.
Field2 boolean_combine(const Field2 &a, const Field2 &b, BooleanOp op,
                       double rho_max = 1.0);

Field2 normalize(const Field2 &field, const NormStats &stats);
Field2 denormalize(const Field2 &field, const NormStats &stats);

/// Min/max over the given values; widens a degenerate range by one unit so
/// that the result always satisfies hi > lo.
NormStats compute_norm_stats(double lo, double hi);

} // namespace fluidsformer

#endif // FLUIDSFORMER_GRID_HPP_
