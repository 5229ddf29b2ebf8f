#ifndef FLUIDSFORMER_TOKENIZER_HPP_
#define FLUIDSFORMER_TOKENIZER_HPP_

#include "fluidsformer/grid.hpp"

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fluidsformer {

/// Frozen equation vocabulary. The numeric ids are part of the checkpoint
/// contract and must never be reordered.
enum class Symbol : int {
  rho = 0,
  partial,
  partial_t,
  velocity,
  dot,
  nabla,
  pressure,
  equals,
  minus,
  lparen,
  rparen,
  plus,
  num,
  pad,
  sep,
};

inline constexpr int kVocabSize = 15;
inline constexpr int kSceneConstantCount = 4;
inline constexpr std::string_view kCanonicalEquation =
    "rho*(du/dt + u.grad(u)) = -grad(p)";

std::string_view symbol_name(Symbol s);
Symbol symbol_from_name(std::string_view name);

/// The inviscid momentum equation as a fixed symbol sequence.
const std::vector<Symbol> &momentum_equation_symbols();

struct SceneConstants {
  double dt = 0.1;
  double dx = 1.0 / 64.0;
  double buoyancy = 4.0;
  double emitter_rate = 2.0;
};

struct EquationTokens {
  std::vector<int> ids;
  std::vector<double> values; ///< payload of NUM tokens, 0 elsewhere
};

/// Equation symbols, SEP, then one NUM token per scene constant.
EquationTokens tokenize_equation(const SceneConstants &constants);

/// Renders the equation portion of `ids` (up to SEP) as text.
std::string detokenize(std::span<const int> ids);

/// Normalized keyframe channels the tokenizer tiles: density and the
/// cell-centered velocity components, all in [-1, 1].
struct KeyframeFields {
  Field2 density;
  Field2 u;
  Field2 v;
};

using RowMatrixXd =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Splits the three channels into patch x patch tiles (tile-row major).
/// Each row holds density, then u, then v, each patch^2 values row-major.
RowMatrixXd tile_fields(const KeyframeFields &fields, int patch);
KeyframeFields untile_fields(const RowMatrixXd &tiles, const GridDims &dims,
                             int patch);

struct TokenSequence {
  std::vector<int> ids;
  std::vector<double> values;
  RowMatrixXd patches;        ///< one row per data token, 3 * patch^2 wide
  std::vector<int> tile_rows; ///< per data token
  std::vector<int> tile_cols;
  std::vector<double> times; ///< keyframe time within the interval, in [0, 1]
  int patch = 0;
  int tiles_x = 0;
  int tiles_y = 0;

  int data_tokens() const { return static_cast<int>(times.size()); }
};

/// Data tokens for a keyframe pair: all tiles of the first keyframe at
/// t = 0 followed by all tiles of the second at t = 1.
TokenSequence embed_fields(const KeyframeFields &first,
                           const KeyframeFields &second, int patch);

/// Equation tokens plus data tokens for one keyframe interval.
TokenSequence make_token_sequence(const SceneConstants &constants,
                                  const KeyframeFields &first,
                                  const KeyframeFields &second, int patch);

/// Fourier features [sin(2 pi 2^k t), cos(2 pi 2^k t)] for k < d/2,
/// interleaved as (sin, cos) pairs.
Eigen::VectorXd time_encoding(double t, int d);

} // namespace fluidsformer

#endif // FLUIDSFORMER_TOKENIZER_HPP_
