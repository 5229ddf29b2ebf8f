#include "fluidsformer/tokenizer.hpp"

#include "fluidsformer/errors.hpp"

#include <cmath>
#include <numbers>

namespace fluidsformer {

namespace {

constexpr std::array<std::string_view, kVocabSize> kSymbolNames = {
    "rho", "partial", "partial_t", "u", "dot", "nabla", "p", "=",
    "-",   "(",       ")",         "+", "NUM", "PAD",  "SEP"};

} // namespace

std::string_view symbol_name(Symbol s) {
  return kSymbolNames.at(static_cast<std::size_t>(s));
}

Symbol symbol_from_name(std::string_view name) {
  for (std::size_t k = 0; k < kSymbolNames.size(); ++k)
    if (kSymbolNames[k] == name) return static_cast<Symbol>(k);
  throw InvalidArgument("unknown equation symbol '" + std::string(name) + "'");
}

const std::vector<Symbol> &momentum_equation_symbols() {
  using S = Symbol;
  // rho ( d u dt + u . grad u ) = - grad p
  static const std::vector<Symbol> symbols = {
      S::rho,      S::lparen, S::partial, S::velocity, S::partial_t,
      S::plus,     S::velocity, S::dot,   S::nabla,    S::velocity,
      S::rparen,   S::equals, S::minus,   S::nabla,    S::pressure};
  return symbols;
}

EquationTokens tokenize_equation(const SceneConstants &constants) {
  EquationTokens tokens;
  for (Symbol s : momentum_equation_symbols()) {
    tokens.ids.push_back(static_cast<int>(s));
    tokens.values.push_back(0.0);
  }
  tokens.ids.push_back(static_cast<int>(Symbol::sep));
  tokens.values.push_back(0.0);
  for (double value : {constants.dt, constants.dx, constants.buoyancy,
                       constants.emitter_rate}) {
    tokens.ids.push_back(static_cast<int>(Symbol::num));
    tokens.values.push_back(value);
  }
  return tokens;
}

std::string detokenize(std::span<const int> ids) {
  std::string out;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (ids[k] < 0 || ids[k] >= kVocabSize)
      throw InvalidArgument("token id " + std::to_string(ids[k]) +
                            " outside the vocabulary");
    const auto s = static_cast<Symbol>(ids[k]);
    if (s == Symbol::sep) break;
    switch (s) {
    case Symbol::rho: out += "rho"; break;
    case Symbol::lparen:
      // juxtaposition with a preceding factor is a product
      if (!out.empty() && out.back() != '(' && out.back() != ' ') out += '*';
      out += '(';
      break;
    case Symbol::rparen: out += ')'; break;
    case Symbol::partial: out += 'd'; break;
    case Symbol::partial_t: out += "/dt"; break;
    case Symbol::velocity: out += 'u'; break;
    case Symbol::pressure: out += 'p'; break;
    case Symbol::dot: out += '.'; break;
    case Symbol::plus: out += " + "; break;
    case Symbol::equals: out += " = "; break;
    case Symbol::minus: out += '-'; break;
    case Symbol::nabla: {
      // the gradient applies to the following operand
      if (k + 1 >= ids.size())
        throw InvalidArgument("gradient symbol without operand");
      const int operand[] = {ids[++k]};
      out += "grad(" + detokenize(operand) + ")";
      break;
    }
    case Symbol::num: out += "NUM"; break;
    case Symbol::pad: break;
    case Symbol::sep: break;
    }
  }
  return out;
}

RowMatrixXd tile_fields(const KeyframeFields &fields, int patch) {
  const GridDims &d = fields.density.dims();
  if (!(fields.u.dims() == d) || !(fields.v.dims() == d))
    throw DimensionMismatch("keyframe channels have different dims");
  if (patch < 1 || d.nx % patch != 0 || d.ny % patch != 0)
    throw InvalidArgument("patch size " + std::to_string(patch) +
                          " does not divide grid " + d.to_string());
  const int tx = d.nx / patch, ty = d.ny / patch, p2 = patch * patch;
  RowMatrixXd tiles(tx * ty, 3 * p2);
  const Field2 *channels[] = {&fields.density, &fields.u, &fields.v};
  for (int r = 0; r < ty; ++r)
    for (int c = 0; c < tx; ++c)
      for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < patch; ++y)
          for (int x = 0; x < patch; ++x)
            tiles(r * tx + c, ch * p2 + y * patch + x) =
                (*channels[ch])(c * patch + x, r * patch + y);
  return tiles;
}

KeyframeFields untile_fields(const RowMatrixXd &tiles, const GridDims &dims,
                             int patch) {
  if (patch < 1 || dims.nx % patch != 0 || dims.ny % patch != 0)
    throw InvalidArgument("patch size " + std::to_string(patch) +
                          " does not divide grid " + dims.to_string());
  const int tx = dims.nx / patch, ty = dims.ny / patch, p2 = patch * patch;
  if (tiles.rows() != tx * ty || tiles.cols() != 3 * p2)
    throw ShapeError("tile matrix does not match grid " + dims.to_string());
  KeyframeFields out{Field2(dims), Field2(dims), Field2(dims)};
  Field2 *channels[] = {&out.density, &out.u, &out.v};
  for (int r = 0; r < ty; ++r)
    for (int c = 0; c < tx; ++c)
      for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < patch; ++y)
          for (int x = 0; x < patch; ++x)
            (*channels[ch])(c * patch + x, r * patch + y) =
                tiles(r * tx + c, ch * p2 + y * patch + x);
  return out;
}

TokenSequence embed_fields(const KeyframeFields &first,
                           const KeyframeFields &second, int patch) {
  if (!(first.density.dims() == second.density.dims()))
    throw DimensionMismatch("keyframes have different dims: " +
                            first.density.dims().to_string() + " vs " +
                            second.density.dims().to_string());
  const RowMatrixXd a = tile_fields(first, patch);
  const RowMatrixXd b = tile_fields(second, patch);
  TokenSequence seq;
  seq.patch = patch;
  seq.tiles_x = first.density.nx() / patch;
  seq.tiles_y = first.density.ny() / patch;
  seq.patches.resize(a.rows() + b.rows(), a.cols());
  seq.patches << a, b;
  for (int k = 0; k < 2; ++k)
    for (int t = 0; t < a.rows(); ++t) {
      seq.tile_rows.push_back(t / seq.tiles_x);
      seq.tile_cols.push_back(t % seq.tiles_x);
      seq.times.push_back(static_cast<double>(k));
    }
  return seq;
}

TokenSequence make_token_sequence(const SceneConstants &constants,
                                  const KeyframeFields &first,
                                  const KeyframeFields &second, int patch) {
  TokenSequence seq = embed_fields(first, second, patch);
  EquationTokens eq = tokenize_equation(constants);
  seq.ids = std::move(eq.ids);
  seq.values = std::move(eq.values);
  return seq;
}

Eigen::VectorXd time_encoding(double t, int d) {
  if (d < 2 || d % 2 != 0)
    throw InvalidArgument("time encoding width must be even and >= 2, got " +
                          std::to_string(d));
  Eigen::VectorXd out(d);
  double freq = 1.0;
  for (int k = 0; k < d / 2; ++k, freq *= 2.0) {
    const double phase = 2.0 * std::numbers::pi * freq * t;
    out[2 * k] = std::sin(phase);
    out[2 * k + 1] = std::cos(phase);
  }
  return out;
}

} // namespace fluidsformer
