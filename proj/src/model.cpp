#include "fluidsformer/model.hpp"

#include "fluidsformer/rng.hpp"

#include <cmath>

namespace fluidsformer {

void ModelConfig::validate() const {
  if (d_model < 1 || heads < 1 || d_model % heads != 0)
    throw InvalidArgument("d_model must be a positive multiple of heads");
  if (enc_layers < 1) throw InvalidArgument("enc_layers must be >= 1");
  if (codebook_k < 2) throw InvalidArgument("codebook_k must be >= 2");
  if (patch < 1) throw InvalidArgument("patch must be >= 1");
  if (decoder_widths.empty() || decoder_widths.size() > 4)
    throw InvalidArgument("decoder_widths must have 1 to 4 stages");
  for (int w : decoder_widths)
    if (w < 1) throw InvalidArgument("decoder widths must be positive");
  if (blocks_per_stage < 1) throw InvalidArgument("blocks_per_stage must be >= 1");
  if (ff_mult < 1) throw InvalidArgument("ff_mult must be >= 1");
  if (time_dim < 2 || time_dim % 2 != 0)
    throw InvalidArgument("time_dim must be even and >= 2");
  if (code_dim < 1 || latent_channels < 1)
    throw InvalidArgument("code_dim and latent_channels must be >= 1");
}

namespace {

constexpr int kFieldChannels = 6; // rho, u, v for both keyframes
constexpr int kEquationTokens = 15 + 1 + kSceneConstantCount;

template <typename T> Tensor<T> uniform_tensor(Shape shape, double bound, SplitMix64 &rng) {
  Tensor<T> t(std::move(shape));
  for (Index k = 0; k < t.size(); ++k) t[k] = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

// Fourier features of a [0, 1] coordinate squeezed into [0, 0.5] so that
// the two ends of the range stay distinguishable under period-1 features.
Eigen::VectorXd half_period_encoding(double t, int d) {
  return time_encoding(0.5 * t, d);
}

template <typename T> Tensor<T> row_tensor(const Eigen::VectorXd &v) {
  return Tensor<T>({1, v.size()}, v.cast<T>());
}

std::string conv_name(std::size_t stage, int block, const char *part) {
  return "decoder.stage" + std::to_string(stage) + ".block" +
         std::to_string(block) + "." + part;
}

} // namespace

template <typename T>
FluidsFormer<T>::FluidsFormer(const ModelConfig &config, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  init_params(seed);
}

template <typename T> void FluidsFormer<T>::init_params(std::uint64_t seed) {
  SplitMix64 rng(seed);
  const ModelConfig &c = config_;
  const Index d = c.d_model;

  auto xavier = [&](const std::string &name, Index fan_in, Index fan_out) {
    params_.add(name, uniform_tensor<T>({fan_in, fan_out},
                                        std::sqrt(6.0 / double(fan_in + fan_out)), rng));
  };
  auto zeros = [&](const std::string &name, Shape shape) {
    params_.add(name, Tensor<T>::zeros(std::move(shape)));
  };
  auto ones = [&](const std::string &name, Index n) {
    params_.add(name, Tensor<T>::constant({n}, T(1)));
  };
  // Kaiming-uniform with negative slope sqrt(5): bound = 1 / sqrt(fan_in).
  auto conv = [&](const std::string &name, Index cout, Index cin, Index k) {
    const double bound = 1.0 / std::sqrt(double(cin * k * k));
    params_.add(name + ".w", uniform_tensor<T>({cout, cin, k, k}, bound, rng));
    params_.add(name + ".b", uniform_tensor<T>({cout}, bound, rng));
  };

  xavier("encoder.tok_embed", kVocabSize, d);
  xavier("encoder.eq_pos", kEquationTokens, d);
  xavier("encoder.num_w", 1, d);
  xavier("encoder.patch_w", 3 * c.patch * c.patch, d);
  zeros("encoder.patch_b", {d});
  xavier("encoder.time_w", c.time_dim, d);
  xavier("encoder.coord_w", 2 * c.time_dim, d);
  for (int l = 0; l < c.enc_layers; ++l) {
    const std::string p = "encoder.layers." + std::to_string(l) + ".";
    ones(p + "ln1.gain", d);
    zeros(p + "ln1.shift", {d});
    for (const char *m : {"q", "k", "v", "o"}) {
      xavier(p + "attn.w" + m, d, d);
      zeros(p + "attn.b" + m, {d});
    }
    ones(p + "ln2.gain", d);
    zeros(p + "ln2.shift", {d});
    xavier(p + "ff.w1", d, c.ff_mult * d);
    zeros(p + "ff.b1", {c.ff_mult * d});
    xavier(p + "ff.w2", c.ff_mult * d, d);
    zeros(p + "ff.b2", {d});
  }
  ones("encoder.ln_f.gain", d);
  zeros("encoder.ln_f.shift", {d});

  const auto &widths = c.decoder_widths;
  const Index p2 = Index(c.patch) * c.patch;
  xavier("decoder.latent_w", d, c.latent_channels * p2);
  zeros("decoder.latent_b", {c.latent_channels * p2});
  xavier("decoder.cond_w", c.time_dim + 1 + c.code_dim + d, widths[0]);
  zeros("decoder.cond_b", {widths[0]});
  conv("decoder.stem", widths[0], kFieldChannels + 2 * c.latent_channels, 7);
  for (std::size_t s = 0; s < widths.size(); ++s) {
    for (int b = 0; b < c.blocks_per_stage; ++b) {
      const int in = (b == 0 && s > 0) ? widths[s - 1] : widths[s];
      conv(conv_name(s, b, "conv1"), widths[s], in, 3);
      conv(conv_name(s, b, "conv2"), widths[s], widths[s], 3);
      if (b == 0 && s > 0) conv(conv_name(s, b, "proj"), widths[s], in, 1);
    }
  }
  for (std::size_t s = widths.size() - 1; s >= 1; --s)
    conv("decoder.up" + std::to_string(s), widths[s - 1],
         widths[s] + widths[s - 1], 3);
  zeros("decoder.head.w", {1, widths[0], 1, 1});
  zeros("decoder.head.b", {1});

  Tensor<T> codes = uniform_tensor<T>({c.codebook_k, c.code_dim}, 1.0, rng);
  codes.matrix().row(0).setZero(); // canonical code, never read
  params_.add("codebook.embed", std::move(codes));
  xavier("codebook.head_w", d + c.time_dim + 1, c.codebook_k - 1);
  zeros("codebook.head_b", {c.codebook_k - 1});
}

template <typename T>
LatentState<T> FluidsFormer<T>::encode(ad::Tape<T> &tape,
                                       const TokenSequence &seq) const {
  using namespace ad;
  const ModelConfig &c = config_;
  const Index d = c.d_model;
  const Index n_eq = static_cast<Index>(seq.ids.size());
  const Index n_data = seq.data_tokens();
  if (n_eq != kEquationTokens)
    throw ShapeError("encode: expected " + std::to_string(kEquationTokens) +
                     " equation tokens, got " + std::to_string(n_eq));
  if (seq.values.size() != seq.ids.size())
    throw ShapeError("encode: token ids and values are misaligned");
  if (n_data == 0 || seq.patch != c.patch ||
      seq.patches.cols() != 3 * Index(c.patch) * c.patch ||
      seq.patches.rows() != n_data)
    throw ShapeError("encode: patch tokens do not match model patch size " +
                     std::to_string(c.patch));

  // equation tokens: symbol table + scalar value map + position
  Tensor<T> values({n_eq, 1});
  for (Index k = 0; k < n_eq; ++k) values[k] = static_cast<T>(seq.values[k]);
  Var<T> eq = embedding_lookup(param(tape, "encoder.tok_embed"), seq.ids);
  eq = eq + matmul(tape.constant(std::move(values)), param(tape, "encoder.num_w"));
  eq = eq + param(tape, "encoder.eq_pos");

  // data tokens: linear patch map + time and tile-coordinate features
  Tensor<T> patches({n_data, seq.patches.cols()});
  patches.matrix() = seq.patches.cast<T>();
  Tensor<T> times({n_data, c.time_dim});
  Tensor<T> coords({n_data, 2 * Index(c.time_dim)});
  for (Index k = 0; k < n_data; ++k) {
    times.matrix().row(k) =
        half_period_encoding(seq.times[k], c.time_dim).cast<T>().transpose();
    coords.matrix().row(k).head(c.time_dim) =
        half_period_encoding((seq.tile_rows[k] + 0.5) / seq.tiles_y, c.time_dim)
            .cast<T>()
            .transpose();
    coords.matrix().row(k).tail(c.time_dim) =
        half_period_encoding((seq.tile_cols[k] + 0.5) / seq.tiles_x, c.time_dim)
            .cast<T>()
            .transpose();
  }
  Var<T> data = add_bias(matmul(tape.constant(std::move(patches)),
                                param(tape, "encoder.patch_w")),
                         param(tape, "encoder.patch_b"));
  data = data + matmul(tape.constant(std::move(times)), param(tape, "encoder.time_w"));
  data = data + matmul(tape.constant(std::move(coords)), param(tape, "encoder.coord_w"));

  LatentState<T> latent;
  Var<T> x = concat<T>({eq, data}, 0);
  const Index dh = d / c.heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
  for (int l = 0; l < c.enc_layers; ++l) {
    const std::string p = "encoder.layers." + std::to_string(l) + ".";
    Var<T> h = layer_norm(x, param(tape, p + "ln1.gain"), param(tape, p + "ln1.shift"));
    auto proj = [&](const char *m) {
      return add_bias(matmul(h, param(tape, p + "attn.w" + m)),
                      param(tape, p + "attn.b" + m));
    };
    Var<T> q = proj("q"), k = proj("k"), v = proj("v");
    std::vector<Var<T>> heads;
    for (int hd = 0; hd < c.heads; ++hd) {
      Var<T> qh = slice(q, 1, hd * dh, dh);
      Var<T> kh = slice(k, 1, hd * dh, dh);
      Var<T> vh = slice(v, 1, hd * dh, dh);
      Var<T> weights = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt));
      latent.attention.push_back(weights);
      heads.push_back(matmul(weights, vh));
    }
    Var<T> attn = add_bias(matmul(concat(heads, 1), param(tape, p + "attn.wo")),
                           param(tape, p + "attn.bo"));
    x = x + attn;
    Var<T> h2 = layer_norm(x, param(tape, p + "ln2.gain"), param(tape, p + "ln2.shift"));
    Var<T> ff = relu(add_bias(matmul(h2, param(tape, p + "ff.w1")),
                              param(tape, p + "ff.b1")));
    ff = add_bias(matmul(ff, param(tape, p + "ff.w2")), param(tape, p + "ff.b2"));
    x = x + ff;
  }
  latent.tokens =
      layer_norm(x, param(tape, "encoder.ln_f.gain"), param(tape, "encoder.ln_f.shift"));
  latent.context = mean_rows(latent.tokens);

  // Project data tokens back onto the grid: [2 * latent_channels, ny, nx].
  const int pch = c.patch, lc = c.latent_channels;
  const Index width = Index(lc) * pch * pch;
  Var<T> tile_feats = add_bias(matmul(slice(latent.tokens, 0, n_eq, n_data),
                                      param(tape, "decoder.latent_w")),
                               param(tape, "decoder.latent_b"));
  const Index nx = Index(seq.tiles_x) * pch, ny = Index(seq.tiles_y) * pch;
  const Index per_frame = Index(seq.tiles_x) * seq.tiles_y;
  if (n_data != 2 * per_frame)
    throw ShapeError("encode: expected two keyframes of tokens");
  std::vector<Index> idx;
  idx.reserve(2 * lc * nx * ny);
  for (int kf = 0; kf < 2; ++kf)
    for (int ch = 0; ch < lc; ++ch)
      for (Index y = 0; y < ny; ++y)
        for (Index xx = 0; xx < nx; ++xx) {
          const Index token = kf * per_frame + (y / pch) * seq.tiles_x + xx / pch;
          const Index col = Index(ch) * pch * pch + (y % pch) * pch + xx % pch;
          idx.push_back(token * width + col);
        }
  latent.spatial = gather(tile_feats, idx, {2 * Index(lc), ny, nx});
  return latent;
}

template <typename T>
LatentState<T> FluidsFormer<T>::encode(ad::Tape<T> &tape,
                                       const IntervalInputs &inputs) const {
  return encode(tape, make_token_sequence(inputs.constants, inputs.first,
                                          inputs.second, config_.patch));
}

template <typename T>
ad::Var<T> FluidsFormer<T>::residual(ad::Tape<T> &tape,
                                     const LatentState<T> &latent, double s,
                                     const IntervalInputs &inputs,
                                     int code) const {
  using namespace ad;
  const ModelConfig &c = config_;
  if (!(s >= 0.0 && s <= 1.0))
    throw InvalidArgument("substep time " + std::to_string(s) +
                          " outside [0, 1]; extrapolation is unsupported");
  if (code < 0 || code >= c.codebook_k)
    throw InvalidArgument("code " + std::to_string(code) + " outside codebook");
  const GridDims &dims = inputs.first.density.dims();
  const Index nx = dims.nx, ny = dims.ny, hw = nx * ny;
  if (latent.spatial.dim(1) != ny || latent.spatial.dim(2) != nx)
    throw ShapeError("residual: latent grid does not match keyframe dims " +
                     dims.to_string());

  Tensor<T> fields({kFieldChannels, ny, nx});
  const Field2 *channels[] = {&inputs.first.density,  &inputs.first.u,
                              &inputs.first.v,        &inputs.second.density,
                              &inputs.second.u,       &inputs.second.v};
  for (int ch = 0; ch < kFieldChannels; ++ch)
    fields.data().segment(ch * hw, hw) = channels[ch]->data().matrix().cast<T>();
  Var<T> x = concat<T>({tape.constant(std::move(fields)), latent.spatial}, 0);

  // Conditioning vector [time features, s, code embedding, context].
  Tensor<T> tfeat({1, c.time_dim + 1});
  tfeat.matrix().row(0).head(c.time_dim) =
      time_encoding(s, c.time_dim).cast<T>().transpose();
  tfeat[c.time_dim] = static_cast<T>(s);
  Var<T> code_vec = code == 0
                        ? tape.constant(Tensor<T>::zeros({1, c.code_dim}))
                        : slice(param(tape, "codebook.embed"), 0, code, 1);
  Var<T> cond = concat<T>({tape.constant(std::move(tfeat)), code_vec,
                           reshape(latent.context, {1, c.d_model})},
                          1);
  Var<T> cond_bias = reshape(add_bias(matmul(cond, param(tape, "decoder.cond_w")),
                                      param(tape, "decoder.cond_b")),
                             {c.decoder_widths[0]});

  auto conv = [&](const Var<T> &in, const std::string &name, int stride, int pad) {
    return conv2d(in, param(tape, name + ".w"), param(tape, name + ".b"), stride, pad);
  };

  x = conv(x, "decoder.stem", 1, 3);
  x = relu(add_channel_bias(x, cond_bias));
  x = max_pool2d(x, 3, 1, 1);

  const auto &widths = c.decoder_widths;
  std::vector<Var<T>> skips;
  for (std::size_t st = 0; st < widths.size(); ++st) {
    for (int b = 0; b < c.blocks_per_stage; ++b) {
      const bool down = b == 0 && st > 0;
      Var<T> y = relu(conv(x, conv_name(st, b, "conv1"), down ? 2 : 1, 1));
      y = conv(y, conv_name(st, b, "conv2"), 1, 1);
      Var<T> shortcut = down ? conv(x, conv_name(st, b, "proj"), 2, 0) : x;
      x = relu(y + shortcut);
    }
    skips.push_back(x);
  }
  for (std::size_t st = widths.size() - 1; st >= 1; --st) {
    const Var<T> &skip = skips[st - 1];
    x = upsample_nearest(x, skip.dim(1), skip.dim(2));
    x = relu(conv(concat<T>({x, skip}, 0), "decoder.up" + std::to_string(st), 1, 1));
  }
  Var<T> r = tanh(conv(x, "decoder.head", 1, 0));
  return reshape(r, {ny, nx});
}

template <typename T>
ad::Var<T> FluidsFormer<T>::predict_density(ad::Tape<T> &tape,
                                            const LatentState<T> &latent,
                                            double s,
                                            const IntervalInputs &inputs,
                                            int code) const {
  using namespace ad;
  ad::Var<T> r = residual(tape, latent, s, inputs, code);
  const GridDims &dims = inputs.first.density.dims();
  const T a = static_cast<T>(1.0 - s), b = static_cast<T>(s);
  Tensor<T> base({dims.ny, dims.nx});
  base.data() = a * inputs.first.density.data().matrix().cast<T>() +
                b * inputs.second.density.data().matrix().cast<T>();
  return tape.constant(std::move(base)) +
         scale(r, static_cast<T>(blend_weight(s)));
}

template <typename T>
ad::Var<T> FluidsFormer<T>::variant_logits(ad::Tape<T> &tape,
                                           const LatentState<T> &latent,
                                           double s) const {
  using namespace ad;
  const ModelConfig &c = config_;
  if (!(s >= 0.0 && s <= 1.0))
    throw InvalidArgument("substep time " + std::to_string(s) + " outside [0, 1]");
  Tensor<T> tfeat({1, c.time_dim + 1});
  tfeat.matrix().row(0).head(c.time_dim) =
      time_encoding(s, c.time_dim).cast<T>().transpose();
  tfeat[c.time_dim] = static_cast<T>(s);
  Var<T> h = concat<T>({reshape(latent.context, {1, c.d_model}),
                        tape.constant(std::move(tfeat))},
                       1);
  Var<T> raw = add_bias(matmul(h, param(tape, "codebook.head_w")),
                        param(tape, "codebook.head_b"));
  Var<T> logits = concat<T>({tape.constant(Tensor<T>::zeros({1, 1})),
                             scale(softplus(raw), T(-1))},
                            1);
  return reshape(logits, {c.codebook_k});
}

template <typename T> Field2 to_field(const Tensor<T> &t, const GridDims &dims) {
  if (t.size() != dims.cells())
    throw ShapeError("tensor " + shape_string(t.shape()) +
                     " does not match grid " + dims.to_string());
  return Field2(dims, t.data().template cast<double>().array());
}

template <typename T> Tensor<T> to_tensor(const Field2 &f) {
  return Tensor<T>({f.ny(), f.nx()}, f.data().matrix().cast<T>());
}

template class FluidsFormer<float>;
template class FluidsFormer<double>;
template Field2 to_field(const Tensor<float> &, const GridDims &);
template Field2 to_field(const Tensor<double> &, const GridDims &);
template Tensor<float> to_tensor(const Field2 &);
template Tensor<double> to_tensor(const Field2 &);

} // namespace fluidsformer
