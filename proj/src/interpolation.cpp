#include "fluidsformer/interpolation.hpp"

#include "fluidsformer/errors.hpp"
#include "fluidsformer/solver.hpp"
#include "fluidsformer/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace fluidsformer {

void InterpRequest::validate(bool need_velocity) const {
  if (keyframes.size() < 2)
    throw InvalidArgument("interpolation needs at least 2 keyframes, got " +
                          std::to_string(keyframes.size()));
  if (substeps < 1)
    throw InvalidArgument("substep count must be >= 1, got " + std::to_string(substeps));
  const GridDims &d = keyframes.front().density.dims();
  for (std::size_t k = 0; k < keyframes.size(); ++k) {
    if (!(keyframes[k].density.dims() == d))
      throw DimensionMismatch("keyframe " + std::to_string(k) + " grid differs");
    if (need_velocity && !keyframes[k].velocity)
      throw InvalidArgument("keyframe " + std::to_string(k) + " has no velocity");
    if (keyframes[k].velocity && !(keyframes[k].velocity->dims() == d))
      throw DimensionMismatch("keyframe " + std::to_string(k) + " velocity grid differs");
  }
}

std::vector<double> substep_times(int substeps) {
  if (substeps < 1)
    throw InvalidArgument("substep count must be >= 1, got " + std::to_string(substeps));
  std::vector<double> s(substeps);
  for (int i = 0; i < substeps; ++i) s[i] = (i + 0.5) / substeps;
  return s;
}

std::vector<FluidFrame> to_fluid_frames(const FrameSequence &frames) {
  std::vector<FluidFrame> out;
  out.reserve(frames.size());
  for (const auto &f : frames) out.push_back({f.density, std::nullopt});
  return out;
}

FluidsFormer<float> model_from_checkpoint(const Checkpoint &ckpt) {
  FluidsFormer<float> model(ckpt.model, 0);
  auto &params = model.params();
  if (params.size() != ckpt.params.size())
    throw IntegrityError("checkpoint holds " + std::to_string(ckpt.params.size()) +
                         " parameters, model expects " + std::to_string(params.size()));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const std::string &name = params.name(k);
    if (!ckpt.params.contains(name))
      throw IntegrityError("checkpoint is missing parameter '" + name + "'");
    const Tensor<float> &src = ckpt.params.at(name);
    if (src.shape() != params[k].shape())
      throw IntegrityError("checkpoint parameter '" + name + "' has shape " +
                           shape_string(src.shape()) + ", expected " +
                           shape_string(params[k].shape()));
    params[k] = src;
  }
  return model;
}

Interpolator::Interpolator(Checkpoint checkpoint)
    : ckpt_(std::move(checkpoint)), model_(model_from_checkpoint(ckpt_)) {}

void Interpolator::check(const InterpRequest &req) const {
  req.validate(true);
  const GridDims &d = req.keyframes.front().density.dims();
  if (d.nx != ckpt_.dims.nx || d.ny != ckpt_.dims.ny)
    throw DimensionMismatch("keyframe grid " + d.to_string() +
                            " differs from the trained grid " + ckpt_.dims.to_string());
}

namespace {

IntervalInputs request_inputs(const Checkpoint &ckpt, const InterpRequest &req,
                              int interval) {
  if (interval < 0 || interval >= req.intervals())
    throw InvalidArgument("interval " + std::to_string(interval) + " out of range");
  const FluidFrame &a = req.keyframes[interval];
  const FluidFrame &b = req.keyframes[interval + 1];
  return {ckpt.constants, normalize_keyframe(a.density, *a.velocity, ckpt.norm),
          normalize_keyframe(b.density, *b.velocity, ckpt.norm)};
}

} // namespace

std::vector<Field2> Interpolator::predict(const InterpRequest &req, int interval,
                                          const std::vector<double> &times,
                                          const std::vector<int> &codes) const {
  check(req);
  if (times.size() != codes.size())
    throw InvalidArgument("one code per query time is required");
  const IntervalInputs inputs = request_inputs(ckpt_, req, interval);
  ad::Tape<float> tape;
  tape.set_grad_enabled(false);
  const auto latent = model_.encode(tape, inputs);
  const GridDims &d = req.keyframes.front().density.dims();
  std::vector<Field2> out;
  for (std::size_t m = 0; m < times.size(); ++m) {
    const auto pred = model_.predict_density(tape, latent, times[m], inputs, codes[m]);
    out.push_back(denormalize(to_field(pred.value(), d), ckpt_.norm.density));
  }
  return out;
}

std::vector<Eigen::VectorXd>
Interpolator::log_probs(const InterpRequest &req, int interval,
                        const std::vector<double> &times) const {
  check(req);
  const IntervalInputs inputs = request_inputs(ckpt_, req, interval);
  ad::Tape<float> tape;
  tape.set_grad_enabled(false);
  const auto latent = model_.encode(tape, inputs);
  std::vector<Eigen::VectorXd> out;
  for (double s : times) {
    const auto lp = ad::log_softmax(model_.variant_logits(tape, latent, s));
    out.push_back(lp.value().data().cast<double>());
  }
  return out;
}

FrameSequence interpolate_with_codes(const Interpolator &interp,
                                     const InterpRequest &req,
                                     const std::vector<int> &codes) {
  interp.check(req);
  const int S = req.substeps;
  if (static_cast<int>(codes.size()) != req.intervals() * S)
    throw InvalidArgument("expected " + std::to_string(req.intervals() * S) +
                          " codes, got " + std::to_string(codes.size()));
  const std::vector<double> times = substep_times(S);
  FrameSequence out;
  for (int k = 0; k < req.intervals(); ++k) {
    out.push_back({double(k), req.keyframes[k].density, true});
    const std::vector<int> interval_codes(codes.begin() + k * S,
                                          codes.begin() + (k + 1) * S);
    auto preds = interp.predict(req, k, times, interval_codes);
    for (int i = 0; i < S; ++i) out.push_back({k + times[i], std::move(preds[i]), false});
  }
  out.push_back({double(req.intervals()), req.keyframes.back().density, true});
  return out;
}

FrameSequence interpolate(const Interpolator &interp, const InterpRequest &req) {
  return interpolate_with_codes(
      interp, req, std::vector<int>(static_cast<std::size_t>(req.intervals()) * req.substeps, 0));
}

namespace {

template <typename F>
FrameSequence baseline(const InterpRequest &req, F &&make) {
  const std::vector<double> times = substep_times(req.substeps);
  FrameSequence out;
  for (int k = 0; k < req.intervals(); ++k) {
    out.push_back({double(k), req.keyframes[k].density, true});
    for (double s : times) out.push_back({k + s, make(k, s), false});
  }
  out.push_back({double(req.intervals()), req.keyframes.back().density, true});
  return out;
}

} // namespace

FrameSequence baseline_linear(const InterpRequest &req) {
  req.validate(false);
  return baseline(req, [&](int k, double s) {
    const Field2 &a = req.keyframes[k].density;
    const Field2 &b = req.keyframes[k + 1].density;
    return Field2(a.dims(), (1.0 - s) * a.data() + s * b.data());
  });
}

FrameSequence baseline_readvect(const InterpRequest &req, double dt) {
  req.validate(true);
  if (!(dt > 0.0)) throw InvalidArgument("re-advection needs dt > 0");
  return baseline(req, [&](int k, double s) {
    return advect_semi_lagrangian(req.keyframes[k].density,
                                  *req.keyframes[k].velocity, s * dt);
  });
}

// ---- variant tree ----------------------------------------------------------

VariantTree::VariantTree(int intervals, int substeps)
    : intervals_(intervals), substeps_(substeps) {
  if (intervals < 1 || substeps < 1)
    throw InvalidArgument("variant tree needs >= 1 interval and substep");
  nodes_.push_back(VariantNode{});
}

const VariantNode &VariantTree::node(int id) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size()))
    throw InvalidArgument("unknown variant node id " + std::to_string(id));
  return nodes_[id];
}

int VariantTree::position(int id) const {
  const VariantNode &n = node(id);
  return n.interval < 0 ? -1 : n.interval * substeps_ + n.substep;
}

int VariantTree::child(int parent, int code) const {
  for (int c : node(parent).children)
    if (nodes_[c].code == code) return c;
  return -1;
}

int VariantTree::add_child(int parent, int code, double log_prob) {
  const int pos = position(parent) + 1;
  if (pos >= positions())
    throw InvalidArgument("variant node " + std::to_string(parent) +
                          " is already at the last substep");
  VariantNode n;
  n.id = static_cast<int>(nodes_.size());
  n.parent = parent;
  n.interval = pos / substeps_;
  n.substep = pos % substeps_;
  n.code = code;
  n.log_prob = log_prob;
  nodes_.push_back(n);
  nodes_[parent].children.push_back(n.id);
  return n.id;
}

int VariantTree::find_or_add_child(int parent, int code, double log_prob) {
  const int c = child(parent, code);
  return c >= 0 ? c : add_child(parent, code, log_prob);
}

std::vector<int> VariantTree::path(int id) const {
  std::vector<int> out;
  for (int n = id; node(n).parent >= 0; n = nodes_[n].parent) out.push_back(n);
  return {out.rbegin(), out.rend()};
}

std::vector<int> VariantTree::codes(int id) const {
  std::vector<int> out(positions(), 0);
  for (int n : path(id)) out[position(n)] = nodes_[n].code;
  return out;
}

double VariantTree::score(int id) const {
  double s = 0.0;
  for (int n : path(id)) s += nodes_[n].log_prob;
  return s;
}

std::vector<int> VariantTree::leaves() const {
  std::vector<int> out;
  for (const auto &n : nodes_)
    if (n.children.empty()) out.push_back(n.id);
  return out;
}

nlohmann::json VariantTree::to_json() const {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto &n : nodes_)
    nodes.push_back({{"id", n.id},
                     {"parent", n.parent},
                     {"interval", n.interval},
                     {"substep", n.substep},
                     {"code", n.code},
                     {"log_prob", n.log_prob},
                     {"children", n.children}});
  return {{"intervals", intervals_}, {"substeps", substeps_}, {"nodes", std::move(nodes)}};
}

VariantTree VariantTree::from_json(const nlohmann::json &j) {
  try {
    VariantTree tree(j.at("intervals").get<int>(), j.at("substeps").get<int>());
    const auto &nodes = j.at("nodes");
    if (nodes.empty() || nodes[0].at("parent").get<int>() != -1)
      throw InvalidArgument("variant tree has no root");
    for (std::size_t k = 1; k < nodes.size(); ++k) {
      const auto &n = nodes[k];
      const int id = tree.add_child(n.at("parent").get<int>(), n.at("code").get<int>(),
                                    n.at("log_prob").get<double>());
      if (id != n.at("id").get<int>() ||
          tree.node(id).interval != n.at("interval").get<int>() ||
          tree.node(id).substep != n.at("substep").get<int>())
        throw InvalidArgument("variant tree node " + std::to_string(k) +
                              " is inconsistent with its parent");
    }
    return tree;
  } catch (const nlohmann::json::exception &e) {
    throw InvalidArgument(std::string("malformed variant tree: ") + e.what());
  }
}

VariantTree build_variant_tree(const Interpolator &interp, const InterpRequest &req,
                               const VariantSearch &search) {
  interp.check(req);
  const int K = interp.checkpoint().model.codebook_k;
  if (search.k < 1 || search.k > K)
    throw InvalidArgument("k must be in [1, " + std::to_string(K) + "]");
  const int S = req.substeps;
  const std::vector<double> times = substep_times(S);

  std::vector<std::vector<BeamResult>> per_interval;
  std::vector<std::vector<Eigen::VectorXd>> logps;
  for (int k = 0; k < req.intervals(); ++k) {
    auto lp = interp.log_probs(req, k, times);
    std::vector<std::vector<bool>> allowed(S, std::vector<bool>(K, false));
    for (int i = 0; i < S; ++i)
      for (int c : top_k_indices({lp[i].data(), static_cast<std::size_t>(K)}, search.k))
        allowed[i][c] = true;
    const StepScorer scorer = [&](int t, std::span<const int>, int code) {
      return allowed[t][code] ? lp[t][code] : -std::numeric_limits<double>::infinity();
    };
    per_interval.push_back(diverse_beam_search(
        scorer, {K, S, search.groups, search.beam, search.diversity}));
    logps.push_back(std::move(lp));
  }

  VariantTree tree(req.intervals(), S);
  const int paths = search.groups * search.beam;
  for (int p = 0; p < paths; ++p) {
    int node = 0;
    for (int k = 0; k < req.intervals(); ++k) {
      const auto &results = per_interval[k];
      const auto &seq = results[p % results.size()].codes;
      for (int i = 0; i < S; ++i)
        node = tree.find_or_add_child(node, seq[i], logps[k][i][seq[i]]);
    }
  }
  return tree;
}

std::vector<int> branch(VariantTree &tree, const Interpolator &interp,
                        const InterpRequest &req, int node, int k,
                        std::uint64_t seed) {
  interp.check(req);
  const int K = interp.checkpoint().model.codebook_k;
  if (k < 1 || k > K) throw InvalidArgument("k must be in [1, " + std::to_string(K) + "]");
  if (tree.intervals() != req.intervals() || tree.substeps() != req.substeps)
    throw InvalidArgument("variant tree does not match the request");
  tree.node(node);
  const int S = req.substeps;
  const std::vector<double> times = substep_times(S);
  SplitMix64 rng(seed);
  std::vector<int> created;
  int cur = node;
  int interval_cached = -1;
  std::vector<Eigen::VectorXd> lp;
  for (int pos = tree.position(node) + 1; pos < tree.positions(); ++pos) {
    const int interval = pos / S, i = pos % S;
    if (interval != interval_cached) {
      lp = interp.log_probs(req, interval, times);
      interval_cached = interval;
    }
    const int code =
        top_k_sample({lp[i].data(), static_cast<std::size_t>(K)}, k, 1.0, rng);
    cur = tree.add_child(cur, code, lp[i][code]);
    created.push_back(cur);
  }
  return created;
}

PathMaterializer::PathMaterializer(const Interpolator &interp, const InterpRequest &req)
    : interp_(interp), req_(req) {
  interp_.check(req_);
}

FrameSequence PathMaterializer::materialize(const VariantTree &tree, int node) {
  if (tree.intervals() != req_.intervals() || tree.substeps() != req_.substeps)
    throw InvalidArgument("variant tree does not match the request");
  const std::vector<int> codes = tree.codes(node);
  const int S = req_.substeps;
  const std::vector<double> times = substep_times(S);
  FrameSequence out;
  for (int k = 0; k < req_.intervals(); ++k) {
    out.push_back({double(k), req_.keyframes[k].density, true});
    std::vector<double> missing_t;
    std::vector<int> missing_c;
    for (int i = 0; i < S; ++i)
      if (!cache_.count({k * S + i, codes[k * S + i]})) {
        missing_t.push_back(times[i]);
        missing_c.push_back(codes[k * S + i]);
      }
    if (!missing_t.empty()) {
      auto preds = interp_.predict(req_, k, missing_t, missing_c);
      for (std::size_t m = 0, i = 0; i < static_cast<std::size_t>(S); ++i) {
        const std::pair<int, int> key{k * S + int(i), codes[k * S + i]};
        if (!cache_.count(key)) cache_.emplace(key, std::move(preds[m++]));
      }
    }
    for (int i = 0; i < S; ++i)
      out.push_back({k + times[i], cache_.at({k * S + i, codes[k * S + i]}), false});
  }
  out.push_back({double(req_.intervals()), req_.keyframes.back().density, true});
  return out;
}

void write_variant_dir(const std::filesystem::path &dir, const VariantTree &tree,
                       PathMaterializer &materializer) {
  std::filesystem::create_directories(dir);
  nlohmann::json j = tree.to_json();
  nlohmann::json paths = nlohmann::json::array();
  int index = 0;
  for (int leaf : tree.leaves()) {
    char name[32];
    std::snprintf(name, sizeof name, "path_%03d.fgs", index++);
    const auto frames = to_fluid_frames(materializer.materialize(tree, leaf));
    write_fgs(dir / name, to_fgs(frames));
    paths.push_back({{"leaf", leaf},
                     {"file", name},
                     {"codes", tree.codes(leaf)},
                     {"score", tree.score(leaf)}});
  }
  j["paths"] = std::move(paths);
  std::ofstream out(dir / "tree.json", std::ios::trunc);
  if (!out) throw IoError("cannot write '" + (dir / "tree.json").string() + "'");
  out << j.dump(2) << '\n';
}

std::vector<FluidFrame> combine_keyframes(const std::vector<FluidFrame> &a,
                                          const std::vector<FluidFrame> &b,
                                          BooleanOp op, double rho_max) {
  if (a.size() != b.size())
    throw DimensionMismatch("cannot combine sequences of " + std::to_string(a.size()) +
                            " and " + std::to_string(b.size()) + " frames");
  std::vector<FluidFrame> out;
  for (std::size_t k = 0; k < a.size(); ++k)
    out.push_back({boolean_combine(a[k].density, b[k].density, op, rho_max), a[k].velocity});
  return out;
}

} // namespace fluidsformer
