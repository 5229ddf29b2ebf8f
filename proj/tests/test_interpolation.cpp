#include "test_util.hpp"

#include "fluidsformer/errors.hpp"
#include "fluidsformer/interpolation.hpp"

#include <doctest.h>

#include <fstream>
#include <set>

using namespace fluidsformer;
using fftest::random_field;

namespace {

ModelConfig tiny_model() {
  ModelConfig c;
  c.d_model = 8;
  c.heads = 2;
  c.enc_layers = 1;
  c.codebook_k = 4;
  c.patch = 4;
  c.decoder_widths = {4, 8};
  c.blocks_per_stage = 1;
  c.ff_mult = 2;
  c.time_dim = 4;
  c.code_dim = 2;
  c.latent_channels = 2;
  return c;
}

Checkpoint make_checkpoint(bool random_head, std::uint64_t seed = 1) {
  const GridDims d{16, 16, 1.0 / 16};
  FluidsFormer<float> model(tiny_model(), seed);
  if (random_head) {
    SplitMix64 rng(seed + 100);
    for (const char *name : {"decoder.head.w", "decoder.head.b"}) {
      auto &t = model.params().at(name);
      for (Index k = 0; k < t.size(); ++k) t[k] = static_cast<float>(rng.uniform(-1, 1));
    }
  }
  Checkpoint c;
  c.model = tiny_model();
  c.params = model.params();
  c.norm = {NormStats{0.0, 1.0}, NormStats{-0.5, 0.5}, NormStats{-0.5, 0.5}};
  c.dims = d;
  c.constants = {0.1, d.dx, 4.0, 2.0};
  return c;
}

InterpRequest simulated_request(int keyframes, int substeps, std::uint64_t seed = 5) {
  SceneConfig s;
  s.dims = {16, 16, 1.0 / 16};
  s.frames = keyframes;
  s.substeps_per_frame = 2;
  s.seed = seed;
  const SimSequence seq = generate_scenario(s);
  InterpRequest req;
  req.substeps = substeps;
  for (std::size_t k = 0; k < seq.keyframe_count(); ++k)
    req.keyframes.push_back({seq.keyframe(k).density, seq.keyframe(k).velocity});
  return req;
}

bool same_density(const OutputFrame &a, const OutputFrame &b) {
  return (a.density.data() == b.density.data()).all();
}

} // namespace

TEST_CASE("substep placement") {
  CHECK(substep_times(2) == std::vector<double>{0.25, 0.75});
  CHECK(substep_times(1) == std::vector<double>{0.5});
  CHECK(substep_times(4) == std::vector<double>{0.125, 0.375, 0.625, 0.875});
  CHECK_THROWS_AS(substep_times(0), InvalidArgument);
}

TEST_CASE("request validation") {
  InterpRequest req = simulated_request(3, 2);
  CHECK_NOTHROW(req.validate(true));
  req.substeps = 0;
  CHECK_THROWS_AS(req.validate(false), InvalidArgument);
  req = simulated_request(3, 2);
  req.keyframes.resize(1);
  CHECK_THROWS_AS(req.validate(false), InvalidArgument);
  req = simulated_request(3, 2);
  req.keyframes[1].velocity.reset();
  CHECK_NOTHROW(req.validate(false));
  CHECK_THROWS_AS(req.validate(true), InvalidArgument);
}

TEST_CASE("canonical interpolation layout") {
  const Interpolator interp(make_checkpoint(true));
  const InterpRequest req = simulated_request(4, 3);
  const FrameSequence out = interpolate(interp, req);
  REQUIRE(out.size() == 3 * 3 + 4);
  for (std::size_t k = 1; k < out.size(); ++k) CHECK(out[k].time > out[k - 1].time);
  int keys = 0;
  for (const auto &f : out)
    if (f.keyframe) {
      CHECK(f.time == double(keys));
      CHECK((f.density.data() == req.keyframes[keys].density.data()).all());
      ++keys;
    }
  CHECK(keys == 4);
  CHECK(out[1].time == doctest::Approx(1.0 / 6.0));
  const FrameSequence again = interpolate(interp, req);
  for (std::size_t k = 0; k < out.size(); ++k) CHECK(same_density(out[k], again[k]));
}

TEST_CASE("zero-initialized residual reproduces linear interpolation") {
  const Interpolator interp(make_checkpoint(false));
  const InterpRequest req = simulated_request(3, 2);
  const FrameSequence model = interpolate(interp, req);
  const FrameSequence linear = baseline_linear(req);
  REQUIRE(model.size() == linear.size());
  for (std::size_t k = 0; k < model.size(); ++k) {
    CHECK(model[k].time == linear[k].time);
    CHECK((model[k].density.data() - linear[k].density.data()).abs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("requests on another grid are rejected") {
  const Interpolator interp(make_checkpoint(false));
  SceneConfig s;
  s.dims = {32, 32, 1.0 / 32};
  s.frames = 2;
  const SimSequence seq = generate_scenario(s);
  InterpRequest req;
  req.keyframes = {{seq.keyframe(0).density, seq.keyframe(0).velocity},
                   {seq.keyframe(1).density, seq.keyframe(1).velocity}};
  CHECK_THROWS_AS(interpolate(interp, req), DimensionMismatch);
}

TEST_CASE("baselines") {
  const GridDims d{8, 8, 0.125};
  SplitMix64 rng(1);
  const Field2 a = random_field(d, rng), b = random_field(d, rng);
  InterpRequest req;
  req.substeps = 1;
  req.keyframes = {{a, MacVelocity2(d)}, {b, MacVelocity2(d)}};
  const FrameSequence lin = baseline_linear(req);
  REQUIRE(lin.size() == 3);
  CHECK(((lin[1].density.data() - 0.5 * (a.data() + b.data())).abs() < 1e-15).all());
  req.substeps = 3;
  const FrameSequence still = baseline_readvect(req, 0.1);
  for (const auto &f : still)
    if (!f.keyframe && f.time < 1.0) CHECK(((f.density.data() - a.data()).abs() < 1e-12).all());

  MacVelocity2 c(d);
  c.u_data().setConstant(1.0);
  req.keyframes[0].velocity = c;
  req.substeps = 2;
  const FrameSequence moved = baseline_readvect(req, 0.2);
  const Field2 oracle = advect_semi_lagrangian(a, c, 0.25 * 0.2);
  CHECK((moved[1].density.data() == oracle.data()).all());
  req.keyframes[0].velocity.reset();
  CHECK_THROWS_AS(baseline_readvect(req, 0.2), InvalidArgument);
}

TEST_CASE("explicit codes") {
  const Interpolator interp(make_checkpoint(true));
  const InterpRequest req = simulated_request(3, 2);
  const FrameSequence canon = interpolate(interp, req);
  const FrameSequence zero = interpolate_with_codes(interp, req, {0, 0, 0, 0});
  for (std::size_t k = 0; k < canon.size(); ++k) CHECK(same_density(canon[k], zero[k]));
  const FrameSequence other = interpolate_with_codes(interp, req, {0, 2, 0, 0});
  CHECK(same_density(other[1], canon[1]));
  CHECK_FALSE(same_density(other[2], canon[2]));
  CHECK(same_density(other[4], canon[4]));
  CHECK_THROWS_AS(interpolate_with_codes(interp, req, {0, 0}), InvalidArgument);
}

TEST_CASE("code log-probabilities") {
  const Interpolator interp(make_checkpoint(true));
  const InterpRequest req = simulated_request(3, 2);
  const auto lp = interp.log_probs(req, 1, substep_times(2));
  REQUIRE(lp.size() == 2);
  for (const auto &v : lp) {
    CHECK(v.size() == 4);
    CHECK(v.array().exp().sum() == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(v.maxCoeff() == v[0]);
  }
}

TEST_CASE("variant tree structure") {
  VariantTree tree(2, 3);
  CHECK(tree.size() == 1);
  CHECK(tree.positions() == 6);
  CHECK(tree.position(0) == -1);
  const int a = tree.add_child(0, 2, -0.5);
  const int b = tree.add_child(a, 1, -0.25);
  CHECK(tree.position(a) == 0);
  CHECK(tree.position(b) == 1);
  CHECK(tree.node(b).interval == 0);
  CHECK(tree.node(b).substep == 1);
  CHECK(tree.child(0, 2) == a);
  CHECK(tree.child(0, 3) == -1);
  CHECK(tree.find_or_add_child(0, 2, -9.0) == a);
  CHECK(tree.path(b) == std::vector<int>{a, b});
  CHECK(tree.codes(b) == std::vector<int>{2, 1, 0, 0, 0, 0});
  CHECK(tree.codes(0) == std::vector<int>(6, 0));
  CHECK(tree.score(b) == doctest::Approx(-0.75));
  CHECK(tree.leaves() == std::vector<int>{b});
  CHECK_THROWS_AS(tree.node(17), InvalidArgument);
  int deep = b;
  for (int k = 0; k < 4; ++k) deep = tree.add_child(deep, 0, 0.0);
  CHECK(tree.node(deep).interval == 1);
  CHECK(tree.node(deep).substep == 2);
  CHECK_THROWS_AS(tree.add_child(deep, 0, 0.0), InvalidArgument);

  const VariantTree back = VariantTree::from_json(tree.to_json());
  CHECK(back.size() == tree.size());
  for (int k = 0; k < static_cast<int>(tree.size()); ++k) {
    CHECK(back.node(k).parent == tree.node(k).parent);
    CHECK(back.node(k).code == tree.node(k).code);
    CHECK(back.node(k).children == tree.node(k).children);
  }
  CHECK_THROWS_AS(VariantTree::from_json(nlohmann::json::object()), InvalidArgument);
}

TEST_CASE("built trees have distinct, consistent leaf paths") {
  const Interpolator interp(make_checkpoint(true));
  const InterpRequest req = simulated_request(3, 2);
  VariantSearch search;
  search.k = 3;
  search.groups = 2;
  search.beam = 2;
  search.diversity = 1.0;
  const VariantTree tree = build_variant_tree(interp, req, search);
  const auto leaves = tree.leaves();
  CHECK(leaves.size() == 4);
  std::set<std::vector<int>> distinct;
  for (int leaf : leaves) {
    distinct.insert(tree.codes(leaf));
    const auto path = tree.path(leaf);
    CHECK(path.size() == 4);
    for (std::size_t k = 0; k < path.size(); ++k) CHECK(tree.position(path[k]) == int(k));
  }
  CHECK(distinct.size() == 4);
  PathMaterializer mat(interp, req);
  for (int leaf : leaves) {
    const FrameSequence frames = mat.materialize(tree, leaf);
    const FrameSequence direct = interpolate_with_codes(interp, req, tree.codes(leaf));
    REQUIRE(frames.size() == direct.size());
    for (std::size_t k = 0; k < frames.size(); ++k) CHECK(same_density(frames[k], direct[k]));
    for (int kf = 0; kf < 3; ++kf)
      CHECK((frames[kf * 3].density.data() == req.keyframes[kf].density.data()).all());
  }
}

TEST_CASE("branching") {
  const Interpolator interp(make_checkpoint(true));
  const InterpRequest req = simulated_request(3, 2);
  SUBCASE("k = 1 at the root reproduces the canonical path") {
    VariantTree tree(req.intervals(), req.substeps);
    const auto ids = branch(tree, interp, req, 0, 1, 77);
    REQUIRE(ids.size() == 4);
    CHECK(tree.codes(ids.back()) == std::vector<int>(4, 0));
    PathMaterializer mat(interp, req);
    const FrameSequence a = mat.materialize(tree, ids.back());
    const FrameSequence b = interpolate(interp, req);
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(same_density(a[k], b[k]));
  }
  SUBCASE("branches share their common prefix") {
    VariantTree tree(req.intervals(), req.substeps);
    const auto first = branch(tree, interp, req, 0, 4, 1);
    const int pivot = first[1]; // position 1: interval 0, substep 1
    const auto second = branch(tree, interp, req, pivot, 4, 2);
    REQUIRE(second.size() == 2);
    CHECK(tree.node(second.front()).parent == pivot);
    PathMaterializer mat(interp, req);
    const FrameSequence a = mat.materialize(tree, first.back());
    const FrameSequence b = mat.materialize(tree, second.back());
    // frames up to and including position 1 (index 2), plus keyframe 1
    for (int k = 0; k <= 3; ++k) CHECK(same_density(a[k], b[k]));
    CHECK(same_density(a[6], b[6]));
    CHECK_THROWS_AS(branch(tree, interp, req, 999, 2, 3), InvalidArgument);
    CHECK_THROWS_AS(branch(tree, interp, req, 0, 5, 3), InvalidArgument);
  }
  SUBCASE("branching is seed-deterministic") {
    VariantTree t1(req.intervals(), req.substeps), t2(req.intervals(), req.substeps);
    const auto a = branch(t1, interp, req, 0, 4, 9);
    const auto b = branch(t2, interp, req, 0, 4, 9);
    CHECK(t1.codes(a.back()) == t2.codes(b.back()));
  }
}

TEST_CASE("variant directory output") {
  const Interpolator interp(make_checkpoint(true));
  const InterpRequest req = simulated_request(3, 2);
  const VariantTree tree = build_variant_tree(interp, req, {3, 2, 2, 1.0, 0});
  PathMaterializer mat(interp, req);
  const auto dir = fftest::scratch_dir("variants");
  write_variant_dir(dir, tree, mat);
  const auto j = nlohmann::json::parse(std::ifstream(dir / "tree.json"));
  REQUIRE(j.at("paths").size() == 4);
  for (const auto &p : j.at("paths")) {
    const FgsFile f = read_fgs(dir / p.at("file").template get<std::string>());
    CHECK(f.frames.size() == 2 * 2 + 3);
    CHECK(p.at("codes").size() == 4);
  }
}

TEST_CASE("combining keyframes") {
  const GridDims d{8, 8, 0.125};
  SplitMix64 rng(2);
  std::vector<FluidFrame> a, b;
  for (int k = 0; k < 3; ++k) {
    a.push_back({random_field(d, rng), fftest::random_velocity(d, rng)});
    b.push_back({random_field(d, rng), fftest::random_velocity(d, rng)});
  }
  const auto out = combine_keyframes(a, b, BooleanOp::add);
  REQUIRE(out.size() == 3);
  for (int k = 0; k < 3; ++k) {
    CHECK((out[k].density.data() ==
           boolean_combine(a[k].density, b[k].density, BooleanOp::add).data())
              .all());
    CHECK((out[k].velocity->u_data() == a[k].velocity->u_data()).all());
  }
  b.pop_back();
  CHECK_THROWS_AS(combine_keyframes(a, b, BooleanOp::add), DimensionMismatch);
}
