#include "fluidsformer/commands.hpp"

#include "fluidsformer/config.hpp"
#include "fluidsformer/errors.hpp"
#include "fluidsformer/formats.hpp"
#include "fluidsformer/interpolation.hpp"
#include "fluidsformer/metrics.hpp"
#include "fluidsformer/rng.hpp"
#include "fluidsformer/solver.hpp"
#include "fluidsformer/tokenizer.hpp"
#include "fluidsformer/training.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

namespace fluidsformer::cli {

namespace fs = std::filesystem;

namespace {

std::vector<FluidFrame> dense_frames(const SimSequence &seq) {
  std::vector<FluidFrame> out;
  for (const auto &s : seq.dense) out.push_back({s.density, s.velocity});
  return out;
}

std::vector<FluidFrame> keyframes(const SimSequence &seq) {
  std::vector<FluidFrame> out;
  for (std::size_t k = 0; k < seq.keyframe_count(); ++k)
    out.push_back({seq.keyframe(k).density, seq.keyframe(k).velocity});
  return out;
}

InterpRequest load_request(const path &file, const Checkpoint &ckpt, int substeps) {
  InterpRequest req;
  req.keyframes = from_fgs(read_fgs(file), ckpt.dims.dx);
  req.substeps = substeps;
  return req;
}

// Split assignment is drawn from its own stream, not a scenario stream.
constexpr std::uint64_t kSplitStream = 0x5ca1ab1eULL;

} // namespace

std::string error_line(const std::string &code, const std::string &message) {
  return nlohmann::json{{"error", code}, {"message", message}}.dump();
}

void run_simulate(const SimulateOptions &opt) {
  SceneConfig scene = scene_from_json(read_json(opt.config));
  scene.seed = opt.seed;
  const SimSequence seq = generate_scenario(scene);
  fs::create_directories(opt.out);
  write_fgs(opt.out / "dense.fgs", to_fgs(dense_frames(seq)));
  write_fgs(opt.out / "keyframes.fgs", to_fgs(keyframes(seq)));
  write_json(opt.out / "scene.json", to_json(scene));
}

void run_dataset(const DatasetOptions &opt) {
  if (opt.count < 1) throw InvalidArgument("scenario count must be >= 1");
  const SceneConfig base = scene_from_json(read_json(opt.config));
  const DatasetSplit split =
      split_dataset(opt.count, derive_seed(base.seed, kSplitStream));
  std::vector<std::string> assignment(opt.count);
  for (int i : split.train) assignment[i] = "train";
  for (int i : split.val) assignment[i] = "val";
  for (int i : split.test) assignment[i] = "test";

  Manifest manifest;
  manifest.equation = std::string(kCanonicalEquation);
  manifest.base = base;
  manifest.seed = base.seed;
  manifest.keyframe_stride = base.substeps_per_frame;
  manifest.scenarios.resize(opt.count);
  fs::create_directories(opt.out);

  // scenarios are independent; each worker owns a disjoint index set
  std::vector<std::exception_ptr> errors(opt.count);
  auto work = [&](int first, int step) {
    for (int i = first; i < opt.count; i += step) {
      try {
        ManifestScenario &sc = manifest.scenarios[i];
        sc.id = i;
        sc.seed = derive_seed(base.seed, static_cast<std::uint64_t>(i));
        sc.scene = randomize_scene(base, sc.seed);
        sc.split = assignment[i];
        char dir[32];
        std::snprintf(dir, sizeof dir, "scenario_%04d", i);
        sc.dense_file = std::string(dir) + "/dense.fgs";
        sc.keyframe_file = std::string(dir) + "/keyframes.fgs";
        const SimSequence seq = generate_scenario(sc.scene);
        write_fgs(opt.out / sc.dense_file, to_fgs(dense_frames(seq)));
        write_fgs(opt.out / sc.keyframe_file, to_fgs(keyframes(seq)));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int workers = std::clamp<int>(
      static_cast<int>(std::thread::hardware_concurrency()), 1, opt.count);
  std::vector<std::thread> pool;
  for (int t = 1; t < workers; ++t) pool.emplace_back(work, t, workers);
  work(0, workers);
  for (auto &th : pool) th.join();
  for (auto &e : errors)
    if (e) std::rethrow_exception(e);
  save_manifest(opt.out, manifest);
}

void run_train(const TrainOptions &opt) {
  const TrainConfig config = train_from_json(read_json(opt.train_config));
  const LossConfig loss = loss_from_json(read_json(opt.loss_config));
  const Dataset data = load_dataset(opt.data);
  path log_path = opt.out;
  log_path += ".metrics.jsonl";
  if (log_path.has_parent_path()) fs::create_directories(log_path.parent_path());
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw IoError("cannot write '" + log_path.string() + "'");
  const TrainResult result = train(data, config, loss, [&](const MetricRecord &r) {
    const std::string line = to_jsonl(r);
    log << line << '\n' << std::flush;
    std::cout << line << '\n' << std::flush;
  });
  save_checkpoint(opt.out, result.checkpoint);
}

void run_interp(const InterpOptions &opt) {
  Interpolator interp(load_checkpoint(opt.ckpt));
  const InterpRequest req = load_request(opt.keyframes, interp.checkpoint(), opt.substeps);
  write_fgs(opt.out, to_fgs(to_fluid_frames(interpolate(interp, req))));
}

void run_variants(const VariantsOptions &opt) {
  Interpolator interp(load_checkpoint(opt.ckpt));
  const InterpRequest req = load_request(opt.keyframes, interp.checkpoint(), opt.substeps);
  if (opt.groups < 1 || opt.beam < 1)
    throw InvalidArgument("groups and beam width must be >= 1");
  const VariantSearch search{opt.k, opt.groups, opt.beam, opt.diversity, opt.seed};
  const VariantTree tree = build_variant_tree(interp, req, search);
  PathMaterializer materializer(interp, req);
  write_variant_dir(opt.out, tree, materializer);
}

void run_combine(const CombineOptions &opt) {
  const BooleanOp op = parse_boolean_op(opt.op);
  const auto a = from_fgs(read_fgs(opt.a));
  const auto b = from_fgs(read_fgs(opt.b));
  write_fgs(opt.out, to_fgs(combine_keyframes(a, b, op)));
}

void run_eval(const EvalOptions &opt) {
  const MetricsReport report = eval_metrics(read_fgs(opt.pred), read_fgs(opt.truth));
  const nlohmann::json j = report.to_json();
  write_json(opt.report, j);
  std::cout << nlohmann::json{{"mean", j["mean"]}, {"max", j["max"]}}.dump() << '\n';
}

} // namespace fluidsformer::cli
