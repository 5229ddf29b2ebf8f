#include "fluidsformer/config.hpp"

#include "fluidsformer/errors.hpp"

#include <fstream>
#include <set>

namespace fluidsformer {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown(const json &j, const std::set<std::string> &known,
                    const std::string &what) {
  if (!j.is_object()) throw InvalidArgument(what + " config must be a JSON object");
  for (const auto &item : j.items())
    if (!known.count(item.key()))
      throw InvalidArgument("unknown " + what + " config key '" + item.key() + "'");
}

template <typename V> void read_opt(const json &j, const char *key, V &out) {
  if (j.contains(key)) out = j.at(key).get<V>();
}

Eigen::Vector2d vec2(const json &j) {
  if (!j.is_array() || j.size() != 2)
    throw InvalidArgument("expected a 2-element array, got " + j.dump());
  return {j[0].get<double>(), j[1].get<double>()};
}

template <typename F> auto guarded(const std::string &what, F &&f) {
  try {
    return f();
  } catch (const json::exception &e) {
    throw InvalidArgument("invalid " + what + " config: " + e.what());
  }
}

} // namespace

json to_json(const SceneConfig &s) {
  json j = {{"nx", s.dims.nx},
            {"ny", s.dims.ny},
            {"dx", s.dims.dx},
            {"dt", s.dt},
            {"substeps_per_frame", s.substeps_per_frame},
            {"frames", s.frames},
            {"buoyancy", s.buoyancy},
            {"seed", s.seed},
            {"initial_noise", s.initial_noise},
            {"density_max", s.density_max},
            {"projection_tol", s.projection_tol},
            {"projection_max_iters", s.projection_max_iters},
            {"emitter",
             {{"center", {s.emitter.center.x(), s.emitter.center.y()}},
              {"radius", s.emitter.radius},
              {"rate", s.emitter.rate},
              {"mode", std::string(to_string(s.emitter.mode))},
              {"inflow_speed", s.emitter.inflow_speed}}}};
  if (s.obstacle)
    j["obstacle"] = {{"center", {s.obstacle->center.x(), s.obstacle->center.y()}},
                     {"radius", s.obstacle->radius}};
  else
    j["obstacle"] = nullptr;
  return j;
}

SceneConfig scene_from_json(const json &j) {
  return guarded("scene", [&] {
    reject_unknown(j,
                   {"nx", "ny", "dx", "dt", "substeps_per_frame", "frames",
                    "buoyancy", "seed", "initial_noise", "density_max",
                    "projection_tol", "projection_max_iters", "emitter",
                    "obstacle"},
                   "scene");
    SceneConfig s;
    read_opt(j, "nx", s.dims.nx);
    read_opt(j, "ny", s.dims.ny);
    // unit-width domain unless dx is given
    s.dims.dx = 1.0 / s.dims.nx;
    read_opt(j, "dx", s.dims.dx);
    read_opt(j, "dt", s.dt);
    read_opt(j, "substeps_per_frame", s.substeps_per_frame);
    read_opt(j, "frames", s.frames);
    read_opt(j, "buoyancy", s.buoyancy);
    read_opt(j, "seed", s.seed);
    read_opt(j, "initial_noise", s.initial_noise);
    read_opt(j, "density_max", s.density_max);
    read_opt(j, "projection_tol", s.projection_tol);
    read_opt(j, "projection_max_iters", s.projection_max_iters);
    if (j.contains("emitter")) {
      const json &e = j.at("emitter");
      reject_unknown(e, {"center", "radius", "rate", "mode", "inflow_speed"},
                     "emitter");
      if (e.contains("center")) s.emitter.center = vec2(e.at("center"));
      read_opt(e, "radius", s.emitter.radius);
      read_opt(e, "rate", s.emitter.rate);
      if (e.contains("mode"))
        s.emitter.mode = parse_emitter_mode(e.at("mode").get<std::string>());
      read_opt(e, "inflow_speed", s.emitter.inflow_speed);
    }
    if (j.contains("obstacle") && !j.at("obstacle").is_null()) {
      const json &o = j.at("obstacle");
      reject_unknown(o, {"center", "radius"}, "obstacle");
      Obstacle ob;
      if (o.contains("center")) ob.center = vec2(o.at("center"));
      read_opt(o, "radius", ob.radius);
      s.obstacle = ob;
    }
    s.validate();
    return s;
  });
}

json to_json(const ModelConfig &m) {
  return {{"d_model", m.d_model},
          {"heads", m.heads},
          {"enc_layers", m.enc_layers},
          {"codebook_k", m.codebook_k},
          {"patch", m.patch},
          {"decoder_widths", m.decoder_widths},
          {"blocks_per_stage", m.blocks_per_stage},
          {"ff_mult", m.ff_mult},
          {"time_dim", m.time_dim},
          {"code_dim", m.code_dim},
          {"latent_channels", m.latent_channels}};
}

ModelConfig model_from_json(const json &j) {
  return guarded("model", [&] {
    reject_unknown(j,
                   {"d_model", "heads", "enc_layers", "codebook_k", "patch",
                    "decoder_widths", "blocks_per_stage", "ff_mult", "time_dim",
                    "code_dim", "latent_channels"},
                   "model");
    ModelConfig m;
    read_opt(j, "d_model", m.d_model);
    read_opt(j, "heads", m.heads);
    read_opt(j, "enc_layers", m.enc_layers);
    read_opt(j, "codebook_k", m.codebook_k);
    read_opt(j, "patch", m.patch);
    read_opt(j, "decoder_widths", m.decoder_widths);
    read_opt(j, "blocks_per_stage", m.blocks_per_stage);
    read_opt(j, "ff_mult", m.ff_mult);
    read_opt(j, "time_dim", m.time_dim);
    read_opt(j, "code_dim", m.code_dim);
    read_opt(j, "latent_channels", m.latent_channels);
    m.validate();
    return m;
  });
}

json to_json(const TrainConfig &t) {
  return {{"lr", t.lr},
          {"batch_size", t.batch_size},
          {"steps", t.steps},
          {"seed", t.seed},
          {"eval_interval", t.eval_interval},
          {"substep_samples", t.substep_samples},
          {"variant_weight", t.variant_weight},
          {"threads", t.threads},
          {"val_limit", t.val_limit},
          {"model", to_json(t.model)}};
}

TrainConfig train_from_json(const json &j) {
  return guarded("train", [&] {
    reject_unknown(j,
                   {"lr", "batch_size", "steps", "seed", "eval_interval",
                    "substep_samples", "variant_weight", "threads", "val_limit",
                    "model"},
                   "train");
    TrainConfig t;
    read_opt(j, "lr", t.lr);
    read_opt(j, "batch_size", t.batch_size);
    read_opt(j, "steps", t.steps);
    read_opt(j, "seed", t.seed);
    read_opt(j, "eval_interval", t.eval_interval);
    read_opt(j, "substep_samples", t.substep_samples);
    read_opt(j, "variant_weight", t.variant_weight);
    read_opt(j, "threads", t.threads);
    read_opt(j, "val_limit", t.val_limit);
    if (j.contains("model")) t.model = model_from_json(j.at("model"));
    t.validate();
    return t;
  });
}

json to_json(const LossConfig &l) {
  return {{"delta", l.delta}, {"lambda_vol", l.lambda_vol}, {"lambda_adv", l.lambda_adv}};
}

LossConfig loss_from_json(const json &j) {
  return guarded("loss", [&] {
    reject_unknown(j, {"delta", "lambda_vol", "lambda_adv"}, "loss");
    LossConfig l;
    read_opt(j, "delta", l.delta);
    read_opt(j, "lambda_vol", l.lambda_vol);
    read_opt(j, "lambda_adv", l.lambda_adv);
    l.validate();
    return l;
  });
}

json read_json(const fs::path &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  try {
    return json::parse(in);
  } catch (const json::exception &e) {
    throw InvalidArgument("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_json(const fs::path &path, const json &j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

} // namespace fluidsformer
