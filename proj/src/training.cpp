#include "fluidsformer/training.hpp"

#include "fluidsformer/errors.hpp"
#include "fluidsformer/rng.hpp"
#include "fluidsformer/solver.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

namespace fluidsformer {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw InvalidArgument("learning rate must be > 0");
  if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
  if (steps < 1) throw InvalidArgument("step count must be >= 1");
  if (eval_interval < 1) throw InvalidArgument("eval interval must be >= 1");
  if (substep_samples < 1) throw InvalidArgument("substep samples must be >= 1");
  if (variant_weight < 0.0) throw InvalidArgument("variant weight must be >= 0");
  if (threads < 1) throw InvalidArgument("thread count must be >= 1");
  if (val_limit < 0) throw InvalidArgument("validation limit must be >= 0");
  model.validate();
}

DatasetSplit split_dataset(int n, std::uint64_t seed) {
  if (n < 10)
    throw InvalidArgument("need at least 10 scenarios to split, got " +
                          std::to_string(n));
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  SplitMix64 rng(seed);
  for (int k = n - 1; k > 0; --k)
    std::swap(order[k], order[rng.below(static_cast<std::uint64_t>(k) + 1)]);
  const int held = n / 10;
  DatasetSplit split;
  split.val.assign(order.begin(), order.begin() + held);
  split.test.assign(order.begin() + held, order.begin() + 2 * held);
  split.train.assign(order.begin() + 2 * held, order.end());
  for (auto *part : {&split.train, &split.val, &split.test})
    std::sort(part->begin(), part->end());
  return split;
}

ScenarioData scenario_from_sequence(const SimSequence &seq,
                                    const SceneConfig &scene, int id) {
  ScenarioData sc;
  sc.id = id;
  sc.constants = {scene.dt, scene.dims.dx, scene.buoyancy, scene.emitter.rate};
  sc.density_max = scene.density_max;
  sc.stride = seq.stride;
  for (const auto &state : seq.dense) {
    sc.density.push_back(state.density);
    sc.velocity.push_back(state.velocity);
  }
  return sc;
}

Dataset load_dataset(const std::filesystem::path &dir) {
  const Manifest manifest = load_manifest(dir);
  check_manifest(dir, manifest);
  Dataset data;
  for (const auto &s : manifest.scenarios) {
    const auto frames = from_fgs(read_fgs(dir / s.dense_file), s.scene.dims.dx);
    ScenarioData sc;
    sc.id = s.id;
    sc.constants = {s.scene.dt, s.scene.dims.dx, s.scene.buoyancy,
                    s.scene.emitter.rate};
    sc.density_max = s.scene.density_max;
    sc.stride = manifest.keyframe_stride;
    for (const auto &f : frames) {
      if (!f.velocity)
        throw InvalidArgument("dense file of scenario " + std::to_string(s.id) +
                              " has no velocity field");
      sc.density.push_back(f.density);
      sc.velocity.push_back(*f.velocity);
    }
    auto &part = s.split == "train" ? data.train
                 : s.split == "val" ? data.val
                                    : data.test;
    part.push_back(std::move(sc));
  }
  return data;
}

FieldNormalization compute_normalization(const std::vector<ScenarioData> &data) {
  if (data.empty()) throw InvalidArgument("cannot normalize an empty split");
  const double inf = std::numeric_limits<double>::infinity();
  double lo[3] = {inf, inf, inf}, hi[3] = {-inf, -inf, -inf};
  for (const auto &sc : data)
    for (std::size_t f = 0; f < sc.density.size(); ++f) {
      const Field2 ch[3] = {sc.density[f], centered_u(sc.velocity[f]),
                            centered_v(sc.velocity[f])};
      for (int c = 0; c < 3; ++c) {
        lo[c] = std::min(lo[c], ch[c].min());
        hi[c] = std::max(hi[c], ch[c].max());
      }
    }
  return {compute_norm_stats(lo[0], hi[0]), compute_norm_stats(lo[1], hi[1]),
          compute_norm_stats(lo[2], hi[2])};
}

KeyframeFields normalize_keyframe(const Field2 &density,
                                  const MacVelocity2 &velocity,
                                  const FieldNormalization &norm) {
  return {normalize(density, norm.density), normalize(centered_u(velocity), norm.u),
          normalize(centered_v(velocity), norm.v)};
}

IntervalInputs make_interval_inputs(const ScenarioData &sc, int interval,
                                    const FieldNormalization &norm) {
  if (interval < 0 || interval >= sc.interval_count())
    throw InvalidArgument("interval " + std::to_string(interval) +
                          " outside scenario " + std::to_string(sc.id));
  const int a = interval * sc.stride, b = a + sc.stride;
  return {sc.constants, normalize_keyframe(sc.density[a], sc.velocity[a], norm),
          normalize_keyframe(sc.density[b], sc.velocity[b], norm)};
}

template <typename T>
SampleLoss<T> sample_loss(const FluidsFormer<T> &model, ad::Tape<T> &tape,
                          const ScenarioData &sc, int interval, int substep,
                          const FieldNormalization &norm,
                          const LossConfig &loss) {
  if (substep < 1 || substep >= sc.stride)
    throw InvalidArgument("substep " + std::to_string(substep) +
                          " is not strictly inside the interval");
  SampleLoss<T> out;
  out.inputs = make_interval_inputs(sc, interval, norm);
  out.s = static_cast<double>(substep) / sc.stride;
  out.latent = model.encode(tape, out.inputs);
  ad::Var<T> pred = model.predict_density(tape, out.latent, out.s, out.inputs, 0);

  const int a = interval * sc.stride;
  const Field2 &truth = sc.density[a + substep];
  out.target = tape.constant(to_tensor<T>(normalize(truth, norm.density)));
  const Field2 moved =
      advect_semi_lagrangian(sc.density[a], sc.velocity[a], out.s * sc.constants.dt);
  const ad::Var<T> transported = tape.constant(to_tensor<T>(normalize(moved, norm.density)));

  const T delta = static_cast<T>(loss.delta);
  ad::Var<T> h = ad::huber(pred, out.target, delta);
  ad::Var<T> vol = volume_penalty(pred, truth.sum(), norm.density);
  ad::Var<T> adv = ad::huber(pred, transported, delta);
  out.huber = h.value().item();
  out.volume = vol.value().item();
  out.advection = adv.value().item();
  out.total = h + ad::scale(vol, static_cast<T>(loss.lambda_vol)) +
              ad::scale(adv, static_cast<T>(loss.lambda_adv));
  return out;
}

template SampleLoss<float> sample_loss(const FluidsFormer<float> &, ad::Tape<float> &,
                                       const ScenarioData &, int, int,
                                       const FieldNormalization &, const LossConfig &);
template SampleLoss<double> sample_loss(const FluidsFormer<double> &, ad::Tape<double> &,
                                        const ScenarioData &, int, int,
                                        const FieldNormalization &, const LossConfig &);

std::pair<double, double> evaluate(const FluidsFormer<float> &model,
                                   const std::vector<ScenarioData> &data,
                                   const FieldNormalization &norm,
                                   const LossConfig &loss, int limit) {
  double huber_sum = 0.0, mass_sum = 0.0;
  long count = 0;
  int intervals = 0;
  for (const auto &sc : data) {
    for (int k = 0; k < sc.interval_count(); ++k) {
      if (limit > 0 && intervals >= limit) break;
      ++intervals;
      ad::Tape<float> tape;
      tape.set_grad_enabled(false);
      const IntervalInputs inputs = make_interval_inputs(sc, k, norm);
      const auto latent = model.encode(tape, inputs);
      for (int j = 1; j < sc.stride; ++j) {
        const double s = static_cast<double>(j) / sc.stride;
        const auto pred = model.predict_density(tape, latent, s, inputs, 0);
        const Field2 pn = to_field(pred.value(), sc.density[0].dims());
        const Field2 &truth = sc.density[k * sc.stride + j];
        huber_sum += huber_loss(pn, normalize(truth, norm.density), loss.delta);
        mass_sum += volume_penalty(denormalize(pn, norm.density), truth);
        ++count;
      }
    }
  }
  if (count == 0) throw InvalidArgument("validation split has no substeps");
  return {huber_sum / count, mass_sum / count};
}

std::string to_jsonl(const MetricRecord &r) {
  nlohmann::json j = {{"step", r.step},
                      {"train_loss", r.train_loss},
                      {"val_huber", r.val_huber},
                      {"val_mass_err", r.val_mass_err}};
  return j.dump();
}

namespace {

struct Item {
  int scenario;
  int interval;
  int substep;
  bool variant;
  std::uint64_t seed;
};

struct ItemResult {
  double loss = 0.0;
  std::vector<Tensor<float>> grads;
};

/// Winner-take-all codebook term: the best of the canonical code and two
/// random codes is reinforced, and the logits learn to predict the winner.
ad::Var<float> variant_term(const FluidsFormer<float> &model, ad::Tape<float> &tape,
                            const SampleLoss<float> &base, const LossConfig &loss,
                            std::uint64_t seed) {
  const int K = model.config().codebook_k;
  SplitMix64 rng(seed);
  std::vector<int> codes{0};
  const int draws = std::min(2, K - 1);
  while (static_cast<int>(codes.size()) < draws + 1) {
    const int c = 1 + static_cast<int>(rng.below(K - 1));
    if (std::find(codes.begin(), codes.end(), c) == codes.end()) codes.push_back(c);
  }
  std::vector<ad::Var<float>> losses;
  int winner = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < codes.size(); ++m) {
    ad::Var<float> h =
        m == 0 ? ad::Var<float>()
               : ad::huber(model.predict_density(tape, base.latent, base.s,
                                                 base.inputs, codes[m]),
                           base.target, static_cast<float>(loss.delta));
    const double v = m == 0 ? base.huber : h.value().item();
    losses.push_back(h);
    if (v < best) {
      best = v;
      winner = static_cast<int>(m);
    }
  }
  const ad::Var<float> logp = ad::log_softmax(model.variant_logits(tape, base.latent, base.s));
  ad::Var<float> term = ad::scale(ad::sum(ad::slice(logp, 0, codes[winner], 1)), -1.0f);
  if (winner != 0) term = term + losses[winner];
  return term;
}

ItemResult run_item(const FluidsFormer<float> &model, const ScenarioData &sc,
                    const Item &item, const FieldNormalization &norm,
                    const LossConfig &loss, double variant_weight, int step) {
  ad::Tape<float> tape;
  SampleLoss<float> sl =
      sample_loss(model, tape, sc, item.interval, item.substep, norm, loss);
  ad::Var<float> total = sl.total;
  if (item.variant)
    total = total + ad::scale(variant_term(model, tape, sl, loss, item.seed),
                              static_cast<float>(variant_weight));
  ItemResult r;
  r.loss = total.value().item();
  if (!std::isfinite(r.loss)) {
    std::ostringstream msg;
    msg << "non-finite loss at step " << step << " on sample (scenario "
        << sc.id << ", interval " << item.interval << ", substep "
        << item.substep << ")";
    throw NumericalError(msg.str());
  }
  tape.backward(total);
  const auto &params = model.params();
  r.grads.reserve(params.size());
  for (std::size_t k = 0; k < params.size(); ++k)
    r.grads.push_back(tape.grad(tape.parameter(params[k])));
  return r;
}

} // namespace

TrainResult train(const Dataset &data, const TrainConfig &config,
                  const LossConfig &loss, const MetricCallback &on_eval) {
  config.validate();
  loss.validate();
  if (data.train.empty()) throw InvalidArgument("training split is empty");
  if (data.val.empty()) throw InvalidArgument("validation split is empty");
  const GridDims dims = data.train.front().density.front().dims();
  for (const auto *part : {&data.train, &data.val, &data.test})
    for (const auto &sc : *part) {
      if (!(sc.density.front().dims() == dims))
        throw DimensionMismatch("scenario " + std::to_string(sc.id) + " grid " +
                                sc.density.front().dims().to_string() +
                                " differs from " + dims.to_string());
      if (sc.stride < 2)
        throw InvalidArgument("keyframe stride must be >= 2 to supervise substeps");
      if (sc.interval_count() < 1)
        throw InvalidArgument("scenario " + std::to_string(sc.id) +
                              " has no keyframe interval");
    }

  const FieldNormalization norm = compute_normalization(data.train);
  FluidsFormer<float> model(config.model, config.seed);
  auto &params = model.params();
  AdamState<float> adam;
  const AdamConfig adam_config{config.lr, 0.9, 0.999, 1e-8};

  TrainResult result;
  ParameterStore<float> best = params;
  result.best_val = std::numeric_limits<double>::infinity();

  auto record = [&](int step, double train_loss) {
    const auto [vh, vm] = evaluate(model, data.val, norm, loss, config.val_limit);
    MetricRecord rec{step, train_loss, vh, vm};
    result.log.push_back(rec);
    if (on_eval) on_eval(rec);
    if (vh < result.best_val) {
      result.best_val = vh;
      result.best_step = step;
      best = params;
    }
  };

  const bool variants = config.variant_weight > 0.0 && config.model.codebook_k > 1;
  double window = 0.0;
  int window_steps = 0;
  for (int step = 0; step < config.steps; ++step) {
    SplitMix64 rng(derive_seed(config.seed, static_cast<std::uint64_t>(step)));
    std::vector<Item> items;
    for (int b = 0; b < config.batch_size; ++b) {
      const int sc = static_cast<int>(rng.below(data.train.size()));
      const int interval = static_cast<int>(rng.below(data.train[sc].interval_count()));
      for (int q = 0; q < config.substep_samples; ++q) {
        const int j = 1 + static_cast<int>(rng.below(data.train[sc].stride - 1));
        items.push_back({sc, interval, j, variants && items.empty(), rng.next_u64()});
      }
    }

    std::vector<ItemResult> results(items.size());
    auto work = [&](std::size_t first, std::size_t stride) {
      for (std::size_t m = first; m < items.size(); m += stride)
        results[m] = run_item(model, data.train[items[m].scenario], items[m], norm,
                              loss, config.variant_weight, step);
    };
    const std::size_t nthreads =
        std::min<std::size_t>(static_cast<std::size_t>(config.threads), items.size());
    if (nthreads <= 1) {
      work(0, 1);
    } else {
      std::vector<std::exception_ptr> errors(nthreads);
      std::vector<std::thread> pool;
      for (std::size_t t = 0; t < nthreads; ++t)
        pool.emplace_back([&, t] {
          try {
            work(t, nthreads);
          } catch (...) {
            errors[t] = std::current_exception();
          }
        });
      for (auto &th : pool) th.join();
      for (auto &e : errors)
        if (e) std::rethrow_exception(e);
    }

    // fixed-order reduction keeps results independent of the thread count
    std::vector<Tensor<float>> grads = std::move(results.front().grads);
    double step_loss = results.front().loss;
    for (std::size_t m = 1; m < results.size(); ++m) {
      for (std::size_t k = 0; k < grads.size(); ++k)
        grads[k].data() += results[m].grads[k].data();
      step_loss += results[m].loss;
    }
    const float inv = 1.0f / static_cast<float>(results.size());
    for (auto &g : grads) g.data() *= inv;
    step_loss /= static_cast<double>(results.size());

    window += step_loss;
    ++window_steps;
    if (step % config.eval_interval == 0) {
      record(step, window / window_steps);
      window = 0.0;
      window_steps = 0;
    }
    adam_step(params, grads, adam, adam_config);
  }
  record(config.steps, window_steps > 0 ? window / window_steps : result.log.back().train_loss);

  const ScenarioData &first = data.train.front();
  result.checkpoint.model = config.model;
  result.checkpoint.params = std::move(best);
  result.checkpoint.norm = norm;
  result.checkpoint.dims = dims;
  result.checkpoint.constants = first.constants;
  result.checkpoint.density_max = first.density_max;
  return result;
}

} // namespace fluidsformer
