#ifndef FLUIDSFORMER_COMMANDS_HPP_
#define FLUIDSFORMER_COMMANDS_HPP_

#include <cstdint>
#include <filesystem>
#include <string>

namespace fluidsformer::cli {

using std::filesystem::path;

struct SimulateOptions {
  path config;
  std::uint64_t seed = 0;
  path out;
};

struct DatasetOptions {
  path config;
  int count = 0;
  path out;
};

struct TrainOptions {
  path data;
  path train_config;
  path loss_config;
  path out;
};

struct InterpOptions {
  path ckpt;
  path keyframes;
  int substeps = 1;
  path out;
};

struct VariantsOptions {
  path ckpt;
  path keyframes;
  int substeps = 1;
  int k = 1;
  int groups = 1;
  int beam = 1;
  double diversity = 0.0;
  std::uint64_t seed = 0;
  path out;
};

struct CombineOptions {
  path a;
  path b;
  std::string op;
  path out;
};

struct EvalOptions {
  path pred;
  path truth;
  path report;
};

void run_simulate(const SimulateOptions &opt);
void run_dataset(const DatasetOptions &opt);
void run_train(const TrainOptions &opt);
void run_interp(const InterpOptions &opt);
void run_variants(const VariantsOptions &opt);
void run_combine(const CombineOptions &opt);
void run_eval(const EvalOptions &opt);

/// Single-line JSON error record.
std::string error_line(const std::string &code, const std::string &message);

} // namespace fluidsformer::cli

#endif // FLUIDSFORMER_COMMANDS_HPP_
