#ifndef FLUIDSFORMER_FORMATS_HPP_
#define FLUIDSFORMER_FORMATS_HPP_

#include "fluidsformer/grid.hpp"
#include "fluidsformer/model.hpp"
#include "fluidsformer/solver.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fluidsformer {

inline constexpr std::uint32_t kFgsVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// One named field of a grid sequence: 1 component = cell-centered scalar,
/// 2 components = MAC vector (u faces, then v faces).
struct FgsField {
  std::string name;
  int components = 1;
  friend bool operator==(const FgsField &, const FgsField &) = default;
};

/// Fluid grid sequence: fixed field layout, frame-major float32 payload.
struct FgsFile {
  int nx = 0;
  int ny = 0;
  std::vector<FgsField> fields;
  std::vector<std::vector<float>> frames; ///< each frame_floats() long

  std::size_t field_floats(std::size_t field) const;
  std::size_t field_offset(std::size_t field) const;
  std::size_t frame_floats() const;
  /// Index of the named field, or -1.
  int find_field(std::string_view name) const;
  void validate() const;

  friend bool operator==(const FgsFile &, const FgsFile &) = default;
};

std::vector<std::uint8_t> encode_fgs(const FgsFile &file);
FgsFile decode_fgs(std::span<const std::uint8_t> bytes);
void write_fgs(const std::filesystem::path &path, const FgsFile &file);
FgsFile read_fgs(const std::filesystem::path &path);

/// A density frame with an optional staggered velocity.
struct FluidFrame {
  Field2 density;
  std::optional<MacVelocity2> velocity;
};

/// Packs frames as a "density" field plus a "velocity" field when every
/// frame carries one.
FgsFile to_fgs(std::span<const FluidFrame> frames);
/// Unpacks "density" (required) and "velocity" (optional). A dx of 0 means
/// a unit-width domain, dx = 1 / nx.
std::vector<FluidFrame> from_fgs(const FgsFile &file, double dx = 0.0);

/// Trained model with everything needed to run it on new keyframes.
struct Checkpoint {
  ModelConfig model;
  ParameterStore<float> params;
  FieldNormalization norm;
  GridDims dims;
  SceneConstants constants;
  double density_max = 1.0;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint &ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path &path, const Checkpoint &ckpt);
Checkpoint load_checkpoint(const std::filesystem::path &path);

std::vector<std::uint8_t> read_file(const std::filesystem::path &path);
void write_file(const std::filesystem::path &path,
                std::span<const std::uint8_t> bytes);

/// Dataset description stored as manifest.json next to its FGS files.
struct ManifestScenario {
  int id = 0;
  std::uint64_t seed = 0;
  SceneConfig scene;
  std::string split; ///< "train", "val" or "test"
  std::string dense_file;
  std::string keyframe_file;
};

struct Manifest {
  int format_version = 1;
  std::string equation;
  SceneConfig base;
  std::uint64_t seed = 0;
  int keyframe_stride = 1;
  std::vector<ManifestScenario> scenarios;
};

Manifest load_manifest(const std::filesystem::path &dir);
void save_manifest(const std::filesystem::path &dir, const Manifest &manifest);
/// Every referenced FGS file exists, passes its CRC and matches the
/// scenario's grid and frame counts.
void check_manifest(const std::filesystem::path &dir, const Manifest &manifest);

} // namespace fluidsformer

#endif // FLUIDSFORMER_FORMATS_HPP_
