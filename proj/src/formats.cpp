#include "fluidsformer/formats.hpp"

#include "fluidsformer/config.hpp"
#include "fluidsformer/errors.hpp"
#include "fluidsformer/tokenizer.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace fluidsformer {

namespace fs = std::filesystem;

namespace {

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

class ByteWriter {
public:
  void u8(std::uint8_t x) { out_.push_back(x); }
  void u16(std::uint16_t x) {
    for (int k = 0; k < 2; ++k) out_.push_back(static_cast<std::uint8_t>(x >> (8 * k)));
  }
  void u32(std::uint32_t x) {
    for (int k = 0; k < 4; ++k) out_.push_back(static_cast<std::uint8_t>(x >> (8 * k)));
  }
  void u64(std::uint64_t x) {
    for (int k = 0; k < 8; ++k) out_.push_back(static_cast<std::uint8_t>(x >> (8 * k)));
  }
  void f32(float x) { u32(std::bit_cast<std::uint32_t>(x)); }
  void f64(double x) { u64(std::bit_cast<std::uint64_t>(x)); }
  void magic(const char (&m)[5]) {
    for (int k = 0; k < 4; ++k) out_.push_back(static_cast<std::uint8_t>(m[k]));
  }
  void name(const std::string &s) {
    if (s.size() > 0xFFFF) throw InvalidArgument("name too long: " + s.substr(0, 32));
    u16(static_cast<std::uint16_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void crc() { u32(crc32_of(out_)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16() {
    auto b = take(2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }
  std::uint32_t u32() {
    auto b = take(4);
    std::uint32_t x = 0;
    for (int k = 0; k < 4; ++k) x |= static_cast<std::uint32_t>(b[k]) << (8 * k);
    return x;
  }
  std::uint64_t u64() {
    auto b = take(8);
    std::uint64_t x = 0;
    for (int k = 0; k < 8; ++k) x |= static_cast<std::uint64_t>(b[k]) << (8 * k);
    return x;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string name() {
    const std::uint16_t n = u16();
    auto b = take(n);
    return std::string(b.begin(), b.end());
  }

  void expect_magic(const char (&m)[5]) {
    auto b = take(4);
    if (std::memcmp(b.data(), m, 4) != 0)
      throw IntegrityError(what_ + ": bad magic, expected '" + std::string(m, 4) + "'");
  }

private:
  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > remaining())
      throw IntegrityError(what_ + ": truncated at byte " + std::to_string(pos_) +
                           " (needed " + std::to_string(n) + " more bytes)");
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::span<const std::uint8_t> bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

/// Checks magic, version and the trailing CRC. Returns the body without
/// the CRC.
std::span<const std::uint8_t> verify_container(std::span<const std::uint8_t> bytes,
                                               const char (&magic)[5],
                                               std::uint32_t version,
                                               const std::string &what) {
  ByteReader head(bytes, what);
  head.expect_magic(magic);
  const std::uint32_t v = head.u32();
  if (v != version)
    throw VersionError(what + ": unsupported version " + std::to_string(v) +
                       " (this build reads version " + std::to_string(version) + ")");
  if (bytes.size() < 12) throw IntegrityError(what + ": truncated before CRC");
  const auto body = bytes.first(bytes.size() - 4);
  ByteReader tail(bytes.subspan(bytes.size() - 4), what);
  const std::uint32_t stored = tail.u32();
  const std::uint32_t actual = crc32_of(body);
  if (stored != actual) {
    std::ostringstream msg;
    msg << what << ": CRC mismatch over bytes [0, " << body.size()
        << ") (stored 0x" << std::hex << stored << ", computed 0x" << actual
        << ")";
    throw IntegrityError(msg.str());
  }
  return body;
}

} // namespace

std::vector<std::uint8_t> read_file(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const fs::path &path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char *>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

// ---- FGS -------------------------------------------------------------------

std::size_t FgsFile::field_floats(std::size_t field) const {
  const std::size_t n = static_cast<std::size_t>(nx) * ny;
  if (fields.at(field).components == 1) return n;
  return static_cast<std::size_t>(nx + 1) * ny + static_cast<std::size_t>(nx) * (ny + 1);
}

std::size_t FgsFile::field_offset(std::size_t field) const {
  std::size_t off = 0;
  for (std::size_t f = 0; f < field; ++f) off += field_floats(f);
  return off;
}

std::size_t FgsFile::frame_floats() const { return field_offset(fields.size()); }

int FgsFile::find_field(std::string_view name) const {
  for (std::size_t f = 0; f < fields.size(); ++f)
    if (fields[f].name == name) return static_cast<int>(f);
  return -1;
}

void FgsFile::validate() const {
  if (nx < 1 || ny < 1) throw InvalidArgument("FGS grid must be non-empty");
  if (frames.empty()) throw InvalidArgument("FGS frame count must be >= 1");
  if (fields.empty()) throw InvalidArgument("FGS needs at least one field");
  for (const auto &f : fields) {
    if (f.components != 1 && f.components != 2)
      throw InvalidArgument("FGS field '" + f.name + "' has " +
                            std::to_string(f.components) + " components");
    if (f.name.empty()) throw InvalidArgument("FGS field name is empty");
  }
  const std::size_t n = frame_floats();
  for (std::size_t k = 0; k < frames.size(); ++k)
    if (frames[k].size() != n)
      throw ShapeError("FGS frame " + std::to_string(k) + " has " +
                       std::to_string(frames[k].size()) + " floats, expected " +
                       std::to_string(n));
}

std::vector<std::uint8_t> encode_fgs(const FgsFile &file) {
  file.validate();
  ByteWriter w;
  w.magic("FGS1");
  w.u32(kFgsVersion);
  w.u32(static_cast<std::uint32_t>(file.nx));
  w.u32(static_cast<std::uint32_t>(file.ny));
  w.u32(static_cast<std::uint32_t>(file.frames.size()));
  w.u32(static_cast<std::uint32_t>(file.fields.size()));
  for (const auto &f : file.fields) {
    w.name(f.name);
    w.u8(static_cast<std::uint8_t>(f.components));
  }
  for (const auto &frame : file.frames)
    for (float x : frame) w.f32(x);
  w.crc();
  return w.take();
}

FgsFile decode_fgs(std::span<const std::uint8_t> bytes) {
  const auto body = verify_container(bytes, "FGS1", kFgsVersion, "FGS");
  ByteReader r(body, "FGS");
  r.expect_magic("FGS1");
  r.u32();
  FgsFile file;
  file.nx = static_cast<int>(r.u32());
  file.ny = static_cast<int>(r.u32());
  const std::uint32_t frame_count = r.u32();
  const std::uint32_t field_count = r.u32();
  if (frame_count == 0) throw IntegrityError("FGS: frame count is 0");
  for (std::uint32_t f = 0; f < field_count; ++f) {
    FgsField field;
    field.name = r.name();
    field.components = r.u8();
    if (field.components != 1 && field.components != 2)
      throw IntegrityError("FGS: field '" + field.name + "' has " +
                           std::to_string(field.components) + " components");
    file.fields.push_back(std::move(field));
  }
  const std::size_t per_frame = file.frame_floats();
  const std::size_t expected = per_frame * frame_count * 4;
  if (r.remaining() != expected)
    throw IntegrityError("FGS: payload at byte " + std::to_string(r.offset()) +
                         " holds " + std::to_string(r.remaining()) +
                         " bytes, header implies " + std::to_string(expected));
  file.frames.resize(frame_count);
  for (auto &frame : file.frames) {
    frame.resize(per_frame);
    for (float &x : frame) x = r.f32();
  }
  return file;
}

void write_fgs(const fs::path &path, const FgsFile &file) {
  write_file(path, encode_fgs(file));
}

FgsFile read_fgs(const fs::path &path) {
  try {
    return decode_fgs(read_file(path));
  } catch (const IntegrityError &e) {
    throw IntegrityError(path.string() + ": " + e.what());
  }
}

FgsFile to_fgs(std::span<const FluidFrame> frames) {
  if (frames.empty()) throw InvalidArgument("cannot write an FGS with 0 frames");
  const GridDims &d = frames.front().density.dims();
  bool with_velocity = true;
  for (const auto &f : frames) {
    if (!(f.density.dims() == d))
      throw DimensionMismatch("frames have different grids");
    with_velocity = with_velocity && f.velocity.has_value();
  }
  FgsFile file;
  file.nx = d.nx;
  file.ny = d.ny;
  file.fields.push_back({"density", 1});
  if (with_velocity) file.fields.push_back({"velocity", 2});
  for (const auto &f : frames) {
    std::vector<float> data;
    data.reserve(file.frame_floats());
    for (double x : f.density.data()) data.push_back(static_cast<float>(x));
    if (with_velocity) {
      for (double x : f.velocity->u_data()) data.push_back(static_cast<float>(x));
      for (double x : f.velocity->v_data()) data.push_back(static_cast<float>(x));
    }
    file.frames.push_back(std::move(data));
  }
  return file;
}

std::vector<FluidFrame> from_fgs(const FgsFile &file, double dx) {
  file.validate();
  const int rho = file.find_field("density");
  if (rho < 0) throw InvalidArgument("FGS has no 'density' field");
  if (file.fields[rho].components != 1)
    throw InvalidArgument("FGS 'density' must be a scalar field");
  const int vel = file.find_field("velocity");
  if (vel >= 0 && file.fields[vel].components != 2)
    throw InvalidArgument("FGS 'velocity' must be a vector field");
  const GridDims d{file.nx, file.ny, dx > 0.0 ? dx : 1.0 / file.nx};
  const Eigen::Index nu = static_cast<Eigen::Index>(d.nx + 1) * d.ny;
  const Eigen::Index nv = static_cast<Eigen::Index>(d.nx) * (d.ny + 1);

  std::vector<FluidFrame> out;
  for (const auto &frame : file.frames) {
    FluidFrame f;
    const float *p = frame.data() + file.field_offset(rho);
    f.density = Field2(d, Eigen::Map<const Eigen::ArrayXf>(p, d.cells()).cast<double>());
    if (vel >= 0) {
      const float *q = frame.data() + file.field_offset(vel);
      f.velocity = MacVelocity2(d, Eigen::Map<const Eigen::ArrayXf>(q, nu).cast<double>(),
                                Eigen::Map<const Eigen::ArrayXf>(q + nu, nv).cast<double>());
    }
    out.push_back(std::move(f));
  }
  return out;
}

// ---- Checkpoint ------------------------------------------------------------

namespace {

Tensor<float> meta_tensor(const std::vector<double> &values) {
  Tensor<float> t({static_cast<Index>(values.size())});
  for (std::size_t k = 0; k < values.size(); ++k) t[k] = static_cast<float>(values[k]);
  return t;
}

const Tensor<float> &require(const std::map<std::string, Tensor<float>> &m,
                             const std::string &name, Index size) {
  auto it = m.find(name);
  if (it == m.end()) throw IntegrityError("checkpoint is missing '" + name + "'");
  if (size >= 0 && it->second.size() != size)
    throw IntegrityError("checkpoint tensor '" + name + "' has the wrong size");
  return it->second;
}

} // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint &ckpt) {
  const ModelConfig &m = ckpt.model;
  std::vector<std::pair<std::string, Tensor<float>>> meta;
  meta.emplace_back("meta.model",
                    meta_tensor({double(m.d_model), double(m.heads),
                                 double(m.enc_layers), double(m.codebook_k),
                                 double(m.patch), double(m.blocks_per_stage),
                                 double(m.ff_mult), double(m.time_dim),
                                 double(m.code_dim), double(m.latent_channels)}));
  std::vector<double> widths(m.decoder_widths.begin(), m.decoder_widths.end());
  meta.emplace_back("meta.decoder_widths", meta_tensor(widths));
  meta.emplace_back("meta.grid", meta_tensor({double(ckpt.dims.nx),
                                              double(ckpt.dims.ny), ckpt.dims.dx}));
  meta.emplace_back("meta.scene",
                    meta_tensor({ckpt.constants.dt, ckpt.constants.dx,
                                 ckpt.constants.buoyancy,
                                 ckpt.constants.emitter_rate, ckpt.density_max}));

  ByteWriter w;
  w.magic("FFCK");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(meta.size() + ckpt.params.size()));
  auto put = [&](const std::string &name, const Tensor<float> &t) {
    w.name(name);
    if (t.rank() > 255) throw InvalidArgument("tensor rank too large");
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (Index d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (Index k = 0; k < t.size(); ++k) w.f32(t[k]);
  };
  for (const auto &[name, t] : meta) put(name, t);
  for (std::size_t k = 0; k < ckpt.params.size(); ++k)
    put(ckpt.params.name(k), ckpt.params[k]);

  const std::pair<const char *, const NormStats *> stats[] = {
      {"density", &ckpt.norm.density}, {"u", &ckpt.norm.u}, {"v", &ckpt.norm.v}};
  w.u32(3);
  for (const auto &[name, s] : stats) {
    w.name(name);
    w.f64(s->lo);
    w.f64(s->hi);
  }
  w.crc();
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  const auto body = verify_container(bytes, "FFCK", kCheckpointVersion, "checkpoint");
  ByteReader r(body, "checkpoint");
  r.expect_magic("FFCK");
  r.u32();
  const std::uint32_t count = r.u32();

  Checkpoint ckpt;
  std::map<std::string, Tensor<float>> meta;
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name = r.name();
    const int rank = r.u8();
    Shape shape(rank);
    for (auto &d : shape) d = r.u32();
    Tensor<float> t(shape);
    for (Index i = 0; i < t.size(); ++i) t[i] = r.f32();
    if (name.starts_with("meta."))
      meta.emplace(std::move(name), std::move(t));
    else
      ckpt.params.add(name, std::move(t));
  }
  const std::uint32_t nstats = r.u32();
  std::map<std::string, NormStats> stats;
  for (std::uint32_t k = 0; k < nstats; ++k) {
    std::string name = r.name();
    NormStats s;
    s.lo = r.f64();
    s.hi = r.f64();
    stats[name] = s;
  }
  if (r.remaining() != 0)
    throw IntegrityError("checkpoint: " + std::to_string(r.remaining()) +
                         " unexpected bytes at offset " + std::to_string(r.offset()));
  for (const char *name : {"density", "u", "v"})
    if (!stats.count(name))
      throw IntegrityError(std::string("checkpoint is missing norm stats '") + name + "'");
  ckpt.norm = {stats["density"], stats["u"], stats["v"]};

  const auto &mm = require(meta, "meta.model", 10);
  ModelConfig &m = ckpt.model;
  m.d_model = int(mm[0]);
  m.heads = int(mm[1]);
  m.enc_layers = int(mm[2]);
  m.codebook_k = int(mm[3]);
  m.patch = int(mm[4]);
  m.blocks_per_stage = int(mm[5]);
  m.ff_mult = int(mm[6]);
  m.time_dim = int(mm[7]);
  m.code_dim = int(mm[8]);
  m.latent_channels = int(mm[9]);
  const auto &wd = require(meta, "meta.decoder_widths", -1);
  m.decoder_widths.clear();
  for (Index k = 0; k < wd.size(); ++k) m.decoder_widths.push_back(int(wd[k]));
  const auto &g = require(meta, "meta.grid", 3);
  ckpt.dims = {int(g[0]), int(g[1]), double(g[2])};
  const auto &sc = require(meta, "meta.scene", 5);
  ckpt.constants = {sc[0], sc[1], sc[2], sc[3]};
  ckpt.density_max = sc[4];
  m.validate();
  return ckpt;
}

void save_checkpoint(const fs::path &path, const Checkpoint &ckpt) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const fs::path &path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const IntegrityError &e) {
    throw IntegrityError(path.string() + ": " + e.what());
  }
}

// ---- Manifest --------------------------------------------------------------

void save_manifest(const fs::path &dir, const Manifest &manifest) {
  nlohmann::json j;
  j["format_version"] = manifest.format_version;
  j["equation"] = manifest.equation;
  j["seed"] = manifest.seed;
  j["keyframe_stride"] = manifest.keyframe_stride;
  j["solver"] = to_json(manifest.base);
  nlohmann::json scenarios = nlohmann::json::array();
  nlohmann::json splits = {{"train", nlohmann::json::array()},
                           {"val", nlohmann::json::array()},
                           {"test", nlohmann::json::array()}};
  for (const auto &s : manifest.scenarios) {
    scenarios.push_back({{"id", s.id},
                         {"seed", s.seed},
                         {"split", s.split},
                         {"scene", to_json(s.scene)},
                         {"dense", s.dense_file},
                         {"keyframes", s.keyframe_file}});
    splits.at(s.split).push_back(s.id);
  }
  j["scenarios"] = std::move(scenarios);
  j["splits"] = std::move(splits);
  write_json(dir / "manifest.json", j);
}

Manifest load_manifest(const fs::path &dir) {
  const nlohmann::json j = read_json(dir / "manifest.json");
  try {
    Manifest m;
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != 1)
      throw VersionError("manifest format version " +
                         std::to_string(m.format_version) + " is not supported");
    m.equation = j.at("equation").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.keyframe_stride = j.at("keyframe_stride").get<int>();
    m.base = scene_from_json(j.at("solver"));
    for (const auto &s : j.at("scenarios")) {
      ManifestScenario sc;
      sc.id = s.at("id").get<int>();
      sc.seed = s.at("seed").get<std::uint64_t>();
      sc.split = s.at("split").get<std::string>();
      if (sc.split != "train" && sc.split != "val" && sc.split != "test")
        throw InvalidArgument("scenario " + std::to_string(sc.id) +
                              " has unknown split '" + sc.split + "'");
      sc.scene = scene_from_json(s.at("scene"));
      sc.dense_file = s.at("dense").get<std::string>();
      sc.keyframe_file = s.at("keyframes").get<std::string>();
      m.scenarios.push_back(std::move(sc));
    }
    return m;
  } catch (const nlohmann::json::exception &e) {
    throw InvalidArgument("malformed manifest: " + std::string(e.what()));
  }
}

void check_manifest(const fs::path &dir, const Manifest &manifest) {
  if (manifest.equation != kCanonicalEquation)
    throw InvalidArgument("manifest equation '" + manifest.equation +
                          "' differs from '" + std::string(kCanonicalEquation) + "'");
  if (manifest.keyframe_stride < 1)
    throw InvalidArgument("manifest keyframe stride must be >= 1");
  for (const auto &s : manifest.scenarios) {
    const std::size_t dense_frames =
        static_cast<std::size_t>(s.scene.frames - 1) * manifest.keyframe_stride + 1;
    const std::pair<std::string, std::size_t> files[] = {
        {s.dense_file, dense_frames},
        {s.keyframe_file, static_cast<std::size_t>(s.scene.frames)}};
    for (const auto &[name, frames] : files) {
      const fs::path p = dir / name;
      if (!fs::exists(p))
        throw IoError("manifest references missing file '" + p.string() + "'");
      const FgsFile f = read_fgs(p);
      if (f.nx != s.scene.dims.nx || f.ny != s.scene.dims.ny)
        throw DimensionMismatch("'" + p.string() + "' grid differs from its scene");
      if (f.frames.size() != frames)
        throw InvalidArgument("'" + p.string() + "' holds " +
                              std::to_string(f.frames.size()) + " frames, expected " +
                              std::to_string(frames));
    }
  }
}

} // namespace fluidsformer
