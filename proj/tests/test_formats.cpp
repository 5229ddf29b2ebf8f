#include "test_util.hpp"

#include "fluidsformer/config.hpp"
#include "fluidsformer/errors.hpp"
#include "fluidsformer/formats.hpp"
#include "fluidsformer/tokenizer.hpp"

#include <doctest.h>

#include <cstring>

using namespace fluidsformer;

namespace {

const std::filesystem::path kGolden = FLUIDSFORMER_GOLDEN_DIR;

FgsFile random_fgs(int nx, int ny, int frames, bool velocity, std::uint64_t seed) {
  SplitMix64 rng(seed);
  FgsFile f;
  f.nx = nx;
  f.ny = ny;
  f.fields.push_back({"density", 1});
  if (velocity) f.fields.push_back({"velocity", 2});
  for (int k = 0; k < frames; ++k) {
    std::vector<float> data(f.frame_floats());
    for (float &x : data) x = static_cast<float>(rng.uniform(-10.0, 10.0));
    f.frames.push_back(std::move(data));
  }
  return f;
}

bool bit_equal(const std::vector<float> &a, const std::vector<float> &b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

/// The checkpoint that make_golden.py writes.
Checkpoint golden_checkpoint() {
  Checkpoint c;
  c.model.d_model = 8;
  c.model.heads = 2;
  c.model.enc_layers = 1;
  c.model.codebook_k = 4;
  c.model.patch = 4;
  c.model.decoder_widths = {4, 8};
  c.model.blocks_per_stage = 1;
  c.model.ff_mult = 2;
  c.model.time_dim = 4;
  c.model.code_dim = 2;
  c.model.latent_channels = 2;
  c.dims = {8, 8, 0.125};
  c.constants = {0.1, 0.125, 4.0, 2.0};
  c.density_max = 1.0;
  Tensor<float> w({2, 3});
  for (Index k = 0; k < 6; ++k) w[k] = static_cast<float>(k * 0.5 - 1.0);
  Tensor<float> b({3});
  b[0] = 0.25f;
  b[1] = -0.5f;
  b[2] = 1.5f;
  c.params.add("w", w);
  c.params.add("b", b);
  c.norm = {NormStats{0.0, 1.0}, NormStats{-0.5, 0.5}, NormStats{-0.25, 0.75}};
  return c;
}

FgsFile golden_sequence() {
  FgsFile f;
  f.nx = 3;
  f.ny = 2;
  f.fields = {{"density", 1}, {"velocity", 2}};
  for (int k = 0; k < 2; ++k) {
    std::vector<float> data(f.frame_floats());
    for (std::size_t i = 0; i < data.size(); ++i)
      data[i] = static_cast<float>((k * 100 + double(i)) * 0.25 - 3.0);
    f.frames.push_back(std::move(data));
  }
  return f;
}

void check_same_checkpoint(const Checkpoint &a, const Checkpoint &b) {
  REQUIRE(a.params.size() == b.params.size());
  for (std::size_t k = 0; k < a.params.size(); ++k) {
    CHECK(a.params.name(k) == b.params.name(k));
    CHECK(a.params[k].shape() == b.params[k].shape());
    CHECK(std::memcmp(a.params[k].data().data(), b.params[k].data().data(),
                      a.params[k].size() * sizeof(float)) == 0);
  }
  CHECK(a.model == b.model);
  CHECK(a.dims.nx == b.dims.nx);
  CHECK(a.dims.ny == b.dims.ny);
  CHECK(a.norm.density.lo == b.norm.density.lo);
  CHECK(a.norm.v.hi == b.norm.v.hi);
}

} // namespace

TEST_CASE("FGS roundtrip is bit-exact") {
  const auto dir = fftest::scratch_dir("formats_fgs");
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const FgsFile f = random_fgs(3 + int(seed), 5, 1 + int(seed % 4), seed % 2 == 0, seed);
    const auto path = dir / ("seq" + std::to_string(seed) + ".fgs");
    write_fgs(path, f);
    const FgsFile back = read_fgs(path);
    CHECK(back.nx == f.nx);
    CHECK(back.ny == f.ny);
    CHECK(back.fields == f.fields);
    REQUIRE(back.frames.size() == f.frames.size());
    for (std::size_t k = 0; k < f.frames.size(); ++k) CHECK(bit_equal(back.frames[k], f.frames[k]));
    CHECK(encode_fgs(back) == encode_fgs(f));
  }
}

TEST_CASE("FGS special values survive") {
  FgsFile f = random_fgs(2, 2, 1, false, 1);
  f.frames[0] = {-0.0f, std::numeric_limits<float>::denorm_min(),
                 std::numeric_limits<float>::infinity(), std::numeric_limits<float>::max()};
  const FgsFile back = decode_fgs(encode_fgs(f));
  CHECK(bit_equal(back.frames[0], f.frames[0]));
}

TEST_CASE("FGS header layout") {
  const FgsFile f = random_fgs(4, 3, 2, true, 9);
  const auto bytes = encode_fgs(f);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "FGS1");
  auto u32 = [&](std::size_t off) {
    return std::uint32_t(bytes[off]) | std::uint32_t(bytes[off + 1]) << 8 |
           std::uint32_t(bytes[off + 2]) << 16 | std::uint32_t(bytes[off + 3]) << 24;
  };
  CHECK(u32(4) == 1);
  CHECK(u32(8) == 4);
  CHECK(u32(12) == 3);
  CHECK(u32(16) == 2);
  CHECK(u32(20) == 2);
  const std::size_t header = 24 + (2 + 7 + 1) + (2 + 8 + 1);
  const std::size_t per_frame = 12 + 5 * 3 + 4 * 4;
  CHECK(f.frame_floats() == per_frame);
  CHECK(bytes.size() == header + 2 * per_frame * 4 + 4);
}

TEST_CASE("a flipped byte anywhere is caught") {
  const auto bytes = encode_fgs(random_fgs(4, 4, 2, true, 3));
  SplitMix64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    auto bad = bytes;
    // skip the magic and version so the CRC is what trips
    const std::size_t at = 8 + rng.below(bad.size() - 8);
    bad[at] ^= static_cast<std::uint8_t>(1u << rng.below(8));
    CHECK_THROWS_AS(decode_fgs(bad), IntegrityError);
  }
  auto bad = bytes;
  bad[bad.size() / 2] ^= 0x10;
  try {
    decode_fgs(bad);
    FAIL("corruption not detected");
  } catch (const IntegrityError &e) {
    const std::string msg = e.what();
    CHECK(msg.find("CRC") != std::string::npos);
    CHECK(msg.find("bytes [0, " + std::to_string(bytes.size() - 4) + ")") != std::string::npos);
  }
}

TEST_CASE("FGS structural errors") {
  const auto bytes = encode_fgs(random_fgs(4, 4, 1, false, 5));
  auto versioned = bytes;
  versioned[4] = 2;
  CHECK_THROWS_AS(decode_fgs(versioned), VersionError);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(decode_fgs(magic), IntegrityError);
  const std::vector<std::uint8_t> shortened(bytes.begin(), bytes.begin() + 10);
  CHECK_THROWS_AS(decode_fgs(shortened), IntegrityError);

  FgsFile empty = random_fgs(4, 4, 1, false, 5);
  empty.frames.clear();
  CHECK_THROWS_AS(encode_fgs(empty), InvalidArgument);
  const auto dir = fftest::scratch_dir("formats_empty");
  CHECK_THROWS_AS(write_fgs(dir / "empty.fgs", empty), InvalidArgument);
  CHECK_FALSE(std::filesystem::exists(dir / "empty.fgs"));

  FgsFile ragged = random_fgs(4, 4, 2, false, 5);
  ragged.frames[1].pop_back();
  CHECK_THROWS_AS(encode_fgs(ragged), ShapeError);
  CHECK_THROWS_AS(read_fgs(dir / "missing.fgs"), IoError);
}

TEST_CASE("fluid frames pack into FGS") {
  const GridDims d{6, 5, 1.0 / 6};
  SplitMix64 rng(6);
  std::vector<FluidFrame> frames;
  for (int k = 0; k < 3; ++k)
    frames.push_back({fftest::random_field(d, rng), fftest::random_velocity(d, rng)});
  const FgsFile f = to_fgs(frames);
  CHECK(f.fields.size() == 2);
  const auto back = from_fgs(decode_fgs(encode_fgs(f)));
  REQUIRE(back.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(back[k].density.dims() == d);
    CHECK(((back[k].density.data() - frames[k].density.data()).abs() < 1e-6).all());
    REQUIRE(back[k].velocity);
    CHECK(((back[k].velocity->v_data() - frames[k].velocity->v_data()).abs() < 1e-6).all());
  }
  frames[1].velocity.reset();
  const FgsFile no_vel = to_fgs(frames);
  CHECK(no_vel.fields.size() == 1);
  CHECK_FALSE(from_fgs(no_vel)[0].velocity);
  CHECK_THROWS_AS(to_fgs(std::vector<FluidFrame>{}), InvalidArgument);
}

TEST_CASE("checkpoint roundtrip is bit-exact") {
  const auto dir = fftest::scratch_dir("formats_ckpt");
  ModelConfig m;
  m.d_model = 16;
  m.heads = 4;
  m.enc_layers = 2;
  m.codebook_k = 4;
  m.patch = 4;
  m.decoder_widths = {4, 8, 8};
  m.blocks_per_stage = 1;
  m.ff_mult = 2;
  m.time_dim = 4;
  m.code_dim = 2;
  m.latent_channels = 2;
  FluidsFormer<float> model(m, 3);
  SplitMix64 rng(3);
  for (std::size_t k = 0; k < model.params().size(); ++k)
    for (Index i = 0; i < model.params()[k].size(); ++i)
      model.params()[k][i] = static_cast<float>(rng.normal());
  Checkpoint c;
  c.model = m;
  c.params = model.params();
  c.norm = {NormStats{0.0, 1.3}, NormStats{-0.7, 0.2}, NormStats{-0.1, 0.9}};
  c.dims = {16, 16, 1.0 / 16};
  c.constants = {0.05, 1.0 / 16, 4.0, 2.0};
  c.density_max = 1.0;
  save_checkpoint(dir / "model.ffck", c);
  const Checkpoint back = load_checkpoint(dir / "model.ffck");
  check_same_checkpoint(back, c);
  CHECK(back.norm.u.lo == -0.7);
  CHECK(back.constants.dt == doctest::Approx(0.05).epsilon(1e-7));
  CHECK(encode_checkpoint(back) == encode_checkpoint(c));

  auto bytes = encode_checkpoint(c);
  bytes[bytes.size() / 3] ^= 0x01;
  CHECK_THROWS_AS(decode_checkpoint(bytes), IntegrityError);
  bytes = encode_checkpoint(c);
  bytes[4] = 7;
  CHECK_THROWS_AS(decode_checkpoint(bytes), VersionError);
}

TEST_CASE("golden files match byte for byte") {
  const auto fgs_bytes = read_file(kGolden / "sequence.fgs");
  CHECK(encode_fgs(golden_sequence()) == fgs_bytes);
  const FgsFile seq = decode_fgs(fgs_bytes);
  CHECK(seq.frames[1][3] == 22.75f);

  const auto ckpt_bytes = read_file(kGolden / "checkpoint.ffck");
  CHECK(encode_checkpoint(golden_checkpoint()) == ckpt_bytes);
  const Checkpoint c = decode_checkpoint(ckpt_bytes);
  check_same_checkpoint(c, golden_checkpoint());
  CHECK(c.params.at("b")[2] == 1.5f);
}

TEST_CASE("manifest roundtrip and consistency check") {
  const auto dir = fftest::scratch_dir("formats_manifest");
  SceneConfig scene;
  scene.dims = {8, 8, 0.125};
  scene.frames = 3;
  Manifest m;
  m.equation = std::string(kCanonicalEquation);
  m.base = scene;
  m.seed = 11;
  m.keyframe_stride = 2;
  ManifestScenario s;
  s.id = 0;
  s.seed = 12;
  s.scene = scene;
  s.split = "train";
  s.dense_file = "s0_dense.fgs";
  s.keyframe_file = "s0_keys.fgs";
  m.scenarios.push_back(s);
  save_manifest(dir, m);

  const Manifest back = load_manifest(dir);
  CHECK(back.equation == m.equation);
  CHECK(back.seed == 11);
  CHECK(back.keyframe_stride == 2);
  REQUIRE(back.scenarios.size() == 1);
  CHECK(back.scenarios[0].seed == 12);
  CHECK(back.scenarios[0].split == "train");
  CHECK(back.scenarios[0].scene.frames == 3);

  CHECK_THROWS_AS(check_manifest(dir, back), IoError);
  write_fgs(dir / "s0_dense.fgs", random_fgs(8, 8, 5, true, 1));
  write_fgs(dir / "s0_keys.fgs", random_fgs(8, 8, 3, true, 2));
  CHECK_NOTHROW(check_manifest(dir, back));
  write_fgs(dir / "s0_keys.fgs", random_fgs(8, 8, 4, true, 2));
  CHECK_THROWS_AS(check_manifest(dir, back), InvalidArgument);
  write_fgs(dir / "s0_keys.fgs", random_fgs(8, 4, 3, true, 2));
  CHECK_THROWS_AS(check_manifest(dir, back), DimensionMismatch);
  auto bytes = encode_fgs(random_fgs(8, 8, 3, true, 2));
  bytes[40] ^= 0xFF;
  write_file(dir / "s0_keys.fgs", bytes);
  CHECK_THROWS_AS(check_manifest(dir, back), IntegrityError);

  Manifest wrong = back;
  wrong.equation = "d_t rho = 0";
  CHECK_THROWS_AS(check_manifest(dir, wrong), InvalidArgument);
}

TEST_CASE("config JSON rejects unknown keys and keeps defaults") {
  const ModelConfig m = model_from_json(nlohmann::json::object());
  CHECK(m == ModelConfig{});
  const LossConfig l = loss_from_json({{"lambda_vol", 0.0}});
  CHECK(l.lambda_vol == 0.0);
  CHECK(l.lambda_adv == LossConfig{}.lambda_adv);
  CHECK_THROWS_AS(loss_from_json({{"lambda_volume", 0.0}}), InvalidArgument);
  CHECK_THROWS_AS(train_from_json({{"lr", "fast"}}), InvalidArgument);

  SceneConfig s;
  s.dims = {24, 20, 1.0 / 24};
  s.frames = 7;
  s.seed = 99;
  const SceneConfig back = scene_from_json(to_json(s));
  CHECK(back.dims.nx == 24);
  CHECK(back.dims.ny == 20);
  CHECK(back.frames == 7);
  CHECK(back.seed == 99);
  const ModelConfig mb = model_from_json(to_json(m));
  CHECK(mb == m);
}
