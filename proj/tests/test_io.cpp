#include <doctest.h>

#include <png.h>

#include <cstring>

#include "fit/checkpoint.hpp"
#include "fit/config.hpp"
#include "fit/errors.hpp"
#include "fit/eval.hpp"
#include "fit/harness.hpp"
#include "fit/image_io.hpp"
#include "fit/testing/oracles.hpp"
#include "temp_dir.hpp"

using namespace fit;
using fit::testing::random_tensor;

namespace {

ModelConfig tiny() {
  ModelConfig cfg;
  cfg.channels = 4;
  cfg.encoder_depth = 1;
  cfg.fim_blocks = 1;
  cfg.subspaces = 2;
  cfg.heads = 2;
  cfg.pe_length = 2;
  cfg.pe_hidden = 4;
  cfg.decoder_hidden = 4;
  cfg.decoder_depth = 1;
  return cfg;
}

std::uint32_t u32_at(const std::string& s, std::size_t pos) {
  const auto* b = reinterpret_cast<const unsigned char*>(s.data() + pos);
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

TEST_CASE("PNG round trip at 8 bits") {
  TempDir dir;
  const Tensor img = random_tensor({3, 7, 9}, 1, -0.1, 1.1);
  write_png(dir / "a.png", img);
  const Tensor back = read_png(dir / "a.png");
  REQUIRE(back.dims() == img.dims());
  for (std::size_t i = 0; i < img.size(); ++i)
    CHECK(back[i] == std::round(std::clamp(img[i], 0.0, 1.0) * 255.0) / 255.0);
  CHECK(back == quantize8(img));
}

TEST_CASE("grayscale PNG is promoted to RGB") {
  TempDir dir;
  const unsigned char px[6] = {0, 51, 102, 153, 204, 255};
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = 3;
  image.height = 2;
  image.format = PNG_FORMAT_GRAY;
  REQUIRE(png_image_write_to_file(&image, (dir / "g.png").c_str(), 0, px, 0, nullptr));
  const Tensor t = read_png(dir / "g.png");
  REQUIRE(t.dims() == Shape{3, 2, 3});
  for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(t.at(c, 1, 0) - 0.6) < 1e-12);
}

TEST_CASE("unreadable PNG and directory listing") {
  TempDir dir;
  spit(dir / "bad.png", "not a png");
  CHECK_THROWS_AS(read_png(dir / "bad.png"), FormatError);
  CHECK_THROWS_AS(read_png(dir / "missing.png"), FormatError);
  spit(dir / "b.PNG", "");
  spit(dir / "a.png", "");
  spit(dir / "c.txt", "");
  std::filesystem::create_directories(dir / "sub");
  spit(dir / "sub" / "d.png", "");
  const auto files = list_pngs(dir.path);
  REQUIRE(files.size() == 3);
  CHECK(files[0].filename() == "a.png");
  CHECK(files[1].filename() == "b.PNG");
  CHECK(files[2].filename() == "bad.png");
  CHECK_THROWS_AS(list_pngs(dir / "a.png"), UsageError);
}

TEST_CASE("config text addresses every field") {
  RunConfig cfg;
  cfg.model = tiny();
  cfg.model.subspace_mode = SubspaceMode::Spatial;
  cfg.model.max_tokens = 999;
  cfg.model.grid_h = 5;
  cfg.train.batch_size = 3;
  cfg.train.epochs = 17;
  cfg.train.steps_per_epoch = 2;
  cfg.train.lr_start = 2.5e-5;
  cfg.train.lr_base = 3e-4;
  cfg.train.lr_floor = 1e-7;
  cfg.train.warmup_epochs = 3;
  cfg.train.patch_size = 12;
  cfg.train.scale_min = 1.5;
  cfg.train.scale_max = 3.25;
  cfg.train.sample_pixels = 99;
  cfg.train.augment = false;
  cfg.train.seed = 123456789012345ull;
  const std::string text = to_text(cfg);
  const RunConfig back = parse_config(text);
  CHECK(back.model == cfg.model);
  CHECK(back.train == cfg.train);
  for (const std::string& key : config_keys()) CHECK(text.find(key + "=") != std::string::npos);
}

TEST_CASE("config parsing errors") {
  CHECK(parse_config("# comment\n\nchannels = 8\nheads=2\n").model.channels == 8);
  try {
    parse_config("channels=8\nbogus=1\nalso_bad=2\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("bogus") != std::string::npos);
    CHECK(msg.find("also_bad") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("channels=8\nchannels=4\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("channels=eight\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("channels=-3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("augment=maybe\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("no equals sign\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("subspaces=3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("warmup_epochs=500\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/fit.cfg"), UsageError);
}

TEST_CASE("checkpoint round trip is exact at 32-bit precision") {
  ModelParams p = ModelParams::init(tiny(), 7);
  p.iteration = 42;
  p.store.at("dec.out.b")[0] = 0.1;  // not representable in float32
  const ModelParams back = deserialize_checkpoint(serialize_checkpoint(p));
  CHECK(back == to_float32(p));
  CHECK(back.iteration == 42);
  CHECK(back.seed == 7);
  CHECK(back.config == p.config);
  CHECK(back.store.at("dec.out.b")[0] == static_cast<double>(0.1f));
  CHECK(serialize_checkpoint(back) == serialize_checkpoint(p));

  TempDir dir;
  save_checkpoint(dir / "m.fitc", p);
  CHECK(load_checkpoint(dir / "m.fitc") == back);
}

TEST_CASE("checkpoint byte layout") {
  const ModelParams p = ModelParams::init(tiny(), 8);
  const std::string b = serialize_checkpoint(p);
  CHECK(b.substr(0, 4) == "FITC");
  CHECK(u32_at(b, 4) == kCheckpointVersion);
  const std::uint32_t cfg_len = u32_at(b, 8);
  const std::string cfg_text = b.substr(12, cfg_len);
  CHECK(cfg_text.find("channels=4\n") != std::string::npos);
  std::size_t pos = 12 + cfg_len;
  CHECK(u32_at(b, pos) == p.store.size());
  pos += 4;
  // First entry in name order.
  const auto& [name, t] = *p.store.begin();
  CHECK(u32_at(b, pos) == name.size());
  CHECK(b.substr(pos + 4, name.size()) == name);
  pos += 4 + name.size();
  CHECK(u32_at(b, pos) == t.rank());
  pos += 4;
  for (std::size_t d = 0; d < t.rank(); ++d, pos += 4) CHECK(u32_at(b, pos) == t.dim(d));
  float first;
  std::memcpy(&first, b.data() + pos, 4);
  CHECK(first == static_cast<float>(t[0]));
}

TEST_CASE("corrupt checkpoints are rejected") {
  const std::string good = serialize_checkpoint(ModelParams::init(tiny(), 9));
  auto message = [](const std::string& bytes) {
    try {
      deserialize_checkpoint(bytes);
    } catch (const FormatError& e) {
      return std::string(e.what());
    }
    return std::string("accepted");
  };
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  CHECK(message(bad_magic).find("magic") != std::string::npos);
  std::string bad_version = good;
  bad_version[4] = 2;
  CHECK(message(bad_version).find("version") != std::string::npos);
  CHECK(message(good.substr(0, good.size() - 3)).find("truncated") != std::string::npos);
  CHECK(message(good + "x").find("trailing") != std::string::npos);
  CHECK(message("").find("accepted") == std::string::npos);
}

TEST_CASE("evaluation pairs and tables") {
  const Tensor hr = random_tensor({3, 21, 17}, 10, 0.0, 1.0);
  const EvalPair p = make_eval_pair(hr, 3.0);
  CHECK(p.lr.dims() == Shape{3, 7, 5});
  CHECK(p.hr.dims() == Shape{3, 21, 15});
  CHECK(p.lr == quantize8(p.lr));
  CHECK(make_eval_pair(hr, 2.5).hr.dims() == Shape{3, 20, 15});
  CHECK_THROWS_AS(make_eval_pair(hr, 0.5), UsageError);

  TempDir dir;
  write_png(dir / "b.png", random_tensor({3, 24, 20}, 11, 0.0, 1.0));
  write_png(dir / "a.png", random_tensor({3, 18, 30}, 12, 0.0, 1.0));
  spit(dir / "c.png", "garbage");
  EvalOptions opt;
  opt.scales = {2.0, 3.0, 4.0};
  opt.threads = 2;
  const Upscaler bicubic = [](const Tensor& lr, double eta) { return bicubic_resize(lr, eta, eta); };
  const EvalTable t = evaluate_directory(dir.path, bicubic, opt);
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0].image == "a.png");
  CHECK(t.skipped == 1);
  CHECK(t.warnings.size() == 1);
  CHECK(t.mean.size() == 3);
  CHECK(t.mean[0] == doctest::Approx((t.rows[0].psnr[0] + t.rows[1].psnr[0]) / 2.0));
  const std::string csv = t.to_csv();
  CHECK(csv.rfind("image,x2,x3,x4\n", 0) == 0);
  CHECK(csv.find("\nmean,") != std::string::npos);
  CHECK(csv.find("# images=2 skipped=1") != std::string::npos);
  CHECK(scale_label(2.5) == "x2.5");

  opt.scales = {1.0};
  const EvalTable same = evaluate_directory(dir.path, bicubic, opt);
  for (const EvalRow& r : same.rows) CHECK(r.psnr[0] == kPsnrCap);
}
