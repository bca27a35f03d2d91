#include <doctest.h>

#include <sstream>

#include "fit/checkpoint.hpp"
#include "fit/cli.hpp"
#include "fit/eval.hpp"
#include "fit/image_io.hpp"
#include "fit/model.hpp"
#include "fit/testing/oracles.hpp"
#include "temp_dir.hpp"

using namespace fit;
using fit::testing::random_tensor;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run fit_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "fit");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

const char* kTinyConfig =
    "channels=4\nencoder_depth=1\nfim_blocks=1\nsubspaces=2\nheads=2\npe_length=2\npe_hidden=4\n"
    "decoder_hidden=8\ndecoder_depth=1\n"
    "batch_size=1\npatch_size=6\nsample_pixels=16\nscale_min=1\nscale_max=3\n";

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("usage errors exit with status 1") {
  CHECK(fit_cli({}).code == kExitUsage);
  CHECK(fit_cli({"frobnicate"}).code == kExitUsage);
  CHECK(fit_cli({"--help"}).code == kExitOk);
  CHECK(fit_cli({"infer", "only-one-arg"}).code == kExitUsage);
}

TEST_CASE("train on an empty directory") {
  TempDir dir;
  std::filesystem::create_directories(dir / "data");
  const Run r = fit_cli({"--out", (dir / "m.fitc").string(), "train", (dir / "data").string()});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("no training images found") != std::string::npos);
}

TEST_CASE("unknown config keys are listed by name") {
  TempDir dir;
  std::filesystem::create_directories(dir / "data");
  write_png(dir / "data" / "a.png", random_tensor({3, 20, 20}, 1, 0.0, 1.0));
  spit(dir / "bad.cfg", "channels=4\nlearning_rate=3\n");
  const Run r = fit_cli({"--config", (dir / "bad.cfg").string(), "--out", (dir / "m.fitc").string(), "train",
                         (dir / "data").string()});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("learning_rate") != std::string::npos);
}

TEST_CASE("200-step training run, reproducible from the seed") {
  TempDir dir;
  std::filesystem::create_directories(dir / "data");
  write_png(dir / "data" / "a.png", random_tensor({3, 24, 20}, 2, 0.0, 1.0));
  spit(dir / "tiny.cfg", kTinyConfig);
  auto train = [&](const std::string& tag, const std::string& seed) {
    return fit_cli({"--config", (dir / "tiny.cfg").string(), "--seed", seed, "--out", (dir / (tag + ".fitc")).string(),
                    "train", (dir / "data").string()});
  };
  REQUIRE(train("a", "5").code == kExitOk);
  REQUIRE(train("b", "5").code == kExitOk);
  REQUIRE(train("c", "6").code == kExitOk);
  CHECK(std::filesystem::exists(dir / "a.fitc"));
  const std::string log = slurp(dir / "a.fitc.loss.csv");
  CHECK(log.rfind("step,epoch,lr,loss\n", 0) == 0);
  CHECK(count_lines(log) == 201);
  CHECK(log == slurp(dir / "b.fitc.loss.csv"));
  CHECK(slurp(dir / "a.fitc") == slurp(dir / "b.fitc"));
  CHECK(log != slurp(dir / "c.fitc.loss.csv"));
  const ModelParams m = load_checkpoint(dir / "a.fitc");
  CHECK(m.iteration == 200);
  CHECK(m.seed == 5);
  CHECK(m.config.channels == 4);
}

TEST_CASE("infer writes the scaled image") {
  TempDir dir;
  ModelConfig cfg;
  cfg.channels = 4;
  cfg.encoder_depth = 1;
  cfg.fim_blocks = 1;
  cfg.subspaces = 2;
  cfg.heads = 2;
  cfg.pe_hidden = 4;
  cfg.decoder_hidden = 4;
  save_checkpoint(dir / "m.fitc", ModelParams::init(cfg, 3));
  write_png(dir / "in.png", random_tensor({3, 40, 50}, 4, 0.0, 1.0));

  const Run r = fit_cli({"--scale", "1.8", "--out", (dir / "out.png").string(), "infer", (dir / "m.fitc").string(),
                         (dir / "in.png").string()});
  REQUIRE(r.code == kExitOk);
  CHECK(read_png(dir / "out.png").dims() == Shape{3, 72, 90});
  CHECK(fit_cli({"--scale", "4.2", "--out", (dir / "big.png").string(), "infer", (dir / "m.fitc").string(),
                 (dir / "in.png").string()})
            .code == kExitOk);
  CHECK(read_png(dir / "big.png").dims() == Shape{3, 168, 210});
  CHECK(fit_cli({"--scale", "2,3", "--out", (dir / "aniso.png").string(), "infer", (dir / "m.fitc").string(),
                 (dir / "in.png").string()})
            .code == kExitOk);
  CHECK(read_png(dir / "aniso.png").dims() == Shape{3, 80, 150});

  const Run small = fit_cli({"--scale", "0.5", "--out", (dir / "x.png").string(), "infer",
                             (dir / "m.fitc").string(), (dir / "in.png").string()});
  CHECK(small.code == kExitUsage);
  CHECK(small.err.find(">= 1") != std::string::npos);

  spit(dir / "corrupt.fitc", "JUNKJUNKJUNK");
  const Run corrupt = fit_cli({"--scale", "2", "--out", (dir / "x.png").string(), "infer",
                               (dir / "corrupt.fitc").string(), (dir / "in.png").string()});
  CHECK(corrupt.code == kExitUsage);
  CHECK(corrupt.err.find("magic") != std::string::npos);
}

TEST_CASE("zero-decoder checkpoint reproduces bilinear upsampling") {
  TempDir dir;
  ModelConfig cfg;
  cfg.channels = 4;
  cfg.encoder_depth = 1;
  cfg.fim_blocks = 1;
  cfg.subspaces = 2;
  cfg.heads = 2;
  cfg.pe_hidden = 4;
  cfg.decoder_hidden = 4;
  ModelParams p = ModelParams::init(cfg, 5);
  for (auto& [name, t] : p.store)
    if (name.rfind("dec.", 0) == 0) t = Tensor(t.dims());
  save_checkpoint(dir / "m.fitc", p);
  write_png(dir / "in.png", random_tensor({3, 13, 11}, 6, 0.0, 1.0));
  REQUIRE(fit_cli({"--scale", "2.5", "--out", (dir / "out.png").string(), "infer", (dir / "m.fitc").string(),
                   (dir / "in.png").string()})
              .code == kExitOk);
  const Tensor expect = bilinear_upsample(read_png(dir / "in.png"), 2.5, 2.5);
  CHECK(max_abs_diff(read_png(dir / "out.png"), expect) <= 0.5 / 255.0 + 1e-12);
}

TEST_CASE("eval tables") {
  TempDir dir;
  std::filesystem::create_directories(dir / "hr");
  write_png(dir / "hr" / "a.png", random_tensor({3, 30, 26}, 7, 0.0, 1.0));
  write_png(dir / "hr" / "b.png", random_tensor({3, 24, 24}, 8, 0.0, 1.0));

  const Run same = fit_cli({"--scale", "1", "eval", "bicubic", (dir / "hr").string()});
  REQUIRE(same.code == kExitOk);
  CHECK(same.out.find("a.png,99.0000") != std::string::npos);
  CHECK(same.out.find("mean,99.0000") != std::string::npos);

  const Run three = fit_cli({"--scale", "2,3,4", "eval", "bicubic", (dir / "hr").string()});
  REQUIRE(three.code == kExitOk);
  CHECK(three.out.rfind("image,x2,x3,x4\n", 0) == 0);
  std::istringstream lines(three.out);
  std::string line;
  std::getline(lines, line);
  std::getline(lines, line);
  CHECK(std::count(line.begin(), line.end(), ',') == 3);

  spit(dir / "hr" / "c.png", "broken");
  const Run skipped = fit_cli({"--out", (dir / "t.csv").string(), "eval", "bicubic", (dir / "hr").string()});
  CHECK(skipped.code == kExitOk);
  CHECK(skipped.err.find("warning") != std::string::npos);
  CHECK(slurp(dir / "t.csv").find("# images=2 skipped=1") != std::string::npos);
  CHECK(fit_cli({"eval", "bicubic", (dir / "nope").string()}).code == kExitUsage);
}

TEST_CASE("fem writes a render and a raw map") {
  TempDir dir;
  const Tensor hr = random_tensor({3, 12, 10}, 9, 0.0, 1.0);
  write_png(dir / "hr.png", hr);
  write_png(dir / "sr.png", random_tensor({3, 12, 10}, 10, 0.0, 1.0));
  const Run r = fit_cli({"--out", (dir / "fem.png").string(), "fem", (dir / "sr.png").string(),
                         (dir / "hr.png").string(), "--csv", (dir / "fem.csv").string()});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("max_error=") != std::string::npos);
  CHECK(read_png(dir / "fem.png").dims() == Shape{3, 12, 10});
  CHECK(count_lines(slurp(dir / "fem.csv")) == 12);
  CHECK(fit_cli({"--out", (dir / "f.png").string(), "fem", (dir / "sr.png").string(), (dir / "missing.png").string()})
            .code == kExitUsage);
}

TEST_CASE("selftest passes, and fails under a perturbed FFT normalization") {
  const Run ok = fit_cli({"selftest"});
  MESSAGE(ok.out);
  CHECK(ok.code == kExitOk);
  CHECK(ok.out.find("FAIL") == std::string::npos);
  const Run bad = fit_cli({"selftest", "--perturb-fft-norm", "1.001"});
  CHECK(bad.code == kExitFailure);
  CHECK(bad.out.find("FAIL fft") != std::string::npos);
  CHECK(fit_cli({"grad-check"}).code == kExitOk);
}
