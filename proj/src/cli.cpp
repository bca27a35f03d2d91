#include "fit/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <optional>
#include <sstream>

#include "fit/checkpoint.hpp"
#include "fit/config.hpp"
#include "fit/eval.hpp"
#include "fit/fft.hpp"
#include "fit/harness.hpp"
#include "fit/image_io.hpp"
#include "fit/parallel.hpp"
#include "fit/selftest.hpp"

namespace fit {

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string scale;
  std::string out;
};

std::vector<double> parse_scale_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double("--scale", item));
  if (out.empty()) throw UsageError("--scale needs at least one value");
  return out;
}

std::pair<double, double> parse_scale_pair(const std::string& text) {
  const auto v = parse_scale_list(text);
  if (v.size() > 2) throw UsageError("--scale takes \"h,w\" or a single value, got '" + text + "'");
  const double h = v[0], w = v.size() == 2 ? v[1] : v[0];
  if (!(h >= 1.0) || !(w >= 1.0)) throw UsageError("scale factors must be >= 1, got '" + text + "'");
  return {h, w};
}

void require(const std::string& value, const char* flag, const char* verb) {
  if (value.empty()) throw UsageError(std::string(verb) + " requires " + flag);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw UsageError("cannot write '" + path.string() + "'");
  f << text;
}

int cmd_train(const Globals& g, const std::string& data_dir, std::string log_path, std::ostream& out) {
  require(g.out, "--out", "train");
  RunConfig cfg = g.config.empty() ? RunConfig{} : load_config(g.config);
  if (g.seed) cfg.train.seed = *g.seed;
  cfg.model.validate();
  cfg.train.validate();

  const auto files = list_pngs(data_dir);
  if (files.empty()) throw UsageError("no training images found in '" + data_dir + "'");
  std::vector<Tensor> images;
  for (const auto& f : files) images.push_back(read_png(f));

  ModelParams params = ModelParams::init(cfg.model, cfg.train.seed);
  Trainer trainer(params, cfg.train, std::move(images));
  if (log_path.empty()) log_path = g.out + ".loss.csv";
  std::string log = "step,epoch,lr,loss\n";
  trainer.run([&](const StepRecord& r) {
    log += std::to_string(r.step) + "," + std::to_string(r.epoch) + "," + format_double(r.lr) + "," +
           format_double(r.loss) + "\n";
  });
  write_text(log_path, log);
  save_checkpoint(g.out, params);
  out << "trained " << trainer.steps_done() << " steps on " << files.size() << " image(s); checkpoint "
      << g.out << ", loss log " << log_path << "\n";
  return kExitOk;
}

int cmd_infer(const Globals& g, const std::string& ckpt, const std::string& input, std::ostream& out) {
  require(g.scale, "--scale", "infer");
  require(g.out, "--out", "infer");
  const auto [eh, ew] = parse_scale_pair(g.scale);
  const ModelParams params = load_checkpoint(ckpt);
  const Tensor img = read_png(input);
  const Tensor sr = fit_forward(img, eh, ew, params, worker_threads());
  write_png(g.out, sr);
  out << "wrote " << g.out << " (" << sr.dim(2) << "x" << sr.dim(1) << ")\n";
  return kExitOk;
}

int cmd_eval(const Globals& g, const std::string& model, const std::string& hr_dir, int shave_px, bool use_luma,
             std::ostream& out, std::ostream& err) {
  EvalOptions opt;
  opt.scales = parse_scale_list(g.scale.empty() ? "2" : g.scale);
  for (double s : opt.scales)
    if (!(s >= 1.0)) throw UsageError("evaluation scales must be >= 1");
  opt.shave = shave_px;
  opt.luma = use_luma;
  opt.threads = worker_threads();

  Upscaler up;
  std::optional<ModelParams> params;
  if (model == "bicubic") {
    up = [](const Tensor& lr, double eta) { return bicubic_resize(lr, eta, eta); };
  } else {
    params = load_checkpoint(model);
    up = [&params](const Tensor& lr, double eta) { return fit_forward(lr, eta, eta, *params, 1); };
  }
  const EvalTable table = evaluate_directory(hr_dir, up, opt);
  for (const auto& w : table.warnings) err << "warning: " << w << "\n";
  if (g.out.empty()) {
    out << table.to_csv();
  } else {
    write_text(g.out, table.to_csv());
    out << "wrote " << g.out << " (" << table.rows.size() << " images, " << table.skipped << " skipped)\n";
  }
  return kExitOk;
}

int cmd_fem(const Globals& g, const std::string& sr_path, const std::string& hr_path, const std::string& csv,
            std::ostream& out) {
  require(g.out, "--out", "fem");
  const Tensor map = frequency_error_map(read_png(sr_path), read_png(hr_path));
  write_png(g.out, render_error_map(map));
  if (!csv.empty()) {
    std::string text;
    for (std::size_t y = 0; y < map.dim(0); ++y) {
      for (std::size_t x = 0; x < map.dim(1); ++x) text += (x ? "," : "") + format_double(map.at(y, x));
      text += "\n";
    }
    write_text(csv, text);
  }
  out << "mean_error=" << sum(map) / static_cast<double>(map.size()) << " max_error=" << max_abs(map) << "\n";
  return kExitOk;
}

int report(const std::vector<GroupReport>& groups, std::ostream& out) {
  bool ok = true;
  for (const auto& r : groups) {
    out << r.summary() << "\n";
    ok = ok && r.pass();
  }
  return ok ? kExitOk : kExitFailure;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Arbitrary-scale super-resolution with frequency-aware implicit attention", "fit"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Random seed");
  app.add_option("--config", g.config, "key=value configuration file");
  app.add_option("--scale", g.scale, "Scale factor: \"h,w\" or one value (eval: comma list)");
  app.add_option("--out", g.out, "Output path");

  std::string data_dir, log_path;
  auto* train = app.add_subcommand("train", "Train on a directory of PNG images");
  train->add_option("data_dir", data_dir, "Directory of HR PNG images")->required();
  train->add_option("--log", log_path, "Loss log path (default: <out>.loss.csv)");

  std::string ckpt, input;
  auto* infer = app.add_subcommand("infer", "Upscale one PNG image");
  infer->add_option("checkpoint", ckpt)->required();
  infer->add_option("input", input)->required();

  std::string model, hr_dir;
  int shave_px = -1;
  bool use_luma = false;
  auto* eval = app.add_subcommand("eval", "PSNR table over a directory of HR images");
  eval->add_option("model", model, "Checkpoint path or \"bicubic\"")->required();
  eval->add_option("hr_dir", hr_dir)->required();
  eval->add_option("--shave", shave_px, "Border pixels ignored (default: ceil(scale) + 6)");
  eval->add_flag("--luma", use_luma, "Compare luma instead of RGB");

  std::string sr_path, hr_path, csv;
  auto* fem = app.add_subcommand("fem", "Frequency error map of an SR/HR pair");
  fem->add_option("sr", sr_path)->required();
  fem->add_option("hr", hr_path)->required();
  fem->add_option("--csv", csv, "Also write the raw map as CSV");

  auto* grad = app.add_subcommand("grad-check", "Finite-difference gradient checks");

  double perturb = 1.0;
  auto* self = app.add_subcommand("selftest", "FFT, gradient, attention and shape checks");
  self->add_option("--perturb-fft-norm", perturb)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*train) return cmd_train(g, data_dir, log_path, out);
    if (*infer) return cmd_infer(g, ckpt, input, out);
    if (*eval) return cmd_eval(g, model, hr_dir, shave_px, use_luma, out, err);
    if (*fem) return cmd_fem(g, sr_path, hr_path, csv, out);
    if (*grad) return report({gradient_group(g.seed.value_or(3))}, out);
    if (*self) {
      fft::testing::set_forward_norm_perturbation(perturb);
      const std::uint64_t s = g.seed.value_or(11);
      const int rc = report({fft_group(), gradient_group(s), attention_group(20, s), shape_group()}, out);
      fft::testing::set_forward_norm_perturbation(1.0);
      return rc;
    }
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace fit
