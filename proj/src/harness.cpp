#include "fit/harness.hpp"

#include <cmath>
#include <cstdio>
#include <optional>

#include "fit/config.hpp"
#include "fit/eval.hpp"
#include "fit/image_io.hpp"
#include "fit/parallel.hpp"

namespace fit {

EvalPair make_eval_pair(const Tensor& hr, double eta) {
  if (hr.rank() != 3) throw ShapeError("make_eval_pair expects (C, H, W), got " + shape_str(hr.dims()));
  if (!(eta >= 1.0)) throw UsageError("evaluation scale must be >= 1");
  const auto lh = static_cast<std::size_t>(std::floor(static_cast<double>(hr.dim(1)) / eta + 1e-9));
  const auto lw = static_cast<std::size_t>(std::floor(static_cast<double>(hr.dim(2)) / eta + 1e-9));
  if (lh == 0 || lw == 0) throw UsageError("image " + shape_str(hr.dims()) + " is too small for scale " + scale_label(eta));
  const auto hh = static_cast<std::size_t>(std::lround(static_cast<double>(lh) * eta));
  const auto hw = static_cast<std::size_t>(std::lround(static_cast<double>(lw) * eta));
  Tensor crop({hr.dim(0), hh, hw});
  for (std::size_t c = 0; c < hr.dim(0); ++c)
    for (std::size_t y = 0; y < hh; ++y)
      for (std::size_t x = 0; x < hw; ++x) crop.at(c, y, x) = hr.at(c, y, x);
  return {crop, quantize8(bicubic_resize_to(crop, lh, lw))};
}

std::string scale_label(double eta) { return "x" + format_double(eta); }

std::string EvalTable::to_csv() const {
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return std::string(buf);
  };
  std::string out = "image";
  for (double s : scales) out += "," + scale_label(s);
  out += "\n";
  for (const EvalRow& r : rows) {
    out += r.image;
    for (double v : r.psnr) out += "," + fmt(v);
    out += "\n";
  }
  out += "mean";
  for (double v : mean) out += "," + fmt(v);
  out += "\n# images=" + std::to_string(rows.size()) + " skipped=" + std::to_string(skipped) + "\n";
  return out;
}

EvalTable evaluate_directory(const std::filesystem::path& hr_dir, const Upscaler& up, const EvalOptions& opt) {
  if (opt.scales.empty()) throw UsageError("no evaluation scales given");
  const auto files = list_pngs(hr_dir);
  std::vector<std::optional<EvalRow>> rows(files.size());
  std::vector<std::string> errors(files.size());
  parallel_for(files.size(), opt.threads, [&](std::size_t i) {
    Tensor hr;
    try {
      hr = read_png(files[i]);
    } catch (const FormatError& e) {
      errors[i] = e.what();
      return;
    }
    EvalRow row{files[i].filename().string(), {}};
    for (double eta : opt.scales) {
      const EvalPair pair = make_eval_pair(hr, eta);
      const Tensor sr = up(pair.lr, eta);
      require_same_shape(sr, pair.hr, "evaluation output");
      const std::size_t border = opt.shave >= 0 ? static_cast<std::size_t>(opt.shave)
                                                : static_cast<std::size_t>(std::ceil(eta)) + 6;
      row.psnr.push_back(psnr(shave(sr, border), shave(pair.hr, border), 1.0, opt.luma));
    }
    rows[i] = std::move(row);
  });

  EvalTable t;
  t.scales = opt.scales;
  t.mean.assign(opt.scales.size(), 0.0);
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (!rows[i]) {
      ++t.skipped;
      t.warnings.push_back("skipping " + files[i].string() + ": " + errors[i]);
      continue;
    }
    for (std::size_t s = 0; s < opt.scales.size(); ++s) t.mean[s] += rows[i]->psnr[s];
    t.rows.push_back(std::move(*rows[i]));
  }
  if (!t.rows.empty())
    for (double& m : t.mean) m /= static_cast<double>(t.rows.size());
  return t;
}

}  // namespace fit
