// skinseg: command-line front end for preprocessing, training, segmentation,
// evaluation, cross-validation, kernel export and synthetic data.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "skinseg/skinseg.hpp"

namespace fs = std::filesystem;
using namespace skinseg;

namespace {

/// Flag values keyed by config-file key. Every tunable flag shares its name
/// with the config key it overrides.
struct Tunables {
  std::optional<std::string> config_path;
  std::map<std::string, std::optional<std::string>> values;
  bool deterministic = false;

  void add(CLI::App* app, const std::string& key, const std::string& help) {
    app->add_option("--" + key, values[key], help);
  }

  /// Built-in defaults, then the config file, then explicit flags.
  RunConfig resolve() const {
    RunConfig cfg;
    if (config_path) cfg = load_run_config(*config_path, cfg);
    std::ostringstream lines;
    for (const auto& [key, value] : values)
      if (value) lines << key << " = " << *value << '\n';
    if (deterministic) lines << "deterministic = true\n";
    return parse_run_config(lines.str(), cfg);
  }
};

std::string def(const std::string& what, const std::string& value, bool reference = false) {
  return what + " (default " + value + (reference ? ", reference setting)" : ")");
}

void add_config(CLI::App* app, Tunables& t) {
  app->add_option("--config", t.config_path, "flat key = value file; explicit flags take precedence");
}

void add_preprocess_flags(CLI::App* app, Tunables& t) {
  t.add(app, "gf-radius", def("guided filter window radius; window side is 2r+1", "50, a 100-pixel neighborhood", true));
  t.add(app, "gf-eps", def("guided filter regularization", "0.01"));
}

void add_geometry_flags(CLI::App* app, Tunables& t) {
  t.add(app, "image-height", def("working image height", "400", true));
  t.add(app, "image-width", def("working image width", "600", true));
  t.add(app, "local-side", def("local patch side", "31", true));
  t.add(app, "global-side", def("global patch side before downsampling", "201", true));
  t.add(app, "band-smoothing", def("mean filter applied to the replicated border band", "5"));
}

void add_segment_flags(CLI::App* app, Tunables& t) {
  t.add(app, "tau", def("lesion probability threshold, P > tau", "0.6", true));
  t.add(app, "dilation-radius", def("disk radius of the final dilation", "10", true));
  t.add(app, "inference-batch", def("pixels per inference batch", "64"));
  t.add(app, "threads", def("worker threads, 0 = all cores", "0"));
}

void add_training_flags(CLI::App* app, Tunables& t) {
  t.add(app, "mode", def("network paths: dual, local or global", "dual", true));
  t.add(app, "maps", def("feature maps per convolution", "60", true));
  t.add(app, "hidden", def("fusion layer width", "500", true));
  t.add(app, "lr", def("SGD learning rate", "0.01"));
  t.add(app, "momentum", def("SGD momentum", "0.9"));
  t.add(app, "batch", def("SGD minibatch size", "64"));
  t.add(app, "epochs", def("training epochs", "10"));
  t.add(app, "patches-per-image", def("training pairs per image, split evenly over lesion, normal and border", "4500", true));
  t.add(app, "margin-radius", def("disk radius of the border margin used for sampling", "15", true));
  t.add(app, "seed", def("master seed for every random draw", "1"));
  app->add_flag("--deterministic", t.deterministic, "serial gradient reduction for bit-identical models");
}

void print_metrics(const ConfusionCounts& c) {
  const auto m = metrics(c);
  std::cout << "tp " << c.tp << " fp " << c.fp << " tn " << c.tn << " fn " << c.fn << '\n'
            << "sensitivity " << format_metric(m.sensitivity) << '\n'
            << "specificity " << format_metric(m.specificity) << '\n'
            << "accuracy " << format_metric(m.accuracy) << '\n';
}

std::vector<LabeledImage> load_training_images(const DatasetManifest& manifest, const RunConfig& cfg) {
  const auto seg = cfg.segmentation();
  std::vector<LabeledImage> images;
  images.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries)
    images.push_back({prepare_image(load_image(e.image), seg), prepare_mask(load_mask(e.mask), cfg.geometry)});
  return images;
}

int run_preprocess(const Tunables& t, const fs::path& in, const fs::path& out) {
  const auto cfg = t.resolve();
  save_png(preprocess_image(load_image(in), cfg.guided_filter), out);
  return 0;
}

int run_sample_patches(const Tunables& t, const fs::path& image, const fs::path& mask, const fs::path& out, int count) {
  const auto cfg = t.resolve();
  const auto prepared = prepare_image(load_image(image), cfg.segmentation());
  const auto gt = prepare_mask(load_mask(mask), cfg.geometry);
  Rng rng = make_rng(cfg.seed, SeedPurpose::sampling);
  const auto coords = sample_training_coords(gt, count, rng, cfg.margin_radius);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw InputError("cannot create directory '" + out.string() + "': " + ec.message());
  const PaddedImage padded(prepared, cfg.geometry);
  std::ofstream csv(out / "patches.csv");
  if (!csv) throw InputError("cannot write '" + (out / "patches.csv").string() + "'");
  csv << "index,row,col,region,label,local,global\n";
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const auto& sc = coords[i];
    const auto pair = extract_pair(padded, sc.coord, cfg.geometry);
    char stem[32];
    std::snprintf(stem, sizeof stem, "%05zu", i);
    const std::string local = std::string(stem) + "_local.png", global = std::string(stem) + "_global.png";
    save_png(pair.local, out / local);
    save_png(pair.global, out / global);
    csv << i << ',' << sc.coord.row << ',' << sc.coord.col << ',' << region_name(sc.region) << ','
        << static_cast<int>(gt(sc.coord.row, sc.coord.col)) << ',' << local << ',' << global << '\n';
  }
  std::cout << "wrote " << coords.size() << " patch pairs to " << out.string() << '\n';
  return 0;
}

int run_train(const Tunables& t, const fs::path& manifest_path, const fs::path& out) {
  const auto cfg = t.resolve();
  const auto manifest = load_manifest(manifest_path);
  if (manifest.entries.empty()) throw InputError("manifest '" + manifest_path.string() + "' has no entries");
  const auto images = load_training_images(manifest, cfg);
  std::cout << "training " << nn::mode_name(cfg.mode) << " network on " << images.size() << " images, "
            << cfg.patches_per_image << " pairs each" << std::endl;
  const auto result = train_on_images(images, cfg.training(), cfg.geometry, [](int epoch, double loss) {
    std::cout << "epoch " << epoch << " loss " << loss << std::endl;
  });
  nn::save_model(result.net, out);
  std::cout << "model written to " << out.string() << '\n';
  return 0;
}

struct SegmentOutputs {
  fs::path mask;
  std::optional<fs::path> map, overlay;
};

int run_segment(const Tunables& t, const fs::path& model_path, const fs::path& image_path, const SegmentOutputs& out) {
  const auto cfg = t.resolve();
  const auto net = nn::load_model(model_path);
  const auto raw = load_image(image_path);
  const auto seg_cfg = cfg.segmentation();
  const auto result = segment(net, raw, seg_cfg);
  // Outputs are returned at the resolution of the input photograph.
  const int h = raw.height(), w = raw.width();
  const auto mask = resize(result.mask, h, w, Interpolation::nearest);
  save_mask(mask, out.mask);
  if (out.map) save_png(resize(result.probability, h, w, Interpolation::bilinear), *out.map);
  if (out.overlay) save_overlay(raw, mask, *out.overlay);
  std::cout << "lesion pixels " << count_nonzero(mask) << " of " << mask.pixel_count() << '\n';
  return 0;
}

int run_evaluate(const fs::path& pred_path, const fs::path& gt_path, const std::optional<fs::path>& csv_path) {
  const auto pred = load_mask(pred_path);
  const auto gt = load_mask(gt_path);
  require_same_shape(pred, gt, "prediction and ground truth");
  const auto c = confusion(pred, gt);
  print_metrics(c);
  if (csv_path) {
    std::ofstream csv(*csv_path, std::ios::trunc);
    if (!csv) throw InputError("cannot write '" + csv_path->string() + "'");
    const auto m = metrics(c);
    csv << "tp,fp,tn,fn,sensitivity,specificity,accuracy\n"
        << c.tp << ',' << c.fp << ',' << c.tn << ',' << c.fn << ',' << format_metric(m.sensitivity) << ','
        << format_metric(m.specificity) << ',' << format_metric(m.accuracy) << '\n';
  }
  return 0;
}

int run_cross_validate(const Tunables& t, const fs::path& manifest_path, const std::optional<fs::path>& report_path,
                       std::optional<int> only_fold) {
  const auto cfg = t.resolve();
  auto cv = cfg.cross_validation();
  cv.only_fold = only_fold;
  const auto manifest = load_manifest(manifest_path);
  const auto report = run_cv(manifest, cv, {[](const std::string& line) { std::cout << line << std::endl; }});
  const auto csv = report_csv(report);
  std::cout << csv;
  if (report_path) write_report_csv(report, *report_path);
  return 0;
}

int run_inspect_kernels(const fs::path& model_path, const fs::path& out, const KernelGridLayout& layout) {
  const auto net = nn::load_model(model_path);
  const auto grid = kernel_grid(net, layout);
  save_png(grid, out);
  std::cout << "kernel grid " << grid.height() << "x" << grid.width() << " written to " << out.string() << '\n';
  return 0;
}

int run_synth_gen(int n, const fs::path& out, std::uint64_t seed) {
  const auto manifest = generate_synthetic_dataset(n, seed, out);
  std::cout << "wrote " << manifest.entries.size() << " synthetic images to " << out.string() << '\n';
  return 0;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

int fail(int code, const std::string& what) {
  std::cerr << "skinseg: error: " << one_line(what) << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lesion segmentation in skin photographs with a two-path patch CNN"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every command");
  Tunables t;

  fs::path in, out, image, mask, manifest, model, pred, gt;
  std::optional<fs::path> out_map, out_overlay, csv_path, report_path;
  std::optional<int> only_fold;
  int patch_count = 9, synth_n = 8;
  std::uint64_t synth_seed = 1;
  KernelGridLayout layout;

  auto* pre = app.add_subcommand("preprocess", "guided-filter an image at its own resolution");
  pre->add_option("input", in, "input image (PNG or JPEG)")->required();
  pre->add_option("output", out, "output PNG")->required();
  add_config(pre, t);
  add_preprocess_flags(pre, t);

  auto* sp = app.add_subcommand("sample-patches", "export sampled local/global training pairs of one image");
  sp->add_option("--image", image, "input image")->required();
  sp->add_option("--mask", mask, "ground-truth mask")->required();
  sp->add_option("--out", out, "output directory")->required();
  sp->add_option("--n", patch_count, "number of pairs, a multiple of 3")->capture_default_str();
  add_config(sp, t);
  add_preprocess_flags(sp, t);
  add_geometry_flags(sp, t);
  t.add(sp, "margin-radius", def("disk radius of the border margin", "15", true));
  t.add(sp, "seed", def("sampling seed", "1"));

  auto* tr = app.add_subcommand("train", "train a network on a dataset manifest");
  tr->add_option("--manifest", manifest, "CSV with header image,mask,category")->required();
  tr->add_option("--out", out, "model file to write")->required();
  add_config(tr, t);
  add_preprocess_flags(tr, t);
  add_geometry_flags(tr, t);
  add_training_flags(tr, t);
  t.add(tr, "threads", def("gradient worker threads, 0 = all cores", "0"));

  auto* sg = app.add_subcommand("segment", "segment one image with a trained model");
  sg->add_option("--model", model, "model file")->required();
  sg->add_option("image", image, "input image")->required();
  sg->add_option("--out-mask", out, "binary mask PNG")->required();
  sg->add_option("--out-map", out_map, "lesion probability map PNG");
  sg->add_option("--out-overlay", out_overlay, "image with the mask contour drawn in blue");
  add_config(sg, t);
  add_preprocess_flags(sg, t);
  add_geometry_flags(sg, t);
  add_segment_flags(sg, t);

  auto* ev = app.add_subcommand("evaluate", "compare a predicted mask with ground truth");
  ev->add_option("--pred", pred, "predicted mask")->required();
  ev->add_option("--gt", gt, "ground-truth mask")->required();
  ev->add_option("--csv", csv_path, "also write the metrics as CSV");

  auto* cv = app.add_subcommand("cross-validate", "k-fold train/segment/evaluate over a manifest");
  cv->add_option("--manifest", manifest, "CSV with header image,mask,category")->required();
  cv->add_option("--report", report_path, "report CSV to write");
  cv->add_option("--fold", only_fold, "run a single fold only");
  add_config(cv, t);
  add_preprocess_flags(cv, t);
  add_geometry_flags(cv, t);
  add_segment_flags(cv, t);
  add_training_flags(cv, t);
  t.add(cv, "folds", def("number of folds", "4", true));

  auto* ik = app.add_subcommand("inspect-kernels", "tile the first-layer kernels of both paths into a PNG");
  ik->add_option("--model", model, "model file")->required();
  ik->add_option("--out", out, "output PNG")->required();
  ik->add_option("--scale", layout.scale, "pixels per kernel tap")->capture_default_str();
  ik->add_option("--pad", layout.pad, "gutter pixels after each thumbnail")->capture_default_str();

  auto* sy = app.add_subcommand("synth-gen", "write a synthetic dataset with manifest");
  sy->add_option("--n", synth_n, "number of images, at least 4")->capture_default_str();
  sy->add_option("--out", out, "output directory")->required();
  sy->add_option("--seed", synth_seed, "generator seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(2, e.what());
  }

  try {
    if (*pre) return run_preprocess(t, in, out);
    if (*sp) return run_sample_patches(t, image, mask, out, patch_count);
    if (*tr) return run_train(t, manifest, out);
    if (*sg) return run_segment(t, model, image, {out, out_map, out_overlay});
    if (*ev) return run_evaluate(pred, gt, csv_path);
    if (*cv) return run_cross_validate(t, manifest, report_path, only_fold);
    if (*ik) return run_inspect_kernels(model, out, layout);
    if (*sy) return run_synth_gen(synth_n, out, synth_seed);
  } catch (const InputError& e) {
    return fail(2, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(2, e.what());
  } catch (const std::out_of_range& e) {
    return fail(2, e.what());
  } catch (const std::exception& e) {
    return fail(1, e.what());
  }
  return fail(2, "no command given");
}
