#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "cocgan/checkpoint.hpp"
#include "cocgan/config.hpp"
#include "cocgan/data.hpp"
#include "cocgan/image_io.hpp"
#include "cocgan/metrics.hpp"
#include "cocgan/models.hpp"
#include "cocgan/training.hpp"

#ifndef COCGAN_VERSION
#define COCGAN_VERSION "dev"
#endif

namespace cocgan {

namespace fs = std::filesystem;

// Output directory built under "<dir>.partial" and renamed into place by
// commit(); dropped if the scope exits first.
class StagedDir {
 public:
  explicit StagedDir(const std::string& dir) : final_(dir), partial_(dir + ".partial") {
    if (dir.empty()) throw ConfigError("an output directory is required (--out)");
    if (fs::exists(final_)) throw ConfigError("output '" + dir + "' already exists");
    fs::remove_all(partial_);
    fs::create_directories(partial_);
  }
  StagedDir(const StagedDir&) = delete;
  StagedDir& operator=(const StagedDir&) = delete;
  ~StagedDir() {
    if (!done_) {
      std::error_code ec;
      fs::remove_all(partial_, ec);
    }
  }
  const fs::path& path() const { return partial_; }
  void commit() {
    fs::rename(partial_, final_);
    done_ = true;
  }

 private:
  fs::path final_, partial_;
  bool done_ = false;
};

// Single output file written beside its destination and renamed on commit.
class StagedFile {
 public:
  explicit StagedFile(const std::string& path)
      : final_(path), partial_(final_.parent_path() / (final_.stem().string() + ".partial" + final_.extension().string())) {
    if (path.empty()) throw ConfigError("an output file is required (--out)");
    if (final_.has_parent_path()) fs::create_directories(final_.parent_path());
  }
  StagedFile(const StagedFile&) = delete;
  StagedFile& operator=(const StagedFile&) = delete;
  ~StagedFile() {
    if (!done_) {
      std::error_code ec;
      fs::remove(partial_, ec);
    }
  }
  std::string path() const { return partial_.string(); }
  void commit() {
    fs::rename(partial_, final_);
    done_ = true;
  }

 private:
  fs::path final_, partial_;
  bool done_ = false;
};

inline Dataset load_dataset(const RunConfig& cfg) {
  Dataset ds;
  if (cfg.text("dataset") == "blobs") {
    ds = synthetic_blobs(cfg.count("blob_count"), cfg.count("classes"), cfg.count("seed"));
  } else {
    if (cfg.text("data_images").empty() || cfg.text("data_labels").empty())
      throw ConfigError("dataset=mnist needs data_images and data_labels");
    ds = read_idx(cfg.text("data_images"), cfg.text("data_labels"));
  }
  if (cfg.count("data_count") > 0) {
    if (cfg.count("data_count") > ds.count)
      throw ConfigError("data_count=" + cfg.text("data_count") + " exceeds the " + std::to_string(ds.count) +
                        " available images");
    ds = slice(ds, 0, cfg.count("data_count"));
  }
  if (ds.channels != cfg.count("channels"))
    throw ConfigError("dataset has " + std::to_string(ds.channels) + " channel(s) but channels=" + cfg.text("channels"));
  for (int y : ds.labels)
    if (y < 0 || static_cast<std::size_t>(y) >= cfg.count("classes"))
      throw ConfigError("dataset label " + std::to_string(y) + " is outside classes=" + cfg.text("classes"));
  return ds;
}

template <class Model>
RunConfig load_into(const std::string& path, const char* role, std::optional<Model>& model) {
  auto ck = read_checkpoint_file(path);
  auto it = ck.metadata.find("role");
  if (it == ck.metadata.end() || it->second != role)
    throw LoadError("'" + path + "' is not a " + std::string(role) + " checkpoint");
  auto cfg = config_from_metadata(ck.metadata, path);
  Rng rng(0);
  if constexpr (std::is_same_v<Model, Generator<float>>) {
    model.emplace(cfg.generator(), rng);
  } else {
    model.emplace(cfg.discriminator(), rng);
  }
  auto params = model->parameters();
  restore_params(ck, params);
  return cfg;
}

// Generates n images in fixed-size batches; conditional labels cycle 0..K-1.
inline Tensor<float> generate_images(const Generator<float>& gen, std::size_t n, std::uint64_t seed,
                                     std::vector<int>* labels_out = nullptr) {
  NoGradGuard ng;
  Rng rng(seed);
  const auto& mc = gen.config();
  std::vector<float> pixels;
  std::vector<int> all_labels;
  for (std::size_t lo = 0; lo < n; lo += 256) {
    const auto b = std::min<std::size_t>(256, n - lo);
    std::optional<std::vector<int>> y;
    if (mc.conditional) {
      y.emplace(b);
      for (std::size_t i = 0; i < b; ++i) (*y)[i] = static_cast<int>((lo + i) % mc.n_classes);
      all_labels.insert(all_labels.end(), y->begin(), y->end());
    }
    auto img = gen.forward(gen.sample_noise(b, rng), y);
    pixels.insert(pixels.end(), img.data().begin(), img.data().end());
  }
  if (labels_out) *labels_out = all_labels;
  return Tensor<float>({n, mc.image_size, mc.image_size, mc.channels}, pixels);
}

// Paired panels: input on the left, per-pixel cluster colour on the right.
// `assign` holds one cluster id per point of a side x side grid per image.
template <class T>
Raster cluster_panels(const Tensor<T>& images, const std::vector<std::size_t>& assign, std::size_t side,
                      std::size_t pad = 1) {
  const auto n = images.dim(0), h = images.dim(1), w = images.dim(2), ch = images.dim(3);
  if (h % side || w % side) throw ConfigError("visualize: grid side does not divide the image");
  if (assign.size() != n * side * side) throw ContractError("visualize: one assignment per point required");
  const auto sr = h / side, sc = w / side;
  Raster out(n * h + (n + 1) * pad, 2 * w + 3 * pad, 3);
  for (std::size_t k = 0; k < n; ++k) {
    const auto r0 = pad + k * (h + pad);
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        auto* left = out.at(r0 + r, pad + c);
        for (std::size_t q = 0; q < 3; ++q)
          left[q] = denormalize_pixel(images[((k * h + r) * w + c) * ch + (ch == 3 ? q : 0)]);
        const auto rgb = palette_color(assign[k * side * side + (r / sr) * side + c / sc]);
        std::copy(rgb.begin(), rgb.end(), out.at(r0 + r, 2 * pad + w + c));
      }
  }
  return out;
}

struct VisualizeResult {
  Raster panels;
  std::vector<std::size_t> assignment;  // [count * side * side]
  std::size_t side = 0;
};

inline VisualizeResult visualize_clusters(Discriminator<float>& disc, const Tensor<float>& images,
                                          const std::optional<std::vector<int>>& labels, std::size_t centers,
                                          std::size_t head) {
  disc.set_stage_centers(0, centers);
  const auto& layer = disc.first_cluster_layer();
  if (head >= layer.heads()) throw ConfigError("visualize: head " + std::to_string(head) + " does not exist");
  VisualizeResult r;
  r.side = disc.config().stage_sides()[0];
  {
    NoGradGuard ng;
    layer.set_capture(true);
    disc.forward(images, labels);
    layer.set_capture(false);
  }
  r.assignment = layer.captured().at(head);
  r.panels = cluster_panels(images, r.assignment, r.side);
  return r;
}

namespace detail {

inline std::string dashed(std::string s) {
  std::replace(s.begin(), s.end(), '_', '-');
  return s;
}

// Registers --key (and --dashed-key) for every config key in `keys`.
inline void add_key_options(CLI::App* app, std::map<std::string, std::string>& sink, const std::vector<std::string>& keys) {
  for (const auto& name : keys) {
    const auto* def = find_key(name);
    std::string flags = "--" + name;
    if (name.find('_') != std::string::npos) flags += ",--" + dashed(name);
    if (def->kind == KeyKind::Bool) {
      app->add_flag_callback(flags, [&sink, name] { sink[name] = "true"; }, def->help);
    } else {
      app->add_option_function<std::string>(flags, [&sink, name](const std::string& v) { sink[name] = v; },
                                            std::string(def->help) + " [" + def->fallback + "]");
    }
  }
}

inline std::vector<std::string> all_key_names() {
  std::vector<std::string> out;
  for (const auto& k : config_keys()) out.push_back(k.name);
  return out;
}

inline RunConfig resolve(const std::string& file, const std::vector<std::string>& sets,
                         const std::map<std::string, std::string>& flags) {
  std::vector<std::pair<std::string, std::string>> overrides;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  for (const auto& kv : flags) overrides.push_back(kv);
  return parse_config(file, overrides);
}

inline std::string join_args(int argc, const char* const* argv) {
  std::string out;
  for (int i = 0; i < argc; ++i) out += (i ? " " : "") + std::string(argv[i]);
  return out;
}

}  // namespace detail

inline int cmd_train(const RunConfig& cfg, const std::string& argv_line, std::ostream& out) {
  const auto data = load_dataset(cfg);
  StagedDir dir(cfg.text("out"));
  {
    std::ofstream m(dir.path() / "manifest.txt", std::ios::trunc);
    m << "# cocgan " << COCGAN_VERSION << "\n# command: " << argv_line << "\n" << cfg.manifest_body();
    if (!m) throw LoadError("train: cannot write manifest");
  }
  Rng rng(cfg.count("seed"));
  Generator<float> gen(cfg.generator(), rng);
  Discriminator<float> disc(cfg.discriminator(), rng);
  auto tc = cfg.train();
  tc.out_dir = dir.path().string();
  auto meta = cfg.as_metadata();
  meta["version"] = COCGAN_VERSION;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r) {
    out << "epoch " << r.epoch << "/" << tc.epochs << "  loss_D=" << r.loss_d << "  loss_G=" << r.loss_g
        << "  wall_ms=" << static_cast<long long>(r.wall_ms) << "\n"
        << std::flush;
  };
  train_run(data, gen, disc, tc, hooks, meta);
  dir.commit();
  out << "run written to " << cfg.text("out") << "\n";
  return 0;
}

inline int cmd_generate(const std::string& ckpt, const std::string& path, std::size_t grid, std::uint64_t seed,
                        bool want_conditional, std::size_t want_classes, std::ostream& out) {
  std::optional<Generator<float>> gen;
  load_into(ckpt, "generator", gen);
  const auto& mc = gen->config();
  if (want_conditional && !mc.conditional) throw ConfigError("generate: '" + ckpt + "' holds an unconditional generator");
  if (want_classes && (!mc.conditional || want_classes != mc.n_classes))
    throw ConfigError("generate: --classes " + std::to_string(want_classes) + " does not match the checkpoint");
  if (grid == 0) throw ConfigError("generate: --grid must be >= 1");
  NoGradGuard ng;
  Rng rng(seed);
  std::optional<std::vector<int>> y;
  if (mc.conditional) {
    y.emplace();
    for (std::size_t r = 0; r < grid; ++r)
      for (std::size_t c = 0; c < grid; ++c) y->push_back(static_cast<int>(r % mc.n_classes));
  }
  auto imgs = gen->forward(gen->sample_noise(grid * grid, rng), y);
  StagedFile file(path);
  write_image(file.path(), image_grid(imgs, grid, grid));
  file.commit();
  out << "wrote " << path << " (" << grid << "x" << grid << (mc.conditional ? ", row k = class k mod classes" : "")
      << ")\n";
  return 0;
}

inline int cmd_evaluate(const RunConfig& data_cfg, const std::string& ckpt, const std::string& fx_path,
                        std::size_t n_fake, std::size_t n_real, std::uint64_t seed, const std::string& path,
                        std::ostream& out) {
  std::optional<Generator<float>> gen;
  load_into(ckpt, "generator", gen);
  auto fx = load_extractor<float>(fx_path);
  const auto data = load_dataset(data_cfg);
  if (data.channels != gen->config().channels || fx.channels() != data.channels)
    throw ConfigError("evaluate: channel counts of generator, extractor and dataset differ");
  if (n_fake < 2) throw ConfigError("evaluate: --n must be >= 2");
  const auto real_n = std::min(n_real ? n_real : data.count, data.count);
  std::vector<std::size_t> idx(real_n);
  for (std::size_t i = 0; i < real_n; ++i) idx[i] = i;
  const auto real = data.batch<float>(idx);
  const auto fake = generate_images(*gen, n_fake, seed);
  const auto m = evaluate_metrics(fx, real, fake);
  StagedFile file(path);
  write_metric_report(file.path(), m);
  file.commit();
  std::ifstream back(path);
  out << back.rdbuf();
  return 0;
}

inline int cmd_visualize(const RunConfig& data_cfg, const std::string& ckpt, std::size_t centers, std::size_t count,
                         std::size_t first, std::size_t head, const std::string& path, std::ostream& out) {
  std::optional<Discriminator<float>> disc;
  load_into(ckpt, "discriminator", disc);
  const auto data = load_dataset(data_cfg);
  if (count == 0 || first + count > data.count) throw ConfigError("visualize: image range exceeds the dataset");
  std::vector<std::size_t> idx(count);
  for (std::size_t i = 0; i < count; ++i) idx[i] = first + i;
  std::optional<std::vector<int>> labels;
  if (disc->config().conditional) labels = data.batch_labels(idx);
  const auto images = data.batch<float>(idx);
  auto r = visualize_clusters(*disc, images, labels, centers, head);
  StagedFile img(path), tsv(path + ".tsv");
  write_image(img.path(), r.panels);
  {
    std::ofstream f(tsv.path(), std::ios::trunc);
    f << "# image\tcluster id per point, row-major " << r.side << "x" << r.side << "\n";
    const auto per = r.side * r.side;
    for (std::size_t k = 0; k < count; ++k) {
      f << first + k;
      for (std::size_t i = 0; i < per; ++i) f << (i ? ' ' : '\t') << r.assignment[k * per + i];
      f << "\n";
    }
    if (!f) throw LoadError("visualize: cannot write '" + path + ".tsv'");
  }
  img.commit();
  tsv.commit();
  out << "wrote " << path << " and " << path << ".tsv (" << centers << " centers, head " << head << ")\n";
  return 0;
}

inline int cmd_train_extractor(const RunConfig& data_cfg, const ExtractorTrainConfig& ec, std::size_t heldout,
                               const std::string& path, std::ostream& out) {
  const auto data = load_dataset(data_cfg);
  if (heldout == 0 || heldout >= data.count) throw ConfigError("train-extractor: --heldout must lie in [1, images)");
  const auto train = slice(data, 0, data.count - heldout), held = slice(data, data.count - heldout, heldout);
  Rng rng(ec.seed);
  FeatureExtractor<float> fx(data.channels, data_cfg.count("classes"), rng);
  const auto rep = train_feature_extractor(fx, train, held, ec);
  for (std::size_t e = 0; e < rep.accuracy.size(); ++e)
    out << "epoch " << e + 1 << "  loss=" << rep.loss[e] << "  heldout_accuracy=" << rep.accuracy[e] << "\n";
  if (!rep.qualified)
    throw InputError("train-extractor: held-out accuracy " + std::to_string(rep.final_accuracy) + " is below " +
                     std::to_string(ec.min_accuracy) + "; no extractor written");
  StagedFile file(path);
  save_extractor(file.path(), fx, rep);
  file.commit();
  out << "wrote " << path << " (accuracy " << rep.final_accuracy << ", hash " << fx.hash() << ")\n";
  return 0;
}

// Entry point for the command-line tool. Returns the process exit code:
// 0 on success, 2 for usage and configuration errors, 1 for runtime failures.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Context-cluster GAN: train, sample, evaluate and inspect point-set GAN models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", COCGAN_VERSION);

  const std::vector<std::string> data_keys = {"dataset", "data_images", "data_labels", "data_count",
                                              "blob_count", "classes", "channels", "seed"};

  std::string config_file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> train_flags, eval_flags, vis_flags, fx_flags;

  auto* train = app.add_subcommand("train", "Train a generator/discriminator pair (drop-last batching)");
  train->add_option("--config", config_file, "key=value file; flags override it");
  train->add_option("--set", sets, "extra key=value override (repeatable)");
  detail::add_key_options(train, train_flags, detail::all_key_names());

  std::string ckpt, out_path;
  std::size_t grid = 8, classes = 0, n_fake = 1000, n_real = 0, centers = 4, count = 8, first = 0, head = 0;
  std::uint64_t seed = 1;
  bool conditional = false;

  auto* gen = app.add_subcommand("generate", "Write an n x n sample grid from a generator checkpoint");
  gen->add_option("--checkpoint", ckpt, "generator checkpoint")->required();
  gen->add_option("--out", out_path, "output .pgm/.ppm, or .png")->required();
  gen->add_option("--grid", grid, "grid side")->capture_default_str();
  gen->add_option("--seed", seed, "noise seed")->capture_default_str();
  gen->add_flag("--conditional", conditional, "require a conditional checkpoint; row k uses class k");
  gen->add_option("--classes", classes, "expected class count of a conditional checkpoint");

  std::string fx_path;
  auto* eval = app.add_subcommand("evaluate", "FID, KID and IS between generated samples and a dataset");
  eval->add_option("--checkpoint", ckpt, "generator checkpoint")->required();
  eval->add_option("--extractor", fx_path, "qualified extractor from train-extractor")->required();
  eval->add_option("--out", out_path, "metric report (key=value)")->required();
  eval->add_option("--n", n_fake, "generated samples")->capture_default_str();
  eval->add_option("--n-real", n_real, "real samples (0: whole dataset)")->capture_default_str();
  eval->add_option("--sample-seed", seed, "noise seed")->capture_default_str();
  detail::add_key_options(eval, eval_flags, data_keys);

  auto* vis = app.add_subcommand("visualize", "Colour each input pixel by its first-stage cluster");
  vis->add_option("--checkpoint", ckpt, "discriminator checkpoint")->required();
  vis->add_option("--out", out_path, "paired-panel .ppm or .png; assignments go to <out>.tsv")->required();
  vis->add_option("--centers", centers, "first-stage centers override")->capture_default_str();
  vis->add_option("--count", count, "number of inputs")->capture_default_str();
  vis->add_option("--first", first, "index of the first input")->capture_default_str();
  vis->add_option("--head", head, "cluster head to draw")->capture_default_str();
  detail::add_key_options(vis, vis_flags, data_keys);

  ExtractorTrainConfig ec;
  std::size_t heldout = 2000;
  auto* fx = app.add_subcommand("train-extractor", "Train the classifier used for metrics");
  fx->add_option("--out", out_path, "extractor checkpoint")->required();
  fx->add_option("--epochs", ec.epochs, "epochs")->capture_default_str();
  fx->add_option("--batch", ec.batch, "batch size")->capture_default_str();
  fx->add_option("--lr", ec.lr, "Adam learning rate")->capture_default_str();
  fx->add_option("--heldout", heldout, "last N images held out for the accuracy gate")->capture_default_str();
  fx->add_option("--min-accuracy", ec.min_accuracy, "accuracy gate")->capture_default_str();
  detail::add_key_options(fx, fx_flags, data_keys);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "cocgan: error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*train) return cmd_train(detail::resolve(config_file, sets, train_flags), detail::join_args(argc, argv), out);
    if (*gen) return cmd_generate(ckpt, out_path, grid, seed, conditional, classes, out);
    if (*eval) return cmd_evaluate(detail::resolve("", {}, eval_flags), ckpt, fx_path, n_fake, n_real, seed, out_path, out);
    if (*vis) return cmd_visualize(detail::resolve("", {}, vis_flags), ckpt, centers, count, first, head, out_path, out);
    if (*fx) {
      auto dc = detail::resolve("", {}, fx_flags);
      ec.seed = dc.count("seed");
      return cmd_train_extractor(dc, ec, heldout, out_path, out);
    }
  } catch (const ConfigError& e) {
    err << "cocgan: error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "cocgan: error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace cocgan
