#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cocgan/checkpoint.hpp"
#include "cocgan/data.hpp"
#include "cocgan/image_io.hpp"
#include "cocgan/losses.hpp"
#include "cocgan/models.hpp"
#include "cocgan/optim.hpp"

namespace cocgan {

enum class ClipMode { Weights, GradNorm, None };

inline ClipMode parse_clip_mode(const std::string& s) {
  if (s == "weights") return ClipMode::Weights;
  if (s == "gradnorm") return ClipMode::GradNorm;
  if (s == "none") return ClipMode::None;
  throw ConfigError("unknown clip_mode '" + s + "' (expected weights, gradnorm or none)");
}
inline std::string to_string(ClipMode m) {
  return m == ClipMode::Weights ? "weights" : m == ClipMode::GradNorm ? "gradnorm" : "none";
}

struct TrainConfig {
  GanMode mode = GanMode::Vanilla;
  bool conditional = false;
  double lr = 2e-4;
  double lr_min = 0.0;
  std::size_t schedule_horizon = 0;  // 0: the number of epochs
  std::size_t batch = 256;
  std::size_t epochs = 50;
  std::size_t n_critic = 5;
  double clip_c = 0.01;
  ClipMode clip_mode = ClipMode::Weights;
  double beta1 = 0.5, beta2 = 0.999, eps = 1e-8;
  double rms_decay = 0.99;
  GenLoss g_loss = GenLoss::NonSaturating;
  std::uint64_t seed = 1;
  std::size_t sample_every = 1;      // epochs between sample grids; 0 disables
  std::size_t checkpoint_every = 1;  // epochs between checkpoints; the last epoch is always saved
  std::size_t sample_grid = 8;
  bool sample_png = false;           // also write samples_epochN.png
  std::string out_dir;  // empty: nothing is written

  std::size_t horizon() const { return schedule_horizon ? schedule_horizon : epochs; }

  void validate() const {
    if (!(lr > 0)) throw ConfigError("train: lr must be positive");
    if (lr_min < 0 || lr_min > lr) throw ConfigError("train: lr_min must lie in [0, lr]");
    if (batch == 0) throw ConfigError("train: batch must be >= 1");
    if (epochs == 0) throw ConfigError("train: epochs must be >= 1");
    if (n_critic == 0) throw ConfigError("train: n_critic must be >= 1");
    if (!(clip_c > 0)) throw ConfigError("train: clip_c must be positive");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("train: Adam betas must lie in [0, 1)");
    if (!(eps > 0)) throw ConfigError("train: eps must be positive");
    if (!(rms_decay > 0 && rms_decay < 1)) throw ConfigError("train: rms_decay must lie in (0, 1)");
    if (sample_grid == 0) throw ConfigError("train: sample_grid must be >= 1");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0, loss_d = 0, loss_g = 0;
  double w_gap = 0;  // mean over critic updates of E D(x) - E D(G(z))
  double wall_ms = 0;
};

struct UpdateEvent {
  enum Kind { Discriminator, Generator } kind;
  std::size_t epoch, batch;
};

struct TrainHooks {
  std::function<void(const UpdateEvent&)> on_update;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  std::size_t d_updates = 0, g_updates = 0;
};

inline std::string format_log_line(const EpochRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu\t%.9g\t%.9g\t%.9g\t%.0f", r.epoch, r.lr, r.loss_d, r.loss_g, r.wall_ms);
  return buf;
}

template <class T>
double mean_value(const Tensor<T>& t) {
  double s = 0;
  for (T v : t.data()) s += v;
  return t.size() ? s / t.size() : 0.0;
}

inline constexpr const char* kLogHeader = "# epoch\tlr\tloss_D\tloss_G\twall_ms";

// Labels for a conditional sample grid: row k shows class k (mod classes).
inline std::vector<int> grid_labels(std::size_t rows, std::size_t cols, std::size_t n_classes) {
  std::vector<int> y;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) y.push_back(static_cast<int>(r % n_classes));
  return y;
}

template <class T>
void save_training_checkpoint(const std::string& path, const ParamList<T>& params, const Optimizer<T>& opt,
                              const Rng& rng, std::map<std::string, std::string> metadata) {
  Checkpoint ck;
  ck.params = snapshot_params(params);
  ck.optimizer = opt.save();
  ck.rng_state = rng.state();
  ck.metadata = std::move(metadata);
  write_checkpoint_file(path, ck);
}

// Adversarial training. Vanilla: one discriminator update then one generator
// update per batch (Adam). WGAN: n_critic critic updates on the batch's real
// images with fresh noise each, each followed by clipping, then one generator
// update (RMSProp). The learning rate follows a cosine schedule per epoch.
template <class T>
TrainResult train_run(const Dataset& data, Generator<T>& gen, Discriminator<T>& disc, const TrainConfig& cfg,
                      const TrainHooks& hooks = {}, const std::map<std::string, std::string>& metadata = {}) {
  cfg.validate();
  const bool wgan = cfg.mode == GanMode::Wgan;
  if (wgan == disc.config().sigmoid_head)
    throw ConfigError(wgan ? "train: WGAN mode needs a discriminator without the sigmoid head"
                           : "train: vanilla mode needs the sigmoid discriminator head");
  if (cfg.conditional != gen.config().conditional || cfg.conditional != disc.config().conditional)
    throw ConfigError("train: conditional flag disagrees with the models");
  if (data.count < cfg.batch)
    throw ConfigError("train: dataset has " + std::to_string(data.count) + " images, fewer than one batch");
  if (data.channels != gen.config().channels || data.height != gen.config().image_size)
    throw ConfigError("train: dataset images do not match the model's image shape");

  OptimConfig oc;
  oc.kind = wgan ? OptimKind::RMSProp : OptimKind::Adam;
  oc.lr = cfg.lr;
  oc.beta1 = cfg.beta1;
  oc.beta2 = cfg.beta2;
  oc.eps = cfg.eps;
  oc.decay = cfg.rms_decay;
  const auto g_params = gen.parameters();
  const auto d_params = disc.parameters();
  Optimizer<T> opt_g(g_params, oc), opt_d(d_params, oc);
  Rng rng(cfg.seed);
  auto& tape = active_tape<T>();

  namespace fs = std::filesystem;
  const bool write = !cfg.out_dir.empty();
  std::ofstream log;
  Tensor<T> grid_noise;
  std::optional<std::vector<int>> grid_y;
  if (write) {
    fs::create_directories(cfg.out_dir);
    log.open(fs::path(cfg.out_dir) / "log.tsv", std::ios::trunc);
    if (!log) throw LoadError("train: cannot write log in '" + cfg.out_dir + "'");
    log << kLogHeader << "\n";
    Rng grid_rng(cfg.seed + 1);
    grid_noise = gen.sample_noise(cfg.sample_grid * cfg.sample_grid, grid_rng);
    if (cfg.conditional) grid_y = grid_labels(cfg.sample_grid, cfg.sample_grid, gen.config().n_classes);
  }

  auto meta = [&](const char* role, std::size_t epoch) {
    auto m = metadata;
    m["role"] = role;
    m["epoch"] = std::to_string(epoch);
    m["mode"] = to_string(cfg.mode);
    m["conditional"] = cfg.conditional ? "1" : "0";
    m["channels"] = std::to_string(gen.config().channels);
    return m;
  };

  double last_gd = 0, last_gg = 0;
  auto check_finite = [&](double v, const char* what, std::size_t epoch, std::size_t b, double lr) {
    if (std::isfinite(v)) return;
    char buf[256];
    std::snprintf(buf, sizeof buf, "train: non-finite %s at epoch %zu batch %zu (lr=%.6g, |grad D|=%.6g, |grad G|=%.6g)",
                  what, epoch, b, lr, last_gd, last_gg);
    if (write) std::ofstream(fs::path(cfg.out_dir) / "diagnostics.txt") << buf << "\n";
    throw NumericError(buf);
  };

  auto draw_labels = [&](std::size_t n) {
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng.below(gen.config().n_classes));
    return y;
  };

  TrainResult result;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = cosine_lr(cfg.lr, static_cast<double>(epoch - 1), static_cast<double>(cfg.horizon()), cfg.lr_min);
    opt_g.set_lr(lr);
    opt_d.set_lr(lr);
    double sum_d = 0, sum_g = 0, sum_gap = 0;
    std::size_t n_d = 0, n_g = 0;
    const auto batches = batch_iter(data.count, cfg.batch, cfg.seed, epoch);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto real = data.batch<T>(batches[b]);
      std::optional<std::vector<int>> real_y;
      if (cfg.conditional) real_y = data.batch_labels(batches[b]);

      const std::size_t d_steps = wgan ? cfg.n_critic : 1;
      for (std::size_t k = 0; k < d_steps; ++k) {
        Tensor<T> fake;
        std::optional<std::vector<int>> fake_y;
        if (cfg.conditional) fake_y = draw_labels(cfg.batch);
        {
          NoGradGuard ng;
          fake = gen.forward(gen.sample_noise(cfg.batch, rng), fake_y);
        }
        opt_d.zero_grad();
        auto d_real = disc.forward(real, real_y);
        auto d_fake = disc.forward(fake, fake_y);
        auto loss = wgan ? critic_loss(d_real, d_fake) : discriminator_loss(d_real, d_fake);
        const double lv = loss.item();
        check_finite(lv, "loss_D", epoch, b, lr);
        backward(loss);
        tape.clear();
        if (!wgan || cfg.clip_mode != ClipMode::GradNorm) last_gd = grad_norm(d_params);
        if (wgan && cfg.clip_mode == ClipMode::GradNorm) {
          grad_norm_clip(d_params, cfg.clip_c);
          last_gd = grad_norm(d_params);
        }
        opt_d.step();
        if (wgan && cfg.clip_mode == ClipMode::Weights) weight_clip(d_params, cfg.clip_c);
        sum_d += lv;
        sum_gap += mean_value(d_real) - mean_value(d_fake);
        ++n_d;
        ++result.d_updates;
        if (hooks.on_update) hooks.on_update({UpdateEvent::Discriminator, epoch, b});
      }

      std::optional<std::vector<int>> gen_y;
      if (cfg.conditional) gen_y = draw_labels(cfg.batch);
      opt_g.zero_grad();
      auto d_gen = disc.forward(gen.forward(gen.sample_noise(cfg.batch, rng), gen_y), gen_y);
      auto loss = wgan ? critic_generator_loss(d_gen) : generator_loss(d_gen, cfg.g_loss);
      const double lv = loss.item();
      check_finite(lv, "loss_G", epoch, b, lr);
      backward(loss);
      tape.clear();
      last_gg = grad_norm(g_params);
      opt_g.step();
      opt_d.zero_grad();
      sum_g += lv;
      ++n_g;
      ++result.g_updates;
      if (hooks.on_update) hooks.on_update({UpdateEvent::Generator, epoch, b});
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.loss_d = n_d ? sum_d / n_d : 0.0;
    rec.loss_g = n_g ? sum_g / n_g : 0.0;
    rec.w_gap = n_d ? sum_gap / n_d : 0.0;

    if (write) {
      const auto dir = fs::path(cfg.out_dir);
      if (cfg.sample_every && epoch % cfg.sample_every == 0) {
        NoGradGuard ng;
        auto imgs = gen.forward(grid_noise, grid_y);
        const auto grid = image_grid(imgs, cfg.sample_grid, cfg.sample_grid);
        const auto stem = dir / ("samples_epoch" + std::to_string(epoch));
        write_pnm(stem.string() + (gen.config().channels == 3 ? ".ppm" : ".pgm"), grid);
        if (cfg.sample_png) write_png(stem.string() + ".png", grid);
      }
      if ((cfg.checkpoint_every && epoch % cfg.checkpoint_every == 0) || epoch == cfg.epochs) {
        save_training_checkpoint((dir / ("gen_epoch" + std::to_string(epoch) + ".cocg")).string(), g_params, opt_g, rng,
                                 meta("generator", epoch));
        save_training_checkpoint((dir / ("disc_epoch" + std::to_string(epoch) + ".cocg")).string(), d_params, opt_d, rng,
                                 meta("discriminator", epoch));
      }
    }
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (write) log << format_log_line(rec) << "\n" << std::flush;
    result.log.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }
  if (write) {
    const auto dir = fs::path(cfg.out_dir);
    fs::copy_file(dir / ("gen_epoch" + std::to_string(cfg.epochs) + ".cocg"), dir / "gen.cocg",
                  fs::copy_options::overwrite_existing);
    fs::copy_file(dir / ("disc_epoch" + std::to_string(cfg.epochs) + ".cocg"), dir / "disc.cocg",
                  fs::copy_options::overwrite_existing);
  }
  return result;
}

}  // namespace cocgan
