#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "cocgan/cocblocks.hpp"
#include "cocgan/error.hpp"
#include "cocgan/module.hpp"
#include "cocgan/ops.hpp"
#include "cocgan/pointset.hpp"
#include "cocgan/random.hpp"

namespace cocgan {

enum class Role { Generator, Discriminator };

struct StageConfig {
  std::size_t sample_r = 1;
  std::size_t dim_in = 1;   // width entering the increaser/reducer
  std::size_t dim_out = 1;  // width of the stage's CoC blocks
  std::size_t n_blocks = 1;
  std::size_t heads = 4;
  std::size_t head_dim = 16;
  std::size_t mlp_r = 4;
  std::size_t centers = 1;
};

struct ModelConfig {
  Role role = Role::Generator;
  std::array<StageConfig, 3> stages{};
  std::size_t channels = 1;
  std::size_t image_size = 28;
  std::size_t seed_dim = 128;
  bool conditional = false;
  std::size_t n_classes = 10;
  std::size_t embed_dim = 64;
  bool sigmoid_head = true;  // discriminator only; off for the WGAN critic

  std::size_t noise_dim() const { return conditional ? seed_dim - embed_dim : seed_dim; }

  // Grid side entering each stage's blocks.
  std::array<std::size_t, 3> stage_sides() const {
    std::array<std::size_t, 3> sides{};
    std::size_t side = role == Role::Generator ? 1 : image_size;
    for (std::size_t s = 0; s < 3; ++s) {
      if (role == Role::Generator) {
        side *= stages[s].sample_r;
      } else {
        if (stages[s].sample_r == 0 || side % stages[s].sample_r)
          throw ConfigError("model: stage " + std::to_string(s + 1) + " sample_r does not divide grid side " +
                            std::to_string(side));
        side /= stages[s].sample_r;
      }
      sides[s] = side;
    }
    return sides;
  }

  void validate() const {
    for (std::size_t s = 0; s < 3; ++s) {
      const auto& st = stages[s];
      const std::string tag = "model: stage " + std::to_string(s + 1);
      if (!st.sample_r || !st.dim_in || !st.dim_out || !st.heads || !st.head_dim || !st.mlp_r || !st.centers)
        throw ConfigError(tag + " has a zero-valued hyperparameter");
      if (!is_perfect_square(st.centers)) throw ConfigError(tag + " centers=" + std::to_string(st.centers) + " is not a perfect square");
      if (s > 0 && stages[s - 1].dim_out != st.dim_in) throw ConfigError(tag + " dim_in does not match previous stage");
    }
    const auto sides = stage_sides();
    for (std::size_t s = 0; s < 3; ++s) validate_center_grid(sides[s], sides[s], stages[s].centers);
    if (role == Role::Generator) {
      if (stages[0].dim_in != seed_dim) throw ConfigError("model: generator stage 1 must consume the seed width");
      if (stages[2].dim_out != channels) throw ConfigError("model: generator must end at the channel count");
      if (sides[2] != image_size) throw ConfigError("model: generator stages do not reach the image size");
    } else {
      if (stages[0].dim_in != channels) throw ConfigError("model: discriminator stage 1 must consume the channels");
      if (sides[2] != 1) throw ConfigError("model: discriminator stages must end at a single point");
    }
    if (conditional && (embed_dim == 0 || embed_dim >= seed_dim))
      throw ConfigError("model: conditional embed_dim must leave room for noise in the seed");
    if (conditional && n_classes == 0) throw ConfigError("model: conditional model needs classes");
  }
};

// Generator 1x1 -> 2x2 -> 4x4 -> 28x28 with widths 128 -> 64 -> 32 -> channels.
inline ModelConfig generator_config(std::size_t channels = 1, bool conditional = false) {
  ModelConfig c;
  c.role = Role::Generator;
  c.channels = channels;
  c.conditional = conditional;
  c.stages[0] = {2, 128, 64, 2, 4, 16, 4, 1};
  c.stages[1] = {2, 64, 32, 2, 4, 16, 8, 1};
  c.stages[2] = {7, 32, channels, 1, 4, 16, 4, 1};
  return c;
}

// Discriminator 28x28 -> 14x14 -> 7x7 -> 1x1 with widths channels -> 32 -> 64 -> 128.
inline ModelConfig discriminator_config(std::size_t channels = 1, bool conditional = false, bool sigmoid_head = true) {
  ModelConfig c;
  c.role = Role::Discriminator;
  c.channels = channels;
  c.conditional = conditional;
  c.sigmoid_head = sigmoid_head;
  c.stages[0] = {2, channels, 32, 2, 4, 16, 4, 1};
  c.stages[1] = {2, 32, 64, 2, 4, 16, 8, 1};
  c.stages[2] = {7, 64, 128, 1, 4, 16, 4, 1};
  return c;
}

// seed = concat(noise, table[label]).
template <class T>
Tensor<T> compose_conditional_seed(const Tensor<T>& noise, const std::vector<int>& labels, const Tensor<T>& table) {
  if (noise.dim(0) != labels.size()) throw InputError("conditional seed: one label per noise row required");
  std::vector<std::size_t> rows;
  rows.reserve(labels.size());
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= table.dim(0))
      throw InputError("conditional seed: label " + std::to_string(y) + " out of range [0, " +
                       std::to_string(table.dim(0)) + ")");
    rows.push_back(static_cast<std::size_t>(y));
  }
  return concat<T>({noise, gather_rows(table, rows)}, 1);
}

template <class T>
struct Stage {
  std::vector<CocBlock<T>> blocks;

  PointSet<T> run_blocks(PointSet<T> ps) const {
    for (const auto& b : blocks) ps = b(std::move(ps));
    return ps;
  }
};

template <class T>
void build_blocks(Stage<T>& st, const StageConfig& sc, Rng& rng) {
  for (std::size_t i = 0; i < sc.n_blocks; ++i)
    st.blocks.emplace_back(sc.dim_out, sc.heads, sc.head_dim, sc.mlp_r, sc.centers, rng);
}

template <class T>
class Generator {
 public:
  Generator(ModelConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
    if (cfg_.role != Role::Generator) throw ConfigError("generator: config role is not generator");
    cfg_.validate();
    for (std::size_t s = 0; s < 3; ++s) {
      const auto& sc = cfg_.stages[s];
      up_[s] = PointIncreaser<T>(sc.sample_r, sc.dim_in, sc.dim_out, rng);
      build_blocks(stages_[s], sc, rng);
    }
    if (cfg_.conditional) embed_ = param_init<T>({cfg_.n_classes, cfg_.embed_dim}, InitScheme::Normal, rng);
  }

  // noise is [batch, noise_dim]; labels required iff the model is conditional.
  // Returns points on the final grid with features in [-1, 1].
  PointSet<T> forward_points(const Tensor<T>& noise, const std::optional<std::vector<int>>& labels = std::nullopt) const {
    if (labels && !cfg_.conditional) throw ContractError("generator: labels passed to an unconditional model");
    if (!labels && cfg_.conditional) throw ContractError("generator: conditional model needs labels");
    if (noise.rank() != 2 || noise.dim(1) != cfg_.noise_dim())
      throw ConfigError("generator: noise must be [batch, " + std::to_string(cfg_.noise_dim()) + "], got " +
                        to_string(noise.shape()));
    auto seed = cfg_.conditional ? compose_conditional_seed(noise, *labels, embed_) : noise;
    auto ps = make_pointset(seed, 1, 1);
    for (std::size_t s = 0; s < 3; ++s) ps = stages_[s].run_blocks(up_[s](ps));
    ps.features = tanh(ps.features);
    return ps;
  }

  // [batch, h, w, channels] image batch.
  Tensor<T> forward(const Tensor<T>& noise, const std::optional<std::vector<int>>& labels = std::nullopt) const {
    return points_to_image(forward_points(noise, labels), cfg_.channels);
  }

  Tensor<T> sample_noise(std::size_t batch, Rng& rng) const { return normal_tensor<T>({batch, cfg_.noise_dim()}, rng); }

  const ModelConfig& config() const { return cfg_; }
  const Tensor<T>& embedding() const { return embed_; }

  ParamList<T> parameters() const {
    ParamList<T> out;
    for (std::size_t s = 0; s < 3; ++s) {
      const auto p = "stage" + std::to_string(s);
      up_[s].parameters(out, p + ".resample");
      for (std::size_t b = 0; b < stages_[s].blocks.size(); ++b)
        stages_[s].blocks[b].parameters(out, p + ".block" + std::to_string(b));
    }
    if (cfg_.conditional) out.push_back({"embed.table", embed_});
    return out;
  }

  PointIncreaser<T>& increaser(std::size_t s) { return up_.at(s); }
  Stage<T>& stage(std::size_t s) { return stages_.at(s); }

 private:
  ModelConfig cfg_;
  std::array<PointIncreaser<T>, 3> up_;
  std::array<Stage<T>, 3> stages_;
  Tensor<T> embed_;
};

template <class T>
class Discriminator {
 public:
  Discriminator(ModelConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
    if (cfg_.role != Role::Discriminator) throw ConfigError("discriminator: config role is not discriminator");
    cfg_.validate();
    for (std::size_t s = 0; s < 3; ++s) {
      const auto& sc = cfg_.stages[s];
      down_[s] = PointReducer<T>(sc.sample_r, sc.dim_in, sc.dim_out, rng);
      build_blocks(stages_[s], sc, rng);
    }
    head_ = Dense<T>(cfg_.stages[2].dim_out, 1, rng);
    if (cfg_.conditional) {
      embed_ = param_init<T>({cfg_.n_classes, cfg_.embed_dim}, InitScheme::Normal, rng);
      cond_ = Dense<T>(cfg_.embed_dim, cfg_.channels, rng);
    }
  }

  // Scores [batch, 1]; in (0, 1) with the sigmoid head, unbounded otherwise.
  Tensor<T> forward_points(PointSet<T> ps, const std::optional<std::vector<int>>& labels = std::nullopt) const {
    if (labels && !cfg_.conditional) throw ContractError("discriminator: labels passed to an unconditional model");
    if (!labels && cfg_.conditional) throw ContractError("discriminator: conditional model needs labels");
    if (ps.height != cfg_.image_size || ps.width != cfg_.image_size || ps.channels() != cfg_.channels)
      throw ConfigError("discriminator: expected " + std::to_string(cfg_.image_size) + "x" +
                        std::to_string(cfg_.image_size) + "x" + std::to_string(cfg_.channels) + " input");
    if (cfg_.conditional) {
      if (labels->size() != ps.batch) throw InputError("discriminator: one label per image required");
      std::vector<std::size_t> rows;
      for (int y : *labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= cfg_.n_classes)
          throw InputError("discriminator: label " + std::to_string(y) + " out of range");
        rows.push_back(static_cast<std::size_t>(y));
      }
      auto per_image = cond_(gather_rows(embed_, rows));  // [batch, channels]
      std::vector<std::size_t> expand;
      expand.reserve(ps.batch * ps.points());
      for (std::size_t b = 0; b < ps.batch; ++b)
        for (std::size_t i = 0; i < ps.points(); ++i) expand.push_back(b);
      ps.features = add(ps.features, gather_rows(per_image, expand));
    }
    for (std::size_t s = 0; s < 3; ++s) ps = stages_[s].run_blocks(down_[s](ps));
    auto score = head_(ps.features);
    return cfg_.sigmoid_head ? sigmoid(score) : score;
  }

  Tensor<T> forward(const Tensor<T>& images, const std::optional<std::vector<int>>& labels = std::nullopt) const {
    return forward_points(image_to_points(images), labels);
  }

  // First CoC layer of stage 1, the one the cluster visualization reads.
  const ClusterLayer<T>& first_cluster_layer() const { return stages_[0].blocks.at(0).cluster(); }
  ClusterLayer<T>& first_cluster_layer() { return stages_[0].blocks.at(0).cluster(); }

  void set_stage_centers(std::size_t s, std::size_t c) {
    validate_center_grid(cfg_.stage_sides().at(s), cfg_.stage_sides().at(s), c);
    for (auto& b : stages_.at(s).blocks) b.cluster().set_centers(c);
    cfg_.stages[s].centers = c;
  }

  const ModelConfig& config() const { return cfg_; }

  ParamList<T> parameters() const {
    ParamList<T> out;
    for (std::size_t s = 0; s < 3; ++s) {
      const auto p = "stage" + std::to_string(s);
      down_[s].parameters(out, p + ".resample");
      for (std::size_t b = 0; b < stages_[s].blocks.size(); ++b)
        stages_[s].blocks[b].parameters(out, p + ".block" + std::to_string(b));
    }
    head_.parameters(out, "head");
    if (cfg_.conditional) {
      out.push_back({"embed.table", embed_});
      cond_.parameters(out, "embed.fc");
    }
    return out;
  }

  PointReducer<T>& reducer(std::size_t s) { return down_.at(s); }
  Stage<T>& stage(std::size_t s) { return stages_.at(s); }

 private:
  ModelConfig cfg_;
  std::array<PointReducer<T>, 3> down_;
  std::array<Stage<T>, 3> stages_;
  Dense<T> head_;
  Tensor<T> embed_;
  Dense<T> cond_;
};

}  // namespace cocgan
