#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cocgan/cocblocks.hpp"
#include "cocgan/error.hpp"
#include "cocgan/losses.hpp"
#include "cocgan/models.hpp"
#include "cocgan/training.hpp"

namespace cocgan {

enum class KeyKind { Int, Real, Bool, Text, Square };

struct KeyDef {
  const char* name;
  const char* fallback;
  KeyKind kind;
  const char* help;
};

// Every recognised key, in manifest order.
inline const std::vector<KeyDef>& config_keys() {
  static const std::vector<KeyDef> keys = {
      {"dataset", "mnist", KeyKind::Text, "mnist (IDX files) or blobs (synthetic)"},
      {"data_images", "", KeyKind::Text, "IDX image file, optionally gzipped"},
      {"data_labels", "", KeyKind::Text, "IDX label file, optionally gzipped"},
      {"data_count", "0", KeyKind::Int, "use the first N images (0: all)"},
      {"blob_count", "2000", KeyKind::Int, "synthetic dataset size"},
      {"classes", "10", KeyKind::Int, "number of classes"},
      {"channels", "1", KeyKind::Int, "image channels (1 or 3)"},
      {"mode", "vanilla", KeyKind::Text, "vanilla or wgan"},
      {"conditional", "false", KeyKind::Bool, "class-conditional models"},
      {"lr", "2e-4", KeyKind::Real, "learning rate"},
      {"lr_min", "0", KeyKind::Real, "cosine schedule floor"},
      {"schedule_horizon", "0", KeyKind::Int, "cosine horizon in epochs (0: epochs)"},
      {"batch", "256", KeyKind::Int, "batch size; the last short batch is dropped"},
      {"epochs", "50", KeyKind::Int, "training epochs"},
      {"n_critic", "5", KeyKind::Int, "critic updates per generator update (wgan)"},
      {"clip_c", "0.01", KeyKind::Real, "critic clip bound (wgan)"},
      {"clip_mode", "weights", KeyKind::Text, "weights, gradnorm or none (wgan)"},
      {"beta1", "0.5", KeyKind::Real, "Adam beta1"},
      {"beta2", "0.999", KeyKind::Real, "Adam beta2"},
      {"eps", "1e-8", KeyKind::Real, "optimizer epsilon"},
      {"rms_decay", "0.99", KeyKind::Real, "RMSProp decay (wgan)"},
      {"g_loss", "nonsaturating", KeyKind::Text, "nonsaturating or minimax (vanilla)"},
      {"seed", "1", KeyKind::Int, "RNG seed"},
      {"sample_every", "1", KeyKind::Int, "epochs between sample grids (0: never)"},
      {"checkpoint_every", "1", KeyKind::Int, "epochs between checkpoints"},
      {"sample_grid", "8", KeyKind::Int, "sample grid side"},
      {"sample_png", "false", KeyKind::Bool, "also write PNG sample grids"},
      {"seed_dim", "128", KeyKind::Int, "generator seed width"},
      {"heads", "4", KeyKind::Int, "cluster heads in every block"},
      {"head_dim", "16", KeyKind::Int, "width of each head"},
      {"centers_s1", "1", KeyKind::Square, "cluster centers, stage 1 (both networks)"},
      {"centers_s2", "1", KeyKind::Square, "cluster centers, stage 2 (both networks)"},
      {"centers_s3", "1", KeyKind::Square, "cluster centers, stage 3 (both networks)"},
      {"g_dim_s1", "64", KeyKind::Int, "generator width after stage 1"},
      {"g_dim_s2", "32", KeyKind::Int, "generator width after stage 2"},
      {"g_blocks_s1", "2", KeyKind::Int, "generator blocks, stage 1"},
      {"g_blocks_s2", "2", KeyKind::Int, "generator blocks, stage 2"},
      {"g_blocks_s3", "1", KeyKind::Int, "generator blocks, stage 3"},
      {"g_mlp_s1", "4", KeyKind::Int, "generator MLP ratio, stage 1"},
      {"g_mlp_s2", "8", KeyKind::Int, "generator MLP ratio, stage 2"},
      {"g_mlp_s3", "4", KeyKind::Int, "generator MLP ratio, stage 3"},
      {"d_dim_s1", "32", KeyKind::Int, "discriminator width after stage 1"},
      {"d_dim_s2", "64", KeyKind::Int, "discriminator width after stage 2"},
      {"d_dim_s3", "128", KeyKind::Int, "discriminator width after stage 3"},
      {"d_blocks_s1", "2", KeyKind::Int, "discriminator blocks, stage 1"},
      {"d_blocks_s2", "2", KeyKind::Int, "discriminator blocks, stage 2"},
      {"d_blocks_s3", "1", KeyKind::Int, "discriminator blocks, stage 3"},
      {"d_mlp_s1", "4", KeyKind::Int, "discriminator MLP ratio, stage 1"},
      {"d_mlp_s2", "8", KeyKind::Int, "discriminator MLP ratio, stage 2"},
      {"d_mlp_s3", "4", KeyKind::Int, "discriminator MLP ratio, stage 3"},
      {"out", "", KeyKind::Text, "run directory"},
  };
  return keys;
}

inline const KeyDef* find_key(const std::string& name) {
  for (const auto& k : config_keys())
    if (name == k.name) return &k;
  return nullptr;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline bool parse_bool_text(const std::string& v, bool& out) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return out = true, true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return out = false, true;
  return false;
}

inline bool parse_uint_text(const std::string& v, std::uint64_t& out) {
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  return ec == std::errc{} && p == end && !v.empty();
}

inline bool parse_real_text(const std::string& v, double& out) {
  if (v.empty()) return false;
  std::size_t used = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    return false;
  }
  return used == v.size() && std::isfinite(out);
}

}  // namespace detail

// Resolved key=value settings. Values keep the text they were given so the
// manifest can echo them unchanged.
class RunConfig {
 public:
  RunConfig() {
    for (const auto& k : config_keys()) values_[k.name] = k.fallback;
  }

  // `where` names the source for error messages, e.g. "run.cfg:3" or "--lr".
  void set(const std::string& key, const std::string& raw, const std::string& where = "") {
    const auto* def = find_key(key);
    const std::string at = where.empty() ? "" : where + ": ";
    if (!def) throw ConfigError(at + "unknown key '" + key + "'");
    const auto v = detail::trim(raw);
    std::uint64_t u = 0;
    double d = 0;
    bool b = false;
    switch (def->kind) {
      case KeyKind::Int:
        if (!detail::parse_uint_text(v, u)) throw ConfigError(at + key + "='" + v + "' is not a non-negative integer");
        break;
      case KeyKind::Square:
        if (!detail::parse_uint_text(v, u)) throw ConfigError(at + key + "='" + v + "' is not a non-negative integer");
        if (u == 0 || !is_perfect_square(static_cast<std::size_t>(u)))
          throw ConfigError(at + key + "=" + v + " violates the centers invariant: must be a positive perfect square");
        break;
      case KeyKind::Real:
        if (!detail::parse_real_text(v, d)) throw ConfigError(at + key + "='" + v + "' is not a finite number");
        break;
      case KeyKind::Bool:
        if (!detail::parse_bool_text(v, b)) throw ConfigError(at + key + "='" + v + "' is not a boolean");
        break;
      case KeyKind::Text:
        break;
    }
    values_[key] = v;
    where_[key] = where;
  }

  const std::string& text(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ContractError("config: unknown key '" + key + "'");
    return it->second;
  }
  std::size_t count(const std::string& key) const {
    std::uint64_t u = 0;
    detail::parse_uint_text(text(key), u);
    return static_cast<std::size_t>(u);
  }
  double real(const std::string& key) const {
    double d = 0;
    detail::parse_real_text(text(key), d);
    return d;
  }
  bool flag(const std::string& key) const {
    bool b = false;
    detail::parse_bool_text(text(key), b);
    return b;
  }
  // Source of a value ("" for defaults).
  std::string origin(const std::string& key) const {
    auto it = where_.find(key);
    return it == where_.end() ? "" : it->second;
  }

  GanMode mode() const { return parse_gan_mode(text("mode")); }

  ModelConfig generator() const {
    auto c = generator_config(count("channels"), flag("conditional"));
    c.seed_dim = count("seed_dim");
    c.embed_dim = c.seed_dim / 2;
    c.n_classes = count("classes");
    const std::size_t dims[4] = {c.seed_dim, count("g_dim_s1"), count("g_dim_s2"), c.channels};
    for (std::size_t s = 0; s < 3; ++s) {
      const auto n = std::to_string(s + 1);
      auto& st = c.stages[s];
      st.dim_in = dims[s];
      st.dim_out = dims[s + 1];
      st.n_blocks = count("g_blocks_s" + n);
      st.mlp_r = count("g_mlp_s" + n);
      st.heads = count("heads");
      st.head_dim = count("head_dim");
      st.centers = count("centers_s" + n);
    }
    return c;
  }

  ModelConfig discriminator() const {
    auto c = discriminator_config(count("channels"), flag("conditional"), mode() == GanMode::Vanilla);
    c.embed_dim = count("seed_dim") / 2;
    c.n_classes = count("classes");
    const std::size_t dims[4] = {c.channels, count("d_dim_s1"), count("d_dim_s2"), count("d_dim_s3")};
    for (std::size_t s = 0; s < 3; ++s) {
      const auto n = std::to_string(s + 1);
      auto& st = c.stages[s];
      st.dim_in = dims[s];
      st.dim_out = dims[s + 1];
      st.n_blocks = count("d_blocks_s" + n);
      st.mlp_r = count("d_mlp_s" + n);
      st.heads = count("heads");
      st.head_dim = count("head_dim");
      st.centers = count("centers_s" + n);
    }
    return c;
  }

  TrainConfig train() const {
    TrainConfig t;
    t.mode = mode();
    t.conditional = flag("conditional");
    t.lr = real("lr");
    t.lr_min = real("lr_min");
    t.schedule_horizon = count("schedule_horizon");
    t.batch = count("batch");
    t.epochs = count("epochs");
    t.n_critic = count("n_critic");
    t.clip_c = real("clip_c");
    t.clip_mode = parse_clip_mode(text("clip_mode"));
    t.beta1 = real("beta1");
    t.beta2 = real("beta2");
    t.eps = real("eps");
    t.rms_decay = real("rms_decay");
    t.g_loss = parse_gen_loss(text("g_loss"));
    t.seed = count("seed");
    t.sample_every = count("sample_every");
    t.checkpoint_every = count("checkpoint_every");
    t.sample_grid = count("sample_grid");
    t.sample_png = flag("sample_png");
    t.out_dir = text("out");
    return t;
  }

  // Cross-key checks; the message names the first offending key's source.
  void validate() const {
    auto blame = [&](const std::string& key, const std::string& msg) {
      const auto w = origin(key);
      throw ConfigError((w.empty() ? "" : w + ": ") + msg);
    };
    const auto& ds = text("dataset");
    if (ds != "mnist" && ds != "blobs") blame("dataset", "dataset='" + ds + "' must be mnist or blobs");
    if (count("channels") != 1 && count("channels") != 3) blame("channels", "channels must be 1 or 3");
    if (count("classes") == 0) blame("classes", "classes must be >= 1");
    if (flag("sample_png") && !kPngSupport) blame("sample_png", "sample_png=true needs a build with libpng");
    if (count("seed_dim") < 2 || count("seed_dim") % 2) blame("seed_dim", "seed_dim must be an even number >= 2");
    for (const char* k : {"mode", "clip_mode", "g_loss"}) {
      try {
        if (std::string(k) == "mode") mode();
        if (std::string(k) == "clip_mode") parse_clip_mode(text(k));
        if (std::string(k) == "g_loss") parse_gen_loss(text(k));
      } catch (const ConfigError& e) {
        blame(k, e.what());
      }
    }
    try {
      train().validate();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    try {
      generator().validate();
      discriminator().validate();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }

  // key=value lines for every key, in table order.
  std::string manifest_body() const {
    std::string out;
    for (const auto& k : config_keys()) out += std::string(k.name) + "=" + text(k.name) + "\n";
    return out;
  }

  std::map<std::string, std::string> as_metadata(const std::string& prefix = "cfg.") const {
    std::map<std::string, std::string> m;
    for (const auto& [k, v] : values_) m[prefix + k] = v;
    return m;
  }

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> where_;
};

// Applies a key=value text. '#' starts a comment; blank lines are skipped.
inline void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto where = source + ":" + std::to_string(no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value, got '" + line + "'");
    cfg.set(detail::trim(line.substr(0, eq)), line.substr(eq + 1), where);
  }
}

inline void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw LoadError("config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  apply_config_text(cfg, ss.str(), path);
}

// File first (if any), then flag overrides in order, then validation.
inline RunConfig parse_config(const std::string& file, const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig cfg;
  if (!file.empty()) apply_config_file(cfg, file);
  for (const auto& [k, v] : overrides) cfg.set(k, v, "--" + k);
  cfg.validate();
  return cfg;
}

// Rebuilds the settings a checkpoint was trained with from its "cfg." metadata.
inline RunConfig config_from_metadata(const std::map<std::string, std::string>& meta, const std::string& source) {
  RunConfig cfg;
  bool any = false;
  for (const auto& [k, v] : meta)
    if (k.rfind("cfg.", 0) == 0 && find_key(k.substr(4))) {
      cfg.set(k.substr(4), v, source);
      any = true;
    }
  if (!any) throw LoadError(source + ": checkpoint carries no run configuration");
  return cfg;
}

}  // namespace cocgan
