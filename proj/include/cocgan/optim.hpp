#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "cocgan/checkpoint.hpp"
#include "cocgan/error.hpp"
#include "cocgan/module.hpp"

namespace cocgan {

enum class OptimKind : std::uint32_t { Adam = 0, RMSProp = 1 };

inline OptimKind parse_optim_kind(const std::string& s) {
  if (s == "adam") return OptimKind::Adam;
  if (s == "rmsprop") return OptimKind::RMSProp;
  throw ConfigError("unknown optimizer '" + s + "' (expected adam or rmsprop)");
}

struct OptimConfig {
  OptimKind kind = OptimKind::Adam;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  double decay = 0.99;  // RMSProp
};

// In-place first-order optimizer over a fixed parameter list.
template <class T>
class Optimizer {
 public:
  Optimizer(ParamList<T> params, OptimConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
      first_.emplace_back(p.tensor.size(), T(0));
      if (cfg_.kind == OptimKind::Adam) second_.emplace_back(p.tensor.size(), T(0));
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = params_[k].tensor;
      if (first_[k].size() != p.size())
        throw ContractError("optimizer: parameter '" + params_[k].name + "' changed size between steps");
      auto v = p.mutable_data();
      const bool has = p.has_grad();
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double g = has ? static_cast<double>(p.grad()[i]) : 0.0;
        if (cfg_.kind == OptimKind::Adam) {
          const double m = cfg_.beta1 * first_[k][i] + (1 - cfg_.beta1) * g;
          const double s = cfg_.beta2 * second_[k][i] + (1 - cfg_.beta2) * g * g;
          first_[k][i] = static_cast<T>(m);
          second_[k][i] = static_cast<T>(s);
          v[i] = static_cast<T>(v[i] - cfg_.lr * (m / bc1) / (std::sqrt(s / bc2) + cfg_.eps));
        } else {
          const double s = cfg_.decay * first_[k][i] + (1 - cfg_.decay) * g * g;
          first_[k][i] = static_cast<T>(s);
          v[i] = static_cast<T>(v[i] - cfg_.lr * g / (std::sqrt(s) + cfg_.eps));
        }
      }
    }
  }

  void zero_grad() { zero_grads(params_); }
  double lr() const { return cfg_.lr; }
  void set_lr(double lr) { cfg_.lr = lr; }
  std::uint64_t steps() const { return t_; }
  const OptimConfig& config() const { return cfg_; }
  const ParamList<T>& params() const { return params_; }

  OptimizerBlob save() const {
    OptimizerBlob b;
    b.kind = static_cast<std::uint32_t>(cfg_.kind);
    b.step = t_;
    for (const auto& f : first_) b.buffers.emplace_back(f.begin(), f.end());
    for (const auto& s : second_) b.buffers.emplace_back(s.begin(), s.end());
    return b;
  }

  void load(const OptimizerBlob& b) {
    if (b.kind != static_cast<std::uint32_t>(cfg_.kind)) throw LoadError("optimizer: checkpoint holds a different optimizer kind");
    if (b.buffers.size() != first_.size() + second_.size()) throw LoadError("optimizer: buffer count mismatch");
    for (std::size_t k = 0; k < b.buffers.size(); ++k) {
      auto& dst = k < first_.size() ? first_[k] : second_[k - first_.size()];
      if (b.buffers[k].size() != dst.size()) throw LoadError("optimizer: buffer " + std::to_string(k) + " has wrong length");
      std::copy(b.buffers[k].begin(), b.buffers[k].end(), dst.begin());
    }
    t_ = b.step;
  }

 private:
  ParamList<T> params_;
  OptimConfig cfg_;
  std::vector<std::vector<T>> first_, second_;
  std::uint64_t t_ = 0;
};

// lr_min + (lr0 - lr_min)(1 + cos(pi t / T)) / 2, held at lr_min past T.
inline double cosine_lr(double lr0, double t, double horizon, double lr_min = 0.0) {
  if (horizon <= 0) return lr0;
  if (t >= horizon) return lr_min;
  if (t <= 0) return lr0;
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * t / horizon));
}

template <class T>
void weight_clip(const ParamList<T>& params, double c) {
  if (!(c > 0)) throw ConfigError("weight_clip: c must be positive");
  const T hi = static_cast<T>(c);
  for (const auto& p : params) {
    auto t = p.tensor;
    for (auto& v : t.mutable_data()) v = std::clamp(v, -hi, hi);
  }
}

// Rescales the joint gradient so its L2 norm is at most c.
template <class T>
void grad_norm_clip(const ParamList<T>& params, double c) {
  if (!(c > 0)) throw ConfigError("grad_norm_clip: c must be positive");
  double ss = 0;
  for (const auto& p : params)
    if (p.tensor.has_grad())
      for (T g : p.tensor.grad()) ss += double(g) * g;
  const double norm = std::sqrt(ss);
  if (norm <= c) return;
  const T s = static_cast<T>(c / norm);
  for (const auto& p : params) {
    auto t = p.tensor;
    if (t.has_grad())
      for (auto& g : t.mutable_grad()) g *= s;
  }
}

template <class T>
double grad_norm(const ParamList<T>& params) {
  double ss = 0;
  for (const auto& p : params)
    if (p.tensor.has_grad())
      for (T g : p.tensor.grad()) ss += double(g) * g;
  return std::sqrt(ss);
}

template <class T>
double max_abs_param(const ParamList<T>& params) {
  double m = 0;
  for (const auto& p : params)
    for (T v : p.tensor.data()) m = std::max(m, std::abs(double(v)));
  return m;
}

}  // namespace cocgan
