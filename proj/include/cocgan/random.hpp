#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>
#include <random>
#include <algorithm>

#include "cocgan/error.hpp"
#include "cocgan/tensor.hpp"

namespace cocgan {

// mt19937_64 with hand-written distribution mappings, so sequences are the
// same on every standard library (std::*_distribution is not portable).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do v = engine_();
    while (v >= limit);
    return v % n;
  }

  template <class It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) std::iter_swap(first + (i - 1), first + below(i));
  }

  std::string state() const {
    std::ostringstream os;
    os << engine_ << ' ' << has_spare_ << ' ' << std::hexfloat << spare_;
    return os.str();
  }
  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> engine_ >> has_spare_;
    std::string sp;
    is >> sp;
    spare_ = std::strtod(sp.c_str(), nullptr);
    if (!is && !is.eof()) throw LoadError("rng: malformed state string");
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

enum class InitScheme { UniformFanIn, Normal, Zeros, Constant };

inline InitScheme parse_init_scheme(const std::string& name) {
  if (name == "uniform-fan-in") return InitScheme::UniformFanIn;
  if (name == "normal") return InitScheme::Normal;
  if (name == "zeros") return InitScheme::Zeros;
  if (name == "constant") return InitScheme::Constant;
  throw ConfigError("unknown init scheme '" + name + "'");
}

// Trainable tensor. Fan-in is the leading extent: weights are stored [in, out].
template <class T>
Tensor<T> param_init(Shape shape, InitScheme scheme, Rng& rng, double constant = 0.0) {
  const auto n = numel(shape);
  std::vector<T> v(n, T(0));
  switch (scheme) {
    case InitScheme::UniformFanIn: {
      const double fan_in = shape.empty() ? 1.0 : static_cast<double>(shape[0]);
      const double bound = 1.0 / std::sqrt(fan_in);
      for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
      break;
    }
    case InitScheme::Normal:
      for (auto& x : v) x = static_cast<T>(rng.normal());
      break;
    case InitScheme::Zeros:
      break;
    case InitScheme::Constant:
      for (auto& x : v) x = static_cast<T>(constant);
      break;
  }
  return Tensor<T>(std::move(shape), std::move(v), true);
}

template <class T>
Tensor<T> normal_tensor(Shape shape, Rng& rng) {
  const auto n = numel(shape);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.normal());
  return Tensor<T>(std::move(shape), std::move(v));
}

}  // namespace cocgan
