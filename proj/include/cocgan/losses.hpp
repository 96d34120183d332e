#pragma once

#include <cmath>
#include <string>

#include "cocgan/error.hpp"
#include "cocgan/ops.hpp"

namespace cocgan {

inline constexpr double kLogEps = 1e-7;

enum class GanMode { Vanilla, Wgan };
enum class GenLoss { NonSaturating, Minimax };

inline GanMode parse_gan_mode(const std::string& s) {
  if (s == "vanilla") return GanMode::Vanilla;
  if (s == "wgan") return GanMode::Wgan;
  throw ConfigError("unknown mode '" + s + "' (expected vanilla or wgan)");
}
inline std::string to_string(GanMode m) { return m == GanMode::Vanilla ? "vanilla" : "wgan"; }

inline GenLoss parse_gen_loss(const std::string& s) {
  if (s == "nonsaturating") return GenLoss::NonSaturating;
  if (s == "minimax") return GenLoss::Minimax;
  throw ConfigError("unknown g_loss '" + s + "' (expected nonsaturating or minimax)");
}
inline std::string to_string(GenLoss g) { return g == GenLoss::NonSaturating ? "nonsaturating" : "minimax"; }

template <class T>
struct GanLosses {
  Tensor<T> loss_d;
  Tensor<T> loss_g;
};

namespace detail {

// Probabilities must lie in [0, 1]; exact 0 and 1 (float sigmoid saturation)
// are absorbed by the log clamp.
template <class T>
void require_probabilities(const Tensor<T>& p, const char* what) {
  for (T v : p.data())
    if (!(v >= T(0) && v <= T(1)))
      throw NumericError(std::string(what) + ": discriminator score " + std::to_string(double(v)) + " outside [0, 1]");
}

template <class T>
Tensor<T> log_one_minus(const Tensor<T>& p) {
  return log_clamped(add_scalar(scale(p, T(-1)), T(1)), static_cast<T>(kLogEps));
}

}  // namespace detail

// -mean log D(x) - mean log(1 - D(G(z)))
template <class T>
Tensor<T> discriminator_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake) {
  detail::require_probabilities(d_real, "discriminator_loss");
  detail::require_probabilities(d_fake, "discriminator_loss");
  const T eps = static_cast<T>(kLogEps);
  return scale(add(mean_all(log_clamped(d_real, eps)), mean_all(detail::log_one_minus(d_fake))), T(-1));
}

// Non-saturating -mean log D(G(z)), or the minimax mean log(1 - D(G(z))).
template <class T>
Tensor<T> generator_loss(const Tensor<T>& d_fake, GenLoss form = GenLoss::NonSaturating) {
  detail::require_probabilities(d_fake, "generator_loss");
  if (form == GenLoss::Minimax) return mean_all(detail::log_one_minus(d_fake));
  return scale(mean_all(log_clamped(d_fake, static_cast<T>(kLogEps))), T(-1));
}

template <class T>
GanLosses<T> gan_losses(const Tensor<T>& d_real, const Tensor<T>& d_fake, GenLoss form = GenLoss::NonSaturating) {
  return {discriminator_loss(d_real, d_fake), generator_loss(d_fake, form)};
}

template <class T>
Tensor<T> critic_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake) {
  return sub(mean_all(d_fake), mean_all(d_real));
}

template <class T>
Tensor<T> critic_generator_loss(const Tensor<T>& d_fake) {
  return scale(mean_all(d_fake), T(-1));
}

template <class T>
GanLosses<T> wgan_losses(const Tensor<T>& d_real, const Tensor<T>& d_fake) {
  return {critic_loss(d_real, d_fake), critic_generator_loss(d_fake)};
}

}  // namespace cocgan
