#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "cocgan/ops.hpp"
#include "cocgan/random.hpp"
#include "cocgan/tensor.hpp"

namespace cocgan {

struct GradCheckReport {
  double max_rel_error = 0.0;  // max|tape - fd| / max(max|tape|, max|fd|)
  double max_abs_tape = 0.0;
  double max_abs_fd = 0.0;
  bool passed = false;
  std::vector<double> tape_grad;  // at the probed coordinates only
  std::vector<double> fd_grad;
};

namespace detail {

inline void finish_report(GradCheckReport& rep, double tol) {
  double max_diff = 0.0;
  for (std::size_t i = 0; i < rep.fd_grad.size(); ++i) {
    max_diff = std::max(max_diff, std::abs(rep.tape_grad[i] - rep.fd_grad[i]));
    rep.max_abs_tape = std::max(rep.max_abs_tape, std::abs(rep.tape_grad[i]));
    rep.max_abs_fd = std::max(rep.max_abs_fd, std::abs(rep.fd_grad[i]));
  }
  const double scale = std::max(rep.max_abs_tape, rep.max_abs_fd);
  rep.max_rel_error = scale > 0.0 ? max_diff / scale : 0.0;
  rep.passed = rep.max_rel_error <= tol;
}

// All coordinates, or `limit` of them drawn without replacement.
inline std::vector<std::size_t> probe_coords(std::size_t total, std::size_t limit, std::uint64_t seed) {
  std::vector<std::size_t> idx(total);
  for (std::size_t i = 0; i < total; ++i) idx[i] = i;
  if (limit == 0 || limit >= total) return idx;
  Rng rng(seed);
  rng.shuffle(idx.begin(), idx.end());
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace detail

// Compares the tape gradient of scalar f at `point` against central
// differences with step h. Errors are measured relative to the gradient's
// infinity norm; a constant f (both gradients exactly zero) reports 0.
// With max_coords > 0 only that many coordinates are probed.
inline GradCheckReport grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                                  const Tensor<double>& point, double tol, double h = 1e-3,
                                  std::size_t max_coords = 0, std::uint64_t seed = 1) {
  GradCheckReport rep;
  auto x = Tensor<double>(point.shape(), std::vector<double>(point.data().begin(), point.data().end()), true);
  auto& tape = active_tape<double>();
  tape.clear();
  {
    auto y = f(x);
    backward(y);
  }
  const auto coords = detail::probe_coords(x.size(), max_coords, seed);
  for (auto i : coords) rep.tape_grad.push_back(x.has_grad() ? x.grad()[i] : 0.0);
  tape.clear();

  NoGradGuard ng;
  auto probe = Tensor<double>(point.shape(), std::vector<double>(point.data().begin(), point.data().end()));
  auto px = probe.mutable_data();
  for (auto i : coords) {
    const double orig = px[i];
    px[i] = orig + h;
    const double fp = f(probe).item();
    px[i] = orig - h;
    const double fm = f(probe).item();
    px[i] = orig;
    rep.fd_grad.push_back((fp - fm) / (2.0 * h));
  }
  detail::finish_report(rep, tol);
  return rep;
}

// Same check for tensors captured inside `loss` (model parameters): each is
// perturbed in place. All of them must already require grad.
inline GradCheckReport grad_check_params(std::vector<Tensor<double>> params,
                                         const std::function<Tensor<double>()>& loss, double tol,
                                         double h = 1e-3, std::size_t max_coords = 0, std::uint64_t seed = 1) {
  GradCheckReport rep;
  auto& tape = active_tape<double>();
  tape.clear();
  for (auto& p : params) p.zero_grad();
  {
    auto y = loss();
    backward(y);
  }
  std::vector<std::pair<std::size_t, std::size_t>> flat;
  for (std::size_t t = 0; t < params.size(); ++t)
    for (std::size_t i = 0; i < params[t].size(); ++i) flat.emplace_back(t, i);
  const auto coords = detail::probe_coords(flat.size(), max_coords, seed);
  for (auto c : coords) {
    const auto [t, i] = flat[c];
    rep.tape_grad.push_back(params[t].has_grad() ? params[t].grad()[i] : 0.0);
  }
  for (auto& p : params) p.zero_grad();
  tape.clear();

  NoGradGuard ng;
  for (auto c : coords) {
    const auto [t, i] = flat[c];
    auto v = params[t].mutable_data();
    const double orig = v[i];
    v[i] = orig + h;
    const double fp = loss().item();
    v[i] = orig - h;
    const double fm = loss().item();
    v[i] = orig;
    rep.fd_grad.push_back((fp - fm) / (2.0 * h));
  }
  detail::finish_report(rep, tol);
  return rep;
}

}  // namespace cocgan
