#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cocgan/error.hpp"
#include "cocgan/module.hpp"
#include "cocgan/ops.hpp"
#include "cocgan/pointset.hpp"
#include "cocgan/random.hpp"
#include "cocgan/tensor.hpp"

namespace cocgan {

// ---------------------------------------------------------------------------
// Center proposal

inline std::size_t exact_sqrt(std::size_t c) {
  auto r = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(c))));
  while (r * r > c) --r;
  while ((r + 1) * (r + 1) <= c) ++r;
  return r;
}

inline bool is_perfect_square(std::size_t c) {
  const auto r = exact_sqrt(c);
  return c >= 1 && r * r == c;
}

// Throws unless c centers tile a height x width grid as sqrt(c) x sqrt(c) cells.
inline void validate_center_grid(std::size_t height, std::size_t width, std::size_t c) {
  if (!is_perfect_square(c)) throw ConfigError("centers: " + std::to_string(c) + " is not a perfect square");
  const auto side = exact_sqrt(c);
  if (height % side || width % side)
    throw ConfigError("centers: " + std::to_string(c) + " cells do not divide the " + std::to_string(height) + "x" +
                      std::to_string(width) + " grid");
}

// Cell index (row-major over the sqrt(c) x sqrt(c) partition) of every point.
inline std::vector<std::size_t> center_cells(std::size_t height, std::size_t width, std::size_t c) {
  validate_center_grid(height, width, c);
  const auto side = exact_sqrt(c);
  const auto ch = height / side, cw = width / side;
  std::vector<std::size_t> cell(height * width);
  for (std::size_t i = 0; i < height; ++i)
    for (std::size_t j = 0; j < width; ++j) cell[i * width + j] = (i / ch) * side + (j / cw);
  return cell;
}

// Mean of the k = n / c points in each grid cell. x is [batch * n, d];
// result [batch * c, d]. Gradients flow back evenly to the pooled points.
template <class T>
Tensor<T> propose_centers(const Tensor<T>& x, std::size_t height, std::size_t width, std::size_t c) {
  detail::require_matrix(x, "propose_centers");
  const auto n = height * width, d = x.dim(1);
  if (x.dim(0) % n) throw ConfigError("propose_centers: rows do not match the grid");
  const auto batch = x.dim(0) / n;
  const auto cell = center_cells(height, width, c);
  const T inv_k = T(1) / static_cast<T>(n / c);
  auto out = detail::make_result<T>({batch * c, d});
  auto o = out.mutable_data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < n; ++i) {
      T* dst = o.data() + (b * c + cell[i]) * d;
      const T* src = x.data().data() + (b * n + i) * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j] * inv_k;
    }
  if (detail::any_requires_grad<T>({&x})) {
    detail::attach<T>(out, [xn = x.ptr(), cell, batch, n, c, d, inv_k](Node<T>& self) {
      T* g = detail::grad_of(xn);
      if (!g) return;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < n; ++i) {
          const T* go = self.grad.data() + (b * c + cell[i]) * d;
          T* dst = g + (b * n + i) * d;
          for (std::size_t j = 0; j < d; ++j) dst[j] += go[j] * inv_k;
        }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Assignment

// Index of the largest entry of column `i` among rows [0, c); ties keep the
// lowest row.
template <class T>
std::size_t argmax_column(const T* s, std::size_t c, std::size_t n, std::size_t i) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < c; ++j)
    if (s[j * n + i] > s[best * n + i]) best = j;
  return best;
}

template <class T>
struct ClusterAssignment {
  std::vector<T> similarity;                     // c x n, row-major
  std::vector<std::size_t> assignment;           // length n
  std::vector<std::vector<std::size_t>> members;  // per center, ascending
  std::size_t centers = 0;
  std::size_t points = 0;
};

// Cosine similarity of every (center, point) pair and hard argmax assignment.
template <class T>
ClusterAssignment<T> cluster_assign(const Tensor<T>& centers, const Tensor<T>& points) {
  NoGradGuard ng;
  auto s = cosine_similarity(centers, points);
  ClusterAssignment<T> a;
  a.centers = centers.dim(0);
  a.points = points.dim(0);
  a.similarity.assign(s.data().begin(), s.data().end());
  a.members.resize(a.centers);
  a.assignment.resize(a.points);
  for (std::size_t i = 0; i < a.points; ++i) {
    a.assignment[i] = argmax_column(a.similarity.data(), a.centers, a.points, i);
    a.members[a.assignment[i]].push_back(i);
  }
  return a;
}

// Batched form: s is [groups * c, n]. Returns for each (group, point) the
// global cluster index group * c + j.
template <class T>
std::vector<std::size_t> assign_grouped(const Tensor<T>& s, std::size_t groups, std::size_t c) {
  const auto n = s.dim(1);
  std::vector<std::size_t> out(groups * n);
  for (std::size_t g = 0; g < groups; ++g) {
    const T* block = s.data().data() + g * c * n;
    for (std::size_t i = 0; i < n; ++i) out[g * n + i] = g * c + argmax_column(block, c, n, i);
  }
  return out;
}

// Similarity of each point to its own center: [groups * n, 1].
template <class T>
Tensor<T> assigned_similarity(const Tensor<T>& s, const std::vector<std::size_t>& cluster_of) {
  const auto n = s.dim(1);
  std::vector<std::size_t> idx(cluster_of.size());
  for (std::size_t k = 0; k < cluster_of.size(); ++k) idx[k] = cluster_of[k] * n + k % n;
  return gather_elements(s, std::move(idx), {cluster_of.size(), 1});
}

// ---------------------------------------------------------------------------
// Aggregation and dispatch

// g_k = (v_c + sum_{i in k} w_i v_i) / (1 + sum_{i in k} w_i) for every cluster k,
// where w_i = sig(alpha * s_i + beta) is supplied as `weights` [rows, 1].
template <class T>
Tensor<T> cluster_aggregate(const Tensor<T>& values, const Tensor<T>& center_values, const Tensor<T>& weights,
                            const std::vector<std::size_t>& cluster_of) {
  detail::require_matrix(values, "cluster_aggregate");
  detail::require_matrix(center_values, "cluster_aggregate");
  const auto rows = values.dim(0), dv = values.dim(1), clusters = center_values.dim(0);
  if (center_values.dim(1) != dv) throw ConfigError("cluster_aggregate: value widths differ");
  if (weights.size() != rows || cluster_of.size() != rows)
    throw ConfigError("cluster_aggregate: weights/assignment must have one entry per point");
  std::vector<T> norm(clusters, T(1));
  auto out = detail::make_result<T>({clusters, dv});
  auto o = out.mutable_data();
  std::copy(center_values.data().begin(), center_values.data().end(), o.begin());
  for (std::size_t i = 0; i < rows; ++i) {
    const auto k = cluster_of[i];
    if (k >= clusters) throw ConfigError("cluster_aggregate: cluster index out of range");
    const T w = weights[i];
    norm[k] += w;
    const T* v = values.data().data() + i * dv;
    T* dst = o.data() + k * dv;
    for (std::size_t j = 0; j < dv; ++j) dst[j] += w * v[j];
  }
  for (std::size_t k = 0; k < clusters; ++k)
    for (std::size_t j = 0; j < dv; ++j) o[k * dv + j] /= norm[k];
  detail::finish(out, "cluster_aggregate");
  if (detail::any_requires_grad<T>({&values, &center_values, &weights})) {
    detail::attach<T>(out, [vn = values.ptr(), cn = center_values.ptr(), wn = weights.ptr(), cluster_of,
                            norm = std::move(norm), rows, dv, clusters](Node<T>& self) {
      const T* go = self.grad.data();
      if (T* gc = detail::grad_of(cn))
        for (std::size_t k = 0; k < clusters; ++k)
          for (std::size_t j = 0; j < dv; ++j) gc[k * dv + j] += go[k * dv + j] / norm[k];
      T* gv = detail::grad_of(vn);
      T* gw = detail::grad_of(wn);
      for (std::size_t i = 0; i < rows; ++i) {
        const auto k = cluster_of[i];
        const T w = wn->value[i];
        const T* gk = go + k * dv;
        const T* v = vn->value.data() + i * dv;
        const T* agg = self.value.data() + k * dv;
        if (gv)
          for (std::size_t j = 0; j < dv; ++j) gv[i * dv + j] += gk[j] * w / norm[k];
        if (gw) {
          T acc = 0;
          for (std::size_t j = 0; j < dv; ++j) acc += gk[j] * (v[j] - agg[j]);
          gw[i] += acc / norm[k];
        }
      }
    });
  }
  return out;
}

// out_i = w_i * g_{cluster(i)}: the similarity-scaled aggregate sent back to
// each member before the dispatch FC.
template <class T>
Tensor<T> cluster_broadcast(const Tensor<T>& g, const Tensor<T>& weights, const std::vector<std::size_t>& cluster_of) {
  detail::require_matrix(g, "cluster_broadcast");
  const auto rows = cluster_of.size(), dv = g.dim(1);
  if (weights.size() != rows) throw ConfigError("cluster_broadcast: one weight per point required");
  auto out = detail::make_result<T>({rows, dv});
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < rows; ++i) {
    if (cluster_of[i] >= g.dim(0)) throw ConfigError("cluster_broadcast: cluster index out of range");
    const T* gk = g.data().data() + cluster_of[i] * dv;
    for (std::size_t j = 0; j < dv; ++j) o[i * dv + j] = weights[i] * gk[j];
  }
  detail::finish(out, "cluster_broadcast");
  if (detail::any_requires_grad<T>({&g, &weights})) {
    detail::attach<T>(out, [gn = g.ptr(), wn = weights.ptr(), cluster_of, rows, dv](Node<T>& self) {
      T* gg = detail::grad_of(gn);
      T* gw = detail::grad_of(wn);
      for (std::size_t i = 0; i < rows; ++i) {
        const auto k = cluster_of[i];
        const T* go = self.grad.data() + i * dv;
        if (gg)
          for (std::size_t j = 0; j < dv; ++j) gg[k * dv + j] += go[j] * wn->value[i];
        if (gw) {
          T acc = 0;
          for (std::size_t j = 0; j < dv; ++j) acc += go[j] * gn->value[k * dv + j];
          gw[i] += acc;
        }
      }
    });
  }
  return out;
}

// sig(alpha * s + beta), strictly inside (0, 1).
template <class T>
Tensor<T> similarity_gate(const Tensor<T>& s, const Tensor<T>& alpha, const Tensor<T>& beta) {
  return sigmoid(affine_scalar(s, alpha, beta));
}

// Single-cluster aggregation: member values [m, d'], their similarities
// [m, 1] to the center, center value [1, d'] -> aggregated feature [1, d'].
template <class T>
Tensor<T> aggregate_cluster(const Tensor<T>& member_values, const Tensor<T>& similarities, const Tensor<T>& center_value,
                            const Tensor<T>& alpha, const Tensor<T>& beta) {
  const std::vector<std::size_t> one_cluster(member_values.dim(0), 0);
  return cluster_aggregate(member_values, center_value, similarity_gate(similarities, alpha, beta), one_cluster);
}

// p_i' = p_i + FC(sig(alpha * s_i + beta) * g) for the members of one cluster.
template <class T>
Tensor<T> dispatch_cluster(const Tensor<T>& points, const Tensor<T>& g, const Tensor<T>& similarities,
                           const Tensor<T>& alpha, const Tensor<T>& beta, const Tensor<T>& w_dispatch,
                           const Tensor<T>& b_dispatch) {
  if (w_dispatch.dim(0) != g.dim(1) || w_dispatch.dim(1) != points.dim(1))
    throw ConfigError("dispatch_cluster: FC " + to_string(w_dispatch.shape()) + " does not map " +
                      std::to_string(g.dim(1)) + " -> " + std::to_string(points.dim(1)));
  const std::vector<std::size_t> one_cluster(points.dim(0), 0);
  auto sent = cluster_broadcast(g, similarity_gate(similarities, alpha, beta), one_cluster);
  return add(points, linear(sent, w_dispatch, b_dispatch));
}

// ---------------------------------------------------------------------------
// Modules

template <class T>
struct Dense {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out]

  Dense() = default;
  Dense(std::size_t in, std::size_t out, Rng& rng)
      : weight(param_init<T>({in, out}, InitScheme::UniformFanIn, rng)),
        bias(param_init<T>({out}, InitScheme::Zeros, rng)) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight, bias); }
  std::size_t in() const { return weight.dim(0); }
  std::size_t out() const { return weight.dim(1); }

  void parameters(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
  }
};

template <class T>
struct LayerNorm {
  Tensor<T> gamma, beta;

  LayerNorm() = default;
  LayerNorm(std::size_t d, Rng& rng)
      : gamma(param_init<T>({d}, InitScheme::Constant, rng, 1.0)), beta(param_init<T>({d}, InitScheme::Zeros, rng)) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gamma, beta); }

  void parameters(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".gamma", gamma});
    out.push_back({prefix + ".beta", beta});
  }
};

// Multi-head context clustering over [features || positions].
template <class T>
class ClusterLayer {
 public:
  ClusterLayer() = default;
  ClusterLayer(std::size_t dim, std::size_t heads, std::size_t head_dim, std::size_t centers, Rng& rng)
      : dim_(dim), heads_(heads), head_dim_(head_dim), centers_(centers) {
    if (heads == 0 || head_dim == 0) throw ConfigError("cluster layer: heads and head_dim must be positive");
    if (!is_perfect_square(centers)) throw ConfigError("cluster layer: centers must be a perfect square");
    sim_ = Dense<T>(dim + 2, heads * head_dim, rng);
    val_ = Dense<T>(dim + 2, heads * head_dim, rng);
    for (std::size_t h = 0; h < heads; ++h) {
      alpha_.push_back(param_init<T>({1}, InitScheme::Constant, rng, 1.0));
      beta_.push_back(param_init<T>({1}, InitScheme::Constant, rng, 0.0));
    }
    fuse_ = Dense<T>(heads * head_dim, dim, rng);
  }

  // FC(concat_h sig(alpha_h s + beta_h) * g_h) for every point.
  Tensor<T> delta(const PointSet<T>& ps, const Tensor<T>& x) const {
    const auto n = ps.points(), batch = ps.batch;
    validate_center_grid(ps.height, ps.width, centers_);
    auto input = concat<T>({x, tiled_positions(ps)}, 1);
    auto sim_space = sim_(input);
    auto val_space = val_(input);
    std::vector<Tensor<T>> outs;
    outs.reserve(heads_);
    if (capture_) captured_.assign(heads_, {});
    for (std::size_t h = 0; h < heads_; ++h) {
      auto ps_h = heads_ == 1 ? sim_space : slice_cols(sim_space, h * head_dim_, (h + 1) * head_dim_);
      auto pv_h = heads_ == 1 ? val_space : slice_cols(val_space, h * head_dim_, (h + 1) * head_dim_);
      auto centers = propose_centers(ps_h, ps.height, ps.width, centers_);
      auto value_centers = propose_centers(pv_h, ps.height, ps.width, centers_);
      auto s = cosine_similarity_grouped(centers, ps_h, batch);
      const auto cluster_of = assign_grouped(s, batch, centers_);
      if (capture_) {
        auto& cap = captured_[h];
        cap.resize(cluster_of.size());
        for (std::size_t k = 0; k < cluster_of.size(); ++k) cap[k] = cluster_of[k] - (k / n) * centers_;
      }
      auto w = similarity_gate(assigned_similarity(s, cluster_of), alpha_[h], beta_[h]);
      auto g = cluster_aggregate(pv_h, value_centers, w, cluster_of);
      outs.push_back(cluster_broadcast(g, w, cluster_of));
    }
    auto merged = heads_ == 1 ? outs[0] : concat(outs, 1);
    return fuse_(merged);
  }

  // x + delta.
  Tensor<T> operator()(const PointSet<T>& ps, const Tensor<T>& x) const { return add(x, delta(ps, x)); }

  std::size_t centers() const { return centers_; }
  void set_centers(std::size_t c) {
    if (!is_perfect_square(c)) throw ConfigError("cluster layer: centers must be a perfect square");
    centers_ = c;
  }
  std::size_t heads() const { return heads_; }
  std::size_t head_dim() const { return head_dim_; }
  std::size_t dim() const { return dim_; }

  // When enabled, each forward stores per-head local center indices for
  // every (image, point), in batch-major raster order.
  void set_capture(bool on) const { capture_ = on; }
  const std::vector<std::vector<std::size_t>>& captured() const { return captured_; }

  const Tensor<T>& alpha(std::size_t h) const { return alpha_.at(h); }
  const Tensor<T>& beta(std::size_t h) const { return beta_.at(h); }
  Dense<T>& sim_fc() { return sim_; }
  Dense<T>& val_fc() { return val_; }
  Dense<T>& fuse_fc() { return fuse_; }

  void parameters(ParamList<T>& out, const std::string& prefix) const {
    sim_.parameters(out, prefix + ".sim");
    val_.parameters(out, prefix + ".val");
    for (std::size_t h = 0; h < heads_; ++h) {
      out.push_back({prefix + ".alpha." + std::to_string(h), alpha_[h]});
      out.push_back({prefix + ".beta." + std::to_string(h), beta_[h]});
    }
    fuse_.parameters(out, prefix + ".fuse");
  }

 private:
  std::size_t dim_ = 0, heads_ = 1, head_dim_ = 1, centers_ = 1;
  Dense<T> sim_, val_, fuse_;
  std::vector<Tensor<T>> alpha_, beta_;
  mutable bool capture_ = false;
  mutable std::vector<std::vector<std::size_t>> captured_;
};

template <class T>
Tensor<T> multi_head_cluster_layer(const PointSet<T>& ps, const ClusterLayer<T>& layer) {
  return layer(ps, ps.features);
}

// x + cluster(LN(x)), then x + MLP(LN(x)) with MLP = FC(d, r*d) -> GELU -> FC(r*d, d).
template <class T>
class CocBlock {
 public:
  CocBlock() = default;
  CocBlock(std::size_t dim, std::size_t heads, std::size_t head_dim, std::size_t mlp_ratio, std::size_t centers,
           Rng& rng)
      : norm1_(dim, rng), cluster_(dim, heads, head_dim, centers, rng), norm2_(dim, rng) {
    if (mlp_ratio == 0) throw ConfigError("coc block: mlp_r must be >= 1");
    fc1_ = Dense<T>(dim, mlp_ratio * dim, rng);
    fc2_ = Dense<T>(mlp_ratio * dim, dim, rng);
  }

  PointSet<T> operator()(PointSet<T> ps) const {
    auto x = ps.features;
    x = add(x, cluster_.delta(ps, norm1_(x)));
    x = add(x, fc2_(gelu(fc1_(norm2_(x)))));
    ps.features = x;
    return ps;
  }

  std::size_t hidden_width() const { return fc1_.out(); }
  ClusterLayer<T>& cluster() { return cluster_; }
  const ClusterLayer<T>& cluster() const { return cluster_; }
  Dense<T>& fc1() { return fc1_; }
  Dense<T>& fc2() { return fc2_; }

  void parameters(ParamList<T>& out, const std::string& prefix) const {
    norm1_.parameters(out, prefix + ".norm1");
    cluster_.parameters(out, prefix + ".cluster");
    norm2_.parameters(out, prefix + ".norm2");
    fc1_.parameters(out, prefix + ".mlp.fc1");
    fc2_.parameters(out, prefix + ".mlp.fc2");
  }

 private:
  LayerNorm<T> norm1_;
  ClusterLayer<T> cluster_;
  LayerNorm<T> norm2_;
  Dense<T> fc1_, fc2_;
};

// Every point expands to an r x r block of children via one FC whose output
// is read as (r, r, d_out).
template <class T>
class PointIncreaser {
 public:
  PointIncreaser() = default;
  PointIncreaser(std::size_t rate, std::size_t d_in, std::size_t d_out, Rng& rng)
      : rate_(rate), d_out_(d_out), fc_(d_in, rate * rate * d_out, rng) {
    if (rate == 0) throw ConfigError("point increaser: sample_r must be >= 1");
  }

  PointSet<T> operator()(const PointSet<T>& ps) const {
    const auto r = rate_, h = ps.height, w = ps.width, b = ps.batch, n = h * w;
    if (ps.channels() != fc_.in())
      throw ConfigError("point increaser: input width " + std::to_string(ps.channels()) + " but FC expects " +
                        std::to_string(fc_.in()));
    auto y = fc_(ps.features);  // [b*n, r*r*d_out]
    const auto H = h * r, W = w * r;
    std::vector<std::size_t> idx;
    idx.reserve(b * H * W * d_out_);
    for (std::size_t bi = 0; bi < b; ++bi)
      for (std::size_t I = 0; I < H; ++I)
        for (std::size_t J = 0; J < W; ++J) {
          const auto parent = bi * n + (I / r) * w + (J / r);
          const auto child = (I % r) * r + (J % r);
          for (std::size_t ch = 0; ch < d_out_; ++ch) idx.push_back((parent * r * r + child) * d_out_ + ch);
        }
    auto out = make_pointset(gather_elements(y, std::move(idx), {b * H * W, d_out_}), H, W);
    out.batched = ps.batched;
    return out;
  }

  std::size_t rate() const { return rate_; }
  Dense<T>& fc() { return fc_; }
  void parameters(ParamList<T>& out, const std::string& prefix) const { fc_.parameters(out, prefix + ".fc"); }

 private:
  std::size_t rate_ = 1, d_out_ = 1;
  Dense<T> fc_;
};

// Each non-overlapping r x r patch, concatenated in raster order, maps by FC
// to one point.
template <class T>
class PointReducer {
 public:
  PointReducer() = default;
  PointReducer(std::size_t rate, std::size_t d_in, std::size_t d_out, Rng& rng)
      : rate_(rate), d_in_(d_in), fc_(rate * rate * d_in, d_out, rng) {
    if (rate == 0) throw ConfigError("point reducer: sample_r must be >= 1");
  }

  PointSet<T> operator()(const PointSet<T>& ps) const {
    const auto r = rate_, h = ps.height, w = ps.width, b = ps.batch, n = h * w;
    if (h % r || w % r)
      throw ConfigError("point reducer: " + std::to_string(h) + "x" + std::to_string(w) + " grid not divisible by " +
                        std::to_string(r));
    if (ps.channels() != d_in_)
      throw ConfigError("point reducer: input width " + std::to_string(ps.channels()) + " but expected " +
                        std::to_string(d_in_));
    const auto H = h / r, W = w / r;
    std::vector<std::size_t> idx;
    idx.reserve(b * n * d_in_);
    for (std::size_t bi = 0; bi < b; ++bi)
      for (std::size_t I = 0; I < H; ++I)
        for (std::size_t J = 0; J < W; ++J)
          for (std::size_t u = 0; u < r; ++u)
            for (std::size_t v = 0; v < r; ++v) {
              const auto src = bi * n + (I * r + u) * w + (J * r + v);
              for (std::size_t ch = 0; ch < d_in_; ++ch) idx.push_back(src * d_in_ + ch);
            }
    auto patches = gather_elements(ps.features, std::move(idx), {b * H * W, r * r * d_in_});
    auto out = make_pointset(fc_(patches), H, W);
    out.batched = ps.batched;
    return out;
  }

  std::size_t rate() const { return rate_; }
  Dense<T>& fc() { return fc_; }
  void parameters(ParamList<T>& out, const std::string& prefix) const { fc_.parameters(out, prefix + ".fc"); }

 private:
  std::size_t rate_ = 1, d_in_ = 1;
  Dense<T> fc_;
};

template <class T>
PointSet<T> point_increaser(const PointSet<T>& ps, const PointIncreaser<T>& up) {
  return up(ps);
}

template <class T>
PointSet<T> point_reducer(const PointSet<T>& ps, const PointReducer<T>& down) {
  return down(ps);
}

template <class T>
PointSet<T> coc_block(const PointSet<T>& ps, const CocBlock<T>& block) {
  return block(ps);
}

}  // namespace cocgan
