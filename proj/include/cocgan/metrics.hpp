#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <exception>
#include <mutex>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "cocgan/checkpoint.hpp"
#include "cocgan/cocblocks.hpp"
#include "cocgan/data.hpp"
#include "cocgan/error.hpp"
#include "cocgan/optim.hpp"

namespace cocgan {

// Row-major [n, d] feature matrix.
struct Features {
  std::size_t n = 0, d = 0;
  std::vector<double> v;
  double at(std::size_t i, std::size_t j) const { return v[i * d + j]; }
};

struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> cov;  // d x d, row-major
  std::size_t count = 0;
  std::size_t dim() const { return mean.size(); }
};

// Two-pass mean and unbiased covariance.
inline FeatureStats feature_stats(const Features& f) {
  if (f.n < 2) throw InputError("feature_stats: need at least 2 samples, got " + std::to_string(f.n));
  FeatureStats s;
  s.count = f.n;
  s.mean.assign(f.d, 0.0);
  for (std::size_t i = 0; i < f.n; ++i)
    for (std::size_t j = 0; j < f.d; ++j) s.mean[j] += f.at(i, j);
  for (auto& m : s.mean) m /= static_cast<double>(f.n);
  s.cov.assign(f.d * f.d, 0.0);
  std::vector<double> c(f.d);
  for (std::size_t i = 0; i < f.n; ++i) {
    for (std::size_t j = 0; j < f.d; ++j) c[j] = f.at(i, j) - s.mean[j];
    for (std::size_t a = 0; a < f.d; ++a)
      for (std::size_t b = a; b < f.d; ++b) s.cov[a * f.d + b] += c[a] * c[b];
  }
  for (std::size_t a = 0; a < f.d; ++a)
    for (std::size_t b = a; b < f.d; ++b) {
      s.cov[a * f.d + b] /= static_cast<double>(f.n - 1);
      s.cov[b * f.d + a] = s.cov[a * f.d + b];
    }
  return s;
}

namespace detail {

using DMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::SelfAdjointEigenSolver<DMat> eigen_sym(const DMat& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<DMat> es(0.5 * (m + m.transpose()));
  if (es.info() != Eigen::Success) throw NumericError(std::string(what) + ": eigen-solver did not converge");
  return es;
}

// Square root of a symmetric PSD matrix; negative eigenvalues count as 0.
inline DMat sqrtm_psd(const DMat& m) {
  auto es = eigen_sym(m, "sqrtm");
  Eigen::VectorXd r = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * r.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 sqrtm(S_a^1/2 S_b S_a^1/2)).
inline double fid(const FeatureStats& a, const FeatureStats& b) {
  if (a.dim() != b.dim() || a.dim() == 0) throw InputError("fid: feature dimensions differ");
  const auto d = static_cast<Eigen::Index>(a.dim());
  const Eigen::Map<const detail::DMat> sa(a.cov.data(), d, d), sb(b.cov.data(), d, d);
  double mean_term = 0;
  for (std::size_t j = 0; j < a.dim(); ++j) mean_term += (a.mean[j] - b.mean[j]) * (a.mean[j] - b.mean[j]);
  const detail::DMat ra = detail::sqrtm_psd(sa);
  const detail::DMat inner = ra * sb * ra;
  auto es = detail::eigen_sym(inner, "fid");
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return mean_term + sa.trace() + sb.trace() - 2.0 * tr_sqrt;
}

// Unbiased MMD^2 with k(x, y) = (x.y / d + 1)^3.
inline double kid(const Features& x, const Features& y) {
  if (x.n < 2 || y.n < 2) throw InputError("kid: both sets need at least 2 samples");
  if (x.d != y.d) throw InputError("kid: feature dimensions differ");
  const auto d = static_cast<double>(x.d);
  auto k = [&](const Features& a, std::size_t i, const Features& b, std::size_t j) {
    double dot = 0;
    for (std::size_t q = 0; q < a.d; ++q) dot += a.at(i, q) * b.at(j, q);
    const double t = dot / d + 1.0;
    return t * t * t;
  };
  double kxx = 0, kyy = 0, kxy = 0;
  for (std::size_t i = 0; i < x.n; ++i)
    for (std::size_t j = 0; j < x.n; ++j)
      if (i != j) kxx += k(x, i, x, j);
  for (std::size_t i = 0; i < y.n; ++i)
    for (std::size_t j = 0; j < y.n; ++j)
      if (i != j) kyy += k(y, i, y, j);
  for (std::size_t i = 0; i < x.n; ++i)
    for (std::size_t j = 0; j < y.n; ++j) kxy += k(x, i, y, j);
  const double n = static_cast<double>(x.n), m = static_cast<double>(y.n);
  return kxx / (n * (n - 1)) + kyy / (m * (m - 1)) - 2.0 * kxy / (n * m);
}

// exp(mean_x KL(p(y|x) || p(y))), with 0 log 0 = 0. Rows are [n, classes].
inline double inception_score(const Features& p) {
  if (p.n == 0) throw InputError("inception_score: no rows");
  for (std::size_t i = 0; i < p.n; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < p.d; ++j) {
      const double v = p.at(i, j);
      if (!(v >= 0)) throw InputError("inception_score: row " + std::to_string(i) + " has a negative entry");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-6) throw InputError("inception_score: row " + std::to_string(i) + " sums to " + std::to_string(s));
  }
  std::vector<double> marginal(p.d, 0.0);
  for (std::size_t i = 0; i < p.n; ++i)
    for (std::size_t j = 0; j < p.d; ++j) marginal[j] += p.at(i, j);
  for (auto& m : marginal) m /= static_cast<double>(p.n);
  double kl = 0;
  for (std::size_t i = 0; i < p.n; ++i)
    for (std::size_t j = 0; j < p.d; ++j) {
      const double v = p.at(i, j);
      if (v > 0) kl += v * (std::log(v) - std::log(marginal[j]));
    }
  return std::exp(kl / static_cast<double>(p.n));
}

struct ScoreSpread {
  double mean = 0, std = 0;
};

// Inception score over `splits` contiguous chunks: mean and population std.
inline ScoreSpread inception_score_splits(const Features& p, std::size_t splits) {
  if (splits == 0 || splits > p.n) throw InputError("inception_score: splits must lie in [1, rows]");
  std::vector<double> scores;
  for (std::size_t s = 0; s < splits; ++s) {
    const auto lo = s * p.n / splits, hi = (s + 1) * p.n / splits;
    Features part{hi - lo, p.d, std::vector<double>(p.v.begin() + lo * p.d, p.v.begin() + hi * p.d)};
    scores.push_back(inception_score(part));
  }
  ScoreSpread out;
  for (double v : scores) out.mean += v;
  out.mean /= static_cast<double>(splits);
  for (double v : scores) out.std += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(out.std / static_cast<double>(splits));
  return out;
}

// ---------------------------------------------------------------------------
// Feature extractor: reducer 28x28 -> 7x7 (1 -> 32), one CoC block,
// reducer 7x7 -> 1 (32 -> 64) giving the feature tap, then FC(64 -> classes).

inline constexpr std::size_t kExtractorFeatures = 64;

template <class T>
class FeatureExtractor {
 public:
  FeatureExtractor(std::size_t channels, std::size_t classes, Rng& rng)
      : channels_(channels),
        down1_(4, channels, 32, rng),
        block_(32, 4, 8, 2, 1, rng),
        down2_(7, 32, kExtractorFeatures, rng),
        head_(kExtractorFeatures, classes, rng) {}

  Tensor<T> features(const Tensor<T>& images) const {
    auto ps = image_to_points(images);
    if (ps.height != 28 || ps.width != 28 || ps.channels() != channels_)
      throw ConfigError("extractor: expected 28x28x" + std::to_string(channels_) + " images");
    return down2_(block_(down1_(ps))).features;
  }
  Tensor<T> logits(const Tensor<T>& images) const { return head_logits(features(images)); }
  Tensor<T> head_logits(const Tensor<T>& feats) const { return head_(gelu(feats)); }
  std::size_t classes() const { return head_.out(); }
  std::size_t channels() const { return channels_; }

  ParamList<T> parameters() const {
    ParamList<T> out;
    down1_.parameters(out, "reduce1");
    block_.parameters(out, "block");
    down2_.parameters(out, "reduce2");
    head_.parameters(out, "head");
    return out;
  }

  // FNV-1a over parameter names and 32-bit values.
  std::string hash() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&](std::uint8_t b) {
      h ^= b;
      h *= 1099511628211ull;
    };
    for (const auto& p : parameters()) {
      for (char c : p.name) mix(static_cast<std::uint8_t>(c));
      for (T v : p.tensor.data()) {
        const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        for (int s = 0; s < 32; s += 8) mix(static_cast<std::uint8_t>(u >> s));
      }
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

 private:
  std::size_t channels_;
  PointReducer<T> down1_;
  CocBlock<T> block_;
  PointReducer<T> down2_;
  Dense<T> head_;
};

// Worker count from COCGAN_THREADS, default 1.
inline std::size_t worker_count() {
  const char* env = std::getenv("COCGAN_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) throw ConfigError("COCGAN_THREADS must be a positive integer");
  return static_cast<std::size_t>(v);
}

// Runs fn(first, last) over fixed 64-image chunks on up to `workers` threads.
// Each chunk writes only its own rows, so the result does not depend on the
// number of workers.
template <class Fn>
void parallel_chunks(std::size_t n, std::size_t workers, Fn&& fn) {
  constexpr std::size_t kChunk = 64;
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  workers = std::max<std::size_t>(1, std::min(workers, chunks));
  if (workers == 1) {
    for (std::size_t c = 0; c < chunks; ++c) fn(c * kChunk, std::min(n, (c + 1) * kChunk));
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr err;
  std::mutex mu;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t c = w; c < chunks; c += workers) fn(c * kChunk, std::min(n, (c + 1) * kChunk));
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!err) err = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

struct ExtractorOutputs {
  Features features;  // [n, 64]
  Features probs;     // [n, classes]
};

// Images [n, 28, 28, ch] -> penultimate features and softmax class probabilities.
template <class T>
ExtractorOutputs run_extractor(const FeatureExtractor<T>& fx, const Tensor<T>& images, std::size_t workers = worker_count()) {
  const auto n = images.dim(0), per = images.size() / std::max<std::size_t>(n, 1);
  ExtractorOutputs out;
  out.features = {n, kExtractorFeatures, std::vector<double>(n * kExtractorFeatures)};
  out.probs = {n, fx.classes(), std::vector<double>(n * fx.classes())};
  parallel_chunks(n, workers, [&](std::size_t lo, std::size_t hi) {
    NoGradGuard ng;
    std::vector<T> chunk(images.data().begin() + lo * per, images.data().begin() + hi * per);
    Tensor<T> x({hi - lo, images.dim(1), images.dim(2), images.dim(3)}, chunk);
    auto f = fx.features(x);
    auto p = softmax_rows(fx.head_logits(f));
    for (std::size_t i = 0; i < f.size(); ++i) out.features.v[lo * kExtractorFeatures + i] = f[i];
    for (std::size_t i = 0; i < p.size(); ++i) out.probs.v[lo * fx.classes() + i] = p[i];
  });
  return out;
}

template <class T>
double extractor_accuracy(const FeatureExtractor<T>& fx, const Dataset& ds, std::size_t workers = worker_count()) {
  if (ds.count == 0) return 0.0;
  std::vector<std::size_t> all(ds.count);
  for (std::size_t i = 0; i < ds.count; ++i) all[i] = i;
  const auto out = run_extractor(fx, ds.batch<T>(all), workers);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < ds.count; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < out.probs.d; ++j)
      if (out.probs.at(i, j) > out.probs.at(i, best)) best = j;
    hit += static_cast<int>(best) == ds.labels[i];
  }
  return static_cast<double>(hit) / static_cast<double>(ds.count);
}

struct ExtractorTrainConfig {
  std::size_t epochs = 10;
  std::size_t batch = 64;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  double min_accuracy = 0.80;
};

struct ExtractorReport {
  std::vector<double> accuracy;  // held-out accuracy after each epoch
  std::vector<double> loss;      // mean training loss per epoch
  double final_accuracy = 0;
  bool qualified = false;
};

// Cross-entropy training with Adam (0.9, 0.999). Not qualified (and not
// usable for metrics) unless held-out accuracy reaches min_accuracy.
template <class T>
ExtractorReport train_feature_extractor(FeatureExtractor<T>& fx, const Dataset& train, const Dataset& heldout,
                                        const ExtractorTrainConfig& cfg) {
  if (cfg.epochs == 0 || cfg.batch == 0) throw ConfigError("train-extractor: epochs and batch must be >= 1");
  if (train.count < cfg.batch) throw ConfigError("train-extractor: fewer training images than one batch");
  OptimConfig oc;
  oc.kind = OptimKind::Adam;
  oc.lr = cfg.lr;
  oc.beta1 = 0.9;
  oc.beta2 = 0.999;
  Optimizer<T> opt(fx.parameters(), oc);
  ExtractorReport rep;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double sum = 0;
    std::size_t steps = 0;
    for (const auto& idx : batch_iter(train.count, cfg.batch, cfg.seed, epoch)) {
      opt.zero_grad();
      auto loss = softmax_cross_entropy(fx.logits(train.batch<T>(idx)), train.batch_labels(idx));
      sum += loss.item();
      ++steps;
      backward(loss);
      active_tape<T>().clear();
      opt.step();
    }
    rep.loss.push_back(sum / static_cast<double>(steps));
    rep.accuracy.push_back(extractor_accuracy(fx, heldout));
  }
  rep.final_accuracy = rep.accuracy.back();
  rep.qualified = rep.final_accuracy >= cfg.min_accuracy;
  return rep;
}

template <class T>
void save_extractor(const std::string& path, const FeatureExtractor<T>& fx, const ExtractorReport& rep) {
  Checkpoint ck;
  ck.params = snapshot_params(fx.parameters());
  ck.metadata["role"] = "extractor";
  ck.metadata["accuracy"] = std::to_string(rep.final_accuracy);
  ck.metadata["qualified"] = rep.qualified ? "1" : "0";
  ck.metadata["channels"] = std::to_string(fx.channels());
  ck.metadata["classes"] = std::to_string(fx.classes());
  write_checkpoint_file(path, ck);
}

// Loads an extractor checkpoint; refuses one that missed its accuracy gate.
template <class T>
FeatureExtractor<T> load_extractor(const std::string& path) {
  auto ck = read_checkpoint_file(path);
  auto get = [&](const char* k) {
    auto it = ck.metadata.find(k);
    if (it == ck.metadata.end()) throw LoadError("extractor: '" + path + "' lacks metadata '" + k + "'");
    return it->second;
  };
  if (get("role") != "extractor") throw LoadError("extractor: '" + path + "' is not an extractor checkpoint");
  if (get("qualified") != "1")
    throw ConfigError("extractor: '" + path + "' did not reach its accuracy gate (accuracy " + get("accuracy") +
                      "); metrics refuse to use it");
  Rng rng(0);
  FeatureExtractor<T> fx(std::stoul(get("channels")), std::stoul(get("classes")), rng);
  auto params = fx.parameters();
  restore_params(ck, params);
  return fx;
}

struct MetricReport {
  double fid = 0, kid = 0, is = 0, is_std = 0;
  std::string extractor_hash;
  std::size_t n_real = 0, n_fake = 0;
};

template <class T>
MetricReport evaluate_metrics(const FeatureExtractor<T>& fx, const Tensor<T>& real, const Tensor<T>& fake,
                              std::size_t is_splits = 10, std::size_t kid_max = 1000) {
  const auto r = run_extractor(fx, real), f = run_extractor(fx, fake);
  MetricReport m;
  m.fid = fid(feature_stats(r.features), feature_stats(f.features));
  auto head = [&](const Features& x) {
    const auto n = std::min(x.n, kid_max);
    return Features{n, x.d, std::vector<double>(x.v.begin(), x.v.begin() + n * x.d)};
  };
  m.kid = kid(head(r.features), head(f.features));
  const auto s = inception_score_splits(f.probs, std::min(is_splits, f.probs.n));
  m.is = s.mean;
  m.is_std = s.std;
  m.extractor_hash = fx.hash();
  m.n_real = real.dim(0);
  m.n_fake = fake.dim(0);
  return m;
}

inline void write_metric_report(const std::string& path, const MetricReport& m) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw LoadError("metrics: cannot write '" + path + "'");
  char buf[512];
  std::snprintf(buf, sizeof buf, "fid=%.9g\nkid=%.9g\nis=%.9g\nis_std=%.9g\nextractor_hash=%s\nn_real=%zu\nn_fake=%zu\n",
                m.fid, m.kid, m.is, m.is_std, m.extractor_hash.c_str(), m.n_real, m.n_fake);
  f << buf;
}

}  // namespace cocgan
