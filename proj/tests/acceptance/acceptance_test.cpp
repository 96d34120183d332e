// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cocgan/cocgan.hpp"

using namespace cocgan;
namespace fs = std::filesystem;

namespace {

const std::string kData = COCGAN_TEST_DATA;
const std::string kImages = kData + "/mnist-10k-images-idx3-ubyte.gz";
const std::string kLabels = kData + "/mnist-10k-labels-idx1-ubyte.gz";

// Collects failed expectations; the first few are reported.
struct Check {
  std::size_t total = 0;
  std::vector<std::string> failures;
  std::vector<std::string> notes;

  void expect(bool ok, const std::string& what) {
    ++total;
    if (!ok) failures.push_back(what);
  }
  void note(const std::string& s) { notes.push_back(s); }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor<double>(std::move(shape), std::move(v));
}

// sum(w .* y) with fixed random w.
Tensor<double> probe(const Tensor<double>& y, std::uint64_t seed) {
  Rng rng(seed);
  return sum_all(mul(y, random_tensor(y.shape(), rng)));
}

PointSet<double> random_points(Rng& rng, std::size_t batch, std::size_t side, std::size_t d) {
  return make_pointset(random_tensor({batch * side * side, d}, rng), side, side);
}

std::vector<std::size_t> iota_n(std::size_t first, std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = first + i;
  return v;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("cocgan_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---------------------------------------------------------------------------
// 1. Gradient fidelity

void gradients(Check& c) {
  const double tol = 1e-4;
  Rng rng(101);
  auto record = [&](const std::string& what, const GradCheckReport& r) {
    c.expect(r.passed, what + " rel err " + fmt("%.3g", r.max_rel_error));
  };
  std::map<std::string, int> instances;

  for (int t = 0; t < 10; ++t) {
    const std::size_t m = 1 + rng.below(5), k = 1 + rng.below(5), n = 1 + rng.below(5);
    auto x = random_tensor({m, k}, rng), w = random_tensor({k, n}, rng), b = random_tensor({n}, rng);
    record("linear/x", grad_check([&](const Tensor<double>& v) { return probe(linear(v, w, b), t); }, x, tol));
    record("linear/w", grad_check([&](const Tensor<double>& v) { return probe(linear(x, v, b), t); }, w, tol));
    record("linear/b", grad_check([&](const Tensor<double>& v) { return probe(linear(x, w, v), t); }, b, tol));
    ++instances["linear"];
  }
  for (int t = 0; t < 10; ++t) {
    const std::size_t m = 1 + rng.below(4), d = 3 + rng.below(5);
    auto x = random_tensor({m, d}, rng, -2, 2), g = random_tensor({d}, rng), b = random_tensor({d}, rng);
    record("layer_norm/x", grad_check([&](const Tensor<double>& v) { return probe(layer_norm(v, g, b), t); }, x, tol));
    record("layer_norm/gamma", grad_check([&](const Tensor<double>& v) { return probe(layer_norm(x, v, b), t); }, g, tol));
    ++instances["layer_norm"];
  }
  for (int t = 0; t < 10; ++t) {
    const std::size_t ca = 1 + rng.below(4), nb = 1 + rng.below(6), d = 2 + rng.below(4);
    auto a = random_tensor({ca, d}, rng), b = random_tensor({nb, d}, rng);
    record("cosine/a", grad_check([&](const Tensor<double>& v) { return probe(cosine_similarity(v, b), t); }, a, tol));
    record("cosine/b", grad_check([&](const Tensor<double>& v) { return probe(cosine_similarity(a, v), t); }, b, tol));
    ++instances["cosine"];
  }
  for (int t = 0; t < 10; ++t) {
    const std::size_t m = 1 + rng.below(8), d = 1 + rng.below(4);
    auto v = random_tensor({m, d}, rng), s = random_tensor({m, 1}, rng), vc = random_tensor({1, d}, rng);
    auto alpha = Tensor<double>::scalar(rng.uniform(-2, 2)), beta = Tensor<double>::scalar(rng.uniform(-2, 2));
    auto fab = [&](const Tensor<double>& ab) {
      auto a = reshape(slice_cols(reshape(ab, {1, 2}), 0, 1), {1});
      auto b = reshape(slice_cols(reshape(ab, {1, 2}), 1, 2), {1});
      return probe(aggregate_cluster(v, s, vc, a, b), t);
    };
    auto r = grad_check(fab, Tensor<double>({2}, {alpha.item(), beta.item()}), tol);
    record("aggregate/alpha,beta", r);
    c.expect(r.max_abs_fd > 1e-8, "aggregate/alpha,beta gradient vanished");
    record("aggregate/values",
           grad_check([&](const Tensor<double>& x) { return probe(aggregate_cluster(x, s, vc, alpha, beta), t); }, v, tol));
    record("aggregate/similarity",
           grad_check([&](const Tensor<double>& x) { return probe(aggregate_cluster(v, x, vc, alpha, beta), t); }, s, tol));
    record("aggregate/center",
           grad_check([&](const Tensor<double>& x) { return probe(aggregate_cluster(v, s, x, alpha, beta), t); }, vc, tol));
    ++instances["aggregate"];
  }
  for (int t = 0; t < 10; ++t) {
    const std::size_t m = 1 + rng.below(6), d = 2 + rng.below(3), dv = 1 + rng.below(4);
    auto p = random_tensor({m, d}, rng), g = random_tensor({1, dv}, rng), s = random_tensor({m, 1}, rng);
    auto w = random_tensor({dv, d}, rng), b = random_tensor({d}, rng);
    auto alpha = Tensor<double>::scalar(rng.uniform(-2, 2), true), beta = Tensor<double>::scalar(rng.uniform(-2, 2), true);
    for (auto* x : {&p, &g, &s, &w, &b}) x->set_requires_grad(true);
    record("dispatch", grad_check_params({alpha, beta, p, g, s, w, b},
                                         [&] { return probe(dispatch_cluster(p, g, s, alpha, beta, w, b), t); }, tol));
    ++instances["dispatch"];
  }
  for (int t = 0; t < 10; ++t) {
    const std::size_t d_in = 1 + rng.below(3);
    PointIncreaser<double> up(1 + rng.below(3), d_in, 1 + rng.below(3), rng);
    auto ps = random_points(rng, 2, 1 + rng.below(2), d_in);
    ParamList<double> params;
    up.parameters(params, "up");
    record("increaser/params", grad_check_params(tensors_of(params), [&] { return probe(up(ps).features, t); }, tol));
    record("increaser/input", grad_check(
                                  [&](const Tensor<double>& x) {
                                    auto q = ps;
                                    q.features = x;
                                    return probe(up(q).features, t);
                                  },
                                  ps.features, tol));
    ++instances["increaser"];
  }
  for (int t = 0; t < 10; ++t) {
    const std::size_t r = 1 + rng.below(3), d = 1 + rng.below(3);
    PointReducer<double> down(r, d, 1 + rng.below(4), rng);
    auto ps = random_points(rng, 2, r * (1 + rng.below(2)), d);
    ParamList<double> params;
    down.parameters(params, "down");
    record("reducer/params", grad_check_params(tensors_of(params), [&] { return probe(down(ps).features, t); }, tol));
    record("reducer/input", grad_check(
                                [&](const Tensor<double>& x) {
                                  auto q = ps;
                                  q.features = x;
                                  return probe(down(q).features, t);
                                },
                                ps.features, tol));
    ++instances["reducer"];
  }
  // Full generator at the default size; each instance probes 64 random
  // seed entries and 64 random parameters.
  for (int t = 0; t < 10; ++t) {
    Generator<double> g(generator_config(), rng);
    auto z = g.sample_noise(1, rng);
    record("generator/seed", grad_check([&](const Tensor<double>& zz) { return probe(g.forward(zz), t); }, z, tol, 1e-3, 64, t));
    auto rp = grad_check_params(tensors_of(g.parameters()), [&] { return probe(g.forward(z), t); }, tol, 1e-3, 64, t);
    record("generator/params", rp);
    ++instances["generator"];
  }
  std::string counts;
  for (const auto& [k, v] : instances) counts += (counts.empty() ? "" : " ") + k + "=" + std::to_string(v);
  c.note(counts);
}

// ---------------------------------------------------------------------------
// 2. Aggregation / dispatch against scalar loops

std::vector<double> loop_aggregate(const std::vector<std::vector<double>>& v, const std::vector<double>& s,
                                   const std::vector<double>& vc, double alpha, double beta) {
  double denom = 1.0;
  std::vector<double> num = vc;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double w = sig(alpha * s[i] + beta);
    denom += w;
    for (std::size_t j = 0; j < vc.size(); ++j) num[j] += w * v[i][j];
  }
  for (auto& x : num) x /= denom;
  return num;
}

std::vector<double> row_of(const Tensor<double>& t, std::size_t i) {
  const auto d = t.dim(1);
  return {t.data().begin() + i * d, t.data().begin() + (i + 1) * d};
}

void oracles(Check& c) {
  Rng rng(202);
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t m = t % 13, d = 1 + rng.below(6), dv = 1 + rng.below(5), dp = 1 + rng.below(5);
    auto v = random_tensor({m, d}, rng, -2, 2), s = random_tensor({m, 1}, rng), vc = random_tensor({1, d}, rng, -2, 2);
    const double a = rng.uniform(-3, 3), b = rng.uniform(-3, 3);
    auto g = aggregate_cluster(v, s, vc, Tensor<double>::scalar(a), Tensor<double>::scalar(b));
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < m; ++i) rows.push_back(row_of(v, i));
    const auto want = loop_aggregate(rows, std::vector<double>(s.data().begin(), s.data().end()), row_of(vc, 0), a, b);
    for (std::size_t j = 0; j < d; ++j) worst = std::max(worst, std::abs(g[j] - want[j]));

    const std::size_t n = 1 + rng.below(10);
    auto p = random_tensor({n, dp}, rng), gg = random_tensor({1, dv}, rng), sp = random_tensor({n, 1}, rng);
    auto w = random_tensor({dv, dp}, rng), bias = random_tensor({dp}, rng);
    auto out = dispatch_cluster(p, gg, sp, Tensor<double>::scalar(a), Tensor<double>::scalar(b), w, bias);
    for (std::size_t i = 0; i < n; ++i) {
      const double gate = sig(a * sp[i] + b);
      for (std::size_t o = 0; o < dp; ++o) {
        double acc = p[i * dp + o] + bias[o];
        for (std::size_t k = 0; k < dv; ++k) acc += w[k * dp + o] * gate * gg[k];
        worst = std::max(worst, std::abs(out[i * dp + o] - acc));
      }
    }
  }
  c.expect(worst <= 1e-12, "max deviation " + fmt("%.3g", worst));
  c.note("100 instances, max |diff| " + fmt("%.2g", worst));
}

// ---------------------------------------------------------------------------
// 3. Shape ladder

void ladder(Check& c) {
  Rng rng(303);
  Generator<float> g(generator_config(), rng);
  Discriminator<float> d(discriminator_config(), rng);
  NoGradGuard ng;
  auto z = g.sample_noise(2, rng);
  c.expect(z.dim(1) == 128, "seed width");
  auto ps = make_pointset(z, 1, 1);
  std::string trace = "G " + std::to_string(ps.points());
  const std::size_t gp[3] = {4, 16, 784}, gd[3] = {64, 32, 1};
  for (std::size_t s = 0; s < 3; ++s) {
    ps = g.stage(s).run_blocks(g.increaser(s)(ps));
    c.expect(ps.points() == gp[s] && ps.channels() == gd[s], "generator stage " + std::to_string(s + 1));
    trace += "->" + std::to_string(ps.points());
  }
  auto img = g.forward(z);
  c.expect(img.shape() == Shape{2, 28, 28, 1}, "generator output shape");
  auto dps = image_to_points(img);
  trace += ", D " + std::to_string(dps.points());
  const std::size_t dp[3] = {196, 49, 1}, dd[3] = {32, 64, 128};
  for (std::size_t s = 0; s < 3; ++s) {
    dps = d.stage(s).run_blocks(d.reducer(s)(dps));
    c.expect(dps.points() == dp[s] && dps.channels() == dd[s], "discriminator stage " + std::to_string(s + 1));
    trace += "->" + std::to_string(dps.points());
  }
  c.expect(d.forward(img).shape() == Shape{2, 1}, "scalar score per image");
  c.note(trace);
}

// ---------------------------------------------------------------------------
// 4. Clustering invariants

void clustering(Check& c) {
  Rng rng(404);
  int trials = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t k = 1 + rng.below(8), n = 1 + rng.below(32), d = 2 + rng.below(5);
    auto centers = random_tensor({k, d}, rng), points = random_tensor({n, d}, rng);
    auto a = cluster_assign(centers, points);
    std::vector<int> seen(n, 0);
    for (std::size_t j = 0; j < k; ++j)
      for (auto i : a.members[j]) {
        ++seen[i];
        c.expect(a.assignment[i] == j, "members agree with assignment");
      }
    c.expect(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }), "partition");
    for (std::size_t i = 0; i < n; ++i) {
      long double best = -10;
      std::size_t arg = 0;
      for (std::size_t j = 0; j < k; ++j) {
        long double dot = 0, na = 0, nb = 0;
        for (std::size_t q = 0; q < d; ++q) {
          dot += (long double)centers[j * d + q] * points[i * d + q];
          na += (long double)centers[j * d + q] * centers[j * d + q];
          nb += (long double)points[i * d + q] * points[i * d + q];
        }
        const long double cs = dot / std::sqrt(na * nb);
        if (cs > best) best = cs, arg = j;
      }
      c.expect(a.assignment[i] == arg, "brute-force scan");
    }
    ++trials;
  }
  // One center: a single global cluster, also through a full layer.
  ClusterLayer<double> layer(4, 2, 3, 1, rng);
  auto ps = random_points(rng, 2, 6, 4);
  layer.set_capture(true);
  layer.delta(ps, ps.features);
  for (const auto& head : layer.captured())
    c.expect(std::all_of(head.begin(), head.end(), [](std::size_t k) { return k == 0; }), "c=1 global cluster");
  auto one = cluster_assign(random_tensor({1, 3}, rng), random_tensor({20, 3}, rng));
  c.expect(one.members.size() == 1 && one.members[0].size() == 20, "c=1 members");
  // Duplicate centers tie; the lower index wins, every time.
  Tensor<double> twins({3, 2}, {1, 2, 1, 2, -1, 0});
  auto pts = random_tensor({16, 2}, rng, 0.1, 1.0);
  auto first = cluster_assign(twins, pts);
  for (int rep = 0; rep < 3; ++rep) c.expect(cluster_assign(twins, pts).assignment == first.assignment, "repeatable tie-break");
  for (auto k : first.assignment) c.expect(k != 1, "tie goes to lowest index");
  c.note(std::to_string(trials) + " brute-force instances (n <= 32)");
}

// ---------------------------------------------------------------------------
// 5. Metrics

void metrics(Check& c) {
  Rng rng(505);
  Features f{300, 6, std::vector<double>(1800)};
  for (auto& v : f.v) v = rng.normal();
  auto s = feature_stats(f);
  const double self = fid(s, s);
  c.expect(self <= 1e-6, "fid(a,a)=" + fmt("%.3g", self));
  FeatureStats a{{0.0}, {1.0}, 2}, b{{1.0}, {1.0}, 2};
  const double one = fid(a, b);
  c.expect(std::abs(one - 1.0) <= 1e-9, "1-d fid=" + fmt("%.17g", one));

  double worst = 0;
  for (int t = 0; t < 10; ++t) {
    const std::size_t n = 2 + rng.below(15), m = 2 + rng.below(15), d = 1 + rng.below(8);
    Features x{n, d, std::vector<double>(n * d)}, y{m, d, std::vector<double>(m * d)};
    for (auto& v : x.v) v = rng.normal();
    for (auto& v : y.v) v = rng.normal() + 0.3;
    long double xx = 0, yy = 0, xy = 0;
    auto k = [&](const Features& p, std::size_t i, const Features& q, std::size_t j) {
      long double dot = 0;
      for (std::size_t r = 0; r < d; ++r) dot += (long double)p.at(i, r) * q.at(j, r);
      const long double u = dot / d + 1;
      return u * u * u;
    };
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) xx += k(x, i, x, j);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        if (i != j) yy += k(y, i, y, j);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) xy += k(x, i, y, j);
    const long double want = xx / (n * (n - 1.0L)) + yy / (m * (m - 1.0L)) - 2 * xy / ((long double)n * m);
    worst = std::max(worst, std::abs(kid(x, y) - static_cast<double>(want)));
  }
  c.expect(worst <= 1e-12, "kid deviation " + fmt("%.3g", worst));

  Features uniform{5, 4, std::vector<double>(20, 0.25)};
  const double is_u = inception_score(uniform);
  c.expect(std::abs(is_u - 1.0) <= 1e-9, "IS uniform=" + fmt("%.17g", is_u));
  for (std::size_t n : {2u, 5u, 10u}) {
    Features hot{n, n, std::vector<double>(n * n, 0.0)};
    for (std::size_t i = 0; i < n; ++i) hot.v[i * n + i] = 1.0;
    const double is_n = inception_score(hot);
    c.expect(std::abs(is_n - static_cast<double>(n)) <= 1e-9, "IS one-hot n=" + std::to_string(n));
  }
  c.note("fid(a,a)=" + fmt("%.2g", self) + " fid_1d=" + fmt("%.12g", one) + " kid_dev=" + fmt("%.2g", worst));
}

// ---------------------------------------------------------------------------
// 6. WGAN mechanics

void wgan_mechanics(Check& c) {
  auto data = synthetic_blobs(96, 4, 6);
  Rng rng(606);
  auto gcfg = generator_config(), dcfg = discriminator_config(1, false, false);
  for (auto* mc : {&gcfg, &dcfg})
    for (auto& st : mc->stages) {
      st.n_blocks = 1;
      st.heads = 2;
      st.head_dim = 4;
      st.mlp_r = 1;
    }
  Generator<float> g(gcfg, rng);
  Discriminator<float> d(dcfg, rng);
  TrainConfig tc;
  tc.mode = GanMode::Wgan;
  tc.batch = 32;
  tc.epochs = 2;
  tc.n_critic = 3;
  tc.lr = 5e-3;
  std::vector<char> events;
  double worst = 0;
  const auto dp = d.parameters();
  TrainHooks hooks;
  hooks.on_update = [&](const UpdateEvent& e) {
    events.push_back(e.kind == UpdateEvent::Discriminator ? 'D' : 'G');
    if (e.kind == UpdateEvent::Discriminator) worst = std::max(worst, max_abs_param(dp));
  };
  auto res = train_run(data, g, d, tc, hooks);
  c.expect(worst <= 0.01, "max |D param| after critic step " + fmt("%.6g", worst));
  const std::size_t steps = tc.epochs * (data.count / tc.batch);
  std::string want;
  for (std::size_t s = 0; s < steps; ++s) want += "DDDG";
  c.expect(std::string(events.begin(), events.end()) == want, "update order");
  c.expect(res.d_updates == 3 * steps && res.g_updates == steps, "update counts");

  // Structure: the critic head is the vanilla head without the sigmoid.
  Rng r1(7), r2(7), r3(8);
  Discriminator<double> vanilla(discriminator_config(1, false, true), r1), critic(discriminator_config(1, false, false), r2);
  c.expect(!critic.config().sigmoid_head && vanilla.config().sigmoid_head, "sigmoid flag");
  NoGradGuard ng;
  auto x = random_tensor({3, 28, 28, 1}, r3);
  auto p = vanilla.forward(x), q = critic.forward(x);
  for (std::size_t i = 0; i < 3; ++i) c.expect(std::abs(p[i] - sig(q[i])) < 1e-14, "sigmoid(critic) == vanilla");
  c.note(std::to_string(steps) + " steps of DDDG, max|w| " + fmt("%.4g", worst));
}

// ---------------------------------------------------------------------------
// 7. Desk-scale training trend

Features fake_features(const FeatureExtractor<float>& fx, const Generator<float>& g, std::size_t n, std::uint64_t seed) {
  NoGradGuard ng;
  Rng rng(seed);
  std::vector<float> px;
  for (std::size_t lo = 0; lo < n; lo += 250) {
    auto img = g.forward(g.sample_noise(std::min<std::size_t>(250, n - lo), rng));
    px.insert(px.end(), img.data().begin(), img.data().end());
  }
  return run_extractor(fx, Tensor<float>({n, 28, 28, 1}, px), 1).features;
}

void training_trend(Check& c) {
  const auto all = read_idx(kImages, kLabels);
  ExtractorTrainConfig ec;
  ec.epochs = 3;
  Rng fx_rng(7);
  FeatureExtractor<float> fx(1, 10, fx_rng);
  auto rep = train_feature_extractor(fx, slice(all, 0, 8000), slice(all, 8000, 2000), ec);
  c.expect(rep.qualified, "extractor accuracy " + fmt("%.3f", rep.final_accuracy) + " below 0.80");

  const auto train = slice(all, 0, 2000);
  const auto real = feature_stats(run_extractor(fx, train.batch<float>(iota_n(0, 2000)), 1).features);
  const std::size_t n_fake = 1000;
  const std::uint64_t fake_seed = 4242;

  Rng rng(17);
  Generator<float> g(generator_config(), rng);
  Discriminator<float> d(discriminator_config(1, false, false), rng);
  const double fid0 = fid(real, feature_stats(fake_features(fx, g, n_fake, fake_seed)));
  TrainConfig tc;
  tc.mode = GanMode::Wgan;
  tc.batch = 64;
  tc.epochs = 5;
  tc.seed = 17;
  std::vector<double> fids, gaps;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r) {
    fids.push_back(fid(real, feature_stats(fake_features(fx, g, n_fake, fake_seed))));
    gaps.push_back(r.w_gap);
    std::cout << "  [7] epoch " << r.epoch << " gap " << fmt("%.6g", r.w_gap) << " fid " << fmt("%.4g", fids.back())
              << " loss_D " << fmt("%.6g", r.loss_d) << " (" << fmt("%.0f", r.wall_ms / 1000) << " s)\n"
              << std::flush;
  };
  train_run(train, g, d, tc, hooks);
  c.expect(gaps.back() < gaps.front(), "Wasserstein gap epoch 5 " + fmt("%.6g", gaps.back()) + " not below epoch 1 " +
                                           fmt("%.6g", gaps.front()));
  c.expect(fids.back() < fids.front(), "FID epoch 5 " + fmt("%.4g", fids.back()) + " not below epoch 1 " + fmt("%.4g", fids.front()));
  c.expect(fids.back() <= 0.7 * fid0, "FID epoch 5 " + fmt("%.4g", fids.back()) + " not 30% below untrained " + fmt("%.4g", fid0));
  c.note("extractor acc " + fmt("%.3f", rep.final_accuracy) + ", FID untrained " + fmt("%.4g", fid0) + " e1 " +
         fmt("%.4g", fids.front()) + " e5 " + fmt("%.4g", fids.back()) + ", gap e1 " + fmt("%.4g", gaps.front()) + " e5 " +
         fmt("%.4g", gaps.back()));
}

// ---------------------------------------------------------------------------
// 8. Conditional path

void conditional(Check& c) {
  const std::size_t K = 10;
  const auto train = synthetic_blobs(2000, K, 81);
  ExtractorTrainConfig ec;
  ec.epochs = 3;
  Rng fx_rng(8);
  FeatureExtractor<float> fx(1, K, fx_rng);
  auto rep = train_feature_extractor(fx, train, synthetic_blobs(500, K, 82), ec);
  c.expect(rep.qualified, "blob extractor accuracy " + fmt("%.3f", rep.final_accuracy));

  Rng rng(18);
  Generator<float> g(generator_config(1, true), rng);
  Discriminator<float> d(discriminator_config(1, true, true), rng);
  TrainConfig tc;
  tc.conditional = true;
  tc.batch = 32;
  tc.epochs = 10;
  tc.seed = 18;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r) {
    std::cout << "  [8] epoch " << r.epoch << " loss_D " << fmt("%.4g", r.loss_d) << " loss_G " << fmt("%.4g", r.loss_g)
              << " (" << fmt("%.0f", r.wall_ms / 1000) << " s)\n"
              << std::flush;
  };
  train_run(train, g, d, tc, hooks);

  const std::size_t per = 50;
  std::vector<int> labels;
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t i = 0; i < per; ++i) labels.push_back(static_cast<int>(k));
  Tensor<float> imgs;
  {
    NoGradGuard ng;
    Rng zr(99);
    imgs = g.forward(g.sample_noise(labels.size(), zr), labels);
  }
  const auto probs = run_extractor(fx, imgs, 1).probs;
  std::size_t hit = 0;
  std::vector<std::size_t> per_class(K, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < K; ++j)
      if (probs.at(i, j) > probs.at(i, best)) best = j;
    if (static_cast<int>(best) == labels[i]) ++hit, ++per_class[labels[i]];
  }
  const double acc = static_cast<double>(hit) / labels.size();
  c.expect(acc >= 0.5, "class-match accuracy " + fmt("%.3f", acc));
  std::string pc;
  for (auto v : per_class) pc += (pc.empty() ? "" : ",") + std::to_string(v);
  c.note("extractor acc " + fmt("%.3f", rep.final_accuracy) + ", generated class accuracy " + fmt("%.3f", acc) +
         " (hits per class " + pc + " of " + std::to_string(per) + ")");
}

// ---------------------------------------------------------------------------
// 9. Determinism and persistence

std::string loss_columns(const fs::path& log) {
  std::ifstream f(log);
  std::string line, out;
  while (std::getline(f, line)) out += line.substr(0, line.rfind('\t')) + "\n";
  return out;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void determinism(Check& c) {
  const auto dir = scratch("determinism");
  auto data = synthetic_blobs(128, 4, 9);
  auto run = [&](const std::string& name, GanMode mode) {
    Rng rng(909);
    auto gcfg = generator_config(), dcfg = discriminator_config(1, false, mode == GanMode::Vanilla);
    for (auto* mc : {&gcfg, &dcfg})
      for (auto& st : mc->stages) {
        st.n_blocks = 1;
        st.heads = 2;
        st.head_dim = 4;
        st.mlp_r = 1;
      }
    Generator<float> g(gcfg, rng);
    Discriminator<float> d(dcfg, rng);
    TrainConfig tc;
    tc.mode = mode;
    tc.batch = 32;
    tc.epochs = 2;
    tc.n_critic = 2;
    tc.out_dir = (dir / name).string();
    train_run(data, g, d, tc);
  };
  for (auto mode : {GanMode::Vanilla, GanMode::Wgan}) {
    const auto tag = to_string(mode);
    run(tag + "_a", mode);
    run(tag + "_b", mode);
    const auto la = loss_columns(dir / (tag + "_a") / "log.tsv"), lb = loss_columns(dir / (tag + "_b") / "log.tsv");
    c.expect(!la.empty() && la == lb, tag + " loss logs differ");
    for (const char* f : {"gen.cocg", "disc.cocg"})
      c.expect(file_bytes(dir / (tag + "_a") / f) == file_bytes(dir / (tag + "_b") / f), tag + " " + f + " differs");
  }

  // save -> load -> forward on a probe batch.
  Rng rng(910);
  Generator<float> g(generator_config(), rng);
  Discriminator<float> d(discriminator_config(), rng);
  save_model((dir / "g.cocg").string(), g);
  save_model((dir / "d.cocg").string(), d);
  Rng other(1234);
  Generator<float> g2(generator_config(), other);
  Discriminator<float> d2(discriminator_config(), other);
  load_model((dir / "g.cocg").string(), g2);
  load_model((dir / "d.cocg").string(), d2);
  NoGradGuard ng;
  Rng pr(911);
  auto z = g.sample_noise(8, pr);
  auto x1 = g.forward(z), x2 = g2.forward(z);
  c.expect(std::equal(x1.data().begin(), x1.data().end(), x2.data().begin()), "generator forward after reload");
  auto s1 = d.forward(x1), s2 = d2.forward(x1);
  c.expect(std::equal(s1.data().begin(), s1.data().end(), s2.data().begin()), "discriminator forward after reload");
  fs::remove_all(dir);
  c.note("vanilla and wgan runs repeated: logs and checkpoints identical; reload bitwise");
}

// ---------------------------------------------------------------------------
// 10. Visualization contract

void visualization(Check& c) {
  const auto dir = scratch("visualize");
  Rng rng(1010);
  Discriminator<float> d(discriminator_config(), rng);
  std::map<std::string, std::string> meta = RunConfig().as_metadata();
  meta["role"] = "discriminator";
  save_model((dir / "disc.cocg").string(), d, meta);
  const auto out = (dir / "panels.ppm").string();
  const std::string count = "6";
  std::vector<std::string> args = {"cocgan", "visualize", "--checkpoint", (dir / "disc.cocg").string(), "--centers", "4",
                                   "--data-images", kImages, "--data-labels", kLabels, "--count", count, "--out", out};
  std::vector<const char*> argv;
  for (auto& a : args) argv.push_back(a.c_str());
  std::ostringstream so, se;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), so, se);
  c.expect(code == 0, "visualize exit " + std::to_string(code) + ": " + se.str());
  if (code != 0) return;

  // Independent assignment: same checkpoint, same inputs, read from the layer.
  Discriminator<float> d2(discriminator_config(), rng);
  load_model((dir / "disc.cocg").string(), d2);
  d2.set_stage_centers(0, 4);
  const auto data = read_idx(kImages, kLabels);
  const auto images = data.batch<float>(iota_n(0, 6));
  d2.first_cluster_layer().set_capture(true);
  {
    NoGradGuard ng;
    d2.forward(images);
  }
  const auto assign = d2.first_cluster_layer().captured().at(0);

  const auto img = read_pnm(out);
  c.expect(img.channels == 3 && img.height == 6 * 29 + 1 && img.width == 2 * 28 + 3, "panel geometry");
  std::set<std::array<std::uint8_t, 3>> colours;
  std::size_t mismatches = 0;
  for (std::size_t k = 0; k < 6; ++k)
    for (std::size_t y = 0; y < 28; ++y)
      for (std::size_t x = 0; x < 28; ++x) {
        const auto* left = img.at(1 + k * 29 + y, 1 + x);
        const auto* px = img.at(1 + k * 29 + y, 2 + 28 + x);
        const std::array<std::uint8_t, 3> col{px[0], px[1], px[2]};
        colours.insert(col);
        if (col != palette_color(assign[k * 196 + (y / 2) * 14 + x / 2])) ++mismatches;
        const auto want_gray = denormalize_pixel(images[(k * 28 + y) * 28 + x]);
        if (left[0] != want_gray) ++mismatches;
      }
  c.expect(mismatches == 0, std::to_string(mismatches) + " overlay pixels disagree with the assignment");
  c.expect(colours.size() <= 4, std::to_string(colours.size()) + " colours in the overlay");
  fs::remove_all(dir);
  c.note(std::to_string(colours.size()) + " colours, 0 of " + std::to_string(6 * 784) + " pixels off");
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    std::function<void(Check&)> run;
    double budget_s;  // 0: no runtime bound
  };
  const std::vector<Criterion> all = {
      {1, "gradient fidelity", gradients, 60},
      {2, "aggregation/dispatch oracle equivalence", oracles, 0},
      {3, "shape ladder", ladder, 0},
      {4, "clustering invariants", clustering, 0},
      {5, "metrics correctness", metrics, 0},
      {6, "WGAN mechanics", wgan_mechanics, 0},
      {7, "desk-scale WGAN training trend", training_trend, 30 * 60},
      {8, "conditional path", conditional, 15 * 60},
      {9, "determinism and persistence", determinism, 0},
      {10, "visualization contract", visualization, 0},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& cr : all) {
    if (!only.empty() && !only.count(cr.id)) continue;
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      cr.run(c);
    } catch (const std::exception& e) {
      c.failures.push_back(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (cr.budget_s > 0 && secs >= cr.budget_s) c.failures.push_back("runtime " + fmt("%.0f", secs) + " s over budget");
    const bool ok = c.failures.empty();
    failed += !ok;
    std::cout << "criterion " << cr.id << " [" << cr.name << "]: " << (ok ? "PASS" : "FAIL") << " (" << fmt("%.1f", secs)
              << " s";
    for (const auto& n : c.notes) std::cout << "; " << n;
    if (!ok) {
      std::cout << "; " << c.failures.size() << " of " << std::max(c.total, c.failures.size()) << " checks failed:";
      for (std::size_t i = 0; i < std::min<std::size_t>(3, c.failures.size()); ++i) std::cout << " [" << c.failures[i] << "]";
    }
    std::cout << ")\n" << std::flush;
  }
  return failed ? 1 : 0;
}
