#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "cocgan/training.hpp"

using namespace cocgan;
namespace fs = std::filesystem;

namespace {

// Default ladder with one block per stage and narrow heads, for speed.
ModelConfig small(ModelConfig c) {
  for (auto& st : c.stages) {
    st.n_blocks = 1;
    st.heads = 2;
    st.head_dim = 4;
    st.mlp_r = 2;
  }
  return c;
}

std::string fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / "cocgan_training_test" / name;
  fs::remove_all(dir);
  return dir.string();
}

std::string strip_wall(const std::string& path) {
  std::ifstream f(path);
  std::string line, out;
  while (std::getline(f, line)) out += line.substr(0, line.rfind('\t')) + "\n";
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST(TrainRun, BlobsTwoEpochsWritesLogAndLoadableCheckpoint) {
  auto data = synthetic_blobs(512, 10, 1);
  Rng init(2);
  Generator<float> g(small(generator_config()), init);
  Discriminator<float> d(small(discriminator_config()), init);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch = 128;
  cfg.sample_grid = 4;
  cfg.out_dir = fresh_dir("blobs");
  auto res = train_run(data, g, d, cfg);
  ASSERT_EQ(res.log.size(), 2u);
  EXPECT_EQ(res.d_updates, 8u);
  EXPECT_EQ(res.g_updates, 8u);
  std::ifstream log(fs::path(cfg.out_dir) / "log.tsv");
  std::string line;
  int records = 0;
  while (std::getline(log, line))
    if (!line.empty() && line[0] != '#') {
      ++records;
      EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 4);
    }
  EXPECT_EQ(records, 2);
  Rng other(99);
  Generator<float> g2(small(generator_config()), other);
  auto ck = load_model((fs::path(cfg.out_dir) / "gen.cocg").string(), g2);
  EXPECT_EQ(ck.metadata.at("epoch"), "2");
  EXPECT_TRUE(ck.optimizer.has_value());
  EXPECT_TRUE(ck.rng_state.has_value());
  EXPECT_TRUE(fs::exists(fs::path(cfg.out_dir) / "samples_epoch2.pgm"));
  EXPECT_TRUE(fs::exists(fs::path(cfg.out_dir) / "disc_epoch1.cocg"));
  EXPECT_EQ(res.log[0].lr, 2e-4);
  EXPECT_LT(res.log[1].lr, res.log[0].lr);
}

TEST(TrainRun, WganCadenceAndClipping) {
  auto data = synthetic_blobs(256, 10, 3);
  Rng init(4);
  Generator<float> g(small(generator_config()), init);
  Discriminator<float> d(small(discriminator_config(1, false, false)), init);
  TrainConfig cfg;
  cfg.mode = GanMode::Wgan;
  cfg.epochs = 2;
  cfg.batch = 64;
  cfg.n_critic = 3;
  const auto dp = d.parameters();
  std::vector<UpdateEvent::Kind> seq;
  double worst = 0;
  TrainHooks hooks;
  hooks.on_update = [&](const UpdateEvent& e) {
    seq.push_back(e.kind);
    if (e.kind == UpdateEvent::Discriminator) worst = std::max(worst, max_abs_param(dp));
  };
  auto res = train_run(data, g, d, cfg, hooks);
  const std::size_t batches = 2 * (256 / 64);
  EXPECT_EQ(res.d_updates, batches * 3);
  EXPECT_EQ(res.g_updates, batches);
  ASSERT_EQ(seq.size(), batches * 4);
  for (std::size_t i = 0; i < seq.size(); ++i)
    EXPECT_EQ(seq[i], i % 4 == 3 ? UpdateEvent::Generator : UpdateEvent::Discriminator);
  EXPECT_LE(worst, 0.01);
}

TEST(TrainRun, DeterministicLogsAndCheckpoints) {
  auto data = synthetic_blobs(256, 10, 5);
  std::string dirs[2];
  for (int run = 0; run < 2; ++run) {
    Rng init(6);
    Generator<float> g(small(generator_config(1, true)), init);
    Discriminator<float> d(small(discriminator_config(1, true)), init);
    TrainConfig cfg;
    cfg.conditional = true;
    cfg.epochs = 2;
    cfg.batch = 64;
    cfg.sample_every = 0;
    cfg.out_dir = dirs[run] = fresh_dir("det" + std::to_string(run));
    train_run(data, g, d, cfg);
  }
  const auto a = strip_wall((fs::path(dirs[0]) / "log.tsv").string());
  EXPECT_EQ(a, strip_wall((fs::path(dirs[1]) / "log.tsv").string()));
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(slurp(fs::path(dirs[0]) / "gen.cocg"), slurp(fs::path(dirs[1]) / "gen.cocg"));
  EXPECT_EQ(slurp(fs::path(dirs[0]) / "disc.cocg"), slurp(fs::path(dirs[1]) / "disc.cocg"));
}

TEST(TrainRun, NonFiniteLossAborts) {
  auto data = synthetic_blobs(64, 10, 7);
  Rng init(8);
  Generator<float> g(small(generator_config()), init);
  Discriminator<float> d(small(discriminator_config(1, false, false)), init);
  for (auto& p : d.parameters())
    if (p.name == "head.bias") p.tensor.node()->value[0] = std::numeric_limits<float>::infinity();
  TrainConfig cfg;
  cfg.mode = GanMode::Wgan;
  cfg.epochs = 1;
  cfg.batch = 32;
  cfg.out_dir = fresh_dir("nan");
  try {
    train_run(data, g, d, cfg);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("loss_D"), std::string::npos) << msg;
    EXPECT_NE(msg.find("lr="), std::string::npos) << msg;
  }
  EXPECT_TRUE(fs::exists(fs::path(cfg.out_dir) / "diagnostics.txt"));
}

TEST(TrainRun, ConfigurationErrors) {
  auto data = synthetic_blobs(64, 10, 9);
  Rng init(10);
  Generator<float> g(small(generator_config()), init);
  Discriminator<float> d(small(discriminator_config()), init);
  TrainConfig cfg;
  cfg.batch = 32;
  cfg.epochs = 1;
  cfg.mode = GanMode::Wgan;
  EXPECT_THROW(train_run(data, g, d, cfg), ConfigError);  // sigmoid head in WGAN mode
  cfg.mode = GanMode::Vanilla;
  cfg.n_critic = 0;
  EXPECT_THROW(train_run(data, g, d, cfg), ConfigError);
  cfg.n_critic = 5;
  cfg.batch = 100;
  EXPECT_THROW(train_run(data, g, d, cfg), ConfigError);
  cfg.batch = 32;
  cfg.conditional = true;
  EXPECT_THROW(train_run(data, g, d, cfg), ConfigError);
}
