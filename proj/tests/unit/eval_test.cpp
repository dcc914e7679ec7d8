#include <gtest/gtest.h>

#include "denseed/eval/report.hpp"
#include "test_util.hpp"

using namespace denseed;
using namespace denseed::eval;

namespace {

// Identity network: one bias-free 1x1 convolution with weight 1.
struct Identity {
  arch::NetworkGraph g = arch::build_linear(arch::LinearSpec{1, 1, 1, false});
  ParameterSet<float> p = [this] {
    auto q = ParameterSet<float>::zeros(g);
    q.layers[0].weight[0] = 1.0f;
    return q;
  }();
};

train::TestFrame frame(const std::string& id, std::size_t side, float offset, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.2f, 0.8f);
  Image<float> t(side, side);
  for (auto& v : t.pixels) v = u(rng);
  Image<float> in = t;
  for (auto& v : in.pixels) v += offset;
  return {id, in, t};
}

}  // namespace

TEST(Evaluate, PerfectModelHasZeroMse) {
  Identity m;
  const auto rep = evaluate(m.g, m.p, {frame("a/0", 8, 0.0f, 1), frame("a/1", 8, 0.0f, 2)});
  EXPECT_EQ(rep.mean_mse, 0.0);
  for (const auto& r : rep.images) EXPECT_EQ(r.mse, 0.0);
}

TEST(Evaluate, MeanIsArithmeticMeanOfImages) {
  Identity m;
  const auto rep = evaluate(m.g, m.p, {frame("a/0", 8, 0.1f, 1), frame("a/1", 8, std::sqrt(0.03f), 2)});
  EXPECT_NEAR(rep.images[0].mse, 0.01, 1e-7);
  EXPECT_NEAR(rep.images[1].mse, 0.03, 1e-7);
  EXPECT_NEAR(rep.mean_mse, 0.02, 1e-7);
  EXPECT_EQ(rep.mean_mse, (rep.images[0].mse + rep.images[1].mse) / 2);
  EXPECT_EQ(rep.csv().substr(0, 13), "image_id,mse\n");
}

TEST(Evaluate, MetricIsUnclampedAndEmptyTestRejected) {
  Identity m;
  const auto rep = evaluate(m.g, m.p, {frame("a/0", 4, 0.5f, 1)});
  EXPECT_NEAR(rep.images[0].mse, 0.25, 1e-6);
  try {
    evaluate(m.g, m.p, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::empty_test);
  }
}

TEST(Evaluate, KeepImagesLimitsRetainedOutputs) {
  Identity m;
  const auto rep = evaluate(m.g, m.p, {frame("a/0", 4, 0, 1), frame("a/1", 4, 0, 2)}, 1);
  EXPECT_FALSE(rep.images[0].output.empty());
  EXPECT_TRUE(rep.images[1].output.empty());
}

TEST(Export, OneImageGivesTriptychPlotAndProfiles) {
  testutil::TempDir dir;
  Identity m;
  auto rep = evaluate(m.g, m.p, {frame("fov/0", 8, 0.3f, 1)});
  add_default_profiles(rep);
  ASSERT_EQ(rep.profiles.size(), 3u);
  train::LossLog log;
  log.append({1, 0.5, 0.4});
  log.append({2, 0.2, 0.3});
  const auto files = export_artifacts(rep, log, dir.path());
  const auto has = [&](const std::string& f) { return std::find(files.begin(), files.end(), f) != files.end(); };
  EXPECT_TRUE(has("images/fov_0.png"));
  EXPECT_TRUE(has("images/fov_0.tif"));
  EXPECT_TRUE(has("loss.png"));
  EXPECT_TRUE(has("loss.csv"));
  EXPECT_TRUE(has("profiles/fov_0_output.csv"));
  EXPECT_EQ(io::read_file(dir / "loss.csv"), log.csv());

  const auto tif = io::read_tiff(dir / "images/fov_0.tif");
  EXPECT_EQ(tif.width, 24u);
  EXPECT_EQ(tif.height, 8u);
  const auto& r = rep.images[0];
  EXPECT_EQ(tif.at(3, 8 + 5), std::lround(std::clamp(r.output.at(3, 5), 0.0f, 1.0f) * 65535.0));
  EXPECT_EQ(tif.at(3, 16 + 5), std::lround(r.target.at(3, 5) * 65535.0));
  EXPECT_EQ(io::read_file(dir / "profiles/fov_0_target.csv").substr(0, 15), "position,value\n");
}

TEST(Export, EmptyLossLogOmitsPlot) {
  testutil::TempDir dir;
  Identity m;
  const auto rep = evaluate(m.g, m.p, {frame("x/0", 4, 0, 1)});
  export_artifacts(rep, {}, dir.path());
  EXPECT_FALSE(std::filesystem::exists(dir / "loss.png"));
  const auto kv = io::read_key_values(dir / "export.txt");
  EXPECT_EQ(kv.get("loss_plot").value(), "omitted (empty loss log)");
}

TEST(Export, ReExportIsByteIdentical) {
  testutil::TempDir a, b;
  Identity m;
  auto rep = evaluate(m.g, m.p, {frame("f/0", 8, 0.1f, 3), frame("f/1", 8, -0.2f, 4)});
  add_default_profiles(rep);
  train::LossLog log;
  log.append({1, 0.5, std::nullopt});
  const auto files = export_artifacts(rep, log, a.path());
  EXPECT_EQ(export_artifacts(rep, log, b.path()), files);
  for (const auto& f : files) EXPECT_EQ(io::read_file(a / f), io::read_file(b / f)) << f;
}
