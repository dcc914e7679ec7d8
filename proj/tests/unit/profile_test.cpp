#include <gtest/gtest.h>

#include <random>

#include "denseed/eval/profile.hpp"
#include "denseed/synth/phantom.hpp"

using namespace denseed;
using namespace denseed::eval;

namespace {

ProfileSeries series(std::vector<double> v) {
  ProfileSeries p;
  for (std::size_t i = 0; i < v.size(); ++i) p.positions.push_back(static_cast<double>(i));
  p.values = std::move(v);
  return p;
}

// Oracle: two unit Gaussians at +-d/2 sampled on [-L, L], normalized.
ProfileSeries two_gaussians(double d, double sigma, std::size_t n = 2001) {
  std::vector<double> v;
  const double L = d / 2 + 4 * sigma;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = -L + 2 * L * static_cast<double>(i) / static_cast<double>(n - 1);
    v.push_back(std::exp(-0.5 * std::pow((t - d / 2) / sigma, 2)) + std::exp(-0.5 * std::pow((t + d / 2) / sigma, 2)));
  }
  const double mx = *std::max_element(v.begin(), v.end());
  for (auto& x : v) x /= mx;
  return series(v);
}

double oracle_dip(double d, double sigma) {
  const auto f = [&](double t) {
    return std::exp(-0.5 * std::pow((t - d / 2) / sigma, 2)) + std::exp(-0.5 * std::pow((t + d / 2) / sigma, 2));
  };
  double peak = 0;
  for (double t = 0; t < d; t += 1e-5) peak = std::max(peak, f(t));
  return (peak - f(0)) / peak;
}

}  // namespace

TEST(LineProfile, RampIsLinearWithMaxOne) {
  Image<double> ramp(5, 11);
  for (std::size_t y = 0; y < 5; ++y)
    for (std::size_t x = 0; x < 11; ++x) ramp.at(y, x) = static_cast<double>(x);
  const auto p = line_profile(ramp, {0, 2}, {10, 2}, 21, 0.5);
  EXPECT_DOUBLE_EQ(p.values.back(), 1.0);
  for (std::size_t i = 0; i < 21; ++i) {
    EXPECT_NEAR(p.values[i], static_cast<double>(i) / 20.0, 1e-15);
    EXPECT_NEAR(p.positions[i], 0.5 * 10.0 * static_cast<double>(i) / 20.0, 1e-15);
  }
  EXPECT_FALSE(p.flat);
}

TEST(LineProfile, IdentityPathReproducesRow) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image<double> img(6, 13);
  for (auto& v : img.pixels) v = u(rng);
  img.at(3, 4) = 1.0;  // row maximum, so normalization is the identity
  const auto p = line_profile(img, {0, 3}, {12, 3}, 13);
  for (std::size_t x = 0; x < 13; ++x) EXPECT_EQ(p.values[x], img.at(3, x));
}

TEST(LineProfile, ConstantZeroIsFlaggedFlat) {
  const auto p = line_profile(Image<double>(4, 4), {0, 0}, {3, 3}, 5);
  EXPECT_TRUE(p.flat);
  for (double v : p.values) EXPECT_EQ(v, 0.0);
  EXPECT_FALSE(dip_metric(p).resolved);
}

TEST(LineProfile, DegenerateAndOutOfBoundsRejected) {
  Image<double> img(4, 4, 1.0);
  EXPECT_THROW(line_profile(img, {1, 1}, {1, 1}, 5), Error);
  EXPECT_THROW(line_profile(img, {0, 0}, {4, 0}, 5), Error);
  EXPECT_THROW(line_profile(img, {0, 0}, {3, 0}, 1), Error);
}

TEST(LineProfile, RenderedGaussianPairMatchesAnalyticDip) {
  const double sigma = 2.0, d = 8.0;
  synth::PhantomSpec s{48, 48, {{20, 24, 1.0}, {28, 24, 1.0}}, {}, 0};
  const auto img = synth::apply_gaussian_psf(synth::render_phantom(s), sigma * synth::kFwhmPerSigma);
  const auto r = dip_metric(line_profile(img, {12, 24}, {36, 24}, 241));
  ASSERT_TRUE(r.resolved);
  EXPECT_NEAR(r.dip_depth, oracle_dip(d, sigma), 0.02 * oracle_dip(d, sigma));
  EXPECT_NEAR(r.peak_positions[0], 8.0, 0.2);
  EXPECT_NEAR(r.peak_positions[1], 16.0, 0.2);
}

TEST(DipMetric, SingleGaussianUnresolved) {
  const auto r = dip_metric(two_gaussians(0.0, 2.0));
  EXPECT_FALSE(r.resolved);
  EXPECT_EQ(r.dip_depth, 0.0);
}

TEST(DipMetric, SparrowAndFourSigma) {
  const auto at_sparrow = dip_metric(two_gaussians(4.0, 2.0));
  EXPECT_FALSE(at_sparrow.resolved);
  EXPECT_NEAR(at_sparrow.dip_depth, 0.0, 1e-9);
  const auto wide = dip_metric(two_gaussians(8.0, 2.0));
  EXPECT_TRUE(wide.resolved);
  EXPECT_NEAR(wide.dip_depth, oracle_dip(8.0, 2.0), 0.02 * oracle_dip(8.0, 2.0));
}

TEST(DipMetric, InvariantToPositiveScaling) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.01, 100.0);
  Image<double> img(9, 40);
  for (std::size_t x = 0; x < 40; ++x) {
    const double t = static_cast<double>(x);
    for (std::size_t y = 0; y < 9; ++y) img.at(y, x) = std::exp(-0.5 * std::pow((t - 15) / 3, 2)) + 0.7 * std::exp(-0.5 * std::pow((t - 26) / 3, 2));
  }
  const auto base = dip_metric(line_profile(img, {0, 4}, {39, 4}, 80));
  ASSERT_TRUE(base.resolved);
  for (int i = 0; i < 20; ++i) {
    Image<double> scaled = img;
    const double k = u(rng);
    for (auto& v : scaled.pixels) v *= k;
    const auto r = dip_metric(line_profile(scaled, {0, 4}, {39, 4}, 80));
    EXPECT_EQ(r.resolved, base.resolved);
    EXPECT_NEAR(r.dip_depth, base.dip_depth, 1e-12);
  }
}

TEST(DipMetric, PlateauAndThreshold) {
  const auto p = series({0.0, 1.0, 1.0, 0.5, 0.8, 0.2});
  const auto r = dip_metric(p);
  EXPECT_NEAR(r.dip_depth, 0.3, 1e-12);
  EXPECT_TRUE(r.resolved);
  EXPECT_FALSE(dip_metric(p, 0.31).resolved);
  EXPECT_FALSE(dip_metric(series({0.0, 1.0, 0.5})).resolved);
}
