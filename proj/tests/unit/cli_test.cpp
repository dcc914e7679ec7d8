#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>
#include <sys/wait.h>

#include "denseed/cli/commands.hpp"
#include "test_util.hpp"

using namespace denseed;
namespace fs = std::filesystem;

namespace {

const char* kSmallArch = "arch=denseed;blocks=1,1,1;growth=2;init=4";

struct CliResult {
  int rc = -1;
  std::string out, err;
};

CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "denseed");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliResult r;
  r.rc = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

int process_exit(const std::string& args) {
  const int status = std::system((std::string(DENSEED_TOOL_PATH) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

cli::RunManifest manifest(const fs::path& dir) { return cli::read_manifest(dir); }

std::string result(const fs::path& dir, const std::string& key) { return manifest(dir).results.get(key).value_or("<none>"); }
std::string config(const fs::path& dir, const std::string& key) { return manifest(dir).config.get(key).value_or("<none>"); }

void make_dataset(const fs::path& out, int fovs, int frames, int side, int seed = 3) {
  const auto r = run_cli({"synth", "--fovs", std::to_string(fovs), "--frames", std::to_string(frames), "--height",
                      std::to_string(side), "--width", std::to_string(side), "--seed", std::to_string(seed), "--out",
                      out.string()});
  ASSERT_EQ(r.rc, 0) << r.err;
}

std::vector<std::string> train_args(const fs::path& data, const fs::path& out, const std::string& epochs) {
  return {"train", "--data", data.string(), "--arch", kSmallArch, "--epochs", epochs, "--out", out.string()};
}

// Strict interior local maxima of the value column of a profile CSV.
std::vector<double> csv_maxima(const std::string& csv) {
  std::vector<double> pos, val;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto c = line.find(',');
    pos.push_back(std::stod(line.substr(0, c)));
    val.push_back(std::stod(line.substr(c + 1)));
  }
  std::vector<double> out;
  for (std::size_t i = 1; i + 1 < val.size(); ++i) {
    if (val[i] > val[i - 1] && val[i] > val[i + 1]) out.push_back(pos[i]);
  }
  return out;
}

}  // namespace

TEST(CliAudit, BuiltinMatchesTheReferenceTable) {
  testutil::TempDir d("cli");
  const auto r = run_cli({"audit", "--builtin", "--out", (d / "a").string()});
  ASSERT_EQ(r.rc, 0) << r.err;
  for (const char* n : {"36572", "80702", "143040", "223586", "788046", "727850", "1663176", "556096"}) {
    EXPECT_NE(r.out.find(std::string(",") + n + ","), std::string::npos) << n;
  }
  EXPECT_NE(r.out.find("DenseED-(3,6,3),19,237204,144,223586,flagged"), std::string::npos);
  EXPECT_EQ(result(d / "a", "param_matches"), "8");
  EXPECT_EQ(result(d / "a", "rows"), "10");
  EXPECT_EQ(io::read_file(d / "a/audit.csv"), r.out);
}

TEST(CliAudit, InlineConfigAndMalformedConfig) {
  testutil::TempDir d("cli");
  const auto r = run_cli({"audit", "--config", "blocks=2,2,2", "--out", (d / "a").string()});
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_NE(r.out.find("DenseED-(2,2,2),13,80702,"), std::string::npos);
  EXPECT_EQ(result(d / "a", "rows"), "1");

  const auto bad = run_cli({"audit", "--config", "blocks=0,1,1", "--out", (d / "b").string()});
  EXPECT_EQ(bad.rc, cli::kExitUsage);
  EXPECT_EQ(manifest(d / "b").status, "error");
  EXPECT_EQ(process_exit("audit --config \"blocks=0,1,1\" --out " + (d / "c").string()), 2);
  EXPECT_EQ(process_exit("audit --builtin --out " + (d / "e").string()), 0);
}

TEST(CliAudit, RerunFromManifestReproducesCsv) {
  testutil::TempDir d("cli");
  ASSERT_EQ(run_cli({"audit", "--builtin", "--config", "blocks=1,2,1", "--out", (d / "a").string()}).rc, 0);
  ASSERT_EQ(run_cli({"audit", "--config", (d / "a/manifest.txt").string(), "--out", (d / "b").string()}).rc, 0);
  EXPECT_EQ(manifest(d / "a").artifacts, manifest(d / "b").artifacts);
}

TEST(CliSynth, FrameCountsAndChecksums) {
  testutil::TempDir d("cli");
  make_dataset(d / "s", 8, 50, 32);
  EXPECT_EQ(result(d / "s", "inputs"), "400");
  std::size_t frames = 0, targets = 0;
  for (const auto& e : fs::recursive_directory_iterator(d / "s")) {
    const auto n = e.path().filename().string();
    frames += n.rfind("frame_", 0) == 0;
    targets += n == "target.tif";
  }
  EXPECT_EQ(frames, 400u);
  EXPECT_EQ(targets, 8u);
  EXPECT_TRUE(manifest(d / "s").verify(d / "s").empty());

  make_dataset(d / "same", 8, 50, 32);
  EXPECT_EQ(manifest(d / "s").artifacts, manifest(d / "same").artifacts);
  make_dataset(d / "other", 8, 50, 32, 4);
  EXPECT_NE(manifest(d / "s").artifacts, manifest(d / "other").artifacts);
}

TEST(CliSynth, SmokeDatasetAndErrors) {
  testutil::TempDir d("cli");
  make_dataset(d / "s", 1, 1, 32);
  EXPECT_EQ(result(d / "s", "inputs"), "1");
  EXPECT_EQ(data::load_dataset(d / "s").front().frames.size(), 1u);

  const auto bad = run_cli({"synth", "--fwhm-wide", "2", "--fwhm-narrow", "6", "--out", (d / "b").string()});
  EXPECT_EQ(bad.rc, cli::kExitUsage);
  // A directory holding other FOVs is not silently mixed into.
  make_dataset(d / "m", 3, 1, 32);
  EXPECT_EQ(run_cli({"synth", "--fovs", "2", "--frames", "1", "--height", "32", "--width", "32", "--out", (d / "m").string()}).rc,
            cli::kExitUsage);
}

TEST(CliRun, OutputDirectoryInUseIsRefused) {
  testutil::TempDir d("cli");
  fs::create_directories(d / "a");
  io::write_file(d / "a/.lock", "");
  const auto r = run_cli({"audit", "--builtin", "--out", (d / "a").string()});
  EXPECT_EQ(r.rc, cli::kExitUsage);
  EXPECT_FALSE(fs::exists(d / "a/audit.csv"));
  EXPECT_FALSE(fs::exists(d / "a/manifest.txt"));
  fs::remove(d / "a/.lock");
  EXPECT_EQ(run_cli({"audit", "--builtin", "--out", (d / "a").string()}).rc, cli::kExitOk);
  EXPECT_FALSE(fs::exists(d / "a/.lock"));
}

TEST(CliConfig, FlagOverridesFileOverridesDefault) {
  testutil::TempDir d("cli");
  make_dataset(d / "s", 2, 1, 32);
  io::write_file(d / "c.txt", "# run settings\nepochs = 1\nlr = 0.001\n");
  auto args = train_args(d / "s", d / "t", "1");
  args.erase(args.begin() + 5, args.begin() + 7);  // drop --epochs
  args.insert(args.end(), {"--config", (d / "c.txt").string(), "--lr", "0.002", "--frames", "1"});
  const auto r = run_cli(args);
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_EQ(config(d / "t", "lr"), "0.002");
  EXPECT_EQ(config(d / "t", "epochs"), "1");
  EXPECT_EQ(config(d / "t", "wd"), "3e-05");

  io::write_file(d / "bad.txt", "epohcs = 1\n");
  EXPECT_EQ(run_cli({"train", "--config", (d / "bad.txt").string(), "--out", (d / "u").string()}).rc, cli::kExitUsage);
  EXPECT_EQ(run_cli({"train", "--config", (d / "missing.txt").string()}).rc, cli::kExitUsage);
  EXPECT_EQ(run_cli({"train", "--no-such-flag"}).rc, cli::kExitUsage);
}

TEST(CliConfig, SeedFallsBackToEnvironment) {
  testutil::TempDir d("cli");
  ::setenv(cli::kSeedEnv, "11", 1);
  const auto base = std::vector<std::string>{"synth", "--fovs", "1", "--frames", "1", "--height", "32", "--width", "32"};
  auto run = [&](std::vector<std::string> extra, const std::string& out) {
    auto a = base;
    a.insert(a.end(), extra.begin(), extra.end());
    a.insert(a.end(), {"--out", (d / out).string()});
    return run_cli(a).rc;
  };
  io::write_file(d / "seed.txt", "seed = 12\n");
  EXPECT_EQ(run({}, "env"), 0);
  EXPECT_EQ(run({"--config", (d / "seed.txt").string()}, "file"), 0);
  EXPECT_EQ(run({"--seed", "13"}, "flag"), 0);
  ::unsetenv(cli::kSeedEnv);
  EXPECT_EQ(manifest(d / "env").config.get("seed"), "11");
  EXPECT_EQ(io::read_key_values(d / "env/manifest.txt").get("seed"), "11");
  EXPECT_EQ(manifest(d / "file").config.get("seed"), "12");
  EXPECT_EQ(manifest(d / "flag").config.get("seed"), "13");
}

TEST(CliTrain, DefaultsAreTheReferenceHyperparameters) {
  const auto opts = cli::train_options();
  const auto fallback = [&](const std::string& k) {
    for (const auto& o : opts) {
      if (o.key == k) return o.fallback;
    }
    return std::string("<none>");
  };
  EXPECT_EQ(fallback("batch_size"), "4");
  EXPECT_EQ(fallback("lr"), "0.0003");
  EXPECT_EQ(fallback("wd"), "3e-05");
  EXPECT_EQ(fallback("epochs"), "200");

  testutil::TempDir d("cli");
  make_dataset(d / "s", 2, 1, 32);
  ASSERT_EQ(run_cli({"train", "--data", (d / "s").string(), "--epochs", "0", "--frames", "1", "--out", (d / "t").string()}).rc, 0);
  EXPECT_EQ(config(d / "t", "batch_size"), "4");
  EXPECT_EQ(config(d / "t", "lr"), "0.0003");
  EXPECT_EQ(config(d / "t", "wd"), "3e-05");
  EXPECT_EQ(config(d / "t", "arch"), arch::format_arch(arch::DenseEDSpec{}));
}

TEST(CliTrain, ZeroEpochsWritesInitializationCheckpoint) {
  testutil::TempDir d("cli");
  make_dataset(d / "s", 2, 1, 32);
  const auto r = run_cli(train_args(d / "s", d / "t", "0"));
  ASSERT_EQ(r.rc, 0) << r.err;
  const auto ck = train::load_checkpoint(d / "t/checkpoint");
  EXPECT_EQ(ck.epoch, 0u);
  EXPECT_TRUE(ck.log.empty());
  const auto init = train::Trainer(arch::parse_arch(kSmallArch), train::TrainConfig{}).params();
  EXPECT_EQ(ck.params, init);
  EXPECT_EQ(io::read_file(d / "t/loss.csv"), "epoch,train_mse,test_mse\n");
  EXPECT_TRUE(manifest(d / "t").verify(d / "t").empty());
}

TEST(CliTrain, TrainFovsCountsImages) {
  testutil::TempDir d("cli");
  make_dataset(d / "s", 15, 50, 32);
  const auto r = run_cli({"train", "--data", (d / "s").string(), "--arch", kSmallArch, "--epochs", "0", "--train-fovs", "8",
                      "--out", (d / "t").string()});
  ASSERT_EQ(r.rc, 0) << r.err;
  // 8 and 7 FOVs of 50 frames each.
  EXPECT_EQ(result(d / "t", "train_images"), "400");
  EXPECT_EQ(result(d / "t", "test_images"), "350");
  EXPECT_EQ(result(d / "t", "train_patches"), "1600");
  EXPECT_EQ(result(d / "t", "train_ids"), "0,1,2,3,4,5,6,7");
  EXPECT_EQ(result(d / "t", "test_ids"), "8,9,10,11,12,13,14");
}

TEST(CliTrain, DeterministicAndResumable) {
  testutil::TempDir d("cli");
  make_dataset(d / "s", 3, 2, 32);
  ASSERT_EQ(run_cli(train_args(d / "s", d / "a", "3")).rc, 0);
  ASSERT_EQ(run_cli(train_args(d / "s", d / "b", "3")).rc, 0);
  EXPECT_EQ(io::read_file(d / "a/loss.csv"), io::read_file(d / "b/loss.csv"));
  EXPECT_EQ(train::LossLog::parse_csv(io::read_file(d / "a/loss.csv")).size(), 3u);

  ASSERT_EQ(run_cli(train_args(d / "s", d / "c", "1")).rc, 0);
  const auto r = run_cli({"train", "--data", (d / "s").string(), "--resume", (d / "c/checkpoint").string(), "--epochs", "3",
                      "--out", (d / "e").string()});
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_EQ(io::read_file(d / "a/loss.csv"), io::read_file(d / "e/loss.csv"));
  EXPECT_EQ(train::load_checkpoint(d / "a/checkpoint"), train::load_checkpoint(d / "e/checkpoint"));

  // Resuming with different hyperparameters is refused.
  EXPECT_EQ(run_cli({"train", "--data", (d / "s").string(), "--resume", (d / "c/checkpoint").string(), "--lr", "0.1",
                 "--out", (d / "f").string()})
                .rc,
            cli::kExitUsage);
}

TEST(CliTrain, ManifestAloneReproducesArtifacts) {
  testutil::TempDir d("cli");
  make_dataset(d / "s", 3, 1, 32);
  ASSERT_EQ(run_cli(train_args(d / "s", d / "a", "2")).rc, 0);
  ASSERT_EQ(run_cli({"train", "--config", (d / "a/manifest.txt").string(), "--out", (d / "b").string()}).rc, 0);
  const auto a = manifest(d / "a"), b = manifest(d / "b");
  EXPECT_FALSE(a.artifacts.empty());
  EXPECT_EQ(a.artifacts, b.artifacts);
  EXPECT_NE(a.started, "");

  io::write_file(d / "a/loss.csv", "tampered\n");
  EXPECT_EQ(a.verify(d / "a"), std::vector<std::string>{"loss.csv"});
  // A manifest from another subcommand is not accepted as config.
  make_dataset(d / "x", 1, 1, 32);
  EXPECT_EQ(run_cli({"train", "--config", (d / "x/manifest.txt").string(), "--out", (d / "c").string()}).rc, cli::kExitUsage);
}

TEST(CliTrain, ErrorsMapToExitCodes) {
  testutil::TempDir d("cli");
  EXPECT_EQ(run_cli(train_args(d / "nope", d / "a", "1")).rc, cli::kExitUsage);
  EXPECT_EQ(manifest(d / "a").status, "error");

  make_dataset(d / "s", 2, 1, 32);
  auto args = train_args(d / "s", d / "div", "3");
  args.insert(args.end(), {"--lr", "3e38"});
  const auto r = run_cli(args);
  EXPECT_EQ(r.rc, cli::kExitNumeric) << r.err;
  EXPECT_EQ(manifest(d / "div").status, "numeric-failure");
  // The last good state is on disk and matches the loss log.
  const auto ck = train::load_checkpoint(d / "div/checkpoint");
  EXPECT_EQ(ck.log.size(), ck.epoch);
  EXPECT_LT(ck.epoch, 3u);
  EXPECT_TRUE(all_finite(ck.params.layers[0].weight));
}

TEST(CliEval, PerfectOracleCheckpointScoresZero) {
  testutil::TempDir d("cli");
  for (const char* id : {"0", "1"}) {
    const auto img = testutil::random_u16(16, 16, id[0]);
    io::write_tiff16(d / ("ds/fov_" + std::string(id) + "/frame_0.tif"), img);
    io::write_tiff16(d / ("ds/fov_" + std::string(id) + "/target.tif"), img);
  }
  auto ck = train::Trainer(arch::LinearSpec{}, train::TrainConfig{}).checkpoint({"0"}, {"1"});
  ck.params.layers[0].weight[0] = 1.0f;
  train::save_checkpoint(ck, d / "ck");

  const auto r = run_cli({"eval", "--checkpoint", (d / "ck").string(), "--data", (d / "ds").string(), "--frames", "1", "--out",
                      (d / "e").string()});
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_EQ(result(d / "e", "mean_mse"), "0");
  EXPECT_EQ(result(d / "e", "images"), "1");
  EXPECT_TRUE(fs::exists(d / "e/report.csv"));
  EXPECT_TRUE(manifest(d / "e").verify(d / "e").empty());

  EXPECT_EQ(run_cli({"eval", "--checkpoint", (d / "missing").string(), "--data", (d / "ds").string(), "--out",
                 (d / "f").string()})
                .rc,
            cli::kExitUsage);
}

TEST(CliProfile, TwoPointImageHasTwoMaxima) {
  testutil::TempDir d("cli");
  const double fwhm = 4.0, sep = 10.0;
  // Emitters on pixel centres (27, 32) and (37, 32).
  const auto truth = synth::two_point_phantom(64, 64, sep, 0.0, 0.5, 0.5);
  io::write_tiff16(d / "pair.tif",
                   synth::quantize(synth::peak_normalized(synth::apply_gaussian_psf(synth::render_phantom(truth), fwhm))));
  const auto r = run_cli({"profile", "--image", (d / "pair.tif").string(), "--p0", "12,32", "--p1", "52,32", "--out",
                      (d / "p").string()});
  ASSERT_EQ(r.rc, 0) << r.err;

  // Oracle: maxima of the continuous two-Gaussian sum, on a fine grid.
  const double s = fwhm / synth::kFwhmPerSigma;
  const auto f = [&](double x) { return std::exp(-std::pow(x - 27, 2) / (2 * s * s)) + std::exp(-std::pow(x - 37, 2) / (2 * s * s)); };
  std::vector<double> expected;
  for (double x = 12.001; x < 52; x += 0.001) {
    if (f(x) > f(x - 0.001) && f(x) > f(x + 0.001)) expected.push_back(x - 12);
  }
  ASSERT_EQ(expected.size(), 2u);
  const auto maxima = csv_maxima(io::read_file(d / "p/profile.csv"));
  ASSERT_EQ(maxima.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(maxima[i], expected[i], 0.25);
  EXPECT_EQ(result(d / "p", "resolved"), "1");
  EXPECT_TRUE(fs::exists(d / "p/profile.png"));
}

TEST(CliProfile, CoincidentEndpointsExitTwo) {
  testutil::TempDir d("cli");
  io::write_tiff16(d / "img.tif", testutil::random_u16(8, 8, 1));
  EXPECT_EQ(run_cli({"profile", "--image", (d / "img.tif").string(), "--p0", "3,3", "--p1", "3,3", "--out", (d / "p").string()}).rc,
            cli::kExitUsage);
  EXPECT_EQ(manifest(d / "p").status, "error");
  EXPECT_EQ(run_cli({"profile", "--image", (d / "img.tif").string(), "--p0", "3", "--p1", "4,4", "--out", (d / "q").string()}).rc,
            cli::kExitUsage);
}
