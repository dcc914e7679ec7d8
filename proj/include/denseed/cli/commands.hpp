#pragma once

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <list>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "denseed/arch/audit.hpp"
#include "denseed/data/dataset.hpp"
#include "denseed/eval/profile.hpp"
#include "denseed/eval/report.hpp"
#include "denseed/io/files.hpp"
#include "denseed/io/kv.hpp"
#include "denseed/io/tiff.hpp"
#include "denseed/synth/benchmark.hpp"
#include "denseed/train/checkpoint.hpp"
#include "denseed/train/config.hpp"
#include "denseed/train/trainer.hpp"

// Subcommands of the `denseed` executable. Exit codes: 0 success, 1 audit
// mismatch, 2 user or configuration error, 3 numeric failure.
namespace denseed::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kExitOk = 0, kExitMismatch = 1, kExitUsage = 2, kExitNumeric = 3 };

inline constexpr const char* kManifestName = "manifest.txt";
inline constexpr const char* kManifestFormat = "denseed-run 1";
inline constexpr const char* kRunConfigName = "run-config.txt";
inline constexpr const char* kSeedEnv = "DENSEED_SEED";

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Record of one run, written as `manifest.txt` in its output directory.
/// Artifact paths are relative to that directory.
struct RunManifest {
  std::string subcommand;
  io::KeyValues config;
  std::string status = "ok";
  std::string message;
  std::string started, finished;
  io::KeyValues results;
  std::vector<std::pair<std::string, std::string>> artifacts;  // path, crc32

  io::KeyValues to_kv() const {
    io::KeyValues kv;
    kv.set("format", kManifestFormat);
    kv.set("subcommand", subcommand);
    kv.set("status", status);
    if (!message.empty()) kv.set("message", message);
    kv.set("started", started);
    kv.set("finished", finished);
    if (auto seed = config.get("seed")) kv.set("seed", *seed);
    for (const auto& [k, v] : config.entries) kv.set("config." + k, v);
    for (const auto& [k, v] : results.entries) kv.set("result." + k, v);
    for (const auto& [k, v] : artifacts) kv.set("artifact." + k, v);
    return kv;
  }

  static RunManifest from_kv(const io::KeyValues& kv) {
    require(kv.get("format") == std::optional<std::string>(kManifestFormat), ErrorCode::format, "not a run manifest");
    RunManifest m;
    m.subcommand = kv.get("subcommand").value_or("");
    m.status = kv.get("status").value_or("");
    m.message = kv.get("message").value_or("");
    m.started = kv.get("started").value_or("");
    m.finished = kv.get("finished").value_or("");
    const auto strip = [](const std::string& key, const std::string& prefix) -> std::optional<std::string> {
      if (key.rfind(prefix, 0) != 0) return std::nullopt;
      return key.substr(prefix.size());
    };
    for (const auto& [k, v] : kv.entries) {
      if (auto c = strip(k, "config.")) m.config.set(*c, v);
      else if (auto r = strip(k, "result.")) m.results.set(*r, v);
      else if (auto a = strip(k, "artifact.")) m.artifacts.emplace_back(*a, v);
    }
    return m;
  }

  void add_artifact(const fs::path& root, const std::string& rel) {
    const std::string crc = io::file_crc32(root / rel);
    for (auto& [k, v] : artifacts) {
      if (k == rel) {
        v = crc;
        return;
      }
    }
    artifacts.emplace_back(rel, crc);
  }

  /// Artifacts whose file is missing or no longer matches its checksum.
  std::vector<std::string> verify(const fs::path& root) const {
    std::vector<std::string> bad;
    for (const auto& [rel, crc] : artifacts) {
      if (!fs::is_regular_file(root / rel) || io::file_crc32(root / rel) != crc) bad.push_back(rel);
    }
    return bad;
  }
};

inline RunManifest read_manifest(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / kManifestName : path;
  return RunManifest::from_kv(io::read_key_values(file));
}

/// One configuration key: the flag is `--` plus the key with '_' as '-'.
struct OptionSpec {
  std::string key;
  std::string fallback;
  std::string help;
  bool flag = false;  // boolean switch; set means "1"
};

/// Resolves a subcommand's configuration. Precedence, highest first: command
/// line flag, config file, built-in default. A seed not given by flag or
/// file falls back to DENSEED_SEED when that is set.
class Settings {
 public:
  Settings(std::string subcommand, std::vector<OptionSpec> schema)
      : subcommand_(std::move(subcommand)), schema_(std::move(schema)) {}

  const std::string& subcommand() const { return subcommand_; }

  void attach(CLI::App& app) {
    for (const auto& o : schema_) {
      std::string name = "--" + o.key;
      std::replace(name.begin(), name.end(), '_', '-');
      if (o.flag) {
        options_[o.key] = app.add_flag(name, flags_[o.key], o.help);
      } else {
        const std::string help = o.help + (o.fallback.empty() ? "" : " [" + o.fallback + "]");
        options_[o.key] = app.add_option(name, flag_values_[o.key], help);
      }
    }
  }

  /// Applies defaults, then each config file in order, then parsed flags.
  void resolve(const std::vector<std::string>& config_files) {
    values_ = {};
    set_by_user_.clear();
    for (const auto& o : schema_) values_.set(o.key, o.fallback);
    for (const auto& f : config_files) apply_file(f);
    for (const auto& o : schema_) {
      const auto it = options_.find(o.key);
      if (it == options_.end() || it->second->count() == 0) continue;
      values_.set(o.key, o.flag ? (flags_[o.key] ? "1" : "0") : flag_values_[o.key]);
      set_by_user_.insert(o.key);
    }
    if (known("seed") && !set_by_user_.count("seed")) {
      if (const char* env = std::getenv(kSeedEnv); env != nullptr && *env != '\0') values_.set("seed", env);
    }
  }

  /// Overrides a value as if it had been given on the command line.
  void set(const std::string& key, std::string value) {
    require(known(key), ErrorCode::invalid_argument, "unknown setting '" + key + "'");
    values_.set(key, std::move(value));
    set_by_user_.insert(key);
  }

  bool known(const std::string& key) const {
    return std::any_of(schema_.begin(), schema_.end(), [&](const OptionSpec& o) { return o.key == key; });
  }
  bool user_set(const std::string& key) const { return set_by_user_.count(key) > 0; }
  const io::KeyValues& values() const { return values_; }

  std::string text(const std::string& key) const {
    auto v = values_.get(key);
    require(v.has_value(), ErrorCode::invalid_argument, "unknown setting '" + key + "'");
    return *v;
  }
  std::string required(const std::string& key) const {
    auto v = text(key);
    std::string flag = key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    require(!v.empty(), ErrorCode::invalid_argument, "--" + flag + " is required");
    return v;
  }
  std::uint64_t u64(const std::string& key) const { return train::TrainConfig::parse_unsigned(text(key), key); }
  std::size_t count(const std::string& key) const { return static_cast<std::size_t>(u64(key)); }
  double real(const std::string& key) const { return train::TrainConfig::parse_real(text(key), key); }
  bool on(const std::string& key) const {
    const auto v = text(key);
    require(v == "0" || v == "1" || v == "true" || v == "false", ErrorCode::invalid_argument,
            key + ": expected 0 or 1, got '" + v + "'");
    return v == "1" || v == "true";
  }
  std::optional<std::size_t> maybe_count(const std::string& key) const {
    if (text(key).empty()) return std::nullopt;
    return count(key);
  }
  std::vector<std::string> list(const std::string& key) const { return io::split_list(text(key)); }

 private:
  void apply_file(const fs::path& path) {
    require(fs::is_regular_file(path), ErrorCode::io, "config file " + path.string() + " not found");
    const auto kv = io::read_key_values(path);
    io::KeyValues entries = kv;
    if (kv.get("format") == std::optional<std::string>(kManifestFormat)) {
      const auto m = RunManifest::from_kv(kv);
      require(m.subcommand == subcommand_, ErrorCode::invalid_argument,
              path.string() + " is a manifest of '" + m.subcommand + "', not '" + subcommand_ + "'");
      entries = m.config;
    }
    for (const auto& [k, v] : entries.entries) {
      require(known(k), ErrorCode::invalid_argument, path.string() + ": unknown key '" + k + "' for " + subcommand_);
      values_.set(k, v);
      set_by_user_.insert(k);
    }
  }

  std::string subcommand_;
  std::vector<OptionSpec> schema_;
  std::map<std::string, CLI::Option*> options_;
  std::map<std::string, std::string> flag_values_;
  std::map<std::string, bool> flags_;
  io::KeyValues values_;
  std::set<std::string> set_by_user_;
};

struct Context {
  const Settings& settings;
  RunManifest& manifest;
  fs::path out;
  std::ostream& log;
  std::ostream& err;

  void write(const std::string& rel, std::string_view bytes) {
    io::write_file(out / rel, bytes);
    manifest.add_artifact(out, rel);
  }
};

namespace detail {

inline eval::Point parse_point(const std::string& text, const std::string& key) {
  const auto parts = io::split_list(text);
  require(parts.size() == 2, ErrorCode::invalid_argument, key + ": expected 'x,y', got '" + text + "'");
  return {train::TrainConfig::parse_real(parts[0], key), train::TrainConfig::parse_real(parts[1], key)};
}

inline std::string real(double v) { return train::TrainConfig::real(v); }

}  // namespace detail

/// Runs `body` with the manifest bookkeeping every subcommand shares: the
/// resolved configuration, timestamps, status and artifact checksums are
/// written to `<out>/manifest.txt` whatever the outcome.
/// Exclusive claim on an output directory for the lifetime of one run.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& dir) : path_(dir / ".lock") {
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    require(f != nullptr, ErrorCode::invalid_argument,
            "output directory " + dir.string() + " is in use by another run (delete " + path_.string() + " if stale)");
    std::fclose(f);
  }
  ~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  fs::path path_;
};

inline int execute(const Settings& s, std::ostream& log, std::ostream& err, const std::function<int(Context&)>& body) {
  RunManifest m;
  m.subcommand = s.subcommand();
  m.config = s.values();
  m.started = utc_now();
  fs::path out;
  std::optional<OutputLock> lock;
  int rc = kExitOk;
  try {
    const fs::path dir = s.required("out");
    fs::create_directories(dir);
    lock.emplace(dir);
    out = dir;
    Context ctx{s, m, out, log, err};
    rc = body(ctx);
    if (rc == kExitMismatch) m.status = "mismatch";
  } catch (const Error& e) {
    rc = e.code() == ErrorCode::numeric ? kExitNumeric : kExitUsage;
    m.status = rc == kExitNumeric ? "numeric-failure" : "error";
    m.message = e.what();
    err << "error: " << e.what() << "\n";
  } catch (const std::exception& e) {
    rc = kExitUsage;
    m.status = "error";
    m.message = e.what();
    err << "error: " << e.what() << "\n";
  }
  m.finished = utc_now();
  if (!out.empty() && fs::is_directory(out)) {
    try {
      io::write_key_values(out / kManifestName, m.to_kv());
    } catch (const std::exception& e) {
      err << "error: cannot write manifest: " << e.what() << "\n";
      if (rc == kExitOk) rc = kExitUsage;
    }
  }
  return rc;
}

// ---- audit ----

inline std::vector<OptionSpec> audit_options() {
  return {
      {"out", "audit-run", "output directory"},
      {"builtin", "0", "audit the built-in reference table", true},
      {"archs", "", "architectures to audit, separated by '|'"},
  };
}

/// Audits the reference table (with --builtin, or when nothing else is
/// given) and any listed architectures. Exit 1 if a hard expectation fails.
inline int cmd_audit(Context& ctx) {
  const auto& s = ctx.settings;
  std::vector<arch::ArchSpec> specs;
  const auto archs = io::split_list(s.text("archs"), '|');
  if (s.on("builtin") || archs.empty()) specs = arch::reference_specs();
  for (const auto& a : archs) specs.push_back(arch::parse_arch(a));
  const auto report = arch::audit_table(specs);
  const std::string csv = report.to_csv();
  ctx.log << csv;
  ctx.write("audit.csv", csv);

  std::size_t param_matches = 0, mismatches = 0;
  for (const auto& r : report.rows) {
    if (r.expected_params && *r.expected_params == r.parameters) ++param_matches;
    if (r.status == arch::MatchStatus::mismatch) {
      ++mismatches;
      ctx.err << "mismatch: " << r.name << ": " << r.detail << "\n";
    }
  }
  ctx.manifest.results.set("rows", std::to_string(report.rows.size()));
  ctx.manifest.results.set("param_matches", std::to_string(param_matches));
  ctx.manifest.results.set("mismatches", std::to_string(mismatches));
  return report.hard_matches() ? kExitOk : kExitMismatch;
}

// ---- synth ----

inline std::vector<OptionSpec> synth_options() {
  const synth::SynthConfig c;
  const auto& p = c.phantoms;
  using detail::real;
  return {
      {"out", "synth-data", "dataset directory to write"},
      {"fovs", std::to_string(c.fovs), "number of pseudo-FOVs"},
      {"frames", std::to_string(c.frames_per_fov), "frames per FOV"},
      {"height", std::to_string(c.height), "frame height"},
      {"width", std::to_string(c.width), "frame width"},
      {"fwhm_wide", real(c.fwhm_wide), "input PSF FWHM in px"},
      {"fwhm_narrow", real(c.fwhm_narrow), "target PSF FWHM in px"},
      {"poisson", real(c.poisson_scale), "photon scale of the shot noise"},
      {"gauss", real(c.gaussian_sigma), "read-noise sigma"},
      {"seed", std::to_string(c.seed), "base seed; FOV i uses seed + i"},
      {"singles", std::to_string(p.singles), "isolated emitters per FOV"},
      {"pairs", std::to_string(p.pairs), "emitter pairs per FOV"},
      {"min_sep", real(p.min_separation), "smallest pair separation in px"},
      {"max_sep", real(p.max_separation), "largest pair separation in px"},
      {"min_spacing", real(p.min_spacing), "minimum distance between objects, 0 allows overlap"},
      {"filaments", std::to_string(p.filaments), "faint filaments per FOV"},
      {"amp_lo", real(p.amp_lo), "smallest emitter amplitude"},
      {"amp_hi", real(p.amp_hi), "largest emitter amplitude"},
      {"margin", real(p.margin), "border kept free of emitters, px"},
      {"train_fovs", "0", "if > 0, record the first n FOVs as training ids in dataset.txt"},
  };
}

inline synth::SynthConfig synth_config(const Settings& s) {
  synth::SynthConfig c;
  c.fovs = s.count("fovs");
  c.frames_per_fov = s.count("frames");
  c.height = s.count("height");
  c.width = s.count("width");
  c.fwhm_wide = s.real("fwhm_wide");
  c.fwhm_narrow = s.real("fwhm_narrow");
  c.poisson_scale = s.real("poisson");
  c.gaussian_sigma = s.real("gauss");
  c.seed = s.u64("seed");
  auto& p = c.phantoms;
  p.singles = s.count("singles");
  p.pairs = s.count("pairs");
  p.min_separation = s.real("min_sep");
  p.max_separation = s.real("max_sep");
  p.min_spacing = s.real("min_spacing");
  p.filaments = s.count("filaments");
  p.amp_lo = s.real("amp_lo");
  p.amp_hi = s.real("amp_hi");
  p.margin = s.real("margin");
  c.check();
  return c;
}

inline int cmd_synth(Context& ctx) {
  const auto cfg = synth_config(ctx.settings);
  const std::size_t train_fovs = ctx.settings.count("train_fovs");
  require(train_fovs < cfg.fovs || train_fovs == 0, ErrorCode::invalid_argument,
          "train_fovs must leave at least one test FOV");

  std::vector<std::string> new_ids;
  for (std::size_t i = 0; i < cfg.fovs; ++i) new_ids.push_back(std::to_string(i));
  if (fs::is_directory(ctx.out)) {
    for (const auto& id : data::list_fov_ids(ctx.out)) {
      require(std::find(new_ids.begin(), new_ids.end(), id) != new_ids.end(), ErrorCode::invalid_argument,
              ctx.out.string() + " already holds FOV " + id + " from another dataset");
    }
  }

  data::DatasetManifest dm;
  dm.frames_per_fov = cfg.frames_per_fov;
  if (train_fovs > 0) {
    dm.train_ids.assign(new_ids.begin(), new_ids.begin() + static_cast<std::ptrdiff_t>(train_fovs));
    dm.test_ids.assign(new_ids.begin() + static_cast<std::ptrdiff_t>(train_fovs), new_ids.end());
  }
  const auto fovs = synth::make_synth_dataset(cfg);
  for (const auto& rel : synth::write_synth_dataset(ctx.out, fovs, dm)) ctx.manifest.add_artifact(ctx.out, rel);

  const std::size_t inputs = cfg.fovs * cfg.frames_per_fov;
  ctx.manifest.results.set("fovs", std::to_string(cfg.fovs));
  ctx.manifest.results.set("frames_per_fov", std::to_string(cfg.frames_per_fov));
  ctx.manifest.results.set("inputs", std::to_string(inputs));
  ctx.manifest.results.set("benchmark_separation", detail::real(synth::benchmark_separation(cfg)));
  ctx.log << "wrote " << cfg.fovs << " FOVs, " << inputs << " input frames to " << ctx.out.string() << "\n";
  return kExitOk;
}

// ---- train ----

inline std::vector<OptionSpec> train_options() {
  std::vector<OptionSpec> o = {
      {"data", "", "dataset directory"},
      {"out", "train-run", "run directory"},
      {"arch", arch::format_arch(arch::DenseEDSpec{}), "architecture, e.g. 'arch=denseed;blocks=3,6,3'"},
  };
  const std::map<std::string, std::string> help = {
      {"batch_size", "mini-batch size"}, {"lr", "Adam learning rate"},       {"wd", "L2 weight decay"},
      {"epochs", "epochs to train"},     {"seed", "initialization and shuffle seed"},
      {"beta1", "Adam beta1"},           {"beta2", "Adam beta2"},          {"adam_eps", "Adam epsilon"},
      {"eval_every", "test MSE every n epochs, 0 disables"},
  };
  for (const auto& [k, v] : train::TrainConfig{}.to_kv().entries) o.push_back({k, v, help.at(k)});
  o.push_back({"train_fovs", "", "train on the first n FOVs, test on the rest"});
  o.push_back({"train_ids", "", "comma-separated training FOV ids"});
  o.push_back({"test_ids", "", "comma-separated test FOV ids (default: all others)"});
  o.push_back({"normalization", "minmax", "'minmax' or 'percentile:lo,hi'"});
  o.push_back({"frames", "", "expected frames per FOV (default: dataset.txt, else 50)"});
  o.push_back({"resume", "", "checkpoint directory to continue from"});
  o.push_back({"checkpoint_every", "10", "also checkpoint every n epochs, 0 for the end only"});
  return o;
}

/// Training and test FOV ids, in this order of preference: explicit ids,
/// the first `train_fovs` FOVs, the dataset's own split, all but the last.
inline data::DatasetSplit resolve_split(const Settings& s, const fs::path& root) {
  const auto ids = data::list_fov_ids(root);
  std::vector<std::string> train_ids = s.list("train_ids"), test_ids = s.list("test_ids");
  if (train_ids.empty()) {
    if (auto n = s.maybe_count("train_fovs")) {
      require(*n <= ids.size(), ErrorCode::invalid_argument,
              "train_fovs=" + std::to_string(*n) + " but the dataset has " + std::to_string(ids.size()) + " FOVs");
      train_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(*n));
    } else if (auto m = data::read_dataset_manifest(root); m && !m->train_ids.empty()) {
      train_ids = m->train_ids;
      if (test_ids.empty()) test_ids = m->test_ids;
    } else {
      require(ids.size() >= 2, ErrorCode::invalid_argument, "need at least two FOVs to split");
      train_ids.assign(ids.begin(), ids.end() - 1);
    }
  }
  if (test_ids.empty()) return data::split_by_fov(ids, train_ids);
  for (const auto& id : test_ids) {
    require(std::find(ids.begin(), ids.end(), id) != ids.end(), ErrorCode::unknown_id, "no FOV with id " + id);
  }
  std::vector<std::string> available = train_ids;
  available.insert(available.end(), test_ids.begin(), test_ids.end());
  return data::split_by_fov(available, train_ids);
}

inline int cmd_train(Context& ctx) {
  const auto& s = ctx.settings;
  const fs::path root = s.required("data");

  train::TrainConfig cfg;
  io::KeyValues cfg_kv;
  for (const auto& [k, v] : cfg.to_kv().entries) cfg_kv.set(k, s.text(k));
  cfg.apply(cfg_kv);
  cfg.check();

  std::optional<train::Trainer> trainer;
  data::DatasetSplit split;
  data::Normalization norm;
  if (const std::string resume = s.text("resume"); !resume.empty()) {
    const auto ck = train::load_checkpoint(resume);
    // Hyperparameters come from the checkpoint; only the epoch target may change.
    const auto saved = ck.config.to_kv();
    for (const auto& [k, v] : cfg.to_kv().entries) {
      if (k != "epochs" && s.user_set(k) && saved.get(k) != v) {
        fail(ErrorCode::invalid_argument, k + "=" + v + " conflicts with the checkpoint's " + k + "=" + *saved.get(k));
      }
    }
    if (s.user_set("arch")) {
      require(arch::format_arch(arch::parse_arch(s.text("arch"))) == arch::format_arch(ck.arch),
              ErrorCode::invalid_argument, "arch conflicts with the checkpoint");
    }
    trainer.emplace(train::Trainer::resume(ck));
    if (s.user_set("epochs")) trainer->config().epochs = cfg.epochs;
    split = {ck.train_ids, ck.test_ids};
    norm = data::Normalization::parse(ck.normalization);
    ctx.log << "resuming from epoch " << ck.epoch << "\n";
  } else {
    trainer.emplace(arch::parse_arch(s.text("arch")), cfg);
    split = resolve_split(s, root);
    norm = data::Normalization::parse(s.text("normalization"));
  }

  std::vector<std::string> wanted = split.train_ids;
  wanted.insert(wanted.end(), split.test_ids.begin(), split.test_ids.end());
  const auto records = data::load_dataset(root, s.maybe_count("frames"), wanted);
  std::size_t train_images = 0, test_images = 0;
  for (const auto& r : records) {
    const bool is_train = std::find(split.train_ids.begin(), split.train_ids.end(), r.id) != split.train_ids.end();
    (is_train ? train_images : test_images) += r.frames.size();
  }
  const auto data = train::prepare_data(records, split, norm);

  auto& res = ctx.manifest.results;
  res.set("train_ids", io::join(split.train_ids));
  res.set("test_ids", io::join(split.test_ids));
  res.set("train_images", std::to_string(train_images));
  res.set("test_images", std::to_string(test_images));
  res.set("train_patches", std::to_string(data.train.size()));
  res.set("parameters", std::to_string(trainer->params().count()));
  ctx.log << arch::arch_name(trainer->spec()) << ": " << trainer->params().count() << " parameters, " << train_images
          << " train / " << test_images << " test images\n";

  io::KeyValues run_cfg;
  for (const auto& [k, v] : s.values().entries) {
    if (k != "out" && k != "resume") run_cfg.set(k, v);
  }
  ctx.write(kRunConfigName, run_cfg.str());

  const auto save = [&] {
    for (const auto& p : train::save_checkpoint(trainer->checkpoint(split.train_ids, split.test_ids, norm.str()),
                                                ctx.out / "checkpoint")) {
      ctx.manifest.add_artifact(ctx.out, fs::relative(p, ctx.out).generic_string());
    }
    ctx.write("loss.csv", trainer->log().csv());
  };
  const std::size_t every = s.count("checkpoint_every");
  try {
    trainer->run(data, [&](const train::EpochRecord& r) {
      ctx.log << "epoch " << r.epoch << " train_mse " << detail::real(r.train_mse);
      if (r.test_mse) ctx.log << " test_mse " << detail::real(*r.test_mse);
      ctx.log << "\n";
      if (every > 0 && r.epoch % every == 0) save();
    });
  } catch (const Error& e) {
    if (e.code() == ErrorCode::numeric) {
      save();
      ctx.err << "training stopped; last good state saved at epoch " << trainer->epoch() << "\n";
    }
    throw;
  }
  save();
  res.set("epochs_completed", std::to_string(trainer->epoch()));
  if (!trainer->log().empty()) {
    const auto& last = trainer->log().records.back();
    res.set("final_train_mse", detail::real(last.train_mse));
    if (last.test_mse) res.set("final_test_mse", detail::real(*last.test_mse));
  }
  return kExitOk;
}

// ---- eval ----

inline std::vector<OptionSpec> eval_options() {
  return {
      {"checkpoint", "", "checkpoint directory"},
      {"data", "", "dataset directory"},
      {"out", "eval-run", "report directory"},
      {"test_ids", "", "FOV ids to evaluate (default: the checkpoint's test ids)"},
      {"frames", "", "expected frames per FOV (default: dataset.txt, else 50)"},
      {"normalization", "", "override the checkpoint's normalization"},
      {"keep_images", "4", "number of frames exported as images"},
      {"profile_p0", "", "profile start 'x,y' on the first exported frame"},
      {"profile_p1", "", "profile end 'x,y'"},
      {"profile_samples", "0", "profile samples, 0 for 4 per px"},
      {"um_per_px", "1", "profile position scale"},
      {"threshold", detail::real(eval::kResolvedDip), "dip depth that counts as resolved"},
  };
}

inline std::size_t profile_samples(const Settings& s, eval::Point p0, eval::Point p1, const std::string& key) {
  if (const auto n = s.count(key); n > 0) return n;
  return std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(4 * std::hypot(p1.x - p0.x, p1.y - p0.y))) + 1);
}

inline int cmd_eval(Context& ctx) {
  const auto& s = ctx.settings;
  const auto ck = train::load_checkpoint(s.required("checkpoint"));
  const fs::path root = s.required("data");
  auto ids = s.list("test_ids");
  if (ids.empty()) ids = ck.test_ids;
  require(!ids.empty(), ErrorCode::empty_test, "no test ids given and the checkpoint records none");
  for (const auto& id : ids) {
    if (std::find(ck.train_ids.begin(), ck.train_ids.end(), id) != ck.train_ids.end()) {
      ctx.err << "warning: FOV " << id << " was used for training\n";
    }
  }
  const auto norm = data::Normalization::parse(s.text("normalization").empty() ? ck.normalization : s.text("normalization"));
  const auto records = data::load_dataset(root, s.maybe_count("frames"), ids);
  const auto graph = arch::build(ck.arch);
  auto rep = eval::evaluate(graph, ck.params, train::test_frames(records, ids, norm), s.count("keep_images"));

  const bool custom = !s.text("profile_p0").empty() || !s.text("profile_p1").empty();
  if (custom) {
    const auto p0 = detail::parse_point(s.required("profile_p0"), "profile_p0");
    const auto p1 = detail::parse_point(s.required("profile_p1"), "profile_p1");
    require(!rep.images.empty() && !rep.images.front().output.empty(), ErrorCode::invalid_argument,
            "profiles need keep_images >= 1");
    eval::add_profiles(rep, 0, p0, p1, profile_samples(s, p0, p1, "profile_samples"), s.real("um_per_px"),
                       s.real("threshold"));
  } else {
    eval::add_default_profiles(rep);
  }
  for (const auto& rel : eval::export_artifacts(rep, ck.log, ctx.out)) ctx.manifest.add_artifact(ctx.out, rel);

  auto& res = ctx.manifest.results;
  res.set("images", std::to_string(rep.images.size()));
  res.set("mean_mse", detail::real(rep.mean_mse));
  for (const auto& p : rep.profiles) {
    res.set("profile." + p.label, std::string(p.dip.resolved ? "resolved" : "unresolved") + " dip_depth=" +
                                      detail::real(p.dip.dip_depth));
  }
  ctx.log << "mean_mse " << detail::real(rep.mean_mse) << " over " << rep.images.size() << " frames\n";
  return kExitOk;
}

// ---- profile ----

inline std::vector<OptionSpec> profile_options() {
  return {
      {"image", "", "TIFF image to sample"},
      {"page", "0", "page of a multi-page TIFF"},
      {"p0", "", "start point 'x,y' in px"},
      {"p1", "", "end point 'x,y' in px"},
      {"samples", "0", "samples along the segment, 0 for 4 per px"},
      {"um_per_px", "1", "position scale"},
      {"threshold", detail::real(eval::kResolvedDip), "dip depth that counts as resolved"},
      {"normalization", "none", "'none', 'minmax' or 'percentile:lo,hi'"},
      {"out", "profile-run", "output directory"},
  };
}

inline int cmd_profile(Context& ctx) {
  const auto& s = ctx.settings;
  const fs::path path = s.required("image");
  const auto pages = io::read_tiff_pages(path);
  const std::size_t page = s.count("page");
  require(page < pages.size(), ErrorCode::invalid_argument,
          "page " + std::to_string(page) + " out of range, image has " + std::to_string(pages.size()));
  const auto p0 = detail::parse_point(s.required("p0"), "p0");
  const auto p1 = detail::parse_point(s.required("p1"), "p1");
  const std::string norm = s.text("normalization");
  const Image<float> img = norm == "none" ? pages[page].cast<float>() : data::normalize(pages[page], data::Normalization::parse(norm));

  const auto series = eval::line_profile(img, p0, p1, profile_samples(s, p0, p1, "samples"), s.real("um_per_px"),
                                         path.filename().string());
  const auto dip = eval::dip_metric(series, s.real("threshold"));
  ctx.write("profile.csv", series.csv());
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < series.values.size(); ++i) pts.emplace_back(series.positions[i], series.values[i]);
  eval::detail::plot_series(ctx.out / "profile.png", {pts}, false);
  ctx.manifest.add_artifact(ctx.out, "profile.png");

  auto& res = ctx.manifest.results;
  res.set("samples", std::to_string(series.values.size()));
  res.set("scale", detail::real(series.scale));
  res.set("resolved", dip.resolved ? "1" : "0");
  res.set("dip_depth", detail::real(dip.dip_depth));
  std::vector<std::string> peaks;
  for (double p : dip.peak_positions) peaks.push_back(detail::real(p));
  res.set("peak_positions", io::join(peaks));
  ctx.log << (dip.resolved ? "resolved" : "unresolved") << " dip_depth " << detail::real(dip.dip_depth) << "\n";
  return kExitOk;
}

// ---- entry point ----

/// Parses the command line and runs one subcommand. Normal output goes to
/// `log`, diagnostics to `err`.
inline int run(int argc, const char* const* argv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Dense encoder-decoder image restoration toolkit"};
  app.name("denseed");
  app.require_subcommand(1);

  struct Command {
    std::unique_ptr<Settings> settings;
    std::vector<std::string> configs;
    CLI::App* app = nullptr;
    std::function<int(Context&)> body;
  };
  std::list<Command> commands;  // CLI11 binds to members, so elements must not move
  const auto add = [&](const char* name, const char* help, std::vector<OptionSpec> schema, std::function<int(Context&)> body,
                       const char* config_help) {
    Command c{std::make_unique<Settings>(name, std::move(schema)), {}, app.add_subcommand(name, help), std::move(body)};
    c.settings->attach(*c.app);
    commands.push_back(std::move(c));
    auto& cmd = commands.back();
    cmd.app->add_option("--config", cmd.configs, config_help);
  };
  const char* file_help = "key = value file or run manifest; flags override it";
  add("audit", "parameter, layer and feature-map audit of architectures", audit_options(), cmd_audit,
      "architecture string (e.g. 'blocks=2,2,2'), or a key = value file; repeatable");
  add("synth", "write a synthetic dataset", synth_options(), cmd_synth, file_help);
  add("train", "train a model on a dataset", train_options(), cmd_train, file_help);
  add("eval", "evaluate a checkpoint on test FOVs", eval_options(), cmd_eval, file_help);
  add("profile", "line profile and dip depth of an image", profile_options(), cmd_profile, file_help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, log, err) == 0 ? kExitOk : kExitUsage;
  }

  for (auto& c : commands) {
    if (!c.app->parsed()) continue;
    auto& s = *c.settings;
    try {
      std::vector<std::string> files;
      std::vector<std::string> inline_archs;
      for (const auto& v : c.configs) {
        // audit also takes architecture strings in place of a file.
        if (s.subcommand() == "audit" && !fs::is_regular_file(v)) inline_archs.push_back(v);
        else files.push_back(v);
      }
      s.resolve(files);
      if (!inline_archs.empty()) {
        std::vector<std::string> archs = io::split_list(s.text("archs"), '|');
        archs.insert(archs.end(), inline_archs.begin(), inline_archs.end());
        s.set("archs", io::join(archs, '|'));
      }
    } catch (const Error& e) {
      err << "error: " << e.what() << "\n";
      return kExitUsage;
    }
    return execute(s, log, err, c.body);
  }
  return kExitUsage;
}

}  // namespace denseed::cli
