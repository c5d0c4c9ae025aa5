// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The n2n-denoise Authors

#include "n2n/cli.h"

#include <algorithm>
#include <array>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "n2n/dcunet.h"
#include "n2n/error.h"
#include "n2n/metrics.h"
#include "n2n/mixgen.h"
#include "n2n/spectral.h"
#include "n2n/trainer.h"

namespace n2n::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  int precision = 32;
  int sample_rate = audio::kDefaultSampleRate;
  std::string config;
};

struct SynthArgs {
  fs::path out;
  std::size_t count = 10;
  double seconds = 1.0;
};

struct MixArgs {
  fs::path clean_dir, noise_dir, out;
  bool white = false;
  std::string mode = "n2n";
  std::string category = mixgen::kRandom;
  std::size_t count = 0;
  std::string encoding = "float32";
};

struct TrainArgs {
  fs::path manifest, out, resume;
  std::string arch = "desk";
  std::string mode;
  int epochs = 4;
  int batch_size = 2;
  double lr = 1e-3;
  std::int64_t max_steps = 0;
  std::int64_t crop = 16384;
  std::int64_t checkpoint_every = 0;
  int fft_size = 0;
  int hop = 0;
  int log_every = 10;
};

struct DenoiseArgs {
  fs::path checkpoint, in, out;
};

struct EvalArgs {
  fs::path manifest, checkpoint, n2c, n2n, pesq_csv, out;
  std::string pesq_condition = "Baseline";
};

struct ReportArgs {
  std::vector<fs::path> reports;
  std::string format = "csv";
  fs::path out;
};

// Thrown for flag combinations CLI11 cannot express; maps to exit code 2.
struct UsageError : Error {
  using Error::Error;
};

void require(bool ok, const std::string& msg) {
  if (!ok) throw UsageError(msg);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

json option_values(const CLI::App& app) {
  json j = json::object();
  for (const auto* opt : app.get_options()) {
    if (opt->get_name().empty() || opt->get_lnames().empty() || opt->get_lnames()[0] == "help") continue;
    const auto& name = opt->get_lnames()[0];
    if (opt->count() > 0) {
      const auto& r = opt->results();
      j[name] = r.size() == 1 ? json(r[0]) : json(r);
    } else if (!opt->get_default_str().empty()) {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

void write_run_metadata(const fs::path& path, const std::string& command, const Globals& g, const CLI::App& sub,
                        const json& extra = json::object()) {
  json meta = {{"tool", "n2n"},
               {"version", kVersion},
               {"command", command},
               {"seed", g.seed},
               {"precision", g.precision},
               {"sample_rate", g.sample_rate},
               {"options", option_values(sub)},
               {"libraries",
                {{"fft", spectral::fft_library_version()},
                 {"json", fmt::format("nlohmann/json {}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR,
                                      NLOHMANN_JSON_VERSION_MINOR, NLOHMANN_JSON_VERSION_PATCH)},
                 {"cli", std::string("CLI11 ") + CLI11_VERSION}}}};
  if (!g.config.empty()) meta["config_file"] = g.config;
  for (const auto& [k, v] : extra.items()) meta[k] = v;
  write_text(path, meta.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// --config: a JSON object whose keys are long option names (with or without
// the leading dashes, '_' accepted for '-'). Keys naming a subcommand may
// hold an object of that subcommand's options. Values fill in options not
// given on the command line; explicit flags win.

std::string normalize_key(std::string k) {
  while (!k.empty() && k.front() == '-') k.erase(k.begin());
  std::replace(k.begin(), k.end(), '_', '-');
  return k;
}

bool given(const std::vector<std::string>& args, std::size_t begin, std::size_t end, const CLI::Option* opt) {
  for (std::size_t i = begin; i < end; ++i) {
    for (const auto& n : opt->get_lnames()) {
      if (args[i] == "--" + n || args[i].rfind("--" + n + "=", 0) == 0) return true;
    }
    for (const auto& n : opt->get_snames()) {
      if (args[i] == "-" + n) return true;
    }
  }
  return false;
}

std::vector<std::string> as_tokens(const std::string& flag, const json& v, const CLI::Option* opt) {
  auto scalar = [](const json& x) { return x.is_string() ? x.get<std::string>() : x.dump(); };
  if (v.is_boolean()) {
    if (opt->get_expected_min() == 0) return v.get<bool>() ? std::vector<std::string>{flag} : std::vector<std::string>{};
    return {flag, v.get<bool>() ? "true" : "false"};
  }
  if (v.is_array()) {
    std::vector<std::string> out{flag};
    for (const auto& x : v) out.push_back(scalar(x));
    return out;
  }
  if (v.is_object() || v.is_null()) throw ConfigError("config value for " + flag + " must be a scalar or list");
  return {flag, scalar(v)};
}

std::vector<std::string> apply_config(CLI::App& app, std::vector<std::string> args) {
  std::optional<std::string> path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (!path) return args;
  const json cfg = read_json(*path);
  if (!cfg.is_object()) throw ConfigError("config file " + *path + " must hold a JSON object");

  std::size_t sub_pos = args.size();
  CLI::App* sub = nullptr;
  for (std::size_t i = 1; i < args.size() && !sub; ++i) {
    for (auto* s : app.get_subcommands({})) {
      if (s->get_name() == args[i]) {
        sub = s;
        sub_pos = i;
        break;
      }
    }
  }

  std::vector<std::string> global_extra, sub_extra;
  auto place = [&](const std::string& key, const json& value, bool sub_only) {
    const std::string flag = "--" + normalize_key(key);
    if (flag == "--config") return;
    const CLI::Option* opt = sub_only ? nullptr : app.get_option_no_throw(flag);
    if (opt) {
      if (!given(args, 1, sub_pos, opt)) {
        auto t = as_tokens(flag, value, opt);
        global_extra.insert(global_extra.end(), t.begin(), t.end());
      }
      return;
    }
    opt = sub ? sub->get_option_no_throw(flag) : nullptr;
    if (!opt) throw ConfigError("config key '" + key + "' does not name an option");
    if (!given(args, sub_pos + 1, args.size(), opt)) {
      auto t = as_tokens(flag, value, opt);
      sub_extra.insert(sub_extra.end(), t.begin(), t.end());
    }
  };
  for (const auto& [key, value] : cfg.items()) {
    bool is_sub = false;
    for (auto* s : app.get_subcommands({})) is_sub = is_sub || s->get_name() == key;
    if (is_sub) {
      if (!value.is_object()) throw ConfigError("config section '" + key + "' must be an object");
      if (!sub || sub->get_name() != key) continue;
      for (const auto& [k, v] : value.items()) place(k, v, true);
    } else {
      place(key, value, false);
    }
  }

  std::vector<std::string> out(args.begin(), args.begin() + static_cast<std::ptrdiff_t>(std::min(sub_pos, args.size())));
  out.insert(out.end(), global_extra.begin(), global_extra.end());
  if (sub_pos < args.size()) {
    out.push_back(args[sub_pos]);
    out.insert(out.end(), sub_extra.begin(), sub_extra.end());
    out.insert(out.end(), args.begin() + static_cast<std::ptrdiff_t>(sub_pos) + 1, args.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// synth

int cmd_synth(const Globals& g, const SynthArgs& a, const CLI::App& sub, std::ostream& out) {
  require(a.seconds > 0.0, "--seconds must be positive");
  require(g.sample_rate >= 8000, "--sample-rate must be >= 8000 for synthetic speech");
  const auto files = mixgen::write_synth_corpus(a.out, a.count, a.seconds, g.sample_rate, g.seed);
  write_run_metadata(a.out / "run.json", "synth", g, sub);
  out << fmt::format("wrote {} clips of {:.3f} s to {}\n", files.size(), a.seconds, a.out.string());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// mix

int cmd_mix(const Globals& g, const MixArgs& a, const CLI::App& sub, std::ostream& out) {
  require(a.white || !a.noise_dir.empty() || a.mode == "white", "one of --noise-dir or --white is required");
  require(!(a.white && !a.noise_dir.empty()), "--noise-dir and --white are mutually exclusive");
  require(fs::is_directory(a.clean_dir), "--clean-dir is not a directory: " + a.clean_dir.string());
  require(a.noise_dir.empty() || fs::is_directory(a.noise_dir),
          "--noise-dir is not a directory: " + a.noise_dir.string());
  require(g.sample_rate > 0, "--sample-rate must be positive");

  mixgen::Mode mode;
  std::string category = a.category;
  if (a.mode == "mixed") {
    mode = mixgen::Mode::kN2N;
    require(category == mixgen::kRandom, "--mode mixed draws categories at random; drop --category");
  } else if (a.mode == "white") {
    mode = mixgen::Mode::kN2N;
    require(category == mixgen::kRandom || category == mixgen::kWhite, "--mode white uses the white category");
    category = mixgen::kWhite;
  } else {
    mode = mixgen::parse_mode(a.mode);
  }

  mixgen::NoiseBank bank = a.noise_dir.empty() ? mixgen::NoiseBank::white_only() : mixgen::NoiseBank::scan(a.noise_dir);
  if (a.white || a.mode == "white") bank.add_white();
  if (category != mixgen::kRandom && !bank.has(category)) {
    throw UsageError("noise bank has no category '" + category + "'");
  }
  if (mode == mixgen::Mode::kN2N && category != mixgen::kWhite && bank.categories().size() < 2) {
    throw UsageError("n2n mode needs at least 2 noise categories (found " +
                     std::to_string(bank.categories().size()) + "); use --mode white for white noise");
  }

  mixgen::GenerateOptions opts;
  opts.input_category = category;
  opts.encoding = a.encoding == "pcm16" ? audio::WavEncoding::kPcm16 : audio::WavEncoding::kFloat32;
  opts.sample_rate = g.sample_rate;
  const auto manifest = mixgen::generate_dataset(a.clean_dir, bank, mode, a.count, a.out, g.seed, opts);

  std::array<int, 10> hist{};
  double sum = 0.0, lo = 0.0, hi = 0.0;
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const double s = manifest.records[i].input_snr_db;
    hist[static_cast<std::size_t>(std::clamp(static_cast<int>(s), 0, 9))]++;
    sum += s;
    lo = i == 0 ? s : std::min(lo, s);
    hi = i == 0 ? s : std::max(hi, s);
    clipped += manifest.records[i].clipped ? 1 : 0;
  }
  const std::size_t n = manifest.records.size();
  json summary = {{"count", n},
                  {"mean_input_snr_db", n ? sum / static_cast<double>(n) : 0.0},
                  {"min_input_snr_db", lo},
                  {"max_input_snr_db", hi},
                  {"snr_histogram_1db", hist},
                  {"clipped_pairs", clipped}};
  write_run_metadata(a.out / "run.json", "mix", g, sub, {{"summary", summary}});

  out << "manifest: " << (a.out / mixgen::kManifestName).string() << '\n';
  out << fmt::format("pairs: {}  mode: {}  categories: {}\n", n, a.mode, fmt::join(bank.categories(), ","));
  if (n > 0) {
    out << fmt::format("input SNR dB: mean {:.3f}  min {:.3f}  max {:.3f}\n", sum / static_cast<double>(n), lo, hi);
    for (int b = 0; b < 10; ++b) {
      out << fmt::format("  [{:2d},{:2d}{} {:5d} {}\n", b, b + 1, b == 9 ? "]" : ")", hist[b],
                         std::string(static_cast<std::size_t>(60 * hist[b] / static_cast<int>(n)), '#'));
    }
  }
  if (clipped) out << fmt::format("warning: {} pairs clipped during pcm16 export\n", clipped);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct ModelChoice {
  dcunet::ArchitectureSpec arch;
  spectral::StftConfig stft;
};

ModelChoice resolve_model(const std::string& arch, int sample_rate, int fft_size, int hop) {
  ModelChoice c;
  if (arch == "desk") {
    c.arch = dcunet::ArchitectureSpec::desk();
    c.stft = spectral::StftConfig::desk();
  } else if (arch == "dcunet20") {
    c.stft = spectral::StftConfig::full(sample_rate);
    c.arch = dcunet::ArchitectureSpec::dcunet20(c.stft.bins());
  } else {
    const json j = read_json(arch);
    c.arch = dcunet::ArchitectureSpec::from_json(j.contains("arch") ? j["arch"] : j);
    if (j.contains("stft")) {
      c.stft = dcunet::stft_from_json(j["stft"]);
    } else {
      c.stft.fft_size = 2 * (c.arch.freq_bins - 1);
      c.stft.hop = c.stft.fft_size / 4;
    }
  }
  if (fft_size > 0) c.stft.fft_size = fft_size;
  if (hop > 0) c.stft.hop = hop;
  c.stft.validate();
  if (c.stft.bins() != c.arch.freq_bins) {
    if (fft_size > 0 && arch == "dcunet20") {
      c.arch = dcunet::ArchitectureSpec::dcunet20(c.stft.bins());
    } else {
      throw UsageError(fmt::format("architecture expects {} frequency bins but the STFT gives {}", c.arch.freq_bins,
                                   c.stft.bins()));
    }
  }
  c.arch.validate();
  return c;
}

template <typename T>
void run_training(const Globals& g, const TrainArgs& a, const trainer::TrainConfig& cfg, const ModelChoice& model,
                  const trainer::TrainingSet& data, std::ostream& out, std::ostream& err, json& result) {
  trainer::Trainee<T> t;
  if (!a.resume.empty()) {
    t = trainer::load_checkpoint<T>(a.resume);
    const auto& old = t.config;
    require(old.mode == cfg.mode && old.batch_size == cfg.batch_size && old.seed == cfg.seed &&
                old.crop == cfg.crop,
            "--resume checkpoint was trained with a different mode, batch size, seed or crop");
    t.config = cfg;
  } else {
    t = trainer::init_trainee<T>(model.arch, model.stft, cfg);
  }
  trainer::TrainHooks hooks;
  hooks.diagnostic_path = a.out / "diagnostic_nonfinite.ckpt";
  hooks.checkpoint_path = a.out / "checkpoint.ckpt";
  const auto per_epoch = trainer::steps_per_epoch(data.inputs.size(), cfg.batch_size);
  hooks.on_step = [&](const trainer::LossPoint& p) {
    if (a.log_every > 0 && (p.step % a.log_every == 0 || p.step == 1)) {
      err << fmt::format("step {:6d}  epoch {:3d}  loss {:+.5f}\n", p.step, p.epoch, p.loss);
    }
  };
  trainer::train(t, data, hooks);
  trainer::save_checkpoint(a.out / "model.ckpt", t);
  trainer::write_loss_csv(t.state.curve, a.out / "loss.csv");
  result = {{"steps", t.state.step},
            {"epochs_completed", static_cast<double>(t.state.step) / static_cast<double>(per_epoch)},
            {"final_loss", t.state.curve.empty() ? 0.0 : t.state.curve.back().loss},
            {"parameters", t.params->parameter_count()}};
  out << fmt::format("trained {} steps ({} per epoch), final loss {:+.5f}\n", t.state.step, per_epoch,
                     t.state.curve.empty() ? 0.0 : t.state.curve.back().loss);
  out << "checkpoint: " << (a.out / "model.ckpt").string() << '\n';
  (void)g;
}

int cmd_train(const Globals& g, const TrainArgs& a, const CLI::App& sub, std::ostream& out, std::ostream& err) {
  require(g.precision == 32 || g.precision == 64, "--precision must be 32 or 64");
  require(fs::is_regular_file(a.manifest), "--manifest not found: " + a.manifest.string());
  require(a.resume.empty() || fs::is_regular_file(a.resume), "--resume checkpoint not found: " + a.resume.string());
  require(a.arch == "desk" || a.arch == "dcunet20" || fs::is_regular_file(a.arch),
          "--arch must be desk, dcunet20 or an existing JSON file");

  const auto model = resolve_model(a.arch, g.sample_rate, a.fft_size, a.hop);
  const auto manifest = mixgen::read_manifest(a.manifest);
  require(!manifest.records.empty(), "manifest has no records");
  const mixgen::Mode mode = a.mode.empty() ? manifest.records.front().mode : mixgen::parse_mode(a.mode);
  for (const auto& r : manifest.records) {
    require(r.mode == mode, "--mode " + mixgen::to_string(mode) + " does not match manifest record " + r.pair_id +
                                " (mode " + mixgen::to_string(r.mode) + ")");
  }

  trainer::TrainConfig cfg;
  cfg.mode = mode;
  cfg.batch_size = a.batch_size;
  cfg.epochs = a.epochs;
  cfg.adam.learning_rate = a.lr;
  cfg.seed = g.seed;
  cfg.precision = g.precision;
  cfg.checkpoint_every = a.checkpoint_every;
  cfg.crop = a.crop;
  cfg.max_steps = a.max_steps;
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }

  ensure_dir(a.out);
  const auto data = trainer::load_training_set(manifest, mode);
  json result;
  if (g.precision == 32) {
    run_training<float>(g, a, cfg, model, data, out, err, result);
  } else {
    run_training<double>(g, a, cfg, model, data, out, err, result);
  }
  write_run_metadata(a.out / "run.json", "train", g, sub,
                     {{"train_config", cfg.to_json()},
                      {"arch", model.arch.to_json()},
                      {"stft", dcunet::stft_to_json(model.stft)},
                      {"result", result}});
  return kExitOk;
}

// ---------------------------------------------------------------------------
// denoise / eval helpers

// Type-erased inference model.
struct Denoiser {
  std::function<audio::Waveform(const audio::Waveform&)> run;
  std::string mode;
};

Denoiser open_denoiser(const fs::path& ckpt) {
  if (!fs::is_regular_file(ckpt)) throw IoError("checkpoint not found: " + ckpt.string());
  const auto c = checkpoint::load(ckpt);
  std::string mode;
  if (c.meta.contains("train")) mode = c.meta["train"]["config"].value("mode", "");
  if (c.meta.value("precision", 32) == 64) {
    auto m = std::make_shared<dcunet::LoadedModel<double>>(dcunet::load_model<double>(ckpt));
    return {[m](const audio::Waveform& w) { return dcunet::denoise(w, *m->params, m->stft); }, mode};
  }
  auto m = std::make_shared<dcunet::LoadedModel<float>>(dcunet::load_model<float>(ckpt));
  return {[m](const audio::Waveform& w) { return dcunet::denoise(w, *m->params, m->stft); }, mode};
}

int cmd_denoise(const Globals& g, const DenoiseArgs& a, const CLI::App& sub, std::ostream& out) {
  require(fs::is_regular_file(a.checkpoint), "--checkpoint not found: " + a.checkpoint.string());
  require(fs::exists(a.in), "--in not found: " + a.in.string());
  const auto model = open_denoiser(a.checkpoint);
  if (fs::is_directory(a.in)) {
    const auto files = mixgen::list_wavs(a.in);
    ensure_dir(a.out);
    for (const auto& f : files) {
      const auto dst = a.out / fs::relative(f, a.in);
      ensure_dir(dst.parent_path());
      audio::write_wav(model.run(audio::read_wav(f)), dst);
    }
    write_run_metadata(a.out / "run.json", "denoise", g, sub, {{"files", files.size()}});
    out << fmt::format("denoised {} files into {}\n", files.size(), a.out.string());
  } else {
    fs::path dst = a.out;
    if (fs::is_directory(dst)) dst /= a.in.filename();
    if (!dst.parent_path().empty()) ensure_dir(dst.parent_path());
    audio::write_wav(model.run(audio::read_wav(a.in)), dst);
    write_run_metadata(fs::path(dst.string() + ".run.json"), "denoise", g, sub, {{"files", 1}});
    out << "wrote " << dst.string() << '\n';
  }
  return kExitOk;
}

std::string condition_name(const std::string& mode, const std::string& fallback) {
  if (mode == "n2c") return "N2C";
  if (mode == "n2n") return "N2N";
  return fallback;
}

int cmd_eval(const Globals& g, const EvalArgs& a, const CLI::App& sub, std::ostream& out) {
  require(fs::is_regular_file(a.manifest), "--manifest not found: " + a.manifest.string());
  for (const auto* p : {&a.checkpoint, &a.n2c, &a.n2n, &a.pesq_csv}) {
    require(p->empty() || fs::is_regular_file(*p), "file not found: " + p->string());
  }
  const auto manifest = mixgen::read_manifest(a.manifest);
  for (const auto& r : manifest.records) {
    require(r.mode == mixgen::Mode::kTest, "eval needs a test manifest; record " + r.pair_id + " has mode " +
                                               mixgen::to_string(r.mode));
  }
  ensure_dir(a.out);

  metrics::MetricReport report;
  report.conditions.push_back(metrics::evaluate_testset(manifest, "Baseline"));
  std::set<std::string> names{"Baseline"};
  auto add_model = [&](const fs::path& ckpt, const std::string& name) {
    if (ckpt.empty()) return;
    const auto model = open_denoiser(ckpt);
    std::string label = name.empty() ? condition_name(model.mode, "Model") : name;
    if (names.count(label)) label += "#" + std::to_string(names.size());
    names.insert(label);
    report.conditions.push_back(metrics::evaluate_testset(manifest, label, model.run));
  };
  add_model(a.n2c, "N2C");
  add_model(a.n2n, "N2N");
  add_model(a.checkpoint, "");
  if (!a.pesq_csv.empty()) report.import_pesq_csv(a.pesq_csv, a.pesq_condition);

  write_text(a.out / "report.json", report.to_json().dump(2) + "\n");
  write_text(a.out / "report.csv", report.to_csv());
  const auto table = report.to_table();
  write_text(a.out / "table.txt", table);
  write_run_metadata(a.out / "run.json", "eval", g, sub);
  out << table;
  return kExitOk;
}

// ---------------------------------------------------------------------------
// report

int cmd_report(const Globals& g, const ReportArgs& a, const CLI::App& sub, std::ostream& out) {
  for (const auto& p : a.reports) require(fs::is_regular_file(p), "report not found: " + p.string());
  std::vector<metrics::MetricReport> reports;
  for (const auto& p : a.reports) reports.push_back(metrics::MetricReport::from_json(read_json(p)));

  static const std::vector<std::string> kMetrics = {"snr_db", "ssnr_db", "stoi", "pesq_nb", "pesq_wb"};
  struct Row {
    std::size_t report;
    std::string condition, category, metric;
    metrics::Aggregate agg;
    std::optional<double> delta;
  };
  std::vector<Row> rows;
  std::map<std::tuple<std::string, std::string, std::string>, double> first;
  for (std::size_t r = 0; r < reports.size(); ++r) {
    for (const auto& c : reports[r].conditions) {
      std::vector<std::string> groups{""};
      for (const auto& cat : c.categories()) groups.push_back(cat);
      for (const auto& cat : groups) {
        for (const auto& m : kMetrics) {
          const auto agg = c.summary(m, cat);
          if (!agg) continue;
          Row row{r, c.name, cat.empty() ? "all" : cat, m, *agg, std::nullopt};
          const auto key = std::make_tuple(row.condition, row.category, m);
          if (r == 0) {
            first[key] = agg->mean;
          } else if (auto it = first.find(key); it != first.end()) {
            row.delta = agg->mean - it->second;
          }
          rows.push_back(row);
        }
      }
    }
  }

  std::ostringstream s;
  if (a.format == "json") {
    json j = {{"reports", json::array()}, {"rows", json::array()}};
    for (const auto& p : a.reports) j["reports"].push_back(p.string());
    for (const auto& r : rows) {
      j["rows"].push_back({{"report", r.report},
                           {"condition", r.condition},
                           {"category", r.category},
                           {"metric", r.metric},
                           {"mean", r.agg.mean},
                           {"std", r.agg.std},
                           {"count", r.agg.count},
                           {"delta_mean_vs_first", r.delta ? json(*r.delta) : json()}});
    }
    s << j.dump(2) << '\n';
  } else if (a.format == "plotdata") {
    s << "report,condition,category,pair_id,metric,value\n";
    for (std::size_t r = 0; r < reports.size(); ++r) {
      for (const auto& c : reports[r].conditions) {
        for (const auto& f : c.rows) {
          const std::vector<std::pair<std::string, std::optional<double>>> vals = {
              {"snr_db", f.snr_db}, {"ssnr_db", f.ssnr_db}, {"stoi", f.stoi}, {"pesq_nb", f.pesq_nb},
              {"pesq_wb", f.pesq_wb}};
          for (const auto& [m, v] : vals) {
            if (v) s << fmt::format("{},{},{},{},{},{:.17g}\n", r, c.name, f.category, f.pair_id, m, *v);
          }
        }
      }
    }
  } else {
    s << "report,condition,category,metric,mean,std,count,delta_mean_vs_first\n";
    for (const auto& r : rows) {
      s << fmt::format("{},{},{},{},{:.17g},{:.17g},{},{}\n", r.report, r.condition, r.category, r.metric,
                       r.agg.mean, r.agg.std, r.agg.count, r.delta ? fmt::format("{:.17g}", *r.delta) : "");
    }
  }
  if (a.out.empty()) {
    out << s.str();
  } else {
    if (!a.out.parent_path().empty()) ensure_dir(a.out.parent_path());
    write_text(a.out, s.str());
    write_run_metadata(fs::path(a.out.string() + ".run.json"), "report", g, sub);
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Speech denoising with complex U-Nets trained on noisy or clean targets", "n2n"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand
  app.set_version_flag("--version", kVersion);

  Globals g;
  app.add_option("--seed", g.seed, "Base seed for every random stream")->capture_default_str();
  app.add_option("--precision", g.precision, "Float width for training: 32 or 64")
      ->check(CLI::IsMember({32, 64}))
      ->capture_default_str();
  app.add_option("--sample-rate", g.sample_rate, "Working sample rate in Hz")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--config", g.config, "JSON file supplying option values not given on the command line");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Write synthetic voiced clips for pipeline tests");
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--count", sa.count, "Number of clips")->capture_default_str();
  synth->add_option("--seconds", sa.seconds, "Clip duration")->capture_default_str();

  MixArgs ma;
  auto* mix = app.add_subcommand("mix", "Mix clean speech with noise into a dataset");
  mix->add_option("--clean-dir", ma.clean_dir, "Directory of clean .wav files")->required();
  auto* noise_opt = mix->add_option("--noise-dir", ma.noise_dir, "Noise directory (category subdirectories)");
  auto* white_opt = mix->add_flag("--white", ma.white, "Use synthetic white noise as the only category");
  noise_opt->excludes(white_opt);
  mix->add_option("--mode", ma.mode, "n2n, n2c, test, mixed or white")
      ->check(CLI::IsMember({"n2n", "n2c", "test", "mixed", "white"}))
      ->capture_default_str();
  mix->add_option("--category", ma.category, "Input noise category or 'random'")->capture_default_str();
  mix->add_option("--count", ma.count, "Number of pairs")->required();
  mix->add_option("--out", ma.out, "Output directory")->required();
  mix->add_option("--encoding", ma.encoding, "float32 or pcm16")
      ->check(CLI::IsMember({"float32", "pcm16"}))
      ->capture_default_str();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model on a manifest");
  train->add_option("--manifest", ta.manifest, "Training manifest (manifest.jsonl)")->required();
  train->add_option("--arch", ta.arch, "desk, dcunet20 or a JSON architecture file")->capture_default_str();
  train->add_option("--mode", ta.mode, "n2n or n2c (default: the manifest's mode)")
      ->check(CLI::IsMember({"n2n", "n2c"}));
  train->add_option("--epochs", ta.epochs, "Training epochs")->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--batch-size", ta.batch_size, "Clips per step")->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--lr", ta.lr, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--max-steps", ta.max_steps, "Stop after this many steps (0 = no limit)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  train->add_option("--crop", ta.crop, "Training crop length in samples")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train->add_option("--checkpoint-every", ta.checkpoint_every, "Save checkpoint.ckpt every N steps")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  train->add_option("--fft-size", ta.fft_size, "Override the STFT size")->check(CLI::PositiveNumber);
  train->add_option("--hop", ta.hop, "Override the STFT hop")->check(CLI::PositiveNumber);
  train->add_option("--resume", ta.resume, "Continue from a training checkpoint");
  train->add_option("--log-every", ta.log_every, "Progress line every N steps (0 = silent)")->capture_default_str();
  train->add_option("--out", ta.out, "Output directory")->required();

  DenoiseArgs da;
  auto* denoise = app.add_subcommand("denoise", "Denoise a file or a directory of files");
  denoise->add_option("--checkpoint", da.checkpoint, "Model checkpoint")->required();
  denoise->add_option("--in", da.in, "Input .wav file or directory")->required();
  denoise->add_option("--out", da.out, "Output file or directory")->required();

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Score a test manifest: Baseline and optional models");
  eval->add_option("--manifest", ea.manifest, "Test manifest")->required();
  eval->add_option("--checkpoint", ea.checkpoint, "Model checkpoint (condition named from its training mode)");
  eval->add_option("--n2c", ea.n2c, "Checkpoint scored as N2C");
  eval->add_option("--n2n", ea.n2n, "Checkpoint scored as N2N");
  eval->add_option("--pesq-csv", ea.pesq_csv, "External PESQ scores: pair_id,pesq_nb,pesq_wb");
  eval->add_option("--pesq-condition", ea.pesq_condition, "Condition for PESQ rows without a condition column")
      ->capture_default_str();
  eval->add_option("--out", ea.out, "Output directory")->required();

  ReportArgs ra;
  auto* report = app.add_subcommand("report", "Compare metric reports or emit distribution data");
  report->add_option("--reports", ra.reports, "report.json files")->required()->expected(1, -1);
  report->add_option("--format", ra.format, "csv, json or plotdata")
      ->check(CLI::IsMember({"csv", "json", "plotdata"}))
      ->capture_default_str();
  report->add_option("--out", ra.out, "Output file (default: stdout)");

  try {
    std::vector<std::string> args(argv, argv + argc);
    if (args.empty()) args.push_back("n2n");
    args = apply_config(app, args);
    std::vector<const char*> cargs;
    for (const auto& s : args) cargs.push_back(s.c_str());
    app.parse(static_cast<int>(cargs.size()), cargs.data());

    if (*synth) return cmd_synth(g, sa, *synth, out);
    if (*mix) return cmd_mix(g, ma, *mix, out);
    if (*train) return cmd_train(g, ta, *train, out, err);
    if (*denoise) return cmd_denoise(g, da, *denoise, out);
    if (*eval) return cmd_eval(g, ea, *eval, out);
    if (*report) return cmd_report(g, ra, *report, out);
    return kExitUsage;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kExitOk;
    }
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int run_cli(int argc, const char* const* argv) { return run_cli(argc, argv, std::cout, std::cerr); }

}  // namespace n2n::cli
