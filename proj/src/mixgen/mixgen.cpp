// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The n2n-denoise Authors

#include "n2n/mixgen.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <regex>

#include "n2n/error.h"

namespace n2n::mixgen {

namespace fs = std::filesystem;

Mode parse_mode(const std::string& s) {
  if (s == "n2n") return Mode::kN2N;
  if (s == "n2c") return Mode::kN2C;
  if (s == "test") return Mode::kTest;
  throw ConfigError("unknown mode '" + s + "' (expected n2n, n2c or test)");
}

std::string to_string(Mode m) {
  switch (m) {
    case Mode::kN2N: return "n2n";
    case Mode::kN2C: return "n2c";
    case Mode::kTest: return "test";
  }
  return "?";
}

std::string urbansound_class_name(int class_id) {
  static const std::array<const char*, 10> kNames = {
      "air_conditioner", "car_horn", "children_playing", "dog_bark",    "drilling",
      "engine_idling",   "gun_shot", "jackhammer",       "siren",       "street_music"};
  if (class_id < 0 || class_id >= static_cast<int>(kNames.size())) {
    throw ConfigError("UrbanSound8K class id out of range: " + std::to_string(class_id));
  }
  return kNames[static_cast<std::size_t>(class_id)];
}

std::vector<fs::path> list_wavs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".wav") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

NoiseBank NoiseBank::scan(const fs::path& dir) {
  static const std::regex kUrban(R"((\d+)-(\d+)-(\d+)-(\d+)\.wav)", std::regex::icase);
  NoiseBank bank;
  for (const auto& file : list_wavs(dir)) {
    std::smatch m;
    const std::string name = file.filename().string();
    if (std::regex_match(name, m, kUrban)) {
      bank.add(urbansound_class_name(std::stoi(m[2].str())), file);
      continue;
    }
    const auto rel = fs::relative(file, dir);
    if (std::distance(rel.begin(), rel.end()) < 2) {
      throw ConfigError("noise file " + file.string() +
                        " is not in a category subdirectory and has no UrbanSound8K name");
    }
    bank.add(rel.begin()->string(), file);
  }
  if (bank.size() == 0) throw ConfigError("no noise files found under " + dir.string());
  return bank;
}

NoiseBank NoiseBank::white_only() {
  NoiseBank b;
  b.add_white();
  return b;
}

void NoiseBank::add(const std::string& category, const fs::path& file) {
  if (category.empty() || category == kWhite || category == kClean || category == kRandom) {
    throw ConfigError("reserved or empty noise category name '" + category + "'");
  }
  files_[category].push_back(file);
}

void NoiseBank::add_white() { white_ = true; }

std::vector<std::string> NoiseBank::categories() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : files_) out.push_back(k);
  if (white_) out.push_back(kWhite);
  std::sort(out.begin(), out.end());
  return out;
}

bool NoiseBank::has(const std::string& category) const {
  return category == kWhite ? white_ : files_.count(category) > 0;
}

void NoiseBank::validate() const {
  if (size() == 0) throw ConfigError("noise bank is empty");
  for (const auto& [k, v] : files_) {
    if (v.empty()) throw ConfigError("noise category '" + k + "' has no files");
  }
}

const Waveform& NoiseBank::load(const fs::path& file, int sample_rate) {
  const auto key = std::make_pair(file.string(), sample_rate);
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  Waveform w = audio::read_wav(file);
  if (w.empty()) throw FormatError("noise file " + file.string() + " has no samples");
  if (w.sample_rate != sample_rate) w = audio::resample_polyphase(w, sample_rate);
  return cache_.emplace(key, std::move(w)).first->second;
}

std::vector<double> NoiseBank::draw(const std::string& category, std::size_t length, int sample_rate, Rng& rng) {
  if (category == kWhite) {
    if (!white_) throw ConfigError("noise bank has no white category");
    std::vector<double> out(length);
    for (auto& v : out) v = rng.normal();
    return out;
  }
  auto it = files_.find(category);
  if (it == files_.end() || it->second.empty()) throw ConfigError("unknown noise category '" + category + "'");
  const auto& file = it->second[rng.index(it->second.size())];
  return overlay_repeat(load(file, sample_rate).samples, length);
}

namespace {

double power_sum(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

}  // namespace

double compute_snr_db(std::span<const double> signal, std::span<const double> noise) {
  if (signal.size() != noise.size()) throw ConfigError("compute_snr_db: length mismatch");
  const double pn = power_sum(noise);
  if (!(pn > 0.0)) throw ConfigError("compute_snr_db: noise has zero power");
  return 10.0 * std::log10(power_sum(signal) / pn);
}

double compute_snr_db(const Waveform& signal, const Waveform& noise) {
  return compute_snr_db(signal.samples, noise.samples);
}

std::vector<double> scale_noise_to_snr(std::span<const double> clean, std::span<const double> noise,
                                       double target_db) {
  if (clean.size() != noise.size()) throw ConfigError("scale_noise_to_snr: length mismatch");
  if (!std::isfinite(target_db)) throw ConfigError("scale_noise_to_snr: target SNR must be finite");
  const double pc = power_sum(clean), pn = power_sum(noise);
  if (!(pc > 0.0)) throw ConfigError("scale_noise_to_snr: clean signal is silent");
  if (!(pn > 0.0)) throw ConfigError("scale_noise_to_snr: noise is silent");
  const double g = std::sqrt(pc / (pn * std::pow(10.0, target_db / 10.0)));
  std::vector<double> out(noise.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = g * noise[i];
  return out;
}

Waveform scale_noise_to_snr(const Waveform& clean, const Waveform& noise, double target_db) {
  return {scale_noise_to_snr(clean.samples, noise.samples, target_db), clean.sample_rate};
}

std::vector<double> overlay_repeat(std::span<const double> noise, std::size_t length) {
  if (noise.empty()) throw ConfigError("overlay_repeat: noise is empty");
  std::vector<double> out(length);
  for (std::size_t i = 0; i < length; ++i) out[i] = noise[i % noise.size()];
  return out;
}

Waveform overlay_repeat(const Waveform& clean, const Waveform& noise) {
  return {overlay_repeat(noise.samples, clean.size()), clean.sample_rate};
}

namespace {

// Stream ids under a pair seed.
enum Stream : std::uint64_t { kInputPick = 1, kInputNoise, kInputSnr, kTargetPick, kTargetNoise, kTargetSnr };

Waveform mix(const Waveform& clean, const std::vector<double>& noise, double snr_db) {
  const auto scaled = scale_noise_to_snr(clean.samples, noise, snr_db);
  Waveform out{clean.samples, clean.sample_rate};
  for (std::size_t i = 0; i < scaled.size(); ++i) out.samples[i] += scaled[i];
  return out;
}

std::string pick(const std::vector<std::string>& options, Rng& rng) { return options[rng.index(options.size())]; }

}  // namespace

TrainingPair make_pair(const Waveform& clean, NoiseBank& bank, Mode mode, const std::string& input_category,
                       std::uint64_t seed) {
  audio::validate(clean);
  if (clean.empty()) throw ConfigError("make_pair: clean clip is empty");
  bank.validate();
  const auto cats = bank.categories();
  const bool white_pair = input_category == kWhite;
  if (mode == Mode::kN2N && cats.size() < 2 && !white_pair) {
    throw ConfigError("n2n mode needs a noise bank with at least 2 categories");
  }
  if (input_category != kRandom && !bank.has(input_category)) {
    throw ConfigError("noise bank has no category '" + input_category + "'");
  }

  TrainingPair p;
  p.seed = seed;
  p.clean_ref = clean;
  {
    Rng pick_rng(derive_seed(seed, {kInputPick}));
    p.input_category = input_category == kRandom ? pick(cats, pick_rng) : input_category;
    Rng noise_rng(derive_seed(seed, {kInputNoise}));
    const auto noise = bank.draw(p.input_category, clean.size(), clean.sample_rate, noise_rng);
    Rng snr_rng(derive_seed(seed, {kInputSnr}));
    p.input_snr_db = snr_rng.uniform_closed(kMinSnrDb, kMaxSnrDb);
    p.input = mix(clean, noise, p.input_snr_db);
  }

  if (mode != Mode::kN2N) {
    p.target = clean;
    p.target_category = kClean;
    return p;
  }
  Rng pick_rng(derive_seed(seed, {kTargetPick}));
  if (p.input_category == kWhite && (white_pair || cats.size() < 2)) {
    p.target_category = kWhite;
  } else {
    std::vector<std::string> others;
    for (const auto& c : cats) {
      if (c != p.input_category) others.push_back(c);
    }
    p.target_category = pick(others, pick_rng);
  }
  Rng noise_rng(derive_seed(seed, {kTargetNoise}));
  const auto noise = bank.draw(p.target_category, clean.size(), clean.sample_rate, noise_rng);
  Rng snr_rng(derive_seed(seed, {kTargetSnr}));
  p.target_snr_db = snr_rng.uniform_closed(kMinSnrDb, kMaxSnrDb);
  p.target = mix(clean, noise, *p.target_snr_db);
  return p;
}

nlohmann::json ManifestRecord::to_json() const {
  nlohmann::json j;
  j["pair_id"] = pair_id;
  j["mode"] = to_string(mode);
  j["input_path"] = input_path.generic_string();
  j["target_path"] = target_path.generic_string();
  j["clean_path"] = clean_path.generic_string();
  j["input_category"] = input_category;
  j["target_category"] = target_category;
  j["input_snr_db"] = input_snr_db;
  j["target_snr_db"] = target_snr_db ? nlohmann::json(*target_snr_db) : nlohmann::json(nullptr);
  j["seed"] = seed;
  j["clipped"] = clipped;
  return j;
}

ManifestRecord ManifestRecord::from_json(const nlohmann::json& j) {
  ManifestRecord r;
  try {
    r.pair_id = j.at("pair_id").get<std::string>();
    r.mode = parse_mode(j.at("mode").get<std::string>());
    r.input_path = j.at("input_path").get<std::string>();
    r.target_path = j.at("target_path").get<std::string>();
    r.clean_path = j.at("clean_path").get<std::string>();
    r.input_category = j.at("input_category").get<std::string>();
    r.target_category = j.at("target_category").get<std::string>();
    r.input_snr_db = j.at("input_snr_db").get<double>();
    if (!j.at("target_snr_db").is_null()) r.target_snr_db = j.at("target_snr_db").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.clipped = j.at("clipped").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest record: ") + e.what());
  }
  return r;
}

void write_manifest(const DatasetManifest& m, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  const auto base = path.parent_path();
  for (auto r : m.records) {
    for (auto* p : {&r.input_path, &r.target_path, &r.clean_path}) {
      if (p->is_absolute()) *p = fs::relative(*p, fs::absolute(base));
    }
    out << r.to_json().dump() << '\n';
  }
  if (!out) throw IoError("failed writing manifest " + path.string());
}

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  DatasetManifest m;
  const auto base = path.parent_path();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    auto r = ManifestRecord::from_json(j);
    for (auto* p : {&r.input_path, &r.target_path, &r.clean_path}) {
      if (p->is_relative()) *p = base / *p;
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

DatasetManifest generate_dataset(const fs::path& clean_dir, NoiseBank& bank, Mode mode, std::size_t count,
                                 const fs::path& out_dir, std::uint64_t seed, const GenerateOptions& opts) {
  const auto clean_files = list_wavs(clean_dir);
  if (clean_files.empty()) throw ConfigError("no clean .wav files under " + clean_dir.string());
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());

  DatasetManifest manifest;
  if (count > 0) {
    for (const char* sub : {"input", "target", "clean"}) {
      fs::create_directories(out_dir / sub, ec);
      if (ec) throw IoError("cannot create " + (out_dir / sub).string() + ": " + ec.message());
    }
  }
  for (std::size_t i = 0; i < count; ++i) {
    const auto& src = clean_files[i % clean_files.size()];
    Waveform clean = audio::read_wav(src);
    if (opts.sample_rate > 0 && clean.sample_rate != opts.sample_rate) {
      clean = audio::resample_polyphase(clean, opts.sample_rate);
    }
    if (opts.encoding == audio::WavEncoding::kFloat32) {
      // Mix on the values the file will hold so stored SNRs are exact.
      for (auto& v : clean.samples) v = static_cast<double>(static_cast<float>(v));
    }
    const std::uint64_t pair_seed = derive_seed(seed, {static_cast<std::uint64_t>(i)});
    auto pair = make_pair(clean, bank, mode, opts.input_category, pair_seed);

    char id[32];
    std::snprintf(id, sizeof(id), "pair_%05zu", i);
    ManifestRecord r;
    r.pair_id = id;
    r.mode = mode;
    r.input_path = fs::path("input") / (r.pair_id + ".wav");
    r.target_path = fs::path("target") / (r.pair_id + ".wav");
    r.clean_path = fs::path("clean") / (r.pair_id + ".wav");
    r.input_category = pair.input_category;
    r.target_category = pair.target_category;
    r.input_snr_db = pair.input_snr_db;
    r.target_snr_db = pair.target_snr_db;
    r.seed = pair_seed;
    std::size_t clipped = audio::write_wav(pair.input, out_dir / r.input_path, opts.encoding);
    clipped += audio::write_wav(pair.target, out_dir / r.target_path, opts.encoding);
    clipped += audio::write_wav(pair.clean_ref, out_dir / r.clean_path, opts.encoding);
    r.clipped = clipped > 0;
    manifest.records.push_back(std::move(r));
  }
  write_manifest(manifest, out_dir / kManifestName);
  for (auto& r : manifest.records) {
    r.input_path = out_dir / r.input_path;
    r.target_path = out_dir / r.target_path;
    r.clean_path = out_dir / r.clean_path;
  }
  return manifest;
}

Waveform synth_speech(double seconds, int sample_rate, Rng& rng) {
  if (!(seconds > 0.0)) throw ConfigError("synth_speech: duration must be positive");
  if (sample_rate < 8000) throw ConfigError("synth_speech: sample rate must be >= 8000");
  const auto n = static_cast<std::size_t>(std::llround(seconds * sample_rate));
  if (n == 0) throw ConfigError("synth_speech: duration shorter than one sample");
  Waveform w{std::vector<double>(n, 0.0), sample_rate};
  const double fs = sample_rate;
  const double top = std::min(4000.0, 0.45 * fs);

  double phase = 0.0;
  double f0 = rng.uniform(100.0, 250.0);
  std::size_t pos = 0;
  bool first = true;
  std::vector<double> harm_phase;
  while (pos < n) {
    if (!first && rng.uniform() < 0.2) {
      pos += static_cast<std::size_t>(rng.uniform(0.05, 0.15) * fs);  // pause
      continue;
    }
    first = false;
    const auto len = std::min(n - pos, static_cast<std::size_t>(rng.uniform(0.12, 0.3) * fs));
    const double f_start = f0, f_end = rng.uniform(100.0, 250.0);
    const double f1 = rng.uniform(300.0, 800.0), f2 = rng.uniform(900.0, 2500.0);
    const double gain = rng.uniform(0.6, 1.0);
    for (std::size_t i = 0; i < len; ++i) {
      const double u = static_cast<double>(i) / static_cast<double>(len);
      const double f = f_start + (f_end - f_start) * u;
      phase += 2.0 * std::numbers::pi * f / fs;
      const double env = gain * std::pow(std::sin(std::numbers::pi * u), 0.7);
      double s = 0.0;
      for (int k = 1; k * f < top; ++k) {
        const double fk = k * f;
        const double formant = std::exp(-0.5 * std::pow((fk - f1) / 150.0, 2)) +
                                0.7 * std::exp(-0.5 * std::pow((fk - f2) / 250.0, 2)) + 0.05;
        s += formant / k * std::sin(k * phase);
      }
      w.samples[pos + i] = env * s;
    }
    f0 = f_end;
    pos += len;
  }
  double peak = 0.0;
  for (double v : w.samples) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    for (auto& v : w.samples) v *= 0.5 / peak;
  }
  return w;
}

std::vector<fs::path> write_synth_corpus(const fs::path& dir, std::size_t count, double seconds, int sample_rate,
                                         std::uint64_t seed) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<fs::path> out;
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
    char name[32];
    std::snprintf(name, sizeof(name), "clip_%05zu.wav", i);
    out.push_back(dir / name);
    audio::write_wav(synth_speech(seconds, sample_rate, rng), out.back());
  }
  return out;
}

}  // namespace n2n::mixgen
