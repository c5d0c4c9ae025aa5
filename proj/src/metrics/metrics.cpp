// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The n2n-denoise Authors

#include "n2n/metrics.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "n2n/error.h"

namespace n2n::metrics {

namespace {

void require_pair(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw ConfigError(std::string(what) + ": clean and estimate lengths differ (" + std::to_string(a) + " vs " +
                      std::to_string(b) + ")");
  }
  if (a == 0) throw ConfigError(std::string(what) + ": empty signal");
}

}  // namespace

double snr_metric(std::span<const double> clean, std::span<const double> estimate) {
  require_pair(clean.size(), estimate.size(), "snr_metric");
  double sig = 0.0, err = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    sig += clean[i] * clean[i];
    err += (clean[i] - estimate[i]) * (clean[i] - estimate[i]);
  }
  if (!(sig > 0.0)) throw ConfigError("snr_metric: clean signal is silent");
  if (err == 0.0) return kSnrCapDb;
  return std::min(kSnrCapDb, 10.0 * std::log10(sig / err));
}

double snr_metric(const Waveform& clean, const Waveform& estimate) {
  return snr_metric(clean.samples, estimate.samples);
}

double ssnr_metric(const Waveform& clean, const Waveform& estimate, const SsnrOptions& o) {
  require_pair(clean.size(), estimate.size(), "ssnr_metric");
  if (!(o.floor_db < o.ceil_db)) throw ConfigError("ssnr_metric: floor must be below ceil");
  const auto frame = static_cast<std::size_t>(std::llround(o.frame_ms * 1e-3 * clean.sample_rate));
  const auto hop = static_cast<std::size_t>(std::llround(o.hop_ms * 1e-3 * clean.sample_rate));
  if (frame == 0 || hop == 0) throw ConfigError("ssnr_metric: frame and hop must be at least one sample");
  if (clean.size() < frame) {
    throw ConfigError("ssnr_metric: signal shorter than one " + std::to_string(frame) + "-sample frame");
  }
  double total = 0.0, any = 0.0;
  std::size_t frames = 0;
  for (std::size_t start = 0; start + frame <= clean.size(); start += hop) {
    double sig = 0.0, err = 0.0;
    for (std::size_t i = start; i < start + frame; ++i) {
      const double c = clean.samples[i], e = c - estimate.samples[i];
      sig += c * c;
      err += e * e;
    }
    any += sig;
    double v;
    if (err == 0.0) {
      v = o.ceil_db;
    } else if (sig == 0.0) {
      v = o.floor_db;
    } else {
      v = std::clamp(10.0 * std::log10(sig / err), o.floor_db, o.ceil_db);
    }
    total += v;
    ++frames;
  }
  if (!(any > 0.0)) throw ConfigError("ssnr_metric: clean signal is silent");
  return total / static_cast<double>(frames);
}

// ---------------------------------------------------------------------------
// STOI

namespace {

constexpr int kStoiRate = 10000;
constexpr int kFrame = 256;
constexpr int kHop = kFrame / 2;
constexpr int kNfft = 512;
constexpr int kBins = kNfft / 2 + 1;
constexpr int kBands = 15;
constexpr double kMinFreq = 150.0;
constexpr int kSegment = 30;
constexpr double kBeta = -15.0;
constexpr double kDynRange = 40.0;
constexpr double kEps = std::numeric_limits<double>::epsilon();

// hanning(n + 2)[1:-1]
std::vector<double> stoi_window() {
  std::vector<double> w(kFrame);
  for (int n = 0; n < kFrame; ++n) w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (n + 1) / (kFrame + 1));
  return w;
}

struct BandMatrix {
  std::array<int, kBands> lo{}, hi{};  // [lo, hi) bin ranges
};

BandMatrix third_octave_bands() {
  BandMatrix m;
  auto nearest = [](double f) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int k = 0; k < kBins; ++k) {
      const double fk = static_cast<double>(k) * kStoiRate / kNfft;
      const double d = (fk - f) * (fk - f);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    return best;
  };
  for (int i = 0; i < kBands; ++i) {
    m.lo[i] = nearest(kMinFreq * std::pow(2.0, (2.0 * i - 1.0) / 6.0));
    m.hi[i] = nearest(kMinFreq * std::pow(2.0, (2.0 * i + 1.0) / 6.0));
  }
  return m;
}

// Frame starts used throughout: range(0, len - kFrame, kHop).
std::size_t frame_count(std::size_t len) {
  return len > static_cast<std::size_t>(kFrame) ? (len - kFrame + kHop - 1) / kHop : 0;
}

void remove_silent_frames(std::vector<double>& x, std::vector<double>& y, const std::vector<double>& w) {
  const std::size_t frames = frame_count(x.size());
  if (frames == 0) throw ConfigError("stoi: signal shorter than one analysis frame");
  std::vector<double> energy(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double s = 0.0;
    for (int n = 0; n < kFrame; ++n) {
      const double v = w[n] * x[f * kHop + n];
      s += v * v;
    }
    energy[f] = 20.0 * std::log10(std::sqrt(s) + kEps);
  }
  const double top = *std::max_element(energy.begin(), energy.end());
  std::vector<std::size_t> keep;
  for (std::size_t f = 0; f < frames; ++f) {
    if (top - kDynRange - energy[f] < 0.0) keep.push_back(f);
  }
  const std::size_t out_len = (keep.size() - 1) * kHop + kFrame;
  std::vector<double> xs(out_len, 0.0), ys(out_len, 0.0);
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const std::size_t src = keep[k] * kHop, dst = k * kHop;
    for (int n = 0; n < kFrame; ++n) {
      xs[dst + n] += w[n] * x[src + n];
      ys[dst + n] += w[n] * y[src + n];
    }
  }
  x = std::move(xs);
  y = std::move(ys);
}

struct DftTable {
  std::vector<double> c, s;  // [kBins][kFrame]
  DftTable() : c(static_cast<std::size_t>(kBins) * kFrame), s(c.size()) {
    for (int k = 0; k < kBins; ++k) {
      for (int n = 0; n < kFrame; ++n) {
        // Reduce k*n mod kNfft first so the angle stays exact.
        const double a = 2.0 * std::numbers::pi * static_cast<double>((k * n) % kNfft) / kNfft;
        c[k * kFrame + n] = std::cos(a);
        s[k * kFrame + n] = std::sin(a);
      }
    }
  }
};

// Third-octave band magnitudes, [band][frame].
std::vector<std::vector<double>> band_envelopes(const std::vector<double>& x, const std::vector<double>& w,
                                                const BandMatrix& bands) {
  static const DftTable table;
  const std::size_t frames = frame_count(x.size());
  std::vector<std::vector<double>> out(kBands, std::vector<double>(frames, 0.0));
  std::vector<double> power(kBins), frame(kFrame);
  for (std::size_t f = 0; f < frames; ++f) {
    for (int n = 0; n < kFrame; ++n) frame[n] = w[n] * x[f * kHop + n];
    for (int k = 0; k < kBins; ++k) {
      double re = 0.0, im = 0.0;
      const double* ck = &table.c[static_cast<std::size_t>(k) * kFrame];
      const double* sk = &table.s[static_cast<std::size_t>(k) * kFrame];
      for (int n = 0; n < kFrame; ++n) {
        re += frame[n] * ck[n];
        im -= frame[n] * sk[n];
      }
      power[k] = re * re + im * im;
    }
    for (int b = 0; b < kBands; ++b) {
      double s = 0.0;
      for (int k = bands.lo[b]; k < bands.hi[b]; ++k) s += power[k];
      out[b][f] = std::sqrt(s);
    }
  }
  return out;
}

double norm(const double* v, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += v[i] * v[i];
  return std::sqrt(s);
}

}  // namespace

double stoi_metric(std::span<const double> clean, std::span<const double> estimate, int sample_rate) {
  require_pair(clean.size(), estimate.size(), "stoi");
  if (sample_rate <= 0) throw ConfigError("stoi: sample rate must be positive");
  if (std::all_of(clean.begin(), clean.end(), [](double v) { return v == 0.0; })) {
    throw ConfigError("stoi: clean signal is silent");
  }
  Waveform x{{clean.begin(), clean.end()}, sample_rate};
  Waveform y{{estimate.begin(), estimate.end()}, sample_rate};
  if (sample_rate != kStoiRate) {
    x = audio::resample_polyphase(x, kStoiRate);
    y = audio::resample_polyphase(y, kStoiRate);
  }
  static const auto window = stoi_window();
  static const auto bands = third_octave_bands();
  remove_silent_frames(x.samples, y.samples, window);

  const auto xt = band_envelopes(x.samples, window, bands);
  const auto yt = band_envelopes(y.samples, window, bands);
  const std::size_t frames = xt[0].size();
  if (frames < static_cast<std::size_t>(kSegment)) {
    throw ConfigError("stoi: only " + std::to_string(frames) + " frames remain after silence removal, need " +
                      std::to_string(kSegment));
  }

  const double clip = std::pow(10.0, -kBeta / 20.0);
  const std::size_t segments = frames - kSegment + 1;
  double total = 0.0;
  std::array<double, kSegment> xs{}, ys{};
  for (std::size_t m = 0; m < segments; ++m) {
    for (int b = 0; b < kBands; ++b) {
      std::copy_n(xt[b].begin() + static_cast<std::ptrdiff_t>(m), kSegment, xs.begin());
      std::copy_n(yt[b].begin() + static_cast<std::ptrdiff_t>(m), kSegment, ys.begin());
      const double alpha = norm(xs.data(), kSegment) / (norm(ys.data(), kSegment) + kEps);
      double mx = 0.0, my = 0.0;
      for (int n = 0; n < kSegment; ++n) {
        ys[n] = std::min(ys[n] * alpha, xs[n] * (1.0 + clip));
        mx += xs[n];
        my += ys[n];
      }
      mx /= kSegment;
      my /= kSegment;
      for (int n = 0; n < kSegment; ++n) {
        xs[n] -= mx;
        ys[n] -= my;
      }
      const double nx = norm(xs.data(), kSegment) + kEps, ny = norm(ys.data(), kSegment) + kEps;
      double c = 0.0;
      for (int n = 0; n < kSegment; ++n) c += (xs[n] / nx) * (ys[n] / ny);
      total += c;
    }
  }
  return total / static_cast<double>(segments * kBands);
}

double stoi_metric(const Waveform& clean, const Waveform& estimate) {
  if (clean.sample_rate != estimate.sample_rate) throw ConfigError("stoi: sample rates differ");
  return stoi_metric(clean.samples, estimate.samples, clean.sample_rate);
}

// ---------------------------------------------------------------------------
// Reports

Aggregate aggregate(std::span<const double> values) {
  Aggregate a;
  a.count = values.size();
  if (values.empty()) return a;
  for (double v : values) a.mean += v;
  a.mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - a.mean) * (v - a.mean);
  a.std = std::sqrt(ss / static_cast<double>(values.size()));
  return a;
}

namespace {

const std::vector<std::string> kMetricKeys = {"snr_db", "ssnr_db", "stoi", "pesq_nb", "pesq_wb"};

std::optional<double> metric_value(const FileMetrics& r, const std::string& key) {
  if (key == "snr_db") return r.snr_db;
  if (key == "ssnr_db") return r.ssnr_db;
  if (key == "stoi") return r.stoi;
  if (key == "pesq_nb") return r.pesq_nb;
  if (key == "pesq_wb") return r.pesq_wb;
  throw ConfigError("unknown metric '" + key + "'");
}

nlohmann::json aggregate_json(const Aggregate& a) { return {{"mean", a.mean}, {"std", a.std}, {"count", a.count}}; }

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

std::optional<double> optional_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

std::optional<Aggregate> ConditionResult::summary(const std::string& metric, const std::string& category) const {
  std::vector<double> v;
  for (const auto& r : rows) {
    if (!category.empty() && r.category != category) continue;
    if (auto x = metric_value(r, metric)) v.push_back(*x);
  }
  if (v.empty()) return std::nullopt;
  return aggregate(v);
}

std::vector<std::string> ConditionResult::categories() const {
  std::set<std::string> s;
  for (const auto& r : rows) s.insert(r.category);
  return {s.begin(), s.end()};
}

ConditionResult* MetricReport::find(const std::string& name) {
  for (auto& c : conditions) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

const ConditionResult* MetricReport::find(const std::string& name) const {
  return const_cast<MetricReport*>(this)->find(name);
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json conds = nlohmann::json::array();
  for (const auto& c : conditions) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : c.rows) {
      rows.push_back({{"pair_id", r.pair_id},
                      {"category", r.category},
                      {"snr_db", r.snr_db},
                      {"ssnr_db", r.ssnr_db},
                      {"stoi", r.stoi},
                      {"pesq_nb", optional_json(r.pesq_nb)},
                      {"pesq_wb", optional_json(r.pesq_wb)}});
    }
    nlohmann::json agg;
    std::vector<std::string> groups{""};
    for (const auto& cat : c.categories()) groups.push_back(cat);
    for (const auto& g : groups) {
      nlohmann::json per;
      for (const auto& key : kMetricKeys) {
        if (auto a = c.summary(key, g)) per[key] = aggregate_json(*a);
      }
      agg[g.empty() ? "all" : "category:" + g] = per;
    }
    conds.push_back({{"name", c.name}, {"rows", rows}, {"aggregates", agg}});
  }
  return {{"conditions", conds}};
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport rep;
  try {
    for (const auto& c : j.at("conditions")) {
      ConditionResult cr;
      cr.name = c.at("name").get<std::string>();
      for (const auto& r : c.at("rows")) {
        FileMetrics f;
        f.pair_id = r.at("pair_id").get<std::string>();
        f.category = r.at("category").get<std::string>();
        f.snr_db = r.at("snr_db").get<double>();
        f.ssnr_db = r.at("ssnr_db").get<double>();
        f.stoi = r.at("stoi").get<double>();
        f.pesq_nb = optional_from(r, "pesq_nb");
        f.pesq_wb = optional_from(r, "pesq_wb");
        cr.rows.push_back(std::move(f));
      }
      rep.conditions.push_back(std::move(cr));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("metric report: ") + e.what());
  }
  return rep;
}

bool aggregates_consistent(const nlohmann::json& j, double tol) {
  const auto rep = MetricReport::from_json(j);
  const auto again = rep.to_json();
  for (std::size_t i = 0; i < rep.conditions.size(); ++i) {
    const auto& stored = j.at("conditions")[i].at("aggregates");
    const auto& fresh = again.at("conditions")[i].at("aggregates");
    if (stored.size() != fresh.size()) return false;
    for (const auto& [group, per] : fresh.items()) {
      if (!stored.contains(group)) return false;
      for (const auto& [key, a] : per.items()) {
        if (!stored[group].contains(key)) return false;
        const auto& s = stored[group][key];
        if (s.at("count") != a.at("count")) return false;
        if (std::abs(s.at("mean").get<double>() - a.at("mean").get<double>()) > tol) return false;
        if (std::abs(s.at("std").get<double>() - a.at("std").get<double>()) > tol) return false;
      }
    }
  }
  return true;
}

std::string MetricReport::to_csv() const {
  std::ostringstream out;
  out << "condition,pair_id,category,snr_db,ssnr_db,stoi,pesq_nb,pesq_wb\n";
  auto opt = [](const std::optional<double>& v) { return v ? fmt::format("{:.17g}", *v) : std::string(); };
  for (const auto& c : conditions) {
    for (const auto& r : c.rows) {
      out << fmt::format("{},{},{},{:.17g},{:.17g},{:.17g},{},{}\n", c.name, r.pair_id, r.category, r.snr_db,
                         r.ssnr_db, r.stoi, opt(r.pesq_nb), opt(r.pesq_wb));
    }
  }
  return out.str();
}

std::string MetricReport::to_table() const {
  std::set<std::string> cats;
  for (const auto& c : conditions) {
    for (const auto& cat : c.categories()) cats.insert(cat);
  }
  std::vector<std::string> groups(cats.begin(), cats.end());
  if (groups.size() != 1) groups.push_back("");
  const std::vector<std::pair<std::string, std::string>> cols = {
      {"snr_db", "SNR"}, {"ssnr_db", "SSNR"}, {"stoi", "STOI"}, {"pesq_nb", "PESQ-NB"}, {"pesq_wb", "PESQ-WB"}};
  std::ostringstream out;
  out << fmt::format("{:<18} {:<10}", "Noise", "Condition");
  for (const auto& [k, label] : cols) out << fmt::format(" {:>18}", label);
  out << '\n';
  for (const auto& g : groups) {
    for (const auto& c : conditions) {
      out << fmt::format("{:<18} {:<10}", g.empty() ? "all" : g, c.name);
      for (const auto& [k, label] : cols) {
        const auto a = c.summary(k, g);
        out << fmt::format(" {:>18}", a ? fmt::format("{:.{}f} ± {:.{}f}", a->mean, 3, a->std, 3) : "-");
      }
      out << '\n';
    }
  }
  return out.str();
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::optional<double> parse_cell(const std::string& s, const std::string& where) {
  if (s.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError(where + ": not a number: '" + s + "'");
  }
}

}  // namespace

void MetricReport::import_pesq_csv(const std::filesystem::path& path, const std::string& default_condition) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open PESQ CSV " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
  const auto header = split_csv(line);
  auto col = [&](const std::string& name) -> int {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  };
  const int c_id = col("pair_id"), c_nb = col("pesq_nb"), c_wb = col("pesq_wb"), c_cond = col("condition");
  if (c_id < 0 || (c_nb < 0 && c_wb < 0)) {
    throw FormatError(path.string() + ": header must contain pair_id and pesq_nb and/or pesq_wb");
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (cells.size() < header.size()) throw FormatError(where + ": too few columns");
    const std::string cond = c_cond >= 0 ? cells[c_cond] : default_condition;
    auto* cr = find(cond);
    if (!cr) throw ConfigError(where + ": no condition named '" + cond + "' in report");
    auto it = std::find_if(cr->rows.begin(), cr->rows.end(), [&](const auto& r) { return r.pair_id == cells[c_id]; });
    if (it == cr->rows.end()) throw ConfigError(where + ": unknown pair_id '" + cells[c_id] + "'");
    if (c_nb >= 0) it->pesq_nb = parse_cell(cells[c_nb], where);
    if (c_wb >= 0) it->pesq_wb = parse_cell(cells[c_wb], where);
  }
}

ConditionResult evaluate_testset(const mixgen::DatasetManifest& manifest, const std::string& condition,
                                 const Enhancer& enhancer) {
  ConditionResult out;
  out.name = condition;
  for (const auto& rec : manifest.records) {
    if (rec.mode != mixgen::Mode::kTest) {
      throw ConfigError("evaluate_testset: record " + rec.pair_id + " has mode " + mixgen::to_string(rec.mode) +
                        ", expected test");
    }
    for (const auto* p : {&rec.input_path, &rec.clean_path}) {
      if (!std::filesystem::exists(*p)) throw IoError("missing file " + p->string());
    }
    const auto clean = audio::read_wav(rec.clean_path);
    const auto noisy = audio::read_wav(rec.input_path);
    const auto est = enhancer ? enhancer(noisy) : noisy;
    if (est.size() != clean.size()) {
      throw Error("evaluate_testset: enhancer changed the length of " + rec.pair_id);
    }
    FileMetrics m;
    m.pair_id = rec.pair_id;
    m.category = rec.input_category;
    m.snr_db = snr_metric(clean, est);
    m.ssnr_db = ssnr_metric(clean, est);
    m.stoi = stoi_metric(clean, est);
    out.rows.push_back(std::move(m));
  }
  std::sort(out.rows.begin(), out.rows.end(), [](const auto& a, const auto& b) { return a.pair_id < b.pair_id; });
  return out;
}

}  // namespace n2n::metrics
