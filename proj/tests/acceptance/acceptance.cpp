#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "roomloc/ambient_noise.hpp"
#include "roomloc/analysis.hpp"
#include "roomloc/harness.hpp"
#include "roomloc/io.hpp"
#include "roomloc/room_acoustics.hpp"
#include "roomloc/scenario.hpp"
#include "roomloc/signal_chain.hpp"

using namespace roomloc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string run_command(const std::string& cmd, int& status) {
  std::string out;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) {
    status = -1;
    return out;
  }
  std::array<char, 512> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) out += buf.data();
  status = pclose(pipe);
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("roomloc_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Scenario anechoic_floor(double fs) {
  Scenario s;
  s.max_order = 0;
  s.air.reset();
  s.noise.reset();
  s.noise_preset.reset();
  s.daq.fs_in = fs;
  s.daq.accuracy_noise = false;
  s.sync.jitter_std = 0.0;
  s.layout.kind = LayoutKind::kCorners;
  // 10 x 5 x 3 = 150 positions
  s.grid.spacing = 0.8;
  s.grid.margin = 0.3;
  s.trials = 5;
  s.seed = 2024;
  return s;
}

Outcome criterion1() {
  int status = 0;
  const std::string out = run_command(std::string("\"") + ROOMLOC_CLI_PATH + "\" calc ranging-resolution 343 1.25e6", status);
  const bool ok = status == 0 && out.find("2.744e-4") != std::string::npos;
  std::string line = out.substr(0, out.find('\n'));
  return {ok, "cli printed '" + line + "'"};
}

Outcome criterion2() {
  const double dc = critical_distance(1.0, 77.0, 1.17);
  return {std::abs(dc - 0.462) <= 0.005, "d_c = " + fmt("%.4f", dc) + " m"};
}

Outcome criterion3() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> uv(1.0, 5000.0), ua(0.1, 2000.0), uc(300.0, 360.0);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const double v = uv(rng), a = ua(rng), c = uc(rng);
    const double back = equivalent_absorption_area(v, sabine_rt60(v, a, c), c);
    worst = std::max(worst, std::abs(back / a - 1.0));
  }
  return {worst < 1e-12, "max relative error " + fmt("%.3g", worst)};
}

Outcome criterion4() {
  const RoomGeometry room;
  const auto& table = techtile_rt60_table();
  AbsorptionFitOptions opts;
  opts.positions = scattered_pairs(room, 6);
  const auto fit = fit_absorption_to_rt60(room, table.bands, table.rt60_s, opts);
  const auto held_out = scattered_pairs(room, 6, 6);
  const auto measured = mean_band_rt60(room, fit.absorption, opts.air, held_out, opts.rir);
  bool ok = true;
  std::string detail = "order " + std::to_string(opts.rir.max_order) + ", held-out:";
  for (std::size_t b = 0; b < table.bands.size(); ++b) {
    const double fc = table.bands.centers[b];
    const double rel = measured[b] / table.rt60_s[b] - 1.0;
    detail += " " + fmt("%g", fc) + "Hz " + fmt("%+.1f%%", 100 * rel);
    if (fc >= 250 && fc <= 4000) {
      const double tol = std::max(0.10, table.uncertainty_pct[b] / 100.0);
      if (!(std::abs(rel) <= tol)) ok = false;
    }
  }
  return {ok, detail};
}

Outcome criterion5() {
  const double fs = 48000;
  bool ok = true;
  std::string detail;
  for (double rt : {0.41, 0.70, 1.17}) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    ImpulseResponse rir{std::vector<double>(static_cast<std::size_t>(2.5 * rt * fs)), fs, 0.0};
    const double k = 3.0 * std::numbers::ln10 / rt;
    for (std::size_t i = 0; i < rir.samples.size(); ++i) rir.samples[i] = g(rng) * std::exp(-k * i / fs);
    const double est = rt60_from_edc(energy_decay_curve(rir)).rt60;
    const double rel = est / rt - 1.0;
    if (!(std::abs(rel) <= 0.02)) ok = false;
    detail += fmt("%.2f", rt) + "s -> " + fmt("%.4f", est) + "s (" + fmt("%+.2f%%", 100 * rel) + ") ";
  }
  return {ok, detail};
}

Outcome criterion6() {
  DaqConfig daq;
  daq.range_volts = 1.0;
  daq.bits = 16;
  const double lsb = daq.lsb();
  const double sigma = daq.accuracy_volts() / 3.0;
  const std::size_t n = 1000000;
  const auto out = quantize(Waveform{std::vector<double>(n, 0.0), daq.fs_in}, daq, 6);
  double s2 = 0;
  for (double v : out.samples) s2 += v * v;
  const double measured = std::sqrt(s2 / static_cast<double>(n));
  const bool ok = std::abs(lsb - 30.52e-6) < 0.005e-6 && std::abs(sigma - 313e-6 / 3) < 1e-12 &&
                  std::abs(measured / sigma - 1.0) <= 0.05;
  return {ok, "LSB " + fmt("%.2f", lsb * 1e6) + " uV, sigma " + fmt("%.2f", sigma * 1e6) + " uV, measured " +
                  fmt("%.2f", measured * 1e6) + " uV"};
}

Outcome criterion7() {
  bool ok = true;
  std::string detail;
  {
    const double fs = 96000, dur = 10.0;
    const auto x = synthesize_noise(techtile_preset(NoisePreset::kP1Center), fs, dur, 7);
    const auto rta = rta_band_spl(x, fs, BandSpec{{31.5, 63, 125, 250, 500, 1000, 2000, 4000, 8000}}, dur);
    const double m = rta.max_spl();
    ok &= std::abs(m - 46.2) <= 0.5;
    detail += "floor max " + fmt("%.2f", m) + " dB; ";
  }
  const double fs = 192000, dur = 2.0;
  for (auto [preset, target, label] : {std::tuple{NoisePreset::kAdapters, 40.9, "32 kHz"},
                                       std::tuple{NoisePreset::kPrinter, 33.9, "26.2 kHz"}}) {
    const auto x = synthesize_noise(techtile_preset(preset), fs, dur, 7);
    const auto rta = rta_band_spl(x, fs, BandSpec{}.with_ultrasonic(), dur);
    const double m = rta.bands.back().spl;
    ok &= std::abs(m - target) <= 0.5;
    detail += std::string(label) + " " + fmt("%.2f", m) + " dB (target " + fmt("%.1f", target) + "); ";
  }
  return {ok, detail};
}

Outcome criterion8() {
  const auto low = run_scenario(anechoic_floor(192000));
  const auto high = run_scenario(anechoic_floor(1.25e6));
  const bool enough = low.positions.size() >= 100 && low.trials.size() >= 500;
  const bool have = low.summary.has_data() && high.summary.has_data();
  const double ml = have ? *low.summary.median : NAN, mh = have ? *high.summary.median : NAN;
  const bool ok = enough && have && ml <= 0.009 && mh < ml;
  return {ok, std::to_string(low.positions.size()) + " positions x 5 trials, median " + fmt("%.3f", ml * 1e3) +
                  " mm @192k, " + fmt("%.3f", mh * 1e3) + " mm @1.25M, failures " +
                  std::to_string(low.failure_count) + "/" + std::to_string(high.failure_count)};
}

Outcome criterion9() {
  bool ok = true;
  std::string detail = "median";
  double prev = -1;
  double range_sigma = NAN;
  for (double jitter : {0.0, 1e-6, 1e-5, 1e-4}) {
    auto s = anechoic_floor(192000);
    s.sync.jitter_std = jitter;
    const auto r = run_scenario(s);
    if (r.trials.size() < 500 || !r.summary.has_data()) ok = false;
    const double med = r.summary.has_data() ? *r.summary.median : NAN;
    if (!(med >= prev)) ok = false;
    prev = med;
    detail += " " + fmt("%.3f", med * 1e3) + "mm";
    if (jitter == 1e-6) {
      double s2 = 0;
      std::size_t n = 0;
      for (const auto& t : r.trials) {
        for (double off : t.sync_offsets) {
          if (std::isnan(off)) continue;
          const double dr = off * s.speed_of_sound;
          s2 += dr * dr;
          ++n;
        }
      }
      range_sigma = std::sqrt(s2 / static_cast<double>(n));
    }
  }
  ok &= std::abs(range_sigma / 0.343e-3 - 1.0) <= 0.05;
  detail += "; range sigma at 1 us " + fmt("%.4f", range_sigma * 1e3) + " mm";
  return {ok, detail};
}

Outcome criterion10() {
  Scenario s;
  s.grid.spacing = 3.0;
  s.grid.margin = 1.0;
  s.trials = 2;
  s.noise_preset = "adapters";
  s.seed = 99;
  const auto dir = scratch("determinism");
  write_text(dir / "scenario.json", scenario_to_json(s));
  const std::string base = std::string("\"") + ROOMLOC_CLI_PATH + "\" run --scenario \"" + (dir / "scenario.json").string() +
                           "\" --seed 99 --format csv --out ";
  int st1 = 0, st2 = 0;
  run_command(base + "\"" + (dir / "a").string() + "\" > /dev/null", st1);
  run_command(base + "\"" + (dir / "b").string() + "\" > /dev/null", st2);
  if (st1 != 0 || st2 != 0) return {false, "cli run failed"};
  std::size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(dir / "a")) {
    if (entry.path().extension() != ".csv") continue;
    const auto other = dir / "b" / entry.path().filename();
    if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) {
      return {false, entry.path().filename().string() + " differs"};
    }
    ++compared;
  }
  return {compared >= 6, std::to_string(compared) + " CSV files byte-identical"};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"ranging resolution from the CLI", criterion1},
      {"critical distance", criterion2},
      {"Sabine round trip", criterion3},
      {"reverberation closed loop", criterion4},
      {"Schroeder estimator accuracy", criterion5},
      {"DAQ quantizer and accuracy noise", criterion6},
      {"noise preset calibration", criterion7},
      {"anechoic positioning floor", criterion8},
      {"sync jitter sensitivity", criterion9},
      {"determinism", criterion10},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failures;
    std::printf("%s criterion %zu: %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
