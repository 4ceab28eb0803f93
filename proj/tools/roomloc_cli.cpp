#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "roomloc/ambient_noise.hpp"
#include "roomloc/analysis.hpp"
#include "roomloc/errors.hpp"
#include "roomloc/harness.hpp"
#include "roomloc/io.hpp"
#include "roomloc/room_acoustics.hpp"
#include "roomloc/scenario.hpp"
#include "roomloc/signal_chain.hpp"

namespace fs = std::filesystem;
using namespace roomloc;

namespace {

// Scientific notation without exponent padding: 2.744e-4.
std::string sci4(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  std::string s = buf;
  const auto e = s.find('e');
  if (e == std::string::npos) return s;
  std::string mant = s.substr(0, e);
  std::string exp = s.substr(e + 1);
  const char sign = exp[0];
  exp = exp.substr(1);
  while (exp.size() > 1 && exp[0] == '0') exp.erase(0, 1);
  return mant + "e" + (sign == '-' ? "-" : "") + exp;
}

std::string fixed(double v, int digits) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Scenario scenario_or_default(const std::string& path) { return path.empty() ? Scenario{} : load_scenario(path); }

Vec3 to_vec(const std::vector<double>& v, const char* what) {
  if (v.size() != 3) throw ContractError(std::string(what) + ": expected x,y,z");
  return {v[0], v[1], v[2]};
}

void check_format(const std::string& format, bool allow_wav) {
  if (format == "csv" || (allow_wav && format == "wav")) return;
  throw ConfigError("--format: unsupported value '" + format + (allow_wav ? "' (csv, wav)" : "' (csv)"));
}

void print_summary(const EvalReport& r) {
  auto show = [](const std::optional<double>& v) { return v ? fixed(*v * 1000.0, 3) + " mm" : std::string(kNoDataMarker); };
  std::cout << "trials " << r.trials.size() << "  ok " << r.success_count << "  failed " << r.failure_count << "\n"
            << "rmse " << show(r.summary.rmse) << "  median " << show(r.summary.median) << "  p95 "
            << show(r.summary.p95) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Room acoustics and acoustic positioning toolkit"};
  app.require_subcommand(1);

  std::string scenario_path, out_dir = ".", format = "csv";
  std::uint64_t seed = 0;

  // rir
  auto* rir_cmd = app.add_subcommand("rir", "Synthesize a room impulse response");
  std::vector<double> rir_source{2.0, 1.0, 1.2}, rir_mic{6.0, 3.0, 1.2};
  int rir_order = -1;
  double rir_fs = 0.0;
  rir_cmd->add_option("--scenario", scenario_path, "Scenario JSON (room, absorption, air)");
  rir_cmd->add_option("--source", rir_source, "Source x,y,z in meters")->delimiter(',')->expected(3);
  rir_cmd->add_option("--mic", rir_mic, "Microphone x,y,z in meters")->delimiter(',')->expected(3);
  rir_cmd->add_option("--order", rir_order, "Maximum reflection order (default: scenario)");
  rir_cmd->add_option("--fs", rir_fs, "Sample rate in Hz (default: scenario capture rate)");
  rir_cmd->add_option("--out", out_dir, "Output directory");
  rir_cmd->add_option("--format", format, "csv or wav");

  // rt60
  auto* rt60_cmd = app.add_subcommand("rt60", "Per-band RT60 of an impulse response (WAV or CSV)");
  std::string rt60_input;
  double rt60_fs = 0.0;
  std::vector<double> rt60_bands = BandSpec{}.centers;
  std::string rt60_out;
  rt60_cmd->add_option("input", rt60_input, "Impulse response file")->required();
  rt60_cmd->add_option("--fs", rt60_fs, "Sample rate for CSV input");
  rt60_cmd->add_option("--bands", rt60_bands, "Octave band centers")->delimiter(',');
  rt60_cmd->add_option("--out", rt60_out, "Directory for rt60.csv");
  rt60_cmd->add_option("--format", format, "csv");

  // calc
  auto* calc_cmd = app.add_subcommand("calc", "One-shot formulas");
  calc_cmd->require_subcommand(1);
  double c = kDefaultSpeedOfSound;
  double a1 = 0, a2 = 0, a3 = 0;
  auto* sabine_cmd = calc_cmd->add_subcommand("sabine", "RT60 from volume (m^3) and absorption area (m^2)");
  sabine_cmd->add_option("volume", a1)->required();
  sabine_cmd->add_option("absorption_area", a2)->required();
  sabine_cmd->add_option("--c", c, "Speed of sound, m/s");
  auto* area_cmd = calc_cmd->add_subcommand("absorption-area", "Absorption area from volume (m^3) and RT60 (s)");
  area_cmd->add_option("volume", a1)->required();
  area_cmd->add_option("rt60", a2)->required();
  area_cmd->add_option("--c", c, "Speed of sound, m/s");
  auto* dc_cmd = calc_cmd->add_subcommand("critical-distance", "Critical distance from directivity, volume and RT60");
  dc_cmd->add_option("directivity", a1)->required();
  dc_cmd->add_option("volume", a2)->required();
  dc_cmd->add_option("rt60", a3)->required();
  auto* rr_cmd = calc_cmd->add_subcommand("ranging-resolution", "Distance per sample, c / fs");
  rr_cmd->add_option("speed_of_sound", a1)->required();
  rr_cmd->add_option("fs", a2)->required();

  // noise
  auto* noise_cmd = app.add_subcommand("noise", "Synthesize an ambient noise preset and report its octave levels");
  std::string preset;
  double noise_fs = 192000.0, noise_duration = 1.0, noise_window = 0.5;
  noise_cmd->add_option("--preset", preset, "P1_center, adapters, printer or rack_front_open");
  noise_cmd->add_option("--scenario", scenario_path, "Take the noise profile from a scenario");
  noise_cmd->add_option("--fs", noise_fs, "Sample rate, Hz");
  noise_cmd->add_option("--duration", noise_duration, "Seconds");
  noise_cmd->add_option("--window", noise_window, "RTA window, seconds");
  noise_cmd->add_option("--seed", seed, "Random seed");
  noise_cmd->add_option("--out", out_dir, "Output directory");
  noise_cmd->add_option("--format", format, "csv or wav");

  // run
  auto* run_cmd = app.add_subcommand("run", "Run a positioning scenario");
  std::optional<std::uint64_t> run_seed;
  std::optional<int> run_trials;
  run_cmd->add_option("--scenario", scenario_path, "Scenario JSON (defaults apply when omitted)");
  run_cmd->add_option("--seed", run_seed, "Override the scenario seed");
  run_cmd->add_option("--trials", run_trials, "Override the trial count");
  run_cmd->add_option("--out", out_dir, "Output directory");
  run_cmd->add_option("--format", format, "csv");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a scenario once per value of one key");
  std::string sweep_key;
  std::vector<std::string> sweep_values;
  sweep_cmd->add_option("--scenario", scenario_path, "Scenario JSON");
  sweep_cmd->add_option("--key", sweep_key, "Dotted key, e.g. sync.jitter_std")->required();
  sweep_cmd->add_option("--values", sweep_values, "Comma-separated JSON values")->delimiter(',')->required();
  sweep_cmd->add_option("--seed", run_seed, "Override the scenario seed");
  sweep_cmd->add_option("--out", out_dir, "Output directory");
  sweep_cmd->add_option("--format", format, "csv");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*rir_cmd) {
      check_format(format, true);
      const Scenario sc = scenario_or_default(scenario_path);
      sc.room.validate();
      RirOptions opts;
      opts.max_order = rir_order >= 0 ? rir_order : sc.max_order;
      opts.fs = rir_fs > 0 ? rir_fs : sc.daq.fs_in;
      opts.speed_of_sound = sc.speed_of_sound;
      opts.band_filter_order = sc.band_filter_order;
      opts.subbands_per_octave = sc.subbands_per_octave;
      opts.diffuse_phase = sc.diffuse_phase;
      SurfaceAbsorption absorption = scenario_absorption(sc);
      // Bands above Nyquist cannot be synthesized at low rates.
      BandSpec usable;
      usable.centers.clear();
      for (double f : absorption.bands.centers) {
        if (f * std::sqrt(2.0) < opts.fs / 2) usable.centers.push_back(f);
      }
      if (usable.centers.size() != absorption.bands.size()) {
        SurfaceAbsorption trimmed;
        trimmed.bands = usable;
        for (std::size_t s = 0; s < kSurfaceCount; ++s) {
          trimmed.alpha[s].assign(absorption.alpha[s].begin(), absorption.alpha[s].begin() + usable.size());
        }
        absorption = trimmed;
      }
      const ImpulseResponse rir = simulate_rir(sc.room, absorption, sc.air, to_vec(rir_source, "--source"),
                                               to_vec(rir_mic, "--mic"), opts);
      fs::create_directories(out_dir);
      const Waveform w{rir.samples, rir.fs};
      const fs::path path = fs::path(out_dir) / (format == "wav" ? "rir.wav" : "rir.csv");
      if (format == "wav") {
        write_wav(path, w);
      } else {
        write_waveform_csv(path, w);
      }
      std::cout << "wrote " << path.string() << " (" << w.samples.size() << " samples at " << w.fs << " Hz)\n";
    } else if (*rt60_cmd) {
      check_format(format, false);
      const Waveform w = read_waveform(rt60_input, rt60_fs);
      ImpulseResponse rir;
      rir.samples = w.samples;
      rir.fs = w.fs;
      BandSpec bands;
      bands.centers = rt60_bands;
      const auto result = band_rt60(rir, bands);
      std::cout << "band_hz  rt60_s  fit_r2\n";
      for (const auto& b : result) {
        if (b.estimate) {
          std::cout << b.center << "  " << fixed(b.estimate->rt60, 3) << "  " << fixed(b.estimate->fit_r2, 4) << "\n";
        } else {
          std::cout << b.center << "  insufficient decay (floor " << fixed(b.achieved_floor_db, 1) << " dB)\n";
        }
      }
      if (!rt60_out.empty()) {
        fs::create_directories(rt60_out);
        write_text(fs::path(rt60_out) / "rt60.csv", band_rt60_csv(result));
      }
    } else if (*calc_cmd) {
      if (*sabine_cmd) {
        std::cout << fixed(sabine_rt60(a1, a2, c), 4) << " s\n";
      } else if (*area_cmd) {
        std::cout << fixed(equivalent_absorption_area(a1, a2, c), 4) << " m^2\n";
      } else if (*dc_cmd) {
        std::cout << fixed(critical_distance(a1, a2, a3), 4) << " m\n";
      } else if (*rr_cmd) {
        std::cout << sci4(ranging_resolution(a1, a2)) << " m\n";
      }
    } else if (*noise_cmd) {
      check_format(format, true);
      NoiseProfile profile;
      if (!preset.empty()) {
        profile = techtile_preset(preset);
      } else {
        const auto resolved = scenario_or_default(scenario_path).resolved_noise();
        if (!resolved) throw ConfigError("noise: give --preset or a scenario with a noise profile");
        profile = *resolved;
      }
      const Waveform w{synthesize_noise(profile, noise_fs, noise_duration, seed), noise_fs};
      BandSpec bands = BandSpec{}.with_ultrasonic();
      std::vector<double> usable;
      for (double f : bands.centers) {
        if (f * std::sqrt(2.0) < noise_fs / 2) usable.push_back(f);
      }
      bands.centers = usable;
      const RtaResult rta = rta_band_spl(w.samples, w.fs, bands, noise_window);
      std::cout << "band_hz  spl_db\n";
      for (const auto& b : rta.bands) {
        std::cout << b.center << "  " << (std::isfinite(b.spl) ? fixed(b.spl, 2) : std::string("-inf")) << "\n";
      }
      fs::create_directories(out_dir);
      const fs::path path = fs::path(out_dir) / (format == "wav" ? "noise.wav" : "noise.csv");
      if (format == "wav") {
        write_wav(path, w);
      } else {
        write_waveform_csv(path, w);
      }
      write_text(fs::path(out_dir) / "noise_rta.csv", rta_csv(rta));
    } else if (*run_cmd) {
      check_format(format, false);
      Scenario sc = scenario_or_default(scenario_path);
      if (run_seed) sc.seed = *run_seed;
      if (run_trials) sc.trials = *run_trials;
      const EvalReport report = run_scenario(sc);
      export_report(report, out_dir);
      print_summary(report);
    } else if (*sweep_cmd) {
      check_format(format, false);
      const std::string base = scenario_path.empty() ? std::string("{}") : read_text(scenario_path);
      fs::create_directories(out_dir);
      std::string table = "key,value,count,success_count,failure_count,rmse_m,median_m,p95_m\n";
      for (std::size_t i = 0; i < sweep_values.size(); ++i) {
        Scenario sc = scenario_from_json(apply_override(base, sweep_key, sweep_values[i]));
        if (run_seed) sc.seed = *run_seed;
        const EvalReport report = run_scenario(sc);
        export_report(report, fs::path(out_dir) / ("run_" + std::to_string(i)));
        auto cell = [](const std::optional<double>& v) {
          if (!v) return std::string(kNoDataMarker);
          char buf[40];
          std::snprintf(buf, sizeof buf, "%.12g", *v);
          return std::string(buf);
        };
        table += sweep_key + "," + sweep_values[i] + "," + std::to_string(report.summary.count) + "," +
                 std::to_string(report.success_count) + "," + std::to_string(report.failure_count) + "," +
                 cell(report.summary.rmse) + "," + cell(report.summary.median) + "," + cell(report.summary.p95) + "\n";
        std::cout << sweep_key << " = " << sweep_values[i] << ": ";
        print_summary(report);
      }
      write_text(fs::path(out_dir) / "sweep.csv", table);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
