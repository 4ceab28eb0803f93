#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "roomloc/ambient_noise.hpp"
#include "roomloc/positioning.hpp"
#include "roomloc/room_acoustics.hpp"
#include "roomloc/signal_chain.hpp"

namespace roomloc {

enum class CalibrationMode { kSabine, kFitted };

enum class LayoutKind { kCorners, kNested, kExplicit };

struct LayoutSpec {
  LayoutKind kind = LayoutKind::kCorners;
  double inset = 0.1;
  std::size_t count = 8;             // nested only
  std::vector<Vec3> mic_positions;   // explicit only
  std::size_t reference_index = 0;

  NodeLayout build(const RoomGeometry& room) const;
};

struct GridSpec {
  double spacing = 1.0;
  double margin = 0.5;
  // Reported ground truth is offset by N(0, gt_jitter_std) per axis when enabled.
  bool gt_jitter = false;
  double gt_jitter_std = 0.01;
};

struct Scenario {
  RoomGeometry room;
  BandSpec bands;
  std::vector<double> rt60_targets = techtile_rt60_table().rt60_s;
  CalibrationMode calibration = CalibrationMode::kSabine;
  std::optional<AirAbsorptionModel> air = AirAbsorptionModel{};
  // max_order 0 is the anechoic mode.
  int max_order = 20;
  int band_filter_order = 4;
  int subbands_per_octave = 3;
  bool diffuse_phase = true;

  LayoutSpec layout;
  GridSpec grid;
  ChirpSpec chirp;
  SpeakerModel speaker;
  DaqConfig daq;
  MicModel mic{.gain_db = 20.0, .response_db = {}};
  // Preset name or explicit profile; neither means a silent room.
  std::optional<std::string> noise_preset;
  std::optional<NoiseProfile> noise;
  SyncModel sync;

  double speed_of_sound = kDefaultSpeedOfSound;
  double min_peak_ratio = 0.5;
  // Unknown emission time, drawn uniformly from [0, emission_offset_max] per trial.
  double emission_offset_max = 1e-3;
  int trials = 1;
  std::uint64_t seed = 1;
  // 0 picks std::thread::hardware_concurrency().
  unsigned threads = 0;

  // Throws ConfigError / DomainError naming the offending field.
  void validate() const;
  std::optional<NoiseProfile> resolved_noise() const;
};

// Axis-aligned grid from margin to L - margin, floor((L - 2 margin) / spacing) + 1 points per axis.
std::vector<Vec3> rover_grid(const RoomGeometry& room, double spacing, double margin);

struct TrialRecord {
  std::size_t position_index = 0;
  std::size_t trial = 0;
  Vec3 truth;                        // reported ground truth
  std::optional<Vec3> estimate;
  double error = 0.0;                // meters, valid when ok
  double residual_rms = 0.0;         // seconds
  int iterations = 0;
  bool converged = false;
  bool ok = false;
  std::string failure;               // empty, "no-detection", "insufficient-tdoa" or "non-convergence"
  TdoaSet tdoas;
  std::vector<double> sync_offsets;  // seconds added to each microphone's TOA
};

inline constexpr std::string_view kNoDataMarker = "no-data";

struct Summary {
  std::size_t count = 0;
  // Empty when there is no data.
  std::optional<double> rmse;
  std::optional<double> median;
  std::optional<double> p95;
  bool has_data() const { return count > 0; }
};

struct CdfPoint {
  double threshold = 0.0;  // meters
  double fraction = 0.0;
};

Summary summarize(const std::vector<double>& errors);
// Fraction of errors at or below each 1 cm step, up to the first step covering the maximum.
std::vector<CdfPoint> error_cdf(const std::vector<double>& errors);

struct EvalReport {
  Scenario scenario;
  std::vector<Vec3> positions;
  std::vector<TrialRecord> trials;
  Summary summary;
  std::vector<CdfPoint> cdf;
  std::size_t success_count = 0;
  std::size_t failure_count = 0;

  std::vector<double> errors() const;
};

// Per-trial seed: the (index + 1)-th output of a splitmix64 stream seeded with the master seed.
std::uint64_t trial_seed(std::uint64_t master, std::uint64_t index);
// Independent sub-stream of a trial seed for one purpose (emission, noise, DAQ, sync, ...).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

SurfaceAbsorption scenario_absorption(const Scenario& scenario);

EvalReport run_scenario(const Scenario& scenario);

// Writes errors.csv, estimates.csv, tdoas.csv, sync.csv, summary.csv, cdf.csv and scenario.json.
void export_report(const EvalReport& report, const std::filesystem::path& directory);

}  // namespace roomloc
