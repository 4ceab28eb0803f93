#pragma once

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "roomloc/room_acoustics.hpp"

namespace roomloc {

inline constexpr double kEdcFloorDb = -100.0;
inline constexpr int kAnalysisFilterOrder = 4;

// Schroeder backward-integrated decay, normalized to 0 dB at the start and
// clamped at kEdcFloorDb.
struct EnergyDecayCurve {
  std::vector<double> values_db;
  double fs = 0.0;
};

struct Rt60Estimate {
  double rt60 = 0.0;
  double fit_r2 = 0.0;
};

struct BandRt60 {
  double center = 0.0;
  // Empty when the band did not decay far enough; see `error`.
  std::optional<Rt60Estimate> estimate;
  std::string error;
  double achieved_floor_db = 0.0;
};

struct RtaBand {
  double center = 0.0;
  double spl = -std::numeric_limits<double>::infinity();
};

struct RtaResult {
  std::vector<RtaBand> bands;
  double window_duration = 0.0;

  double max_spl() const;
};

EnergyDecayCurve energy_decay_curve(const ImpulseResponse& rir);

// Line fit over the -5..-25 dB segment; rt60 = -60 / slope.
Rt60Estimate rt60_from_edc(const EnergyDecayCurve& edc);

// Octave-band filter, then Schroeder + RT20 fit per band. Bands whose decay
// is insufficient are reported with an error instead of throwing.
std::vector<BandRt60> band_rt60(const ImpulseResponse& rir, const BandSpec& bands,
                                int filter_order = kAnalysisFilterOrder);

// Per band, maximum RMS level over all sliding windows of the given length
// (hop of one sample), in dB re 20 uPa. Silent bands report -inf.
RtaResult rta_band_spl(std::span<const double> pressure, double fs, const BandSpec& bands, double window);

struct SourceMicPair {
  Vec3 source;
  Vec3 mic;
};

// Deterministic source/microphone pairs spread through the room (Halton
// sequence, 10 % wall margin, at least 1 m apart). `skip` discards the first
// pairs so that disjoint sets can be drawn.
std::vector<SourceMicPair> scattered_pairs(const RoomGeometry& room, std::size_t count, std::size_t skip = 0);

struct AbsorptionFitOptions {
  // Positions whose band RT60 values are averaged, as a measurement would be.
  std::vector<SourceMicPair> positions;
  RirOptions rir{.max_order = 400, .fs = 48000.0, .max_duration = 1.2};
  std::optional<AirAbsorptionModel> air = AirAbsorptionModel{};
  int max_iterations = 12;
  double relative_tolerance = 0.01;
};

struct AbsorptionFit {
  SurfaceAbsorption absorption;
  std::vector<double> achieved_rt60;  // position-averaged, per band; NaN if never measurable
  int iterations = 0;
  bool converged = false;
};

// Spatially averaged band RT60 of simulated RIRs; NaN for bands with
// insufficient decay at every position.
std::vector<double> mean_band_rt60(const RoomGeometry& room, const SurfaceAbsorption& absorption,
                                   const std::optional<AirAbsorptionModel>& air,
                                   std::span<const SourceMicPair> positions, const RirOptions& options);

// Uniform per-band absorption tuned so that simulated RIRs reproduce the
// target RT60 values. Starts from the Sabine calibration and applies secant
// steps on log(alpha) vs log(RT60) per band. Specular image sources in a
// non-cubic room decay more slowly than Sabine predicts, which this corrects.
AbsorptionFit fit_absorption_to_rt60(const RoomGeometry& room, const BandSpec& bands,
                                     std::span<const double> target_rt60, const AbsorptionFitOptions& options);

}  // namespace roomloc
