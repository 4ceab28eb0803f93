#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "roomloc/geometry.hpp"

namespace roomloc {

inline constexpr double kDefaultSpeedOfSound = 343.0;

struct RoomGeometry {
  double lx = 8.0;
  double ly = 4.0;
  double lz = 2.4;

  double volume() const { return lx * ly * lz; }
  double surface_area() const { return 2.0 * (lx * ly + lx * lz + ly * lz); }
  Vec3 centroid() const { return {lx / 2, ly / 2, lz / 2}; }
  // Strictly inside; points on a wall are rejected.
  bool contains(const Vec3& p) const;
  // Throws DomainError when any dimension is not positive.
  void validate() const;
};

// Octave-band centers in Hz, strictly increasing.
struct BandSpec {
  std::vector<double> centers{125, 250, 500, 1000, 2000, 4000, 8000};

  void validate() const;
  std::size_t size() const { return centers.size(); }
  // Adds the ultrasonic centers used for noise analysis (16 kHz, 31.5 kHz).
  BandSpec with_ultrasonic() const;
};

// Reverberation times measured in the reference room, with the relative
// measurement uncertainty per band in percent.
struct Rt60Table {
  BandSpec bands;
  std::vector<double> rt60_s;
  std::vector<double> uncertainty_pct;
};
const Rt60Table& techtile_rt60_table();

enum class Surface { kXLow = 0, kXHigh, kYLow, kYHigh, kZLow, kZHigh };
inline constexpr std::size_t kSurfaceCount = 6;

// Absorption coefficient per surface and band; alpha[surface][band].
struct SurfaceAbsorption {
  BandSpec bands;
  std::array<std::vector<double>, kSurfaceCount> alpha;

  static SurfaceAbsorption uniform(BandSpec bands, std::span<const double> per_band_alpha);
  void validate() const;
  // Sabine absorption area sum_s area_s * alpha_s for one band.
  double absorption_area(const RoomGeometry& room, std::size_t band) const;
  // Copy with additional band centers; new bands reuse the nearest existing band's alpha.
  SurfaceAbsorption extended_to(const BandSpec& bands) const;
};

// Atmospheric absorption after the ISO 9613-1 pure-tone formula.
struct AirAbsorptionModel {
  double temperature_c = 20.0;
  double relative_humidity = 50.0;
  double pressure_kpa = 101.325;

  // Attenuation coefficient in dB per meter.
  double coefficient_db_per_m(double frequency) const;
};

struct ImpulseResponse {
  std::vector<double> samples;
  double fs = 0.0;
  double t0_offset = 0.0;

  double energy() const;
  double duration() const { return fs > 0 ? static_cast<double>(samples.size()) / fs : 0.0; }
};

double sabine_rt60(double volume, double absorption_area, double speed_of_sound = kDefaultSpeedOfSound);
double equivalent_absorption_area(double volume, double rt60, double speed_of_sound = kDefaultSpeedOfSound);
double critical_distance(double directivity, double volume, double rt60);
double air_attenuation_db(double frequency, double distance, const AirAbsorptionModel& model);

struct RirOptions {
  // Highest total reflection count |nx|+|ny|+|nz|; 0 gives the direct path only.
  int max_order = 40;
  double fs = 192000.0;
  double speed_of_sound = kDefaultSpeedOfSound;
  // Images arriving later than this are dropped; 0 means limited by order only.
  double max_duration = 0.0;
  // Prototype order of the band-splitting filters used for multi-band synthesis.
  int band_filter_order = 4;
  // Synthesis sub-bands per octave; alpha is interpolated in log-frequency
  // between the absorption band centers.
  int subbands_per_octave = 3;
  // Give each reflected image a pseudo-random sign (fixed per image index).
  // Equal-sign specular images add coherently at low frequencies and
  // stretch the decay far beyond what measured rooms show.
  bool diffuse_phase = true;
};

// Image-source RIR. With a single absorption band the result is a train of
// unfiltered impulses. With several bands, one impulse train per synthesis
// sub-band is built with that sub-band's absorption and air attenuation,
// band-filtered, and summed. Arrivals are placed at the nearest sample.
// Pass std::nullopt for `air` to disable atmospheric absorption.
ImpulseResponse simulate_rir(const RoomGeometry& room, const SurfaceAbsorption& absorption,
                             const std::optional<AirAbsorptionModel>& air, const Vec3& source,
                             const Vec3& mic, const RirOptions& options = {});

// Uniform per-band alpha from Sabine's formula. When `air` is given, the
// air absorption area 4mV of each band is subtracted from the required total
// so that walls plus air together meet the target.
SurfaceAbsorption calibrate_absorption(const RoomGeometry& room, const BandSpec& bands,
                                       std::span<const double> target_rt60,
                                       double speed_of_sound = kDefaultSpeedOfSound,
                                       const std::optional<AirAbsorptionModel>& air = std::nullopt);

}  // namespace roomloc
