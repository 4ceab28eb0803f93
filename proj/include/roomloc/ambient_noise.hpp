#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

namespace roomloc {

inline constexpr double kReferencePressure = 20e-6;  // Pa

double spl_to_pressure(double spl_db);
double pressure_to_spl(double p_rms);

struct NoiseComponent {
  double center = 0.0;     // Hz
  double bandwidth = 0.0;  // Hz
  double spl = 0.0;        // dB re 20 uPa, total power of the component
};

// A broadband pink floor (equal power per octave) plus narrow-band peaks.
// The floor level is the SPL carried by each octave between floor_low and
// floor_high; -inf disables it.
struct NoiseProfile {
  std::vector<NoiseComponent> components;
  double broadband_floor_spl = -std::numeric_limits<double>::infinity();
  double floor_low = 31.5 / 1.4142135623730951;
  double floor_high = 8000.0 * 1.4142135623730951;

  bool has_floor() const { return std::isfinite(broadband_floor_spl); }
  void validate() const;
};

// Measured rack noise reduction per side, dB.
struct RackAttenuation {
  double front = 22.7;
  double side = 24.2;
  double back = 20.4;
  double average = 22.9;
};

// Noise generated inside the closed rack by its own cooling, dB SPL.
inline constexpr double kRackInternalNoiseSpl = 48.5;
// Level of the P1 ultrasonic peak. The measured level was not reported
// numerically; 40 dB is a placeholder.
inline constexpr double kP1UltrasonicPeakSpl = 40.0;
inline constexpr double kDefaultPeakBandwidth = 1000.0;

enum class NoisePreset { kP1Center, kAdapters, kPrinter, kRackFrontOpen };

// Accepts "P1_center", "adapters", "printer", "rack_front_open".
NoisePreset parse_noise_preset(std::string_view name);
std::string_view to_string(NoisePreset preset);
NoiseProfile techtile_preset(NoisePreset preset);
NoiseProfile techtile_preset(std::string_view name);

// Lowers every component and the floor by `db`.
NoiseProfile attenuate(const NoiseProfile& profile, double db);

// Gaussian noise shaped in the frequency domain (ideal band-pass per
// component, 1/f within the floor band) and scaled to the exact target power.
std::vector<double> synthesize_noise(const NoiseProfile& profile, double fs, double duration, std::uint64_t seed);

}  // namespace roomloc
