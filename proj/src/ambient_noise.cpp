#include "roomloc/ambient_noise.hpp"

#include <cmath>
#include <complex>
#include <random>
#include <sstream>

#include "roomloc/dsp.hpp"
#include "roomloc/errors.hpp"

namespace roomloc {

namespace {

std::vector<std::complex<double>> white_spectrum(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> w(n);
  for (double& v : w) v = g(rng);
  return dsp::rfft(w, n);
}

// Shapes white noise with `weight(f)` and rescales to the requested RMS.
template <typename Weight>
std::vector<double> shaped_noise(std::size_t n, double fs, double target_rms, std::mt19937_64& rng, Weight weight) {
  auto spec = white_spectrum(n, rng);
  for (std::size_t k = 0; k < spec.size(); ++k) {
    spec[k] *= weight(static_cast<double>(k) * fs / static_cast<double>(n));
  }
  auto x = dsp::irfft(spec, n);
  const double r = dsp::rms(x);
  if (r > 0) {
    const double scale = target_rms / r;
    for (double& v : x) v *= scale;
  }
  return x;
}

}  // namespace

double spl_to_pressure(double spl_db) { return kReferencePressure * std::pow(10.0, spl_db / 20.0); }

double pressure_to_spl(double p_rms) {
  if (!(p_rms > 0)) throw DomainError("pressure_to_spl: pressure must be positive");
  return 20.0 * std::log10(p_rms / kReferencePressure);
}

void NoiseProfile::validate() const {
  for (const auto& c : components) {
    if (!(c.center > 0) || !(c.bandwidth > 0) || !std::isfinite(c.spl)) {
      throw DomainError("noise component needs center > 0, bandwidth > 0 and a finite SPL");
    }
    if (c.center - c.bandwidth / 2 <= 0) throw DomainError("noise component band extends below 0 Hz");
  }
  if (std::isnan(broadband_floor_spl) || broadband_floor_spl == std::numeric_limits<double>::infinity()) {
    throw DomainError("noise floor SPL must be finite or -inf");
  }
  if (has_floor() && !(floor_low > 0 && floor_high > floor_low)) throw DomainError("noise floor band is invalid");
}

NoisePreset parse_noise_preset(std::string_view name) {
  if (name == "P1_center") return NoisePreset::kP1Center;
  if (name == "adapters") return NoisePreset::kAdapters;
  if (name == "printer") return NoisePreset::kPrinter;
  if (name == "rack_front_open") return NoisePreset::kRackFrontOpen;
  throw ConfigError("unknown noise preset '" + std::string(name) +
                    "'; valid presets: P1_center, adapters, printer, rack_front_open");
}

std::string_view to_string(NoisePreset preset) {
  switch (preset) {
    case NoisePreset::kP1Center: return "P1_center";
    case NoisePreset::kAdapters: return "adapters";
    case NoisePreset::kPrinter: return "printer";
    case NoisePreset::kRackFrontOpen: return "rack_front_open";
  }
  return "unknown";
}

NoiseProfile techtile_preset(NoisePreset preset) {
  NoiseProfile p;
  switch (preset) {
    case NoisePreset::kP1Center:
      p.broadband_floor_spl = 46.2;
      p.components.push_back({29500.0, kDefaultPeakBandwidth, kP1UltrasonicPeakSpl});
      break;
    case NoisePreset::kAdapters:
      p.components.push_back({32000.0, kDefaultPeakBandwidth, 40.9});
      break;
    case NoisePreset::kPrinter:
      p.components.push_back({26200.0, kDefaultPeakBandwidth, 33.9});
      break;
    case NoisePreset::kRackFrontOpen: {
      NoiseProfile inside;
      inside.broadband_floor_spl = kRackInternalNoiseSpl;
      p = attenuate(inside, RackAttenuation{}.front);
      break;
    }
  }
  return p;
}

NoiseProfile techtile_preset(std::string_view name) { return techtile_preset(parse_noise_preset(name)); }

NoiseProfile attenuate(const NoiseProfile& profile, double db) {
  NoiseProfile out = profile;
  for (auto& c : out.components) c.spl -= db;
  if (out.has_floor()) out.broadband_floor_spl -= db;
  return out;
}

std::vector<double> synthesize_noise(const NoiseProfile& profile, double fs, double duration, std::uint64_t seed) {
  profile.validate();
  if (!(fs > 0)) throw DomainError("synthesize_noise: fs must be positive");
  if (!(duration >= 0)) throw DomainError("synthesize_noise: duration must be non-negative");
  for (std::size_t i = 0; i < profile.components.size(); ++i) {
    const auto& c = profile.components[i];
    if (c.center + c.bandwidth / 2 >= fs / 2) {
      std::ostringstream os;
      os << "synthesize_noise: component " << i << " (" << c.center << " Hz) exceeds Nyquist at fs " << fs;
      throw DomainError(os.str());
    }
  }
  if (profile.has_floor() && profile.floor_high >= fs / 2) {
    throw DomainError("synthesize_noise: noise floor band exceeds Nyquist");
  }

  const auto n = static_cast<std::size_t>(std::llround(duration * fs));
  std::vector<double> out(n, 0.0);
  if (n == 0) return out;
  std::mt19937_64 rng(seed);

  if (profile.has_floor()) {
    const double octaves = std::log2(profile.floor_high / profile.floor_low);
    const double total_rms = spl_to_pressure(profile.broadband_floor_spl) * std::sqrt(octaves);
    const auto x = shaped_noise(n, fs, total_rms, rng, [&](double f) {
      return (f >= profile.floor_low && f <= profile.floor_high) ? 1.0 / std::sqrt(f) : 0.0;
    });
    for (std::size_t i = 0; i < n; ++i) out[i] += x[i];
  }
  for (const auto& c : profile.components) {
    const double lo = c.center - c.bandwidth / 2;
    const double hi = c.center + c.bandwidth / 2;
    const auto x = shaped_noise(n, fs, spl_to_pressure(c.spl), rng,
                                [&](double f) { return (f >= lo && f <= hi) ? 1.0 : 0.0; });
    for (std::size_t i = 0; i < n; ++i) out[i] += x[i];
  }
  return out;
}

}  // namespace roomloc
