#include "roomloc/room_acoustics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numbers>
#include <sstream>
#include <string>

#include "roomloc/dsp.hpp"
#include "roomloc/errors.hpp"

namespace roomloc {

namespace {

constexpr double kSabineConstant = 24.0 * std::numbers::ln10;  // ~55.26
constexpr double kCriticalDistanceFactor = 0.057;
constexpr double kDbPerNeper = 20.0 * std::numbers::log10e;    // 8.686 dB per neper (amplitude)

std::string fmt_double(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

// Image coordinate and per-wall hit counts for image index n along one axis.
struct AxisImage {
  double coord;
  int hits_low;
  int hits_high;
};

AxisImage axis_image(int n, double length, double src) {
  AxisImage img{};
  if (n % 2 == 0) {
    img.coord = n * length + src;
  } else {
    img.coord = (n + 1) * length - src;
  }
  const int m = std::abs(n);
  if (n > 0) {
    img.hits_high = (m + 1) / 2;
    img.hits_low = m / 2;
  } else {
    img.hits_low = (m + 1) / 2;
    img.hits_high = m / 2;
  }
  return img;
}

// Integer powers of a per-band reflection coefficient, cached per axis.
class PowerTable {
 public:
  PowerTable(double base, int max_exp) : values_(static_cast<std::size_t>(max_exp) + 1, 1.0) {
    for (std::size_t i = 1; i < values_.size(); ++i) values_[i] = values_[i - 1] * base;
  }
  double operator()(int e) const { return values_[static_cast<std::size_t>(e)]; }

 private:
  std::vector<double> values_;
};

}  // namespace

bool RoomGeometry::contains(const Vec3& p) const {
  return p.x > 0 && p.x < lx && p.y > 0 && p.y < ly && p.z > 0 && p.z < lz;
}

void RoomGeometry::validate() const {
  if (!(lx > 0 && ly > 0 && lz > 0) || !std::isfinite(lx * ly * lz)) {
    throw DomainError("room dimensions must be positive and finite");
  }
}

void BandSpec::validate() const {
  if (centers.empty()) throw DomainError("band spec is empty");
  for (std::size_t i = 0; i < centers.size(); ++i) {
    if (!(centers[i] > 0) || !std::isfinite(centers[i])) throw DomainError("band centers must be positive");
    if (i > 0 && !(centers[i] > centers[i - 1])) throw DomainError("band centers must be strictly increasing");
  }
}

BandSpec BandSpec::with_ultrasonic() const {
  BandSpec out = *this;
  for (double c : {16000.0, 31500.0}) {
    if (out.centers.empty() || c > out.centers.back()) out.centers.push_back(c);
  }
  return out;
}

const Rt60Table& techtile_rt60_table() {
  static const Rt60Table table{
      BandSpec{},
      {0.63, 0.84, 1.17, 0.97, 0.70, 0.62, 0.41},
      {14.3, 8.8, 5.3, 4.1, 3.4, 2.5, 2.2},
  };
  return table;
}

SurfaceAbsorption SurfaceAbsorption::uniform(BandSpec bands, std::span<const double> per_band_alpha) {
  if (per_band_alpha.size() != bands.size()) throw ContractError("alpha count must match band count");
  SurfaceAbsorption a;
  a.bands = std::move(bands);
  for (auto& s : a.alpha) s.assign(per_band_alpha.begin(), per_band_alpha.end());
  a.validate();
  return a;
}

void SurfaceAbsorption::validate() const {
  bands.validate();
  for (const auto& s : alpha) {
    if (s.size() != bands.size()) throw ContractError("alpha table does not match band count");
    for (double a : s) {
      if (!(a > 0.0 && a <= 1.0)) throw DomainError("absorption coefficients must lie in (0, 1]");
    }
  }
}

double SurfaceAbsorption::absorption_area(const RoomGeometry& room, std::size_t band) const {
  const std::array<double, kSurfaceCount> areas{room.ly * room.lz, room.ly * room.lz, room.lx * room.lz,
                                               room.lx * room.lz, room.lx * room.ly, room.lx * room.ly};
  double sa = 0.0;
  for (std::size_t s = 0; s < kSurfaceCount; ++s) sa += areas[s] * alpha[s].at(band);
  return sa;
}

SurfaceAbsorption SurfaceAbsorption::extended_to(const BandSpec& target) const {
  target.validate();
  SurfaceAbsorption out;
  out.bands = target;
  for (std::size_t s = 0; s < kSurfaceCount; ++s) {
    out.alpha[s].resize(target.size());
    for (std::size_t b = 0; b < target.size(); ++b) {
      const double f = target.centers[b];
      std::size_t nearest = 0;
      for (std::size_t k = 1; k < bands.size(); ++k) {
        if (std::abs(std::log(bands.centers[k] / f)) < std::abs(std::log(bands.centers[nearest] / f))) nearest = k;
      }
      out.alpha[s][b] = alpha[s][nearest];
    }
  }
  return out;
}

double AirAbsorptionModel::coefficient_db_per_m(double f) const {
  if (!(f > 0)) throw DomainError("frequency must be positive");
  constexpr double kRefTemp = 293.15;
  constexpr double kTriplePoint = 273.16;
  constexpr double kRefPressure = 101.325;
  const double t = temperature_c + 273.15;
  const double pr = pressure_kpa / kRefPressure;
  const double tr = t / kRefTemp;
  const double c_sat = -6.8346 * std::pow(kTriplePoint / t, 1.261) + 4.6151;
  const double h = relative_humidity * std::pow(10.0, c_sat) / pr;  // molar concentration, %
  const double fr_o = pr * (24.0 + 4.04e4 * h * (0.02 + h) / (0.391 + h));
  const double fr_n = pr * std::pow(tr, -0.5) * (9.0 + 280.0 * h * std::exp(-4.170 * (std::pow(tr, -1.0 / 3.0) - 1.0)));
  const double f2 = f * f;
  const double classical = 1.84e-11 / pr * std::sqrt(tr);
  const double oxygen = 0.01275 * std::exp(-2239.1 / t) / (fr_o + f2 / fr_o);
  const double nitrogen = 0.1068 * std::exp(-3352.0 / t) / (fr_n + f2 / fr_n);
  return 8.686 * f2 * (classical + std::pow(tr, -2.5) * (oxygen + nitrogen));
}

double ImpulseResponse::energy() const {
  double e = 0.0;
  for (double v : samples) e += v * v;
  return e;
}

double sabine_rt60(double volume, double absorption_area, double speed_of_sound) {
  if (!(volume > 0 && absorption_area > 0 && speed_of_sound > 0)) {
    throw DomainError("sabine_rt60: volume, absorption area and speed of sound must be positive");
  }
  return kSabineConstant * volume / (speed_of_sound * absorption_area);
}

double equivalent_absorption_area(double volume, double rt60, double speed_of_sound) {
  if (!(volume > 0 && rt60 > 0 && speed_of_sound > 0)) {
    throw DomainError("equivalent_absorption_area: inputs must be positive");
  }
  return kSabineConstant * volume / (speed_of_sound * rt60);
}

double critical_distance(double directivity, double volume, double rt60) {
  if (!(rt60 > 0)) throw DomainError("critical_distance: rt60 must be positive");
  if (!(volume > 0)) throw DomainError("critical_distance: volume must be positive");
  if (!(directivity >= 0)) throw DomainError("critical_distance: directivity must be non-negative");
  return kCriticalDistanceFactor * std::sqrt(directivity * volume / rt60);
}

double air_attenuation_db(double frequency, double distance, const AirAbsorptionModel& model) {
  if (!(distance >= 0)) throw DomainError("air_attenuation_db: distance must be non-negative");
  if (distance == 0) return 0.0;
  return model.coefficient_db_per_m(frequency) * distance;
}

namespace {

// Synthesis band: center plus per-surface alpha interpolated from the
// absorption table in log-frequency.
struct SynthesisBand {
  double center;
  std::array<double, kSurfaceCount> alpha;
};

std::vector<SynthesisBand> synthesis_bands(const SurfaceAbsorption& absorption, int per_octave) {
  const auto& centers = absorption.bands.centers;
  std::vector<SynthesisBand> out;
  auto alpha_at = [&](double f, std::size_t s) {
    if (f <= centers.front()) return absorption.alpha[s].front();
    if (f >= centers.back()) return absorption.alpha[s].back();
    const auto hi = static_cast<std::size_t>(std::upper_bound(centers.begin(), centers.end(), f) - centers.begin());
    const std::size_t lo = hi - 1;
    const double t = std::log(f / centers[lo]) / std::log(centers[hi] / centers[lo]);
    return absorption.alpha[s][lo] + t * (absorption.alpha[s][hi] - absorption.alpha[s][lo]);
  };
  const int half = per_octave / 2;
  const double lo = centers.front() * std::pow(2.0, -static_cast<double>(half) / per_octave);
  const double hi = centers.back() * std::pow(2.0, static_cast<double>(half) / per_octave) * (1.0 + 1e-9);
  for (double f = lo; f <= hi; f *= std::pow(2.0, 1.0 / per_octave)) {
    SynthesisBand band{f, {}};
    for (std::size_t s = 0; s < kSurfaceCount; ++s) band.alpha[s] = alpha_at(f, s);
    out.push_back(band);
  }
  return out;
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double image_sign(int nx, int ny, int nz) {
  if (nx == 0 && ny == 0 && nz == 0) return 1.0;
  const auto key = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(nx)) << 42) ^
                   (static_cast<std::uint64_t>(static_cast<std::uint32_t>(ny)) << 21) ^
                   static_cast<std::uint64_t>(static_cast<std::uint32_t>(nz));
  return (mix64(key) & 1U) ? -1.0 : 1.0;
}

}  // namespace

ImpulseResponse simulate_rir(const RoomGeometry& room, const SurfaceAbsorption& absorption,
                             const std::optional<AirAbsorptionModel>& air, const Vec3& source,
                             const Vec3& mic, const RirOptions& opt) {
  room.validate();
  absorption.validate();
  if (!room.contains(source)) throw DomainError("simulate_rir: source outside the room");
  if (!room.contains(mic)) throw DomainError("simulate_rir: microphone outside the room");
  if (distance(source, mic) < 1e-9) throw DomainError("simulate_rir: source and microphone coincide");
  if (opt.max_order < 0) throw DomainError("simulate_rir: max_order must be >= 0");
  if (!(opt.fs > 0) || !(opt.speed_of_sound > 0)) throw DomainError("simulate_rir: fs and speed of sound must be positive");
  if (opt.max_duration < 0) throw DomainError("simulate_rir: max_duration must be >= 0");
  if (opt.subbands_per_octave < 1) throw DomainError("simulate_rir: subbands_per_octave must be >= 1");

  const bool multiband = absorption.bands.size() > 1;
  std::vector<SynthesisBand> bands;
  if (multiband) {
    bands = synthesis_bands(absorption, opt.subbands_per_octave);
    const double half_width = std::pow(2.0, 0.5 / opt.subbands_per_octave);
    if (!(bands.front().center * half_width < opt.fs / 2)) throw DomainError("simulate_rir: fs too low for the lowest band");
    if (!(bands.back().center / half_width < opt.fs / 2)) throw DomainError("simulate_rir: highest band lies above Nyquist");
  } else {
    SynthesisBand only{absorption.bands.centers.front(), {}};
    for (std::size_t s = 0; s < kSurfaceCount; ++s) only.alpha[s] = absorption.alpha[s].front();
    bands.push_back(only);
  }
  const std::size_t nb = bands.size();

  const int order = opt.max_order;
  const double c = opt.speed_of_sound;
  const double max_dist = opt.max_duration > 0 ? c * opt.max_duration : std::numeric_limits<double>::infinity();
  const std::array<double, 3> len{room.lx, room.ly, room.lz};
  const std::array<double, 3> src{source.x, source.y, source.z};
  const std::array<double, 3> rcv{mic.x, mic.y, mic.z};

  // Visits every image within order and distance limits.
  auto for_each_image = [&](auto&& visit) {
    for (int nx = -order; nx <= order; ++nx) {
      const AxisImage ix = axis_image(nx, len[0], src[0]);
      const double dx = ix.coord - rcv[0];
      if (dx * dx > max_dist * max_dist) continue;
      const int rem_x = order - std::abs(nx);
      for (int ny = -rem_x; ny <= rem_x; ++ny) {
        const AxisImage iy = axis_image(ny, len[1], src[1]);
        const double dy = iy.coord - rcv[1];
        const double dxy = dx * dx + dy * dy;
        if (dxy > max_dist * max_dist) continue;
        const int rem_y = rem_x - std::abs(ny);
        for (int nz = -rem_y; nz <= rem_y; ++nz) {
          const AxisImage iz = axis_image(nz, len[2], src[2]);
          const double dz = iz.coord - rcv[2];
          const double d = std::sqrt(dxy + dz * dz);
          if (d > max_dist) continue;
          visit(nx, ny, nz, d, ix, iy, iz);
        }
      }
    }
  };

  double far = 0.0;
  if (std::isfinite(max_dist)) {
    far = max_dist;
  } else {
    for_each_image([&](int, int, int, double d, const AxisImage&, const AxisImage&, const AxisImage&) { far = std::max(far, d); });
  }
  const auto last_sample = static_cast<std::size_t>(std::llround(opt.fs * far / c));
  std::size_t length = last_sample + 1;
  if (multiband) {
    // Room for the band filters to ring down past the last arrival.
    length += static_cast<std::size_t>(std::ceil(opt.fs * (0.01 + 8.0 / bands.front().center)));
  }

  // Per-band pressure reflection coefficient powers and per-sample air loss.
  std::vector<std::array<PowerTable, kSurfaceCount>> pow_tables;
  pow_tables.reserve(nb);
  bool uniform_surfaces = true;
  for (const auto& b : bands) {
    auto make = [&](std::size_t s) { return PowerTable(std::sqrt(1.0 - b.alpha[s]), order + 1); };
    pow_tables.push_back({make(0), make(1), make(2), make(3), make(4), make(5)});
    for (std::size_t s = 1; s < kSurfaceCount; ++s) uniform_surfaces = uniform_surfaces && b.alpha[s] == b.alpha[0];
  }
  std::vector<std::vector<double>> air_gain;
  if (air) {
    air_gain.resize(nb);
    for (std::size_t b = 0; b < nb; ++b) {
      const double nepers_per_m = air->coefficient_db_per_m(bands[b].center) / kDbPerNeper;
      air_gain[b].resize(last_sample + 1);
      for (std::size_t i = 0; i <= last_sample; ++i) {
        air_gain[b][i] = std::exp(-nepers_per_m * c * static_cast<double>(i) / opt.fs);
      }
    }
  }
  std::vector<PowerTable> total_pow;
  if (uniform_surfaces) {
    for (const auto& b : bands) total_pow.emplace_back(std::sqrt(1.0 - b.alpha[0]), 3 * order + 3);
  }

  std::vector<std::vector<double>> band_trains(nb, std::vector<double>(length, 0.0));
  for_each_image([&](int nx, int ny, int nz, double d, const AxisImage& ix, const AxisImage& iy, const AxisImage& iz) {
    const auto sample = static_cast<std::size_t>(std::llround(opt.fs * d / c));
    if (sample > last_sample) return;
    double base = 1.0 / d;
    if (opt.diffuse_phase) base *= image_sign(nx, ny, nz);
    const int hits[kSurfaceCount] = {ix.hits_low, ix.hits_high, iy.hits_low, iy.hits_high, iz.hits_low, iz.hits_high};
    const int total_hits = hits[0] + hits[1] + hits[2] + hits[3] + hits[4] + hits[5];
    for (std::size_t b = 0; b < nb; ++b) {
      double g = base;
      if (uniform_surfaces) {
        g *= total_pow[b](total_hits);
      } else {
        for (std::size_t s = 0; s < kSurfaceCount; ++s) g *= pow_tables[b][s](hits[s]);
      }
      if (air) g *= air_gain[b][sample];
      band_trains[b][sample] += g;
    }
  });

  ImpulseResponse rir;
  rir.fs = opt.fs;
  rir.samples.assign(length, 0.0);
  const double half_width = std::pow(2.0, 0.5 / opt.subbands_per_octave);
  for (std::size_t b = 0; b < nb; ++b) {
    auto& train = band_trains[b];
    if (multiband) {
      const double fc = bands[b].center;
      dsp::SosFilter filter;
      if (b == 0) {
        filter = dsp::butterworth_lowpass(opt.band_filter_order, fc * half_width, opt.fs);
      } else if (b + 1 == nb || fc * half_width >= 0.95 * opt.fs / 2) {
        filter = dsp::butterworth_highpass(opt.band_filter_order, fc / half_width, opt.fs);
      } else {
        filter = dsp::butterworth_bandpass(opt.band_filter_order, fc / half_width, fc * half_width, opt.fs);
      }
      filter.apply_in_place(train);
    }
    for (std::size_t i = 0; i < length; ++i) rir.samples[i] += train[i];
  }
  return rir;
}

SurfaceAbsorption calibrate_absorption(const RoomGeometry& room, const BandSpec& bands,
                                       std::span<const double> target_rt60, double speed_of_sound,
                                       const std::optional<AirAbsorptionModel>& air) {
  room.validate();
  bands.validate();
  if (target_rt60.size() != bands.size()) throw ContractError("calibrate_absorption: one target per band required");
  const double volume = room.volume();
  const double surface = room.surface_area();
  std::vector<double> alpha(bands.size());
  for (std::size_t b = 0; b < bands.size(); ++b) {
    const double target = target_rt60[b];
    if (!(target > 0)) throw DomainError("calibrate_absorption: target RT60 must be positive");
    double sa = equivalent_absorption_area(volume, target, speed_of_sound);
    if (air) {
      const double m = air->coefficient_db_per_m(bands.centers[b]) / (10.0 * std::numbers::log10e);
      sa -= 4.0 * m * volume;
    }
    const double a = sa / surface;
    if (a > 1.0) {
      throw InfeasibleError("calibrate_absorption: band " + fmt_double(bands.centers[b]) +
                            " Hz needs alpha " + fmt_double(a) + " > 1");
    }
    if (!(a > 0.0)) {
      throw InfeasibleError("calibrate_absorption: band " + fmt_double(bands.centers[b]) +
                            " Hz: air absorption alone exceeds the target");
    }
    alpha[b] = a;
  }
  return SurfaceAbsorption::uniform(bands, alpha);
}

}  // namespace roomloc
