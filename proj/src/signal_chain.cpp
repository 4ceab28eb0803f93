#include "roomloc/signal_chain.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "roomloc/dsp.hpp"
#include "roomloc/errors.hpp"

namespace roomloc {

namespace {

constexpr double kPi = std::numbers::pi;

struct AccuracyEntry {
  double range;
  double accuracy;
};

// NI PXIe-6358 absolute accuracy at full scale, volts.
constexpr std::array<AccuracyEntry, 4> kInputAccuracy{{{10.0, 2688e-6}, {5.0, 1379e-6}, {2.0, 654e-6}, {1.0, 313e-6}}};
constexpr std::array<AccuracyEntry, 2> kOutputAccuracy{{{10.0, 3256e-6}, {5.0, 1616e-6}}};

double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 200; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(kPi * x) / (kPi * x); }

// Zero-phase magnitude shaping with a piecewise-linear (log f, dB) table.
void apply_response_table(std::vector<double>& x, double fs, const std::vector<std::pair<double, double>>& table) {
  if (table.empty() || x.empty()) return;
  const std::size_t n = x.size();
  auto spec = dsp::rfft(x, n);
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double f = static_cast<double>(k) * fs / static_cast<double>(n);
    double db;
    if (f <= table.front().first) {
      db = table.front().second;
    } else if (f >= table.back().first) {
      db = table.back().second;
    } else {
      auto hi = std::upper_bound(table.begin(), table.end(), f,
                                 [](double v, const std::pair<double, double>& p) { return v < p.first; });
      auto lo = hi - 1;
      const double t = std::log(f / lo->first) / std::log(hi->first / lo->first);
      db = lo->second + t * (hi->second - lo->second);
    }
    spec[k] *= std::pow(10.0, db / 20.0);
  }
  x = dsp::irfft(spec, n);
}

}  // namespace

void ChirpSpec::validate() const {
  if (!(f_start > 0 && f_end > 0)) throw DomainError("chirp frequencies must be positive");
  if (!(duration > 0)) throw DomainError("chirp duration must be positive");
  if (!(amplitude > 0)) throw DomainError("chirp amplitude must be positive");
}

Waveform generate_chirp(const ChirpSpec& spec, double fs) {
  spec.validate();
  if (!(fs > 2.0 * std::max(spec.f_start, spec.f_end))) {
    throw DomainError("generate_chirp: sample rate violates Nyquist for the chirp band");
  }
  const auto n = static_cast<std::size_t>(std::llround(spec.duration * fs));
  Waveform w;
  w.fs = fs;
  w.samples.resize(n);
  const double sweep_rate = (spec.f_end - spec.f_start) / spec.duration;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    const double phase = 2.0 * kPi * (spec.f_start * t + 0.5 * sweep_rate * t * t);
    double win = 1.0;
    if (spec.window == ChirpWindow::kHann && n > 1) {
      win = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n - 1));
    }
    w.samples[i] = spec.amplitude * win * std::cos(phase);
  }
  return w;
}

double ranging_resolution(double speed_of_sound, double fs) {
  if (!(fs > 0)) throw DomainError("ranging_resolution: sample rate must be positive");
  return speed_of_sound / fs;
}

Waveform apply_channel(const ImpulseResponse& rir, const Waveform& waveform) {
  if (rir.fs != waveform.fs) throw ContractError("apply_channel: impulse response and waveform sample rates differ");
  return {dsp::convolve(waveform.samples, rir.samples), waveform.fs};
}

void MicModel::validate() const {
  if (!(bandwidth > 0)) throw DomainError("microphone bandwidth must be positive");
  if (!(gain_db >= 0 && gain_db <= kMaxGainDb)) {
    throw DomainError("microphone gain must lie in [0, 57.9] dB");
  }
  for (std::size_t i = 1; i < response_db.size(); ++i) {
    if (!(response_db[i].first > response_db[i - 1].first)) {
      throw DomainError("microphone response table must have increasing frequencies");
    }
  }
  if (!response_db.empty() && !(response_db.front().first > 0)) {
    throw DomainError("microphone response table frequencies must be positive");
  }
}

void SpeakerModel::validate() const {
  if (!(bandwidth > 0)) throw DomainError("speaker bandwidth must be positive");
  if (!(directivity > 0)) throw DomainError("speaker directivity must be positive");
}

Waveform mic_transduce(const Waveform& pressure, const MicModel& mic) {
  mic.validate();
  if (!(pressure.fs > 0)) throw DomainError("mic_transduce: sample rate must be positive");
  const double volts_per_pa = std::pow(10.0, (mic.sensitivity_dbv + mic.gain_db) / 20.0);
  Waveform out{pressure.samples, pressure.fs};
  for (double& v : out.samples) v *= volts_per_pa;
  apply_response_table(out.samples, out.fs, mic.response_db);
  // A corner at or beyond Nyquist cannot be represented; the response is flat then.
  if (mic.bandwidth < 0.49 * pressure.fs) {
    dsp::butterworth_lowpass(1, mic.bandwidth, pressure.fs).apply_in_place(out.samples);
  }
  return out;
}

double daq_absolute_accuracy(DaqDirection direction, double range_volts) {
  const std::span<const AccuracyEntry> table =
      direction == DaqDirection::kInput ? std::span<const AccuracyEntry>(kInputAccuracy)
                                        : std::span<const AccuracyEntry>(kOutputAccuracy);
  for (const auto& e : table) {
    if (e.range == range_volts) return e.accuracy;
  }
  std::ostringstream os;
  os << "unsupported " << (direction == DaqDirection::kInput ? "input" : "output") << " range +-" << range_volts
     << " V; valid ranges:";
  for (const auto& e : table) os << " +-" << e.range;
  throw ConfigError(os.str());
}

void DaqConfig::validate() const {
  if (bits != 16) throw ConfigError("DAQ resolution is fixed at 16 bits");
  if (!(fs_in > 0 && fs_in <= kMaxInputRate)) throw ConfigError("DAQ input rate must lie in (0, 1.25 MHz]");
  if (!(fs_out > 0 && fs_out <= kMaxOutputRate)) throw ConfigError("DAQ output rate must lie in (0, 3.3 MHz]");
  daq_absolute_accuracy(direction, range_volts);
}

double DaqConfig::lsb() const { return 2.0 * range_volts / std::ldexp(1.0, bits); }

Waveform quantize(const Waveform& voltage, const DaqConfig& daq, std::uint64_t seed) {
  daq.validate();
  const double step = daq.lsb();
  const double max_code = std::ldexp(1.0, daq.bits - 1) - 1.0;
  const double min_code = -std::ldexp(1.0, daq.bits - 1);
  Waveform out{voltage.samples, voltage.fs};
  for (double& v : out.samples) {
    const double clamped = std::clamp(v, -daq.range_volts, daq.range_volts);
    const double code = std::clamp(std::nearbyint(clamped / step), min_code, max_code);
    v = code * step;
  }
  if (daq.accuracy_noise) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, daq.accuracy_sigma());
    for (double& v : out.samples) v += g(rng);
  }
  return out;
}

ResampleResult resample(const Waveform& in, double to_fs) {
  if (!(in.fs > 0 && to_fs > 0)) throw DomainError("resample: sample rates must be positive");
  ResampleResult result;
  if (to_fs == in.fs) {
    result.waveform = in;
    return result;
  }
  const std::size_t n_in = in.samples.size();
  const double ratio = to_fs / in.fs;

  if (to_fs < in.fs && n_in > 0) {
    const auto spec = dsp::rfft(in.samples, n_in);
    double total = 0.0, above = 0.0;
    for (std::size_t k = 0; k < spec.size(); ++k) {
      const double p = std::norm(spec[k]);
      total += p;
      if (static_cast<double>(k) * in.fs / static_cast<double>(n_in) > to_fs / 2) above += p;
    }
    result.aliasing_warning = total > 0 && above > 1e-3 * total;
  }

  constexpr int kZeroCrossings = 32;
  constexpr double kBeta = 8.6;
  const double cutoff = 0.5 * std::min(in.fs, to_fs) * 0.95;  // Hz
  const double half_width = kZeroCrossings / (2.0 * cutoff);    // seconds
  // Kaiser window tabulated over |r| in [0, 1].
  constexpr std::size_t kTable = 4096;
  std::vector<double> window(kTable + 2);
  const double i0_beta = bessel_i0(kBeta);
  for (std::size_t i = 0; i < window.size(); ++i) {
    const double r = std::min(1.0, static_cast<double>(i) / kTable);
    window[i] = bessel_i0(kBeta * std::sqrt(1.0 - r * r)) / i0_beta;
  }

  const auto n_out = static_cast<std::size_t>(std::ceil(static_cast<double>(n_in) * ratio));
  result.waveform.fs = to_fs;
  result.waveform.samples.assign(n_out, 0.0);
  for (std::size_t m = 0; m < n_out; ++m) {
    const double t = static_cast<double>(m) / to_fs;
    const auto first = static_cast<long long>(std::ceil((t - half_width) * in.fs));
    const auto last = static_cast<long long>(std::floor((t + half_width) * in.fs));
    double acc = 0.0;
    for (long long n = std::max(0LL, first); n <= std::min<long long>(last, static_cast<long long>(n_in) - 1); ++n) {
      const double dt = t - static_cast<double>(n) / in.fs;
      const double pos = std::min(1.0, std::abs(dt) / half_width) * kTable;
      const auto idx = static_cast<std::size_t>(pos);
      const double frac = pos - static_cast<double>(idx);
      const double win = window[idx] + frac * (window[idx + 1] - window[idx]);
      acc += in.samples[static_cast<std::size_t>(n)] * sinc(2.0 * cutoff * dt) * win;
    }
    result.waveform.samples[m] = acc * 2.0 * cutoff / in.fs;
  }
  return result;
}

}  // namespace roomloc
