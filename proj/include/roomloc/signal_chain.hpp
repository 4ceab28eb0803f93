#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "roomloc/room_acoustics.hpp"

namespace roomloc {

// Sampled signal. Units depend on the stage: Pa before the microphone, V after.
struct Waveform {
  std::vector<double> samples;
  double fs = 0.0;

  double duration() const { return fs > 0 ? static_cast<double>(samples.size()) / fs : 0.0; }
};

enum class ChirpWindow { kNone, kHann };

// Linear frequency sweep. Amplitude is the peak pressure at 1 m.
struct ChirpSpec {
  double f_start = 25000.0;
  double f_end = 45000.0;
  double duration = 5e-3;
  double amplitude = 1.0;
  ChirpWindow window = ChirpWindow::kNone;

  void validate() const;
};

Waveform generate_chirp(const ChirpSpec& spec, double fs);

// Distance travelled by sound during one sample period.
double ranging_resolution(double speed_of_sound, double fs);

// Full linear convolution of the waveform with the impulse response.
Waveform apply_channel(const ImpulseResponse& rir, const Waveform& waveform);

struct MicModel {
  double sensitivity_dbv = -38.0;  // dBV for 1 Pa (94 dB SPL) at 1 kHz
  double bandwidth = 80000.0;      // first-order low-pass corner, Hz
  double gain_db = 0.0;            // amplifier gain
  // Optional extra magnitude response as (frequency Hz, dB) points,
  // interpolated linearly in log-frequency; empty means flat.
  std::vector<std::pair<double, double>> response_db;

  static constexpr double kMaxGainDb = 57.9;
  void validate() const;
};

struct SpeakerModel {
  double bandwidth = 45000.0;
  double max_output_spl_at_1m = 100.0;
  double directivity = 1.0;

  void validate() const;
};

Waveform mic_transduce(const Waveform& pressure, const MicModel& mic);

enum class DaqDirection { kInput, kOutput };

// Absolute accuracy in volts for a full-scale range, per direction.
// Throws ConfigError listing valid ranges for anything else.
double daq_absolute_accuracy(DaqDirection direction, double range_volts);

struct DaqConfig {
  static constexpr double kMaxInputRate = 1.25e6;
  static constexpr double kMaxOutputRate = 3.3e6;

  double fs_in = 192000.0;
  double fs_out = 3.3e6;
  int bits = 16;
  double range_volts = 1.0;  // symmetric full scale, +-range
  DaqDirection direction = DaqDirection::kInput;
  // Gaussian perturbation with sigma = accuracy / 3.
  bool accuracy_noise = true;

  void validate() const;
  double lsb() const;
  double accuracy_volts() const { return daq_absolute_accuracy(direction, range_volts); }
  double accuracy_sigma() const { return accuracy_volts() / 3.0; }
};

// Clamp to the converter range, round to the nearest code, then add the
// accuracy perturbation (when enabled) drawn from `seed`.
Waveform quantize(const Waveform& voltage, const DaqConfig& daq, std::uint64_t seed);

struct ResampleResult {
  Waveform waveform;
  // Set when the input carries significant energy above the target Nyquist.
  bool aliasing_warning = false;
};

// Kaiser-windowed sinc interpolation, band-limited to the lower Nyquist rate.
ResampleResult resample(const Waveform& waveform, double to_fs);

}  // namespace roomloc
