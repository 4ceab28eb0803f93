#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace roomloc::dsp {

// Direct-form-II-transposed second-order section, a0 normalized to 1.
// First-order sections are represented with b2 = a2 = 0.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

// Cascade of biquads. Filtering is stateless across calls.
class SosFilter {
 public:
  SosFilter() = default;
  explicit SosFilter(std::vector<Biquad> sections) : sections_(std::move(sections)) {}

  void apply_in_place(std::span<double> x) const;
  std::vector<double> apply(std::span<const double> x) const;

  std::complex<double> response(double frequency, double fs) const;
  const std::vector<Biquad>& sections() const { return sections_; }
  bool empty() const { return sections_.empty(); }

 private:
  std::vector<Biquad> sections_;
};

// Butterworth designs via bilinear transform with prewarped edges, so the
// -3 dB points land exactly on the requested frequencies.
SosFilter butterworth_lowpass(int order, double cutoff, double fs);
SosFilter butterworth_highpass(int order, double cutoff, double fs);
// `order` is the lowpass-prototype order; the band-pass has 2*order poles.
SosFilter butterworth_bandpass(int order, double low_edge, double high_edge, double fs);

// Octave band around `center`: edges at center/sqrt(2) and center*sqrt(2).
// Falls back to a high-pass when the upper edge is at or above Nyquist.
SosFilter octave_bandpass(double center, double fs, int order);

// Smallest n' >= n whose only prime factors are 2, 3 and 5.
std::size_t fast_fft_size(std::size_t n);

// Real-to-complex forward transform of x zero-padded to n (n/2+1 bins).
std::vector<std::complex<double>> rfft(std::span<const double> x, std::size_t n);
// Inverse of rfft, including the 1/n normalization.
std::vector<double> irfft(std::span<const std::complex<double>> spectrum, std::size_t n);

// Full linear convolution, length a.size() + b.size() - 1.
std::vector<double> convolve(std::span<const double> a, std::span<const double> b);

// r[k] = sum_n x[n + k] * t[n] for k in [0, x.size()).
std::vector<double> correlate(std::span<const double> x, std::span<const double> t);

// |x + j*hilbert(x)|.
std::vector<double> analytic_envelope(std::span<const double> x);

double rms(std::span<const double> x);

}  // namespace roomloc::dsp
