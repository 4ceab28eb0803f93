#include "roomloc/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>
#include <numeric>
#include <optional>
#include <stdexcept>

#include "roomloc/errors.hpp"

namespace roomloc::dsp {

namespace {

using cplx = std::complex<double>;
constexpr double kPi = std::numbers::pi;

// FFTW planning is not thread safe; execution is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct PlanDeleter {
  void operator()(fftw_plan_s* p) const {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(p);
  }
};
using Plan = std::unique_ptr<fftw_plan_s, PlanDeleter>;

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

template <typename T>
std::unique_ptr<T[], FftwFree> fftw_buffer(std::size_t n) {
  auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * std::max<std::size_t>(n, 1)));
  if (p == nullptr) throw std::bad_alloc();
  return std::unique_ptr<T[], FftwFree>(p);
}

// Bilinear map of an analog zpk (already prewarped) to digital zpk.
struct Zpk {
  std::vector<cplx> zeros;
  std::vector<cplx> poles;
};

cplx bilinear(cplx s, double fs) { return (2.0 * fs + s) / (2.0 * fs - s); }

std::vector<cplx> butterworth_prototype_poles(int order) {
  std::vector<cplx> poles;
  poles.reserve(order);
  for (int k = 0; k < order; ++k) {
    const double theta = kPi * (2.0 * k + order + 1.0) / (2.0 * order);
    poles.push_back(std::polar(1.0, theta));
  }
  return poles;
}

double prewarp(double f, double fs) { return 2.0 * fs * std::tan(kPi * f / fs); }

// Groups conjugate pole pairs into sections. Zeros are assigned in order
// (two per section); every zero here is real (+1 or -1).
SosFilter to_sos(const Zpk& zpk, double normalize_freq, double fs) {
  std::vector<cplx> poles = zpk.poles;
  std::vector<cplx> upper;
  std::vector<double> real_poles;
  for (const auto& p : poles) {
    if (std::abs(p.imag()) < 1e-12 * std::max(1.0, std::abs(p))) {
      real_poles.push_back(p.real());
    } else if (p.imag() > 0) {
      upper.push_back(p);
    }
  }
  std::vector<double> zeros;
  for (const auto& z : zpk.zeros) zeros.push_back(z.real());

  std::vector<Biquad> sections;
  std::size_t zi = 0;
  auto next_zero = [&]() -> std::optional<double> {
    if (zi < zeros.size()) return zeros[zi++];
    return std::nullopt;
  };
  for (const auto& p : upper) {
    Biquad s;
    s.a1 = -2.0 * p.real();
    s.a2 = std::norm(p);
    auto z1 = next_zero();
    auto z2 = next_zero();
    // (1 - z1 q)(1 - z2 q) with q = z^-1; missing zeros are at the origin.
    const double r1 = z1.value_or(0.0);
    const double r2 = z2.value_or(0.0);
    s.b0 = 1.0;
    s.b1 = -(r1 + r2);
    s.b2 = r1 * r2;
    sections.push_back(s);
  }
  for (std::size_t i = 0; i < real_poles.size(); ++i) {
    Biquad s;
    if (i + 1 < real_poles.size()) {
      const double p1 = real_poles[i], p2 = real_poles[i + 1];
      s.a1 = -(p1 + p2);
      s.a2 = p1 * p2;
      const double r1 = next_zero().value_or(0.0);
      const double r2 = next_zero().value_or(0.0);
      s.b1 = -(r1 + r2);
      s.b2 = r1 * r2;
      ++i;
    } else {
      s.a1 = -real_poles[i];
      const double r1 = next_zero().value_or(0.0);
      s.b1 = -r1;
    }
    sections.push_back(s);
  }

  SosFilter unscaled(sections);
  const double gain = std::abs(unscaled.response(normalize_freq, fs));
  if (!(gain > 0.0) || !std::isfinite(gain)) throw std::runtime_error("filter normalization failed");
  // Spread the gain correction evenly so no single section has a tiny b.
  const double per_section = std::pow(gain, -1.0 / static_cast<double>(sections.size()));
  for (auto& s : sections) {
    s.b0 *= per_section;
    s.b1 *= per_section;
    s.b2 *= per_section;
  }
  return SosFilter(std::move(sections));
}

void check_design(int order, double fs) {
  if (order < 1) throw DomainError("filter order must be >= 1");
  if (!(fs > 0.0)) throw DomainError("sample rate must be positive");
}

}  // namespace

void SosFilter::apply_in_place(std::span<double> x) const {
  for (const auto& s : sections_) {
    double z1 = 0.0, z2 = 0.0;
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
}

std::vector<double> SosFilter::apply(std::span<const double> x) const {
  std::vector<double> y(x.begin(), x.end());
  apply_in_place(y);
  return y;
}

std::complex<double> SosFilter::response(double frequency, double fs) const {
  const cplx q = std::polar(1.0, -2.0 * kPi * frequency / fs);
  cplx h = 1.0;
  for (const auto& s : sections_) {
    h *= (s.b0 + s.b1 * q + s.b2 * q * q) / (1.0 + s.a1 * q + s.a2 * q * q);
  }
  return h;
}

SosFilter butterworth_lowpass(int order, double cutoff, double fs) {
  check_design(order, fs);
  if (!(cutoff > 0.0 && cutoff < fs / 2)) throw DomainError("lowpass cutoff must lie in (0, fs/2)");
  const double wc = prewarp(cutoff, fs);
  Zpk zpk;
  for (const auto& p : butterworth_prototype_poles(order)) {
    zpk.poles.push_back(bilinear(p * wc, fs));
    zpk.zeros.emplace_back(-1.0, 0.0);
  }
  return to_sos(zpk, 0.0, fs);
}

SosFilter butterworth_highpass(int order, double cutoff, double fs) {
  check_design(order, fs);
  if (!(cutoff > 0.0 && cutoff < fs / 2)) throw DomainError("highpass cutoff must lie in (0, fs/2)");
  const double wc = prewarp(cutoff, fs);
  Zpk zpk;
  for (const auto& p : butterworth_prototype_poles(order)) {
    zpk.poles.push_back(bilinear(wc / p, fs));
    zpk.zeros.emplace_back(1.0, 0.0);
  }
  return to_sos(zpk, fs / 2, fs);
}

SosFilter butterworth_bandpass(int order, double low_edge, double high_edge, double fs) {
  check_design(order, fs);
  if (!(low_edge > 0.0 && high_edge > low_edge && high_edge < fs / 2)) {
    throw DomainError("bandpass edges must satisfy 0 < low < high < fs/2");
  }
  const double w1 = prewarp(low_edge, fs);
  const double w2 = prewarp(high_edge, fs);
  const double w0sq = w1 * w2;
  const double bw = w2 - w1;
  Zpk zpk;
  for (const auto& p : butterworth_prototype_poles(order)) {
    const cplx pb = p * bw;
    const cplx disc = std::sqrt(pb * pb - 4.0 * w0sq);
    zpk.poles.push_back(bilinear((pb + disc) / 2.0, fs));
    zpk.poles.push_back(bilinear((pb - disc) / 2.0, fs));
  }
  // Alternate the zeros so each section gets one at +1 and one at -1.
  for (int k = 0; k < order; ++k) {
    zpk.zeros.emplace_back(1.0, 0.0);
    zpk.zeros.emplace_back(-1.0, 0.0);
  }
  const double center_digital = fs / kPi * std::atan(std::sqrt(w0sq) / (2.0 * fs));
  return to_sos(zpk, center_digital, fs);
}

SosFilter octave_bandpass(double center, double fs, int order) {
  const double lo = center / std::numbers::sqrt2;
  const double hi = center * std::numbers::sqrt2;
  if (!(lo < fs / 2)) throw DomainError("octave band lies above Nyquist");
  if (hi >= 0.95 * fs / 2) return butterworth_highpass(order, lo, fs);
  return butterworth_bandpass(order, lo, hi, fs);
}

std::size_t fast_fft_size(std::size_t n) {
  if (n <= 1) return 1;
  for (std::size_t m = n;; ++m) {
    std::size_t r = m;
    for (std::size_t f : {2u, 3u, 5u}) {
      while (r % f == 0) r /= f;
    }
    if (r == 1) return m;
  }
}

std::vector<std::complex<double>> rfft(std::span<const double> x, std::size_t n) {
  if (n == 0) return {};
  auto in = fftw_buffer<double>(n);
  auto out = fftw_buffer<fftw_complex>(n / 2 + 1);
  Plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan.reset(fftw_plan_dft_r2c_1d(static_cast<int>(n), in.get(), out.get(), FFTW_ESTIMATE));
  }
  const std::size_t m = std::min(n, x.size());
  std::copy_n(x.begin(), m, in.get());
  std::fill(in.get() + m, in.get() + n, 0.0);
  fftw_execute(plan.get());
  std::vector<cplx> spectrum(n / 2 + 1);
  for (std::size_t k = 0; k < spectrum.size(); ++k) spectrum[k] = {out[k][0], out[k][1]};
  return spectrum;
}

std::vector<double> irfft(std::span<const std::complex<double>> spectrum, std::size_t n) {
  if (n == 0) return {};
  if (spectrum.size() != n / 2 + 1) throw ContractError("irfft: spectrum size must be n/2+1");
  auto in = fftw_buffer<fftw_complex>(n / 2 + 1);
  auto out = fftw_buffer<double>(n);
  Plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan.reset(fftw_plan_dft_c2r_1d(static_cast<int>(n), in.get(), out.get(), FFTW_ESTIMATE));
  }
  for (std::size_t k = 0; k < spectrum.size(); ++k) {
    in[k][0] = spectrum[k].real();
    in[k][1] = spectrum[k].imag();
  }
  fftw_execute(plan.get());
  std::vector<double> y(out.get(), out.get() + n);
  const double scale = 1.0 / static_cast<double>(n);
  for (double& v : y) v *= scale;
  return y;
}

std::vector<double> convolve(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return {};
  const std::size_t len = a.size() + b.size() - 1;
  if (std::min(a.size(), b.size()) <= 64) {
    std::vector<double> y(len, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i] == 0.0) continue;
      for (std::size_t j = 0; j < b.size(); ++j) y[i + j] += a[i] * b[j];
    }
    return y;
  }
  const std::size_t n = fast_fft_size(len);
  auto fa = rfft(a, n);
  const auto fb = rfft(b, n);
  for (std::size_t k = 0; k < fa.size(); ++k) fa[k] *= fb[k];
  auto y = irfft(fa, n);
  y.resize(len);
  return y;
}

std::vector<double> correlate(std::span<const double> x, std::span<const double> t) {
  if (x.empty() || t.empty()) return {};
  const std::size_t n = fast_fft_size(x.size() + t.size() - 1);
  auto fx = rfft(x, n);
  const auto ft = rfft(t, n);
  for (std::size_t k = 0; k < fx.size(); ++k) fx[k] *= std::conj(ft[k]);
  auto r = irfft(fx, n);
  r.resize(x.size());
  return r;
}

std::vector<double> analytic_envelope(std::span<const double> x) {
  if (x.empty()) return {};
  const std::size_t n = fast_fft_size(x.size());
  auto spec = rfft(x, n);
  // Analytic signal: keep DC (and Nyquist for even n), double positive bins.
  std::vector<cplx> full(n, 0.0);
  full[0] = spec[0];
  const std::size_t half = n / 2;
  for (std::size_t k = 1; k < spec.size(); ++k) {
    full[k] = (n % 2 == 0 && k == half) ? spec[k] : 2.0 * spec[k];
  }
  auto in = fftw_buffer<fftw_complex>(n);
  auto out = fftw_buffer<fftw_complex>(n);
  Plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan.reset(fftw_plan_dft_1d(static_cast<int>(n), in.get(), out.get(), FFTW_BACKWARD, FFTW_ESTIMATE));
  }
  for (std::size_t k = 0; k < n; ++k) {
    in[k][0] = full[k].real();
    in[k][1] = full[k].imag();
  }
  fftw_execute(plan.get());
  std::vector<double> env(x.size());
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < env.size(); ++i) env[i] = std::hypot(out[i][0], out[i][1]) * scale;
  return env;
}

double rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  const double ss = std::inner_product(x.begin(), x.end(), x.begin(), 0.0);
  return std::sqrt(ss / static_cast<double>(x.size()));
}

}  // namespace roomloc::dsp
