#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "doctest.h"
#include "roomloc/dsp.hpp"
#include "roomloc/errors.hpp"
#include "roomloc/signal_chain.hpp"

using namespace roomloc;

namespace {

Waveform tone(double freq, double amplitude, double fs, std::size_t n, double phase = 0.0) {
  Waveform w{std::vector<double>(n), fs};
  for (std::size_t i = 0; i < n; ++i) w.samples[i] = amplitude * std::sin(2 * std::numbers::pi * freq * i / fs + phase);
  return w;
}

double rms_mid(const Waveform& w) {
  const std::size_t skip = w.samples.size() / 4;
  return dsp::rms(std::span<const double>(w.samples).subspan(skip, w.samples.size() - 2 * skip));
}

}  // namespace

TEST_SUITE("signal_chain") {
  TEST_CASE("chirp length, peak and Nyquist check") {
    ChirpSpec spec;
    const auto c = generate_chirp(spec, 192000);
    CHECK(c.samples.size() == 960);
    CHECK(c.fs == 192000);
    double peak = 0;
    for (double v : c.samples) peak = std::max(peak, std::abs(v));
    CHECK(peak == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(peak <= 1.0);
    CHECK_THROWS_AS(generate_chirp(spec, 80000), DomainError);
    ChirpSpec bad;
    bad.duration = 0;
    CHECK_THROWS(bad.validate());
  }

  TEST_CASE("degenerate chirp is a pure tone") {
    ChirpSpec spec;
    spec.f_start = spec.f_end = 1000;
    spec.duration = 0.1;
    const double fs = 48000;
    const auto c = generate_chirp(spec, fs);
    const auto spectrum = dsp::rfft(c.samples, c.samples.size());
    std::size_t best = 0;
    for (std::size_t k = 1; k < spectrum.size(); ++k) {
      if (std::abs(spectrum[k]) > std::abs(spectrum[best])) best = k;
    }
    CHECK(best * fs / c.samples.size() == doctest::Approx(1000));
  }

  TEST_CASE("chirp autocorrelation peaks strictly at lag zero") {
    for (auto window : {ChirpWindow::kNone, ChirpWindow::kHann}) {
      ChirpSpec spec;
      spec.window = window;
      const auto c = generate_chirp(spec, 192000);
      const auto r = dsp::correlate(c.samples, c.samples);
      for (std::size_t k = 1; k < r.size(); ++k) CHECK(r[k] < r[0]);
    }
  }

  TEST_CASE("ranging resolution") {
    CHECK(ranging_resolution(343, 1.25e6) == doctest::Approx(2.744e-4).epsilon(1e-12));
    CHECK(ranging_resolution(343, 343) == 1.0);
    CHECK(ranging_resolution(343, 192e3) == doctest::Approx(1.786e-3).epsilon(1e-3));
    CHECK(ranging_resolution(343, 2 * 96e3) == ranging_resolution(343, 96e3) / 2);
    CHECK_THROWS_AS(ranging_resolution(343, 0), DomainError);
  }

  TEST_CASE("apply_channel: delay, scale, superposition, linearity") {
    const double fs = 48000;
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    Waveform x{std::vector<double>(200), fs}, y{std::vector<double>(200), fs};
    for (auto& v : x.samples) v = g(rng);
    for (auto& v : y.samples) v = g(rng);

    ImpulseResponse delta{std::vector<double>(31, 0.0), fs, 0.0};
    delta.samples[30] = 1.0;
    const auto delayed = apply_channel(delta, x);
    CHECK(delayed.samples.size() == x.samples.size() + delta.samples.size() - 1);
    for (std::size_t i = 0; i < x.samples.size(); ++i) CHECK(delayed.samples[i + 30] == doctest::Approx(x.samples[i]));

    delta.samples[30] = 0.5;
    const auto half = apply_channel(delta, x);
    for (std::size_t i = 0; i < x.samples.size(); ++i) CHECK(half.samples[i + 30] == doctest::Approx(0.5 * x.samples[i]));

    ImpulseResponse two{std::vector<double>(101, 0.0), fs, 0.0};
    two.samples[10] = 0.9;
    two.samples[100] = -0.3;
    const auto sum = apply_channel(two, x);
    for (std::size_t i = 0; i < sum.samples.size(); ++i) {
      double expect = 0;
      if (i >= 10 && i - 10 < x.samples.size()) expect += 0.9 * x.samples[i - 10];
      if (i >= 100 && i - 100 < x.samples.size()) expect -= 0.3 * x.samples[i - 100];
      CHECK(sum.samples[i] == doctest::Approx(expect).scale(1).epsilon(1e-12));
    }

    ImpulseResponse rir{std::vector<double>(500), fs, 0.0};
    for (auto& v : rir.samples) v = g(rng);
    Waveform mix{std::vector<double>(200), fs};
    for (std::size_t i = 0; i < 200; ++i) mix.samples[i] = 2.5 * x.samples[i] - 1.5 * y.samples[i];
    const auto lhs = apply_channel(rir, mix);
    const auto cx = apply_channel(rir, x), cy = apply_channel(rir, y);
    for (std::size_t i = 0; i < lhs.samples.size(); ++i) {
      const double rhs = 2.5 * cx.samples[i] - 1.5 * cy.samples[i];
      CHECK(std::abs(lhs.samples[i] - rhs) <= 1e-9 * std::max(1.0, std::abs(rhs)));
    }

    ImpulseResponse wrong{{1.0}, 44100, 0.0};
    CHECK_THROWS_AS(apply_channel(wrong, x), ContractError);
  }

  TEST_CASE("microphone sensitivity, bandwidth and gain") {
    const double fs = 1.25e6;
    MicModel mic;
    const auto at1k = mic_transduce(tone(1000, std::sqrt(2.0), fs, 125000), mic);
    CHECK(rms_mid(at1k) == doctest::Approx(0.012589).epsilon(2e-3));

    const auto zero = mic_transduce(Waveform{std::vector<double>(100, 0.0), fs}, mic);
    CHECK(std::all_of(zero.samples.begin(), zero.samples.end(), [](double v) { return v == 0.0; }));

    const auto at80k = mic_transduce(tone(80000, std::sqrt(2.0), fs, 125000), mic);
    CHECK(20 * std::log10(rms_mid(at80k) / rms_mid(at1k)) == doctest::Approx(-3.0).epsilon(0.05));

    // 94 dB SPL tone through the chain lands within +-1 dB of the nominal sensitivity.
    for (double gain : {0.0, 20.0, 57.9}) {
      MicModel m;
      m.gain_db = gain;
      const double p_rms = 20e-6 * std::pow(10.0, 94.0 / 20.0);
      const auto v = mic_transduce(tone(1000, p_rms * std::sqrt(2.0), fs, 125000), m);
      const double expect = std::pow(10.0, (-38.0 + gain) / 20.0);
      CHECK(std::abs(20 * std::log10(rms_mid(v) / expect)) < 1.0);
    }
    MicModel loud;
    loud.gain_db = 60;
    CHECK_THROWS(loud.validate());
  }

  TEST_CASE("DAQ accuracy table") {
    CHECK(daq_absolute_accuracy(DaqDirection::kInput, 10) == doctest::Approx(2688e-6));
    CHECK(daq_absolute_accuracy(DaqDirection::kInput, 5) == doctest::Approx(1379e-6));
    CHECK(daq_absolute_accuracy(DaqDirection::kInput, 2) == doctest::Approx(654e-6));
    CHECK(daq_absolute_accuracy(DaqDirection::kInput, 1) == doctest::Approx(313e-6));
    CHECK(daq_absolute_accuracy(DaqDirection::kOutput, 10) == doctest::Approx(3256e-6));
    CHECK(daq_absolute_accuracy(DaqDirection::kOutput, 5) == doctest::Approx(1616e-6));
    try {
      daq_absolute_accuracy(DaqDirection::kInput, 3);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("10") != std::string::npos);
      CHECK(msg.find("1") != std::string::npos);
    }
    CHECK_THROWS_AS(daq_absolute_accuracy(DaqDirection::kOutput, 1), ConfigError);
  }

  TEST_CASE("quantize: steps, clamping, idempotence") {
    DaqConfig daq;
    daq.accuracy_noise = false;
    CHECK(daq.lsb() == doctest::Approx(30.52e-6).epsilon(1e-3));
    CHECK(daq.accuracy_sigma() == doctest::Approx(313e-6 / 3));

    const auto z = quantize(Waveform{{0.0}, 192000}, daq, 1);
    CHECK(z.samples[0] == 0.0);

    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-0.99, 0.99);
    Waveform x{std::vector<double>(10000), 192000};
    for (auto& v : x.samples) v = u(rng);
    const auto q = quantize(x, daq, 1);
    double worst = 0;
    for (std::size_t i = 0; i < x.samples.size(); ++i) worst = std::max(worst, std::abs(q.samples[i] - x.samples[i]));
    CHECK(worst <= 15.26e-6 * (1 + 1e-6));
    const auto qq = quantize(q, daq, 2);
    CHECK(qq.samples == q.samples);

    const auto clamped = quantize(Waveform{{1.5, -1.5}, 192000}, daq, 1);
    CHECK(clamped.samples[0] <= 1.0);
    CHECK(clamped.samples[0] >= 1.0 - daq.lsb());
    CHECK(clamped.samples[1] == -1.0);

    DaqConfig bad;
    bad.range_volts = 3;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    DaqConfig fast;
    fast.fs_in = 2e6;
    CHECK_THROWS(fast.validate());
  }

  TEST_CASE("quantize perturbation is seeded and has the configured spread") {
    DaqConfig daq;
    Waveform x{std::vector<double>(200000, 0.0), 192000};
    const auto a = quantize(x, daq, 77);
    const auto b = quantize(x, daq, 77);
    CHECK(a.samples == b.samples);
    double s2 = 0;
    for (double v : a.samples) s2 += v * v;
    CHECK(std::sqrt(s2 / a.samples.size()) == doctest::Approx(313e-6 / 3).epsilon(0.02));
  }

  TEST_CASE("resample keeps tones and flags aliasing") {
    const auto same = resample(tone(1000, 1, 48000, 1000), 48000);
    CHECK(same.waveform.samples == tone(1000, 1, 48000, 1000).samples);
    CHECK_FALSE(same.aliasing_warning);

    const auto down = resample(tone(1000, 1, 192000, 192000), 48000);
    CHECK(down.waveform.fs == 48000);
    CHECK_FALSE(down.aliasing_warning);
    CHECK(20 * std::log10(rms_mid(down.waveform) * std::sqrt(2.0)) == doctest::Approx(0.0).scale(1).epsilon(0.1));
    // Zero crossings confirm the frequency: 1 kHz gives 2 crossings per ms.
    const auto& s = down.waveform.samples;
    int crossings = 0;
    for (std::size_t i = 12000; i + 1 < 36000; ++i) crossings += (s[i] < 0) != (s[i + 1] < 0);
    CHECK(crossings == doctest::Approx(1000).epsilon(0.002));

    Waveform pulses{std::vector<double>(19200, 0.0), 192000};
    for (std::size_t k = 1000; k < 19000; k += 3840) pulses.samples[k] = 1.0;
    const auto moved = resample(pulses, 48000).waveform;
    std::vector<std::size_t> peaks;
    for (std::size_t i = 1; i + 1 < moved.samples.size(); ++i) {
      if (moved.samples[i] > 0.5 * *std::max_element(moved.samples.begin(), moved.samples.end()) &&
          moved.samples[i] >= moved.samples[i - 1] && moved.samples[i] >= moved.samples[i + 1]) {
        peaks.push_back(i);
      }
    }
    REQUIRE(peaks.size() >= 2);
    for (std::size_t i = 0; i < peaks.size(); ++i) CHECK(std::abs(static_cast<double>(peaks[i]) - (250.0 + 960.0 * i)) <= 1.0);

    CHECK(resample(tone(30000, 1, 192000, 19200), 48000).aliasing_warning);
    CHECK_THROWS(resample(tone(1000, 1, 48000, 100), 0));
  }
}
