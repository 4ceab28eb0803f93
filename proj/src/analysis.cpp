#include "roomloc/analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>

#include "roomloc/ambient_noise.hpp"
#include "roomloc/dsp.hpp"
#include "roomloc/errors.hpp"

namespace roomloc {

namespace {

constexpr double kFitUpperDb = -5.0;
constexpr double kFitLowerDb = -25.0;

}  // namespace

double RtaResult::max_spl() const {
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& b : bands) m = std::max(m, b.spl);
  return m;
}

EnergyDecayCurve energy_decay_curve(const ImpulseResponse& rir) {
  if (!(rir.fs > 0)) throw DomainError("energy_decay_curve: fs must be positive");
  const auto& h = rir.samples;
  EnergyDecayCurve edc;
  edc.fs = rir.fs;
  edc.values_db.resize(h.size());
  // Backward cumulative energy; long double keeps the tail accurate.
  std::vector<long double> tail(h.size() + 1, 0.0L);
  for (std::size_t i = h.size(); i-- > 0;) {
    tail[i] = tail[i + 1] + static_cast<long double>(h[i]) * h[i];
  }
  const long double total = tail[0];
  if (!(total > 0.0L) || !std::isfinite(static_cast<double>(total))) {
    throw DomainError("energy_decay_curve: impulse response is all zero");
  }
  for (std::size_t i = 0; i < h.size(); ++i) {
    const long double ratio = tail[i] / total;
    const double db = ratio > 0 ? 10.0 * std::log10(static_cast<double>(ratio)) : kEdcFloorDb;
    edc.values_db[i] = std::max(db, kEdcFloorDb);
  }
  edc.values_db[0] = 0.0;
  // Guard against rounding producing a tiny increase.
  for (std::size_t i = 1; i < h.size(); ++i) edc.values_db[i] = std::min(edc.values_db[i], edc.values_db[i - 1]);
  return edc;
}

Rt60Estimate rt60_from_edc(const EnergyDecayCurve& edc) {
  if (!(edc.fs > 0)) throw DomainError("rt60_from_edc: fs must be positive");
  const auto& v = edc.values_db;
  const double floor_db = v.empty() ? 0.0 : v.back();
  if (v.empty() || floor_db > kFitLowerDb) {
    throw InsufficientDecayError("rt60_from_edc: decay reaches only " + std::to_string(floor_db) +
                                     " dB, need " + std::to_string(kFitLowerDb) + " dB",
                                 floor_db);
  }
  const auto begin = std::find_if(v.begin(), v.end(), [](double d) { return d <= kFitUpperDb; });
  const auto end = std::find_if(begin, v.end(), [](double d) { return d < kFitLowerDb; });
  const auto n = static_cast<std::size_t>(end - begin);
  if (n < 2) throw InsufficientDecayError("rt60_from_edc: too few samples in the fit segment", floor_db);

  const auto first = static_cast<std::size_t>(begin - v.begin());
  double st = 0, sy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    st += static_cast<double>(first + i) / edc.fs;
    sy += v[first + i];
  }
  const double mt = st / n, my = sy / n;
  double stt = 0, sty = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dt = static_cast<double>(first + i) / edc.fs - mt;
    const double dy = v[first + i] - my;
    stt += dt * dt;
    sty += dt * dy;
    syy += dy * dy;
  }
  const double slope = sty / stt;  // dB per second
  if (!(slope < 0)) throw InsufficientDecayError("rt60_from_edc: decay slope is not negative", floor_db);
  Rt60Estimate est;
  est.rt60 = -60.0 / slope;
  est.fit_r2 = syy > 0 ? (sty * sty) / (stt * syy) : 1.0;
  return est;
}

std::vector<BandRt60> band_rt60(const ImpulseResponse& rir, const BandSpec& bands, int filter_order) {
  bands.validate();
  if (!(rir.fs > 0)) throw DomainError("band_rt60: fs must be positive");
  if (!(bands.centers.back() / std::numbers::sqrt2 < rir.fs / 2)) {
    throw DomainError("band_rt60: sample rate too low for the highest band");
  }
  const double total = rir.energy();
  std::vector<BandRt60> out;
  for (double fc : bands.centers) {
    BandRt60 r;
    r.center = fc;
    ImpulseResponse filtered{dsp::octave_bandpass(fc, rir.fs, filter_order).apply(rir.samples), rir.fs,
                             rir.t0_offset};
    if (!(filtered.energy() > total * std::pow(10.0, kEdcFloorDb / 10.0))) {
      r.error = "insufficient decay: band carries no energy";
      out.push_back(std::move(r));
      continue;
    }
    try {
      const auto edc = energy_decay_curve(filtered);
      r.achieved_floor_db = edc.values_db.empty() ? 0.0 : edc.values_db.back();
      r.estimate = rt60_from_edc(edc);
    } catch (const InsufficientDecayError& e) {
      r.error = e.what();
      r.achieved_floor_db = e.achieved_floor_db();
    } catch (const DomainError& e) {
      r.error = std::string("insufficient decay: ") + e.what();
    }
    out.push_back(std::move(r));
  }
  return out;
}

RtaResult rta_band_spl(std::span<const double> pressure, double fs, const BandSpec& bands, double window) {
  bands.validate();
  if (!(fs > 0)) throw DomainError("rta_band_spl: fs must be positive");
  if (!(window > 0)) throw ContractError("rta_band_spl: window must be positive");
  const auto win = static_cast<std::size_t>(std::llround(window * fs));
  if (win == 0 || win > pressure.size()) throw ContractError("rta_band_spl: window longer than the signal");

  RtaResult result;
  result.window_duration = static_cast<double>(win) / fs;
  for (double fc : bands.centers) {
    RtaBand band;
    band.center = fc;
    const auto y = dsp::octave_bandpass(fc, fs, kAnalysisFilterOrder).apply(pressure);
    std::vector<double> prefix(y.size() + 1, 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) prefix[i + 1] = prefix[i] + y[i] * y[i];
    double best = 0.0;
    for (std::size_t i = 0; i + win <= y.size(); ++i) best = std::max(best, prefix[i + win] - prefix[i]);
    const double ms = best / static_cast<double>(win);
    if (ms > 0) band.spl = pressure_to_spl(std::sqrt(ms));
    result.bands.push_back(band);
  }
  return result;
}

namespace {

double halton(std::size_t index, unsigned base) {
  double f = 1.0;
  double r = 0.0;
  while (index > 0) {
    f /= base;
    r += f * static_cast<double>(index % base);
    index /= base;
  }
  return r;
}

}  // namespace

std::vector<SourceMicPair> scattered_pairs(const RoomGeometry& room, std::size_t count, std::size_t skip) {
  room.validate();
  auto point = [&](std::size_t i, unsigned bx, unsigned by, unsigned bz) {
    return Vec3{room.lx * (0.1 + 0.8 * halton(i, bx)), room.ly * (0.1 + 0.8 * halton(i, by)),
                room.lz * (0.1 + 0.8 * halton(i, bz))};
  };
  std::vector<SourceMicPair> out;
  std::size_t accepted = 0;
  for (std::size_t i = 1; out.size() < count; ++i) {
    if (i > 100000 * (count + skip)) throw DomainError("scattered_pairs: room too small for 1 m separation");
    const SourceMicPair pair{point(i, 2, 3, 5), point(i, 7, 11, 13)};
    if (distance(pair.source, pair.mic) < 1.0) continue;
    if (accepted++ >= skip) out.push_back(pair);
  }
  return out;
}

std::vector<double> mean_band_rt60(const RoomGeometry& room, const SurfaceAbsorption& absorption,
                                   const std::optional<AirAbsorptionModel>& air,
                                   std::span<const SourceMicPair> positions, const RirOptions& options) {
  if (positions.empty()) throw ContractError("mean_band_rt60: no positions given");
  const std::size_t nb = absorption.bands.size();
  std::vector<double> sum(nb, 0.0);
  std::vector<int> count(nb, 0);
  for (const auto& pos : positions) {
    const auto rir = simulate_rir(room, absorption, air, pos.source, pos.mic, options);
    const auto bands = band_rt60(rir, absorption.bands);
    for (std::size_t b = 0; b < nb; ++b) {
      if (bands[b].estimate) {
        sum[b] += bands[b].estimate->rt60;
        ++count[b];
      }
    }
  }
  std::vector<double> mean(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    mean[b] = count[b] > 0 ? sum[b] / count[b] : std::numeric_limits<double>::quiet_NaN();
  }
  return mean;
}

AbsorptionFit fit_absorption_to_rt60(const RoomGeometry& room, const BandSpec& bands,
                                     std::span<const double> target_rt60, const AbsorptionFitOptions& options) {
  if (options.positions.empty()) throw ContractError("fit_absorption_to_rt60: no calibration positions");
  if (options.max_iterations < 1) throw DomainError("fit_absorption_to_rt60: max_iterations must be >= 1");
  if (target_rt60.size() != bands.size()) throw ContractError("fit_absorption_to_rt60: one target per band required");
  const double c = options.rir.speed_of_sound;

  std::vector<double> alpha(bands.size());
  {
    // Sabine start; bands that Sabine deems infeasible start near full absorption.
    for (std::size_t b = 0; b < bands.size(); ++b) {
      try {
        const BandSpec one{{bands.centers[b]}};
        const std::array<double, 1> t{target_rt60[b]};
        alpha[b] = calibrate_absorption(room, one, t, c, options.air).alpha[0][0];
      } catch (const InfeasibleError&) {
        alpha[b] = 0.95;
      }
    }
  }

  constexpr double kMinAlpha = 1e-4;
  constexpr double kDefaultSlope = -1.0;
  AbsorptionFit fit;
  std::vector<double> prev_log_alpha(bands.size(), std::numeric_limits<double>::quiet_NaN());
  std::vector<double> prev_log_rt(bands.size(), std::numeric_limits<double>::quiet_NaN());

  for (int it = 0; it < options.max_iterations; ++it) {
    fit.iterations = it + 1;
    auto absorption = SurfaceAbsorption::uniform(bands, alpha);
    const auto achieved = mean_band_rt60(room, absorption, options.air, options.positions, options.rir);
    fit.absorption = absorption;
    fit.achieved_rt60 = achieved;

    bool all_ok = true;
    for (std::size_t b = 0; b < bands.size(); ++b) {
      if (std::isnan(achieved[b]) || std::abs(achieved[b] / target_rt60[b] - 1.0) > options.relative_tolerance) {
        all_ok = false;
      }
    }
    if (all_ok) {
      fit.converged = true;
      break;
    }
    if (it + 1 == options.max_iterations) break;

    for (std::size_t b = 0; b < bands.size(); ++b) {
      if (std::isnan(achieved[b])) continue;
      const double la = std::log(alpha[b]);
      const double lt = std::log(achieved[b]);
      double slope = kDefaultSlope;
      if (!std::isnan(prev_log_alpha[b]) && std::abs(la - prev_log_alpha[b]) > 1e-9) {
        const double s = (lt - prev_log_rt[b]) / (la - prev_log_alpha[b]);
        if (s < -0.2 && s > -3.0) slope = s;
      }
      prev_log_alpha[b] = la;
      prev_log_rt[b] = lt;
      const double next = la + (std::log(target_rt60[b]) - lt) / slope;
      alpha[b] = std::clamp(std::exp(next), kMinAlpha, 1.0);
    }
  }
  return fit;
}

}  // namespace roomloc
