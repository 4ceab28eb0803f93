#include "roomloc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "roomloc/analysis.hpp"
#include "roomloc/dsp.hpp"
#include "roomloc/errors.hpp"
#include "roomloc/io.hpp"
#include "roomloc/scenario.hpp"

namespace roomloc {

NodeLayout LayoutSpec::build(const RoomGeometry& room) const {
  NodeLayout layout;
  switch (kind) {
    case LayoutKind::kCorners:
      layout = NodeLayout::room_corners(room, inset);
      break;
    case LayoutKind::kNested:
      layout = NodeLayout::nested(room, inset, count);
      break;
    case LayoutKind::kExplicit:
      layout.mic_positions = mic_positions;
      break;
  }
  layout.reference_index = reference_index;
  layout.validate();
  for (std::size_t i = 0; i < layout.mic_positions.size(); ++i) {
    if (!room.contains(layout.mic_positions[i])) {
      throw ConfigError("layout: microphone " + std::to_string(i) + " lies outside the room");
    }
  }
  return layout;
}

void Scenario::validate() const {
  room.validate();
  bands.validate();
  if (rt60_targets.size() != bands.size()) throw ConfigError("rt60_targets: expected one value per band");
  for (double t : rt60_targets) {
    if (!(t > 0)) throw ConfigError("rt60_targets: values must be positive");
  }
  if (max_order < 0) throw ConfigError("rir.max_order: must be >= 0");
  if (band_filter_order < 1) throw ConfigError("rir.band_filter_order: must be >= 1");
  if (subbands_per_octave < 1) throw ConfigError("rir.subbands_per_octave: must be >= 1");
  layout.build(room);
  if (!(grid.spacing > 0)) throw ConfigError("grid.spacing: must be positive");
  if (!(grid.margin > 0)) throw ConfigError("grid.margin: must be positive");
  if (!(grid.gt_jitter_std >= 0)) throw ConfigError("grid.gt_jitter_std: must be >= 0");
  chirp.validate();
  speaker.validate();
  if (std::max(chirp.f_start, chirp.f_end) > speaker.bandwidth) {
    throw ConfigError("chirp: sweep exceeds the speaker bandwidth");
  }
  const double chirp_spl = pressure_to_spl(chirp.amplitude / std::sqrt(2.0));
  if (chirp_spl > speaker.max_output_spl_at_1m) throw ConfigError("chirp.amplitude: above the speaker's maximum output");
  daq.validate();
  if (daq.direction != DaqDirection::kInput) throw ConfigError("daq.direction: capture needs an input range");
  if (!(daq.fs_in > 2 * std::max(chirp.f_start, chirp.f_end))) throw ConfigError("daq.fs_in: chirp exceeds Nyquist");
  mic.validate();
  if (noise_preset && noise) throw ConfigError("noise: give either a preset name or a profile, not both");
  if (auto profile = resolved_noise()) profile->validate();
  sync.validate(layout.build(room).mic_positions.size());
  if (!(speed_of_sound > 0)) throw ConfigError("speed_of_sound: must be positive");
  if (!(min_peak_ratio > 0 && min_peak_ratio <= 1)) throw ConfigError("min_peak_ratio: must lie in (0, 1]");
  if (!(emission_offset_max >= 0)) throw ConfigError("emission_offset_max: must be >= 0");
  if (trials < 0) throw ConfigError("trials: must be >= 0");
}

std::optional<NoiseProfile> Scenario::resolved_noise() const {
  if (noise_preset) return techtile_preset(*noise_preset);
  return noise;
}

std::vector<Vec3> rover_grid(const RoomGeometry& room, double spacing, double margin) {
  room.validate();
  if (!(spacing > 0)) throw DomainError("rover_grid: spacing must be positive");
  if (!(margin >= 0)) throw DomainError("rover_grid: margin must be >= 0");
  const double dims[3] = {room.lx, room.ly, room.lz};
  std::vector<double> axes[3];
  for (int a = 0; a < 3; ++a) {
    const double span = dims[a] - 2 * margin;
    if (!(span > 0)) throw DomainError("rover_grid: margin too large for the room");
    // Small slack so that exact multiples survive rounding.
    const auto n = static_cast<std::size_t>(std::floor(span / spacing + 1e-9)) + 1;
    for (std::size_t i = 0; i < n; ++i) axes[a].push_back(margin + static_cast<double>(i) * spacing);
  }
  std::vector<Vec3> out;
  out.reserve(axes[0].size() * axes[1].size() * axes[2].size());
  for (double x : axes[0])
    for (double y : axes[1])
      for (double z : axes[2]) out.push_back({x, y, z});
  return out;
}

Summary summarize(const std::vector<double>& errors) {
  Summary s;
  s.count = errors.size();
  if (errors.empty()) return s;
  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end());
  double sq = 0.0;
  for (double e : sorted) sq += e * e;
  const std::size_t n = sorted.size();
  s.rmse = std::sqrt(sq / static_cast<double>(n));
  s.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
  s.p95 = sorted[std::max<std::size_t>(rank, 1) - 1];
  return s;
}

std::vector<CdfPoint> error_cdf(const std::vector<double>& errors) {
  std::vector<CdfPoint> out;
  if (errors.empty()) return out;
  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  for (int step = 0;; ++step) {
    const double threshold = 0.01 * step;
    const auto below = std::upper_bound(sorted.begin(), sorted.end(), threshold) - sorted.begin();
    out.push_back({threshold, static_cast<double>(below) / n});
    if (below == static_cast<long>(sorted.size())) break;
  }
  return out;
}

std::vector<double> EvalReport::errors() const {
  std::vector<double> out;
  for (const auto& t : trials) {
    if (t.ok) out.push_back(t.error);
  }
  return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t trial_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t state = master + index * 0x9E3779B97F4A7C15ULL;
  return splitmix64(state);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t state = seed ^ (tag * 0xD1B54A32D192ED03ULL);
  return splitmix64(state);
}

SurfaceAbsorption scenario_absorption(const Scenario& sc) {
  SurfaceAbsorption base;
  if (sc.calibration == CalibrationMode::kFitted) {
    AbsorptionFitOptions opts;
    opts.positions = scattered_pairs(sc.room, 6);
    opts.air = sc.air;
    opts.rir.speed_of_sound = sc.speed_of_sound;
    opts.rir.band_filter_order = sc.band_filter_order;
    opts.rir.subbands_per_octave = sc.subbands_per_octave;
    opts.rir.diffuse_phase = sc.diffuse_phase;
    base = fit_absorption_to_rt60(sc.room, sc.bands, sc.rt60_targets, opts).absorption;
  } else {
    base = calibrate_absorption(sc.room, sc.bands, sc.rt60_targets, sc.speed_of_sound);
  }
  BandSpec wide = sc.bands;
  for (double f : BandSpec{}.with_ultrasonic().centers) {
    if (f > wide.centers.back()) wide.centers.push_back(f);
  }
  return base.extended_to(wide);
}

namespace {

struct PositionJob {
  std::vector<std::vector<double>> clean;  // chirp through each channel, capture length
};

enum SeedTag : std::uint64_t { kEmission = 1, kSync = 2, kTruth = 3, kNoiseBase = 1000, kDaqBase = 2000 };

}  // namespace

EvalReport run_scenario(const Scenario& sc) {
  sc.validate();
  EvalReport report;
  report.scenario = sc;
  const NodeLayout layout = sc.layout.build(sc.room);
  report.positions = rover_grid(sc.room, sc.grid.spacing, sc.grid.margin);
  const std::size_t mics = layout.mic_positions.size();
  const auto trials = static_cast<std::size_t>(sc.trials);
  if (trials == 0 || report.positions.empty()) {
    report.cdf = error_cdf({});
    return report;
  }

  const double fs = sc.daq.fs_in;
  const double c = sc.speed_of_sound;
  const Waveform pulse = generate_chirp(sc.chirp, fs);
  const double diagonal = std::sqrt(sc.room.lx * sc.room.lx + sc.room.ly * sc.room.ly + sc.room.lz * sc.room.lz);
  const double capture = sc.emission_offset_max + sc.chirp.duration + diagonal / c + 5e-3;
  const auto capture_len = static_cast<std::size_t>(std::ceil(capture * fs));
  const auto max_offset = static_cast<std::size_t>(std::floor(sc.emission_offset_max * fs));
  const std::optional<NoiseProfile> noise = sc.resolved_noise();

  SurfaceAbsorption absorption;
  if (sc.max_order == 0) {
    const double center = 0.5 * (sc.chirp.f_start + sc.chirp.f_end);
    const double one = 1.0;
    absorption = SurfaceAbsorption::uniform(BandSpec{{center}}, std::span<const double>(&one, 1));
  } else {
    absorption = scenario_absorption(sc);
  }
  RirOptions rir_opts;
  rir_opts.max_order = sc.max_order;
  rir_opts.fs = fs;
  rir_opts.speed_of_sound = c;
  rir_opts.max_duration = capture;
  rir_opts.band_filter_order = sc.band_filter_order;
  rir_opts.subbands_per_octave = sc.subbands_per_octave;
  rir_opts.diffuse_phase = sc.diffuse_phase;

  SolverOptions solver;
  solver.box = SearchBox{{0, 0, 0}, {sc.room.lx, sc.room.ly, sc.room.lz}};

  report.trials.resize(report.positions.size() * trials);

  auto run_position = [&](std::size_t p) {
    const Vec3 source = report.positions[p];
    PositionJob job;
    job.clean.resize(mics);
    for (std::size_t m = 0; m < mics; ++m) {
      const ImpulseResponse rir = simulate_rir(sc.room, absorption, sc.air, source, layout.mic_positions[m], rir_opts);
      auto y = dsp::convolve(pulse.samples, rir.samples);
      y.resize(capture_len, 0.0);
      job.clean[m] = std::move(y);
    }
    for (std::size_t t = 0; t < trials; ++t) {
      const std::size_t index = p * trials + t;
      const std::uint64_t seed = trial_seed(sc.seed, index);
      TrialRecord& rec = report.trials[index];
      rec.position_index = p;
      rec.trial = t;
      rec.truth = source;
      if (sc.grid.gt_jitter && sc.grid.gt_jitter_std > 0) {
        std::mt19937_64 rng(derive_seed(seed, kTruth));
        std::normal_distribution<double> g(0.0, sc.grid.gt_jitter_std);
        const double dx = g(rng);
        const double dy = g(rng);
        const double dz = g(rng);
        rec.truth = source + Vec3{dx, dy, dz};
      }
      std::size_t offset = 0;
      if (max_offset > 0) {
        std::mt19937_64 rng(derive_seed(seed, kEmission));
        offset = std::uniform_int_distribution<std::size_t>(0, max_offset)(rng);
      }

      std::vector<std::optional<double>> toas(mics);
      for (std::size_t m = 0; m < mics; ++m) {
        Waveform pressure{std::vector<double>(capture_len, 0.0), fs};
        const auto& clean = job.clean[m];
        for (std::size_t i = offset; i < capture_len; ++i) pressure.samples[i] = clean[i - offset];
        if (noise) {
          const auto n = synthesize_noise(*noise, fs, static_cast<double>(capture_len) / fs, derive_seed(seed, kNoiseBase + m));
          for (std::size_t i = 0; i < std::min(n.size(), capture_len); ++i) pressure.samples[i] += n[i];
        }
        const Waveform volts = quantize(mic_transduce(pressure, sc.mic), sc.daq, derive_seed(seed, kDaqBase + m));
        try {
          toas[m] = detect_toa(matched_filter_envelope(volts, pulse), fs, sc.min_peak_ratio);
        } catch (const NoDetectionError&) {
          toas[m] = std::nullopt;
        }
      }
      const auto synced = apply_sync_error(toas, sc.sync, derive_seed(seed, kSync));
      rec.sync_offsets.assign(mics, std::nan(""));
      for (std::size_t m = 0; m < mics; ++m) {
        if (toas[m]) rec.sync_offsets[m] = *synced[m] - *toas[m];
      }
      if (std::any_of(toas.begin(), toas.end(), [](const auto& v) { return !v; })) rec.failure = "no-detection";
      try {
        rec.tdoas = form_tdoa(synced, layout);
      } catch (const std::exception&) {
        rec.failure = toas[layout.reference_index] ? "insufficient-tdoa" : "no-detection";
        continue;
      }
      const PositionEstimate est = solve_position(rec.tdoas, layout, c, sc.room.centroid(), solver);
      rec.estimate = est.point;
      rec.error = distance(est.point, rec.truth);
      rec.residual_rms = est.residual_rms;
      rec.iterations = est.iterations;
      rec.converged = est.converged;
      if (!est.converged && rec.failure.empty()) rec.failure = "non-convergence";
      rec.ok = rec.failure.empty();
    }
  };

  unsigned workers = sc.threads ? sc.threads : std::max(1U, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, report.positions.size()));
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t p = next.fetch_add(1);
      if (p >= report.positions.size()) return;
      try {
        run_position(p);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        next.store(report.positions.size());
        return;
      }
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < workers; ++i) pool.emplace_back(worker);
  }
  if (first_error) std::rethrow_exception(first_error);

  for (const auto& t : report.trials) {
    if (t.ok) {
      ++report.success_count;
    } else {
      ++report.failure_count;
    }
  }
  const auto errs = report.errors();
  report.summary = summarize(errs);
  report.cdf = error_cdf(errs);
  return report;
}

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : std::string(kNoDataMarker); }

}  // namespace

void export_report(const EvalReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const std::size_t trials = static_cast<std::size_t>(std::max(report.scenario.trials, 0));

  std::ostringstream errors, estimates, tdoas, sync;
  errors << "trial_id,position_index,trial,true_x,true_y,true_z,error_m,status\n";
  estimates << "trial_id,x,y,z,residual,converged\n";
  tdoas << "trial_id,mic_index,tdoa_s\n";
  sync << "trial_id,mic_index,sync_offset_s\n";
  for (const auto& t : report.trials) {
    const std::size_t id = t.position_index * trials + t.trial;
    errors << id << ',' << t.position_index << ',' << t.trial << ',' << num(t.truth.x) << ',' << num(t.truth.y) << ','
           << num(t.truth.z) << ',' << (t.estimate ? num(t.error) : "") << ',' << (t.ok ? "ok" : t.failure) << '\n';
    if (t.estimate) {
      estimates << id << ',' << num(t.estimate->x) << ',' << num(t.estimate->y) << ',' << num(t.estimate->z) << ','
                << num(t.residual_rms) << ',' << (t.converged ? 1 : 0) << '\n';
    }
    for (const auto& pair : t.tdoas.pairs) tdoas << id << ',' << pair.mic_index << ',' << num(pair.tdoa) << '\n';
    for (std::size_t m = 0; m < t.sync_offsets.size(); ++m) {
      if (!std::isnan(t.sync_offsets[m])) sync << id << ',' << m << ',' << num(t.sync_offsets[m]) << '\n';
    }
  }

  std::ostringstream summary;
  summary << "count,success_count,failure_count,rmse_m,median_m,p95_m,seed\n";
  summary << report.summary.count << ',' << report.success_count << ',' << report.failure_count << ','
          << opt_num(report.summary.rmse) << ',' << opt_num(report.summary.median) << ',' << opt_num(report.summary.p95)
          << ',' << report.scenario.seed << '\n';

  std::ostringstream cdf;
  cdf << "threshold_m,fraction\n";
  for (const auto& point : report.cdf) cdf << num(point.threshold) << ',' << num(point.fraction) << '\n';

  write_text(dir / "errors.csv", errors.str());
  write_text(dir / "estimates.csv", estimates.str());
  write_text(dir / "tdoas.csv", tdoas.str());
  write_text(dir / "sync.csv", sync.str());
  write_text(dir / "summary.csv", summary.str());
  write_text(dir / "cdf.csv", cdf.str());
  write_text(dir / "scenario.json", scenario_to_json(report.scenario) + "\n");
}

}  // namespace roomloc
