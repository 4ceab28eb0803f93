#include "roomloc/positioning.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>

#include "roomloc/dsp.hpp"
#include "roomloc/errors.hpp"

namespace roomloc {

namespace {

Eigen::Vector3d to_eigen(const Vec3& v) { return {v.x, v.y, v.z}; }
Vec3 from_eigen(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

void check_pulse_inputs(const Waveform& received, const Waveform& pulse) {
  if (received.samples.empty() || pulse.samples.empty()) throw ContractError("matched_filter: empty input");
  if (received.fs != pulse.fs) throw ContractError("matched_filter: sample rates differ");
  if (std::all_of(pulse.samples.begin(), pulse.samples.end(), [](double v) { return v == 0.0; })) {
    throw ContractError("matched_filter: template is all zero");
  }
}

}  // namespace

void NodeLayout::validate() const {
  if (mic_positions.size() < 4) throw UnderdeterminedError("3D positioning needs at least 4 microphones");
  if (reference_index >= mic_positions.size()) throw ContractError("reference index out of range");
}

double NodeLayout::smallest_principal_extent() const {
  if (mic_positions.empty()) return 0.0;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& p : mic_positions) mean += to_eigen(p);
  mean /= static_cast<double>(mic_positions.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : mic_positions) {
    const Eigen::Vector3d d = to_eigen(p) - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  const Eigen::Vector3d axis = eig.eigenvectors().col(0);  // smallest eigenvalue first
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& p : mic_positions) {
    const double s = axis.dot(to_eigen(p) - mean);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  return hi - lo;
}

NodeLayout NodeLayout::room_corners(const RoomGeometry& room, double inset) {
  return nested(room, inset, 8);
}

NodeLayout NodeLayout::nested(const RoomGeometry& room, double inset, std::size_t count) {
  if (count != 8 && count != 12 && count != 16) throw ConfigError("nested layout size must be 8, 12 or 16");
  if (!(inset >= 0) || 2 * inset >= std::min({room.lx, room.ly, room.lz})) {
    throw DomainError("layout inset must be non-negative and smaller than half of each dimension");
  }
  const double x0 = inset, x1 = room.lx - inset;
  const double y0 = inset, y1 = room.ly - inset;
  const double z0 = inset, z1 = room.lz - inset;
  NodeLayout layout;
  for (double z : {z0, z1}) {
    for (double y : {y0, y1}) {
      for (double x : {x0, x1}) layout.mic_positions.push_back({x, y, z});
    }
  }
  const double xm = room.lx / 2, ym = room.ly / 2, zm = room.lz / 2;
  if (count >= 12) {
    layout.mic_positions.push_back({xm, y0, z1});
    layout.mic_positions.push_back({xm, y1, z1});
    layout.mic_positions.push_back({xm, y0, z0});
    layout.mic_positions.push_back({xm, y1, z0});
  }
  if (count >= 16) {
    layout.mic_positions.push_back({x0, ym, zm});
    layout.mic_positions.push_back({x1, ym, zm});
    layout.mic_positions.push_back({xm, y0, zm});
    layout.mic_positions.push_back({xm, y1, zm});
  }
  return layout;
}

void SyncModel::validate(std::size_t node_count) const {
  if (!(jitter_std >= 0)) throw DomainError("sync jitter must be non-negative");
  if (!bias_per_node.empty() && bias_per_node.size() != node_count) {
    throw ContractError("sync bias list must be empty or have one entry per microphone");
  }
}

std::vector<double> matched_filter(const Waveform& received, const Waveform& pulse) {
  check_pulse_inputs(received, pulse);
  return dsp::correlate(received.samples, pulse.samples);
}

std::vector<double> matched_filter_envelope(const Waveform& received, const Waveform& pulse) {
  return dsp::analytic_envelope(matched_filter(received, pulse));
}

double detect_toa(std::span<const double> c, double fs, double min_peak_ratio) {
  if (!(fs > 0)) throw DomainError("detect_toa: fs must be positive");
  if (!(min_peak_ratio > 0 && min_peak_ratio <= 1)) throw DomainError("detect_toa: min_peak_ratio must lie in (0, 1]");
  if (c.empty()) throw NoDetectionError("detect_toa: empty correlation");
  const double global = *std::max_element(c.begin(), c.end());
  if (!(global > 0)) throw NoDetectionError("detect_toa: no positive correlation peak");
  const double threshold = min_peak_ratio * global;
  const std::size_t n = c.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (c[i] < threshold) continue;
    const bool left_ok = i == 0 || c[i] >= c[i - 1];
    // Walk across a plateau so a flat top counts once, at its start.
    std::size_t j = i;
    while (j + 1 < n && c[j + 1] == c[i]) ++j;
    const bool right_ok = j + 1 == n || c[j + 1] < c[i];
    if (left_ok && right_ok) return static_cast<double>(i) / fs;
  }
  throw NoDetectionError("detect_toa: no qualifying peak");
}

TdoaSet form_tdoa(std::span<const std::optional<double>> toas, const NodeLayout& layout) {
  if (toas.size() != layout.mic_positions.size()) throw ContractError("form_tdoa: one TOA slot per microphone required");
  if (layout.reference_index >= toas.size()) throw ContractError("form_tdoa: reference index out of range");
  const auto& ref = toas[layout.reference_index];
  if (!ref) throw NoDetectionError("form_tdoa: reference microphone has no detection");
  TdoaSet set;
  set.reference_index = layout.reference_index;
  for (std::size_t i = 0; i < toas.size(); ++i) {
    if (i == layout.reference_index || !toas[i]) continue;
    set.pairs.push_back({i, *toas[i] - *ref});
  }
  if (set.pairs.size() < 3) throw UnderdeterminedError("form_tdoa: fewer than 3 usable TDOA pairs");
  return set;
}

std::vector<std::optional<double>> apply_sync_error(std::span<const std::optional<double>> toas,
                                                    const SyncModel& model, std::uint64_t seed) {
  model.validate(toas.size());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<std::optional<double>> out(toas.begin(), toas.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    // Draw for every node so a missing detection does not shift later draws.
    const double jitter = model.jitter_std * g(rng);
    if (!out[i]) continue;
    const double bias = model.bias_per_node.empty() ? 0.0 : model.bias_per_node[i];
    if (model.jitter_std == 0.0 && bias == 0.0) continue;
    *out[i] += bias + jitter;
  }
  return out;
}

TdoaSet exact_tdoas(const Vec3& source, const NodeLayout& layout, double c) {
  TdoaSet set;
  set.reference_index = layout.reference_index;
  const double d_ref = distance(source, layout.mic_positions.at(layout.reference_index));
  for (std::size_t i = 0; i < layout.mic_positions.size(); ++i) {
    if (i == layout.reference_index) continue;
    set.pairs.push_back({i, (distance(source, layout.mic_positions[i]) - d_ref) / c});
  }
  return set;
}

PositionEstimate solve_position(const TdoaSet& tdoas, const NodeLayout& layout, double c, const Vec3& initial,
                                const SolverOptions& opt) {
  if (tdoas.pairs.size() < 3) throw UnderdeterminedError("solve_position: need at least 3 TDOA pairs");
  if (!(c > 0)) throw DomainError("solve_position: speed of sound must be positive");
  if (tdoas.reference_index >= layout.mic_positions.size()) throw ContractError("solve_position: bad reference index");
  for (const auto& p : tdoas.pairs) {
    if (p.mic_index >= layout.mic_positions.size() || p.mic_index == tdoas.reference_index) {
      throw ContractError("solve_position: TDOA pair refers to an invalid microphone");
    }
  }

  const Eigen::Vector3d ref = to_eigen(layout.mic_positions[tdoas.reference_index]);
  const std::size_t m = tdoas.pairs.size();

  // Residuals in meters: (|x - m_i| - |x - m_ref|) - c * tdoa_i.
  auto evaluate = [&](const Eigen::Vector3d& x, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
    const Eigen::Vector3d dr = x - ref;
    const double nr = dr.norm();
    const Eigen::Vector3d ur = nr > 1e-12 ? Eigen::Vector3d(dr / nr) : Eigen::Vector3d::Zero();
    for (std::size_t k = 0; k < m; ++k) {
      const Eigen::Vector3d di = x - to_eigen(layout.mic_positions[tdoas.pairs[k].mic_index]);
      const double ni = di.norm();
      r(static_cast<Eigen::Index>(k)) = (ni - nr) - c * tdoas.pairs[k].tdoa;
      if (jac) {
        const Eigen::Vector3d ui = ni > 1e-12 ? Eigen::Vector3d(di / ni) : Eigen::Vector3d::Zero();
        jac->row(static_cast<Eigen::Index>(k)) = (ui - ur).transpose();
      }
    }
  };

  PositionEstimate est;
  Eigen::Vector3d x = to_eigen(initial);
  Eigen::VectorXd r(m), r_new(m);
  Eigen::MatrixXd jac(m, 3);
  evaluate(x, r, &jac);
  double cost = r.squaredNorm();
  double lambda = opt.initial_lambda;

  for (int it = 0; it < opt.max_iterations; ++it) {
    est.iterations = it + 1;
    const Eigen::Matrix3d jtj = jac.transpose() * jac;
    const Eigen::Vector3d g = jac.transpose() * r;
    Eigen::Matrix3d damped = jtj;
    for (int d = 0; d < 3; ++d) damped(d, d) += lambda * (jtj(d, d) + 1e-12);
    const Eigen::Vector3d step = damped.ldlt().solve(-g);
    if (!step.allFinite()) break;
    if (step.norm() < opt.step_tolerance) {
      est.converged = true;
      break;
    }
    const Eigen::Vector3d x_new = x + step;
    evaluate(x_new, r_new, nullptr);
    const double cost_new = r_new.squaredNorm();
    if (cost_new < cost) {
      x = x_new;
      r = r_new;
      cost = cost_new;
      evaluate(x, r, &jac);
      lambda = std::max(lambda / 10.0, 1e-12);
    } else {
      lambda *= 10.0;
      if (lambda > 1e12) break;
    }
  }

  est.point = from_eigen(x);
  est.residual_rms = std::sqrt(cost / static_cast<double>(m)) / c;
  if (opt.box) est.inside_box = opt.box->contains(est.point);
  return est;
}

}  // namespace roomloc
