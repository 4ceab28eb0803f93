#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "roomloc/geometry.hpp"
#include "roomloc/room_acoustics.hpp"
#include "roomloc/signal_chain.hpp"

namespace roomloc {

struct NodeLayout {
  std::vector<Vec3> mic_positions;
  std::size_t reference_index = 0;

  // Needs >= 4 microphones and a valid reference index.
  void validate() const;
  // Extent of the microphones along their thinnest principal axis.
  double smallest_principal_extent() const;
  bool near_coplanar() const { return smallest_principal_extent() < 0.01; }

  // Eight room corners pulled inwards by `inset` on every axis.
  static NodeLayout room_corners(const RoomGeometry& room, double inset);
  // Nested layouts: the first 8 entries are the corners, then 4 mid-points of
  // the long ceiling/floor edges, then 4 wall centers. count in {8, 12, 16}.
  static NodeLayout nested(const RoomGeometry& room, double inset, std::size_t count);
};

struct SyncModel {
  double jitter_std = 1e-6;
  // Per-microphone clock offset; empty means zero for every node.
  std::vector<double> bias_per_node;

  void validate(std::size_t node_count) const;
};

struct TdoaPair {
  std::size_t mic_index = 0;
  double tdoa = 0.0;  // seconds, relative to the reference microphone
};

struct TdoaSet {
  std::size_t reference_index = 0;
  std::vector<TdoaPair> pairs;
};

struct SearchBox {
  Vec3 min;
  Vec3 max;

  bool contains(const Vec3& p) const {
    return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z && p.z <= max.z;
  }
};

struct SolverOptions {
  int max_iterations = 100;
  double step_tolerance = 1e-6;  // meters
  double initial_lambda = 1e-3;
  std::optional<SearchBox> box;
};

struct PositionEstimate {
  Vec3 point;
  double residual_rms = 0.0;  // seconds
  int iterations = 0;
  bool converged = false;
  bool inside_box = true;
};

// Cross-correlation r[k] = sum_n received[n + k] * template[n], k >= 0.
std::vector<double> matched_filter(const Waveform& received, const Waveform& pulse);

// Envelope of the matched-filter output; removes the carrier oscillation so
// that peak picking sees one lobe per arrival.
std::vector<double> matched_filter_envelope(const Waveform& received, const Waveform& pulse);

// Time of the earliest local maximum at least min_peak_ratio times the
// global maximum. Throws NoDetectionError when nothing qualifies.
double detect_toa(std::span<const double> correlation, double fs, double min_peak_ratio = 0.5);

// toas[i] is empty when microphone i produced no detection.
TdoaSet form_tdoa(std::span<const std::optional<double>> toas, const NodeLayout& layout);

std::vector<std::optional<double>> apply_sync_error(std::span<const std::optional<double>> toas,
                                                    const SyncModel& model, std::uint64_t seed);

// Damped Gauss-Newton (Levenberg-Marquardt) on the range-difference residuals.
PositionEstimate solve_position(const TdoaSet& tdoas, const NodeLayout& layout, double speed_of_sound,
                                const Vec3& initial, const SolverOptions& options = {});

// Exact TDOAs for a source at `source`; used for forward-model checks.
TdoaSet exact_tdoas(const Vec3& source, const NodeLayout& layout, double speed_of_sound);

}  // namespace roomloc
