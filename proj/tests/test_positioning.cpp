#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "roomloc/errors.hpp"
#include "roomloc/positioning.hpp"

using namespace roomloc;

namespace {

const RoomGeometry kRoom{};

NodeLayout corners() {
  NodeLayout l;
  for (double x : {0.0, 8.0})
    for (double y : {0.0, 4.0})
      for (double z : {0.0, 2.4}) l.mic_positions.push_back({x, y, z});
  return l;
}

std::vector<std::optional<double>> exact_toas(const Vec3& src, const NodeLayout& layout) {
  std::vector<std::optional<double>> t;
  for (const auto& m : layout.mic_positions) t.push_back(distance(src, m) / 343.0);
  return t;
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST_SUITE("positioning") {
  TEST_CASE("layouts") {
    const auto l = NodeLayout::room_corners(kRoom, 0.1);
    CHECK(l.mic_positions.size() == 8);
    CHECK_FALSE(l.near_coplanar());
    for (const auto& m : l.mic_positions) CHECK(kRoom.contains(m));
    for (std::size_t n : {8, 12, 16}) {
      const auto nested = NodeLayout::nested(kRoom, 0.1, n);
      CHECK(nested.mic_positions.size() == n);
      for (std::size_t i = 0; i < 8; ++i) CHECK(nested.mic_positions[i].x == l.mic_positions[i].x);
    }
    CHECK_THROWS_AS(NodeLayout::nested(kRoom, 0.1, 10), ConfigError);

    NodeLayout flat;
    flat.mic_positions = {{0, 0, 1}, {1, 0, 1}, {0, 1, 1}, {1, 1, 1.005}};
    flat.validate();
    CHECK(flat.near_coplanar());
    NodeLayout few;
    few.mic_positions = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    CHECK_THROWS(few.validate());
  }

  TEST_CASE("matched filter finds the delay regardless of scale") {
    const double fs = 192000;
    const auto pulse = generate_chirp(ChirpSpec{}, fs);
    Waveform rx{std::vector<double>(5000, 0.0), fs};
    for (std::size_t i = 0; i < pulse.samples.size(); ++i) rx.samples[1234 + i] = pulse.samples[i];
    CHECK(argmax(matched_filter(rx, pulse)) == 1234);
    for (auto& v : rx.samples) v *= 0.003;
    CHECK(argmax(matched_filter(rx, pulse)) == 1234);
    CHECK(argmax(matched_filter_envelope(rx, pulse)) == 1234);
    CHECK_THROWS_AS(matched_filter(Waveform{{}, fs}, pulse), ContractError);
    CHECK_THROWS_AS(matched_filter(Waveform{{1.0}, 48000}, pulse), ContractError);
  }

  TEST_CASE("pulse compression survives 0 dB SNR") {
    const double fs = 192000;
    const auto pulse = generate_chirp(ChirpSpec{}, fs);
    const double signal_rms = std::sqrt(0.5);
    int hits = 0;
    const int trials = 200;
    for (int s = 0; s < trials; ++s) {
      std::mt19937_64 rng(1000 + s);
      std::normal_distribution<double> g(0.0, signal_rms);
      Waveform rx{std::vector<double>(4000), fs};
      for (auto& v : rx.samples) v = g(rng);
      for (std::size_t i = 0; i < pulse.samples.size(); ++i) rx.samples[700 + i] += pulse.samples[i];
      hits += argmax(matched_filter(rx, pulse)) == 700;
    }
    CHECK(hits >= 0.99 * trials);
  }

  TEST_CASE("detect_toa") {
    std::vector<double> c(4000, 0.0);
    c[1920] = 1.0;
    CHECK(detect_toa(c, 192000) == doctest::Approx(0.010));

    std::vector<double> two(500, 0.0);
    two[100] = 1.0;
    two[180] = 0.8;
    CHECK(detect_toa(two, 1000, 0.5) == doctest::Approx(0.100));
    two[100] = 0.3;
    CHECK(detect_toa(two, 1000, 0.5) == doctest::Approx(0.180));

    CHECK_THROWS_AS(detect_toa(std::vector<double>(100, 0.0), 1000), NoDetectionError);
  }

  TEST_CASE("form_tdoa") {
    NodeLayout l = corners();
    std::vector<std::optional<double>> same(8, 0.25);
    const auto zero = form_tdoa(same, l);
    CHECK(zero.pairs.size() == 7);
    for (const auto& p : zero.pairs) CHECK(p.tdoa == 0.0);

    NodeLayout line;
    line.mic_positions = {{1, 0, 0}, {3, 0, 0}, {0, 2, 0}, {0, 0, 2}};
    std::vector<std::optional<double>> t{1.0 / 343, 3.0 / 343, 2.0 / 343, 2.0 / 343};
    const auto set = form_tdoa(t, line);
    CHECK(set.pairs[0].mic_index == 1);
    CHECK(set.pairs[0].tdoa == doctest::Approx(5.831e-3).epsilon(1e-4));

    auto dropped = same;
    dropped[5].reset();
    const auto fewer = form_tdoa(dropped, l);
    CHECK(fewer.pairs.size() == 6);
    CHECK(std::none_of(fewer.pairs.begin(), fewer.pairs.end(), [](const TdoaPair& p) { return p.mic_index == 5; }));

    auto no_ref = same;
    no_ref[0].reset();
    CHECK_THROWS_AS(form_tdoa(no_ref, l), NoDetectionError);
    std::vector<std::optional<double>> sparse(8);
    sparse[0] = 0.1;
    sparse[1] = 0.1;
    sparse[2] = 0.1;
    CHECK_THROWS_AS(form_tdoa(sparse, l), UnderdeterminedError);
  }

  TEST_CASE("sync error injection") {
    const NodeLayout l = corners();
    const auto toas = exact_toas({2, 1, 1}, l);
    SyncModel none;
    none.jitter_std = 0;
    CHECK(apply_sync_error(toas, none, 5) == toas);

    SyncModel jitter;
    jitter.jitter_std = 1e-6;
    CHECK(apply_sync_error(toas, jitter, 5) == apply_sync_error(toas, jitter, 5));
    double s2 = 0;
    std::size_t n = 0;
    for (std::uint64_t seed = 0; seed < 5000; ++seed) {
      const auto out = apply_sync_error(toas, jitter, seed);
      for (std::size_t i = 0; i < toas.size(); ++i) {
        const double dr = (*out[i] - *toas[i]) * 343.0;
        s2 += dr * dr;
        ++n;
      }
    }
    CHECK(std::sqrt(s2 / n) == doctest::Approx(0.343e-3).epsilon(0.03));

    SyncModel bias;
    bias.jitter_std = 0;
    bias.bias_per_node.assign(8, 3.7e-4);
    const auto before = form_tdoa(toas, l);
    const auto after = form_tdoa(apply_sync_error(toas, bias, 1), l);
    REQUIRE(before.pairs.size() == after.pairs.size());
    for (std::size_t i = 0; i < before.pairs.size(); ++i) {
      CHECK(after.pairs[i].tdoa == doctest::Approx(before.pairs[i].tdoa).epsilon(1e-9).scale(1e-12));
    }
    SyncModel bad;
    bad.jitter_std = -1;
    CHECK_THROWS(apply_sync_error(toas, bad, 1));
  }

  TEST_CASE("exact TDOAs recover the source") {
    const NodeLayout l = corners();
    const Vec3 src{2, 1, 1};
    const auto est = solve_position(exact_tdoas(src, l, 343), l, 343, kRoom.centroid());
    CHECK(est.converged);
    CHECK(distance(est.point, src) < 1e-6);
    CHECK(est.iterations <= 100);
  }

  TEST_CASE("symmetric fixed point at the layout centroid") {
    const NodeLayout l = corners();
    const auto set = exact_tdoas(kRoom.centroid(), l, 343);
    for (const auto& p : set.pairs) CHECK(std::abs(p.tdoa) < 1e-15);
    const auto est = solve_position(set, l, 343, kRoom.centroid());
    CHECK(distance(est.point, kRoom.centroid()) < 1e-9);
    CHECK(est.converged);
  }

  TEST_CASE("residual vanishes at the true position") {
    const NodeLayout l = corners();
    const Vec3 src{5.5, 3.1, 0.7};
    const auto est = solve_position(exact_tdoas(src, l, 343), l, 343, src);
    CHECK(est.residual_rms < 1e-12);
  }

  TEST_CASE("translation equivariance") {
    NodeLayout l = corners();
    const Vec3 src{2.5, 1.5, 1.1}, shift{10.0, -3.0, 4.0};
    const auto a = solve_position(exact_tdoas(src, l, 343), l, 343, kRoom.centroid());
    NodeLayout moved = l;
    for (auto& m : moved.mic_positions) m = m + shift;
    const auto b = solve_position(exact_tdoas(src + shift, moved, 343), moved, 343, kRoom.centroid() + shift);
    CHECK(distance(b.point, a.point + shift) < 1e-6);
  }

  TEST_CASE("common-mode TOA offsets leave the solution unchanged") {
    const NodeLayout l = corners();
    const Vec3 src{6.1, 0.9, 1.7};
    const auto base = exact_toas(src, l);
    std::vector<std::optional<double>> shifted;
    for (const auto& t : base) shifted.push_back(*t + 0.25);
    const auto c = form_tdoa(base, l), d = form_tdoa(shifted, l);
    for (std::size_t i = 0; i < c.pairs.size(); ++i) CHECK(std::abs(d.pairs[i].tdoa - c.pairs[i].tdoa) < 1e-15);
    const auto ec = solve_position(c, l, 343, kRoom.centroid());
    const auto ed = solve_position(d, l, 343, kRoom.centroid());
    CHECK(distance(ec.point, ed.point) < 1e-9);
  }

  TEST_CASE("timing noise of one sample gives millimetre errors") {
    const NodeLayout l = corners();
    const double fs = 192000;
    std::mt19937_64 rng(17);
    std::normal_distribution<double> g(0.0, 1.0 / fs);
    std::uniform_real_distribution<double> ux(0.5, 7.5), uy(0.5, 3.5), uz(0.5, 1.9);
    std::vector<double> errors;
    for (int i = 0; i < 200; ++i) {
      const Vec3 src{ux(rng), uy(rng), uz(rng)};
      auto set = exact_tdoas(src, l, 343);
      for (auto& p : set.pairs) p.tdoa += g(rng);
      errors.push_back(distance(solve_position(set, l, 343, kRoom.centroid()).point, src));
    }
    const double med = median(errors);
    MESSAGE("median error with 1/fs timing noise: " << med * 1000 << " mm");
    CHECK(med < 10 * ranging_resolution(343, fs));
  }

  TEST_CASE("median error grows with sync jitter") {
    const NodeLayout l = corners();
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> ux(0.5, 7.5), uy(0.5, 3.5), uz(0.5, 1.9);
    std::vector<Vec3> sources;
    for (int i = 0; i < 200; ++i) sources.push_back({ux(rng), uy(rng), uz(rng)});
    double prev = -1;
    for (double jitter : {0.0, 1e-6, 1e-5, 1e-4}) {
      SyncModel sync;
      sync.jitter_std = jitter;
      std::vector<double> errors;
      for (std::size_t i = 0; i < sources.size(); ++i) {
        const auto toas = apply_sync_error(exact_toas(sources[i], l), sync, 100 + i);
        errors.push_back(distance(solve_position(form_tdoa(toas, l), l, 343, kRoom.centroid()).point, sources[i]));
      }
      const double med = median(errors);
      CAPTURE(jitter);
      CHECK(med >= prev);
      prev = med;
    }
  }

  TEST_CASE("solver contract") {
    const NodeLayout l = corners();
    TdoaSet two;
    two.pairs = {{1, 0.0}, {2, 0.0}};
    CHECK_THROWS_AS(solve_position(two, l, 343, kRoom.centroid()), UnderdeterminedError);
    SolverOptions opts;
    opts.max_iterations = 1;
    const auto est = solve_position(exact_tdoas({1, 1, 1}, l, 343), l, 343, kRoom.centroid(), opts);
    CHECK_FALSE(est.converged);
    CHECK(est.iterations == 1);
    opts.max_iterations = 100;
    opts.box = SearchBox{{0, 0, 0}, {8, 4, 2.4}};
    const auto boxed = solve_position(exact_tdoas({1, 1, 1}, l, 343), l, 343, kRoom.centroid(), opts);
    CHECK(boxed.inside_box);
  }
}
