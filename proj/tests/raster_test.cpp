#include "support.hpp"

#include "trackbench/core/error.hpp"
#include "trackbench/raster/raster.hpp"
#include "trackbench/tracking/tracking.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cmath>

using namespace trackbench;
using raster::RasterConfig;
using raster::Variant;

namespace {

/// Footprint membership written out with explicit trigonometry.
bool covers(Detection const & d, Pose2 const & sdv, double px, double py) {
    double const dx = d.center.x - sdv.x, dy = d.center.y - sdv.y;
    double const c0 = std::cos(sdv.heading), s0 = std::sin(sdv.heading);
    double const bx = c0 * dx + s0 * dy, by = -s0 * dx + c0 * dy;
    double const h = d.center.heading - sdv.heading;
    double const u = std::cos(h) * (px - bx) + std::sin(h) * (py - by);
    double const v = -std::sin(h) * (px - bx) + std::cos(h) * (py - by);
    return u >= -0.5 * d.extent.length && u < 0.5 * d.extent.length && v >= -0.5 * d.extent.width &&
           v < 0.5 * d.extent.width;
}

TrackSet one_track(std::vector<Detection> dets, int present, int history) {
    TrackSet ts;
    ts.present_timestep = present;
    ts.history_len = history;
    Track t;
    t.id = 1;
    t.detections = std::move(dets);
    ts.tracks.push_back(t);
    return ts;
}

} // namespace

TEST_CASE("channel counts") {
    RasterConfig c;
    c.history_len = 11;
    CHECK(raster::channel_count(c) == 14);
    c.variant = Variant::DisplacementField;
    CHECK(raster::channel_count(c) == 25);
    c.history_len = 1;
    CHECK(raster::channel_count(c) == 5);
}

TEST_CASE("grid geometry uses half-open cells centered on the origin") {
    raster::GridGeometry const g{4, 4, 1.0};
    CHECK(g.x_min() == -2.0);
    CHECK(g.cell_center(0, 0) == Vec2{-1.5, -1.5});
    CHECK(g.cell_of({-2.0, -2.0}) == GridIndex{0, 0});
    CHECK(g.cell_of({0.0, 0.0}) == GridIndex{2, 2});
    CHECK_FALSE(g.cell_of({2.0, 0.0}).has_value());
    CHECK(g.cell_of({1.999, -0.001}) == GridIndex{3, 1});
}

TEST_CASE("axis-aligned footprint covers the expected cells") {
    RasterConfig c;
    c.width = 8;
    c.height = 8;
    c.cell_size = 1.0;
    c.history_len = 1;
    // A 2 x 1 box centered at (0.5, 0.5) spans x in [-0.5, 1.5) and y in [0, 1): centers x = -0.5, 0.5 and y = 0.5.
    auto const ts = one_track({testing::det(0.5, 0.5, 0.0, 0, 2.0, 1.0)}, 0, 1);
    auto const r = raster::rasterize_history(ts, MapSpec{}, Pose2{}, c);
    int on = 0;
    for (int iy = 0; iy < 8; ++iy) {
        for (int ix = 0; ix < 8; ++ix) on += r.values.at(3, iy, ix) != 0.0;
    }
    CHECK(on == 2);
    CHECK(r.values.at(3, 4, 3) == 1.0);
    CHECK(r.values.at(3, 4, 4) == 1.0);
}

TEST_CASE("binary history matches a brute-force rasterizer") {
    RasterConfig c;
    auto sc = testing::small_config(41, 6, sim::DensityMode::Dense);
    sc.map_template = sim::MapTemplate::CurvedRoad;
    sc.maneuver_mix = {1, 1, 1, 1, 1};
    for (Scene const & s : sim::generate(sc)) {
        auto const t = tracking::perfect_tracker(s, 15, c.history_len);
        Pose2 const sdv = s.sdv_trajectory[15];
        auto const r = raster::rasterize_history(t.trackset, s.map, sdv, c);
        REQUIRE(r.channels() == 14);
        REQUIRE(r.layout.size() == 14);
        CHECK(r.layout[3] == raster::ChannelDesc{raster::ChannelKind::Occupancy, 0});
        for (int k = 0; k < c.history_len; ++k) {
            for (int iy = 0; iy < c.height; ++iy) {
                for (int ix = 0; ix < c.width; ++ix) {
                    double const px = -16.0 + (ix + 0.5) * 0.5;
                    double const py = -16.0 + (iy + 0.5) * 0.5;
                    double want = 0.0;
                    for (auto const & tr : t.trackset.tracks) {
                        if (Detection const * d = tr.at(15 - k); d && covers(*d, sdv, px, py)) want = 1.0;
                    }
                    REQUIRE(r.values.at(3 + k, iy, ix) == want);
                }
            }
        }
    }
}

TEST_CASE("displacement field matches a brute-force rasterizer") {
    RasterConfig c;
    c.variant = Variant::DisplacementField;
    for (Scene const & s : sim::generate(testing::small_config(42, 6, sim::DensityMode::Dense))) {
        auto const t = tracking::perfect_tracker(s, 15, c.history_len);
        Pose2 const sdv = s.sdv_trajectory[15];
        auto const r = raster::rasterize_displacement(t.trackset, s.map, sdv, c);
        REQUIRE(r.channels() == 25);
        CHECK(r.layout[4] == raster::ChannelDesc{raster::ChannelKind::PresentZero, 0});
        double const c0 = std::cos(sdv.heading), s0 = std::sin(sdv.heading);
        auto bev = [&](Pose2 p) { return Vec2{c0 * (p.x - sdv.x) + s0 * (p.y - sdv.y), -s0 * (p.x - sdv.x) + c0 * (p.y - sdv.y)}; };
        for (int iy = 0; iy < c.height; ++iy) {
            for (int ix = 0; ix < c.width; ++ix) {
                double const px = -16.0 + (ix + 0.5) * 0.5;
                double const py = -16.0 + (iy + 0.5) * 0.5;
                REQUIRE(r.values.at(4, iy, ix) == 0.0);
                double occupied = 0.0;
                for (auto const & tr : t.trackset.tracks) {
                    if (covers(*tr.at(15), sdv, px, py)) occupied = 1.0;
                }
                REQUIRE(r.values.at(3, iy, ix) == occupied);
                for (int k = 1; k < c.history_len; ++k) {
                    // Later tracks (by id) overwrite earlier ones where past footprints overlap.
                    Vec2 want{};
                    for (auto const & tr : t.trackset.tracks) {
                        Detection const * past = tr.at(15 - k);
                        if (past == nullptr || !covers(*past, sdv, px, py)) continue;
                        Vec2 const a = bev(tr.at(15)->center);
                        Vec2 const b = bev(past->center);
                        want = {(a.x - b.x) / 10.0, (a.y - b.y) / 10.0};
                    }
                    REQUIRE(r.values.at(3 + 2 * k, iy, ix) == doctest::Approx(want.x).epsilon(1e-12));
                    REQUIRE(r.values.at(4 + 2 * k, iy, ix) == doctest::Approx(want.y).epsilon(1e-12));
                }
            }
        }
    }
}

TEST_CASE("binary history ignores track identities") {
    Scene const s = sim::generate(testing::small_config(43, 1, sim::DensityMode::Dense))[0];
    auto const clean = tracking::perfect_tracker(s, 15, 11);
    tracking::NoiseSpec ns;
    ns.switch_chance = 1.0;
    ns.pattern = tracking::SwitchPattern::UntilEnd;
    auto const noisy = tracking::inject_noise(clean, ns);
    REQUIRE(tracking::provenance_mismatches(noisy) > 0);
    RasterConfig c;
    Pose2 const sdv = s.sdv_trajectory[15];
    CHECK(raster::rasterize_history(noisy.trackset, s.map, sdv, c).values ==
          raster::rasterize_history(clean.trackset, s.map, sdv, c).values);
    c.variant = Variant::DisplacementField;
    CHECK_FALSE(raster::rasterize_displacement(noisy.trackset, s.map, sdv, c).values ==
                raster::rasterize_displacement(clean.trackset, s.map, sdv, c).values);
}

TEST_CASE("map channels mark drivable area around the SDV") {
    Scene const s = sim::generate(testing::small_config(44, 1))[0];
    RasterConfig c;
    Tensor const m = raster::rasterize_map(s.map, s.sdv_trajectory[15], c);
    REQUIRE(m.shape() == std::vector<int>{3, 64, 64});
    CHECK(m.at(0, 32, 32) == 1.0); // the SDV stands on the road
    double lanes = 0.0;
    for (double v : std::span<double const>(m.data() + 64 * 64, 64 * 64)) lanes += v;
    CHECK(lanes > 0.0);
}

TEST_CASE("state sequences use older minus newer changes") {
    std::vector<Detection> dets;
    for (int t = 0; t <= 3; ++t) {
        auto d = testing::det(2.0 * t, 1.0, 0.0, t);
        d.speed = 20.0;
        dets.push_back(d);
    }
    dets.erase(dets.begin() + 1); // gap at t = 1
    Track tr;
    tr.id = 7;
    tr.detections = dets;
    auto const seq = raster::agent_state_seq(tr, 3, 5, Pose2{});
    REQUIRE(seq.steps.size() == 5);
    CHECK(seq.steps[0].valid);
    CHECK(seq.steps[0].displacement == Vec2{});
    CHECK(seq.steps[1].displacement == Vec2{-2.0, 0.0});
    CHECK(seq.steps[1].change == Vec2{-2.0, 0.0});
    CHECK_FALSE(seq.steps[2].valid);
    CHECK(seq.steps[3].valid);
    CHECK(seq.steps[3].change == Vec2{}); // its successor is missing
    CHECK_FALSE(seq.steps[4].valid);
    auto const f = raster::state_features(seq);
    REQUIRE(f.size() == 30);
    CHECK(f[4] == doctest::Approx(2.0));
    CHECK(f[5] == 1.0);
    CHECK(f[17] == 0.0);
    tr.detections.pop_back();
    CHECK_THROWS_AS(raster::agent_state_seq(tr, 3, 5, Pose2{}), InvariantError);
}

TEST_CASE("tensor files round trip") {
    testing::TempDir dir("tensor");
    Tensor t({2, 3}, {1.0, -2.5, 3.25, 1e-300, 0.0, 7.0});
    raster::write_tensor_file(t, dir.path / "t.bin");
    CHECK(raster::read_tensor_file(dir.path / "t.bin") == t);
    CHECK_THROWS_AS(raster::read_tensor_file(dir.path / "missing.bin"), Error);
}

TEST_CASE("raster config validation") {
    RasterConfig c;
    c.history_len = 0;
    CHECK_THROWS_AS(raster::validate(c), InvariantError);
    c = RasterConfig{};
    c.cell_size = -1;
    CHECK_THROWS_AS(raster::validate(c), InvariantError);
    c = RasterConfig{};
    c.variant = Variant::DisplacementField;
    auto const back = raster::raster_config_from_json(raster::to_json(c));
    CHECK(back.variant == Variant::DisplacementField);
    CHECK(back.width == c.width);
}
