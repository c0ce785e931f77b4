#include "support.hpp"

#include "trackbench/core/corpus.hpp"
#include "trackbench/core/error.hpp"
#include "trackbench/core/geometry.hpp"
#include "trackbench/core/rng.hpp"
#include "trackbench/core/tensor.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

using namespace trackbench;

TEST_CASE("rng streams are keyed by seed and label") {
    Rng a = seeded_rng(42, "x");
    Rng b = seeded_rng(42, "x");
    Rng c = seeded_rng(42, "y");
    Rng d = seeded_rng(43, "x");
    int same_c = 0;
    int same_d = 0;
    for (int i = 0; i < 64; ++i) {
        std::uint64_t const va = a.next_u64();
        CHECK(va == b.next_u64());
        same_c += va == c.next_u64();
        same_d += va == d.next_u64();
    }
    CHECK(same_c == 0);
    CHECK(same_d == 0);
}

TEST_CASE("rng draws stay in range") {
    Rng r = seeded_rng(1, "range");
    double mean = 0.0;
    for (int i = 0; i < 20000; ++i) {
        double const u = r.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        mean += u;
        int const k = r.uniform_int(-2, 3);
        REQUIRE(k >= -2);
        REQUIRE(k <= 3);
        REQUIRE(r.uniform_index(7) < 7);
    }
    CHECK(std::abs(mean / 20000 - 0.5) < 0.01);
}

TEST_CASE("child streams are deterministic and distinct from the parent") {
    Rng p = seeded_rng(5, "parent");
    Rng c1 = p.child("a");
    Rng c2 = seeded_rng(5, "parent").child("a");
    CHECK(c1.key() == c2.key());
    CHECK(c1.key() != p.key());
    CHECK(c1.next_u64() == c2.next_u64());
}

TEST_CASE("hash helpers match reference values") {
    // FNV-1a 64 of the empty string and of "a".
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    // splitmix64 finalizer of state 0 advanced once.
    CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
}

TEST_CASE("normalize_angle maps into (-pi, pi]") {
    double const pi = std::numbers::pi;
    CHECK(normalize_angle(pi) == doctest::Approx(pi));
    CHECK(normalize_angle(-pi) == doctest::Approx(pi));
    CHECK(normalize_angle(3 * pi / 2) == doctest::Approx(-pi / 2));
    Rng r = seeded_rng(2, "angles");
    for (int i = 0; i < 1000; ++i) {
        double const a = r.uniform(-50, 50);
        double const n = normalize_angle(a);
        REQUIRE(is_normalized_angle(n));
        CHECK(std::abs(std::remainder(a - n, 2 * pi)) < 1e-9);
    }
}

TEST_CASE("local and world frames are inverse") {
    Rng r = seeded_rng(3, "frames");
    for (int i = 0; i < 200; ++i) {
        Pose2 const o{r.uniform(-20, 20), r.uniform(-20, 20), r.uniform(-3, 3)};
        Vec2 const p{r.uniform(-20, 20), r.uniform(-20, 20)};
        Vec2 const back = to_world(o, to_local(o, p));
        CHECK(back.x == doctest::Approx(p.x));
        CHECK(back.y == doctest::Approx(p.y));
    }
    Vec2 const ahead = to_local({1.0, 1.0, std::numbers::pi / 2}, {1.0, 3.0});
    CHECK(ahead.x == doctest::Approx(2.0));
    CHECK(std::abs(ahead.y) < 1e-12);
}

TEST_CASE("rectangle membership is half-open") {
    Pose2 const c{0.0, 0.0, 0.0};
    CHECK(rectangle_contains(c, 4.0, 2.0, {-2.0, -1.0}));
    CHECK_FALSE(rectangle_contains(c, 4.0, 2.0, {2.0, 0.0}));
    CHECK_FALSE(rectangle_contains(c, 4.0, 2.0, {0.0, 1.0}));
    CHECK(rectangle_contains(c, 4.0, 2.0, {1.999, 0.999}));
}

TEST_CASE("rectangle overlap") {
    CHECK(rectangles_overlap({0, 0, 0}, 4, 2, {3.9, 0, 0}, 4, 2));
    CHECK_FALSE(rectangles_overlap({0, 0, 0}, 4, 2, {4.1, 0, 0}, 4, 2));
    CHECK_FALSE(rectangles_overlap({0, 0, 0}, 4, 2, {0, 2.1, 0}, 4, 2));
    // Rotated by 90 degrees the long axis points along y.
    CHECK(rectangles_overlap({0, 0, 0}, 4, 2, {0, 2.9, std::numbers::pi / 2}, 4, 2));
}

TEST_CASE("polygon helpers") {
    Polygon const square{{0, 0}, {2, 0}, {2, 2}, {0, 2}};
    CHECK(point_in_polygon(square, {1, 1}));
    CHECK_FALSE(point_in_polygon(square, {3, 1}));
    CHECK(polygon_is_simple(square));
    Polygon const bowtie{{0, 0}, {2, 2}, {2, 0}, {0, 2}};
    CHECK_FALSE(polygon_is_simple(bowtie));
    CHECK(point_segment_distance({1, 1}, {0, 0}, {2, 0}) == doctest::Approx(1.0));
    CHECK(point_segment_distance({3, 0}, {0, 0}, {2, 0}) == doctest::Approx(1.0));
}

TEST_CASE("tensor shapes") {
    Tensor t({2, 3, 4});
    CHECK(t.size() == 24);
    t.at(1, 2, 3) = 7.0;
    CHECK(t[23] == 7.0);
    CHECK(element_count({2, 5}) == 10);
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>(3)), ShapeError);
}

TEST_CASE("corpus round trip is exact") {
    testing::TempDir dir("corpus");
    auto const scenes = sim::generate(testing::small_config(11, 6));
    write_corpus(scenes, dir.path / "c.jsonl");
    auto const back = read_corpus(dir.path / "c.jsonl");
    REQUIRE(back.size() == scenes.size());
    CHECK(back == scenes);
    for (auto const & s : scenes) CHECK(decode_scene(encode_scene(s)) == s);
}

TEST_CASE("corpus reader rejects malformed input") {
    testing::TempDir dir("corpus-bad");
    auto const scenes = sim::generate(testing::small_config(12, 2));
    write_corpus(scenes, dir.path / "c.jsonl");
    std::string text;
    {
        std::ifstream in(dir.path / "c.jsonl");
        text.assign(std::istreambuf_iterator<char>(in), {});
    }
    {
        std::ofstream out(dir.path / "truncated.jsonl");
        out << text.substr(0, text.size() / 2);
    }
    CHECK_THROWS_AS(read_corpus(dir.path / "truncated.jsonl"), Error);
    {
        std::ofstream out(dir.path / "garbage.jsonl");
        out << "not json\n";
    }
    CHECK_THROWS_AS(read_corpus(dir.path / "garbage.jsonl"), FormatError);
    CHECK_THROWS_AS(read_corpus(dir.path / "missing.jsonl"), Error);

    auto bad = scenes;
    bad[0].agents.begin()->second.detections[0].center.x = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(write_corpus(bad, dir.path / "nan.jsonl"), Error);
}

TEST_CASE("scene validation names the violation") {
    auto scenes = sim::generate(testing::small_config(13, 1));
    Scene s = scenes[0];
    auto & dets = s.agents.begin()->second.detections;
    std::swap(dets[0], dets[1]);
    CHECK_THROWS_AS(validate(s), InvariantError);
}
