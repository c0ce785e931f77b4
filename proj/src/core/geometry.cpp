#include "trackbench/core/geometry.hpp"

#include <algorithm>

namespace trackbench {

double normalize_angle(double radians) {
    double wrapped = std::remainder(radians, 2.0 * std::numbers::pi);
    if (wrapped <= -std::numbers::pi) {
        wrapped += 2.0 * std::numbers::pi;
    }
    return wrapped;
}

std::array<Vec2, 4> rectangle_corners(Pose2 const & center, double length, double width) {
    double const hl = 0.5 * length;
    double const hw = 0.5 * width;
    std::array<Vec2, 4> const local{Vec2{-hl, -hw}, Vec2{hl, -hw}, Vec2{hl, hw}, Vec2{-hl, hw}};
    std::array<Vec2, 4> out{};
    for (std::size_t i = 0; i < 4; ++i) {
        out[i] = to_world(center, local[i]);
    }
    return out;
}

namespace {

bool separated_on_axis(std::array<Vec2, 4> const & a, std::array<Vec2, 4> const & b, Vec2 axis) {
    auto project = [&](std::array<Vec2, 4> const & pts) {
        double lo = axis.dot(pts[0]);
        double hi = lo;
        for (std::size_t i = 1; i < 4; ++i) {
            double const d = axis.dot(pts[i]);
            lo = std::min(lo, d);
            hi = std::max(hi, d);
        }
        return std::pair{lo, hi};
    };
    auto const [a_lo, a_hi] = project(a);
    auto const [b_lo, b_hi] = project(b);
    return a_hi < b_lo || b_hi < a_lo;
}

} // namespace

bool rectangles_overlap(Pose2 const & a, double a_length, double a_width,
                        Pose2 const & b, double b_length, double b_width) {
    // Bounding-circle pre-filter.
    double const ra = 0.5 * std::hypot(a_length, a_width);
    double const rb = 0.5 * std::hypot(b_length, b_width);
    if ((a.position() - b.position()).norm() > ra + rb) {
        return false;
    }
    auto const ca = rectangle_corners(a, a_length, a_width);
    auto const cb = rectangle_corners(b, b_length, b_width);
    std::array<Vec2, 4> const axes{
        Vec2{std::cos(a.heading), std::sin(a.heading)},
        Vec2{-std::sin(a.heading), std::cos(a.heading)},
        Vec2{std::cos(b.heading), std::sin(b.heading)},
        Vec2{-std::sin(b.heading), std::cos(b.heading)},
    };
    return std::none_of(axes.begin(), axes.end(),
                        [&](Vec2 axis) { return separated_on_axis(ca, cb, axis); });
}

bool rectangle_contains(Pose2 const & center, double length, double width, Vec2 p) {
    Vec2 const local = to_local(center, p);
    return local.x >= -0.5 * length && local.x < 0.5 * length &&
           local.y >= -0.5 * width && local.y < 0.5 * width;
}

bool point_in_polygon(std::span<Vec2 const> polygon, Vec2 p) {
    bool inside = false;
    std::size_t const n = polygon.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        Vec2 const a = polygon[i];
        Vec2 const b = polygon[j];
        if ((a.y > p.y) != (b.y > p.y)) {
            double const x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (p.x < x_cross) {
                inside = !inside;
            }
        }
    }
    return inside;
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
    Vec2 const ab = b - a;
    double const len2 = ab.dot(ab);
    double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return (p - (a + t * ab)).norm();
}

namespace {

int orientation(Vec2 a, Vec2 b, Vec2 c) {
    double const v = (b - a).cross(c - a);
    return (v > 0.0) - (v < 0.0);
}

bool on_segment(Vec2 a, Vec2 b, Vec2 p) {
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) &&
           std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y);
}

bool segments_intersect(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
    int const o1 = orientation(p1, p2, q1);
    int const o2 = orientation(p1, p2, q2);
    int const o3 = orientation(q1, q2, p1);
    int const o4 = orientation(q1, q2, p2);
    if (o1 != o2 && o3 != o4) {
        return true;
    }
    return (o1 == 0 && on_segment(p1, p2, q1)) || (o2 == 0 && on_segment(p1, p2, q2)) ||
           (o3 == 0 && on_segment(q1, q2, p1)) || (o4 == 0 && on_segment(q1, q2, p2));
}

} // namespace

bool polygon_is_simple(std::span<Vec2 const> polygon) {
    std::size_t const n = polygon.size();
    if (n < 3) {
        return false;
    }
    for (std::size_t i = 0; i < n; ++i) {
        Vec2 const a1 = polygon[i];
        Vec2 const a2 = polygon[(i + 1) % n];
        for (std::size_t j = i + 1; j < n; ++j) {
            bool const adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if (adjacent) {
                continue;
            }
            if (segments_intersect(a1, a2, polygon[j], polygon[(j + 1) % n])) {
                return false;
            }
        }
    }
    return true;
}

} // namespace trackbench
