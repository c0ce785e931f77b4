#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace trackbench {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    friend bool operator==(Vec2 a, Vec2 b) = default;

    [[nodiscard]] double dot(Vec2 o) const { return x * o.x + y * o.y; }
    [[nodiscard]] double cross(Vec2 o) const { return x * o.y - y * o.x; }
    [[nodiscard]] double norm() const { return std::hypot(x, y); }
};

/// Planar pose; heading in (-pi, pi].
struct Pose2 {
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;

    [[nodiscard]] Vec2 position() const { return {x, y}; }
    friend bool operator==(Pose2 const &, Pose2 const &) = default;
};

/// Wraps an angle into (-pi, pi].
double normalize_angle(double radians);

[[nodiscard]] inline bool is_normalized_angle(double radians) {
    return radians > -std::numbers::pi && radians <= std::numbers::pi;
}

/// Rotates `v` by `radians` counter-clockwise.
inline Vec2 rotate(Vec2 v, double radians) {
    double const c = std::cos(radians);
    double const s = std::sin(radians);
    return {c * v.x - s * v.y, s * v.x + c * v.y};
}

/// World point expressed in the frame centered on `origin` with `origin.heading` along +x.
inline Vec2 to_local(Pose2 const & origin, Vec2 world) {
    return rotate(world - origin.position(), -origin.heading);
}

/// Inverse of to_local.
inline Vec2 to_world(Pose2 const & origin, Vec2 local) {
    return rotate(local, origin.heading) + origin.position();
}

using Polygon = std::vector<Vec2>;
using Polyline = std::vector<Vec2>;

/// Corners of a heading-aligned rectangle, counter-clockwise from rear-right.
std::array<Vec2, 4> rectangle_corners(Pose2 const & center, double length, double width);

/// Separating-axis test between two oriented rectangles (touching counts as overlap).
bool rectangles_overlap(Pose2 const & a, double a_length, double a_width,
                        Pose2 const & b, double b_length, double b_width);

/// Membership of `p` in an oriented rectangle, half-open on each local axis:
/// -L/2 <= u < L/2 and -W/2 <= v < W/2.
bool rectangle_contains(Pose2 const & center, double length, double width, Vec2 p);

/// Even-odd crossing test with half-open edge convention.
bool point_in_polygon(std::span<Vec2 const> polygon, Vec2 p);

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b);

/// True when no two non-adjacent edges of the closed polygon intersect.
bool polygon_is_simple(std::span<Vec2 const> polygon);

} // namespace trackbench
