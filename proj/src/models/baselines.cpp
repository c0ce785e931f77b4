#include "trackbench/models/baselines.hpp"

#include "trackbench/core/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace trackbench::models {

namespace {

using Mat4 = Eigen::Matrix4d;
using Vec4 = Eigen::Vector4d;

AgentPrediction prediction_origin(Track const & track, int present, Pose2 const & sdv_pose) {
    AgentPrediction p;
    p.track = track.id;
    if (Detection const * d = track.at(present)) p.origin = to_local(sdv_pose, d->center.position());
    return p;
}

KalmanStep to_step(int t, Vec4 const & x, Mat4 const & P, bool updated) {
    KalmanStep s;
    s.timestep = t;
    s.updated = updated;
    for (int i = 0; i < 4; ++i) {
        s.mean[static_cast<std::size_t>(i)] = x(i);
        for (int j = 0; j < 4; ++j) s.covariance[static_cast<std::size_t>(4 * i + j)] = P(i, j);
    }
    return s;
}

void transition(KalmanParams const & kp, Mat4 & F, Mat4 & Q) {
    double const dt = 1.0 / kp.frame_rate;
    double const q = kp.accel_sigma * kp.accel_sigma;
    F.setIdentity();
    F(0, 2) = dt;
    F(1, 3) = dt;
    Q.setZero();
    for (int a = 0; a < 2; ++a) {
        Q(a, a) = q * dt * dt * dt / 3.0;
        Q(a, a + 2) = q * dt * dt / 2.0;
        Q(a + 2, a) = q * dt * dt / 2.0;
        Q(a + 2, a + 2) = q * dt;
    }
}

} // namespace

std::vector<KalmanStep> kalman_filter(Track const & track, int present, int history_len, Pose2 const & sdv_pose,
                                      KalmanParams const & kp) {
    if (kp.frame_rate <= 0.0 || kp.measurement_sigma < 0.0 || kp.accel_sigma < 0.0) {
        throw InvariantError("KalmanParams: rates and noise levels must be positive");
    }
    int const first = present - history_len + 1;
    std::vector<KalmanStep> out;
    Mat4 F;
    Mat4 Q;
    transition(kp, F, Q);
    Eigen::Matrix<double, 2, 4> H = Eigen::Matrix<double, 2, 4>::Zero();
    H(0, 0) = 1.0;
    H(1, 1) = 1.0;
    Eigen::Matrix2d const R = Eigen::Matrix2d::Identity() * kp.measurement_sigma * kp.measurement_sigma;

    Vec4 x = Vec4::Zero();
    Mat4 P = Mat4::Zero();
    bool started = false;
    for (int t = first; t <= present; ++t) {
        Detection const * d = track.at(t);
        if (!started) {
            if (d == nullptr) continue;
            Vec2 const z = to_local(sdv_pose, d->center.position());
            x << z.x, z.y, 0.0, 0.0;
            double const r2 = kp.measurement_sigma * kp.measurement_sigma;
            double const v2 = kp.initial_speed_sigma * kp.initial_speed_sigma;
            P = Vec4(r2, r2, v2, v2).asDiagonal();
            started = true;
            out.push_back(to_step(t, x, P, true));
            continue;
        }
        x = F * x;
        P = F * P * F.transpose() + Q;
        if (d != nullptr) {
            Vec2 const z = to_local(sdv_pose, d->center.position());
            Eigen::Vector2d const y = Eigen::Vector2d(z.x, z.y) - H * x;
            Eigen::Matrix2d const S = H * P * H.transpose() + R;
            Eigen::Matrix<double, 4, 2> const K = P * H.transpose() * S.inverse();
            x = x + K * y;
            P = (Mat4::Identity() - K * H) * P;
        }
        out.push_back(to_step(t, x, P, d != nullptr));
    }
    return out;
}

AgentPrediction predict_stationary(Track const & track, int present, int horizons, Pose2 const & sdv_pose,
                                   FixedDiversity const & div) {
    AgentPrediction p = prediction_origin(track, present, sdv_pose);
    if (track.at(present) == nullptr) return p;
    for (int h = 1; h <= horizons; ++h) {
        double const b = div.alpha * h + div.beta;
        p.horizons.push_back({0.0, 0.0, b, b});
    }
    return p;
}

AgentPrediction predict_constant_velocity(Track const & track, int present, int history_len, int horizons,
                                          Pose2 const & sdv_pose, FixedDiversity const & div) {
    int const first = present - history_len + 1;
    Detection const * oldest = nullptr;
    for (auto const & d : track.detections) {
        if (d.timestep >= first && d.timestep < present) {
            oldest = &d;
            break;
        }
    }
    Detection const * now = track.at(present);
    if (now == nullptr || oldest == nullptr) return predict_stationary(track, present, horizons, sdv_pose, div);
    // The mean of consecutive frame displacements telescopes to the endpoint difference.
    Vec2 const a = to_local(sdv_pose, oldest->center.position());
    Vec2 const b = to_local(sdv_pose, now->center.position());
    double const steps = present - oldest->timestep;
    Vec2 const v{(b.x - a.x) / steps, (b.y - a.y) / steps};
    AgentPrediction p = prediction_origin(track, present, sdv_pose);
    for (int h = 1; h <= horizons; ++h) {
        double const bh = div.alpha * h + div.beta;
        p.horizons.push_back({v.x * h, v.y * h, bh, bh});
    }
    return p;
}

AgentPrediction predict_kalman(Track const & track, int present, int history_len, int horizons, Pose2 const & sdv_pose,
                               KalmanParams const & kp) {
    Detection const * now = track.at(present);
    AgentPrediction p = prediction_origin(track, present, sdv_pose);
    if (now == nullptr) return p;
    auto const steps = kalman_filter(track, present, history_len, sdv_pose, kp);
    KalmanStep const & last = steps.back();
    Vec4 x;
    Mat4 P;
    for (int i = 0; i < 4; ++i) {
        x(i) = last.mean[static_cast<std::size_t>(i)];
        for (int j = 0; j < 4; ++j) P(i, j) = last.covariance[static_cast<std::size_t>(4 * i + j)];
    }
    Mat4 F;
    Mat4 Q;
    transition(kp, F, Q);
    double const heading = normalize_angle(now->center.heading - sdv_pose.heading);
    Eigen::Vector2d const along(std::cos(heading), std::sin(heading));
    Eigen::Vector2d const across(-std::sin(heading), std::cos(heading));
    for (int h = 1; h <= horizons; ++h) {
        x = F * x;
        P = F * P * F.transpose() + Q;
        Eigen::Matrix2d const pos = P.topLeftCorner<2, 2>();
        // Laplace with variance 2 b^2 matched to the Gaussian variance.
        double const b_at = std::sqrt(std::max(along.dot(pos * along), 0.0) / 2.0);
        double const b_ct = std::sqrt(std::max(across.dot(pos * across), 0.0) / 2.0);
        p.horizons.push_back({x(0) - p.origin.x, x(1) - p.origin.y, std::max(b_at, 1e-9), std::max(b_ct, 1e-9)});
    }
    return p;
}

PredictionSet predict_baseline(BaselineKind kind, TrackSet const & tracks, Pose2 const & sdv_pose, int horizons) {
    std::vector<Track const *> order;
    for (auto const & t : tracks.tracks) order.push_back(&t);
    std::sort(order.begin(), order.end(), [](Track const * a, Track const * b) { return a->id < b->id; });
    PredictionSet out;
    for (Track const * t : order) {
        if (t->at(tracks.present_timestep) == nullptr) continue;
        int const present = tracks.present_timestep;
        switch (kind) {
        case BaselineKind::Stationary: out.agents.push_back(predict_stationary(*t, present, horizons, sdv_pose)); break;
        case BaselineKind::ConstantVelocity:
            out.agents.push_back(predict_constant_velocity(*t, present, tracks.history_len, horizons, sdv_pose));
            break;
        case BaselineKind::Kalman:
            out.agents.push_back(predict_kalman(*t, present, tracks.history_len, horizons, sdv_pose));
            break;
        }
    }
    return out;
}

} // namespace trackbench::models
