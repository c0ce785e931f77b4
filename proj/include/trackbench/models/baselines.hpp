#pragma once

#include "trackbench/core/prediction.hpp"
#include "trackbench/core/types.hpp"

#include <array>
#include <vector>

namespace trackbench::models {

/// Diversities emitted by baselines without an uncertainty model: b(t) = alpha * t + beta.
struct FixedDiversity {
    double alpha = 0.02;
    double beta = 0.2;
};

struct KalmanParams {
    double accel_sigma = 1.0;       // white-noise acceleration, m/s^2
    double measurement_sigma = 0.1; // position noise, m
    double initial_speed_sigma = 10.0;
    double frame_rate = kDefaultFrameRate;
};

/// Filter state after processing the frame `timestep`: [x, y, vx, vy] (m, m/s) in the BEV frame.
struct KalmanStep {
    int timestep = 0;
    std::array<double, 4> mean{};
    std::array<double, 16> covariance{}; // row-major 4x4
    bool updated = false;                // a measurement was applied at this frame
};

/// Runs the constant-velocity filter over the track's history window.
std::vector<KalmanStep> kalman_filter(Track const & track, int present, int history_len, Pose2 const & sdv_pose,
                                      KalmanParams const & params);

/// Per-track baselines. Tracks without a present detection yield no prediction (empty horizons).
AgentPrediction predict_stationary(Track const & track, int present, int horizons, Pose2 const & sdv_pose,
                                   FixedDiversity const & diversity = {});
/// Extrapolates the mean frame-to-frame velocity of the history; fewer than 2 detections falls back to stationary.
AgentPrediction predict_constant_velocity(Track const & track, int present, int history_len, int horizons,
                                          Pose2 const & sdv_pose, FixedDiversity const & diversity = {});
/// Filters the history then propagates; diversities from the predicted covariance with b = sigma / sqrt(2).
AgentPrediction predict_kalman(Track const & track, int present, int history_len, int horizons, Pose2 const & sdv_pose,
                               KalmanParams const & params = {});

enum class BaselineKind { Stationary, ConstantVelocity, Kalman };

/// Applies a baseline to every track with a present detection, in track id order.
PredictionSet predict_baseline(BaselineKind kind, TrackSet const & tracks, Pose2 const & sdv_pose, int horizons);

} // namespace trackbench::models
