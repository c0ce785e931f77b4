#pragma once

#include "trackbench/core/types.hpp"

#include <optional>
#include <vector>

namespace trackbench {

/// One horizon of a prediction: center offset from the present center (BEV meters) and
/// Laplace diversities along and across the track.
struct HorizonPrediction {
    double dx = 0.0;
    double dy = 0.0;
    double b_at = 1.0;
    double b_ct = 1.0;
    friend bool operator==(HorizonPrediction const &, HorizonPrediction const &) = default;
};

struct AgentPrediction {
    TrackId track = 0;
    Vec2 origin;                      // present center the offsets are measured from (BEV)
    std::optional<GridIndex> anchor;  // output cell for grid models
    std::vector<HorizonPrediction> horizons;
    friend bool operator==(AgentPrediction const &, AgentPrediction const &) = default;
};

struct PredictionSet {
    std::vector<AgentPrediction> agents;
    int anchor_collisions = 0; // agents sharing an anchor cell with an earlier agent
    int excluded = 0;          // present detections outside the output grid

    [[nodiscard]] AgentPrediction const * find(TrackId id) const {
        for (auto const & a : agents) {
            if (a.track == id) return &a;
        }
        return nullptr;
    }
    friend bool operator==(PredictionSet const &, PredictionSet const &) = default;
};

} // namespace trackbench
