#pragma once

#include "trackbench/core/types.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace trackbench::tracking {

enum class SwitchPattern { OneStep, TwoConsecutive, UntilEnd };
enum class PartnerPolicy { NearestNeighbor, Random };

/// Identity-switch noise model. Probabilities are per track per history window.
struct NoiseSpec {
    double switch_chance = 0.0;
    SwitchPattern pattern = SwitchPattern::OneStep;
    PartnerPolicy partner_policy = PartnerPolicy::NearestNeighbor;
    double position_jitter_sigma = 0.0; // meters
    double dropout_chance = 0.0;        // per non-present detection
    std::uint64_t seed = 0;

    friend bool operator==(NoiseSpec const &, NoiseSpec const &) = default;
};

void validate(NoiseSpec const & spec);
nlohmann::json to_json(NoiseSpec const & spec);
NoiseSpec noise_spec_from_json(nlohmann::json const & j);
std::string to_string(SwitchPattern p);
std::string to_string(PartnerPolicy p);

/// (track id, timestep) -> agent the detection truly belongs to.
using Provenance = std::map<std::pair<TrackId, int>, AgentId>;

struct TrackingOutput {
    TrackSet trackset;
    Provenance provenance;
    /// Identifies the source window; keys the noise stream so distinct windows draw independently.
    std::string source_id;

    friend bool operator==(TrackingOutput const &, TrackingOutput const &) = default;
};

struct NoiseDiagnostics {
    int tracks_considered = 0;
    int switches_drawn = 0;
    int switches_applied = 0;
    int skipped_no_partner = 0;
    int skipped_no_history = 0;
    int switched_steps = 0; // detections moved between tracks
    int jittered = 0;
    int dropped = 0;

    NoiseDiagnostics & operator+=(NoiseDiagnostics const & o);
};

/// Ground-truth tracks over the window [present - history_len + 1, present].
TrackingOutput perfect_tracker(Scene const & scene, int present, int history_len);

/// Applies identity switches, then optional jitter and dropout. Present-frame detections are
/// never exchanged. Deterministic in (clean, spec).
TrackingOutput inject_noise(TrackingOutput const & clean, NoiseSpec const & spec,
                            NoiseDiagnostics * diagnostics = nullptr);

/// Number of detections whose provenance differs from the track id.
int provenance_mismatches(TrackingOutput const & out);

/// Preset standing in for a real tracker's error statistics.
NoiseSpec realistic_profile(std::string const & name);
std::vector<std::string> realistic_profile_names();

} // namespace trackbench::tracking
