#include "trackbench/tracking/tracking.hpp"

#include "trackbench/core/error.hpp"
#include "trackbench/core/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>

namespace trackbench::tracking {

using nlohmann::json;

std::string to_string(SwitchPattern p) {
    switch (p) {
    case SwitchPattern::OneStep: return "one_step";
    case SwitchPattern::TwoConsecutive: return "two_consecutive";
    case SwitchPattern::UntilEnd: return "until_end";
    }
    return "?";
}

std::string to_string(PartnerPolicy p) {
    return p == PartnerPolicy::NearestNeighbor ? "nearest_neighbor" : "random";
}

void validate(NoiseSpec const & s) {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(s.switch_chance)) throw InvariantError("NoiseSpec: switch_chance outside [0, 1]");
    if (!prob(s.dropout_chance)) throw InvariantError("NoiseSpec: dropout_chance outside [0, 1]");
    if (!std::isfinite(s.position_jitter_sigma) || s.position_jitter_sigma < 0.0)
        throw InvariantError("NoiseSpec: position_jitter_sigma must be finite and >= 0");
}

json to_json(NoiseSpec const & s) {
    return {{"switch_chance", s.switch_chance},
            {"pattern", to_string(s.pattern)},
            {"partner_policy", to_string(s.partner_policy)},
            {"position_jitter_sigma", s.position_jitter_sigma},
            {"dropout_chance", s.dropout_chance},
            {"seed", s.seed}};
}

NoiseSpec noise_spec_from_json(json const & j) {
    NoiseSpec s;
    try {
        if (j.contains("profile")) {
            s = realistic_profile(j["profile"].get<std::string>());
        }
        s.switch_chance = j.value("switch_chance", s.switch_chance);
        if (j.contains("pattern")) {
            auto const v = j["pattern"].get<std::string>();
            if (v == "one_step") s.pattern = SwitchPattern::OneStep;
            else if (v == "two_consecutive") s.pattern = SwitchPattern::TwoConsecutive;
            else if (v == "until_end") s.pattern = SwitchPattern::UntilEnd;
            else throw FormatError("unknown switch pattern '" + v + "'");
        }
        if (j.contains("partner_policy")) {
            auto const v = j["partner_policy"].get<std::string>();
            if (v == "nearest_neighbor") s.partner_policy = PartnerPolicy::NearestNeighbor;
            else if (v == "random") s.partner_policy = PartnerPolicy::Random;
            else throw FormatError("unknown partner policy '" + v + "'");
        }
        s.position_jitter_sigma = j.value("position_jitter_sigma", s.position_jitter_sigma);
        s.dropout_chance = j.value("dropout_chance", s.dropout_chance);
        s.seed = j.value("seed", s.seed);
    } catch (json::exception const & e) {
        throw FormatError(std::string("invalid NoiseSpec: ") + e.what());
    }
    validate(s);
    return s;
}

NoiseDiagnostics & NoiseDiagnostics::operator+=(NoiseDiagnostics const & o) {
    tracks_considered += o.tracks_considered;
    switches_drawn += o.switches_drawn;
    switches_applied += o.switches_applied;
    skipped_no_partner += o.skipped_no_partner;
    skipped_no_history += o.skipped_no_history;
    switched_steps += o.switched_steps;
    jittered += o.jittered;
    dropped += o.dropped;
    return *this;
}

TrackingOutput perfect_tracker(Scene const & scene, int present, int history_len) {
    if (history_len < 1) {
        throw InvariantError("perfect_tracker: history_len must be >= 1");
    }
    int const first = present - history_len + 1;
    if (first < 0 || present >= scene.duration) {
        throw InvariantError("perfect_tracker: window [" + std::to_string(first) + ", " + std::to_string(present) +
                             "] exceeds scene '" + scene.scene_id + "'");
    }
    TrackingOutput out;
    out.trackset.present_timestep = present;
    out.trackset.history_len = history_len;
    out.source_id = scene.scene_id + "@" + std::to_string(present);
    for (auto const & [id, agent] : scene.agents) {
        Track track;
        track.id = id;
        for (auto const & d : agent.detections) {
            if (d.timestep >= first && d.timestep <= present) {
                track.detections.push_back(d);
                out.provenance[{id, d.timestep}] = id;
            }
        }
        if (!track.detections.empty()) {
            out.trackset.tracks.push_back(std::move(track));
        }
    }
    return out;
}

namespace {

/// Track detections indexed densely by window offset for cheap exchange.
struct Slots {
    std::vector<std::optional<Detection>> detection;
    std::vector<AgentId> origin;
};

} // namespace

TrackingOutput inject_noise(TrackingOutput const & clean, NoiseSpec const & spec, NoiseDiagnostics * diagnostics) {
    validate(spec);
    NoiseDiagnostics diag;
    TrackSet const & in = clean.trackset;
    diag.tracks_considered = static_cast<int>(in.tracks.size());
    bool const identity_only_noop = spec.switch_chance == 0.0 && spec.position_jitter_sigma == 0.0 &&
                                    spec.dropout_chance == 0.0;
    if (identity_only_noop) {
        if (diagnostics) *diagnostics += diag;
        return clean;
    }

    Rng rng = seeded_rng(spec.seed, "tracking/noise/" + clean.source_id);
    int const first = in.first_timestep();
    int const present = in.present_timestep;
    auto const window = static_cast<std::size_t>(in.history_len);

    std::vector<Track const *> order;
    for (auto const & t : in.tracks) order.push_back(&t);
    std::sort(order.begin(), order.end(), [](Track const * a, Track const * b) { return a->id < b->id; });

    std::vector<Slots> slots(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        slots[i].detection.resize(window);
        slots[i].origin.resize(window, 0);
        for (auto const & d : order[i]->detections) {
            auto const k = static_cast<std::size_t>(d.timestep - first);
            slots[i].detection[k] = d;
            auto it = clean.provenance.find({order[i]->id, d.timestep});
            slots[i].origin[k] = it != clean.provenance.end() ? it->second : order[i]->id;
        }
    }
    std::vector<std::vector<char>> involved(order.size(), std::vector<char>(window, 0));

    for (std::size_t i = 0; i < order.size(); ++i) {
        if (!rng.bernoulli(spec.switch_chance)) {
            continue;
        }
        ++diag.switches_drawn;
        std::vector<int> history;
        for (int t = first; t < present; ++t) {
            if (slots[i].detection[static_cast<std::size_t>(t - first)]) history.push_back(t);
        }
        if (history.empty()) {
            ++diag.skipped_no_history;
            continue;
        }
        int const t_star = history[rng.uniform_index(history.size())];
        auto const k_star = static_cast<std::size_t>(t_star - first);
        std::vector<std::size_t> candidates;
        if (!involved[i][k_star]) {
            for (std::size_t j = 0; j < order.size(); ++j) {
                if (j != i && slots[j].detection[k_star] && !involved[j][k_star]) candidates.push_back(j);
            }
        }
        if (candidates.empty()) {
            ++diag.skipped_no_partner;
            continue;
        }
        std::size_t partner = candidates.front();
        if (spec.partner_policy == PartnerPolicy::Random) {
            partner = candidates[rng.uniform_index(candidates.size())];
        } else {
            Vec2 const self = slots[i].detection[k_star]->center.position();
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t j : candidates) {
                double const d = (slots[j].detection[k_star]->center.position() - self).norm();
                if (d < best) {
                    best = d;
                    partner = j;
                }
            }
        }
        int last = t_star;
        if (spec.pattern == SwitchPattern::TwoConsecutive) last = std::min(t_star + 1, present - 1);
        if (spec.pattern == SwitchPattern::UntilEnd) last = present - 1;
        for (int t = t_star; t <= last; ++t) {
            auto const k = static_cast<std::size_t>(t - first);
            if (involved[i][k] || involved[partner][k]) {
                continue;
            }
            diag.switched_steps += (slots[i].detection[k] ? 1 : 0) + (slots[partner].detection[k] ? 1 : 0);
            std::swap(slots[i].detection[k], slots[partner].detection[k]);
            std::swap(slots[i].origin[k], slots[partner].origin[k]);
            involved[i][k] = 1;
            involved[partner][k] = 1;
        }
        ++diag.switches_applied;
    }

    if (spec.position_jitter_sigma > 0.0) {
        for (auto & s : slots) {
            for (auto & d : s.detection) {
                if (!d) continue;
                d->center.x += rng.normal(0.0, spec.position_jitter_sigma);
                d->center.y += rng.normal(0.0, spec.position_jitter_sigma);
                ++diag.jittered;
            }
        }
    }
    if (spec.dropout_chance > 0.0) {
        for (auto & s : slots) {
            for (std::size_t k = 0; k + 1 < window; ++k) {
                if (!s.detection[k] || !rng.bernoulli(spec.dropout_chance)) continue;
                auto const remaining = std::count_if(s.detection.begin(), s.detection.end(),
                                                     [](auto const & d) { return d.has_value(); });
                if (remaining > 1) {
                    s.detection[k].reset();
                    ++diag.dropped;
                }
            }
        }
    }

    TrackingOutput out;
    out.source_id = clean.source_id;
    out.trackset.present_timestep = present;
    out.trackset.history_len = in.history_len;
    for (std::size_t i = 0; i < order.size(); ++i) {
        Track track;
        track.id = order[i]->id;
        for (std::size_t k = 0; k < window; ++k) {
            if (!slots[i].detection[k]) continue;
            track.detections.push_back(*slots[i].detection[k]);
            out.provenance[{track.id, first + static_cast<int>(k)}] = slots[i].origin[k];
        }
        out.trackset.tracks.push_back(std::move(track));
    }
    if (diagnostics) *diagnostics += diag;
    return out;
}

int provenance_mismatches(TrackingOutput const & out) {
    int n = 0;
    for (auto const & [key, agent] : out.provenance) {
        n += key.first != agent ? 1 : 0;
    }
    return n;
}

namespace {

struct Profile {
    char const * name;
    NoiseSpec spec;
};

std::vector<Profile> const & registry() {
    static std::vector<Profile> const profiles{
        {"clean", NoiseSpec{}},
        {"urban_crowded", NoiseSpec{0.02, SwitchPattern::UntilEnd, PartnerPolicy::NearestNeighbor, 0.15, 0.05, 0}},
        {"highway", NoiseSpec{0.005, SwitchPattern::UntilEnd, PartnerPolicy::NearestNeighbor, 0.10, 0.02, 0}},
        {"degraded_sensor", NoiseSpec{0.05, SwitchPattern::TwoConsecutive, PartnerPolicy::NearestNeighbor, 0.30, 0.10, 0}},
    };
    return profiles;
}

} // namespace

NoiseSpec realistic_profile(std::string const & name) {
    for (auto const & p : registry()) {
        if (name == p.name) return p.spec;
    }
    throw Error("unknown tracker noise profile '" + name + "'");
}

std::vector<std::string> realistic_profile_names() {
    std::vector<std::string> out;
    for (auto const & p : registry()) out.emplace_back(p.name);
    return out;
}

} // namespace trackbench::tracking
