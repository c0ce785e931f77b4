#pragma once

#include "trackbench/core/prediction.hpp"
#include "trackbench/core/types.hpp"

#include <nlohmann/json_fwd.hpp>

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace trackbench::eval {

/// Linear diversity schedule b(t) = alpha * t + beta per direction, t the horizon step (1..H).
struct LossParams {
    double alpha_at = 0.02;
    double beta_at = 0.2;
    double alpha_ct = 0.02;
    double beta_ct = 0.2;
    friend bool operator==(LossParams const &, LossParams const &) = default;
};

void validate(LossParams const & params);
nlohmann::json to_json(LossParams const & params);
LossParams loss_params_from_json(nlohmann::json const & j);

double laplace_pdf(double v, double mu, double b);

struct Diversity {
    double at = 0.0;
    double ct = 0.0;
};
Diversity diversity_schedule(LossParams const & params, int t);

/// KL divergence between a Laplace centered at the error with scale b_hat and a zero-mean Laplace with scale b.
double kl_loss(double error, double b_hat, double b);

struct KlPartials {
    double d_error = 0.0;
    double d_b_hat = 0.0;
};
KlPartials kl_loss_partials(double error, double b_hat, double b);

struct AtCt {
    double at = 0.0;
    double ct = 0.0;
};
AtCt project_at_ct(Vec2 error, double heading);

struct AdeFde {
    double ade = 0.0;
    double fde = 0.0;
    double at = 0.0; // mean |AT| over valid horizons
    double ct = 0.0; // mean |CT| over valid horizons
};
/// Errors of one agent over its valid horizons; nullopt when no horizon is valid.
std::optional<AdeFde> ade_fde(AgentPrediction const & prediction, FutureTrajectory const & truth);

enum class DensityClass { All, Dense, Sparse };
std::string to_string(DensityClass d);

struct SlicePredicate {
    double min_speed = 0.0; // m/s, strict: speed > min_speed when positive
    DensityClass density = DensityClass::All;
    friend bool operator==(SlicePredicate const &, SlicePredicate const &) = default;
};
void validate(SlicePredicate const & p);
/// Stable label, e.g. "all", "dense", "sparse/v>3".
std::string label(SlicePredicate const & p);
SlicePredicate slice_from_label(std::string const & label);

/// Present ground-truth speed and nearest-neighbour center distance (infinity when alone).
struct AgentContext {
    AgentId agent = 0;
    double speed = 0.0;
    double nn_distance = 0.0;
};
std::vector<AgentContext> agent_contexts(Scene const & scene, int present);
bool matches(SlicePredicate const & p, AgentContext const & c);
/// Agents present at `present` satisfying the predicate, in id order.
std::vector<AgentId> slice(Scene const & scene, int present, SlicePredicate const & p);

using Pairing = std::pair<AgentPrediction const *, FutureTrajectory const *>;

/// Mean KL over pairs, valid horizons and both directions. Zero terms yield 0.
double total_loss(std::vector<Pairing> const & pairs, LossParams const & params);

/// Compensated (Neumaier) sum; merging is associative to rounding.
class NeumaierSum {
public:
    void add(double v);
    void merge(NeumaierSum const & o);
    [[nodiscard]] double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

struct MetricAccumulator {
    NeumaierSum at, ct, ade, fde;
    long count = 0;
    void add(AdeFde const & e);
    void merge(MetricAccumulator const & o);
};

struct SliceMetrics {
    double at = 0.0;
    double ct = 0.0;
    double ade = 0.0;
    double fde = 0.0;
    long count = 0;
};

struct EvalDiagnostics {
    long predicted = 0;        // predictions produced
    long no_valid_horizon = 0; // agents excluded for lack of any valid future step
    long unmatched = 0;        // predictions with no ground-truth agent
    long unpredicted = 0;      // ground-truth agents without a prediction
    long anchor_collisions = 0;
    long excluded = 0;
    void merge(EvalDiagnostics const & o);
};

/// Per-slice accumulators plus diagnostics; mergeable across scenes.
struct MetricsReport {
    std::vector<SlicePredicate> slices;
    std::vector<MetricAccumulator> accumulators;
    EvalDiagnostics diagnostics;

    explicit MetricsReport(std::vector<SlicePredicate> s = {SlicePredicate{}});
    void merge(MetricsReport const & o);
    [[nodiscard]] SliceMetrics metrics(std::size_t i) const;
};

/// Adds one scene's predictions. `agent_of` maps each prediction's track to its ground-truth agent.
void accumulate(MetricsReport & report, Scene const & scene, int present, PredictionSet const & predictions,
                GroundTruthFuture const & truth, std::vector<std::optional<AgentId>> const & agent_of);

inline constexpr int kMetricsSchemaVersion = 1;
inline constexpr char const * kMetricNames[] = {"AT", "CT", "ADE", "FDE"};

struct MetricRow {
    std::string slice;
    std::string metric;
    double value = 0.0;
    long n = 0;
};
/// Long format: one row per slice and metric. AT and CT are means of absolute projected errors.
std::vector<MetricRow> metric_rows(MetricsReport const & report);
nlohmann::json to_json(MetricsReport const & report);

/// Shortest round-trip decimal text of a double.
std::string format_double(double v);
/// CSV field with quoting when needed.
std::string csv_field(std::string const & s);

} // namespace trackbench::eval
