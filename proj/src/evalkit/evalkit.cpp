#include "trackbench/evalkit/evalkit.hpp"

#include "trackbench/core/error.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>

namespace trackbench::eval {

using nlohmann::json;

void validate(LossParams const & p) {
    if (!(p.beta_at > 0.0) || !(p.beta_ct > 0.0)) throw InvariantError("LossParams: beta must be > 0");
    if (!(p.alpha_at >= 0.0) || !(p.alpha_ct >= 0.0)) throw InvariantError("LossParams: alpha must be >= 0");
    if (!std::isfinite(p.alpha_at + p.alpha_ct + p.beta_at + p.beta_ct)) throw InvariantError("LossParams: non-finite");
}

json to_json(LossParams const & p) {
    return {{"alpha_at", p.alpha_at}, {"beta_at", p.beta_at}, {"alpha_ct", p.alpha_ct}, {"beta_ct", p.beta_ct}};
}

LossParams loss_params_from_json(json const & j) {
    LossParams p;
    try {
        p.alpha_at = j.value("alpha_at", p.alpha_at);
        p.beta_at = j.value("beta_at", p.beta_at);
        p.alpha_ct = j.value("alpha_ct", p.alpha_ct);
        p.beta_ct = j.value("beta_ct", p.beta_ct);
    } catch (json::exception const & e) {
        throw FormatError(std::string("invalid LossParams: ") + e.what());
    }
    validate(p);
    return p;
}

double laplace_pdf(double v, double mu, double b) {
    if (!(b > 0.0)) throw InvariantError("laplace_pdf: b must be > 0");
    return std::exp(-std::abs(v - mu) / b) / (2.0 * b);
}

Diversity diversity_schedule(LossParams const & p, int t) {
    return {p.alpha_at * t + p.beta_at, p.alpha_ct * t + p.beta_ct};
}

double kl_loss(double e, double b_hat, double b) {
    if (!(b_hat > 0.0) || !(b > 0.0)) throw InvariantError("kl_loss: diversities must be > 0");
    double const a = std::abs(e);
    return std::log(b_hat / b) + (b * std::exp(-a / b) + a) / b_hat - 1.0;
}

KlPartials kl_loss_partials(double e, double b_hat, double b) {
    if (!(b_hat > 0.0) || !(b > 0.0)) throw InvariantError("kl_loss: diversities must be > 0");
    double const a = std::abs(e);
    double const decay = std::exp(-a / b);
    double const sign = e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0);
    return {sign * (1.0 - decay) / b_hat, 1.0 / b_hat - (b * decay + a) / (b_hat * b_hat)};
}

AtCt project_at_ct(Vec2 e, double heading) {
    double const c = std::cos(heading);
    double const s = std::sin(heading);
    return {e.x * c + e.y * s, -e.x * s + e.y * c};
}

std::optional<AdeFde> ade_fde(AgentPrediction const & pred, FutureTrajectory const & truth) {
    std::size_t const n = std::min(pred.horizons.size(), truth.centers.size());
    AdeFde out;
    int valid = 0;
    for (std::size_t h = 0; h < n; ++h) {
        if (!truth.valid[h]) continue;
        Vec2 const e{pred.origin.x + pred.horizons[h].dx - truth.centers[h].x,
                     pred.origin.y + pred.horizons[h].dy - truth.centers[h].y};
        double const d = std::hypot(e.x, e.y);
        AtCt const p = project_at_ct(e, truth.headings[h]);
        out.ade += d;
        out.at += std::abs(p.at);
        out.ct += std::abs(p.ct);
        out.fde = d;
        ++valid;
    }
    if (valid == 0) return std::nullopt;
    out.ade /= valid;
    out.at /= valid;
    out.ct /= valid;
    return out;
}

std::string to_string(DensityClass d) {
    switch (d) {
    case DensityClass::All: return "all";
    case DensityClass::Dense: return "dense";
    case DensityClass::Sparse: return "sparse";
    }
    return "?";
}

void validate(SlicePredicate const & p) {
    if (!(p.min_speed >= 0.0) || !std::isfinite(p.min_speed)) throw InvariantError("SlicePredicate: min_speed must be >= 0");
}

std::string label(SlicePredicate const & p) {
    std::string s = to_string(p.density);
    if (p.min_speed > 0.0) s += "/v>" + format_double(p.min_speed);
    return s;
}

SlicePredicate slice_from_label(std::string const & text) {
    SlicePredicate p;
    std::string density = text;
    if (auto pos = text.find("/v>"); pos != std::string::npos) {
        density = text.substr(0, pos);
        std::string const v = text.substr(pos + 3);
        auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), p.min_speed);
        if (ec != std::errc{} || ptr != v.data() + v.size()) throw FormatError("invalid slice label '" + text + "'");
    }
    if (density == "all") p.density = DensityClass::All;
    else if (density == "dense") p.density = DensityClass::Dense;
    else if (density == "sparse") p.density = DensityClass::Sparse;
    else throw FormatError("invalid slice label '" + text + "'");
    validate(p);
    return p;
}

std::vector<AgentContext> agent_contexts(Scene const & scene, int present) {
    std::vector<std::pair<AgentId, Detection const *>> here;
    for (auto const & [id, track] : scene.agents) {
        if (Detection const * d = track.at(present)) here.emplace_back(id, d);
    }
    std::vector<AgentContext> out;
    for (auto const & [id, d] : here) {
        double nn = std::numeric_limits<double>::infinity();
        for (auto const & [other, od] : here) {
            if (other == id) continue;
            nn = std::min(nn, (d->center.position() - od->center.position()).norm());
        }
        out.push_back({id, d->speed, nn});
    }
    return out;
}

bool matches(SlicePredicate const & p, AgentContext const & c) {
    if (p.min_speed > 0.0 && !(c.speed > p.min_speed)) return false;
    switch (p.density) {
    case DensityClass::All: return true;
    case DensityClass::Dense: return c.nn_distance < 4.0;
    case DensityClass::Sparse: return c.nn_distance > 10.0;
    }
    return false;
}

std::vector<AgentId> slice(Scene const & scene, int present, SlicePredicate const & p) {
    std::vector<AgentId> out;
    for (auto const & c : agent_contexts(scene, present)) {
        if (matches(p, c)) out.push_back(c.agent);
    }
    return out;
}

double total_loss(std::vector<Pairing> const & pairs, LossParams const & params) {
    NeumaierSum sum;
    long terms = 0;
    for (auto const & [pred, truth] : pairs) {
        std::size_t const n = std::min(pred->horizons.size(), truth->centers.size());
        for (std::size_t h = 0; h < n; ++h) {
            if (!truth->valid[h]) continue;
            auto const & hp = pred->horizons[h];
            Vec2 const e{pred->origin.x + hp.dx - truth->centers[h].x, pred->origin.y + hp.dy - truth->centers[h].y};
            AtCt const p = project_at_ct(e, truth->headings[h]);
            Diversity const b = diversity_schedule(params, static_cast<int>(h) + 1);
            sum.add(kl_loss(p.at, hp.b_at, b.at));
            sum.add(kl_loss(p.ct, hp.b_ct, b.ct));
            terms += 2;
        }
    }
    return terms == 0 ? 0.0 : sum.value() / static_cast<double>(terms);
}

void NeumaierSum::add(double v) {
    double const t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) comp_ += (sum_ - t) + v;
    else comp_ += (v - t) + sum_;
    sum_ = t;
}

void NeumaierSum::merge(NeumaierSum const & o) {
    add(o.sum_);
    add(o.comp_);
}

void MetricAccumulator::add(AdeFde const & e) {
    at.add(e.at);
    ct.add(e.ct);
    ade.add(e.ade);
    fde.add(e.fde);
    ++count;
}

void MetricAccumulator::merge(MetricAccumulator const & o) {
    at.merge(o.at);
    ct.merge(o.ct);
    ade.merge(o.ade);
    fde.merge(o.fde);
    count += o.count;
}

void EvalDiagnostics::merge(EvalDiagnostics const & o) {
    predicted += o.predicted;
    no_valid_horizon += o.no_valid_horizon;
    unmatched += o.unmatched;
    unpredicted += o.unpredicted;
    anchor_collisions += o.anchor_collisions;
    excluded += o.excluded;
}

MetricsReport::MetricsReport(std::vector<SlicePredicate> s) : slices(std::move(s)), accumulators(slices.size()) {
    for (auto const & p : slices) validate(p);
}

void MetricsReport::merge(MetricsReport const & o) {
    if (o.slices != slices) throw InvariantError("MetricsReport::merge: slice lists differ");
    for (std::size_t i = 0; i < slices.size(); ++i) accumulators[i].merge(o.accumulators[i]);
    diagnostics.merge(o.diagnostics);
}

SliceMetrics MetricsReport::metrics(std::size_t i) const {
    MetricAccumulator const & a = accumulators.at(i);
    SliceMetrics m;
    m.count = a.count;
    if (a.count > 0) {
        double const n = static_cast<double>(a.count);
        m.at = a.at.value() / n;
        m.ct = a.ct.value() / n;
        m.ade = a.ade.value() / n;
        m.fde = a.fde.value() / n;
    }
    return m;
}

void accumulate(MetricsReport & report, Scene const & scene, int present, PredictionSet const & predictions,
                GroundTruthFuture const & truth, std::vector<std::optional<AgentId>> const & agent_of) {
    if (agent_of.size() != predictions.agents.size()) throw InvariantError("accumulate: one agent mapping per prediction");
    std::map<AgentId, AgentContext> contexts;
    for (auto const & c : agent_contexts(scene, present)) contexts.emplace(c.agent, c);
    EvalDiagnostics & diag = report.diagnostics;
    diag.anchor_collisions += predictions.anchor_collisions;
    diag.excluded += predictions.excluded;
    std::map<AgentId, int> seen;
    for (std::size_t i = 0; i < predictions.agents.size(); ++i) {
        ++diag.predicted;
        auto const & agent = agent_of[i];
        auto const it = agent ? truth.agents.find(*agent) : truth.agents.end();
        if (it == truth.agents.end() || !contexts.contains(*agent)) {
            ++diag.unmatched;
            continue;
        }
        ++seen[*agent];
        auto const e = ade_fde(predictions.agents[i], it->second);
        if (!e) {
            ++diag.no_valid_horizon;
            continue;
        }
        for (std::size_t s = 0; s < report.slices.size(); ++s) {
            if (matches(report.slices[s], contexts.at(*agent))) report.accumulators[s].add(*e);
        }
    }
    for (auto const & [id, f] : truth.agents) {
        if (!seen.contains(id)) ++diag.unpredicted;
    }
}

std::vector<MetricRow> metric_rows(MetricsReport const & report) {
    std::vector<MetricRow> rows;
    for (std::size_t s = 0; s < report.slices.size(); ++s) {
        SliceMetrics const m = report.metrics(s);
        std::array<double, 4> const values{m.at, m.ct, m.ade, m.fde};
        for (std::size_t k = 0; k < values.size(); ++k) {
            rows.push_back({label(report.slices[s]), kMetricNames[k], values[k], m.count});
        }
    }
    return rows;
}

json to_json(MetricsReport const & report) {
    json slices = json::array();
    for (std::size_t s = 0; s < report.slices.size(); ++s) {
        SliceMetrics const m = report.metrics(s);
        slices.push_back({{"slice", label(report.slices[s])},
                          {"n", m.count},
                          {"AT", m.at},
                          {"CT", m.ct},
                          {"ADE", m.ade},
                          {"FDE", m.fde}});
    }
    auto const & d = report.diagnostics;
    return {{"schema_version", kMetricsSchemaVersion},
            {"slices", slices},
            {"diagnostics",
             {{"predicted", d.predicted},
              {"no_valid_horizon", d.no_valid_horizon},
              {"unmatched", d.unmatched},
              {"unpredicted", d.unpredicted},
              {"anchor_collisions", d.anchor_collisions},
              {"excluded", d.excluded}}}};
}

std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    if (ec != std::errc{}) throw Error("format_double failed");
    return {buf.data(), ptr};
}

std::string csv_field(std::string const & s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

} // namespace trackbench::eval
