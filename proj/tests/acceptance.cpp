// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 when any fails.
#include "trackbench/bench/bench.hpp"
#include "trackbench/core/rng.hpp"
#include "trackbench/evalkit/evalkit.hpp"
#include "trackbench/models/networks.hpp"
#include "trackbench/raster/raster.hpp"
#include "trackbench/simgen/simgen.hpp"
#include "trackbench/tracking/tracking.hpp"
#include "trackbench/trainer/trainer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

using namespace trackbench;
namespace fs = std::filesystem;
namespace ad = trackbench::models::ad;
using nlohmann::json;

namespace {

constexpr int kPresent = 15;

struct Outcome {
    bool pass = false;
    std::string detail;
};

fs::path const kSource{TRACKBENCH_SOURCE_DIR};

fs::path scratch_dir() {
    static fs::path const dir = [] {
        fs::path d = fs::temp_directory_path() / ("trackbench-acceptance-" + std::to_string(::getpid()));
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

Outcome fail(std::string why) { return {false, std::move(why)}; }

// -- 1 --------------------------------------------------------------------------------------------

Outcome loss_identities() {
    Rng rng = seeded_rng(101, "acceptance/kl");
    double worst_zero = 0.0;
    double min_kl = 0.0;
    for (int i = 0; i < 1000; ++i) {
        double const b = rng.uniform(1e-3, 20.0);
        worst_zero = std::max(worst_zero, std::abs(eval::kl_loss(0.0, b, b)));
    }
    for (int i = 0; i < 100000; ++i) {
        double const e = rng.uniform(-30.0, 30.0);
        double const bh = std::exp(rng.uniform(-5.0, 4.0));
        double const b = std::exp(rng.uniform(-5.0, 4.0));
        min_kl = std::min(min_kl, eval::kl_loss(e, bh, b));
    }
    double const at_one = std::abs(eval::kl_loss(1.0, 1.0, 1.0) - std::exp(-1.0));
    std::string const detail = "max |kl(0,b,b)| " + fmt(worst_zero) + ", min kl " + fmt(min_kl) +
                               ", |kl(1,1,1) - 1/e| " + fmt(at_one);
    return {worst_zero <= 1e-12 && min_kl >= 0.0 && at_one <= 1e-12, detail};
}

// -- 2 --------------------------------------------------------------------------------------------

models::ModelConfig desk_model(models::ModelKind kind) {
    models::ModelConfig mc;
    mc.kind = kind;
    mc.raster.width = 24;
    mc.raster.height = 24;
    mc.raster.cell_size = 1.25;
    mc.raster.history_len = 4;
    mc.cnn.conv_layers = {{3, 2, 5}, {3, 2, 6}};
    mc.cnn.head_hidden = 7;
    mc.cnn.horizons = 3;
    mc.rnn.hidden_dim = 4;
    models::validate(mc);
    return mc;
}

/// Which nodes of a forward pass are exactly zero; a change between the two probes marks a ReLU kink.
std::vector<char> zero_pattern(ad::Graph const & g) {
    std::vector<char> out;
    for (std::size_t id = 0; id < g.size(); ++id) {
        for (double v : g.value(ad::Var{static_cast<int>(id)}).values()) out.push_back(v == 0.0);
    }
    return out;
}

Outcome gradient_check() {
    double const eps = 1e-4;
    double worst = 0.0;
    long checked = 0, skipped = 0;
    std::string where;
    for (auto kind : {models::ModelKind::TrackFree, models::ModelKind::TrackBased, models::ModelKind::Hybrid}) {
        models::ModelConfig const mc = desk_model(kind);
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            sim::SimConfig sc;
            sc.n_scenes = 1;
            sc.seed = 500 + seed;
            sc.density_mode = sim::DensityMode::Dense;
            sc.map_template = sim::MapTemplate::Intersection;
            sc.maneuver_mix = {1, 1, 1, 1, 1};
            Scene const scene = sim::generate(sc)[0];
            auto const tracks = tracking::perfect_tracker(scene, kPresent, mc.raster.history_len);
            train::Sample const sample = train::make_sample(mc, scene, tracks, mc.cnn.horizons);
            long const terms = train::loss_terms(sample, mc.cnn.horizons);
            if (terms == 0) return fail("sample without loss terms for seed " + std::to_string(seed));
            double const scale = 1.0 / static_cast<double>(terms);
            models::ParamStore params = models::init_params(mc, seed);
            eval::LossParams const lp;

            auto forward = [&](std::vector<char> * pattern) {
                ad::Graph g(&params);
                ad::Var const rows = train::forward_sample(g, mc, sample);
                ad::Var const loss = train::kl_loss_node(g, rows, sample.anchors, sample.targets, lp, scale);
                if (pattern) *pattern = zero_pattern(g);
                return g.value(loss)[0];
            };
            params.zero_grad();
            {
                ad::Graph g(&params);
                ad::Var const rows = train::forward_sample(g, mc, sample);
                g.backward(train::kl_loss_node(g, rows, sample.anchors, sample.targets, lp, scale));
            }
            for (auto & [name, entry] : params) {
                for (std::size_t i = 0; i < entry.value.size(); ++i) {
                    double const keep = entry.value[i];
                    std::vector<char> up_pattern, down_pattern;
                    entry.value[i] = keep + eps;
                    double const up = forward(&up_pattern);
                    entry.value[i] = keep - eps;
                    double const down = forward(&down_pattern);
                    entry.value[i] = keep;
                    if (up_pattern != down_pattern) {
                        ++skipped;
                        continue;
                    }
                    double const numeric = (up - down) / (2.0 * eps);
                    double const analytic = entry.grad[i];
                    double const rel = std::abs(analytic - numeric) /
                                       std::max({std::abs(analytic), std::abs(numeric), 1e-7});
                    ++checked;
                    if (rel > worst) {
                        worst = rel;
                        where = models::to_string(kind) + " seed " + std::to_string(seed) + " " + name + "[" +
                                std::to_string(i) + "]";
                    }
                }
            }
        }
    }
    std::string const detail = std::to_string(checked) + " coordinates over 3 variants x 5 seeds, max rel err " +
                               fmt(worst) + " at " + where + ", " + std::to_string(skipped) +
                               " skipped at ReLU kinks";
    bool const few_skips = skipped * 20 <= checked + skipped;
    return {worst < 1e-4 && few_skips && checked > 0, detail};
}

// -- 3 --------------------------------------------------------------------------------------------

Outcome track_free_invariance() {
    sim::SimConfig sc;
    sc.n_scenes = 100;
    sc.seed = 303;
    sc.density_mode = sim::DensityMode::Dense;
    sc.map_template = sim::MapTemplate::Intersection;
    sc.maneuver_mix = {1, 1, 1, 1, 1};
    std::vector<Scene> const scenes = sim::generate(sc);
    models::ModelConfig mc;
    mc.kind = models::ModelKind::TrackFree;
    models::validate(mc);
    models::ParamStore params = models::init_params(mc, 303);

    std::vector<tracking::NoiseSpec> specs;
    for (double chance : {0.0, 0.1, 1.0}) {
        for (auto pattern : {tracking::SwitchPattern::OneStep, tracking::SwitchPattern::TwoConsecutive,
                             tracking::SwitchPattern::UntilEnd}) {
            for (auto policy : {tracking::PartnerPolicy::NearestNeighbor, tracking::PartnerPolicy::Random}) {
                tracking::NoiseSpec ns;
                ns.switch_chance = chance;
                ns.pattern = pattern;
                ns.partner_policy = policy;
                ns.seed = 303;
                specs.push_back(ns);
            }
        }
    }
    long comparisons = 0, switched = 0;
    for (Scene const & scene : scenes) {
        auto const clean = tracking::perfect_tracker(scene, kPresent, mc.raster.history_len);
        Pose2 const sdv = scene.sdv_trajectory[kPresent];
        PredictionSet const reference = models::predict(mc, params, clean.trackset, scene.map, sdv);
        for (auto const & ns : specs) {
            tracking::NoiseDiagnostics diag;
            auto const noisy = tracking::inject_noise(clean, ns, &diag);
            switched += diag.switched_steps;
            PredictionSet const p = models::predict(mc, params, noisy.trackset, scene.map, sdv);
            ++comparisons;
            if (!(p == reference)) {
                return fail("prediction changed in " + scene.scene_id + " at chance " + fmt(ns.switch_chance) + " " +
                            tracking::to_string(ns.pattern));
            }
        }
    }
    return {switched > 0, std::to_string(comparisons) + " noisy prediction sets bit-identical to clean, " +
                              std::to_string(switched) + " detections moved between tracks"};
}

// -- 4 --------------------------------------------------------------------------------------------

bool covers(Detection const & d, Pose2 const & sdv, double px, double py) {
    double const dx = d.center.x - sdv.x, dy = d.center.y - sdv.y;
    double const c0 = std::cos(sdv.heading), s0 = std::sin(sdv.heading);
    double const bx = c0 * dx + s0 * dy, by = -s0 * dx + c0 * dy;
    double const h = d.center.heading - sdv.heading;
    double const u = std::cos(h) * (px - bx) + std::sin(h) * (py - by);
    double const v = -std::sin(h) * (px - bx) + std::cos(h) * (py - by);
    return u >= -0.5 * d.extent.length && u < 0.5 * d.extent.length && v >= -0.5 * d.extent.width &&
           v < 0.5 * d.extent.width;
}

Outcome raster_oracles() {
    sim::SimConfig sc;
    sc.n_scenes = 50;
    sc.seed = 404;
    sc.density_mode = sim::DensityMode::Mixed;
    sc.map_template = sim::MapTemplate::CurvedRoad;
    sc.maneuver_mix = {1, 1, 1, 1, 1};
    raster::RasterConfig bc;
    raster::RasterConfig dc;
    dc.variant = raster::Variant::DisplacementField;
    int const P = bc.history_len;
    if (raster::channel_count(bc) != P + 3 || raster::channel_count(dc) != 2 * P + 3) return fail("channel_count");
    long cells = 0, occupied = 0;
    for (Scene const & s : sim::generate(sc)) {
        auto const t = tracking::perfect_tracker(s, kPresent, P);
        Pose2 const sdv = s.sdv_trajectory[kPresent];
        auto const b = raster::rasterize_history(t.trackset, s.map, sdv, bc);
        auto const d = raster::rasterize_displacement(t.trackset, s.map, sdv, dc);
        if (b.channels() != P + 3 || d.channels() != 2 * P + 3) return fail("tensor channels in " + s.scene_id);
        auto const fields = raster::displacement_fields(t.trackset, sdv, dc);
        double const c0 = std::cos(sdv.heading), s0 = std::sin(sdv.heading);
        auto bev = [&](Pose2 p) {
            return Vec2{c0 * (p.x - sdv.x) + s0 * (p.y - sdv.y), -s0 * (p.x - sdv.x) + c0 * (p.y - sdv.y)};
        };
        for (int iy = 0; iy < bc.height; ++iy) {
            for (int ix = 0; ix < bc.width; ++ix) {
                double const px = -0.5 * bc.width * bc.cell_size + (ix + 0.5) * bc.cell_size;
                double const py = -0.5 * bc.height * bc.cell_size + (iy + 0.5) * bc.cell_size;
                for (int k = 0; k < P; ++k) {
                    double want = 0.0;
                    Vec2 field{};
                    bool valid = false;
                    for (auto const & tr : t.trackset.tracks) {
                        Detection const * past = tr.at(kPresent - k);
                        if (past == nullptr || !covers(*past, sdv, px, py)) continue;
                        want = 1.0;
                        Vec2 const a = bev(tr.at(kPresent)->center);
                        Vec2 const o = bev(past->center);
                        field = {a.x - o.x, a.y - o.y};
                        valid = true;
                    }
                    ++cells;
                    occupied += want != 0.0;
                    if (b.values.at(3 + k, iy, ix) != want) return fail("binary cell mismatch in " + s.scene_id);
                    if (k == 0) {
                        if (d.values.at(3, iy, ix) != want || d.values.at(4, iy, ix) != 0.0) {
                            return fail("present channel pair mismatch in " + s.scene_id);
                        }
                        continue;
                    }
                    auto const & f = fields[static_cast<std::size_t>(k)];
                    auto const cell = static_cast<std::size_t>(iy * bc.width + ix);
                    if (static_cast<bool>(f.valid_mask[cell]) != valid || f.field.at(0, iy, ix) != field.x ||
                        f.field.at(1, iy, ix) != field.y) {
                        return fail("displacement field mismatch in " + s.scene_id);
                    }
                    if (d.values.at(3 + 2 * k, iy, ix) != field.x / dc.displacement_scale ||
                        d.values.at(4 + 2 * k, iy, ix) != field.y / dc.displacement_scale) {
                        return fail("displacement channel mismatch in " + s.scene_id);
                    }
                }
            }
        }
    }
    return {occupied > 0, std::to_string(cells) + " cell-frames over 50 scenes exact (" + std::to_string(occupied) +
                              " occupied), channels " + std::to_string(P + 3) + " / " + std::to_string(2 * P + 3)};
}

// -- 5 --------------------------------------------------------------------------------------------

Outcome metric_oracles() {
    Rng rng = seeded_rng(505, "acceptance/metrics");
    double worst = 0.0, worst_iso = 0.0;
    for (int c = 0; c < 10000; ++c) {
        int const H = 1 + static_cast<int>(rng.uniform_index(8));
        AgentPrediction p;
        p.origin = {rng.uniform(-20, 20), rng.uniform(-20, 20)};
        FutureTrajectory f;
        for (int h = 0; h < H; ++h) {
            p.horizons.push_back({rng.uniform(-10, 10), rng.uniform(-10, 10), 1.0, 1.0});
            f.centers.push_back({rng.uniform(-30, 30), rng.uniform(-30, 30)});
            f.headings.push_back(rng.uniform(-7, 7));
            f.valid.push_back(rng.bernoulli(0.8) ? 1 : 0);
        }
        // Independent recomputation in polar form.
        double ade = 0.0, fde = 0.0, at = 0.0, ct = 0.0;
        int n = 0;
        for (int h = 0; h < H; ++h) {
            double const ex = p.origin.x + p.horizons[h].dx - f.centers[h].x;
            double const ey = p.origin.y + p.horizons[h].dy - f.centers[h].y;
            double const r = std::sqrt(ex * ex + ey * ey);
            double const phi = std::atan2(ey, ex) - f.headings[h];
            double const a = r * std::cos(phi), t = r * std::sin(phi);
            auto const proj = eval::project_at_ct({ex, ey}, f.headings[h]);
            worst_iso = std::max(worst_iso, std::abs(proj.at * proj.at + proj.ct * proj.ct - r * r) / std::max(1.0, r * r));
            worst = std::max({worst, std::abs(proj.at - a), std::abs(proj.ct - t)});
            if (!f.valid[h]) continue;
            ade += r;
            at += std::abs(a);
            ct += std::abs(t);
            fde = r;
            ++n;
        }
        auto const got = eval::ade_fde(p, f);
        if (n == 0) {
            if (got) return fail("metrics reported for a trajectory without valid steps");
            continue;
        }
        if (!got) return fail("metrics missing for a valid trajectory");
        worst = std::max({worst, std::abs(got->ade - ade / n), std::abs(got->fde - fde), std::abs(got->at - at / n),
                          std::abs(got->ct - ct / n)});
    }
    return {worst <= 1e-12 && worst_iso <= 1e-12,
            "10000 cases: max deviation " + fmt(worst) + ", max |AT^2 + CT^2 - |e|^2| " + fmt(worst_iso)};
}

// -- 6 --------------------------------------------------------------------------------------------

Outcome learning_sanity() {
    sim::SimConfig const sc = sim::sim_config_from_json(json::parse(bench::read_text(kSource / "recipes/sim_constant_velocity.json")));
    std::vector<Scene> const scenes = sim::generate(sc);
    train::TrainConfig tc = train::train_config_from_json(json::parse(bench::read_text(kSource / "recipes/train_track_free.json")));
    tc.corpus.clear();
    tc.checkpoint.clear();
    tc.log.clear();
    tc.model.kind = models::ModelKind::TrackFree;
    if (tc.iterations > 2000) return fail("recipe exceeds 2000 iterations");
    auto const result = train::train(tc, scenes);

    auto const val = train::split_indices(scenes.size(), true);
    train::EvalConfig ec;
    ec.history_len = tc.model.raster.history_len;
    ec.horizon = tc.model.cnn.horizons;
    auto const model = eval::metric_rows(
        train::evaluate(train::model_predictor(tc.model, result.params), scenes, val, ec));
    auto const still = eval::metric_rows(
        train::evaluate(train::baseline_predictor(models::BaselineKind::Stationary, ec.horizon), scenes, val, ec));
    auto ade = [](std::vector<eval::MetricRow> const & rows) {
        for (auto const & r : rows) {
            if (r.metric == "ADE") return r.value;
        }
        return std::nan("");
    };
    double const m = ade(model), s = ade(still);
    return {m <= 0.5 * s, "validation ADE " + fmt(m) + " vs stationary " + fmt(s) + " (ratio " + fmt(m / s) + ", " +
                              std::to_string(tc.iterations) + " iterations)"};
}

// -- 7, 8 -----------------------------------------------------------------------------------------

using Table = std::map<std::pair<std::string, std::string>, double>; // (model, noise) -> ADE on "all"

Table run_recipe(std::string const & recipe, fs::path const & out) {
    bench::ExperimentSpec spec = bench::load_experiment(kSource / "recipes" / recipe);
    spec.output = out;
    auto const outcome = bench::run(spec, 1);
    if (outcome.exit_code() != 0) throw Error(recipe + ": " + outcome.failures.front().message);
    json const results = json::parse(bench::read_text(out / "results.json"));
    Table t;
    for (auto const & row : results.at("rows")) {
        if (row.at("slice") == "all" && row.at("metric") == "ADE") t[{row.at("model"), row.at("noise")}] = row.at("value");
    }
    return t;
}

/// Non-decreasing with at most one adjacent inversion of at most 2% relative.
bool monotone(std::vector<double> const & v) {
    int inversions = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] >= v[i - 1]) continue;
        if ((v[i - 1] - v[i]) > 0.02 * v[i - 1]) return false;
        ++inversions;
    }
    return inversions <= 1;
}

std::string series(std::vector<double> const & v) {
    std::string s;
    for (double x : v) s += (s.empty() ? "" : " ") + fmt(x);
    return s;
}

Outcome chance_trend(Table const & t) {
    std::vector<std::string> const noise{"p0", "p0.01", "p0.05", "p0.1", "p0.2"};
    auto column = [&](std::string const & model) {
        std::vector<double> v;
        for (auto const & n : noise) v.push_back(t.at({model, n}));
        return v;
    };
    auto const tb = column("track_based"), hy = column("hybrid"), tf = column("track_free");
    bool const ok = monotone(tb) && monotone(hy) && tb.back() > tf.back() && hy.back() > tf.back();
    return {ok, "ADE track_based [" + series(tb) + "], hybrid [" + series(hy) + "], track_free [" + series(tf) + "]"};
}

Outcome pattern_trend(Table const & t) {
    std::vector<double> const v{t.at({"track_based", "one_step"}), t.at({"track_based", "two_consecutive"}),
                                t.at({"track_based", "until_end"})};
    int inversions = 0;
    bool ok = true;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] >= v[i - 1]) continue;
        ok = ok && (v[i - 1] - v[i]) <= 0.02 * v[i - 1];
        ++inversions;
    }
    return {ok && inversions <= 1, "track_based ADE one_step / two_consecutive / until_end = " + series(v)};
}

// -- 9 --------------------------------------------------------------------------------------------

Outcome noise_statistics() {
    sim::SimConfig sc;
    sc.n_scenes = 2000;
    sc.seed = 909;
    sc.density_mode = sim::DensityMode::Dense;
    sc.map_template = sim::MapTemplate::Intersection;
    sc.maneuver_mix = {1, 1, 1, 1, 1};
    tracking::NoiseSpec ns;
    ns.switch_chance = 0.1;
    ns.pattern = tracking::SwitchPattern::UntilEnd;
    ns.seed = 909;
    tracking::NoiseDiagnostics total;
    for (int i = 0; i < sc.n_scenes; ++i) {
        Scene const scene = sim::generate_scene(sc, i);
        auto const clean = tracking::perfect_tracker(scene, kPresent, 11);
        tracking::NoiseDiagnostics diag;
        auto const noisy = tracking::inject_noise(clean, ns, &diag);
        total += diag;
        // Conservation: each timestep keeps the same multiset of detections.
        auto by_step = [](TrackSet const & ts) {
            std::map<int, std::vector<std::string>> m;
            for (auto const & tr : ts.tracks) {
                for (auto const & d : tr.detections) {
                    std::ostringstream key;
                    key.precision(17);
                    key << d.center.x << ' ' << d.center.y << ' ' << d.center.heading << ' ' << d.speed;
                    m[d.timestep].push_back(key.str());
                }
            }
            for (auto & [t, v] : m) std::sort(v.begin(), v.end());
            return m;
        };
        if (by_step(clean.trackset) != by_step(noisy.trackset)) return fail("detections not conserved in " + scene.scene_id);
        if (tracking::provenance_mismatches(noisy) != diag.switched_steps) return fail("provenance count in " + scene.scene_id);
        for (auto const & tr : noisy.trackset.tracks) {
            Track const * ref = clean.trackset.find(tr.id);
            if (ref == nullptr || !(*ref->at(kPresent) == *tr.at(kPresent))) {
                return fail("present frame changed in " + scene.scene_id);
            }
            for (auto const & d : tr.detections) {
                AgentId const truth = noisy.provenance.at({tr.id, d.timestep});
                if (!(*scene.agents.at(truth).at(d.timestep) == d)) return fail("provenance wrong in " + scene.scene_id);
            }
        }
    }
    double const n = total.tracks_considered;
    double const frac = total.switches_drawn / n;
    double const se = std::sqrt(0.1 * 0.9 / n);
    bool const ok = total.tracks_considered >= 10000 && std::abs(frac - 0.1) <= 3.0 * se;
    return {ok, std::to_string(total.tracks_considered) + " tracks, switch fraction " + fmt(frac) + " (|z| = " +
                    fmt(std::abs(frac - 0.1) / se) + "), " + std::to_string(total.switches_applied) +
                    " applied, conservation and present frame exact"};
}

// -- 10 -------------------------------------------------------------------------------------------

Outcome reproducibility() {
    fs::path const root = scratch_dir() / "repro";
    bench::ExperimentSpec spec = bench::load_experiment(kSource / "recipes/smoke.json");
    spec.output = root / "a";
    if (bench::run(spec, 1).exit_code() != 0) return fail("first run failed");
    spec.output = root / "b";
    if (bench::run(spec, 1).exit_code() != 0) return fail("second run failed");
    bool const csv_same = bench::read_text(root / "a/results.csv") == bench::read_text(root / "b/results.csv");

    sim::SimConfig sc;
    sc.n_scenes = 30;
    sc.seed = 1010;
    auto const scenes = sim::generate(sc);
    train::TrainConfig tc;
    tc.model.kind = models::ModelKind::Hybrid;
    tc.iterations = 40;
    tc.eval_every = 20;
    tc.seed = 1010;
    tc.noise.switch_chance = 0.2;
    for (char const * which : {"c1.ckpt", "c2.ckpt"}) {
        tc.checkpoint = root / which;
        train::train(tc, scenes);
    }
    bool const ckpt_same = bench::read_text(root / "c1.ckpt") == bench::read_text(root / "c2.ckpt");
    return {csv_same && ckpt_same, std::string("results.csv ") + (csv_same ? "identical" : "DIFFERS") +
                                       " across two runs, checkpoint " + (ckpt_same ? "identical" : "DIFFERS") +
                                       " across two trainings"};
}

} // namespace

int main(int argc, char ** argv) {
    std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"loss identities", loss_identities},
        {"gradient check", gradient_check},
        {"track-free invariance", track_free_invariance},
        {"raster oracles", raster_oracles},
        {"metric oracles", metric_oracles},
        {"learning sanity", learning_sanity},
    };
    // The two trend criteria share one run directory so the trained models are reused.
    std::optional<Table> chance_table, pattern_table;
    std::string recipe_error;
    auto trends = [&]() {
        if (chance_table || !recipe_error.empty()) return;
        try {
            fs::path const dir = scratch_dir() / "figures";
            chance_table = run_recipe("switch_chance.json", dir);
            pattern_table = run_recipe("switch_pattern.json", dir);
        } catch (std::exception const & e) {
            recipe_error = e.what();
        }
    };
    criteria.emplace_back("switch-chance trend", [&] {
        trends();
        return recipe_error.empty() ? chance_trend(*chance_table) : fail(recipe_error);
    });
    criteria.emplace_back("switch-pattern trend", [&] {
        trends();
        return recipe_error.empty() ? pattern_trend(*pattern_table) : fail(recipe_error);
    });
    criteria.emplace_back("noise statistics", noise_statistics);
    criteria.emplace_back("reproducibility", reproducibility);

    // Optional arguments select criteria by number.
    std::vector<bool> selected(criteria.size(), argc == 1);
    for (int a = 1; a < argc; ++a) {
        std::size_t const k = std::strtoul(argv[a], nullptr, 10);
        if (k >= 1 && k <= criteria.size()) selected[k - 1] = true;
    }
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!selected[i]) continue;
        auto const start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (std::exception const & e) {
            o = fail(std::string("exception: ") + e.what());
        }
        double const secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failed += !o.pass;
        std::printf("%s C%zu %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    std::error_code ec;
    fs::remove_all(scratch_dir(), ec);
    return failed == 0 ? 0 : 1;
}
