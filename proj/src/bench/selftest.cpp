#include "trackbench/bench/bench.hpp"

#include "trackbench/core/corpus.hpp"
#include "trackbench/core/rng.hpp"
#include "trackbench/raster/raster.hpp"

#include <cmath>
#include <filesystem>
#include <functional>

#include <unistd.h>

namespace trackbench::bench {

namespace {

using Check = std::function<std::string()>; // empty string on success

std::string kl_identities() {
    Rng rng = seeded_rng(1, "selftest/kl");
    for (int i = 0; i < 1000; ++i) {
        double const b = rng.uniform(0.01, 10.0);
        if (std::abs(eval::kl_loss(0.0, b, b)) > 1e-12) return "kl(0, b, b) != 0 for b = " + eval::format_double(b);
        double const e = rng.uniform(-5.0, 5.0);
        double const bh = rng.uniform(0.01, 5.0);
        if (eval::kl_loss(e, bh, b) < 0.0) return "negative KL";
    }
    if (std::abs(eval::kl_loss(1.0, 1.0, 1.0) - std::exp(-1.0)) > 1e-12) return "kl(1, 1, 1) != 1/e";
    if (std::abs(eval::kl_loss(0.0, 2.0, 1.0) - (std::log(2.0) - 0.5)) > 1e-12) return "kl(0, 2, 1) != log 2 - 1/2";
    if (std::abs(eval::laplace_pdf(1.0, 0.0, 1.0) - 0.5 * std::exp(-1.0)) > 1e-15) return "laplace pdf";
    return {};
}

std::string projection_isometry() {
    Rng rng = seeded_rng(2, "selftest/project");
    for (int i = 0; i < 10000; ++i) {
        Vec2 const e{rng.uniform(-10, 10), rng.uniform(-10, 10)};
        double const th = rng.uniform(-4, 4);
        auto const p = eval::project_at_ct(e, th);
        double const n2 = e.x * e.x + e.y * e.y;
        if (std::abs(p.at * p.at + p.ct * p.ct - n2) > 1e-12 * std::max(n2, 1e-300)) return "AT^2 + CT^2 != |e|^2";
    }
    auto const q = eval::project_at_ct({0.3, 0.4}, std::acos(-1.0) / 2.0);
    if (std::abs(q.at - 0.4) > 1e-12 || std::abs(q.ct + 0.3) > 1e-12) return "quarter rotation";
    return {};
}

std::string raster_brute_force() {
    sim::SimConfig sc;
    sc.n_scenes = 5;
    sc.seed = 3;
    sc.map_template = sim::MapTemplate::Intersection;
    raster::RasterConfig rc;
    for (Scene const & scene : sim::generate(sc)) {
        auto const t = tracking::perfect_tracker(scene, 15, rc.history_len);
        Pose2 const sdv = scene.sdv_trajectory[15];
        auto const r = raster::rasterize_history(t.trackset, scene.map, sdv, rc);
        if (r.channels() != rc.history_len + 3) return "binary channel count";
        double const c0 = std::cos(sdv.heading), s0 = std::sin(sdv.heading);
        for (int k = 0; k < rc.history_len; ++k) {
            for (int iy = 0; iy < rc.height; ++iy) {
                for (int ix = 0; ix < rc.width; ++ix) {
                    double const px = -0.5 * rc.width * rc.cell_size + (ix + 0.5) * rc.cell_size;
                    double const py = -0.5 * rc.height * rc.cell_size + (iy + 0.5) * rc.cell_size;
                    double want = 0.0;
                    for (auto const & tr : t.trackset.tracks) {
                        Detection const * d = tr.at(15 - k);
                        if (d == nullptr) continue;
                        double const dx = d->center.x - sdv.x, dy = d->center.y - sdv.y;
                        double const bx = c0 * dx + s0 * dy, by = -s0 * dx + c0 * dy;
                        double const h = normalize_angle(d->center.heading - sdv.heading);
                        double const ux = std::cos(h) * (px - bx) + std::sin(h) * (py - by);
                        double const uy = -std::sin(h) * (px - bx) + std::cos(h) * (py - by);
                        if (ux >= -0.5 * d->extent.length && ux < 0.5 * d->extent.length && uy >= -0.5 * d->extent.width &&
                            uy < 0.5 * d->extent.width) {
                            want = 1.0;
                        }
                    }
                    if (r.values.at(3 + k, iy, ix) != want) return "binary history cell mismatch";
                }
            }
        }
    }
    rc.variant = raster::Variant::DisplacementField;
    if (raster::channel_count(rc) != 2 * rc.history_len + 3) return "displacement channel count";
    return {};
}

std::string noise_statistics() {
    sim::SimConfig sc;
    sc.n_scenes = 300;
    sc.seed = 4;
    sc.density_mode = sim::DensityMode::Dense;
    tracking::NoiseSpec ns;
    ns.switch_chance = 0.1;
    ns.pattern = tracking::SwitchPattern::UntilEnd;
    tracking::NoiseDiagnostics total;
    for (Scene const & scene : sim::generate(sc)) {
        auto const clean = tracking::perfect_tracker(scene, 15, 11);
        tracking::NoiseDiagnostics d;
        auto const noisy = tracking::inject_noise(clean, ns, &d);
        total += d;
        if (tracking::provenance_mismatches(noisy) != d.switched_steps) return "mismatch count differs from switched steps";
        for (auto const & tr : clean.trackset.tracks) {
            Track const * n = noisy.trackset.find(tr.id);
            if (n == nullptr || !(*n->at(15) == *tr.at(15))) return "present frame changed";
        }
    }
    double const p = static_cast<double>(total.switches_drawn) / total.tracks_considered;
    double const se = std::sqrt(0.1 * 0.9 / total.tracks_considered);
    if (std::abs(p - 0.1) > 3.0 * se) return "switch fraction " + eval::format_double(p) + " outside 3 standard errors";
    return {};
}

std::string track_free_invariance() {
    sim::SimConfig sc;
    sc.n_scenes = 10;
    sc.seed = 5;
    sc.density_mode = sim::DensityMode::Dense;
    models::ModelConfig mc;
    models::validate(mc);
    models::ParamStore params = models::init_params(mc, 9);
    for (Scene const & scene : sim::generate(sc)) {
        auto const clean = tracking::perfect_tracker(scene, 15, 11);
        Pose2 const sdv = scene.sdv_trajectory[15];
        auto const base = models::predict(mc, params, clean.trackset, scene.map, sdv);
        for (double chance : {0.1, 1.0}) {
            for (auto pattern : {tracking::SwitchPattern::OneStep, tracking::SwitchPattern::TwoConsecutive,
                                 tracking::SwitchPattern::UntilEnd}) {
                tracking::NoiseSpec ns;
                ns.switch_chance = chance;
                ns.pattern = pattern;
                auto const noisy = tracking::inject_noise(clean, ns);
                if (!(models::predict(mc, params, noisy.trackset, scene.map, sdv) == base)) return "prediction changed";
            }
        }
    }
    return {};
}

std::string round_trips() {
    auto const dir = std::filesystem::temp_directory_path() / ("trackbench-selftest-" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    sim::SimConfig sc;
    sc.n_scenes = 3;
    sc.seed = 6;
    auto const scenes = sim::generate(sc);
    write_corpus(scenes, dir / "c.jsonl");
    bool const corpus_ok = read_corpus(dir / "c.jsonl") == scenes;
    models::ModelConfig mc;
    mc.kind = models::ModelKind::Hybrid;
    models::validate(mc);
    auto const params = models::init_params(mc, 1);
    train::save_model(mc, params, dir / "m.ckpt", nlohmann::json::object());
    bool const ckpt_ok = train::load_model(dir / "m.ckpt").second == params;
    std::filesystem::remove_all(dir);
    if (!corpus_ok) return "corpus round trip";
    if (!ckpt_ok) return "checkpoint round trip";
    return {};
}

} // namespace

std::vector<SelftestResult> selftest() {
    std::vector<std::pair<std::string, Check>> const checks{
        {"loss identities", kl_identities},         {"AT/CT isometry", projection_isometry},
        {"raster brute force", raster_brute_force}, {"noise statistics", noise_statistics},
        {"track-free invariance", track_free_invariance}, {"round trips", round_trips}};
    std::vector<SelftestResult> out;
    for (auto const & [name, check] : checks) {
        SelftestResult r{name, false, {}};
        try {
            r.detail = check();
            r.passed = r.detail.empty();
        } catch (std::exception const & e) {
            r.detail = std::string("exception: ") + e.what();
        }
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace trackbench::bench
