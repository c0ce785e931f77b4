#include "support.hpp"

#include "trackbench/core/error.hpp"
#include "trackbench/core/rng.hpp"
#include "trackbench/trainer/trainer.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

using namespace trackbench;
using namespace trackbench::train;

namespace {

TrainConfig tiny_config(models::ModelKind kind, int iterations) {
    TrainConfig c;
    c.model.kind = kind;
    c.model.cnn.conv_layers = {{3, 2, 4}, {3, 2, 8}};
    c.model.cnn.head_hidden = 8;
    c.model.rnn.hidden_dim = 4;
    c.iterations = iterations;
    c.batch_size = 2;
    c.eval_every = 3;
    c.seed = 17;
    return c;
}

} // namespace

TEST_CASE("validation split is a stable partition") {
    auto const val = split_indices(1000, true);
    auto const tr = split_indices(1000, false);
    CHECK(val.size() + tr.size() == 1000);
    for (auto i : val) CHECK(is_validation_scene(i));
    for (auto i : tr) CHECK_FALSE(is_validation_scene(i));
    CHECK(val.size() > 150);
    CHECK(val.size() < 250);
    // Prefixes of a larger corpus keep their assignment.
    auto const small = split_indices(100, true);
    CHECK(std::equal(small.begin(), small.end(), val.begin()));
}

TEST_CASE("samples target the agent behind each present detection") {
    Scene const s = sim::generate(testing::small_config(51, 1, sim::DensityMode::Dense))[0];
    auto const clean = tracking::perfect_tracker(s, 15, 11);
    tracking::NoiseSpec ns;
    ns.switch_chance = 1.0;
    ns.pattern = tracking::SwitchPattern::UntilEnd;
    auto const noisy = tracking::inject_noise(clean, ns);
    models::ModelConfig mc;
    mc.kind = models::ModelKind::Hybrid;
    models::validate(mc);
    Sample const a = make_sample(mc, s, clean, 5);
    Sample const b = make_sample(mc, s, noisy, 5);
    auto const gt = sim::ground_truth_future(s, 15, 5);
    REQUIRE(a.anchors.tracks == b.anchors.tracks);
    REQUIRE(b.states.size() == b.anchors.tracks.size());
    for (std::size_t i = 0; i < a.anchors.tracks.size(); ++i) {
        CHECK(a.targets[i].centers == gt.agents.at(a.anchors.tracks[i]).centers);
        CHECK(b.targets[i].centers == a.targets[i].centers);
    }
    CHECK(loss_terms(a, 5) == static_cast<long>(2 * 5 * a.anchors.tracks.size()));
}

TEST_CASE("fused KL node matches the evaluation loss and its gradient") {
    Scene const s = sim::generate(testing::small_config(52, 1, sim::DensityMode::Dense))[0];
    auto const clean = tracking::perfect_tracker(s, 15, 11);
    models::ModelConfig mc;
    models::validate(mc);
    Sample const sample = make_sample(mc, s, clean, 5);
    int const n = static_cast<int>(sample.anchors.tracks.size());
    REQUIRE(n > 0);
    models::ParamStore ps;
    Tensor & rows = ps.add("rows", {n, 20});
    Rng rng = seeded_rng(52, "rows");
    for (int i = 0; i < n * 20; ++i) rows[static_cast<std::size_t>(i)] = i % 4 >= 2 ? rng.uniform(0.1, 1.5) : rng.uniform(-2, 2);
    eval::LossParams const lp;
    double const scale = 1.0 / static_cast<double>(loss_terms(sample, 5));

    std::vector<AgentPrediction> preds(static_cast<std::size_t>(n));
    std::vector<eval::Pairing> pairs;
    for (int i = 0; i < n; ++i) {
        auto & p = preds[static_cast<std::size_t>(i)];
        p.origin = sample.anchors.centers[static_cast<std::size_t>(i)];
        for (int h = 0; h < 5; ++h) {
            std::size_t const b = static_cast<std::size_t>(i * 20 + 4 * h);
            p.horizons.push_back({rows[b], rows[b + 1], rows[b + 2], rows[b + 3]});
        }
        pairs.emplace_back(&p, &sample.targets[static_cast<std::size_t>(i)]);
    }
    ps.zero_grad();
    models::ad::Graph g(&ps);
    auto const loss = kl_loss_node(g, g.param("rows"), sample.anchors, sample.targets, lp, scale);
    CHECK(g.value(loss)[0] == doctest::Approx(eval::total_loss(pairs, lp)).epsilon(1e-12));
    g.backward(loss);
    Tensor const grad = ps.at("rows").grad;
    for (std::size_t k = 0; k < grad.size(); k += 3) {
        double const keep = rows[k];
        auto eval_at = [&](double v) {
            rows[k] = v;
            models::ad::Graph h(&ps);
            double const out = h.value(kl_loss_node(h, h.param("rows"), sample.anchors, sample.targets, lp, scale))[0];
            rows[k] = keep;
            return out;
        };
        double const eps = 1e-6;
        CHECK(grad[k] == doctest::Approx((eval_at(keep + eps) - eval_at(keep - eps)) / (2 * eps)).epsilon(1e-5).scale(1e-4));
    }
}

TEST_CASE("training is deterministic and reduces the loss") {
    auto const scenes = sim::generate(testing::small_config(53, 24));
    for (auto kind : {models::ModelKind::TrackFree, models::ModelKind::TrackBased, models::ModelKind::Hybrid}) {
        auto c = tiny_config(kind, 6);
        c.noise.switch_chance = 0.3;
        TrainResult const a = train::train(c, scenes);
        TrainResult const b = train::train(c, scenes);
        CHECK(a.params == b.params);
        CHECK(a.log.to_csv(false) == b.log.to_csv(false));
        CHECK_FALSE(a.params == models::init_params(c.model, c.seed));
        REQUIRE(a.log.entries.size() == 3); // iterations 0, 3 and 6
        CHECK(a.log.entries.front().iteration == 0);
        CHECK(a.log.entries.back().iteration == 6);
        for (auto const & e : a.log.entries) CHECK(std::isfinite(e.val_ade));
    }
    auto c = tiny_config(models::ModelKind::TrackFree, 60);
    c.eval_every = 20;
    c.optimizer.lr = 3e-3;
    TrainResult const r = train::train(c, scenes);
    REQUIRE(r.log.entries.size() == 4);
    CHECK(r.log.entries[3].train_loss < r.log.entries[1].train_loss);
}

TEST_CASE("checkpoint bytes do not depend on the output path") {
    auto const scenes = sim::generate(testing::small_config(54, 8));
    testing::TempDir dir("ckpt-path");
    auto c = tiny_config(models::ModelKind::Hybrid, 3);
    c.checkpoint = dir.path / "a.ckpt";
    train::train(c, scenes);
    c.checkpoint = dir.path / "nested" / "b.ckpt";
    c.log = dir.path / "b.csv";
    train::train(c, scenes);
    auto slurp = [](std::filesystem::path const & p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    CHECK_FALSE(slurp(dir.path / "a.ckpt").empty());
    CHECK(slurp(dir.path / "a.ckpt") == slurp(dir.path / "nested" / "b.ckpt"));
}

TEST_CASE("train config validation and json round trip") {
    auto c = tiny_config(models::ModelKind::Hybrid, 5);
    c.corpus = "corpus.jsonl";
    validate(c);
    auto const back = train_config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    c.batch_size = 0;
    CHECK_THROWS_AS(validate(c), InvariantError);
    c = tiny_config(models::ModelKind::Hybrid, 5);
    CHECK_THROWS_AS(train::train(c), InvariantError); // no corpus path
    CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"batch_size", "eight"}}), Error);
}

TEST_CASE("evaluation never mutates inputs and baselines rank sensibly") {
    auto sc = testing::small_config(54, 30);
    sc.speed_range = {4.0, 10.0};
    auto const scenes = sim::generate(sc);
    auto const copy = scenes;
    std::vector<std::size_t> all(scenes.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    EvalConfig ec;
    auto const stationary = evaluate(baseline_predictor(models::BaselineKind::Stationary, 5), scenes, all, ec);
    auto const cv = evaluate(baseline_predictor(models::BaselineKind::ConstantVelocity, 5), scenes, all, ec);
    CHECK(scenes == copy);
    CHECK(cv.metrics(0).count == stationary.metrics(0).count);
    CHECK(cv.metrics(0).ade < 0.1 * stationary.metrics(0).ade); // constant-velocity agents only
    ec.noise.switch_chance = 1.0;
    ec.noise.pattern = tracking::SwitchPattern::UntilEnd;
    tracking::NoiseDiagnostics diag;
    auto const noisy = evaluate(baseline_predictor(models::BaselineKind::ConstantVelocity, 5), scenes, all, ec, &diag);
    CHECK(diag.switches_applied > 0);
    CHECK(noisy.metrics(0).ade > cv.metrics(0).ade);
    CHECK(noisy.metrics(0).count == cv.metrics(0).count);
}

TEST_CASE("model files carry their configuration") {
    testing::TempDir dir("model");
    models::ModelConfig mc;
    mc.kind = models::ModelKind::TrackBased;
    models::validate(mc);
    auto const params = models::init_params(mc, 3);
    save_model(mc, params, dir.path / "m.ckpt", nlohmann::json{{"note", "x"}});
    nlohmann::json meta;
    auto const [back_config, back_params] = load_model(dir.path / "m.ckpt", &meta);
    CHECK(back_params == params);
    CHECK(back_config.kind == models::ModelKind::TrackBased);
    CHECK(meta["note"] == "x");
    // The predictor built from a loaded model reproduces direct inference.
    Scene const s = sim::generate(testing::small_config(55, 1))[0];
    auto const t = tracking::perfect_tracker(s, 15, 11);
    auto p = params;
    CHECK(model_predictor(back_config, back_params)(s, t) == models::predict(mc, p, t.trackset, s.map, s.sdv_trajectory[15]));
}
