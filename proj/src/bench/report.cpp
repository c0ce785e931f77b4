#include "trackbench/bench/bench.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

namespace trackbench::bench {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fixed(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

struct CellKey {
    std::string model, noise, slice;
    auto operator<=>(CellKey const &) const = default;
};

bool is_clean(json const & noise) {
    return noise.value("switch_chance", 0.0) == 0.0 && noise.value("position_jitter_sigma", 0.0) == 0.0 &&
           noise.value("dropout_chance", 0.0) == 0.0;
}

} // namespace

ReportOutcome report(fs::path const & dir) {
    if (!fs::is_directory(dir) || fs::is_empty(dir)) {
        throw Error("run directory '" + dir.string() + "' is missing or empty");
    }
    if (!fs::exists(dir / "results.json") || !fs::exists(dir / "manifest.json")) {
        throw Error("run directory '" + dir.string() + "' has no results.json/manifest.json; run the experiment first");
    }
    json results;
    try {
        results = json::parse(read_text(dir / "results.json"));
    } catch (json::exception const & e) {
        throw Error(std::string("results.json is not valid JSON: ") + e.what());
    }
    if (results.value("format", std::string{}) != "trackbench-results") throw Error("results.json has an unknown format");

    std::map<CellKey, json> slices;
    std::map<std::string, std::string> kinds;
    std::map<std::string, json> noise_specs;
    for (json const & cell : results["cells"]) {
        std::string const model = cell["model"];
        std::string const noise = cell["noise"];
        kinds[model] = cell["model_kind"];
        noise_specs[noise] = cell["noise_spec"];
        for (json const & sl : cell["report"]["slices"]) slices[{model, noise, sl["slice"]}] = sl;
    }
    std::vector<std::string> const models = results["expected"]["models"];
    std::vector<std::string> const noises = results["expected"]["noise"];
    std::vector<std::string> const labels = results["expected"]["slices"];

    ReportOutcome out;
    for (auto const & m : models) {
        for (auto const & n : noises) {
            for (auto const & s : labels) {
                if (!slices.contains({m, n, s})) out.missing.push_back(m + " / " + n + " / " + s);
            }
        }
    }

    std::string md = "# Experiment " + results.value("experiment", std::string("?")) + "\n\n";
    md += "AT and CT are mean absolute along-track and cross-track errors in meters; ADE and FDE in meters.\n\n";
    if (!out.missing.empty()) {
        md += "## Missing cells\n\n";
        for (auto const & m : out.missing) md += "- " + m + "\n";
        for (json const & f : results["failures"]) {
            md += "- failure: " + f["model"].get<std::string>() +
                  (f["noise"].get<std::string>().empty() ? "" : " / " + f["noise"].get<std::string>()) + ": " +
                  f["error"].get<std::string>() + "\n";
        }
        md += "\n";
    }
    for (auto const & n : noises) {
        for (auto const & s : labels) {
            md += "## Noise `" + n + "`, slice `" + s + "`\n\n";
            md += "| Model | AT | CT | ADE | FDE | n |\n|---|---|---|---|---|---|\n";
            for (auto const & m : models) {
                auto const it = slices.find({m, n, s});
                if (it == slices.end()) {
                    md += "| " + m + " | MISSING | MISSING | MISSING | MISSING | 0 |\n";
                    continue;
                }
                json const & v = it->second;
                md += "| " + m + " | " + fixed(v["AT"]) + " | " + fixed(v["CT"]) + " | " + fixed(v["ADE"]) + " | " +
                      fixed(v["FDE"]) + " | " + std::to_string(v["n"].get<long>()) + " |\n";
            }
            md += "\n";
        }
    }

    // Long-format data for noise sweeps and pattern comparisons.
    std::string noise_csv = "model,model_kind,noise,switch_chance,pattern,position_jitter_sigma,dropout_chance,slice,metric,value,n\n";
    std::string density_csv = "model,model_kind,noise,slice,metric,value,n\n";
    for (auto const & m : models) {
        for (auto const & n : noises) {
            for (auto const & s : labels) {
                auto const it = slices.find({m, n, s});
                if (it == slices.end()) continue;
                json const & ns = noise_specs[n];
                for (char const * metric : eval::kMetricNames) {
                    std::string const value = eval::format_double(it->second[metric].get<double>());
                    std::string const count = std::to_string(it->second["n"].get<long>());
                    noise_csv += m + "," + kinds[m] + "," + n + "," + eval::format_double(ns["switch_chance"].get<double>()) +
                                 "," + ns["pattern"].get<std::string>() + "," +
                                 eval::format_double(ns["position_jitter_sigma"].get<double>()) + "," +
                                 eval::format_double(ns["dropout_chance"].get<double>()) + "," + s + "," + metric + "," +
                                 value + "," + count + "\n";
                    if (is_clean(ns)) density_csv += m + "," + kinds[m] + "," + n + "," + s + "," + metric + "," + value + "," + count + "\n";
                }
            }
        }
    }

    // Density ordering: the track-free model should lose the most going from sparse to dense scenes.
    // Slices pair up by their speed suffix, e.g. "dense/v>3" with "sparse/v>3".
    std::optional<std::pair<std::string, std::string>> density_pair;
    for (auto const & s : labels) {
        if (s.rfind("dense", 0) != 0) continue;
        std::string const sparse = "sparse" + s.substr(5);
        if (std::find(labels.begin(), labels.end(), sparse) != labels.end()) {
            density_pair = {s, sparse};
            break;
        }
    }
    if (density_pair) {
        auto const & [dense_label, sparse_label] = *density_pair;
        for (auto const & n : noises) {
            if (!noise_specs.contains(n) || !is_clean(noise_specs[n])) continue;
            std::optional<double> track_free;
            std::vector<std::pair<std::string, double>> others;
            for (auto const & m : models) {
                auto const d = slices.find({m, n, dense_label});
                auto const sp = slices.find({m, n, sparse_label});
                if (d == slices.end() || sp == slices.end() || d->second["n"].get<long>() == 0 ||
                    sp->second["n"].get<long>() == 0 || sp->second["ADE"].get<double>() <= 0.0) {
                    continue;
                }
                double const ratio = d->second["ADE"].get<double>() / sp->second["ADE"].get<double>();
                if (kinds[m] == "track_free" && !track_free) track_free = ratio;
                else others.emplace_back(m, ratio);
            }
            if (!track_free || others.empty()) continue;
            bool ok = true;
            md += "## Density ordering (noise `" + n + "`)\n\nADE(" + dense_label + ") / ADE(" + sparse_label +
                  "): track-free " + fixed(*track_free);
            for (auto const & [m, r] : others) {
                md += ", " + m + " " + fixed(r);
                ok = ok && *track_free > r;
            }
            md += std::string("\n\nTrack-free degrades most in dense scenes: ") + (ok ? "reproduced" : "not reproduced") + "\n\n";
            out.density_ordering = ok;
            break;
        }
    }

    write_atomic(dir / "report.md", md);
    write_atomic(dir / "report_noise.csv", noise_csv);
    write_atomic(dir / "report_density.csv", density_csv);
    refresh_manifest(dir);
    out.markdown = std::move(md);
    return out;
}

} // namespace trackbench::bench
