#pragma once

#include "trackbench/evalkit/evalkit.hpp"
#include "trackbench/simgen/simgen.hpp"
#include "trackbench/tracking/tracking.hpp"
#include "trackbench/trainer/trainer.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace trackbench::bench {

inline constexpr int kManifestFormatVersion = 1;
inline constexpr int kResultsFormatVersion = 1;

/// Raised for malformed or inconsistent experiment specs (exit code 2).
class SpecError : public Error {
public:
    using Error::Error;
};

struct ModelEntry {
    std::string name;
    // Exactly one source is set.
    std::optional<train::TrainConfig> train;
    std::optional<std::filesystem::path> checkpoint;
    std::optional<models::BaselineKind> baseline;
};

struct NoiseEntry {
    std::string name;
    tracking::NoiseSpec spec;
};

struct ExperimentSpec {
    std::string name;
    std::optional<sim::SimConfig> corpus_sim;
    std::optional<std::filesystem::path> corpus_path;
    std::vector<ModelEntry> models;
    std::vector<NoiseEntry> noise;
    std::vector<eval::SlicePredicate> slices{eval::SlicePredicate{}};
    std::filesystem::path output;
    std::uint64_t seed = 0;
    int present = 15;
    bool validation_only = true; // evaluate on the validation split
    nlohmann::json source;       // spec as parsed, after seed overrides
};

/// Parses and validates; relative paths resolve against `base_dir`. Throws SpecError.
ExperimentSpec experiment_from_json(nlohmann::json j, std::filesystem::path const & base_dir = {},
                                    std::optional<std::uint64_t> seed_override = std::nullopt);
ExperimentSpec load_experiment(std::filesystem::path const & path,
                               std::optional<std::uint64_t> seed_override = std::nullopt);

/// TRACKBENCH_SEED, when set to a valid unsigned integer.
std::optional<std::uint64_t> seed_from_env();

std::string to_string(models::BaselineKind kind);
models::BaselineKind baseline_from_string(std::string const & name);

struct CellFailure {
    std::string model;
    std::string noise; // empty when the model itself failed to load or train
    std::string message;
};

struct RunOutcome {
    std::filesystem::path directory;
    std::size_t rows = 0;
    std::vector<CellFailure> failures;
    [[nodiscard]] int exit_code() const { return failures.empty() ? 0 : 1; }
};

/// Runs every (model x noise) cell with up to `jobs` workers. Writes results.csv, results.json,
/// per-cell files and manifest.json into spec.output.
RunOutcome run(ExperimentSpec const & spec, int jobs = 1);

struct ReportOutcome {
    std::string markdown;
    std::vector<std::string> missing; // "model / noise / slice" descriptors
    std::optional<bool> density_ordering; // set when the run has clean dense and sparse slices
};

/// Renders report.md and plot-ready CSVs into the run directory. Throws Error for an empty or incomplete run dir.
ReportOutcome report(std::filesystem::path const & run_dir);

/// Recomputes the digest list and stage grouping of manifest.json from the files in `run_dir`.
void refresh_manifest(std::filesystem::path const & run_dir);
/// Writes through a temporary file and rename.
void write_atomic(std::filesystem::path const & path, std::string const & text);
std::string read_text(std::filesystem::path const & path);

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(std::filesystem::path const & path);

struct SelftestResult {
    std::string name;
    bool passed = false;
    std::string detail;
};
std::vector<SelftestResult> selftest();

} // namespace trackbench::bench
