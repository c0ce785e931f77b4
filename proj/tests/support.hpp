#pragma once

#include "trackbench/core/types.hpp"
#include "trackbench/simgen/simgen.hpp"

#include <filesystem>
#include <string>

#include <unistd.h>

namespace testing {

/// Fresh temporary directory removed on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(std::string const & tag) {
        path = std::filesystem::temp_directory_path() / ("trackbench-test-" + tag + "-" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(TempDir const &) = delete;
    TempDir & operator=(TempDir const &) = delete;
};

inline trackbench::sim::SimConfig small_config(std::uint64_t seed, int scenes,
                                               trackbench::sim::DensityMode density = trackbench::sim::DensityMode::Mixed) {
    trackbench::sim::SimConfig c;
    c.n_scenes = scenes;
    c.seed = seed;
    c.density_mode = density;
    return c;
}

/// Detection with the given pose and default car footprint.
inline trackbench::Detection det(double x, double y, double heading, int t, double length = 4.5, double width = 2.0) {
    trackbench::Detection d;
    d.center = {x, y, heading};
    d.extent = {length, width};
    d.timestep = t;
    return d;
}

} // namespace testing
