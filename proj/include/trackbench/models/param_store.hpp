#pragma once

#include "trackbench/core/tensor.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace trackbench::models {

/// Named parameter tensors with matching gradient buffers. Iteration order is by name.
class ParamStore {
public:
    struct Entry {
        Tensor value;
        Tensor grad;
    };

    Tensor & add(std::string const & name, std::vector<int> shape);
    [[nodiscard]] bool contains(std::string const & name) const { return entries_.contains(name); }
    Entry & at(std::string const & name);
    [[nodiscard]] Entry const & at(std::string const & name) const;
    [[nodiscard]] std::vector<std::string> names() const;
    [[nodiscard]] std::size_t parameter_count() const;
    void zero_grad();

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    [[nodiscard]] auto begin() const { return entries_.begin(); }
    [[nodiscard]] auto end() const { return entries_.end(); }

    /// Equality of names, shapes and values (gradients ignored).
    friend bool operator==(ParamStore const & a, ParamStore const & b);

private:
    std::map<std::string, Entry> entries_;
};

/// Checkpoint container: "trackbench-checkpoint v1" line, one metadata line (JSON text),
/// tensor count, then per tensor: name length, name, rank, dims (int32), raw doubles.
/// All integers are little-endian uint32/int32.
void save_checkpoint(ParamStore const & params, std::string const & metadata, std::filesystem::path const & path);
ParamStore load_checkpoint(std::filesystem::path const & path, std::string * metadata = nullptr);

} // namespace trackbench::models
