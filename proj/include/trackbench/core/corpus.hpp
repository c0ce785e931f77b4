#pragma once

#include "trackbench/core/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace trackbench {

inline constexpr int kCorpusFormatVersion = 1;

/// Writes scenes as line-delimited JSON: one header line, then one scene per line.
/// Doubles are printed in shortest round-trip form. Rejects non-finite values.
void write_corpus(std::vector<Scene> const & scenes, std::filesystem::path const & path);

/// Reads and validates a corpus. All-or-nothing: any malformed record throws.
std::vector<Scene> read_corpus(std::filesystem::path const & path);

/// Single-scene codec used by the corpus file, exposed for tests and tools.
std::string encode_scene(Scene const & scene);
Scene decode_scene(std::string const & line);

} // namespace trackbench
