#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "regdistill/dataset.hpp"
#include "regdistill/random.hpp"

namespace regdistill::testing {

/// Directory holding the bundled data files.
std::filesystem::path data_dir();

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

/// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(std::string_view tag);

/// Deterministic multi-article regulation text. Every article carries a
/// distinct topic word so lexical lookups resolve to a single article.
std::string synthetic_regulation(std::size_t article_count = 70);

/// Random string over ASCII, escapes, control bytes and multi-byte UTF-8.
std::string random_text(SeededRng& rng, std::size_t max_len, bool allow_controls = true);

/// Records valid for `phase`, with random but well-formed fields.
std::vector<dataset::InstructionRecord> random_records(SeededRng& rng, std::size_t n,
                                                       dataset::DatasetPhase phase);

/// Reference grounding over ASCII text, written without the library tokenizer:
/// a linear scan for each answer content token over every evidence token.
double reference_grounding(std::string_view answer, std::string_view evidence);

}  // namespace regdistill::testing
