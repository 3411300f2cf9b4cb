#pragma once

#include <cstdint>
#include <string>

#include "drum/model.hpp"

namespace drum::model {

// Flat little-endian archive of named 64-bit-real arrays with a fixed-size
// header carrying the model shape and a vocabulary hash. Byte layout is
// documented in docs/checkpoint-format.md and guarded by a versioned magic.
struct CheckpointHeader {
    ModelConfig config;
    int head_count = 0;
    std::uint64_t vocab_hash = 0;
};

void save_checkpoint(const std::string& path, const DrumModel& model, std::uint64_t vocab_hash);

CheckpointHeader read_checkpoint_header(const std::string& path);

// Rebuilds the model from the archive. If expect_vocab_hash is nonzero it
// must match the stored hash.
DrumModel load_checkpoint(const std::string& path, std::uint64_t expect_vocab_hash = 0);

} // namespace drum::model
