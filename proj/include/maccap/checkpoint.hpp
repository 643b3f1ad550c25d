#pragma once

#include <cstdint>
#include <string>

#include "maccap/adaptor.hpp"

namespace maccap {

// Versioned binary adaptor checkpoint. Header records the specs the adaptor
// was trained against plus the noise config and run seed; tensor payloads are
// raw little-endian doubles, so a save/load round trip is bit-exact.
struct CheckpointHeader {
    std::uint32_t format_version = 1;
    std::uint64_t backbone_hash = 0;
    std::uint64_t lm_hash = 0;
    NoiseConfig noise;
    std::uint64_t seed = 0;
    AdaptorConfig adaptor;
};

struct Checkpoint {
    CheckpointHeader header;
    AdaptorParams params;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);

// Throws std::runtime_error on corrupt/truncated files. When
// expect_backbone_hash / expect_lm_hash are nonzero, a mismatch throws an
// incompatible-checkpoint error.
Checkpoint load_checkpoint(const std::string& path,
                           std::uint64_t expect_backbone_hash = 0,
                           std::uint64_t expect_lm_hash = 0);

}  // namespace maccap
