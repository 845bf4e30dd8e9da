#pragma once

#include "cptr/model.hpp"

#include <string>

namespace cptr::harness {

struct CheckpointError : std::runtime_error {
  enum class Kind { io, bad_magic, bad_version, truncated, checksum, manifest };
  CheckpointError(Kind kind, const std::string& msg)
      : std::runtime_error(msg), kind(kind) {}
  Kind kind;
};

/// Model snapshot. File layout: "CPTR" magic, version byte 0x01, u32 LE
/// manifest length, text manifest (config, step, rng state, tensor table,
/// payload checksum), then raw 64-bit little-endian scalars.
struct Checkpoint {
  lm::ModelConfig config;
  lm::ModelParams params;
  long step = 0;
  std::string rng_state;  // text-serialized engine state
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace cptr::harness
