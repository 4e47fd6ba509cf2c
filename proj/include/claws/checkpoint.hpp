#pragma once

#include <filesystem>
#include <vector>

#include "claws/trainer.hpp"

namespace claws {

/// CLWSCKPT layout, little-endian: magic, version u32, d/z1/z2 u32, every
/// parameter value as f64 in ClawsParams::kNames order, the RMSProp running
/// averages in the same order, then the iteration counter u64.
std::vector<char> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<char>& bytes, const std::string& source = "checkpoint");

/// Atomic: writes a temporary sibling and renames it into place.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace claws
