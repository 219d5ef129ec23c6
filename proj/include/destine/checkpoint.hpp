#pragma once

#include <string>

#include "destine/layers.hpp"

namespace destine {

// Checkpoint container: a fixed header with a directory of
// {name, dtype, shape, byte offset} entries, followed by a contiguous
// little-endian fp32 payload. Parameters are down-cast to fp32 on save and
// up-cast on load; a save/load/save cycle is byte-identical.
inline constexpr uint32_t kCheckpointMagic = 0x4E545344;  // "DSTN"
inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const nn::ParamSet& params);

// The parameter set must match the stored directory exactly (names, order,
// shapes). No state is modified when loading fails.
void load_checkpoint(const std::string& path, nn::ParamSet& params);

// Rounds every parameter through fp32 in place, matching what a save/load
// round-trip produces.
void round_params_to_fp32(nn::ParamSet& params);

}  // namespace destine
