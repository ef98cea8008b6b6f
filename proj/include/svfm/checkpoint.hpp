#pragma once

#include <string>

#include "svfm/config.hpp"
#include "svfm/trainer.hpp"

namespace svfm {

/// Layout:
///   SVFM1\n
///   format_version = 1
///   step = <n>, adam_step = <n>, config_lines = <k> (one per line)
///   <k lines of serialized config>
///   tensor <name> <shape> <byte offset> <count>   (one line per tensor)
///   payload_bytes = <b>
///   header_end\n
///   <b bytes: little-endian float64 values in tensor order>
///
/// Tensor names are `velocity/<param>`, `posterior/<param>`, `adam/m` and
/// `adam/v`. Offsets are relative to the start of the payload.
void save_checkpoint(const std::string& path, const ExperimentConfig& cfg, const TrainState& state);

struct LoadedCheckpoint {
    ExperimentConfig config;
    TrainState state;
};

// Any mismatch (magic, header, offsets, payload length) raises CheckpointError.
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace svfm
