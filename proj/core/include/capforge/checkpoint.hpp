#pragma once

#include <string>
#include <vector>

#include "capforge/model.hpp"
#include "capforge/trainer.hpp"

namespace capforge {

/// On-disk model snapshot: a JSON manifest (format version, model + train
/// config, vocabulary, tensor directory with name/shape/offset, iteration,
/// loss history) followed by raw little-endian float32 arrays. Save->load is
/// bit-exact for every tensor.
struct CheckpointData {
    CaptionModel model;
    TrainConfig train_cfg;
    long iteration = 0;
    std::vector<LossRecord> history;
};

void save_checkpoint(CaptionModel& model, const TrainConfig& train_cfg, long iteration,
                     const std::vector<LossRecord>& history, const std::string& path);

/// Validates version, manifest structure, and that the tensor directory
/// matches exactly what the stored config implies (names and shapes); any
/// discrepancy raises a ParseError listing the offending names. When
/// `expected` is given, the checkpoint must also match that skeleton (a
/// 2-layer checkpoint cannot seed a 1-layer model).
CheckpointData load_checkpoint(const std::string& path, const ModelConfig* expected = nullptr);

}  // namespace capforge
