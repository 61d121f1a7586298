#pragma once

#include <string>
#include <vector>

#include "capforge/trainer.hpp"

namespace capforge {

/// Render a training loss curve as a standalone SVG: loss polyline over
/// iteration, axis labels, and a dashed vertical marker wherever the LR
/// schedule steps down.
std::string loss_curve_svg(const std::vector<LossRecord>& history, int width = 720,
                           int height = 420);

void write_loss_curve_svg(const std::vector<LossRecord>& history, const std::string& path,
                          int width = 720, int height = 420);

}  // namespace capforge
