#pragma once

#include "capforge/dataset.hpp"
#include "capforge/infer.hpp"
#include "capforge/metrics.hpp"
#include "capforge/model.hpp"

namespace capforge {

/// Beam-decode every image of the split and score against its references.
/// Worker count honors CAPTION_FORGE_THREADS (decodes are independent);
/// aggregation runs in image order so the report is deterministic.
EvalReport evaluate_corpus(const CaptionModel& model, const DatasetSplit& split, int beam_k = 20);

/// Forward-only mean per-token NLL over a split (dropout off).
double evaluate_mean_loss(const CaptionModel& model, const DatasetSplit& split);

}  // namespace capforge
