#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "capforge/dataset.hpp"
#include "capforge/model.hpp"

namespace capforge {

struct TrainConfig {
    float lr0 = 4e-4f;
    float decay_factor = 0.5f;
    long decay_every = 50000;
    int batch = 16;
    float clip = 0.1f;           // element-value clamp magnitude
    int max_seq_len = kDefaultMaxSeqLen;
    float dropout = 0.5f;
    int beam = 20;               // evaluation beam width
    float adam_beta1 = 0.9f;
    float adam_beta2 = 0.999f;
    float adam_eps = 1e-8f;
    long max_iters = 3000;
    std::uint64_t seed = 1;
    long checkpoint_every = 500;
    float target_mean_loss = 0.0f;  // > 0: stop once the per-token mean drops below

    void validate() const;
};

/// Stepwise schedule: lr0 * decay^floor(iteration / decay_every).
float lr_at(const TrainConfig& cfg, long iteration);

/// Clamp every gradient element into [-clip, clip].
void clip_gradients(std::vector<float>& grad, float clip);

struct AdamState {
    struct Slot {
        std::vector<float> m, v;
    };
    std::unordered_map<std::string, Slot> slots;
    long t = 0;
};

/// Bias-corrected Adam update applied in place to every named tensor's values
/// from its grad. Aborts on non-finite gradients, naming the tensor.
void adam_step(const std::vector<std::pair<std::string, Tensor*>>& params, AdamState& state,
               float lr, const TrainConfig& cfg);

struct LossRecord {
    long iteration = 0;
    float loss = 0.0f;  // mean per-token NLL for the batch
    float lr = 0.0f;
};

void write_loss_log(const std::vector<LossRecord>& history, const std::string& path);
std::vector<LossRecord> read_loss_log(const std::string& path);

struct TrainResult {
    std::vector<LossRecord> history;
    long iterations_run = 0;
};

/// One iteration = one batch. Deterministic given (seed, data, config):
/// per-epoch shuffles, dropout masks and gradient accumulation order are all
/// fixed. Checkpoints every checkpoint_every iterations and at the end when
/// `checkpoint_path` is non-empty.
TrainResult train(CaptionModel& model, const DatasetSplit& split, const TrainConfig& cfg,
                  const std::string& checkpoint_path = "",
                  std::vector<LossRecord> prior_history = {}, long start_iteration = 0);

/// Continue training from a checkpoint on a new corpus: the checkpoint's
/// vocabulary is kept (unknown corpus tokens become UNK), Adam state is
/// fresh, the iteration counter and LR schedule restart.
CaptionModel transfer_train(const std::string& checkpoint_path, const DatasetSplit& new_split,
                            const TrainConfig& cfg, const std::string& out_checkpoint = "",
                            TrainResult* result = nullptr);

}  // namespace capforge
