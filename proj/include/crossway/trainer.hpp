#pragma once

#include "crossway/checkpoint.hpp"

namespace crossway {

struct TrainSettings {
    int epochs = 50;
    int batch = 64;
    double lr = 1e-4, wd = 1e-6;
    double ema_decay = 0.999;
    int ema_warmup = 200;
    uint64_t seed = 1;
    int64_t max_steps = -1;  // cap total optimizer steps (tests); -1 = no cap
    bool quiet = false;
};

struct TrainResult {
    std::vector<double> epoch_mean_total;
    std::vector<double> step_total;  // per-step losses of this invocation
    std::vector<double> step_ddpm;
    std::filesystem::path last_checkpoint;
    int64_t steps = 0;
    int start_epoch = 0;
};

// Epoch loop: one pass over every window start, shuffled per epoch from a
// (seed, epoch) stream, batches of `batch` with the last partial batch
// dropped. Writes ckpt_epoch{NNN} and appends to loss.csv each epoch; resumes
// from the newest checkpoint in out_dir.
TrainResult train(const ModelConfig& mcfg, const Schedule& sched, const TrainSettings& ts,
                  const DemoDataset& ds, const std::filesystem::path& out_dir);

}  // namespace crossway
