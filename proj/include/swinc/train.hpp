#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "swinc/data.hpp"
#include "swinc/metrics.hpp"
#include "swinc/model.hpp"
#include "swinc/optim.hpp"

namespace swinc {

struct TrainOptions {
  Index steps = 500;
  Index batch = 2;
  Index warmup_steps = 0;  // linear ramp of the learning rate
  Index log_every = 50;    // held-out evaluation interval; the last step is always logged
  AdamWOptions optimizer;
  std::uint64_t seed = 0;  // batch order
};

struct TrainRecord {
  Index step = 0;
  double loss = 0.0;  // mean training loss since the previous record
  Metrics val;
};

/// Per-class Dice averaged over volumes, evaluated in inference mode.
Metrics evaluate(SegmentationModel& model, const std::vector<SegSample>& samples, Index batch = 2);

/// Runs AdamW on dice_ce_loss. `on_step(step, loss)` fires every step,
/// `on_record` at each logging point.
std::vector<TrainRecord> train(SegmentationModel& model, const std::vector<SegSample>& train_set,
                               const std::vector<SegSample>& val_set, const TrainOptions& options,
                               const std::function<void(const TrainRecord&)>& on_record = {},
                               const std::function<void(Index, double)>& on_step = {});

}  // namespace swinc
