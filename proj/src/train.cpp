#include "swinc/train.hpp"

#include <algorithm>
#include <numeric>

#include "swinc/errors.hpp"

namespace swinc {

Metrics evaluate(SegmentationModel& model, const std::vector<SegSample>& samples, Index batch) {
  if (samples.empty()) throw ConfigError("evaluate: no samples");
  const Index k = model.config.num_classes;
  const bool was_training = model.training;
  model.training = false;
  NoGradGuard guard;
  Metrics total;
  total.dice.assign(static_cast<size_t>(k), 0.0);
  const Index n = static_cast<Index>(samples.size());
  for (Index first = 0; first < n; first += batch) {
    std::vector<Index> idx;
    for (Index i = first; i < std::min(n, first + batch); ++i) idx.push_back(i);
    const auto [vol, lab] = make_batch(samples, idx);
    const auto pred = argmax_labels(model.forward(vol));
    const auto truth = label_ids(lab, k);
    const size_t per = pred.size() / idx.size();
    for (size_t b = 0; b < idx.size(); ++b) {
      const Metrics m = dice_score(std::span(pred).subspan(b * per, per), std::span(truth).subspan(b * per, per), k);
      for (Index c = 0; c < k; ++c) total.dice[static_cast<size_t>(c)] += m.dice[static_cast<size_t>(c)];
      total.mean_foreground += m.mean_foreground;
    }
  }
  for (double& d : total.dice) d /= static_cast<double>(n);
  total.mean_foreground /= static_cast<double>(n);
  model.training = was_training;
  return total;
}

std::vector<TrainRecord> train(SegmentationModel& model, const std::vector<SegSample>& train_set,
                               const std::vector<SegSample>& val_set, const TrainOptions& o,
                               const std::function<void(const TrainRecord&)>& on_record,
                               const std::function<void(Index, double)>& on_step) {
  if (train_set.empty()) throw ConfigError("train: empty training set");
  if (o.batch < 1 || o.steps < 0 || o.log_every < 1) throw ConfigError("train: batch and log_every must be >= 1");
  AdamW opt(model.parameters(), o.optimizer);
  Rng rng(o.seed);
  std::vector<Index> order(train_set.size());
  std::iota(order.begin(), order.end(), Index{0});
  size_t cursor = order.size();

  std::vector<TrainRecord> records;
  double loss_acc = 0.0;
  Index loss_count = 0;
  for (Index step = 1; step <= o.steps; ++step) {
    std::vector<Index> idx;
    while (static_cast<Index>(idx.size()) < o.batch) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng.engine());
        cursor = 0;
      }
      idx.push_back(order[cursor++]);
    }
    const auto [vol, lab] = make_batch(train_set, idx);
    if (o.warmup_steps > 0) {
      opt.set_lr(o.optimizer.lr * std::min(1.0, static_cast<double>(step) / static_cast<double>(o.warmup_steps)));
    }
    model.training = true;
    opt.zero_grad();
    const Tensor loss = dice_ce_loss(model.forward(vol), lab);
    loss.backward();
    opt.step();
    loss_acc += loss.item();
    ++loss_count;
    if (on_step) on_step(step, loss.item());

    if (step % o.log_every == 0 || step == o.steps) {
      TrainRecord r{step, loss_acc / static_cast<double>(loss_count), {}};
      if (!val_set.empty()) r.val = evaluate(model, val_set);
      loss_acc = 0.0;
      loss_count = 0;
      if (on_record) on_record(r);
      records.push_back(std::move(r));
    }
  }
  model.training = true;
  return records;
}

}  // namespace swinc
