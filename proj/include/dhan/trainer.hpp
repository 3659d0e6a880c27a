#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dhan/adam.hpp"
#include "dhan/checkpoint.hpp"
#include "dhan/config.hpp"
#include "dhan/model.hpp"

namespace dhan {

// Candidates for one training instance: the positive first, then k negatives.
struct TrainingGroup {
  std::vector<std::size_t> candidates;
  double dns_score_mean = 0.0;      // DNS only
  double uniform_score_mean = 0.0;  // DNS only
};

class Trainer {
 public:
  Trainer(const RunConfig& config, const Dataset& dataset);

  // One pass over the training instances followed by evaluation.
  EpochRecord run_epoch();
  // The same pass without evaluation; metrics stay zero.
  EpochRecord train_epoch();
  // Evaluation without training (epoch 0 record).
  EpochRecord evaluate_only();

  const DhanModel& model() const { return *model_; }
  DhanModel& model() { return *model_; }
  std::size_t epoch() const { return epoch_; }
  std::size_t steps() const { return adam_.step; }

  // Negative selection for `instance`; `pool_reps` are the current
  // candidate representations of every news item (DNS only).
  TrainingGroup sample_negatives(const Instance& instance, std::uint64_t seed, const Tensor& pool_reps) const;

 private:
  void fill_eval(EpochRecord& record) const;

  RunConfig config_;
  const Dataset& dataset_;
  std::unique_ptr<DhanModel> model_;
  AdamState adam_;
  std::size_t epoch_ = 0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  MetricsTable best;
  std::string checkpoint_path;  // empty when nothing was written
  std::unique_ptr<DhanModel> final_model;
};

struct TrainOptions {
  bool write_files = true;  // best.ckpt, metrics.jsonl, metrics.json under out_dir
  std::function<void(const EpochRecord&)> on_epoch;
};

TrainResult train(const RunConfig& config, const Dataset& dataset, const TrainOptions& options = {});

}  // namespace dhan
