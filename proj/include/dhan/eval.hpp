#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dhan/data_pipeline.hpp"
#include "dhan/model.hpp"
#include "json.hpp"

namespace dhan {

int hr_at_n(std::size_t rank, std::size_t n);
double ndcg_at_n(std::size_t rank, std::size_t n);

// 1-indexed rank of scores[positive]; ties go to the lower index.
std::size_t rank_of_positive(std::span<const double> scores, std::size_t positive);

struct MetricsTable {
  double hr1 = 0, hr5 = 0, hr10 = 0;
  double ndcg1 = 0, ndcg5 = 0, ndcg10 = 0;
  std::size_t instances = 0;

  double get(const std::string& name) const;  // "hr@10", "ndcg@5", ...
  bool operator==(const MetricsTable&) const = default;
};

class MetricsAccumulator {
 public:
  void add(std::size_t rank);
  MetricsTable table() const;

 private:
  std::vector<std::size_t> ranks_;
};

nlohmann::json metrics_json(const MetricsTable& m);
MetricsTable metrics_from_json(const nlohmann::json& j);
std::string format_metrics(const MetricsTable& m);

struct EvalOptions {
  std::size_t n_negatives = 99;
  std::uint64_t seed = 0;
  std::size_t batch = 1;  // instances per scoring call
};

// Candidate list for one test instance: the positive at a seeded position
// among n_negatives uniform negatives outside the user's clicks.
struct EvalList {
  std::vector<std::size_t> candidates;
  std::size_t positive = 0;  // index into candidates
};
EvalList make_eval_list(const Instance& instance, const Dataset& dataset, std::size_t n_negatives,
                        std::uint64_t seed);

// Scores every candidate of every group, in order.
using Scorer = std::function<std::vector<double>(const std::vector<ScoreGroup>&)>;

MetricsTable evaluate(const Scorer& scorer, const std::vector<Instance>& instances, const Dataset& dataset,
                      const EvalOptions& options = {});
MetricsTable evaluate(const DhanModel& model, const std::vector<Instance>& instances, const Dataset& dataset,
                      const EvalOptions& options = {});

// sentence.csv, element.csv, sequence.csv, time_sequence.csv. The per-news
// matrices are stacked vertically, one block per history position.
std::vector<std::string> export_attention(const DhanModel& model, const Instance& instance, const Dataset& dataset,
                                          const std::string& out_dir);

}  // namespace dhan
