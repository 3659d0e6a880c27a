#include "dhan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dhan/element_attention.hpp"
#include "dhan/errors.hpp"
#include "dhan/rng.hpp"
#include "dhan/sampling.hpp"

namespace dhan {

int hr_at_n(std::size_t rank, std::size_t n) {
  if (rank < 1 || n < 1) throw std::invalid_argument("hr_at_n: rank and n must be >= 1");
  return rank <= n ? 1 : 0;
}

double ndcg_at_n(std::size_t rank, std::size_t n) {
  if (rank < 1 || n < 1) throw std::invalid_argument("ndcg_at_n: rank and n must be >= 1");
  return rank <= n ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
}

std::size_t rank_of_positive(std::span<const double> scores, std::size_t positive) {
  if (positive >= scores.size()) throw std::out_of_range("rank_of_positive: positive index out of range");
  const double s = scores[positive];
  std::size_t rank = 1;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] > s || (j < positive && scores[j] == s)) ++rank;
  }
  return rank;
}

double MetricsTable::get(const std::string& name) const {
  if (name == "hr@1") return hr1;
  if (name == "hr@5") return hr5;
  if (name == "hr@10") return hr10;
  if (name == "ndcg@1") return ndcg1;
  if (name == "ndcg@5") return ndcg5;
  if (name == "ndcg@10") return ndcg10;
  throw ConfigError("unknown metric '" + name + "'");
}

void MetricsAccumulator::add(std::size_t rank) {
  if (rank < 1) throw std::invalid_argument("rank must be >= 1");
  ranks_.push_back(rank);
}

MetricsTable MetricsAccumulator::table() const {
  MetricsTable m;
  m.instances = ranks_.size();
  if (ranks_.empty()) return m;
  // Sum in insertion order so results do not depend on how work was split.
  for (std::size_t r : ranks_) {
    m.hr1 += hr_at_n(r, 1);
    m.hr5 += hr_at_n(r, 5);
    m.hr10 += hr_at_n(r, 10);
    m.ndcg1 += ndcg_at_n(r, 1);
    m.ndcg5 += ndcg_at_n(r, 5);
    m.ndcg10 += ndcg_at_n(r, 10);
  }
  const double n = static_cast<double>(ranks_.size());
  m.hr1 /= n;
  m.hr5 /= n;
  m.hr10 /= n;
  m.ndcg1 /= n;
  m.ndcg5 /= n;
  m.ndcg10 /= n;
  return m;
}

nlohmann::json metrics_json(const MetricsTable& m) {
  return {{"hr@1", m.hr1},     {"hr@5", m.hr5},     {"hr@10", m.hr10},          {"ndcg@1", m.ndcg1},
          {"ndcg@5", m.ndcg5}, {"ndcg@10", m.ndcg10}, {"instances", m.instances}};
}

MetricsTable metrics_from_json(const nlohmann::json& j) {
  MetricsTable m;
  m.hr1 = j.at("hr@1").get<double>();
  m.hr5 = j.at("hr@5").get<double>();
  m.hr10 = j.at("hr@10").get<double>();
  m.ndcg1 = j.at("ndcg@1").get<double>();
  m.ndcg5 = j.at("ndcg@5").get<double>();
  m.ndcg10 = j.at("ndcg@10").get<double>();
  m.instances = j.at("instances").get<std::size_t>();
  return m;
}

std::string format_metrics(const MetricsTable& m) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "instances %zu\n  HR@1 %.4f  HR@5 %.4f  HR@10 %.4f\n  NDCG@1 %.4f  NDCG@5 %.4f  NDCG@10 %.4f\n",
                m.instances, m.hr1, m.hr5, m.hr10, m.ndcg1, m.ndcg5, m.ndcg10);
  return buf;
}

EvalList make_eval_list(const Instance& instance, const Dataset& dataset, std::size_t n_negatives,
                        std::uint64_t seed) {
  std::vector<std::size_t> excluded = dataset.user_clicks.at(instance.user);
  if (!std::binary_search(excluded.begin(), excluded.end(), instance.candidate)) {
    excluded.insert(std::lower_bound(excluded.begin(), excluded.end(), instance.candidate), instance.candidate);
  }
  const std::size_t m = dataset.news.size();
  if (m < excluded.size() + n_negatives) {
    throw DataError("corpus has " + std::to_string(m) + " news but evaluation needs " + std::to_string(n_negatives) +
                    " negatives outside the user's " + std::to_string(excluded.size()) + " clicked items");
  }
  EvalList list;
  list.candidates = uniform_sample(m, excluded, n_negatives, mix_seed(seed, 0));
  Rng rng(mix_seed(seed, 1));
  list.positive = rng.below(n_negatives + 1);
  list.candidates.insert(list.candidates.begin() + static_cast<std::ptrdiff_t>(list.positive), instance.candidate);
  return list;
}

MetricsTable evaluate(const Scorer& scorer, const std::vector<Instance>& instances, const Dataset& dataset,
                      const EvalOptions& options) {
  MetricsAccumulator acc;
  const std::size_t batch = std::max<std::size_t>(1, options.batch);
  for (std::size_t start = 0; start < instances.size(); start += batch) {
    const std::size_t end = std::min(instances.size(), start + batch);
    std::vector<EvalList> lists;
    std::vector<ScoreGroup> groups;
    for (std::size_t i = start; i < end; ++i) {
      lists.push_back(make_eval_list(instances[i], dataset, options.n_negatives, mix_seed(options.seed, i)));
      groups.push_back({&instances[i], lists.back().candidates});
    }
    const std::vector<double> scores = scorer(groups);
    std::size_t offset = 0;
    for (const EvalList& l : lists) {
      if (offset + l.candidates.size() > scores.size()) throw std::logic_error("scorer returned too few scores");
      acc.add(rank_of_positive(std::span<const double>(scores).subspan(offset, l.candidates.size()), l.positive));
      offset += l.candidates.size();
    }
  }
  return acc.table();
}

MetricsTable evaluate(const DhanModel& model, const std::vector<Instance>& instances, const Dataset& dataset,
                      const EvalOptions& options) {
  Scorer scorer = [&](const std::vector<ScoreGroup>& groups) {
    NoGradScope no_grad;
    Tensor s = model.score(groups, dataset.news);
    return std::vector<double>(s.data().begin(), s.data().end());
  };
  return evaluate(scorer, instances, dataset, options);
}

namespace {

void write_matrix_rows(std::ostream& out, const Tensor& m, const std::vector<std::size_t>& order) {
  char buf[64];
  for (std::size_t r : order) {
    for (std::size_t i = 0; i < order.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.12f", m.at(r, order[i]));
      if (i) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

std::vector<std::size_t> identity_order(std::size_t n) {
  std::vector<std::size_t> o(n);
  for (std::size_t i = 0; i < n; ++i) o[i] = i;
  return o;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << content;
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

std::vector<std::string> export_attention(const DhanModel& model, const Instance& instance, const Dataset& dataset,
                                          const std::string& out_dir) {
  namespace fs = std::filesystem;
  AttentionTrace trace;
  ForwardOptions opts;
  opts.trace = &trace;
  {
    NoGradScope no_grad;
    model.forward(instance, dataset.news, opts);
  }
  fs::create_directories(out_dir);
  std::vector<std::string> written;

  if (!trace.beta.empty()) {
    std::ostringstream out;
    const std::size_t k = model.config().max_sentences;
    out << "u";
    for (std::size_t s = 1; s <= k; ++s) out << ",s" << s;
    out << ",candidate\n";
    for (const Tensor& b : trace.beta) write_matrix_rows(out, b, identity_order(k + 2));
    const fs::path p = fs::path(out_dir) / "sentence.csv";
    write_file(p, out.str());
    written.push_back(p.string());
  }
  if (!trace.gamma.empty()) {
    // Exported in the order time, person, organization, location, keywords.
    const std::vector<std::size_t> order = {kTime, kPerson, kOrganization, kLocation, kKeywords};
    std::ostringstream out;
    for (std::size_t i = 0; i < order.size(); ++i) out << (i ? "," : "") << kElementNames[order[i]];
    out << '\n';
    for (const Tensor& g : trace.gamma) write_matrix_rows(out, g, order);
    const fs::path p = fs::path(out_dir) / "element.csv";
    write_file(p, out.str());
    written.push_back(p.string());
  }
  const std::size_t l = instance.history.size();
  for (const auto& [name, m] : {std::pair<const char*, const Tensor*>{"sequence.csv", &trace.sequence},
                                std::pair<const char*, const Tensor*>{"time_sequence.csv", &trace.time_sequence}}) {
    std::ostringstream out;
    for (std::size_t i = 0; i < l; ++i) out << (i ? "," : "") << "h" << i + 1;
    out << '\n';
    write_matrix_rows(out, *m, identity_order(l));
    const fs::path p = fs::path(out_dir) / name;
    write_file(p, out.str());
    written.push_back(p.string());
  }
  return written;
}

}  // namespace dhan
