#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dhan/data_pipeline.hpp"
#include "dhan/embeddings.hpp"
#include "dhan/param_store.hpp"
#include "dhan/ranker.hpp"
#include "dhan/rng.hpp"
#include "dhan/sampling.hpp"
#include "dhan/time_sequence.hpp"

namespace dhan {

/// Which attention hierarchies are active: sentence (S), element (E),
/// sequence (N).
struct LayerSet {
  bool sentence = true;
  bool element = true;
  bool sequence = true;

  bool operator==(const LayerSet&) const = default;
};

LayerSet parse_layers(std::string_view text);  // e.g. "S+E+N", "N", "S+N"
std::string layers_name(const LayerSet& layers);

struct ModelConfig {
  std::size_t d = 64;
  std::size_t d_prime = 256;
  std::size_t history_len = 10;   // L
  std::size_t max_sentences = 20; // K
  std::size_t heads = 1;
  TimeMode time_mode = TimeMode::kBoth;
  LayerSet layers;
  double dropout = 0.2;
  double ln_eps = 1e-6;
  std::size_t num_users = 1;
  std::size_t num_news = 1;
  std::size_t vocab_size = 1;
  int min_year = 1970;
  int max_year = 2037;
  bool dns_enabled = true;
  std::size_t dns_pool_size = 128;
};

struct AttentionTrace {
  std::vector<Tensor> beta;   // per history item, [(K+2), (K+2)]; empty without S
  std::vector<Tensor> gamma;  // per history item, [5, 5]; empty without E
  Tensor sequence;            // [L, L], time embeddings zeroed
  Tensor time_sequence;       // [L, L]
};

struct ForwardOptions {
  bool training = false;  // enables dropout; needs rng
  Rng* rng = nullptr;
  AttentionTrace* trace = nullptr;
};

/// A history shared by several candidates, all scored at the instance's
/// candidate timestamp.
struct ScoreGroup {
  const Instance* instance = nullptr;
  std::vector<std::size_t> candidates;
};

class DhanModel {
 public:
  DhanModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Per-instance forward assembled from the module operations; scores
  // instance.candidate. Returns a logit of shape [1].
  Tensor forward(const Instance& instance, const std::vector<NewsArticle>& news,
                 const ForwardOptions& options = {}) const;

  // Same function as forward() for many candidates at once: one logit per
  // candidate, in group order. Per-history work is shared across a group.
  Tensor score(const std::vector<ScoreGroup>& groups, const std::vector<NewsArticle>& news,
               const ForwardOptions& options = {}) const;

  // Candidate representations x* = [content, element mean, id]: [n, 3d].
  Tensor candidate_reps(const std::vector<std::size_t>& ids, const std::vector<NewsArticle>& news) const;

  DnsParams dns_params() const;
  // [3d, d] selector that maps a candidate representation to its id embedding.
  Tensor dns_projection() const;

 private:
  void add_block(const std::string& prefix, Rng& rng);
  TransformerBlockParams block(const std::string& prefix) const;
  AbsoluteTimeTables time_tables() const;
  Tensor relative_rows(const std::vector<std::int64_t>& ts) const;  // [L, d]
  const Tensor& p(const char* name) const { return params_.get(name); }

  ModelConfig config_;
  ParamStore params_;
};

// 3d² for S plus 6d² for E.
std::size_t hierarchy_parameter_count(const LayerSet& layers, std::size_t d);

}  // namespace dhan
