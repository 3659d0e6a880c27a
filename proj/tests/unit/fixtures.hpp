#pragma once

#include <cstdint>

#include "dhan/data_pipeline.hpp"
#include "dhan/model.hpp"

namespace dhan::testing {

// A handful of synthetic users, small enough for finite differences.
inline Dataset tiny_dataset(std::size_t history_len = 3, std::uint64_t seed = 3) {
  SyntheticConfig sc;
  sc.users = 6;
  sc.news = 40;
  sc.interactions_per_user = 16;
  sc.vocab = 120;
  sc.topics = 4;
  sc.seed = seed;
  SyntheticCorpus corpus = gen_synthetic(sc);
  return build_dataset(corpus.interactions, corpus.news, history_len, 15);
}

inline ModelConfig config_for(const Dataset& ds, std::size_t d, std::size_t k) {
  ModelConfig c;
  c.d = d;
  c.d_prime = 2 * d;
  c.history_len = ds.history_len;
  c.max_sentences = k;
  c.num_users = ds.user_ids.size();
  c.num_news = ds.news.size();
  c.vocab_size = ds.vocab_size;
  c.dns_pool_size = 8;
  return c;
}

}  // namespace dhan::testing
