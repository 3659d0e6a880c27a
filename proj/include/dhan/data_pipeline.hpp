#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dhan/element_attention.hpp"
#include "dhan/embeddings.hpp"

namespace dhan {

struct Interaction {
  std::string user_id;
  std::string news_id;
  std::int64_t ts = 0;

  bool operator==(const Interaction&) const = default;
};

struct NewsArticle {
  std::string news_id;
  std::vector<TokenList> sentences;
  std::array<TokenList, kNumElements> elements;  // person, organization, time, location, keywords

  bool operator==(const NewsArticle&) const = default;
};

using NewsMap = std::map<std::string, NewsArticle>;

struct Click {
  std::string news_id;
  std::int64_t ts = 0;

  bool operator==(const Click&) const = default;
};

struct InstanceWindow {
  std::string user_id;
  std::vector<Click> history;  // click order
  Click candidate;
  int label = 1;

  bool operator==(const InstanceWindow&) const = default;
};

struct DatasetSplit {
  std::vector<InstanceWindow> train;
  std::vector<InstanceWindow> test;
};

// user_id<TAB>news_id<TAB>epoch_seconds; '#' lines and blank lines are skipped.
// Result is ordered by (user_id, ts, input order).
std::vector<Interaction> parse_interactions(const std::string& path);
std::vector<Interaction> parse_interactions(std::istream& in);

// One JSON event per line with userId, id and time; events without a user
// or news id are skipped.
std::vector<Interaction> parse_adressa(const std::string& path);
std::vector<Interaction> parse_adressa(std::istream& in);

NewsMap parse_news(const std::string& path);
NewsMap parse_news(std::istream& in);

void write_interactions(std::ostream& out, const std::vector<Interaction>& interactions);
void write_news(std::ostream& out, const NewsMap& news);

std::vector<Interaction> filter_min_interactions(const std::vector<Interaction>& interactions,
                                                 std::size_t min_count = 15);

// T - L windows with stride 1 over one user's time-ordered clicks.
std::vector<InstanceWindow> build_windows(const std::vector<Interaction>& user_sequence, std::size_t history_len);

// Groups interactions by user (sorted ids) and windows each sequence.
std::map<std::string, std::vector<InstanceWindow>> windows_by_user(const std::vector<Interaction>& interactions,
                                                                   std::size_t history_len);

DatasetSplit split_train_test(const std::map<std::string, std::vector<InstanceWindow>>& windows);

/// Whitespace tokenizer assigning ids in first-seen order.
class WhitespaceTokenizer {
 public:
  TokenList encode(std::string_view text);
  std::size_t vocab_size() const { return vocab_.size(); }
  const std::map<std::string, std::int32_t, std::less<>>& vocab() const { return vocab_; }

 private:
  std::map<std::string, std::int32_t, std::less<>> vocab_;
};

struct SyntheticConfig {
  std::size_t users = 50;
  std::size_t news = 200;
  std::size_t interactions_per_user = 20;
  std::size_t vocab = 1000;
  std::size_t topics = 8;
  double temporal_signal = 0.9;  // α
  std::uint64_t seed = 1;
};

struct SyntheticUser {
  std::string user_id;
  std::size_t day_topic = 0;    // clicks with hour in [6, 18)
  std::size_t night_topic = 0;
};

struct SyntheticCorpus {
  std::vector<Interaction> interactions;
  NewsMap news;
  std::vector<SyntheticUser> users;
  std::map<std::string, std::size_t> news_topic;
  SyntheticConfig config;
};

SyntheticCorpus gen_synthetic(const SyntheticConfig& config);
// interactions.tsv, news.jsonl, ground_truth.json
void write_synthetic(const SyntheticCorpus& corpus, const std::string& out_dir);

// Index-resolved instance used by the model.
struct Instance {
  std::size_t user = 0;
  std::vector<std::size_t> history;
  std::vector<std::int64_t> history_ts;
  std::size_t candidate = 0;
  std::int64_t candidate_ts = 0;
};

struct Dataset {
  std::size_t history_len = 0;
  std::vector<std::string> user_ids;
  std::vector<std::string> news_ids;
  std::map<std::string, std::size_t> user_index;
  std::map<std::string, std::size_t> news_index;
  std::vector<NewsArticle> news;
  std::size_t vocab_size = 1;
  std::vector<std::vector<std::size_t>> user_clicks;  // sorted news indices per user
  std::vector<Instance> train;
  std::vector<Instance> test;
};

// Filters, windows, splits and resolves ids. Throws DataError when an
// interaction references a news id that is not in `news`.
Dataset build_dataset(const std::vector<Interaction>& interactions, const NewsMap& news, std::size_t history_len,
                      std::size_t min_interactions = 15);

Instance resolve_instance(const InstanceWindow& window, const Dataset& dataset);

}  // namespace dhan
