#include "dhan/data_pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "dhan/errors.hpp"
#include "dhan/rng.hpp"
#include "json.hpp"

namespace dhan {

namespace {

using nlohmann::json;

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

std::string at_line(std::size_t line) { return "line " + std::to_string(line) + ": "; }

bool skip_line(std::string_view line) {
  const auto first = line.find_first_not_of(" \t\r");
  return first == std::string_view::npos || line[first] == '#';
}

std::int64_t parse_timestamp(std::string_view text, std::size_t line) {
  while (!text.empty() && (text.back() == '\r' || text.back() == ' ')) text.remove_suffix(1);
  std::int64_t v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size() || text.empty()) {
    throw DataError(at_line(line) + "timestamp '" + std::string(text) + "' is not an integer");
  }
  if (v < 0) throw DataError(at_line(line) + "negative timestamp");
  return v;
}

void sort_interactions(std::vector<Interaction>& v) {
  std::stable_sort(v.begin(), v.end(), [](const Interaction& a, const Interaction& b) {
    if (a.user_id != b.user_id) return a.user_id < b.user_id;
    return a.ts < b.ts;
  });
}

TokenList parse_tokens(const json& j, std::size_t line, const char* what) {
  if (!j.is_array()) throw DataError(at_line(line) + what + " must be an array of token ids");
  TokenList out;
  out.reserve(j.size());
  for (const json& t : j) {
    if (!t.is_number_integer() || t.get<std::int64_t>() < 0 || t.get<std::int64_t>() > INT32_MAX) {
      throw DataError(at_line(line) + what + " holds an invalid token id");
    }
    out.push_back(t.get<std::int32_t>());
  }
  return out;
}

json parse_json_line(const std::string& text, std::size_t line) {
  try {
    json j = json::parse(text);
    if (!j.is_object()) throw DataError(at_line(line) + "expected a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw DataError(at_line(line) + "malformed JSON (" + e.what() + ")");
  }
}

}  // namespace

std::vector<Interaction> parse_interactions(std::istream& in) {
  std::vector<Interaction> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (skip_line(text)) continue;
    const auto t1 = text.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : text.find('\t', t1 + 1);
    if (t2 == std::string::npos || text.find('\t', t2 + 1) != std::string::npos) {
      throw DataError(at_line(line) + "expected user_id<TAB>news_id<TAB>epoch_seconds");
    }
    Interaction it;
    it.user_id = text.substr(0, t1);
    it.news_id = text.substr(t1 + 1, t2 - t1 - 1);
    if (it.user_id.empty() || it.news_id.empty()) throw DataError(at_line(line) + "empty user or news id");
    it.ts = parse_timestamp(std::string_view(text).substr(t2 + 1), line);
    out.push_back(std::move(it));
  }
  sort_interactions(out);
  return out;
}

std::vector<Interaction> parse_interactions(const std::string& path) {
  std::ifstream in = open_input(path);
  return parse_interactions(in);
}

std::vector<Interaction> parse_adressa(std::istream& in) {
  std::vector<Interaction> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (skip_line(text)) continue;
    const json j = parse_json_line(text, line);
    auto user = j.find("userId");
    auto id = j.find("id");
    if (user == j.end() || id == j.end() || !user->is_string() || !id->is_string()) continue;
    auto time = j.find("time");
    if (time == j.end() || !time->is_number_integer()) throw DataError(at_line(line) + "missing integer 'time'");
    if (time->get<std::int64_t>() < 0) throw DataError(at_line(line) + "negative timestamp");
    out.push_back({user->get<std::string>(), id->get<std::string>(), time->get<std::int64_t>()});
  }
  sort_interactions(out);
  return out;
}

std::vector<Interaction> parse_adressa(const std::string& path) {
  std::ifstream in = open_input(path);
  return parse_adressa(in);
}

NewsMap parse_news(std::istream& in) {
  NewsMap out;
  std::map<std::string, std::size_t> first_seen;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (skip_line(text)) continue;
    const json j = parse_json_line(text, line);
    auto id = j.find("news_id");
    if (id == j.end() || !id->is_string()) throw DataError(at_line(line) + "missing string 'news_id'");
    NewsArticle a;
    a.news_id = id->get<std::string>();
    if (auto it = first_seen.find(a.news_id); it != first_seen.end()) {
      throw DataError(at_line(line) + "duplicate news_id '" + a.news_id + "' (first on line " +
                      std::to_string(it->second) + ")");
    }
    if (auto s = j.find("sentences"); s != j.end()) {
      if (!s->is_array()) throw DataError(at_line(line) + "'sentences' must be an array");
      for (const json& sent : *s) a.sentences.push_back(parse_tokens(sent, line, "sentence"));
    }
    if (auto e = j.find("elements"); e != j.end()) {
      if (!e->is_object()) throw DataError(at_line(line) + "'elements' must be an object");
      for (std::size_t k = 0; k < kNumElements; ++k) {
        auto slot = e->find(std::string(kElementNames[k]));
        if (slot != e->end()) a.elements[k] = parse_tokens(*slot, line, "element");
      }
    }
    first_seen[a.news_id] = line;
    out.emplace(a.news_id, std::move(a));
  }
  return out;
}

NewsMap parse_news(const std::string& path) {
  std::ifstream in = open_input(path);
  return parse_news(in);
}

void write_interactions(std::ostream& out, const std::vector<Interaction>& interactions) {
  for (const Interaction& it : interactions) out << it.user_id << '\t' << it.news_id << '\t' << it.ts << '\n';
}

void write_news(std::ostream& out, const NewsMap& news) {
  for (const auto& [id, a] : news) {
    json elements = json::object();
    for (std::size_t k = 0; k < kNumElements; ++k) elements[std::string(kElementNames[k])] = a.elements[k];
    json j = {{"news_id", id}, {"sentences", a.sentences}, {"elements", elements}};
    out << j.dump() << '\n';
  }
}

std::vector<Interaction> filter_min_interactions(const std::vector<Interaction>& interactions,
                                                 std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const Interaction& it : interactions) ++counts[it.user_id];
  std::vector<Interaction> out;
  for (const Interaction& it : interactions) {
    if (counts[it.user_id] >= min_count) out.push_back(it);
  }
  return out;
}

std::vector<InstanceWindow> build_windows(const std::vector<Interaction>& user_sequence, std::size_t history_len) {
  std::vector<InstanceWindow> out;
  if (history_len == 0 || user_sequence.size() < history_len + 1) return out;
  for (std::size_t start = 0; start + history_len < user_sequence.size(); ++start) {
    InstanceWindow w;
    w.user_id = user_sequence[start].user_id;
    for (std::size_t i = 0; i < history_len; ++i) {
      const Interaction& it = user_sequence[start + i];
      w.history.push_back({it.news_id, it.ts});
    }
    const Interaction& c = user_sequence[start + history_len];
    w.candidate = {c.news_id, c.ts};
    w.label = 1;
    out.push_back(std::move(w));
  }
  return out;
}

std::map<std::string, std::vector<InstanceWindow>> windows_by_user(const std::vector<Interaction>& interactions,
                                                                   std::size_t history_len) {
  std::map<std::string, std::vector<Interaction>> seqs;
  for (const Interaction& it : interactions) seqs[it.user_id].push_back(it);
  std::map<std::string, std::vector<InstanceWindow>> out;
  for (auto& [user, seq] : seqs) {
    std::stable_sort(seq.begin(), seq.end(), [](const Interaction& a, const Interaction& b) { return a.ts < b.ts; });
    auto windows = build_windows(seq, history_len);
    if (!windows.empty()) out.emplace(user, std::move(windows));
  }
  return out;
}

DatasetSplit split_train_test(const std::map<std::string, std::vector<InstanceWindow>>& windows) {
  DatasetSplit split;
  for (const auto& [user, ws] : windows) {
    if (ws.empty()) continue;
    split.train.insert(split.train.end(), ws.begin(), ws.end() - 1);
    split.test.push_back(ws.back());
  }
  return split;
}

TokenList WhitespaceTokenizer::encode(std::string_view text) {
  TokenList out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto start = text.find_first_not_of(" \t\r\n", pos);
    if (start == std::string_view::npos) break;
    auto end = text.find_first_of(" \t\r\n", start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view word = text.substr(start, end - start);
    auto it = vocab_.find(word);
    if (it == vocab_.end()) {
      it = vocab_.emplace(std::string(word), static_cast<std::int32_t>(vocab_.size())).first;
    }
    out.push_back(it->second);
    pos = end;
  }
  return out;
}

namespace {

constexpr std::int64_t kSyntheticStart = 1483228800;  // 2017-01-01T00:00:00Z
constexpr std::int64_t kWeek = 7 * 24 * 3600;

std::string padded(char prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%0*zu", prefix, width, i);
  return buf;
}

int digits(std::size_t n) { return n < 10 ? 1 : 1 + digits(n / 10); }

int utc_hour(std::int64_t ts) {
  const std::time_t t = static_cast<std::time_t>(ts);
  std::tm tm{};
  gmtime_r(&t, &tm);
  return tm.tm_hour;
}

}  // namespace

SyntheticCorpus gen_synthetic(const SyntheticConfig& c) {
  if (c.users == 0 || c.news == 0 || c.vocab == 0 || c.topics == 0) {
    throw ConfigError("synthetic corpus: users, news, vocab and topics must be positive");
  }
  if (c.interactions_per_user < 16) throw ConfigError("synthetic corpus: interactions per user must be >= 16");
  if (c.interactions_per_user > c.news) throw ConfigError("synthetic corpus: more clicks per user than news items");
  if (!(c.temporal_signal >= 0.0 && c.temporal_signal <= 1.0)) {
    throw ConfigError("synthetic corpus: temporal signal must lie in [0, 1]");
  }
  const std::size_t general = std::max<std::size_t>(1, c.vocab / 5);
  if (c.vocab <= general || (c.vocab - general) / c.topics < 3) {
    throw ConfigError("synthetic corpus: vocabulary too small for the number of topics");
  }
  const std::size_t per_topic = (c.vocab - general) / c.topics;

  SyntheticCorpus corpus;
  corpus.config = c;
  Rng rng(mix_seed(c.seed, 0));
  WhitespaceTokenizer tokenizer;

  auto topic_word = [&](std::size_t topic) {
    return "t" + std::to_string(topic) + "_" + std::to_string(rng.below(per_topic));
  };
  auto sentence_word = [&](std::size_t topic) {
    return rng.bernoulli(0.8) ? topic_word(topic) : "g" + std::to_string(rng.below(general));
  };

  const int news_width = digits(c.news - 1);
  std::vector<std::string> news_ids(c.news);
  std::vector<std::vector<std::size_t>> by_topic(c.topics);
  for (std::size_t j = 0; j < c.news; ++j) {
    const std::size_t topic = j % c.topics;
    NewsArticle a;
    a.news_id = padded('n', j, news_width);
    const std::size_t n_sent = 2 + rng.below(4);
    for (std::size_t s = 0; s < n_sent; ++s) {
      const std::size_t n_words = 4 + rng.below(7);
      std::string text;
      for (std::size_t w = 0; w < n_words; ++w) text += sentence_word(topic) + " ";
      a.sentences.push_back(tokenizer.encode(text));
    }
    for (std::size_t k = 0; k < kNumElements; ++k) {
      if (rng.bernoulli(0.1)) continue;
      const std::size_t n_words = 1 + rng.below(3);
      std::string text;
      for (std::size_t w = 0; w < n_words; ++w) text += topic_word(topic) + " ";
      a.elements[k] = tokenizer.encode(text);
    }
    news_ids[j] = a.news_id;
    by_topic[topic].push_back(j);
    corpus.news_topic[a.news_id] = topic;
    corpus.news.emplace(a.news_id, std::move(a));
  }

  const double log_lo = std::log(60.0);
  const double log_hi = std::log(static_cast<double>(kWeek));
  const int user_width = digits(c.users - 1);
  for (std::size_t u = 0; u < c.users; ++u) {
    SyntheticUser user;
    user.user_id = padded('u', u, user_width);
    user.day_topic = rng.below(c.topics);
    user.night_topic = user.day_topic;
    if (c.topics > 1) user.night_topic = (user.day_topic + 1 + rng.below(c.topics - 1)) % c.topics;

    std::vector<bool> clicked(c.news, false);
    auto pick_from = [&](const std::vector<std::size_t>& pool) -> std::ptrdiff_t {
      std::vector<std::size_t> open;
      for (std::size_t j : pool) {
        if (!clicked[j]) open.push_back(j);
      }
      if (open.empty()) return -1;
      return static_cast<std::ptrdiff_t>(open[rng.below(open.size())]);
    };
    std::vector<std::size_t> everything(c.news);
    for (std::size_t j = 0; j < c.news; ++j) everything[j] = j;

    std::int64_t ts = kSyntheticStart + static_cast<std::int64_t>(rng.below(kWeek));
    for (std::size_t t = 0; t < c.interactions_per_user; ++t) {
      if (t > 0) ts += static_cast<std::int64_t>(std::llround(std::exp(rng.uniform(log_lo, log_hi))));
      const int hour = utc_hour(ts);
      const std::size_t topic = (hour >= 6 && hour < 18) ? user.day_topic : user.night_topic;
      std::ptrdiff_t j = -1;
      if (rng.bernoulli(c.temporal_signal)) j = pick_from(by_topic[topic]);
      if (j < 0) j = pick_from(everything);
      clicked[static_cast<std::size_t>(j)] = true;
      corpus.interactions.push_back({user.user_id, news_ids[static_cast<std::size_t>(j)], ts});
    }
    corpus.users.push_back(user);
  }
  return corpus;
}

void write_synthetic(const SyntheticCorpus& corpus, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  auto open = [&](const char* name) {
    std::ofstream f(fs::path(out_dir) / name, std::ios::binary);
    if (!f) throw DataError("cannot write " + (fs::path(out_dir) / name).string());
    return f;
  };
  {
    std::ofstream f = open("interactions.tsv");
    f << "# user_id\tnews_id\tepoch_seconds\n";
    write_interactions(f, corpus.interactions);
  }
  {
    std::ofstream f = open("news.jsonl");
    write_news(f, corpus.news);
  }
  json users = json::array();
  for (const SyntheticUser& u : corpus.users) {
    users.push_back({{"user_id", u.user_id}, {"day_topic", u.day_topic}, {"night_topic", u.night_topic}});
  }
  const SyntheticConfig& c = corpus.config;
  json truth = {{"temporal_signal", c.temporal_signal},
                {"seed", c.seed},
                {"users_count", c.users},
                {"news_count", c.news},
                {"interactions_per_user", c.interactions_per_user},
                {"vocab", c.vocab},
                {"topics", c.topics},
                {"day_hours_utc", {6, 18}},
                {"users", users},
                {"news_topic", corpus.news_topic}};
  std::ofstream f = open("ground_truth.json");
  f << truth.dump(2) << '\n';
}

Dataset build_dataset(const std::vector<Interaction>& interactions, const NewsMap& news, std::size_t history_len,
                      std::size_t min_interactions) {
  if (history_len == 0) throw ConfigError("history length L must be positive");
  Dataset ds;
  ds.history_len = history_len;
  for (const auto& [id, article] : news) {
    ds.news_index[id] = ds.news_ids.size();
    ds.news_ids.push_back(id);
    ds.news.push_back(article);
    for (const TokenList& s : article.sentences) {
      for (std::int32_t t : s) ds.vocab_size = std::max(ds.vocab_size, static_cast<std::size_t>(t) + 1);
    }
    for (const TokenList& e : article.elements) {
      for (std::int32_t t : e) ds.vocab_size = std::max(ds.vocab_size, static_cast<std::size_t>(t) + 1);
    }
  }
  for (const Interaction& it : interactions) {
    if (!ds.news_index.count(it.news_id)) {
      throw DataError("interaction of user '" + it.user_id + "' references unknown news id '" + it.news_id + "'");
    }
  }

  const auto kept = filter_min_interactions(interactions, min_interactions);
  const auto windows = windows_by_user(kept, history_len);
  std::map<std::string, std::set<std::size_t>> clicks;
  for (const Interaction& it : kept) clicks[it.user_id].insert(ds.news_index.at(it.news_id));
  for (const auto& [user, ws] : windows) {
    ds.user_index[user] = ds.user_ids.size();
    ds.user_ids.push_back(user);
    ds.user_clicks.emplace_back(clicks[user].begin(), clicks[user].end());
  }
  const DatasetSplit split = split_train_test(windows);
  for (const InstanceWindow& w : split.train) ds.train.push_back(resolve_instance(w, ds));
  for (const InstanceWindow& w : split.test) ds.test.push_back(resolve_instance(w, ds));
  return ds;
}

Instance resolve_instance(const InstanceWindow& window, const Dataset& ds) {
  auto user = ds.user_index.find(window.user_id);
  if (user == ds.user_index.end()) throw DataError("unknown user id '" + window.user_id + "'");
  auto news = [&](const std::string& id) {
    auto it = ds.news_index.find(id);
    if (it == ds.news_index.end()) throw DataError("unknown news id '" + id + "'");
    return it->second;
  };
  Instance inst;
  inst.user = user->second;
  for (const Click& c : window.history) {
    inst.history.push_back(news(c.news_id));
    inst.history_ts.push_back(c.ts);
  }
  inst.candidate = news(window.candidate.news_id);
  inst.candidate_ts = window.candidate.ts;
  return inst;
}

}  // namespace dhan
