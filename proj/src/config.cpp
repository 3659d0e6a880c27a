#include "dhan/config.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dhan/errors.hpp"

namespace dhan {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

int parse_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a finite number, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string real_text(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "d",           "d_prime",        "L",          "K",
      "lr",          "batch_size",     "weight_decay", "dropout",
      "epochs",      "seed",           "time_mode",  "layers",
      "heads",       "dns.enabled",    "dns.pool_size", "dns.k",
      "data.interactions", "data.news", "data.format", "data.min_interactions",
      "eval.negatives", "eval.seed",   "eval.train", "best_by",
      "time.min_year", "time.max_year", "micro_batch", "out_dir"};
  return keys;
}

void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  const std::string& v = value;
  if (key == "d") c.d = parse_uint(key, v);
  else if (key == "d_prime") c.d_prime = parse_uint(key, v);
  else if (key == "L") c.L = parse_uint(key, v);
  else if (key == "K") c.K = parse_uint(key, v);
  else if (key == "lr") c.lr = parse_real(key, v);
  else if (key == "batch_size") c.batch_size = parse_uint(key, v);
  else if (key == "weight_decay") c.weight_decay = parse_real(key, v);
  else if (key == "dropout") c.dropout = parse_real(key, v);
  else if (key == "epochs") c.epochs = parse_uint(key, v);
  else if (key == "seed") c.seed = parse_uint(key, v);
  else if (key == "time_mode") c.time_mode = parse_time_mode(v);
  else if (key == "layers") c.layers = parse_layers(v);
  else if (key == "heads") c.heads = parse_uint(key, v);
  else if (key == "dns.enabled") c.dns_enabled = parse_bool(key, v);
  else if (key == "dns.pool_size") c.dns_pool_size = parse_uint(key, v);
  else if (key == "dns.k") c.dns_k = parse_uint(key, v);
  else if (key == "data.interactions") c.interactions_path = v;
  else if (key == "data.news") c.news_path = v;
  else if (key == "data.format") {
    if (v != "tsv" && v != "adressa") throw ConfigError("data.format must be tsv or adressa, got '" + v + "'");
    c.data_format = v;
  }
  else if (key == "data.min_interactions") c.min_interactions = parse_uint(key, v);
  else if (key == "eval.negatives") c.eval_negatives = parse_uint(key, v);
  else if (key == "eval.seed") c.eval_seed = parse_uint(key, v);
  else if (key == "eval.train") c.eval_train = parse_bool(key, v);
  else if (key == "best_by") c.best_by = v;
  else if (key == "time.min_year") c.min_year = parse_int(key, v);
  else if (key == "time.max_year") c.max_year = parse_int(key, v);
  else if (key == "micro_batch") c.micro_batch = parse_uint(key, v);
  else if (key == "out_dir") c.out_dir = v;
  else throw ConfigError("unknown config key '" + key + "'");
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set_config_value(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      set_config_value(c, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string to_text(const RunConfig& c) {
  std::ostringstream out;
  out << "d = " << c.d << '\n'
      << "d_prime = " << c.d_prime << '\n'
      << "L = " << c.L << '\n'
      << "K = " << c.K << '\n'
      << "lr = " << real_text(c.lr) << '\n'
      << "batch_size = " << c.batch_size << '\n'
      << "weight_decay = " << real_text(c.weight_decay) << '\n'
      << "dropout = " << real_text(c.dropout) << '\n'
      << "epochs = " << c.epochs << '\n'
      << "seed = " << c.seed << '\n'
      << "time_mode = " << time_mode_name(c.time_mode) << '\n'
      << "layers = " << layers_name(c.layers) << '\n'
      << "heads = " << c.heads << '\n'
      << "dns.enabled = " << (c.dns_enabled ? "true" : "false") << '\n'
      << "dns.pool_size = " << c.dns_pool_size << '\n'
      << "dns.k = " << c.dns_k << '\n'
      << "data.interactions = " << c.interactions_path << '\n'
      << "data.news = " << c.news_path << '\n'
      << "data.format = " << c.data_format << '\n'
      << "data.min_interactions = " << c.min_interactions << '\n'
      << "eval.negatives = " << c.eval_negatives << '\n'
      << "eval.seed = " << c.eval_seed << '\n'
      << "eval.train = " << (c.eval_train ? "true" : "false") << '\n'
      << "best_by = " << c.best_by << '\n'
      << "time.min_year = " << c.min_year << '\n'
      << "time.max_year = " << c.max_year << '\n'
      << "micro_batch = " << c.micro_batch << '\n'
      << "out_dir = " << c.out_dir << '\n';
  return out.str();
}

void validate(const RunConfig& c) {
  if (c.d == 0 || c.d_prime == 0 || c.L == 0 || c.K == 0) throw ConfigError("d, d_prime, L and K must be positive");
  if (c.heads != 1 && c.heads != 2 && c.heads != 4 && c.heads != 8) throw ConfigError("heads must be 1, 2, 4 or 8");
  if (c.d % c.heads != 0) throw ConfigError("heads must divide d");
  if (!(c.lr > 0)) throw ConfigError("lr must be positive");
  if (c.weight_decay < 0) throw ConfigError("weight_decay must be non-negative");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (c.batch_size == 0 || c.micro_batch == 0) throw ConfigError("batch_size and micro_batch must be positive");
  if (c.dns_k == 0) throw ConfigError("dns.k must be positive");
  if (c.dns_enabled && c.dns_pool_size < c.dns_k) throw ConfigError("dns.pool_size must be at least dns.k");
  if (c.min_year > c.max_year) throw ConfigError("time.min_year exceeds time.max_year");
  if (c.layers == LayerSet{false, false, false}) throw ConfigError("layers must name at least one of S, E, N");
  static const std::vector<std::string> metrics = {"hr@1", "hr@5", "hr@10", "ndcg@1", "ndcg@5", "ndcg@10"};
  if (std::find(metrics.begin(), metrics.end(), c.best_by) == metrics.end()) {
    throw ConfigError("best_by must be one of hr@{1,5,10}, ndcg@{1,5,10}; got '" + c.best_by + "'");
  }
}

ModelConfig model_config(const RunConfig& c, const Dataset& dataset) {
  ModelConfig m;
  m.d = c.d;
  m.d_prime = c.d_prime;
  m.history_len = c.L;
  m.max_sentences = c.K;
  m.heads = c.heads;
  m.time_mode = c.time_mode;
  m.layers = c.layers;
  m.dropout = c.dropout;
  m.num_users = std::max<std::size_t>(1, dataset.user_ids.size());
  m.num_news = std::max<std::size_t>(1, dataset.news.size());
  m.vocab_size = dataset.vocab_size;
  m.min_year = c.min_year;
  m.max_year = c.max_year;
  m.dns_enabled = c.dns_enabled;
  m.dns_pool_size = c.dns_pool_size;
  return m;
}

Dataset load_dataset(const RunConfig& c) {
  if (c.interactions_path.empty() || c.news_path.empty()) {
    throw ConfigError("data.interactions and data.news must be set");
  }
  const std::vector<Interaction> interactions =
      c.data_format == "adressa" ? parse_adressa(c.interactions_path) : parse_interactions(c.interactions_path);
  const NewsMap news = parse_news(c.news_path);
  return build_dataset(interactions, news, c.L, c.min_interactions);
}

}  // namespace dhan
