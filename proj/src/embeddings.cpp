#include "dhan/embeddings.hpp"

#include <algorithm>
#include <bit>
#include <ctime>
#include <stdexcept>

#include "dhan/errors.hpp"

namespace dhan {

namespace {

Tensor single_bag(const Tensor& table, const Bags& bags) {
  return reshape(embedding_bag(table, bags), {table.dim(1)});
}

}  // namespace

Tensor encode_sentence(const Tensor& word_table, std::span<const std::int32_t> word_ids) {
  Bags bags;
  bags.add_mean(word_ids);
  return single_bag(word_table, bags);
}

Tensor encode_element(const Tensor& word_table, std::span<const std::int32_t> word_ids) {
  return encode_sentence(word_table, word_ids);
}

void add_content_bag(Bags& bags, const std::vector<TokenList>& sentences, std::size_t max_sentences) {
  const std::size_t n = std::min(sentences.size(), max_sentences);
  for (std::size_t s = 0; s < n; ++s) {
    if (sentences[s].empty()) continue;
    bags.add_weighted(sentences[s], 1.0 / (static_cast<double>(n) * static_cast<double>(sentences[s].size())));
  }
  bags.close_bag();
}

Tensor encode_candidate_content(const Tensor& word_table, const std::vector<TokenList>& sentences) {
  Bags bags;
  add_content_bag(bags, sentences, sentences.size());
  return single_bag(word_table, bags);
}

TimeFeatures time_features(std::int64_t epoch_seconds) {
  if (epoch_seconds < 0) throw std::invalid_argument("timestamps must be non-negative");
  const std::time_t t = static_cast<std::time_t>(epoch_seconds);
  std::tm tm{};
  if (gmtime_r(&t, &tm) == nullptr) throw std::invalid_argument("timestamp out of calendar range");
  TimeFeatures f;
  f.year = tm.tm_year + 1900;
  f.month = tm.tm_mon + 1;
  f.week_of_year = tm.tm_yday / 7 + 1;
  f.day_of_month = tm.tm_mday;
  f.hour = tm.tm_hour;
  f.minute = tm.tm_min;
  return f;
}

std::size_t relative_bucket(std::int64_t dt_seconds, std::size_t buckets) {
  if (dt_seconds < 0) {
    throw std::invalid_argument("negative time interval; click timestamps must be non-decreasing");
  }
  // floor(log2(dt + 1)) == bit_width(dt + 1) - 1, exact in integers.
  const auto v = static_cast<std::uint64_t>(dt_seconds) + 1;
  const std::size_t b = static_cast<std::size_t>(std::bit_width(v)) - 1;
  return std::min(b, buckets - 1);
}

Tensor AbsoluteTimeTables::embed(std::span<const std::int64_t> timestamps) const {
  IndexList yi, mi, wi, di, hi, ni;
  for (std::int64_t ts : timestamps) {
    const TimeFeatures f = time_features(ts);
    const int y = std::clamp(f.year, min_year, max_year);
    yi.push_back(static_cast<std::size_t>(y - min_year));
    mi.push_back(static_cast<std::size_t>(f.month - 1));
    wi.push_back(static_cast<std::size_t>(f.week_of_year - 1));
    di.push_back(static_cast<std::size_t>(f.day_of_month - 1));
    hi.push_back(static_cast<std::size_t>(f.hour));
    ni.push_back(static_cast<std::size_t>(f.minute));
  }
  Tensor out = gather_rows(year, yi);
  out = add(out, gather_rows(month, mi));
  out = add(out, gather_rows(week, wi));
  out = add(out, gather_rows(day, di));
  out = add(out, gather_rows(hour, hi));
  out = add(out, gather_rows(minute, ni));
  return out;
}

Tensor absolute_time_embed(const AbsoluteTimeTables& tables, std::int64_t epoch_seconds) {
  const std::int64_t ts[] = {epoch_seconds};
  Tensor rows = tables.embed(ts);
  return reshape(rows, {rows.dim(1)});
}

Tensor relative_time_embed(const Tensor& bucket_table, std::int64_t dt_seconds) {
  const std::size_t b = relative_bucket(dt_seconds, bucket_table.dim(0));
  return reshape(gather_rows(bucket_table, {b}), {bucket_table.dim(1)});
}

}  // namespace dhan
