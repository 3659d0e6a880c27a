#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dhan/ops.hpp"
#include "dhan/tensor.hpp"

namespace dhan {

using TokenList = std::vector<std::int32_t>;

/// Lookup table of `vocab_size` trainable rows of width d.
struct EmbeddingTable {
  Tensor rows;

  std::size_t vocab_size() const { return rows.dim(0); }
  std::size_t dim() const { return rows.dim(1); }
  Tensor lookup(const IndexList& ids) const { return gather_rows(rows, ids); }
};

// Mean of the word rows; an empty list is the zero vector. Shape [d].
Tensor encode_sentence(const Tensor& word_table, std::span<const std::int32_t> word_ids);
// Mean of the per-sentence vectors (empty sentences count as zero vectors).
Tensor encode_candidate_content(const Tensor& word_table, const std::vector<TokenList>& sentences);
// Same contract as encode_sentence; a missing element is the zero vector.
Tensor encode_element(const Tensor& word_table, std::span<const std::int32_t> word_ids);

// Appends one bag holding the mean of per-sentence means.
void add_content_bag(Bags& bags, const std::vector<TokenList>& sentences, std::size_t max_sentences);

/// Calendar fields of a UTC timestamp.
struct TimeFeatures {
  int year = 1970;
  int month = 1;         // 1..12
  int week_of_year = 1;  // 1..53, day_of_year / 7 + 1
  int day_of_month = 1;  // 1..31
  int hour = 0;          // 0..23
  int minute = 0;        // 0..59

  bool operator==(const TimeFeatures&) const = default;
};

TimeFeatures time_features(std::int64_t epoch_seconds);

inline constexpr std::size_t kRelativeBuckets = 32;

// min(floor(log2(dt + 1)), buckets - 1). Throws std::invalid_argument if dt < 0.
std::size_t relative_bucket(std::int64_t dt_seconds, std::size_t buckets = kRelativeBuckets);

/// Six per-field tables whose looked-up rows are summed.
struct AbsoluteTimeTables {
  int min_year = 1970;
  int max_year = 2037;
  Tensor year, month, week, day, hour, minute;

  static constexpr std::size_t kMonths = 12;
  static constexpr std::size_t kWeeks = 53;
  static constexpr std::size_t kDays = 31;
  static constexpr std::size_t kHours = 24;
  static constexpr std::size_t kMinutes = 60;
  std::size_t year_rows() const { return static_cast<std::size_t>(max_year - min_year + 1); }

  // One row per timestamp: [n, d]. Out-of-range years clamp to the boundary.
  Tensor embed(std::span<const std::int64_t> timestamps) const;
};

Tensor absolute_time_embed(const AbsoluteTimeTables& tables, std::int64_t epoch_seconds);  // [d]
Tensor relative_time_embed(const Tensor& bucket_table, std::int64_t dt_seconds);            // [d]

}  // namespace dhan
