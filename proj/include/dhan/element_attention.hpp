#pragma once

#include <array>
#include <cstddef>
#include <string_view>

#include "dhan/rng.hpp"
#include "dhan/tensor.hpp"

namespace dhan {

inline constexpr std::size_t kNumElements = 5;

// Internal row order of an element matrix.
enum ElementKind : std::size_t { kPerson = 0, kOrganization = 1, kTime = 2, kLocation = 3, kKeywords = 4 };

inline constexpr std::array<std::string_view, kNumElements> kElementNames = {"person", "organization", "time",
                                                                             "location", "keywords"};

struct ElementMatrix {
  Tensor rows;  // [5, d]; absent elements are zero rows
  std::array<bool, kNumElements> presence{};
};

struct ElementWeights {
  Tensor gamma;  // [5, 5]
};

struct ElementAttention {
  Tensor attended;  // [5, d]
  ElementWeights weights;
};

// P = [hist cand] ∈ [5, 2d]; γ = softmax(P·W4 (P·W5)ᵀ / √d), dropped out when
// `rng` is given and rate > 0; attended = γ · P·W6.
ElementAttention element_attend(const ElementMatrix& hist, const ElementMatrix& cand, const Tensor& w4,
                                const Tensor& w5, const Tensor& w6, double dropout_rate = 0.0,
                                Rng* rng = nullptr);

Tensor pool_elements(const Tensor& attended);  // mean of the 5 rows -> [d]

}  // namespace dhan
