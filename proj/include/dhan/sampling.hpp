#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dhan/tensor.hpp"

namespace dhan {

struct DnsParams {
  Tensor w;  // [N_pool, N_pool]
  Tensor b;  // [N_pool]
};

// f(y, X) = W(Xᵀ·y) + b for y [d] and X [d, N_pool]; returns [N_pool].
Tensor dns_score(const Tensor& y, const Tensor& x, const DnsParams& params);

// Top-k positions by score among the non-excluded ones, highest first,
// ties to the lowest position. Throws std::invalid_argument if fewer than k
// positions remain.
std::vector<std::size_t> dns_select(const Tensor& scores, std::size_t k, const std::vector<std::size_t>& excluded);

// k distinct items of [0, corpus_size) \ excluded, uniformly without
// replacement, in draw order. Deterministic for a given seed.
std::vector<std::size_t> uniform_sample(std::size_t corpus_size, const std::vector<std::size_t>& excluded,
                                        std::size_t k, std::uint64_t seed);

}  // namespace dhan
