#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "dhan/rng.hpp"
#include "dhan/tensor.hpp"

namespace dhan {

enum class TimeMode { kNone, kRelative, kAbsolute, kBoth };

TimeMode parse_time_mode(std::string_view name);  // none|relative|absolute|both
std::string time_mode_name(TimeMode mode);
inline bool uses_absolute(TimeMode m) { return m == TimeMode::kAbsolute || m == TimeMode::kBoth; }
inline bool uses_relative(TimeMode m) { return m == TimeMode::kRelative || m == TimeMode::kBoth; }

// Width of a fused history row and of the fused candidate.
std::size_t z_dim(TimeMode mode, std::size_t d);
std::size_t z_cand_dim(TimeMode mode, std::size_t d);
inline std::size_t wc_rows(TimeMode mode, std::size_t d) { return z_dim(mode, d) + z_cand_dim(mode, d) + d; }

struct FusedSequence {
  Tensor z_seq;   // [L, z_dim]
  Tensor z_cand;  // [z_cand_dim]
  TimeMode mode = TimeMode::kNone;
};

// Concatenates per mode:
//   none      z = x'              z* = x*
//   relative  z = [x' r x*]       z* = x*
//   absolute  z = [x' a(1:L)]     z* = [x* a(L+1)]
//   both      z = [x' a(1:L) r]   z* = [x* a(L+1)]
// abs_emb / rel_emb may be left undefined when the mode does not use them.
FusedSequence fuse_time(const Tensor& x_prime_seq, const Tensor& abs_emb, const Tensor& rel_emb,
                        const Tensor& x_cand, TimeMode mode);

// [z_i z* u] · W_c. z_i may be a single row [z_dim] or a stack [L, z_dim];
// z* and u are repeated for each row. Throws ConfigError if W_c has the
// wrong number of rows.
Tensor time_aware_transform(const Tensor& z_i, const Tensor& z_cand, const Tensor& u, const Tensor& w_c);

struct TransformerBlockParams {
  Tensor wq, wk, wv;  // [d, d]
  Tensor wa;          // [d, d']
  Tensor wb;          // [d', d]
  Tensor ln_gamma, ln_beta;
  std::size_t heads = 1;
};

struct BlockOutput {
  Tensor out;        // same shape as the input
  Tensor attention;  // [L, L] or [B, L, L]; averaged over heads
};

// t = Attention(t); x = relu(t·Wa); out = LN(Dropout(x·Wb) + t).
// Accepts [L, d] or a batch [B, L, d]. No positional information is added.
BlockOutput transformer_block(const Tensor& t_seq, const TransformerBlockParams& params, double dropout_rate = 0.0,
                              Rng* rng = nullptr, double ln_eps = 1e-6);

}  // namespace dhan
