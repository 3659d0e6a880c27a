#include "dhan/model.hpp"

#include <algorithm>
#include <cmath>

#include "dhan/element_attention.hpp"
#include "dhan/errors.hpp"
#include "dhan/ops.hpp"
#include "dhan/sentence_attention.hpp"

namespace dhan {

LayerSet parse_layers(std::string_view text) {
  LayerSet out{false, false, false};
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('+', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view part = text.substr(pos, end - pos);
    if (part == "S") {
      out.sentence = true;
    } else if (part == "E") {
      out.element = true;
    } else if (part == "N") {
      out.sequence = true;
    } else {
      throw ConfigError("layers must be a '+'-joined subset of S, E, N; got '" + std::string(text) + "'");
    }
    pos = end + 1;
  }
  return out;
}

std::string layers_name(const LayerSet& layers) {
  std::string out;
  auto add = [&](bool on, const char* n) {
    if (!on) return;
    if (!out.empty()) out += '+';
    out += n;
  };
  add(layers.sentence, "S");
  add(layers.element, "E");
  add(layers.sequence, "N");
  return out.empty() ? "none" : out;
}

std::size_t hierarchy_parameter_count(const LayerSet& layers, std::size_t d) {
  return (layers.sentence ? 3 * d * d : 0) + (layers.element ? 6 * d * d : 0);
}

namespace {

double glorot(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

std::size_t sentence_count(const NewsArticle& a, std::size_t k) { return std::min(a.sentences.size(), k); }

std::vector<bool> sentence_mask(const NewsArticle& a, std::size_t k) {
  std::vector<bool> mask(k, true);
  for (std::size_t i = 0; i < sentence_count(a, k); ++i) mask[i] = false;
  return mask;
}

std::vector<TokenList> first_sentences(const NewsArticle& a, std::size_t k) {
  return {a.sentences.begin(), a.sentences.begin() + static_cast<std::ptrdiff_t>(sentence_count(a, k))};
}

const NewsArticle& article(const std::vector<NewsArticle>& news, std::size_t id) {
  if (id >= news.size()) throw DataError("news index " + std::to_string(id) + " out of range");
  return news[id];
}

ElementMatrix element_matrix(const Tensor& words, const NewsArticle& a) {
  Bags bags;
  ElementMatrix m;
  for (std::size_t k = 0; k < kNumElements; ++k) {
    bags.add_mean(a.elements[k]);
    m.presence[k] = !a.elements[k].empty();
  }
  m.rows = embedding_bag(words, bags);
  return m;
}

Tensor zeros_like(const Tensor& t) { return t.defined() ? Tensor::zeros(t.shape()) : Tensor(); }

Tensor row_of(const Tensor& table, std::size_t row) {
  return reshape(gather_rows(table, {row}), {table.dim(1)});
}

}  // namespace

DhanModel::DhanModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  const ModelConfig& c = config_;
  if (c.d == 0 || c.d_prime == 0 || c.history_len == 0 || c.max_sentences == 0) {
    throw ConfigError("d, d_prime, L and K must be positive");
  }
  if (c.heads != 1 && c.heads != 2 && c.heads != 4 && c.heads != 8) throw ConfigError("heads must be 1, 2, 4 or 8");
  if (c.d % c.heads != 0) throw ConfigError("heads must divide d");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (c.min_year > c.max_year) throw ConfigError("time.min_year exceeds time.max_year");
  if (c.num_users == 0 || c.num_news == 0 || c.vocab_size == 0) throw ConfigError("empty user, news or vocabulary");

  const std::size_t d = c.d;
  Rng rng(seed);
  const double emb = 1.0 / std::sqrt(static_cast<double>(d));
  params_.add_uniform("user_emb", {c.num_users, d}, emb, rng);
  params_.add_uniform("news_emb", {c.num_news, d}, emb, rng);
  params_.add_uniform("word_emb", {c.vocab_size, d}, emb, rng);
  if (uses_absolute(c.time_mode)) {
    params_.add_uniform("time.year", {static_cast<std::size_t>(c.max_year - c.min_year + 1), d}, emb, rng);
    params_.add_uniform("time.month", {AbsoluteTimeTables::kMonths, d}, emb, rng);
    params_.add_uniform("time.week", {AbsoluteTimeTables::kWeeks, d}, emb, rng);
    params_.add_uniform("time.day", {AbsoluteTimeTables::kDays, d}, emb, rng);
    params_.add_uniform("time.hour", {AbsoluteTimeTables::kHours, d}, emb, rng);
    params_.add_uniform("time.minute", {AbsoluteTimeTables::kMinutes, d}, emb, rng);
  }
  if (uses_relative(c.time_mode)) params_.add_uniform("time.relative", {kRelativeBuckets, d}, emb, rng);
  if (c.layers.sentence) {
    for (const char* n : {"sentence.W1", "sentence.W2", "sentence.W3"}) params_.add_uniform(n, {d, d}, glorot(d, d), rng);
  }
  if (c.layers.element) {
    for (const char* n : {"element.W4", "element.W5", "element.W6"}) {
      params_.add_uniform(n, {2 * d, d}, glorot(2 * d, d), rng);
    }
  }
  const std::size_t wc = wc_rows(c.time_mode, d);
  params_.add_uniform("sequence.Wc", {wc, d}, glorot(wc, d), rng);
  if (c.layers.sequence) add_block("sequence", rng);
  add_block("summary0", rng);
  add_block("summary1", rng);
  params_.add_uniform("head.W1", {5 * d, 2 * d}, glorot(5 * d, 2 * d), rng);
  params_.add_constant("head.b1", {2 * d}, 0.0);
  params_.add_uniform("head.W2", {2 * d, 1}, glorot(2 * d, 1), rng);
  params_.add_constant("head.b2", {1}, 0.0);

  if (c.dns_enabled) {
    const std::size_t n = c.dns_pool_size;
    if (n == 0) throw ConfigError("dns.pool_size must be positive");
    Tensor w({n, n});
    for (std::size_t i = 0; i < n; ++i) w.data()[i * n + i] = 1.0;
    params_.add("dns.W", w);
    params_.add("dns.b", Tensor({n}));
  }
}

void DhanModel::add_block(const std::string& prefix, Rng& rng) {
  const std::size_t d = config_.d;
  const std::size_t dp = config_.d_prime;
  for (const char* n : {".Wq", ".Wk", ".Wv"}) params_.add_uniform(prefix + n, {d, d}, glorot(d, d), rng);
  params_.add_uniform(prefix + ".Wa", {d, dp}, glorot(d, dp), rng);
  params_.add_uniform(prefix + ".Wb", {dp, d}, glorot(dp, d), rng);
  params_.add_constant(prefix + ".ln_gamma", {d}, 1.0);
  params_.add_constant(prefix + ".ln_beta", {d}, 0.0);
}

TransformerBlockParams DhanModel::block(const std::string& prefix) const {
  TransformerBlockParams b;
  b.wq = params_.get(prefix + ".Wq");
  b.wk = params_.get(prefix + ".Wk");
  b.wv = params_.get(prefix + ".Wv");
  b.wa = params_.get(prefix + ".Wa");
  b.wb = params_.get(prefix + ".Wb");
  b.ln_gamma = params_.get(prefix + ".ln_gamma");
  b.ln_beta = params_.get(prefix + ".ln_beta");
  b.heads = config_.heads;
  return b;
}

AbsoluteTimeTables DhanModel::time_tables() const {
  AbsoluteTimeTables t;
  t.min_year = config_.min_year;
  t.max_year = config_.max_year;
  t.year = p("time.year");
  t.month = p("time.month");
  t.week = p("time.week");
  t.day = p("time.day");
  t.hour = p("time.hour");
  t.minute = p("time.minute");
  return t;
}

namespace {

IndexList relative_buckets(const std::vector<std::int64_t>& ts) {
  IndexList b;
  for (std::size_t i = 0; i < ts.size(); ++i) b.push_back(relative_bucket(i == 0 ? 0 : ts[i] - ts[i - 1]));
  return b;
}

}  // namespace

Tensor DhanModel::relative_rows(const std::vector<std::int64_t>& ts) const {
  return gather_rows(p("time.relative"), relative_buckets(ts));
}

DnsParams DhanModel::dns_params() const { return {p("dns.W"), p("dns.b")}; }

Tensor DhanModel::dns_projection() const {
  const std::size_t d = config_.d;
  Tensor sel = Tensor::zeros({3 * d, d});
  for (std::size_t i = 0; i < d; ++i) sel.ptr()[(2 * d + i) * d + i] = 1.0;
  return sel;
}

Tensor DhanModel::forward(const Instance& inst, const std::vector<NewsArticle>& news,
                          const ForwardOptions& opts) const {
  const ModelConfig& c = config_;
  const std::size_t d = c.d;
  const std::size_t k = c.max_sentences;
  const std::size_t l = inst.history.size();
  if (l != c.history_len || inst.history_ts.size() != l) {
    throw ShapeError("forward: history must hold exactly L = " + std::to_string(c.history_len) + " clicks");
  }
  if (opts.training && opts.rng == nullptr) throw std::invalid_argument("forward: training mode needs an rng");
  Rng* rng = opts.training ? opts.rng : nullptr;
  const double rate = opts.training ? c.dropout : 0.0;
  AttentionTrace* trace = opts.trace;
  if (trace != nullptr) *trace = AttentionTrace{};

  const Tensor& words = p("word_emb");
  const Tensor& ids = p("news_emb");
  Tensor u = row_of(p("user_emb"), inst.user);
  const NewsArticle& cand = article(news, inst.candidate);
  Tensor cand_content = encode_candidate_content(words, first_sentences(cand, k));
  ElementMatrix cand_el = element_matrix(words, cand);
  Tensor x_star = concat({cand_content, pool_elements(cand_el.rows), row_of(ids, inst.candidate)}, 0);

  std::vector<Tensor> rows;
  for (std::size_t i = 0; i < l; ++i) {
    const NewsArticle& h = article(news, inst.history[i]);
    Tensor content = Tensor::zeros({d});
    Tensor element = Tensor::zeros({d});
    if (c.layers.sentence) {
      SentenceBlockInput in;
      in.u = u;
      in.cand_vec = cand_content;
      in.pad_mask = sentence_mask(h, k);
      std::vector<Tensor> sent_rows;
      for (std::size_t s = 0; s < k; ++s) {
        Tensor v = s < h.sentences.size() ? encode_sentence(words, h.sentences[s]) : Tensor::zeros({d});
        sent_rows.push_back(reshape(v, {1, d}));
      }
      in.sent_matrix = concat(sent_rows, 0);
      SentenceAttention sa = sentence_attend(in, p("sentence.W1"), p("sentence.W2"), p("sentence.W3"));
      content = pool_news_content(sa.attended, in.pad_mask);
      if (trace != nullptr) trace->beta.push_back(sa.weights.beta.detach());
    }
    if (c.layers.element) {
      ElementAttention ea = element_attend(element_matrix(words, h), cand_el, p("element.W4"), p("element.W5"),
                                           p("element.W6"), rate, rng);
      element = pool_elements(ea.attended);
      if (trace != nullptr) trace->gamma.push_back(ea.weights.gamma.detach());
    }
    rows.push_back(reshape(concat({content, element, row_of(ids, inst.history[i])}, 0), {1, 3 * d}));
  }
  Tensor x_seq = concat(rows, 0);

  Tensor abs_emb, rel_emb;
  if (uses_absolute(c.time_mode)) {
    std::vector<std::int64_t> all = inst.history_ts;
    all.push_back(inst.candidate_ts);
    abs_emb = time_tables().embed(all);
  }
  if (uses_relative(c.time_mode)) rel_emb = relative_rows(inst.history_ts);

  auto transform = [&](const Tensor& a, const Tensor& r) {
    FusedSequence f = fuse_time(x_seq, a, r, x_star, c.time_mode);
    return time_aware_transform(f.z_seq, f.z_cand, u, p("sequence.Wc"));
  };
  Tensor e = transform(abs_emb, rel_emb);
  const std::string first_block = c.layers.sequence ? "sequence" : "summary0";
  if (c.layers.sequence) {
    BlockOutput b = transformer_block(e, block("sequence"), rate, rng, c.ln_eps);
    if (trace != nullptr) trace->time_sequence = b.attention.detach();
    e = b.out;
  }
  SequenceRep rep = summarize_history(e, {block("summary0"), block("summary1")}, rate, rng, c.ln_eps);
  if (trace != nullptr) {
    if (!c.layers.sequence) trace->time_sequence = rep.attention[0].detach();
    NoGradScope no_grad;
    Tensor plain = transform(zeros_like(abs_emb), zeros_like(rel_emb));
    trace->sequence = transformer_block(plain, block(first_block), 0.0, nullptr, c.ln_eps).attention.detach();
  }
  return predict_click(rep.p, x_star, u, {p("head.W1"), p("head.b1"), p("head.W2"), p("head.b2")});
}

Tensor DhanModel::candidate_reps(const std::vector<std::size_t>& cands, const std::vector<NewsArticle>& news) const {
  const std::size_t d = config_.d;
  const std::size_t n = cands.size();
  Bags content, elements;
  for (std::size_t id : cands) {
    const NewsArticle& a = article(news, id);
    add_content_bag(content, a.sentences, config_.max_sentences);
    for (const TokenList& e : a.elements) elements.add_mean(e);
  }
  const Tensor& words = p("word_emb");
  Tensor el = reshape(embedding_bag(words, elements), {n, kNumElements, d});
  return concat({embedding_bag(words, content), mean(el, 1), gather_rows(p("news_emb"), cands)}, 1);
}

Tensor DhanModel::score(const std::vector<ScoreGroup>& groups, const std::vector<NewsArticle>& news,
                        const ForwardOptions& opts) const {
  const ModelConfig& c = config_;
  const std::size_t d = c.d;
  const std::size_t k = c.max_sentences;
  const std::size_t l = c.history_len;
  if (groups.empty()) throw std::invalid_argument("score: no groups");
  if (opts.training && opts.rng == nullptr) throw std::invalid_argument("score: training mode needs an rng");
  Rng* rng = opts.training ? opts.rng : nullptr;
  const double rate = opts.training ? c.dropout : 0.0;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  // Index plan. Slot = (group, history position); pair = (candidate, position).
  IndexList users, cand_ids, cand_group, slot_news, pair_slot, pair_cand, pair_group;
  std::vector<std::int64_t> slot_ts, group_ts;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const Instance& inst = *groups[g].instance;
    if (inst.history.size() != l || inst.history_ts.size() != l) {
      throw ShapeError("score: history must hold exactly L = " + std::to_string(l) + " clicks");
    }
    if (groups[g].candidates.empty()) throw std::invalid_argument("score: group without candidates");
    users.push_back(inst.user);
    group_ts.push_back(inst.candidate_ts);
    for (std::size_t i = 0; i < l; ++i) {
      slot_news.push_back(inst.history[i]);
      slot_ts.push_back(inst.history_ts[i]);
    }
    for (std::size_t cand : groups[g].candidates) {
      const std::size_t n = cand_ids.size();
      cand_ids.push_back(cand);
      cand_group.push_back(g);
      for (std::size_t i = 0; i < l; ++i) {
        pair_slot.push_back(g * l + i);
        pair_cand.push_back(n);
        pair_group.push_back(g);
      }
    }
  }
  const std::size_t n_cand = cand_ids.size();
  const std::size_t n_pair = pair_slot.size();
  const std::size_t n_slot = slot_news.size();

  const Tensor& words = p("word_emb");
  Tensor u_group = gather_rows(p("user_emb"), users);
  Tensor u_cand = gather_rows(u_group, cand_group);

  Bags cand_content_bags, cand_element_bags;
  for (std::size_t id : cand_ids) {
    const NewsArticle& a = article(news, id);
    add_content_bag(cand_content_bags, a.sentences, k);
    for (const TokenList& e : a.elements) cand_element_bags.add_mean(e);
  }
  Tensor cand_content = embedding_bag(words, cand_content_bags);
  Tensor cand_el = reshape(embedding_bag(words, cand_element_bags), {n_cand, kNumElements, d});
  Tensor x_star = concat({cand_content, mean(cand_el, 1), gather_rows(p("news_emb"), cand_ids)}, 1);

  IndexList slot_group(n_slot);
  for (std::size_t s = 0; s < n_slot; ++s) slot_group[s] = s / l;
  auto per_pair = [&](const Tensor& rows) { return reshape(gather_rows(rows, pair_cand), {n_pair, 1, d}); };

  Tensor content_pair;
  if (c.layers.sentence) {
    // Padded sentence rows get zero pooling weight and padded columns zero
    // attention, so the block only needs the longest article in the batch.
    std::size_t k_used = 1;
    for (std::size_t id : slot_news) k_used = std::max(k_used, sentence_count(article(news, id), k));
    Bags sent_bags;
    for (std::size_t id : slot_news) {
      const NewsArticle& a = article(news, id);
      for (std::size_t s = 0; s < k_used; ++s) {
        if (s < a.sentences.size()) {
          sent_bags.add_mean(a.sentences[s]);
        } else {
          sent_bags.add_empty();
        }
      }
    }
    // Rows [u; sentences] belong to a slot; only the candidate row and
    // column differ between the pairs of a slot.
    Tensor head_rows = concat({reshape(gather_rows(u_group, slot_group), {n_slot, 1, d}),
                               reshape(embedding_bag(words, sent_bags), {n_slot, k_used, d})},
                              1);
    const Tensor& w1 = p("sentence.W1");
    const Tensor w2t = transpose(p("sentence.W2"));
    const Tensor& w3 = p("sentence.W3");
    Tensor q_slot = matmul(head_rows, w1);
    Tensor k_slot = matmul(head_rows, w2t);
    Tensor v_slot = matmul(head_rows, w3);
    Tensor q_cand = per_pair(matmul(cand_content, w1));
    Tensor k_cand = per_pair(matmul(cand_content, w2t));
    Tensor v_cand = per_pair(matmul(cand_content, w3));
    Tensor keys = concat({gather_rows(k_slot, pair_slot), k_cand}, 1);
    Tensor upper = concat({gather_rows(bmm(q_slot, k_slot, true), pair_slot),
                           bmm(gather_rows(q_slot, pair_slot), k_cand, true)},
                          2);
    Tensor raw = concat({upper, bmm(q_cand, keys, true)}, 1);

    const std::size_t n = k_used + 2;
    Tensor mask({n_pair, n, n});
    Tensor pool({n_pair, 1, n});
    double* mask_out = mask.ptr();
    double* pool_out = pool.ptr();
    for (std::size_t pr = 0; pr < n_pair; ++pr) {
      const std::size_t valid = sentence_count(article(news, slot_news[pair_slot[pr]]), k);
      const double share = 1.0 / static_cast<double>(valid + 2);
      double* row = pool_out + pr * n;
      row[0] = share;
      row[n - 1] = share;
      for (std::size_t s = 0; s < k_used; ++s) row[s + 1] = s < valid ? share : 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t s = valid; s < k_used; ++s) mask_out[(pr * n + r) * n + s + 1] = kMaskedLogit;
      }
    }
    Tensor beta = softmax_last(add(scale(raw, inv_sqrt_d), mask));
    Tensor values = concat({gather_rows(v_slot, pair_slot), v_cand}, 1);
    content_pair = reshape(bmm(bmm(pool, beta), values), {n_pair, d});
  }

  Tensor element_pair;
  if (c.layers.element) {
    Bags hist_bags;
    for (std::size_t id : slot_news) {
      for (const TokenList& e : article(news, id).elements) hist_bags.add_mean(e);
    }
    Tensor hist_el = reshape(embedding_bag(words, hist_bags), {n_slot, kNumElements, d});
    // [hist cand]·W = hist·W[:d] + cand·W[d:].
    auto project = [&](const Tensor& w) {
      return add(gather_rows(matmul(hist_el, slice(w, 0, 0, d)), pair_slot),
                 gather_rows(matmul(cand_el, slice(w, 0, d, d)), pair_cand));
    };
    Tensor gamma = softmax_last(scale(bmm(project(p("element.W4")), project(p("element.W5")), true), inv_sqrt_d));
    if (rng != nullptr && rate > 0.0) gamma = dropout(gamma, rate, *rng);
    element_pair = mean(bmm(gamma, project(p("element.W6"))), 1);
  }

  // W_c rows follow the fused layout [content, element, id, time..., z*, u];
  // each part is projected at the granularity where it varies.
  const Tensor& wc = p("sequence.Wc");
  std::size_t row = 0;
  auto rows_of = [&](std::size_t width) {
    Tensor w = slice(wc, 0, row, width);
    row += width;
    return w;
  };
  Tensor w_content = rows_of(d);
  Tensor w_element = rows_of(d);
  std::vector<Tensor> slot_parts = {gather_rows(p("news_emb"), slot_news)};
  std::vector<Tensor> cand_parts;
  Tensor z_star = x_star;
  if (uses_absolute(c.time_mode)) {
    AbsoluteTimeTables tables = time_tables();
    slot_parts.push_back(tables.embed(slot_ts));
    z_star = concat({x_star, gather_rows(tables.embed(group_ts), cand_group)}, 1);
  }
  if (uses_relative(c.time_mode)) {
    IndexList buckets;
    for (const ScoreGroup& g : groups) {
      const IndexList b = relative_buckets(g.instance->history_ts);
      buckets.insert(buckets.end(), b.begin(), b.end());
    }
    slot_parts.push_back(gather_rows(p("time.relative"), buckets));
    if (c.time_mode == TimeMode::kRelative) cand_parts.push_back(x_star);
  }
  cand_parts.push_back(z_star);
  cand_parts.push_back(u_cand);
  Tensor slot_in = concat(slot_parts, 1);
  Tensor cand_in = concat(cand_parts, 1);
  Tensor w_slot = rows_of(slot_in.dim(1));
  Tensor w_cand = rows_of(cand_in.dim(1));
  if (row != wc.dim(0)) throw ShapeError("score: W_c rows do not match the fused layout");
  Tensor t = add(gather_rows(matmul(slot_in, w_slot), pair_slot), gather_rows(matmul(cand_in, w_cand), pair_cand));
  if (content_pair.defined()) t = add(t, matmul(content_pair, w_content));
  if (element_pair.defined()) t = add(t, matmul(element_pair, w_element));
  t = reshape(t, {n_cand, l, d});

  if (c.layers.sequence) t = transformer_block(t, block("sequence"), rate, rng, c.ln_eps).out;
  SequenceRep rep = summarize_history(t, {block("summary0"), block("summary1")}, rate, rng, c.ln_eps);
  return predict_click(rep.p, x_star, u_cand, {p("head.W1"), p("head.b1"), p("head.W2"), p("head.b2")});
}

}  // namespace dhan
