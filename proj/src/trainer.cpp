#include "dhan/trainer.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "dhan/errors.hpp"
#include "dhan/eval.hpp"
#include "dhan/ops.hpp"
#include "dhan/sampling.hpp"

namespace dhan {

namespace {

// Stream tags for mix_seed so the random streams never collide.
constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kDropoutStream = 2;
constexpr std::uint64_t kNegativeStream = 3;

std::vector<std::size_t> excluded_for(const Instance& inst, const Dataset& ds) {
  std::vector<std::size_t> ex = ds.user_clicks.at(inst.user);
  auto it = std::lower_bound(ex.begin(), ex.end(), inst.candidate);
  if (it == ex.end() || *it != inst.candidate) ex.insert(it, inst.candidate);
  return ex;
}

double mean_at(const Tensor& v, const std::vector<std::size_t>& idx) {
  double s = 0;
  for (std::size_t i : idx) s += v[i];
  return idx.empty() ? 0.0 : s / static_cast<double>(idx.size());
}

}  // namespace

Trainer::Trainer(const RunConfig& config, const Dataset& dataset) : config_(config), dataset_(dataset) {
  validate(config_);
  model_ = std::make_unique<DhanModel>(model_config(config_, dataset_), config_.seed);
  adam_.options.lr = config_.lr;
  adam_.options.weight_decay = config_.weight_decay;
  const std::size_t m = dataset_.news.size();
  for (const auto& clicks : dataset_.user_clicks) {
    const std::size_t need = config_.dns_enabled ? config_.dns_pool_size : config_.dns_k;
    if (m < clicks.size() + need) {
      throw DataError("corpus of " + std::to_string(m) + " news is too small to draw " + std::to_string(need) +
                      " negatives outside a user's " + std::to_string(clicks.size()) + " clicks");
    }
  }
}

TrainingGroup Trainer::sample_negatives(const Instance& inst, std::uint64_t seed, const Tensor& projected) const {
  TrainingGroup g;
  g.candidates.push_back(inst.candidate);
  const std::vector<std::size_t> excluded = excluded_for(inst, dataset_);
  const std::size_t m = dataset_.news.size();
  if (!config_.dns_enabled) {
    for (std::size_t n : uniform_sample(m, excluded, config_.dns_k, mix_seed(seed, 0))) g.candidates.push_back(n);
    return g;
  }
  NoGradScope no_grad;
  const std::vector<std::size_t> pool = uniform_sample(m, excluded, config_.dns_pool_size, mix_seed(seed, 0));
  Tensor y = reshape(gather_rows(projected, {inst.candidate}), {config_.d});
  Tensor x = transpose(gather_rows(projected, pool));
  Tensor scores = dns_score(y, x, model_->dns_params());
  const std::vector<std::size_t> picks = dns_select(scores, config_.dns_k, {});
  const std::vector<std::size_t> uniform = uniform_sample(pool.size(), {}, config_.dns_k, mix_seed(seed, 1));
  for (std::size_t p : picks) g.candidates.push_back(pool[p]);
  g.dns_score_mean = mean_at(scores, picks);
  g.uniform_score_mean = mean_at(scores, uniform);
  return g;
}

EpochRecord Trainer::run_epoch() {
  EpochRecord rec = train_epoch();
  fill_eval(rec);
  return rec;
}

EpochRecord Trainer::train_epoch() {
  ++epoch_;
  EpochRecord rec;
  rec.epoch = epoch_;
  const std::vector<Instance>& train = dataset_.train;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle(mix_seed(mix_seed(config_.seed, kShuffleStream), epoch_));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

  Rng dropout_rng(mix_seed(mix_seed(config_.seed, kDropoutStream), epoch_));
  ForwardOptions opts;
  opts.training = config_.dropout > 0.0;
  opts.rng = &dropout_rng;
  const std::uint64_t neg_seed = mix_seed(mix_seed(config_.seed, kNegativeStream), epoch_);

  std::vector<std::size_t> all_news(dataset_.news.size());
  std::iota(all_news.begin(), all_news.end(), 0);
  ParamStore& params = model_->params();
  const std::size_t group_size = 1 + config_.dns_k;
  double loss_sum = 0.0;
  double dns_sum = 0.0;
  double uni_sum = 0.0;

  for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
    const std::size_t end = std::min(order.size(), start + config_.batch_size);
    const double terms = static_cast<double>((end - start) * group_size);
    Tensor projected;
    if (config_.dns_enabled) {
      NoGradScope no_grad;
      projected = matmul(model_->candidate_reps(all_news, dataset_.news), model_->dns_projection());
    }
    params.zero_grad();
    for (std::size_t mb = start; mb < end; mb += config_.micro_batch) {
      const std::size_t mb_end = std::min(end, mb + config_.micro_batch);
      std::vector<ScoreGroup> groups;
      std::vector<double> labels;
      for (std::size_t j = mb; j < mb_end; ++j) {
        const std::size_t idx = order[j];
        TrainingGroup tg = sample_negatives(train[idx], mix_seed(neg_seed, idx), projected);
        dns_sum += tg.dns_score_mean;
        uni_sum += tg.uniform_score_mean;
        groups.push_back({&train[idx], std::move(tg.candidates)});
        labels.push_back(1.0);
        labels.insert(labels.end(), config_.dns_k, 0.0);
      }
      Tape tape;
      Tensor loss;
      {
        TapeScope scope(tape);
        Tensor logits = model_->score(groups, dataset_.news, opts);
        loss = scale(bce_loss(logits, labels), 1.0 / terms);
      }
      tape.backward(loss);
      loss_sum += loss.item() * terms;
    }
    adam_step(params, collect_grads(params), adam_);
  }
  const double n = static_cast<double>(train.size());
  rec.loss = train.empty() ? 0.0 : loss_sum / (n * static_cast<double>(group_size));
  if (config_.dns_enabled && !train.empty()) {
    rec.dns_score_mean = dns_sum / n;
    rec.uniform_score_mean = uni_sum / n;
    rec.dns_draws = train.size();
  }
  return rec;
}

EpochRecord Trainer::evaluate_only() {
  EpochRecord rec;
  rec.epoch = epoch_;
  fill_eval(rec);
  return rec;
}

void Trainer::fill_eval(EpochRecord& rec) const {
  EvalOptions eo;
  eo.n_negatives = config_.eval_negatives;
  eo.seed = config_.eval_seed;
  rec.test = evaluate(*model_, dataset_.test, dataset_, eo);
  if (config_.eval_train) rec.train = evaluate(*model_, dataset_.train, dataset_, eo);
}

namespace {

nlohmann::json record_json(const EpochRecord& r, bool with_train) {
  nlohmann::json j = {{"epoch", r.epoch}, {"loss", r.loss}, {"test", metrics_json(r.test)}};
  if (with_train) j["train"] = metrics_json(r.train);
  if (r.dns_draws > 0) {
    j["dns_score_mean"] = r.dns_score_mean;
    j["uniform_score_mean"] = r.uniform_score_mean;
  }
  return j;
}

}  // namespace

TrainResult train(const RunConfig& config, const Dataset& dataset, const TrainOptions& options) {
  namespace fs = std::filesystem;
  Trainer trainer(config, dataset);
  TrainResult result;
  std::ofstream log;
  if (options.write_files) {
    fs::create_directories(config.out_dir);
    log.open(fs::path(config.out_dir) / "metrics.jsonl", std::ios::trunc);
    if (!log) throw std::runtime_error("cannot write metrics log in " + config.out_dir);
  }

  ParamStore best_params;
  auto consider = [&](const EpochRecord& r) {
    result.history.push_back(r);
    if (options.write_files) log << record_json(r, config.eval_train).dump() << '\n' << std::flush;
    if (options.on_epoch) options.on_epoch(r);
    if (result.history.size() == 1 || r.test.get(config.best_by) > result.best.get(config.best_by)) {
      result.best = r.test;
      result.best_epoch = r.epoch;
      if (options.write_files) best_params = snapshot(trainer.model().params());
    }
  };

  consider(trainer.evaluate_only());
  for (std::size_t e = 0; e < config.epochs; ++e) consider(trainer.run_epoch());

  if (options.write_files) {
    Checkpoint ckpt{config, result.best_epoch, result.history, std::move(best_params)};
    result.checkpoint_path = (fs::path(config.out_dir) / "best.ckpt").string();
    save_checkpoint(result.checkpoint_path, ckpt);
    nlohmann::json summary = {{"best_epoch", result.best_epoch},
                              {"best_by", config.best_by},
                              {"best", metrics_json(result.best)},
                              {"final", metrics_json(result.history.back().test)}};
    std::ofstream f(fs::path(config.out_dir) / "metrics.json", std::ios::trunc);
    f << summary.dump(2) << '\n';
  }
  result.final_model = std::make_unique<DhanModel>(trainer.model());
  return result;
}

}  // namespace dhan
