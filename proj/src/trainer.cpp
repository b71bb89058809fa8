#include "ynet/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace ynet {

using nlohmann::ordered_json;

void TrainConfig::validate() const {
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) throw DataError("train config: lr0 must be positive");
  if (!(gamma > 0.0 && gamma < 1.0)) throw DataError("train config: gamma must be in (0,1)");
  if (!(step_fraction > 0.0 && step_fraction <= 1.0)) throw DataError("train config: step_fraction must be in (0,1]");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw DataError("train config: momentum must be in [0,1)");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw DataError("train config: weight_decay must be non-negative");
  }
  if (batch == 0 || batch % 2 != 0) throw DataError("train config: batch must be a positive even number");
  if (max_epochs == 0) throw DataError("train config: max_epochs must be positive");
  if (snapshot_window == 0) throw DataError("train config: snapshot_window must be >= 1");
  if (patience == 0) throw DataError("train config: patience must be >= 1");
  if (workers == 0) throw DataError("train config: workers must be >= 1");
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "lr0 = " << format_double(lr0) << '\n'
     << "gamma = " << format_double(gamma) << '\n'
     << "step_fraction = " << format_double(step_fraction) << '\n'
     << "momentum = " << format_double(momentum) << '\n'
     << "weight_decay = " << format_double(weight_decay) << '\n'
     << "batch = " << batch << '\n'
     << "max_epochs = " << max_epochs << '\n'
     << "seed = " << seed << '\n'
     << "snapshot_window = " << snapshot_window << '\n'
     << "early_stop = " << (early_stop ? "true" : "false") << '\n'
     << "patience = " << patience << '\n'
     << "workers = " << workers << '\n';
  return os.str();
}

TrainConfig TrainConfig::from_text(std::string_view text) { return from_kv(KeyValueConfig::parse(text)); }

TrainConfig TrainConfig::from_kv(const KeyValueConfig& kv) {
  auto count = [&](const std::string& key, std::size_t fallback) {
    const long long v = kv.get_int(key, static_cast<long long>(fallback));
    if (v < 0) throw DataError("train config: " + key + " must be non-negative");
    return static_cast<std::size_t>(v);
  };
  TrainConfig c;
  c.lr0 = kv.get_double("lr0", c.lr0);
  c.gamma = kv.get_double("gamma", c.gamma);
  c.step_fraction = kv.get_double("step_fraction", c.step_fraction);
  c.momentum = kv.get_double("momentum", c.momentum);
  c.weight_decay = kv.get_double("weight_decay", c.weight_decay);
  c.batch = count("batch", c.batch);
  c.max_epochs = count("max_epochs", c.max_epochs);
  c.seed = static_cast<std::uint64_t>(count("seed", static_cast<std::size_t>(c.seed)));
  c.snapshot_window = count("snapshot_window", c.snapshot_window);
  c.early_stop = kv.get_bool("early_stop", c.early_stop);
  c.patience = count("patience", c.patience);
  c.workers = count("workers", c.workers);
  kv.reject_unconsumed("train config");
  c.validate();
  return c;
}

double lr_schedule(const TrainConfig& cfg, std::size_t epoch) {
  if (epoch >= cfg.max_epochs) {
    throw std::out_of_range("lr_schedule: epoch " + std::to_string(epoch) + " >= max_epochs");
  }
  const double step = cfg.step_fraction * static_cast<double>(cfg.max_epochs);
  // the small slack keeps e.g. 0.1 * 900 from landing just above 90
  const double k = std::floor(static_cast<double>(epoch) / step + 1e-9);
  return cfg.lr0 * std::pow(cfg.gamma, k);
}

void sgd_step(std::span<Param* const> params, SgdState& state, const TrainConfig& cfg, double lr) {
  std::size_t learnable = 0;
  for (const Param* p : params) learnable += p->learnable ? 1 : 0;
  if (state.velocity.empty()) {
    for (const Param* p : params) {
      if (p->learnable) state.velocity.emplace_back(p->value.shape());
    }
  }
  if (state.velocity.size() != learnable) throw std::invalid_argument("sgd_step: velocity/parameter count mismatch");

  const float m = static_cast<float>(cfg.momentum);
  const float rate = static_cast<float>(lr);
  std::size_t k = 0;
  for (Param* p : params) {
    if (!p->learnable) continue;
    TensorF& v = state.velocity[k++];
    if (v.shape() != p->value.shape() || p->grad.shape() != p->value.shape()) {
      throw ShapeError("sgd_step: shape mismatch for " + p->name);
    }
    const float wd = p->decay ? static_cast<float>(cfg.weight_decay) : 0.0f;
    float* w = p->value.ptr();
    const float* g = p->grad.ptr();
    float* vel = v.ptr();
    for (std::size_t i = 0; i < v.size(); ++i) {
      vel[i] = m * vel[i] + rate * (g[i] + wd * w[i]);
      w[i] -= vel[i];
    }
  }
}

std::string MetricsRecord::to_json() const {
  ordered_json j;
  j["epoch"] = epoch;
  j["train_loss"] = train_loss;
  j["train_accuracy"] = train_accuracy;
  j["val_loss"] = val_loss;
  j["val_accuracy"] = val_accuracy;
  j["lr"] = lr;
  return j.dump();
}

std::string MetricsRecord::timing_json() const {
  ordered_json j;
  j["epoch"] = epoch;
  j["wall_time"] = wall_time;
  return j.dump();
}

namespace {

int argmax2(const TensorF& probs, std::size_t i) {
  return probs.at(i, 1, 0, 0) > probs.at(i, 0, 0, 0) ? 1 : 0;
}

struct SetScore {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Mean loss and accuracy over a pair set in eval mode.
SetScore score_eval(NetworkGraph& net, const PairSet& set, std::size_t chunk_pairs) {
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < set.size(); start += chunk_pairs) {
    idx.clear();
    for (std::size_t i = start; i < std::min(set.size(), start + chunk_pairs); ++i) idx.push_back(i);
    const Batch b = make_batch(set, idx);
    const ForwardResult r = net.forward(b.images, Mode::eval, b.labels);
    loss_sum += r.loss * static_cast<double>(b.labels.size());
    for (std::size_t i = 0; i < b.labels.size(); ++i) correct += argmax2(r.probabilities, i) == b.labels[i] ? 1 : 0;
  }
  const double n = 2.0 * static_cast<double>(set.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

struct Snapshot {
  std::size_t epoch;
  double val_loss;
  NetworkGraph net;
};

}  // namespace

TrainResult train(NetworkGraph& net, const PairSet& train_set, const PairSet& val_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.size() < cfg.batch / 2) {
    throw DataError("train: the train split has " + std::to_string(train_set.size()) +
                    " pairs, fewer than one batch of " + std::to_string(cfg.batch / 2));
  }
  if (val_set.size() == 0) throw DataError("train: the val split is empty");
  set_num_threads(static_cast<int>(cfg.workers));

  const auto t0 = std::chrono::steady_clock::now();
  SgdState sgd;
  std::vector<MetricsRecord> metrics;
  std::deque<Snapshot> window;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  bool early_stopped = false;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double lr = lr_schedule(cfg, epoch);
    BatchStream stream(train_set, cfg.batch, cfg.seed, epoch);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t seen = 0;
    std::size_t batch_index = 0;
    while (auto b = stream.next()) {
      const std::string where = "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index);
      ForwardResult r;
      try {
        r = net.forward(b->images, Mode::train, b->labels);
      } catch (const NumericError& e) {
        throw NumericError(where + ": " + e.what());
      }
      if (!std::isfinite(r.loss)) throw NumericError(where + ": non-finite loss");
      net.backward();
      auto params = net.params();
      sgd_step(params, sgd, cfg, lr);
      loss_sum += r.loss;
      for (std::size_t i = 0; i < b->labels.size(); ++i) {
        correct += argmax2(r.probabilities, i) == b->labels[i] ? 1 : 0;
      }
      seen += b->labels.size();
      ++batch_index;
    }
    net.clear_caches();

    SetScore val;
    try {
      val = score_eval(net, val_set, std::max<std::size_t>(1, cfg.batch / 2));
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch) + ", validation: " + e.what());
    }
    if (!std::isfinite(val.loss)) {
      throw NumericError("epoch " + std::to_string(epoch) + ", validation: non-finite loss");
    }

    MetricsRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batch_index);
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    rec.val_loss = val.loss;
    rec.val_accuracy = val.accuracy;
    rec.lr = lr;
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    metrics.push_back(rec);
    if (on_epoch) on_epoch(rec);

    window.push_back(Snapshot{epoch, val.loss, net});
    if (window.size() > cfg.snapshot_window) window.pop_front();

    if (val.loss < best_val) {
      best_val = val.loss;
      best_epoch = epoch;
    } else if (cfg.early_stop && epoch - best_epoch >= cfg.patience) {
      early_stopped = true;
      break;
    }
  }

  // first occurrence wins on ties, so the choice is deterministic
  auto lo = window.begin();
  auto hi = window.begin();
  for (auto it = window.begin(); it != window.end(); ++it) {
    if (it->val_loss < lo->val_loss) lo = it;
    if (it->val_loss > hi->val_loss) hi = it;
  }
  TrainResult result{net, lo->net, hi->net, lo->epoch, hi->epoch, std::move(metrics), early_stopped};
  return result;
}

TrainResult train(NetworkGraph& net, const DatasetManifest& manifest, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  const PairSet train_set = load_split(manifest, Split::train);
  const PairSet val_set = load_split(manifest, Split::val);
  return train(net, train_set, val_set, cfg, on_epoch);
}

EvalResult EvalResult::from_counts(std::size_t covers, std::size_t false_alarms, std::size_t stegos,
                                   std::size_t missed_detections) {
  if (covers == 0 || stegos == 0) throw DataError("evaluate: need at least one cover and one stego");
  if (false_alarms > covers || missed_detections > stegos) throw std::invalid_argument("evaluate: counts exceed totals");
  EvalResult r;
  r.covers = covers;
  r.stegos = stegos;
  r.false_alarms = false_alarms;
  r.missed_detections = missed_detections;
  r.p_fa = static_cast<double>(false_alarms) / static_cast<double>(covers);
  r.p_md = static_cast<double>(missed_detections) / static_cast<double>(stegos);
  r.p_e = 0.5 * (r.p_fa + r.p_md);
  return r;
}

namespace {

ordered_json eval_json(const EvalResult& r) {
  ordered_json j;
  j["P_FA"] = r.p_fa;
  j["P_MD"] = r.p_md;
  j["P_E"] = r.p_e;
  j["covers"] = r.covers;
  j["stegos"] = r.stegos;
  j["false_alarms"] = r.false_alarms;
  j["missed_detections"] = r.missed_detections;
  return j;
}

}  // namespace

std::string EvalResult::to_json() const { return eval_json(*this).dump(); }

std::string EvalReport::to_json() const {
  ordered_json j;
  j["snapshots"] = ordered_json::array();
  for (const auto& r : per_snapshot) j["snapshots"].push_back(eval_json(r));
  j["mean_P_FA"] = mean_p_fa;
  j["mean_P_MD"] = mean_p_md;
  j["mean_P_E"] = mean_p_e;
  return j.dump(2);
}

std::vector<int> predict(const NetworkGraph& net, const PairSet& set, std::size_t chunk_pairs) {
  if (chunk_pairs == 0) throw std::invalid_argument("predict: chunk_pairs must be positive");
  NetworkGraph local = net;
  std::vector<int> out;
  out.reserve(2 * set.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < set.size(); start += chunk_pairs) {
    idx.clear();
    for (std::size_t i = start; i < std::min(set.size(), start + chunk_pairs); ++i) idx.push_back(i);
    const Batch b = make_batch(set, idx);
    const ForwardResult r = local.forward(b.images, Mode::eval);
    for (std::size_t i = 0; i < b.labels.size(); ++i) out.push_back(argmax2(r.probabilities, i));
  }
  return out;
}

EvalResult evaluate(const NetworkGraph& net, const PairSet& test_set) {
  if (test_set.size() == 0) throw DataError("evaluate: the test split is empty");
  const std::vector<int> pred = predict(net, test_set);
  std::size_t fa = 0;
  std::size_t md = 0;
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    fa += pred[2 * i] == 1 ? 1 : 0;
    md += pred[2 * i + 1] == 0 ? 1 : 0;
  }
  return EvalResult::from_counts(test_set.size(), fa, test_set.size(), md);
}

EvalReport evaluate(const std::vector<NetworkGraph>& snapshots, const PairSet& test_set) {
  if (snapshots.empty()) throw std::invalid_argument("evaluate: no snapshots");
  if (test_set.size() == 0) throw DataError("evaluate: the test split is empty");
  EvalReport rep;
  for (const auto& s : snapshots) rep.per_snapshot.push_back(evaluate(s, test_set));
  for (const auto& r : rep.per_snapshot) {
    rep.mean_p_fa += r.p_fa;
    rep.mean_p_md += r.p_md;
    rep.mean_p_e += r.p_e;
  }
  const double n = static_cast<double>(rep.per_snapshot.size());
  rep.mean_p_fa /= n;
  rep.mean_p_md /= n;
  rep.mean_p_e /= n;
  return rep;
}

}  // namespace ynet
