#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ynet/config.hpp"
#include "ynet/datapipe.hpp"
#include "ynet/network.hpp"

namespace ynet {

struct TrainConfig {
  double lr0 = 0.01;
  double gamma = 0.1;
  double step_fraction = 0.1;  // of max_epochs
  double momentum = 0.95;
  double weight_decay = 1e-4;
  std::size_t batch = 16;
  std::size_t max_epochs = 900;
  std::uint64_t seed = 1;
  std::size_t snapshot_window = 5;
  bool early_stop = false;
  std::size_t patience = 50;
  std::size_t workers = 1;

  void validate() const;
  std::string to_text() const;
  static TrainConfig from_text(std::string_view text);
  static TrainConfig from_kv(const KeyValueConfig& kv);

  bool operator==(const TrainConfig&) const = default;
};

// lr0 * gamma^floor(epoch / (step_fraction * max_epochs)).
double lr_schedule(const TrainConfig& cfg, std::size_t epoch);

// Momentum buffers, one per learnable parameter, in params() order.
struct SgdState {
  std::vector<TensorF> velocity;
};

// v <- momentum * v + lr * (g + wd * w); w <- w - v. Parameters that are
// not learnable are skipped; wd is 0 for parameters with decay == false.
void sgd_step(std::span<Param* const> params, SgdState& state, const TrainConfig& cfg, double lr);

struct MetricsRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;  // argmax accuracy of the train-mode forwards
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double lr = 0.0;
  double wall_time = 0.0;  // seconds since the start of the run

  // One JSON object without wall_time, so the log is reproducible.
  std::string to_json() const;
  std::string timing_json() const;
};

struct TrainResult {
  NetworkGraph final_net;
  NetworkGraph snapshot_min;  // minimum val loss within the trailing window
  NetworkGraph snapshot_max;  // maximum val loss within the trailing window
  std::size_t snapshot_min_epoch = 0;
  std::size_t snapshot_max_epoch = 0;
  std::vector<MetricsRecord> metrics;
  bool early_stopped = false;
};

using EpochCallback = std::function<void(const MetricsRecord&)>;

// Trains `net` in place. Deterministic given cfg.seed and the data.
TrainResult train(NetworkGraph& net, const PairSet& train_set, const PairSet& val_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});
TrainResult train(NetworkGraph& net, const DatasetManifest& manifest, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

struct EvalResult {
  std::size_t covers = 0;
  std::size_t stegos = 0;
  std::size_t false_alarms = 0;       // covers classified as stego
  std::size_t missed_detections = 0;  // stegos classified as cover
  double p_fa = 0.0;
  double p_md = 0.0;
  double p_e = 0.0;

  static EvalResult from_counts(std::size_t covers, std::size_t false_alarms, std::size_t stegos,
                                std::size_t missed_detections);
  std::string to_json() const;
};

struct EvalReport {
  std::vector<EvalResult> per_snapshot;
  double mean_p_fa = 0.0;
  double mean_p_md = 0.0;
  double mean_p_e = 0.0;

  std::string to_json() const;
};

// Class predictions (argmax) of every image in eval mode; covers and stegos
// interleaved as in make_batch. Does not modify the network.
std::vector<int> predict(const NetworkGraph& net, const PairSet& set, std::size_t chunk_pairs = 8);

EvalResult evaluate(const NetworkGraph& net, const PairSet& test_set);
EvalReport evaluate(const std::vector<NetworkGraph>& snapshots, const PairSet& test_set);

}  // namespace ynet
