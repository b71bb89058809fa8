#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ynet/config.hpp"
#include "ynet/layers.hpp"

namespace ynet {

// Width plan and hyperparameters of the five-block steganalysis network.
struct YedroudjConfig {
  std::array<std::size_t, 5> widths{30, 30, 32, 64, 256};
  std::array<std::size_t, 5> kernels{5, 5, 3, 3, 3};
  int trunc_block1 = 3;
  int trunc_block2 = 2;
  PoolSpec pool{5, 2, 2};
  std::vector<std::size_t> fc_widths{256, 1024, 2};
  std::size_t input_size = 256;
  double bn_eps = 1e-5;
  double bn_momentum = 0.9;
  // Raw pixel values are multiplied by this before the filter bank.
  double input_scale = 1.0;

  void validate() const;
  // Canonical key-value text, stable field order.
  std::string to_text() const;
  static YedroudjConfig from_text(std::string_view text);
  static YedroudjConfig from_kv(const KeyValueConfig& kv);

  bool operator==(const YedroudjConfig&) const = default;
};

struct ParameterCount {
  std::size_t learnable_excl_bn_scale = 0;  // conv + fc
  std::size_t total_learnable = 0;          // conv + fc + scale
};

struct ForwardResult {
  TensorF probabilities;  // (n, classes, 1, 1)
  double loss = 0.0;      // mean cross-entropy, only when labels were given
};

class NetworkGraph {
 public:
  // Validates layer placement and shape compatibility for `input`
  // (channels, height, width; the batch dimension is ignored).
  NetworkGraph(const Shape4& input, const std::vector<LayerSpec>& specs, const BnSettings& bn = {});

  NetworkGraph(const NetworkGraph& other);
  NetworkGraph& operator=(const NetworkGraph& other);
  NetworkGraph(NetworkGraph&&) noexcept = default;
  NetworkGraph& operator=(NetworkGraph&&) noexcept = default;

  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }
  std::vector<LayerKind> kinds() const;
  const Layer* find(const std::string& name) const;

  // Output shape of every layer for the given input.
  std::vector<Shape4> shape_trace(const Shape4& input) const;

  // Probabilities; with labels also the loss. Train mode keeps the buffers
  // backward() needs.
  ForwardResult forward(const TensorF& batch, Mode mode, std::span<const int> labels = {});

  // Backpropagates the loss of the last train-mode forward with labels and
  // leaves the gradients in the learnable params.
  void backward();
  void clear_caches();

  std::vector<Param*> params();
  std::vector<const Param*> params() const;
  ParameterCount parameter_count() const;

  void init_xavier(std::uint64_t seed);

  const std::optional<YedroudjConfig>& config() const { return config_; }
  void set_config(YedroudjConfig cfg) { config_ = std::move(cfg); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
  std::optional<YedroudjConfig> config_;
  std::vector<int> labels_;
  TensorF probs_;
  bool ready_for_backward_ = false;
};

std::vector<LayerSpec> yedroudj_layers(const YedroudjConfig& cfg);
NetworkGraph build_yedroudj(const YedroudjConfig& cfg = {});

// Checkpoint file: "YNET", u32 version, u32-length-prefixed config text,
// u32 record count, records (u32 name length, name, u32 rank, u32 dims,
// f32 payload), trailing CRC32. All integers and floats little-endian.
class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { bad_magic, version_mismatch, truncated, checksum_mismatch, shape_mismatch, missing_parameter,
                    unknown_parameter, no_config };
  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> save_checkpoint(const NetworkGraph& g);
NetworkGraph load_checkpoint(std::span<const std::uint8_t> bytes);

void write_checkpoint_file(const NetworkGraph& g, const std::string& path);
NetworkGraph read_checkpoint_file(const std::string& path);

}  // namespace ynet
