#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ynet/ops.hpp"
#include "ynet/srm.hpp"

namespace ynet {

enum class LayerKind { preproc, conv, abs, bn, scale, trunc, relu, avgpool, globalpool, fc, softmax };

const char* to_string(LayerKind k);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::string name;
  std::size_t channels = 0;  // conv output channels / fc neurons
  std::size_t kernel = 0;    // conv kernel size
  int threshold = 0;         // trunc T
  PoolSpec pool{};           // avgpool
};

struct Param {
  std::string name;
  TensorF value;
  TensorF grad;
  std::vector<std::size_t> dims;  // logical dims written to checkpoints
  bool learnable = true;
  bool decay = true;       // weight decay applies
  bool persistent = true;  // stored in checkpoints
};

struct BnSettings {
  double eps = 1e-5;
  double stat_momentum = 0.9;
};

// A graph node. forward() caches what backward() needs; backward() returns
// the input gradient and overwrites the grads of this layer's params.
class Layer {
 public:
  explicit Layer(LayerSpec spec) : spec_(std::move(spec)) {}
  virtual ~Layer() = default;

  const LayerSpec& spec() const { return spec_; }
  LayerKind kind() const { return spec_.kind; }
  const std::string& name() const { return spec_.name; }

  virtual Shape4 output_shape(const Shape4& in) const = 0;
  virtual TensorF forward(const TensorF& x, Mode mode) = 0;
  virtual TensorF backward(const TensorF& grad_out) = 0;
  virtual std::unique_ptr<Layer> clone() const = 0;

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  virtual void clear_cache() {}

 protected:
  LayerSpec spec_;
  std::vector<Param> params_;
};

// `in` is the input shape seen at build time (batch dimension ignored).
std::unique_ptr<Layer> make_layer(const LayerSpec& spec, const Shape4& in, const FilterBank& bank,
                                  const BnSettings& bn);

}  // namespace ynet
