#include "ynet/layers.hpp"

#include <stdexcept>

namespace ynet {

const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::preproc: return "preproc";
    case LayerKind::conv: return "conv";
    case LayerKind::abs: return "abs";
    case LayerKind::bn: return "bn";
    case LayerKind::scale: return "scale";
    case LayerKind::trunc: return "trunc";
    case LayerKind::relu: return "relu";
    case LayerKind::avgpool: return "avgpool";
    case LayerKind::globalpool: return "globalpool";
    case LayerKind::fc: return "fc";
    case LayerKind::softmax: return "softmax";
  }
  return "?";
}

namespace {

Param make_param(std::string name, Shape4 shape, std::vector<std::size_t> dims, bool learnable, bool decay,
                 bool persistent) {
  Param p{std::move(name), TensorF(shape), TensorF(), std::move(dims), learnable, decay, persistent};
  if (learnable) p.grad = TensorF(shape);
  return p;
}

void check_batch(const TensorF& cached, const char* layer) {
  if (cached.empty()) throw std::logic_error(std::string(layer) + ": backward without a train-mode forward");
}

template <typename Derived>
class LayerBase : public Layer {
 public:
  using Layer::Layer;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Derived>(static_cast<const Derived&>(*this)); }
  void clear_cache() override { input_ = TensorF(); }

 protected:
  void remember(const TensorF& x, Mode mode) {
    if (mode == Mode::train) input_ = x;
  }
  TensorF input_;
};

class PreprocLayer final : public LayerBase<PreprocLayer> {
 public:
  PreprocLayer(LayerSpec spec, const FilterBank& bank) : LayerBase(std::move(spec)) {
    Param p = make_param(spec_.name + ".weight", {FilterBank::kCount, 1, 5, 5}, {FilterBank::kCount, 1, 5, 5},
                         false, false, false);
    p.value = bank.weights<float>();
    params_.push_back(std::move(p));
  }
  Shape4 output_shape(const Shape4& in) const override {
    if (in.c != 1) throw ShapeError("expected single-channel input, got " + std::to_string(in.c));
    return {in.n, FilterBank::kCount, in.h, in.w};
  }
  TensorF forward(const TensorF& x, Mode) override {
    if (x.shape().c != 1) throw ShapeError("preprocess: expected single-channel image");
    return conv2d(x, conv_params());
  }
  // The image has no gradient and the bank is fixed.
  TensorF backward(const TensorF&) override { return TensorF(); }

 private:
  ConvParams<float> conv_params() const { return {params_[0].value, 1, 2, false}; }
};

class ConvLayer final : public LayerBase<ConvLayer> {
 public:
  ConvLayer(LayerSpec spec, const Shape4& in) : LayerBase(std::move(spec)) {
    const std::size_t k = spec_.kernel;
    params_.push_back(make_param(spec_.name + ".weight", {spec_.channels, in.c, k, k}, {spec_.channels, in.c, k, k},
                                 true, true, true));
  }
  Shape4 output_shape(const Shape4& in) const override {
    const Shape4& ws = params_[0].value.shape();
    if (in.c != ws.c) throw ShapeError("input channels " + std::to_string(in.c) + " != " + std::to_string(ws.c));
    const std::size_t p = same_pad(spec_.kernel);
    return {in.n, ws.n, conv_out_dim(in.h, ws.h, 1, p), conv_out_dim(in.w, ws.w, 1, p)};
  }
  TensorF forward(const TensorF& x, Mode mode) override {
    remember(x, mode);
    return conv2d(x, conv_params());
  }
  TensorF backward(const TensorF& dy) override {
    check_batch(input_, "conv");
    ConvGrads<float> g = conv2d_backward(input_, conv_params(), dy, true);
    params_[0].grad = std::move(g.weights);
    return std::move(g.input);
  }

 private:
  // TODO: avoid the weight copy by letting ConvParams hold a view.
  ConvParams<float> conv_params() const { return {params_[0].value, 1, same_pad(spec_.kernel), true}; }
};

class AbsLayer final : public LayerBase<AbsLayer> {
 public:
  using LayerBase::LayerBase;
  Shape4 output_shape(const Shape4& in) const override { return in; }
  TensorF forward(const TensorF& x, Mode mode) override {
    remember(x, mode);
    return abs_layer(x);
  }
  TensorF backward(const TensorF& dy) override {
    check_batch(input_, "abs");
    return abs_backward(input_, dy);
  }
};

class ReluLayer final : public LayerBase<ReluLayer> {
 public:
  using LayerBase::LayerBase;
  Shape4 output_shape(const Shape4& in) const override { return in; }
  TensorF forward(const TensorF& x, Mode mode) override {
    remember(x, mode);
    return relu(x);
  }
  TensorF backward(const TensorF& dy) override {
    check_batch(input_, "relu");
    return relu_backward(input_, dy);
  }
};

class TruncLayer final : public LayerBase<TruncLayer> {
 public:
  explicit TruncLayer(LayerSpec spec) : LayerBase(std::move(spec)) {
    if (spec_.threshold < 1) throw std::invalid_argument("trunc threshold must be >= 1");
  }
  Shape4 output_shape(const Shape4& in) const override { return in; }
  TensorF forward(const TensorF& x, Mode mode) override {
    remember(x, mode);
    return trunc(x, TruncSpec{spec_.threshold});
  }
  TensorF backward(const TensorF& dy) override {
    check_batch(input_, "trunc");
    return trunc_backward(input_, dy, TruncSpec{spec_.threshold});
  }
};

// Running statistics live in non-learnable persistent params so that
// checkpoints carry them: running_mean (C), running_var (C), updates (1).
class BatchNormLayer final : public LayerBase<BatchNormLayer> {
 public:
  BatchNormLayer(LayerSpec spec, const Shape4& in, const BnSettings& bn) : LayerBase(std::move(spec)), bn_(bn) {
    params_.push_back(make_param(spec_.name + ".running_mean", {in.c, 1, 1, 1}, {in.c}, false, false, true));
    params_.push_back(make_param(spec_.name + ".running_var", {in.c, 1, 1, 1}, {in.c}, false, false, true));
    params_.push_back(make_param(spec_.name + ".updates", {1, 1, 1, 1}, {1}, false, false, true));
    params_[1].value.fill(1.0f);
  }
  Shape4 output_shape(const Shape4& in) const override {
    if (in.c != params_[0].value.size()) throw ShapeError("channel count does not match batch-norm state");
    return in;
  }
  TensorF forward(const TensorF& x, Mode mode) override {
    BnState<float> st(x.shape().c);
    st.eps = bn_.eps;
    st.stat_momentum = bn_.stat_momentum;
    st.mode = mode;
    auto& mean = params_[0].value;
    auto& var = params_[1].value;
    if (mean.size() != st.running_mean.size()) throw ShapeError(name() + ": channel count mismatch");
    std::copy(mean.data().begin(), mean.data().end(), st.running_mean.begin());
    std::copy(var.data().begin(), var.data().end(), st.running_var.begin());
    st.updates = static_cast<std::size_t>(params_[2].value[0]);
    TensorF y = batch_norm(x, st, mode == Mode::train ? &cache_ : nullptr);
    std::copy(st.running_mean.begin(), st.running_mean.end(), mean.data().begin());
    std::copy(st.running_var.begin(), st.running_var.end(), var.data().begin());
    params_[2].value[0] = static_cast<float>(st.updates);
    return y;
  }
  TensorF backward(const TensorF& dy) override {
    check_batch(cache_.normalized, "bn");
    return batch_norm_backward(dy, cache_);
  }
  void clear_cache() override { cache_ = BnCache<float>(); }

 private:
  BnSettings bn_;
  BnCache<float> cache_;
};

class ScaleLayer final : public LayerBase<ScaleLayer> {
 public:
  ScaleLayer(LayerSpec spec, const Shape4& in) : LayerBase(std::move(spec)) {
    params_.push_back(make_param(spec_.name + ".gamma", {in.c, 1, 1, 1}, {in.c}, true, true, true));
    params_.push_back(make_param(spec_.name + ".beta", {in.c, 1, 1, 1}, {in.c}, true, false, true));
    params_[0].value.fill(1.0f);
  }
  Shape4 output_shape(const Shape4& in) const override {
    if (in.c != params_[0].value.size()) throw ShapeError("channel count does not match scale parameters");
    return in;
  }
  TensorF forward(const TensorF& x, Mode mode) override {
    remember(x, mode);
    return scale<float>(x, params_[0].value.data(), params_[1].value.data());
  }
  TensorF backward(const TensorF& dy) override {
    check_batch(input_, "scale");
    ScaleGrads<float> g = scale_backward<float>(input_, params_[0].value.data(), dy);
    std::copy(g.gamma.begin(), g.gamma.end(), params_[0].grad.data().begin());
    std::copy(g.beta.begin(), g.beta.end(), params_[1].grad.data().begin());
    return std::move(g.input);
  }
};

class AvgPoolLayer final : public LayerBase<AvgPoolLayer> {
 public:
  using LayerBase::LayerBase;
  Shape4 output_shape(const Shape4& in) const override {
    const PoolSpec& s = spec_.pool;
    return {in.n, in.c, conv_out_dim(in.h, s.window, s.stride, s.pad), conv_out_dim(in.w, s.window, s.stride, s.pad)};
  }
  TensorF forward(const TensorF& x, Mode mode) override {
    shape_ = x.shape();
    (void)mode;
    return avg_pool(x, spec_.pool);
  }
  TensorF backward(const TensorF& dy) override { return avg_pool_backward(shape_, dy, spec_.pool); }

 private:
  Shape4 shape_{};
};

class GlobalPoolLayer final : public LayerBase<GlobalPoolLayer> {
 public:
  using LayerBase::LayerBase;
  Shape4 output_shape(const Shape4& in) const override { return {in.n, in.c, 1, 1}; }
  TensorF forward(const TensorF& x, Mode) override {
    shape_ = x.shape();
    return global_avg_pool(x);
  }
  TensorF backward(const TensorF& dy) override { return global_avg_pool_backward(shape_, dy); }

 private:
  Shape4 shape_{};
};

class DenseLayer final : public LayerBase<DenseLayer> {
 public:
  DenseLayer(LayerSpec spec, const Shape4& in) : LayerBase(std::move(spec)) {
    const std::size_t fan_in = in.sample();
    params_.push_back(make_param(spec_.name + ".weight", {spec_.channels, fan_in, 1, 1}, {spec_.channels, fan_in},
                                 true, true, true));
    params_.push_back(make_param(spec_.name + ".bias", {spec_.channels, 1, 1, 1}, {spec_.channels}, true, false, true));
  }
  Shape4 output_shape(const Shape4& in) const override {
    if (in.sample() != params_[0].value.shape().c) {
      throw ShapeError("input width " + std::to_string(in.sample()) + " != " +
                       std::to_string(params_[0].value.shape().c));
    }
    return {in.n, spec_.channels, 1, 1};
  }
  TensorF forward(const TensorF& x, Mode mode) override {
    remember(x, mode);
    return fully_connected<float>(x, params_[0].value, params_[1].value.data());
  }
  TensorF backward(const TensorF& dy) override {
    check_batch(input_, "fc");
    DenseGrads<float> g = fully_connected_backward(input_, params_[0].value, dy);
    params_[0].grad = std::move(g.weights);
    std::copy(g.bias.begin(), g.bias.end(), params_[1].grad.data().begin());
    return std::move(g.input);
  }
};

class SoftmaxLayer final : public LayerBase<SoftmaxLayer> {
 public:
  using LayerBase::LayerBase;
  Shape4 output_shape(const Shape4& in) const override { return in; }
  TensorF forward(const TensorF& x, Mode mode) override {
    TensorF p = softmax(x);
    if (mode == Mode::train) probs_ = p;
    return p;
  }
  // dz = p * (dy - <dy, p>) per row
  TensorF backward(const TensorF& dy) override {
    check_batch(probs_, "softmax");
    const std::size_t k = probs_.shape().sample();
    TensorF dz(probs_.shape());
    for (std::size_t i = 0; i < probs_.shape().n; ++i) {
      double inner = 0.0;
      for (std::size_t j = 0; j < k; ++j) inner += static_cast<double>(dy[i * k + j]) * probs_[i * k + j];
      for (std::size_t j = 0; j < k; ++j) {
        dz[i * k + j] = static_cast<float>(probs_[i * k + j] * (dy[i * k + j] - inner));
      }
    }
    return dz;
  }
  void clear_cache() override { probs_ = TensorF(); }

 private:
  TensorF probs_;
};

}  // namespace

std::unique_ptr<Layer> make_layer(const LayerSpec& spec, const Shape4& in, const FilterBank& bank,
                                  const BnSettings& bn) {
  switch (spec.kind) {
    case LayerKind::preproc: return std::make_unique<PreprocLayer>(spec, bank);
    case LayerKind::conv:
      if (spec.kernel != 3 && spec.kernel != 5) throw ShapeError("conv kernel must be 3 or 5");
      if (spec.channels == 0) throw ShapeError("conv needs a positive channel count");
      return std::make_unique<ConvLayer>(spec, in);
    case LayerKind::abs: return std::make_unique<AbsLayer>(spec);
    case LayerKind::bn: return std::make_unique<BatchNormLayer>(spec, in, bn);
    case LayerKind::scale: return std::make_unique<ScaleLayer>(spec, in);
    case LayerKind::trunc: return std::make_unique<TruncLayer>(spec);
    case LayerKind::relu: return std::make_unique<ReluLayer>(spec);
    case LayerKind::avgpool:
      if (spec.pool.window < 2) throw ShapeError("avgpool window must be >= 2");
      return std::make_unique<AvgPoolLayer>(spec);
    case LayerKind::globalpool: return std::make_unique<GlobalPoolLayer>(spec);
    case LayerKind::fc:
      if (spec.channels == 0) throw ShapeError("fc needs a positive neuron count");
      return std::make_unique<DenseLayer>(spec, in);
    case LayerKind::softmax: return std::make_unique<SoftmaxLayer>(spec);
  }
  throw std::invalid_argument("unknown layer kind");
}

}  // namespace ynet
