#include "ynet/network.hpp"

#include <cmath>
#include <random>
#include <set>
#include <sstream>

namespace ynet {

// ---------------------------------------------------------------------------
// YedroudjConfig

void YedroudjConfig::validate() const {
  for (std::size_t b = 0; b < 5; ++b) {
    const std::string layer = "block" + std::to_string(b + 1) + ".conv";
    if (widths[b] == 0) throw DataError(layer + ": width must be positive");
    if (kernels[b] != 3 && kernels[b] != 5) throw DataError(layer + ": kernel must be 3 or 5");
  }
  if (trunc_block1 < 1) throw DataError("block1.trunc: threshold must be >= 1");
  if (trunc_block2 < 1) throw DataError("block2.trunc: threshold must be >= 1");
  if (pool.window < 2 || pool.stride < 1 || pool.pad >= pool.window) {
    throw DataError("block2.pool: need window >= 2, stride >= 1, pad < window");
  }
  if (fc_widths.empty()) throw DataError("fc: at least one fully connected layer is required");
  for (std::size_t i = 0; i < fc_widths.size(); ++i) {
    if (fc_widths[i] == 0) throw DataError("fc" + std::to_string(i + 1) + ": width must be positive");
  }
  if (fc_widths.back() != 2) {
    throw DataError("fc" + std::to_string(fc_widths.size()) + ": final layer must have 2 outputs (cover, stego)");
  }
  if (input_size < 32) throw DataError("preproc: input_size must be >= 32");
  if (!(bn_eps > 0.0)) throw DataError("bn: eps must be positive");
  if (!(bn_momentum > 0.0 && bn_momentum < 1.0)) throw DataError("bn: momentum must be in (0,1)");
  if (!(input_scale > 0.0) || !std::isfinite(input_scale)) throw DataError("preproc: input_scale must be positive");
}

namespace {

template <typename C>
std::string join(const C& values) {
  std::string s;
  for (const auto& v : values) s += (s.empty() ? "" : ",") + std::to_string(v);
  return s;
}

}  // namespace

std::string YedroudjConfig::to_text() const {
  std::ostringstream os;
  os << "widths = " << join(widths) << '\n'
     << "kernels = " << join(kernels) << '\n'
     << "trunc_t1 = " << trunc_block1 << '\n'
     << "trunc_t2 = " << trunc_block2 << '\n'
     << "pool_window = " << pool.window << '\n'
     << "pool_stride = " << pool.stride << '\n'
     << "pool_pad = " << pool.pad << '\n'
     << "fc_widths = " << join(fc_widths) << '\n'
     << "input_size = " << input_size << '\n'
     << "bn_eps = " << format_double(bn_eps) << '\n'
     << "bn_momentum = " << format_double(bn_momentum) << '\n'
     << "input_scale = " << format_double(input_scale) << '\n';
  return os.str();
}

YedroudjConfig YedroudjConfig::from_kv(const KeyValueConfig& kv) {
  YedroudjConfig c;
  auto unsigned_list = [&kv](const std::string& key, auto fallback) {
    std::vector<long long> def(fallback.begin(), fallback.end());
    std::vector<long long> v = kv.get_int_list(key, def);
    std::vector<std::size_t> out;
    for (long long x : v) {
      if (x < 0) throw DataError("config: '" + key + "' entries must be non-negative");
      out.push_back(static_cast<std::size_t>(x));
    }
    return out;
  };
  auto non_negative = [&kv](const std::string& key, std::size_t fallback) {
    const long long v = kv.get_int(key, static_cast<long long>(fallback));
    if (v < 0) throw DataError("config: '" + key + "' must be non-negative");
    return static_cast<std::size_t>(v);
  };
  const auto w = unsigned_list("widths", c.widths);
  const auto k = unsigned_list("kernels", c.kernels);
  if (w.size() != 5 || k.size() != 5) throw DataError("config: 'widths' and 'kernels' need exactly 5 entries");
  std::copy(w.begin(), w.end(), c.widths.begin());
  std::copy(k.begin(), k.end(), c.kernels.begin());
  c.trunc_block1 = static_cast<int>(kv.get_int("trunc_t1", c.trunc_block1));
  c.trunc_block2 = static_cast<int>(kv.get_int("trunc_t2", c.trunc_block2));
  c.pool.window = non_negative("pool_window", c.pool.window);
  c.pool.stride = non_negative("pool_stride", c.pool.stride);
  c.pool.pad = non_negative("pool_pad", c.pool.pad);
  c.fc_widths = unsigned_list("fc_widths", c.fc_widths);
  c.input_size = non_negative("input_size", c.input_size);
  c.bn_eps = kv.get_double("bn_eps", c.bn_eps);
  c.bn_momentum = kv.get_double("bn_momentum", c.bn_momentum);
  c.input_scale = kv.get_double("input_scale", c.input_scale);
  kv.reject_unconsumed("network config");
  c.validate();
  return c;
}

YedroudjConfig YedroudjConfig::from_text(std::string_view text) { return from_kv(KeyValueConfig::parse(text)); }

std::vector<LayerSpec> yedroudj_layers(const YedroudjConfig& cfg) {
  std::vector<LayerSpec> s;
  s.push_back({LayerKind::preproc, "preproc"});
  for (std::size_t b = 0; b < 5; ++b) {
    const std::string p = "block" + std::to_string(b + 1) + ".";
    s.push_back({LayerKind::conv, p + "conv", cfg.widths[b], cfg.kernels[b]});
    if (b == 0) s.push_back({LayerKind::abs, p + "abs"});
    s.push_back({LayerKind::bn, p + "bn"});
    s.push_back({LayerKind::scale, p + "scale"});
    if (b < 2) {
      LayerSpec t{LayerKind::trunc, p + "trunc"};
      t.threshold = b == 0 ? cfg.trunc_block1 : cfg.trunc_block2;
      s.push_back(t);
    } else {
      s.push_back({LayerKind::relu, p + "relu"});
    }
    if (b == 4) {
      s.push_back({LayerKind::globalpool, p + "gap"});
    } else if (b > 0) {
      LayerSpec pool{LayerKind::avgpool, p + "pool"};
      pool.pool = cfg.pool;
      s.push_back(pool);
    }
  }
  for (std::size_t i = 0; i < cfg.fc_widths.size(); ++i) {
    const std::string name = "fc" + std::to_string(i + 1);
    s.push_back({LayerKind::fc, name, cfg.fc_widths[i]});
    if (i + 1 < cfg.fc_widths.size()) s.push_back({LayerKind::relu, name + ".relu"});
  }
  s.push_back({LayerKind::softmax, "softmax"});
  return s;
}

NetworkGraph build_yedroudj(const YedroudjConfig& cfg) {
  cfg.validate();
  NetworkGraph g(Shape4{1, 1, cfg.input_size, cfg.input_size}, yedroudj_layers(cfg), {cfg.bn_eps, cfg.bn_momentum});
  g.set_config(cfg);
  return g;
}

// ---------------------------------------------------------------------------
// NetworkGraph

NetworkGraph::NetworkGraph(const Shape4& input, const std::vector<LayerSpec>& specs, const BnSettings& bn) {
  if (specs.size() < 2) throw ShapeError("network needs at least a preproc and a softmax layer");
  const FilterBank bank = build_filter_bank();
  std::set<std::string> names;
  Shape4 shape{1, input.c, input.h, input.w};
  for (std::size_t i = 0; i < specs.size(); ++i) {
    LayerSpec spec = specs[i];
    if (spec.name.empty()) spec.name = std::string(to_string(spec.kind)) + std::to_string(i);
    const std::string where = "layer '" + spec.name + "' (" + to_string(spec.kind) + ")";
    if (!names.insert(spec.name).second) throw ShapeError(where + ": duplicate layer name");
    if ((spec.kind == LayerKind::preproc) != (i == 0)) {
      throw ShapeError(where + ": exactly one preproc layer is allowed and it must come first");
    }
    if ((spec.kind == LayerKind::softmax) != (i + 1 == specs.size())) {
      throw ShapeError(where + ": exactly one softmax layer is allowed and it must come last");
    }
    try {
      if (spec.kind == LayerKind::softmax && (shape.h != 1 || shape.w != 1)) {
        throw ShapeError("softmax needs a (classes, 1, 1) input, got " + shape.str());
      }
      auto layer = make_layer(spec, shape, bank, bn);
      shape = layer->output_shape(shape);
      layers_.push_back(std::move(layer));
    } catch (const std::invalid_argument& e) {
      throw ShapeError(where + ": " + e.what());
    }
  }
}

NetworkGraph::NetworkGraph(const NetworkGraph& other)
    : config_(other.config_), labels_(other.labels_), probs_(other.probs_),
      ready_for_backward_(other.ready_for_backward_) {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

NetworkGraph& NetworkGraph::operator=(const NetworkGraph& other) {
  if (this != &other) {
    NetworkGraph tmp(other);
    *this = std::move(tmp);
  }
  return *this;
}

std::vector<LayerKind> NetworkGraph::kinds() const {
  std::vector<LayerKind> k;
  for (const auto& l : layers_) k.push_back(l->kind());
  return k;
}

const Layer* NetworkGraph::find(const std::string& name) const {
  for (const auto& l : layers_) {
    if (l->name() == name) return l.get();
  }
  return nullptr;
}

std::vector<Shape4> NetworkGraph::shape_trace(const Shape4& input) const {
  std::vector<Shape4> trace;
  Shape4 s = input;
  for (const auto& l : layers_) {
    try {
      s = l->output_shape(s);
    } catch (const std::invalid_argument& e) {
      throw ShapeError("layer '" + l->name() + "': " + e.what());
    }
    trace.push_back(s);
  }
  return trace;
}

ForwardResult NetworkGraph::forward(const TensorF& batch, Mode mode, std::span<const int> labels) {
  const Shape4& s = batch.shape();
  if (s.c != 1) throw ShapeError("forward: expected (n, 1, h, w) batch, got " + s.str());
  if (s.h < 32 || s.w < 32) throw ShapeError("forward: input " + s.str() + " is smaller than 32x32");
  if (s.n == 0) throw ShapeError("forward: empty batch");
  shape_trace(s);
  ready_for_backward_ = false;

  TensorF x;
  if (config_ && config_->input_scale != 1.0) {
    TensorF scaled = batch;
    const float f = static_cast<float>(config_->input_scale);
    for (auto& v : scaled.data()) v *= f;
    x = layers_.front()->forward(scaled, mode);
  } else {
    x = layers_.front()->forward(batch, mode);
  }
  for (std::size_t i = 1; i + 1 < layers_.size(); ++i) x = layers_[i]->forward(x, mode);

  ForwardResult r;
  if (labels.empty()) {
    r.probabilities = layers_.back()->forward(x, Mode::eval);
    return r;
  }
  SoftmaxXent<float> sx = softmax_xent<float>(x, labels);
  r.loss = sx.loss;
  r.probabilities = std::move(sx.probabilities);
  if (mode == Mode::train) {
    labels_.assign(labels.begin(), labels.end());
    probs_ = r.probabilities;
    ready_for_backward_ = true;
  }
  return r;
}

void NetworkGraph::backward() {
  if (!ready_for_backward_) throw std::logic_error("backward: no train-mode forward with labels");
  TensorF g = softmax_xent_backward<float>(probs_, labels_);
  // layer 0 is the fixed filter bank applied to the image: nothing to propagate
  for (std::size_t i = layers_.size() - 1; i-- > 1;) g = layers_[i]->backward(g);
  ready_for_backward_ = false;
}

void NetworkGraph::clear_caches() {
  for (auto& l : layers_) l->clear_cache();
  probs_ = TensorF();
  labels_.clear();
  ready_for_backward_ = false;
}

std::vector<Param*> NetworkGraph::params() {
  std::vector<Param*> out;
  for (auto& l : layers_) {
    for (auto& p : l->params()) out.push_back(&p);
  }
  return out;
}

std::vector<const Param*> NetworkGraph::params() const {
  std::vector<const Param*> out;
  for (const auto& l : layers_) {
    for (const auto& p : l->params()) out.push_back(&p);
  }
  return out;
}

ParameterCount NetworkGraph::parameter_count() const {
  ParameterCount c;
  for (const auto& l : layers_) {
    for (const auto& p : l->params()) {
      if (!p.learnable) continue;
      c.total_learnable += p.value.size();
      if (l->kind() == LayerKind::conv || l->kind() == LayerKind::fc) c.learnable_excl_bn_scale += p.value.size();
    }
  }
  return c;
}

void NetworkGraph::init_xavier(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  for (auto& l : layers_) {
    auto& ps = l->params();
    switch (l->kind()) {
      case LayerKind::conv:
      case LayerKind::fc: {
        const Shape4& s = ps[0].value.shape();  // (out, in, k, k) or (out, in, 1, 1)
        const double fan_in = static_cast<double>(s.c * s.h * s.w);
        const double fan_out = static_cast<double>(s.n * s.h * s.w);
        std::normal_distribution<double> d(0.0, std::sqrt(2.0 / (fan_in + fan_out)));
        for (auto& v : ps[0].value.data()) v = static_cast<float>(d(gen));
        if (l->kind() == LayerKind::fc) ps[1].value.fill(0.0f);
        break;
      }
      case LayerKind::scale:
        ps[0].value.fill(1.0f);
        ps[1].value.fill(0.0f);
        break;
      default:
        break;
    }
  }
}

}  // namespace ynet
