#include "ynet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "ynet/ops.hpp"

namespace ynet {

double GradReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& g : groups) m = std::max(m, g.max_rel_error);
  return m;
}

GradReport check_gradients(std::string op, std::vector<GradGroup> groups, const std::function<double()>& loss,
                           const GradCheckOptions& opt) {
  GradReport report{std::move(op), opt.tol, {}};
  for (auto& g : groups) {
    if (g.analytic.size() != g.values.size()) {
      throw std::invalid_argument("check_gradients: group " + g.name + " has mismatched analytic gradient");
    }
    GradGroupReport gr;
    gr.name = g.name;
    std::vector<GradOffender> all;
    for (std::size_t i = 0; i < g.values.size(); ++i) {
      const double orig = g.values[i];
      if (g.near_kink && g.near_kink(orig)) {
        ++gr.skipped;
        continue;
      }
      g.values[i] = orig + opt.step;
      const double up = loss();
      g.values[i] = orig - opt.step;
      const double down = loss();
      g.values[i] = orig;
      const double numeric = (up - down) / (2.0 * opt.step);
      const double a = g.analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), opt.rel_floor});
      const double err = std::abs(a - numeric) / denom;
      all.push_back({i, a, numeric, err});
      gr.max_rel_error = std::max(gr.max_rel_error, err);
      ++gr.checked;
    }
    std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) { return x.rel_error > y.rel_error; });
    all.resize(std::min(all.size(), opt.keep_worst));
    gr.worst = std::move(all);
    report.groups.push_back(std::move(gr));
  }
  return report;
}

namespace {

struct Rng {
  std::mt19937_64 gen;
  explicit Rng(std::uint64_t seed) : gen(seed) {}
  TensorD uniform(Shape4 s, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    TensorD t(s);
    for (auto& v : t.data()) v = d(gen);
    return t;
  }
  std::vector<double> vec(std::size_t n, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = d(gen);
    return v;
  }
};

double dot(const TensorD& a, const TensorD& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> to_vec(const TensorD& t) { return {t.data().begin(), t.data().end()}; }

// Loss L = <f(x), r> for a fixed random projection r.
template <typename Fwd, typename Bwd>
GradReport check_unary(const std::string& name, TensorD x, Rng& rng, Fwd fwd, Bwd bwd, const GradCheckOptions& opt,
                       std::function<bool(double)> kink = {}) {
  const TensorD probe = fwd(x);
  const TensorD r = rng.uniform(probe.shape(), -1.0, 1.0);
  std::vector<GradGroup> groups;
  groups.push_back({"input", x.data(), to_vec(bwd(x, r)), std::move(kink)});
  return check_gradients(name, std::move(groups), [&] { return dot(fwd(x), r); }, opt);
}

bool near(double v, double point, double margin) { return std::abs(v - point) < margin; }

}  // namespace

std::vector<GradReport> run_gradcheck_suite(const GradCheckOptions& opt, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradReport> out;
  const double margin = opt.kink_margin * opt.step;

  {  // conv2d, 5x5 with SAME padding so border taps are exercised
    TensorD x = rng.uniform({2, 3, 7, 7}, -1.0, 1.0);
    ConvParams<double> p{rng.uniform({4, 3, 5, 5}, -0.5, 0.5), 1, 2, true};
    const TensorD r = rng.uniform(conv2d(x, p).shape(), -1.0, 1.0);
    const ConvGrads<double> g = conv2d_backward(x, p, r);
    std::vector<GradGroup> groups;
    groups.push_back({"input", x.data(), to_vec(g.input), {}});
    groups.push_back({"weights", p.weights.data(), to_vec(g.weights), {}});
    out.push_back(check_gradients("conv2d", std::move(groups), [&] { return dot(conv2d(x, p), r); }, opt));
  }
  out.push_back(check_unary(
      "abs", rng.uniform({2, 3, 4, 4}, -1.0, 1.0), rng, [](const TensorD& x) { return abs_layer(x); },
      [](const TensorD& x, const TensorD& r) { return abs_backward(x, r); }, opt,
      [margin](double v) { return near(v, 0.0, margin); }));
  {
    const TruncSpec ts{2};
    out.push_back(check_unary(
        "trunc", rng.uniform({2, 3, 4, 4}, -4.0, 4.0), rng, [ts](const TensorD& x) { return trunc(x, ts); },
        [ts](const TensorD& x, const TensorD& r) { return trunc_backward(x, r, ts); }, opt,
        [margin](double v) { return near(v, 2.0, margin) || near(v, -2.0, margin); }));
  }
  out.push_back(check_unary(
      "relu", rng.uniform({2, 3, 4, 4}, -1.0, 1.0), rng, [](const TensorD& x) { return relu(x); },
      [](const TensorD& x, const TensorD& r) { return relu_backward(x, r); }, opt,
      [margin](double v) { return near(v, 0.0, margin); }));
  {  // train mode: the gradient flows through the batch mean and variance
    const BnState<double> init(3);
    auto fwd = [&init](const TensorD& x) {
      BnState<double> st = init;
      return batch_norm(x, st);
    };
    auto bwd = [&init](const TensorD& x, const TensorD& r) {
      BnState<double> st = init;
      BnCache<double> cache;
      batch_norm(x, st, &cache);
      return batch_norm_backward(r, cache);
    };
    out.push_back(check_unary("batch_norm", rng.uniform({3, 3, 4, 4}, -2.0, 2.0), rng, fwd, bwd, opt));
  }
  {
    TensorD x = rng.uniform({2, 3, 4, 5}, -1.0, 1.0);
    std::vector<double> gamma = rng.vec(3, 0.5, 1.5);
    std::vector<double> beta = rng.vec(3, -0.5, 0.5);
    auto fwd = [&] { return scale<double>(x, gamma, beta); };
    const TensorD r = rng.uniform(x.shape(), -1.0, 1.0);
    ScaleGrads<double> g = scale_backward<double>(x, gamma, r);
    std::vector<GradGroup> groups;
    groups.push_back({"input", x.data(), to_vec(g.input), {}});
    groups.push_back({"gamma", gamma, g.gamma, {}});
    groups.push_back({"beta", beta, g.beta, {}});
    out.push_back(check_gradients("scale", std::move(groups), [&] { return dot(fwd(), r); }, opt));
  }
  {
    const PoolSpec ps{5, 2, 2};
    out.push_back(check_unary(
        "avg_pool", rng.uniform({2, 2, 7, 8}, -1.0, 1.0), rng, [ps](const TensorD& x) { return avg_pool(x, ps); },
        [ps](const TensorD& x, const TensorD& r) { return avg_pool_backward(x.shape(), r, ps); }, opt));
  }
  out.push_back(check_unary(
      "global_avg_pool", rng.uniform({2, 3, 5, 4}, -1.0, 1.0), rng,
      [](const TensorD& x) { return global_avg_pool(x); },
      [](const TensorD& x, const TensorD& r) { return global_avg_pool_backward(x.shape(), r); }, opt));
  {
    TensorD x = rng.uniform({3, 4, 2, 2}, -1.0, 1.0);
    TensorD w = rng.uniform({5, 16, 1, 1}, -0.5, 0.5);
    std::vector<double> b = rng.vec(5, -0.5, 0.5);
    const TensorD r = rng.uniform({3, 5, 1, 1}, -1.0, 1.0);
    DenseGrads<double> g = fully_connected_backward(x, w, r);
    std::vector<GradGroup> groups;
    groups.push_back({"input", x.data(), to_vec(g.input), {}});
    groups.push_back({"weights", w.data(), to_vec(g.weights), {}});
    groups.push_back({"bias", b, g.bias, {}});
    out.push_back(check_gradients("fully_connected", std::move(groups),
                                  [&] { return dot(fully_connected<double>(x, w, b), r); }, opt));
  }
  {
    TensorD z = rng.uniform({4, 2, 1, 1}, -2.0, 2.0);
    const std::vector<int> labels{0, 1, 1, 0};
    const SoftmaxXent<double> fx = softmax_xent<double>(z, labels);
    std::vector<GradGroup> groups;
    groups.push_back({"logits", z.data(), to_vec(softmax_xent_backward<double>(fx.probabilities, labels)), {}});
    out.push_back(check_gradients("softmax_xent", std::move(groups),
                                  [&] { return softmax_xent<double>(z, labels).loss; }, opt));
  }
  return out;
}

std::string format_report(const GradReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-16s %s max_rel_err=%.3e tol=%.1e", r.op.c_str(), r.pass() ? "PASS" : "FAIL",
                r.max_rel_error(), r.tol);
  std::string s = buf;
  for (const auto& g : r.groups) {
    std::snprintf(buf, sizeof buf, "\n    %-8s checked=%zu skipped=%zu max_rel_err=%.3e", g.name.c_str(), g.checked,
                  g.skipped, g.max_rel_error);
    s += buf;
    if (!r.pass()) {
      for (const auto& w : g.worst) {
        std::snprintf(buf, sizeof buf, "\n      [%zu] analytic=%.9g numeric=%.9g rel=%.3e", w.index, w.analytic,
                      w.numeric, w.rel_error);
        s += buf;
      }
    }
  }
  return s;
}

}  // namespace ynet
