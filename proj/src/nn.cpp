#include "emsrl/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>

namespace emsrl::nn {

// ---------------------------------------------------------------------------
// ParameterStore

std::string ParameterStore::qualified(const std::string& name) const {
  return scope_ + "/" + name;
}

const ParameterStore::Entry& ParameterStore::entry(
    const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw std::out_of_range("ParameterStore '" + scope_ +
                            "': no parameter named '" + name + "'");
  }
  return it->second;
}

ParameterStore::Entry& ParameterStore::entry(const std::string& name) {
  return const_cast<Entry&>(std::as_const(*this).entry(name));
}

void ParameterStore::add(const std::string& name, Tensor init) {
  if (entries_.contains(name)) {
    throw std::invalid_argument("ParameterStore '" + scope_ +
                                "': duplicate parameter '" + name + "'");
  }
  Entry e;
  e.grad = Tensor::zeros_like(init);
  e.m = Tensor::zeros_like(init);
  e.v = Tensor::zeros_like(init);
  e.value = std::move(init);
  entries_.emplace(name, std::move(e));
}

bool ParameterStore::contains(const std::string& name) const {
  return entries_.contains(name);
}

const Tensor& ParameterStore::value(const std::string& name) const {
  return entry(name).value;
}

Tensor& ParameterStore::value(const std::string& name) {
  return entry(name).value;
}

const Tensor& ParameterStore::grad(const std::string& name) const {
  return entry(name).grad;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) n += e.value.size();
  return n;
}

void ParameterStore::set_bounds(const std::string& name, double lo, double hi) {
  Entry& e = entry(name);
  e.lo = lo;
  e.hi = hi;
  for (double& v : e.value.values()) v = std::clamp(v, lo, hi);
}

void ParameterStore::apply_bounds() {
  for (auto& [name, e] : entries_) {
    for (double& v : e.value.values()) v = std::clamp(v, e.lo, e.hi);
  }
}

Var ParameterStore::bind(Graph& graph, const std::string& name) const {
  return graph.parameter(qualified(name), entry(name).value);
}

void ParameterStore::accumulate_gradients(const Graph& graph) {
  const std::string prefix = scope_ + "/";
  for (const auto& [qname, g] : graph.parameter_gradients()) {
    if (!qname.starts_with(prefix)) continue;
    auto it = entries_.find(qname.substr(prefix.size()));
    if (it == entries_.end()) continue;
    auto dst = it->second.grad.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
  }
}

void ParameterStore::add_gradients(const ParameterStore& other) {
  for (auto& [name, e] : entries_) {
    const Tensor& g = other.grad(name);
    for (std::size_t i = 0; i < g.size(); ++i) e.grad[i] += g[i];
  }
}

void ParameterStore::zero_grad() {
  for (auto& [name, e] : entries_) {
    std::fill(e.grad.values().begin(), e.grad.values().end(), 0.0);
  }
}

double ParameterStore::gradient_norm() const {
  double acc = 0.0;
  for (const auto& [name, e] : entries_) {
    for (double g : e.grad.values()) acc += g * g;
  }
  return std::sqrt(acc);
}

void ParameterStore::scale_gradients(double factor) {
  for (auto& [name, e] : entries_) {
    for (double& g : e.grad.values()) g *= factor;
  }
}

bool ParameterStore::gradients_finite() const {
  return std::all_of(entries_.begin(), entries_.end(),
                     [](const auto& kv) { return kv.second.grad.all_finite(); });
}

std::uint64_t ParameterStore::checksum() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t word) {
    for (int i = 0; i < 8; ++i) {
      h ^= (word >> (8 * i)) & 0xffu;
      h *= 1099511628211ull;
    }
  };
  for (const auto& [name, e] : entries_) {
    for (char c : name) mix(static_cast<unsigned char>(c));
    for (double v : e.value.values()) mix(std::bit_cast<std::uint64_t>(v));
  }
  return h;
}

bool ParameterStore::same_values(const ParameterStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (const auto& [name, e] : entries_) {
    auto it = other.entries_.find(name);
    if (it == other.entries_.end() || !(it->second.value == e.value)) {
      return false;
    }
  }
  return true;
}

std::vector<std::pair<std::string, Tensor*>>
ParameterStore::grad_check_params() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (auto& [name, e] : entries_) out.emplace_back(qualified(name), &e.value);
  return out;
}

// ---------------------------------------------------------------------------
// Adam

void Adam::step(ParameterStore& store, double learning_rate,
                const AdamOptions& options) {
  for (const auto& [name, e] : store.entries_) {
    if (!e.grad.all_finite()) {
      throw std::runtime_error("optimizer_step: non-finite gradient in '" +
                               store.scope_ + "/" + name + "'");
    }
  }
  ++store.steps_;
  const double t = static_cast<double>(store.steps_);
  const double c1 = 1.0 - std::pow(options.beta1, t);
  const double c2 = 1.0 - std::pow(options.beta2, t);
  for (auto& [name, e] : store.entries_) {
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double g = e.grad[i];
      e.m[i] = options.beta1 * e.m[i] + (1.0 - options.beta1) * g;
      e.v[i] = options.beta2 * e.v[i] + (1.0 - options.beta2) * g * g;
      const double m_hat = e.m[i] / c1;
      const double v_hat = e.v[i] / c2;
      e.value[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + options.epsilon);
      e.grad[i] = 0.0;
    }
  }
  store.apply_bounds();
}

void optimizer_step(ParameterStore& store, double learning_rate,
                    const AdamOptions& options) {
  Adam::step(store, learning_rate, options);
}

// ---------------------------------------------------------------------------
// Initialization

Tensor glorot_uniform(std::size_t fan_out, std::size_t fan_in, Rng& rng) {
  const double limit =
      std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor w({fan_out, fan_in});
  for (double& v : w.values()) v = dist(rng);
  return w;
}

// ---------------------------------------------------------------------------
// MLP

void MlpSpec::validate() const {
  if (widths.size() < 2) {
    throw std::invalid_argument("MlpSpec: need at least input and output widths");
  }
  for (std::size_t w : widths) {
    if (w == 0) throw std::invalid_argument("MlpSpec: zero layer width");
  }
}

namespace {

std::string layer_name(std::string_view prefix, std::size_t layer,
                       const char* kind) {
  return std::string(prefix) + ".l" + std::to_string(layer) + "." + kind;
}

}  // namespace

void init_mlp(ParameterStore& store, const MlpSpec& spec, Rng& rng,
              std::string_view prefix) {
  spec.validate();
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    store.add(layer_name(prefix, l, "w"),
              glorot_uniform(spec.widths[l + 1], spec.widths[l], rng));
    store.add(layer_name(prefix, l, "b"), Tensor::zeros({spec.widths[l + 1]}));
  }
}

MlpVars bind_mlp(Graph& graph, const ParameterStore& store,
                 const MlpSpec& spec, std::string_view prefix) {
  spec.validate();
  MlpVars vars;
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    vars.weights.push_back(store.bind(graph, layer_name(prefix, l, "w")));
    vars.biases.push_back(store.bind(graph, layer_name(prefix, l, "b")));
    const Tensor& w = graph.value(vars.weights.back());
    if (w.rows() != spec.widths[l + 1] || w.cols() != spec.widths[l]) {
      throw std::invalid_argument("bind_mlp: layer " + std::to_string(l) +
                                  " has shape " + w.shape_string() +
                                  " but spec expects [" +
                                  std::to_string(spec.widths[l + 1]) + "," +
                                  std::to_string(spec.widths[l]) + "]");
    }
  }
  return vars;
}

Var mlp_forward(Graph& graph, const MlpVars& vars, const MlpSpec& spec, Var x) {
  const std::size_t width = graph.value(x).size();
  if (graph.value(x).rank() != 1 || width != spec.input_width()) {
    throw std::invalid_argument(
        "mlp_forward: input shape " + graph.value(x).shape_string() +
        " does not match input width " + std::to_string(spec.input_width()));
  }
  Var h = x;
  const std::size_t layers = vars.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    h = graph.add(graph.matvec(vars.weights[l], h), vars.biases[l]);
    if (l + 1 < layers) h = graph.tanh(h);
  }
  return h;
}

Tensor mlp_forward(const ParameterStore& store, const MlpSpec& spec,
                   const Tensor& x, std::string_view prefix) {
  Graph g;
  MlpVars vars = bind_mlp(g, store, spec, prefix);
  return g.value(mlp_forward(g, vars, spec, g.input("x", x)));
}

// ---------------------------------------------------------------------------
// GRU

void GruSpec::validate() const {
  if (input == 0 || hidden == 0 || output == 0) {
    throw std::invalid_argument("GruSpec: widths must be positive");
  }
}

void init_gru(ParameterStore& store, const GruSpec& spec, Rng& rng,
              std::string_view prefix, bool with_readout) {
  spec.validate();
  const std::string p(prefix);
  for (const char* gate : {"z", "r", "h"}) {
    store.add(p + ".w_" + gate, glorot_uniform(spec.hidden, spec.input, rng));
    store.add(p + ".u_" + gate, glorot_uniform(spec.hidden, spec.hidden, rng));
    store.add(p + ".b_" + gate, Tensor::zeros({spec.hidden}));
  }
  if (with_readout) {
    store.add(p + ".w_y", glorot_uniform(spec.output, spec.hidden, rng));
    store.add(p + ".b_y", Tensor::zeros({spec.output}));
  }
}

GruVars bind_gru(Graph& graph, const ParameterStore& store,
                 const GruSpec& spec, std::string_view prefix,
                 bool with_readout) {
  spec.validate();
  const std::string p(prefix);
  auto bind = [&](const std::string& name, std::size_t rows,
                  std::size_t cols) {
    Var v = store.bind(graph, p + "." + name);
    const Tensor& t = graph.value(v);
    const bool ok = cols == 0 ? (t.rank() == 1 && t.size() == rows)
                              : (t.rank() == 2 && t.rows() == rows &&
                                 t.cols() == cols);
    if (!ok) {
      throw std::invalid_argument("bind_gru: parameter " + p + "." + name +
                                  " has shape " + t.shape_string());
    }
    return v;
  };
  GruVars v;
  v.w_z = bind("w_z", spec.hidden, spec.input);
  v.u_z = bind("u_z", spec.hidden, spec.hidden);
  v.b_z = bind("b_z", spec.hidden, 0);
  v.w_r = bind("w_r", spec.hidden, spec.input);
  v.u_r = bind("u_r", spec.hidden, spec.hidden);
  v.b_r = bind("b_r", spec.hidden, 0);
  v.w_h = bind("w_h", spec.hidden, spec.input);
  v.u_h = bind("u_h", spec.hidden, spec.hidden);
  v.b_h = bind("b_h", spec.hidden, 0);
  if (with_readout) {
    v.w_y = bind("w_y", spec.output, spec.hidden);
    v.b_y = bind("b_y", spec.output, 0);
  }
  return v;
}

Var gru_cell(Graph& g, const GruVars& v, Var x, Var h) {
  const Tensor& xt = g.value(x);
  const Tensor& ht = g.value(h);
  const Tensor& wz = g.value(v.w_z);
  if (xt.rank() != 1 || xt.size() != wz.cols() || ht.rank() != 1 ||
      ht.size() != wz.rows()) {
    throw std::invalid_argument("gru_step: input " + xt.shape_string() +
                                " / hidden " + ht.shape_string() +
                                " do not match cell of shape " +
                                wz.shape_string());
  }
  Var z = g.sigmoid(
      g.add(g.add(g.matvec(v.w_z, x), g.matvec(v.u_z, h)), v.b_z));
  Var r = g.sigmoid(
      g.add(g.add(g.matvec(v.w_r, x), g.matvec(v.u_r, h)), v.b_r));
  Var c = g.tanh(g.add(
      g.add(g.matvec(v.w_h, x), g.matvec(v.u_h, g.mul(r, h))), v.b_h));
  // (1 - z) * h + z * c == h + z * (c - h)
  return g.add(h, g.mul(z, g.sub(c, h)));
}

GruStep gru_step(Graph& g, const GruVars& v, Var x, Var h) {
  if (!v.w_y.valid()) {
    throw std::logic_error("gru_step: GRU was bound without a readout");
  }
  GruStep out;
  out.h_next = gru_cell(g, v, x, h);
  out.y = g.add(g.matvec(v.w_y, out.h_next), v.b_y);
  return out;
}

GruStepResult gru_step(const ParameterStore& store, const GruSpec& spec,
                       const Tensor& x, const Tensor& h,
                       std::string_view prefix) {
  Graph g;
  GruVars vars = bind_gru(g, store, spec, prefix);
  GruStep s = gru_step(g, vars, g.input("x", x), g.input("h", h));
  return {g.value(s.y), g.value(s.h_next)};
}

// ---------------------------------------------------------------------------
// Squashed Gaussian

namespace {

double interior_unit(double action, const ActionBounds& bounds) {
  if (!(action >= bounds.lower && action <= bounds.upper)) {
    throw std::invalid_argument("gaussian_log_prob: action " +
                                std::to_string(action) + " outside [" +
                                std::to_string(bounds.lower) + ", " +
                                std::to_string(bounds.upper) + "]");
  }
  const double s = bounds.half_range();
  const double eps = kActionInteriorFraction * s;
  const double a = std::clamp(action, bounds.lower + eps, bounds.upper - eps);
  return (a - bounds.center()) / s;
}

}  // namespace

double deterministic_action(double mean, const ActionBounds& bounds) {
  return bounds.center() + bounds.half_range() * std::tanh(mean);
}

ActionSample gaussian_sample(const PolicyOutput& out,
                             const ActionBounds& bounds, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double u = out.mean + std::exp(out.log_std) * normal(rng);
  ActionSample s;
  s.action = std::clamp(deterministic_action(u, bounds), bounds.lower,
                        bounds.upper);
  s.log_prob = gaussian_log_prob(out, bounds, s.action);
  return s;
}

Var gaussian_log_prob(Graph& g, Var mean, Var log_std,
                      const ActionBounds& bounds, double action) {
  const double y = interior_unit(action, bounds);
  const double u = std::atanh(y);
  // log |d action / d u| = log s + log(1 - y^2)
  const double log_jacobian =
      std::log(bounds.half_range()) + std::log((1.0 - y) * (1.0 + y));
  const double constant = -0.5 * std::log(2.0 * std::numbers::pi) - log_jacobian;
  Var z = g.mul(g.sub(g.constant(Tensor::scalar(u)), mean),
                g.exp(g.neg(log_std)));
  Var lp = g.sub(g.scale(g.square(z), -0.5), log_std);
  return g.add_scalar(lp, constant);
}

double gaussian_log_prob(const PolicyOutput& out, const ActionBounds& bounds,
                         double action) {
  Graph g;
  Var lp = gaussian_log_prob(g, g.input("mean", Tensor::scalar(out.mean)),
                             g.input("log_std", Tensor::scalar(out.log_std)),
                             bounds, action);
  return g.value(lp).item();
}

}  // namespace emsrl::nn
