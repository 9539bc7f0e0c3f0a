#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "emsrl/autodiff.hpp"
#include "emsrl/random.hpp"

namespace emsrl::nn {

using ad::Graph;
using ad::Tensor;
using ad::Var;

// Named parameters of one network together with gradient buffers and Adam
// moments. Names are bound into a Graph as "<scope>/<name>", so several
// stores can share a graph as long as their scopes differ.
class ParameterStore {
 public:
  explicit ParameterStore(std::string scope = "net") : scope_(std::move(scope)) {}

  const std::string& scope() const { return scope_; }

  void add(const std::string& name, Tensor init);
  bool contains(const std::string& name) const;
  const Tensor& value(const std::string& name) const;
  Tensor& value(const std::string& name);
  const Tensor& grad(const std::string& name) const;
  std::vector<std::string> names() const;
  std::size_t parameter_count() const;

  // Values outside [lo, hi] are clamped after every optimizer step.
  void set_bounds(const std::string& name, double lo, double hi);
  void apply_bounds();

  Var bind(Graph& graph, const std::string& name) const;

  // Adds the graph's gradients for this store's parameters into the buffers.
  void accumulate_gradients(const Graph& graph);
  void add_gradients(const ParameterStore& other);
  void zero_grad();
  double gradient_norm() const;
  void scale_gradients(double factor);
  bool gradients_finite() const;

  std::uint64_t step_count() const { return steps_; }

  // FNV-1a over the bit patterns of all parameter values.
  std::uint64_t checksum() const;

  // Parameter values only (gradients and moments excluded).
  bool same_values(const ParameterStore& other) const;

  // Pairs for ad::grad_check, keyed by the graph-level names.
  std::vector<std::pair<std::string, Tensor*>> grad_check_params();

 private:
  friend struct Adam;
  struct Entry {
    Tensor value;
    Tensor grad;
    Tensor m;
    Tensor v;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
  };
  const Entry& entry(const std::string& name) const;
  Entry& entry(const std::string& name);
  std::string qualified(const std::string& name) const;

  std::string scope_;
  std::map<std::string, Entry> entries_;
  std::uint64_t steps_ = 0;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct Adam {
  static void step(ParameterStore& store, double learning_rate,
                   const AdamOptions& options);
};

// One bias-corrected Adam update followed by bound clamping; gradients are
// zeroed afterwards. Throws std::runtime_error naming the first parameter
// with a non-finite gradient (before touching any value).
void optimizer_step(ParameterStore& store, double learning_rate,
                    const AdamOptions& options = {});

// ---------------------------------------------------------------------------
// Initialization

// Glorot-uniform matrix of shape [fan_out, fan_in].
Tensor glorot_uniform(std::size_t fan_out, std::size_t fan_in, Rng& rng);

// ---------------------------------------------------------------------------
// MLP: affine layers with tanh between them and an identity output.

struct MlpSpec {
  std::vector<std::size_t> widths;

  void validate() const;
  std::size_t input_width() const { return widths.front(); }
  std::size_t output_width() const { return widths.back(); }
};

struct MlpVars {
  std::vector<Var> weights;
  std::vector<Var> biases;
};

void init_mlp(ParameterStore& store, const MlpSpec& spec, Rng& rng,
              std::string_view prefix = "mlp");
MlpVars bind_mlp(Graph& graph, const ParameterStore& store,
                 const MlpSpec& spec, std::string_view prefix = "mlp");
Var mlp_forward(Graph& graph, const MlpVars& vars, const MlpSpec& spec, Var x);
Tensor mlp_forward(const ParameterStore& store, const MlpSpec& spec,
                   const Tensor& x, std::string_view prefix = "mlp");

// ---------------------------------------------------------------------------
// GRU cell with an affine readout:
//   z = sigma(W_z x + U_z h + b_z)
//   r = sigma(W_r x + U_r h + b_r)
//   c = tanh(W_h x + U_h (r * h) + b_h)
//   h' = (1 - z) * h + z * c
//   y = W_y h' + b_y

struct GruSpec {
  std::size_t input = 1;
  std::size_t hidden = 32;
  std::size_t output = 1;

  void validate() const;
};

struct GruVars {
  Var w_z, u_z, b_z;
  Var w_r, u_r, b_r;
  Var w_h, u_h, b_h;
  Var w_y, b_y;  // invalid when bound without readout
};

struct GruStep {
  Var y;
  Var h_next;
};

// `with_readout = false` creates only the recurrent cell, for networks that
// feed the hidden state into a separate head.
void init_gru(ParameterStore& store, const GruSpec& spec, Rng& rng,
              std::string_view prefix = "gru", bool with_readout = true);
GruVars bind_gru(Graph& graph, const ParameterStore& store,
                 const GruSpec& spec, std::string_view prefix = "gru",
                 bool with_readout = true);
Var gru_cell(Graph& graph, const GruVars& vars, Var x, Var h);
GruStep gru_step(Graph& graph, const GruVars& vars, Var x, Var h);

struct GruStepResult {
  Tensor y;
  Tensor h_next;
};
GruStepResult gru_step(const ParameterStore& store, const GruSpec& spec,
                       const Tensor& x, const Tensor& h,
                       std::string_view prefix = "gru");

// ---------------------------------------------------------------------------
// Tanh-squashed Gaussian policy head over a bounded scalar action.

struct ActionBounds {
  double lower = -400.0;
  double upper = 400.0;

  double center() const { return 0.5 * (upper + lower); }
  double half_range() const { return 0.5 * (upper - lower); }
};

struct PolicyOutput {
  double mean = 0.0;  // pre-squash location
  double log_std = 0.0;
  double value = 0.0;
  Tensor hidden;
};

struct ActionSample {
  double action = 0.0;
  double log_prob = 0.0;
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

// Distance from the bounds, as a fraction of the half range, that actions are
// pulled inside before the squashing is inverted.
inline constexpr double kActionInteriorFraction = 1e-6;

ActionSample gaussian_sample(const PolicyOutput& out,
                             const ActionBounds& bounds, Rng& rng);

// Differentiable log-density of the squashed variable at `action`.
Var gaussian_log_prob(Graph& graph, Var mean, Var log_std,
                      const ActionBounds& bounds, double action);
double gaussian_log_prob(const PolicyOutput& out, const ActionBounds& bounds,
                         double action);

// center + half_range * tanh(mean): the action the policy converges to as
// log_std goes to -inf. Used for deterministic evaluation.
double deterministic_action(double mean, const ActionBounds& bounds);

}  // namespace emsrl::nn
