#pragma once

// Reverse-mode automatic differentiation over small dense tensors.
//
// A Graph is built eagerly (define-by-run): every operation evaluates its
// output when it is recorded, so values are available immediately and a
// later call to backward() walks the recorded nodes in reverse order.
// Tensors are rank-1 or rank-2, row-major, 64-bit.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace emsrl::ad {

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor zeros_like(const Tensor& other);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  // Value of a single-element tensor.
  double item() const;
  bool all_finite() const;
  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

// Handle to a node of one Graph.
class Var {
 public:
  Var() = default;
  bool valid() const { return id_ != kInvalid; }
  std::uint32_t id() const { return id_; }

 private:
  friend class Graph;
  static constexpr std::uint32_t kInvalid =
      std::numeric_limits<std::uint32_t>::max();
  explicit Var(std::uint32_t id) : id_(id) {}
  std::uint32_t id_ = kInvalid;
};

enum class Op : std::uint8_t {
  kInput,
  kParameter,
  kConstant,
  kMatVec,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddScalar,
  kNeg,
  kSigmoid,
  kTanh,
  kExp,
  kLog,
  kSoftplus,
  kSquare,
  kConcat,
  kSum,
  kMean,
  kMin,
  kClip,
};

const char* op_name(Op op);

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  // Leaves.
  Var input(std::string name, Tensor value);
  Var constant(Tensor value);
  // Differentiable leaf that references `value` without copying it; the
  // referenced tensor must outlive the graph. Binding the same name twice
  // returns the first handle.
  Var parameter(const std::string& name, const Tensor& value);

  // Elementwise binary ops accept equal shapes, or one single-element operand
  // which is broadcast.
  Var matvec(Var matrix, Var vec);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var minimum(Var a, Var b);
  Var scale(Var a, double factor);
  Var add_scalar(Var a, double offset);
  Var neg(Var a);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var softplus(Var a);
  Var square(Var a);
  Var clip(Var a, double lo, double hi);
  Var concat(std::span<const Var> parts);
  Var sum(Var a);
  Var mean(Var a);

  const Tensor& value(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from a single-element output. Recomputes all gradients on
  // every call.
  void backward(Var output, double seed = 1.0);
  bool has_gradients() const { return !grads_.empty(); }

  // Gradient of the last backward() output with respect to `v`; zeros when
  // `v` does not influence the output.
  Tensor grad(Var v) const;
  std::map<std::string, Tensor> parameter_gradients() const;
  std::map<std::string, Tensor> input_gradients() const;

 private:
  struct Node {
    Op op = Op::kConstant;
    std::uint32_t lhs = 0;
    std::uint32_t rhs = 0;
    double a = 0.0;
    double b = 0.0;
    Tensor value;
    const Tensor* external = nullptr;
  };

  const Node& node(Var v) const;
  const Tensor& node_value(std::uint32_t id) const;
  Var push(Node node);
  Var binary(Op op, Var a, Var b);
  Var unary(Op op, Var a, double pa = 0.0, double pb = 0.0);
  void propagate(std::uint32_t id, const std::vector<double>& g);
  std::vector<double>& grad_buffer(std::uint32_t id);

  std::vector<Node> nodes_;
  std::vector<std::vector<std::uint32_t>> concat_inputs_;
  std::map<std::string, std::uint32_t> parameters_;
  std::map<std::string, std::uint32_t> inputs_;
  std::vector<std::vector<double>> grads_;
};

// ---------------------------------------------------------------------------
// Finite-difference gradient checking.

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  bool pass = true;
};

// Builds a scalar loss on a fresh graph. The function must bind the tensors
// under test with Graph::parameter so that perturbations are observed.
using LossFn = std::function<Var(Graph&)>;

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  double magnitude_floor = 1e-5;
};

// Compares `analytic` against central differences of `loss` taken by
// perturbing each named tensor in place (restored afterwards).
GradCheckReport compare_gradients(
    const LossFn& loss, const std::map<std::string, Tensor>& analytic,
    const std::vector<std::pair<std::string, Tensor*>>& params,
    const GradCheckOptions& options = {});

GradCheckReport grad_check(
    const LossFn& loss,
    const std::vector<std::pair<std::string, Tensor*>>& params,
    const GradCheckOptions& options = {});

}  // namespace emsrl::ad
