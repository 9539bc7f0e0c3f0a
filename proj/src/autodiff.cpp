#include "emsrl/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace emsrl::ad {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::invalid_argument shape_error(const char* op, const Tensor& a,
                                  const Tensor& b) {
  return std::invalid_argument(std::string(op) + ": incompatible shapes " +
                               a.shape_string() + " and " + b.shape_string());
}

double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_value(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), values_(product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (product(shape_) != values_.size()) {
    throw std::invalid_argument("Tensor: shape " + shape_string() +
                                " does not match " +
                                std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  return Tensor(std::move(shape));
}

Tensor Tensor::zeros_like(const Tensor& other) { return Tensor(other.shape_); }

std::size_t Tensor::rows() const { return shape_.empty() ? 0 : shape_[0]; }

std::size_t Tensor::cols() const {
  if (shape_.size() < 2) return 1;
  return shape_[1];
}

double Tensor::item() const {
  if (values_.size() != 1) {
    throw std::logic_error("Tensor::item: tensor of shape " + shape_string() +
                           " is not a scalar");
  }
  return values_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const {
  return ad::shape_string(shape_);
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

const char* op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kParameter: return "parameter";
    case Op::kConstant: return "constant";
    case Op::kMatVec: return "matvec";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kAddScalar: return "add_scalar";
    case Op::kNeg: return "neg";
    case Op::kSigmoid: return "sigmoid";
    case Op::kTanh: return "tanh";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSoftplus: return "softplus";
    case Op::kSquare: return "square";
    case Op::kConcat: return "concat";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kMin: return "min";
    case Op::kClip: return "clip";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Graph construction

const Graph::Node& Graph::node(Var v) const {
  if (!v.valid() || v.id() >= nodes_.size()) {
    throw std::invalid_argument("Graph: variable does not belong to graph");
  }
  return nodes_[v.id()];
}

const Tensor& Graph::node_value(std::uint32_t id) const {
  const Node& n = nodes_[id];
  return n.external != nullptr ? *n.external : n.value;
}

const Tensor& Graph::value(Var v) const {
  node(v);
  return node_value(v.id());
}

Var Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  grads_.clear();
  return Var(static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::input(std::string name, Tensor value) {
  if (inputs_.contains(name)) {
    throw std::invalid_argument("Graph::input: duplicate input '" + name + "'");
  }
  Node n;
  n.op = Op::kInput;
  n.value = std::move(value);
  Var v = push(std::move(n));
  inputs_.emplace(std::move(name), v.id());
  return v;
}

Var Graph::constant(Tensor value) {
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::parameter(const std::string& name, const Tensor& value) {
  if (auto it = parameters_.find(name); it != parameters_.end()) {
    return Var(it->second);
  }
  Node n;
  n.op = Op::kParameter;
  n.external = &value;
  Var v = push(std::move(n));
  parameters_.emplace(name, v.id());
  return v;
}

Var Graph::matvec(Var matrix, Var vec) {
  const Tensor& m = value(matrix);
  const Tensor& x = value(vec);
  if (m.rank() != 2 || x.rank() != 1 || m.cols() != x.size()) {
    throw shape_error("matvec", m, x);
  }
  const std::size_t rows = m.rows();
  const std::size_t cols = m.cols();
  std::vector<double> out(rows, 0.0);
  const double* mp = m.values().data();
  const double* xp = x.values().data();
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = mp + i * cols;
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += row[j] * xp[j];
    out[i] = acc;
  }
  Node n;
  n.op = Op::kMatVec;
  n.lhs = matrix.id();
  n.rhs = vec.id();
  n.value = Tensor({rows}, std::move(out));
  return push(std::move(n));
}

Var Graph::binary(Op op, Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  const bool same = x.shape() == y.shape();
  if (!same && x.size() != 1 && y.size() != 1) {
    throw shape_error(op_name(op), x, y);
  }
  const Tensor& shaped = (same || y.size() == 1) ? x : y;
  const std::size_t n = shaped.size();
  const std::size_t sx = x.size() == 1 ? 0 : 1;
  const std::size_t sy = y.size() == 1 ? 0 : 1;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = x[i * sx];
    const double v = y[i * sy];
    switch (op) {
      case Op::kAdd: out[i] = u + v; break;
      case Op::kSub: out[i] = u - v; break;
      case Op::kMul: out[i] = u * v; break;
      case Op::kMin: out[i] = u <= v ? u : v; break;
      default: throw std::logic_error("binary: unsupported op");
    }
  }
  Node node;
  node.op = op;
  node.lhs = a.id();
  node.rhs = b.id();
  node.value = Tensor(shaped.shape(), std::move(out));
  return push(std::move(node));
}

Var Graph::add(Var a, Var b) { return binary(Op::kAdd, a, b); }
Var Graph::sub(Var a, Var b) { return binary(Op::kSub, a, b); }
Var Graph::mul(Var a, Var b) { return binary(Op::kMul, a, b); }
Var Graph::minimum(Var a, Var b) { return binary(Op::kMin, a, b); }

Var Graph::unary(Op op, Var a, double pa, double pb) {
  const Tensor& x = value(a);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double u = x[i];
    switch (op) {
      case Op::kScale: out[i] = u * pa; break;
      case Op::kAddScalar: out[i] = u + pa; break;
      case Op::kNeg: out[i] = -u; break;
      case Op::kSigmoid: out[i] = sigmoid_value(u); break;
      case Op::kTanh: out[i] = std::tanh(u); break;
      case Op::kExp: out[i] = std::exp(u); break;
      case Op::kLog:
        if (!(u > 0.0)) {
          throw std::domain_error("log: non-positive input " +
                                  std::to_string(u));
        }
        out[i] = std::log(u);
        break;
      case Op::kSoftplus: out[i] = softplus_value(u); break;
      case Op::kSquare: out[i] = u * u; break;
      case Op::kClip: out[i] = std::clamp(u, pa, pb); break;
      default: throw std::logic_error("unary: unsupported op");
    }
  }
  Node node;
  node.op = op;
  node.lhs = a.id();
  node.a = pa;
  node.b = pb;
  node.value = Tensor(x.shape(), std::move(out));
  return push(std::move(node));
}

Var Graph::scale(Var a, double factor) { return unary(Op::kScale, a, factor); }
Var Graph::add_scalar(Var a, double offset) {
  return unary(Op::kAddScalar, a, offset);
}
Var Graph::neg(Var a) { return unary(Op::kNeg, a); }
Var Graph::sigmoid(Var a) { return unary(Op::kSigmoid, a); }
Var Graph::tanh(Var a) { return unary(Op::kTanh, a); }
Var Graph::exp(Var a) { return unary(Op::kExp, a); }
Var Graph::log(Var a) { return unary(Op::kLog, a); }
Var Graph::softplus(Var a) { return unary(Op::kSoftplus, a); }
Var Graph::square(Var a) { return unary(Op::kSquare, a); }

Var Graph::clip(Var a, double lo, double hi) {
  if (!(lo <= hi)) {
    throw std::invalid_argument("clip: lower bound exceeds upper bound");
  }
  return unary(Op::kClip, a, lo, hi);
}

Var Graph::concat(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  std::vector<double> out;
  std::vector<std::uint32_t> ids;
  for (Var p : parts) {
    const Tensor& t = value(p);
    if (t.rank() != 1) {
      throw std::invalid_argument("concat: expected rank-1 input, got " +
                                  t.shape_string());
    }
    out.insert(out.end(), t.values().begin(), t.values().end());
    ids.push_back(p.id());
  }
  Node n;
  n.op = Op::kConcat;
  n.lhs = static_cast<std::uint32_t>(concat_inputs_.size());
  concat_inputs_.push_back(std::move(ids));
  n.value = Tensor::vector(std::move(out));
  return push(std::move(n));
}

Var Graph::sum(Var a) {
  const Tensor& x = value(a);
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  Node n;
  n.op = Op::kSum;
  n.lhs = a.id();
  n.value = Tensor::scalar(acc);
  return push(std::move(n));
}

Var Graph::mean(Var a) {
  const Tensor& x = value(a);
  if (x.size() == 0) throw std::invalid_argument("mean: empty tensor");
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  Node n;
  n.op = Op::kMean;
  n.lhs = a.id();
  n.value = Tensor::scalar(acc / static_cast<double>(x.size()));
  return push(std::move(n));
}

// ---------------------------------------------------------------------------
// Backward

std::vector<double>& Graph::grad_buffer(std::uint32_t id) {
  std::vector<double>& g = grads_[id];
  if (g.empty()) g.assign(node_value(id).size(), 0.0);
  return g;
}

void Graph::backward(Var output, double seed) {
  if (!output.valid()) {
    throw std::logic_error(
        "backward: no forward output has been evaluated on this graph");
  }
  const Tensor& out = value(output);
  if (out.size() != 1) {
    throw std::invalid_argument("backward: output must be scalar, got shape " +
                                out.shape_string());
  }
  grads_.assign(nodes_.size(), {});
  grads_[output.id()] = {seed};
  for (std::uint32_t id = output.id() + 1; id-- > 0;) {
    if (grads_[id].empty()) continue;
    propagate(id, grads_[id]);
  }
}

void Graph::propagate(std::uint32_t id, const std::vector<double>& g) {
  const Node& n = nodes_[id];
  const Tensor& y = n.value;
  switch (n.op) {
    case Op::kInput:
    case Op::kParameter:
    case Op::kConstant:
      return;
    case Op::kMatVec: {
      const Tensor& m = node_value(n.lhs);
      const Tensor& x = node_value(n.rhs);
      const std::size_t rows = m.rows();
      const std::size_t cols = m.cols();
      std::vector<double>& gm = grad_buffer(n.lhs);
      std::vector<double>& gx = grad_buffer(n.rhs);
      const double* mp = m.values().data();
      const double* xp = x.values().data();
      for (std::size_t i = 0; i < rows; ++i) {
        const double gi = g[i];
        double* gmr = gm.data() + i * cols;
        const double* mr = mp + i * cols;
        for (std::size_t j = 0; j < cols; ++j) {
          gmr[j] += gi * xp[j];
          gx[j] += gi * mr[j];
        }
      }
      return;
    }
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul:
    case Op::kMin: {
      const Tensor& a = node_value(n.lhs);
      const Tensor& b = node_value(n.rhs);
      const std::size_t sa = a.size() == 1 ? 0 : 1;
      const std::size_t sb = b.size() == 1 ? 0 : 1;
      // Buffers must be fetched one at a time: a and b may be the same node.
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double u = a[i * sa];
        const double v = b[i * sb];
        double da = 0.0;
        double db = 0.0;
        switch (n.op) {
          case Op::kAdd: da = g[i]; db = g[i]; break;
          case Op::kSub: da = g[i]; db = -g[i]; break;
          case Op::kMul: da = g[i] * v; db = g[i] * u; break;
          default:
            if (u <= v) {
              da = g[i];
            } else {
              db = g[i];
            }
            break;
        }
        grad_buffer(n.lhs)[i * sa] += da;
        grad_buffer(n.rhs)[i * sb] += db;
      }
      return;
    }
    case Op::kConcat: {
      std::size_t offset = 0;
      for (std::uint32_t in : concat_inputs_[n.lhs]) {
        std::vector<double>& gi = grad_buffer(in);
        for (std::size_t j = 0; j < gi.size(); ++j) gi[j] += g[offset + j];
        offset += gi.size();
      }
      return;
    }
    case Op::kSum:
    case Op::kMean: {
      std::vector<double>& ga = grad_buffer(n.lhs);
      const double d =
          n.op == Op::kSum ? g[0] : g[0] / static_cast<double>(ga.size());
      for (double& v : ga) v += d;
      return;
    }
    default:
      break;
  }

  const Tensor& x = node_value(n.lhs);
  std::vector<double>& ga = grad_buffer(n.lhs);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double u = x[i];
    const double out = y[i];
    double d = 0.0;
    switch (n.op) {
      case Op::kScale: d = n.a; break;
      case Op::kAddScalar: d = 1.0; break;
      case Op::kNeg: d = -1.0; break;
      case Op::kSigmoid: d = out * (1.0 - out); break;
      case Op::kTanh: d = 1.0 - out * out; break;
      case Op::kExp: d = out; break;
      case Op::kLog: d = 1.0 / u; break;
      case Op::kSoftplus: d = sigmoid_value(u); break;
      case Op::kSquare: d = 2.0 * u; break;
      // Boundary points take the identity branch.
      case Op::kClip: d = (u >= n.a && u <= n.b) ? 1.0 : 0.0; break;
      default: throw std::logic_error("backward: unhandled op");
    }
    ga[i] += g[i] * d;
  }
}

Tensor Graph::grad(Var v) const {
  node(v);
  const Tensor& t = node_value(v.id());
  if (grads_.empty()) {
    throw std::logic_error("grad: backward has not been called");
  }
  const std::vector<double>& g = grads_[v.id()];
  if (g.empty()) return Tensor::zeros_like(t);
  return Tensor(t.shape(), g);
}

std::map<std::string, Tensor> Graph::parameter_gradients() const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, id] : parameters_) out.emplace(name, grad(Var(id)));
  return out;
}

std::map<std::string, Tensor> Graph::input_gradients() const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, id] : inputs_) out.emplace(name, grad(Var(id)));
  return out;
}

// ---------------------------------------------------------------------------
// Gradient checking

namespace {

double evaluate(const LossFn& loss) {
  Graph g;
  return g.value(loss(g)).item();
}

}  // namespace

GradCheckReport compare_gradients(
    const LossFn& loss, const std::map<std::string, Tensor>& analytic,
    const std::vector<std::pair<std::string, Tensor*>>& params,
    const GradCheckOptions& options) {
  if (!(options.step > 0.0)) {
    throw std::invalid_argument("grad_check: step must be positive");
  }
  GradCheckReport report;
  for (const auto& [name, tensor] : params) {
    GradCheckEntry entry;
    entry.name = name;
    auto it = analytic.find(name);
    for (std::size_t i = 0; i < tensor->size(); ++i) {
      const double original = (*tensor)[i];
      (*tensor)[i] = original + options.step;
      const double up = evaluate(loss);
      (*tensor)[i] = original - options.step;
      const double down = evaluate(loss);
      (*tensor)[i] = original;
      const double numeric = (up - down) / (2.0 * options.step);
      const double exact = it == analytic.end() ? 0.0 : it->second[i];
      const double denom = std::max(
          {std::abs(exact), std::abs(numeric), options.magnitude_floor});
      const double rel = std::abs(exact - numeric) / denom;
      if (!(rel <= entry.max_rel_error)) {
        entry.max_rel_error = rel;
        entry.worst_index = i;
      }
    }
    entry.pass = entry.max_rel_error <= options.tolerance;
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.pass = report.pass && entry.pass;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

GradCheckReport grad_check(
    const LossFn& loss,
    const std::vector<std::pair<std::string, Tensor*>>& params,
    const GradCheckOptions& options) {
  Graph g;
  Var out = loss(g);
  g.backward(out);
  return compare_gradients(loss, g.parameter_gradients(), params, options);
}

}  // namespace emsrl::ad
