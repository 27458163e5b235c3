#include "cslab/numerics/tape.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "cslab/common/errors.hpp"

namespace cslab::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatView = Eigen::Map<RowMat>;
using ConstMatView = Eigen::Map<const RowMat>;

ConstMatView view(const Tensor& t) {
  return ConstMatView(t.values().data(), Eigen::Index(t.rows()), Eigen::Index(t.cols()));
}
MatView view(Tensor& t) {
  return MatView(t.values().data(), Eigen::Index(t.rows()), Eigen::Index(t.cols()));
}

Eigen::Map<const Eigen::ArrayXd> flat(const Tensor& t) {
  return Eigen::Map<const Eigen::ArrayXd>(t.values().data(), Eigen::Index(t.size()));
}
Eigen::Map<Eigen::ArrayXd> flat(Tensor& t) {
  return Eigen::Map<Eigen::ArrayXd>(t.values().data(), Eigen::Index(t.size()));
}

bool is_scalar(const Tensor& t) { return t.size() == 1; }

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                       b.shape_string());
}

Tensor like(const Tensor& t, double fill = 0.0) { return Tensor(t.shape(), fill); }

// Shape of an elementwise binary result (equal shapes or scalar broadcast).
const Tensor& broadcast_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.same_shape(b)) return a.rank() >= b.rank() ? a : b;
  if (is_scalar(b)) return a;
  if (is_scalar(a)) return b;
  shape_error(op, a, b);
}

// Adds `g` (shaped like the broadcast result) into the gradient of `id`,
// reducing to a scalar when the operand was broadcast.
void accumulate_broadcast(Tape& t, std::size_t id, const Eigen::ArrayXd& g) {
  if (!t.requires_grad(id)) return;
  Tensor& buf = t.grad_buffer(id);
  if (buf.size() == 1 && g.size() != 1) {
    buf[0] += g.sum();
  } else {
    flat(buf) += g;
  }
}

template <class Fwd, class Bwd>
Var unary(Var a, Fwd fwd, Bwd bwd) {
  Tape& t = a.tape();
  Tensor out = like(a.value());
  flat(out) = fwd(flat(a.value()));
  const std::size_t ia = a.id();
  const Var in[] = {a};
  return t.record(std::move(out), in, [ia, bwd](Tape& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    flat(tp.grad_buffer(ia)) += bwd(flat(tp.value(ia)), flat(tp.value(self)), flat(tp.grad(self)));
  });
}

void check_targets(const Tensor& targets, std::size_t rows, std::size_t cols) {
  if (targets.rows() != rows || targets.cols() != cols) {
    throw DimensionError("cross entropy: targets " + targets.shape_string() +
                         " do not match logits rows/cols");
  }
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = targets.at(r, c);
      if (v < 0.0 || !std::isfinite(v)) {
        throw ValidationError("soft target row " + std::to_string(r) + " has an invalid entry");
      }
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-6) {
      throw ValidationError("soft target row " + std::to_string(r) + " sums to " +
                            std::to_string(s) + ", expected 1");
    }
  }
}

// Row-wise log-softmax.
RowMat log_softmax(ConstMatView x) {
  RowMat out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mx = x.row(r).maxCoeff();
    const double lse = mx + std::log((x.row(r).array() - mx).exp().sum());
    out.row(r) = x.row(r).array() - lse;
  }
  return out;
}

void check_classes(std::span<const int> classes, std::size_t rows, std::size_t cols) {
  if (classes.size() != rows) throw DimensionError("cross entropy: class count != logits rows");
  for (int c : classes) {
    if (c < 0 || std::size_t(c) >= cols) {
      throw ValidationError("cross entropy: class index " + std::to_string(c) + " out of range");
    }
  }
}

}  // namespace

void Parameter::zero_grad() {
  if (grad.size() != value.size()) grad = like(value);
  else grad.fill(0.0);
}

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

// ---- Tape -------------------------------------------------------------------

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Parameter& p) {
  Node n;
  n.borrowed = &p.value;
  n.param = &p;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::frozen(const Parameter& p) {
  Node n;
  n.borrowed = &p.value;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& v : inputs) {
    if (&v.tape() != this) throw UsageError("operands recorded on different tapes");
    n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.borrowed ? *n.borrowed : n.value;
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != value(id).size()) n.grad = like(value(id));
  return n.grad;
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
  if (!nodes_[id].requires_grad) return;
  Tensor& buf = grad_buffer(id);
  if (!buf.same_shape(g)) shape_error("accumulate", buf, g);
  flat(buf) += flat(g);
}

void Tape::backward(Var root) {
  if (&root.tape() != this) throw UsageError("backward root belongs to another tape");
  if (value(root.id()).size() != 1) {
    throw DimensionError("backward root must be a scalar, got " + value(root.id()).shape_string());
  }
  backward_visits_ = 0;
  grad_buffer(root.id()).fill(1.0);
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) {
      n.backward(*this, id);
      ++backward_visits_;
    }
    if (n.param) {
      Parameter& p = *n.param;
      if (p.grad.size() != p.value.size()) p.grad = like(p.value);
      flat(p.grad) += flat(n.grad);
    }
  }
}

void Tape::clear() {
  nodes_.clear();
  backward_visits_ = 0;
}

// ---- primitives --------------------------------------------------------------

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) shape_error("matmul", av, bv);
  Tensor out = Tensor::matrix(av.rows(), bv.cols());
  view(out).noalias() = view(av) * view(bv);
  const std::size_t ia = a.id(), ib = b.id();
  const Var in[] = {a, b};
  return a.tape().record(std::move(out), in, [ia, ib](Tape& t, std::size_t self) {
    const auto g = view(t.grad(self));
    if (t.requires_grad(ia)) view(t.grad_buffer(ia)).noalias() += g * view(t.value(ib)).transpose();
    if (t.requires_grad(ib)) view(t.grad_buffer(ib)).noalias() += view(t.value(ia)).transpose() * g;
  });
}

Var add(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out = like(broadcast_shape("add", av, bv));
  if (av.size() == bv.size()) flat(out) = flat(av) + flat(bv);
  else if (is_scalar(bv)) flat(out) = flat(av) + bv[0];
  else flat(out) = flat(bv) + av[0];
  const std::size_t ia = a.id(), ib = b.id();
  const Var in[] = {a, b};
  return a.tape().record(std::move(out), in, [ia, ib](Tape& t, std::size_t self) {
    const Eigen::ArrayXd g = flat(t.grad(self));
    accumulate_broadcast(t, ia, g);
    accumulate_broadcast(t, ib, g);
  });
}

Var sub(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out = like(broadcast_shape("sub", av, bv));
  if (av.size() == bv.size()) flat(out) = flat(av) - flat(bv);
  else if (is_scalar(bv)) flat(out) = flat(av) - bv[0];
  else flat(out) = av[0] - flat(bv);
  const std::size_t ia = a.id(), ib = b.id();
  const Var in[] = {a, b};
  return a.tape().record(std::move(out), in, [ia, ib](Tape& t, std::size_t self) {
    const Eigen::ArrayXd g = flat(t.grad(self));
    accumulate_broadcast(t, ia, g);
    accumulate_broadcast(t, ib, -g);
  });
}

Var mul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out = like(broadcast_shape("mul", av, bv));
  if (av.size() == bv.size()) flat(out) = flat(av) * flat(bv);
  else if (is_scalar(bv)) flat(out) = flat(av) * bv[0];
  else flat(out) = flat(bv) * av[0];
  const std::size_t ia = a.id(), ib = b.id();
  const Var in[] = {a, b};
  return a.tape().record(std::move(out), in, [ia, ib](Tape& t, std::size_t self) {
    const auto g = flat(t.grad(self));
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(ib);
    auto expand = [&](const Tensor& v) -> Eigen::ArrayXd {
      if (v.size() == std::size_t(g.size())) return flat(v);
      return Eigen::ArrayXd::Constant(g.size(), v[0]);
    };
    if (t.requires_grad(ia)) accumulate_broadcast(t, ia, g * expand(y));
    if (t.requires_grad(ib)) accumulate_broadcast(t, ib, g * expand(x));
  });
}

Var scale(Var a, double factor) {
  return unary(
      a, [factor](const auto& x) { return (x * factor).eval(); },
      [factor](const auto&, const auto&, const auto& g) { return (g * factor).eval(); });
}

Var add_scalar(Var a, double offset) {
  return unary(
      a, [offset](const auto& x) { return (x + offset).eval(); },
      [](const auto&, const auto&, const auto& g) { return Eigen::ArrayXd(g); });
}

Var add_bias(Var x, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != xv.cols()) shape_error("add_bias", xv, bv);
  Tensor out = Tensor::matrix(xv.rows(), xv.cols());
  view(out) = view(xv).rowwise() + view(bv).row(0);
  const std::size_t ix = x.id(), ib = bias.id();
  const Var in[] = {x, bias};
  return x.tape().record(std::move(out), in, [ix, ib](Tape& t, std::size_t self) {
    const auto g = view(t.grad(self));
    if (t.requires_grad(ix)) view(t.grad_buffer(ix)) += g;
    if (t.requires_grad(ib)) view(t.grad_buffer(ib)).row(0) += g.colwise().sum();
  });
}

Var tanh(Var a) {
  return unary(
      a, [](const auto& x) { return x.tanh().eval(); },
      [](const auto&, const auto& y, const auto& g) { return (g * (1.0 - y.square())).eval(); });
}

Var sigmoid(Var a) {
  return unary(
      a, [](const auto& x) { return (1.0 / (1.0 + (-x).exp())).eval(); },
      [](const auto&, const auto& y, const auto& g) { return (g * y * (1.0 - y)).eval(); });
}

Var relu(Var a) {
  return unary(
      a, [](const auto& x) { return x.max(0.0).eval(); },
      [](const auto& x, const auto&, const auto& g) {
        return (x > 0.0).select(g, 0.0).eval();
      });
}

Var concat_cols(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rows() != bv.rows()) shape_error("concat_cols", av, bv);
  const std::size_t m = av.rows(), na = av.cols(), nb = bv.cols();
  Tensor out = Tensor::matrix(m, na + nb);
  view(out).leftCols(Eigen::Index(na)) = view(av);
  view(out).rightCols(Eigen::Index(nb)) = view(bv);
  const std::size_t ia = a.id(), ib = b.id();
  const Var in[] = {a, b};
  return a.tape().record(std::move(out), in, [ia, ib, na, nb](Tape& t, std::size_t self) {
    const auto g = view(t.grad(self));
    if (t.requires_grad(ia)) view(t.grad_buffer(ia)) += g.leftCols(Eigen::Index(na));
    if (t.requires_grad(ib)) view(t.grad_buffer(ib)) += g.rightCols(Eigen::Index(nb));
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no operands");
  const std::size_t n = parts.front().cols();
  std::size_t m = 0;
  for (const Var& p : parts) {
    if (p.cols() != n) shape_error("concat_rows", parts.front().value(), p.value());
    m += p.rows();
  }
  Tensor out = Tensor::matrix(m, n);
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    std::copy(p.value().values().begin(), p.value().values().end(),
              out.values().begin() + std::ptrdiff_t(off * n));
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.rows();
  }
  return parts.front().tape().record(
      std::move(out), parts, [ids, offsets, n](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!t.requires_grad(ids[k])) continue;
          Tensor& buf = t.grad_buffer(ids[k]);
          const double* src = g.values().data() + offsets[k] * n;
          for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += src[i];
        }
      });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& av = a.value();
  if (begin + count > av.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + av.shape_string());
  }
  const std::size_t n = av.cols();
  Tensor out = Tensor::matrix(count, n);
  std::copy_n(av.values().begin() + std::ptrdiff_t(begin * n), count * n, out.values().begin());
  const std::size_t ia = a.id();
  const Var in[] = {a};
  return a.tape().record(std::move(out), in, [ia, begin, n](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const Tensor& g = t.grad(self);
    double* dst = t.grad_buffer(ia).values().data() + begin * n;
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  });
}

Var gather_rows(Var table, std::span<const int> ids) {
  const Tensor& tv = table.value();
  const std::size_t n = tv.cols();
  Tensor out = Tensor::matrix(ids.size(), n);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || std::size_t(ids[r]) >= tv.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(ids[r]) + " out of " +
                           tv.shape_string());
    }
    std::copy_n(tv.values().begin() + std::ptrdiff_t(std::size_t(ids[r]) * n), n,
                out.values().begin() + std::ptrdiff_t(r * n));
  }
  const std::size_t it = table.id();
  std::vector<int> idx(ids.begin(), ids.end());
  const Var in[] = {table};
  return table.tape().record(std::move(out), in, [it, idx, n](Tape& t, std::size_t self) {
    if (!t.requires_grad(it)) return;
    const Tensor& g = t.grad(self);
    Tensor& buf = t.grad_buffer(it);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (std::size_t c = 0; c < n; ++c) buf[std::size_t(idx[r]) * n + c] += g[r * n + c];
    }
  });
}

Var pick(Var a, std::span<const int> columns) {
  const Tensor& av = a.value();
  if (columns.size() != av.rows()) throw DimensionError("pick: one column per row required");
  Tensor out = Tensor::matrix(av.rows(), 1);
  for (std::size_t r = 0; r < columns.size(); ++r) {
    if (columns[r] < 0 || std::size_t(columns[r]) >= av.cols()) {
      throw DimensionError("pick: column " + std::to_string(columns[r]) + " out of range");
    }
    out[r] = av.at(r, std::size_t(columns[r]));
  }
  const std::size_t ia = a.id();
  std::vector<int> cols(columns.begin(), columns.end());
  const Var in[] = {a};
  return a.tape().record(std::move(out), in, [ia, cols](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const Tensor& g = t.grad(self);
    Tensor& buf = t.grad_buffer(ia);
    for (std::size_t r = 0; r < cols.size(); ++r) buf.at(r, std::size_t(cols[r])) += g[r];
  });
}

Var sum(Var a) {
  const std::size_t ia = a.id();
  const Var in[] = {a};
  return a.tape().record(Tensor::scalar(flat(a.value()).sum()), in,
                         [ia](Tape& t, std::size_t self) {
                           if (!t.requires_grad(ia)) return;
                           flat(t.grad_buffer(ia)) += t.grad(self)[0];
                         });
}

Var mean(Var a) {
  const double n = double(a.value().size());
  if (n == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var straight_through(Var x, Tensor forward_value) {
  if (!forward_value.same_shape(x.value())) shape_error("straight_through", x.value(), forward_value);
  const std::size_t ix = x.id();
  const Var in[] = {x};
  return x.tape().record(std::move(forward_value), in, [ix](Tape& t, std::size_t self) {
    if (!t.requires_grad(ix)) return;
    flat(t.grad_buffer(ix)) += flat(t.grad(self));
  });
}

// ---- losses -------------------------------------------------------------------

Var weighted_soft_cross_entropy_sum(Var logits, const Tensor& targets,
                                    std::span<const double> weights) {
  const Tensor& lv = logits.value();
  const std::size_t m = lv.rows(), c = lv.cols();
  if (c < 2) throw DimensionError("cross entropy needs at least two classes");
  if (weights.size() != m) throw DimensionError("cross entropy: weight count != rows");
  check_targets(targets, m, c);
  const RowMat logp = log_softmax(view(lv));
  double loss = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    if (weights[r] == 0.0) continue;
    loss -= weights[r] * (view(targets).row(Eigen::Index(r)).array() *
                          logp.row(Eigen::Index(r)).array())
                             .sum();
  }
  const std::size_t il = logits.id();
  std::vector<double> w(weights.begin(), weights.end());
  const Var in[] = {logits};
  return logits.tape().record(
      Tensor::scalar(loss), in, [il, logp, targets, w](Tape& t, std::size_t self) {
        if (!t.requires_grad(il)) return;
        const double g = t.grad(self)[0];
        auto buf = view(t.grad_buffer(il));
        const auto tv = view(targets);
        for (Eigen::Index r = 0; r < buf.rows(); ++r) {
          if (w[std::size_t(r)] == 0.0) continue;
          const double ts = tv.row(r).sum();
          buf.row(r).array() +=
              g * w[std::size_t(r)] * (logp.row(r).array().exp() * ts - tv.row(r).array());
        }
      });
}

Var weighted_cross_entropy_sum(Var logits, std::span<const int> classes,
                               std::span<const double> weights) {
  const Tensor& lv = logits.value();
  const std::size_t m = lv.rows(), c = lv.cols();
  if (c < 2) throw DimensionError("cross entropy needs at least two classes");
  if (weights.size() != m) throw DimensionError("cross entropy: weight count != rows");
  check_classes(classes, m, c);
  const RowMat logp = log_softmax(view(lv));
  double loss = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    if (weights[r] != 0.0) loss -= weights[r] * logp(Eigen::Index(r), classes[r]);
  }
  const std::size_t il = logits.id();
  std::vector<int> cls(classes.begin(), classes.end());
  std::vector<double> w(weights.begin(), weights.end());
  const Var in[] = {logits};
  return logits.tape().record(
      Tensor::scalar(loss), in, [il, logp, cls, w](Tape& t, std::size_t self) {
        if (!t.requires_grad(il)) return;
        const double g = t.grad(self)[0];
        auto buf = view(t.grad_buffer(il));
        for (Eigen::Index r = 0; r < buf.rows(); ++r) {
          const double wr = w[std::size_t(r)];
          if (wr == 0.0) continue;
          buf.row(r).array() += g * wr * logp.row(r).array().exp();
          buf(r, cls[std::size_t(r)]) -= g * wr;
        }
      });
}

Var softmax_cross_entropy(Var logits, const Tensor& targets) {
  const std::vector<double> w(logits.rows(), 1.0);
  return scale(weighted_soft_cross_entropy_sum(logits, targets, w), 1.0 / double(logits.rows()));
}

Var softmax_cross_entropy(Var logits, std::span<const int> classes) {
  const std::vector<double> w(logits.rows(), 1.0);
  return scale(weighted_cross_entropy_sum(logits, classes, w), 1.0 / double(logits.rows()));
}

Var mse(Var pred, Var target) {
  if (!pred.value().same_shape(target.value())) shape_error("mse", pred.value(), target.value());
  const double n = double(pred.value().size());
  const double loss = (flat(pred.value()) - flat(target.value())).square().sum() / n;
  const std::size_t ip = pred.id(), it = target.id();
  const Var in[] = {pred, target};
  return pred.tape().record(Tensor::scalar(loss), in, [ip, it, n](Tape& t, std::size_t self) {
    const Eigen::ArrayXd d =
        (2.0 * t.grad(self)[0] / n) * (flat(t.value(ip)) - flat(t.value(it)));
    if (t.requires_grad(ip)) flat(t.grad_buffer(ip)) += d;
    if (t.requires_grad(it)) flat(t.grad_buffer(it)) -= d;
  });
}

Var mse(Var pred, const Tensor& target) { return mse(pred, pred.tape().constant(target)); }

Var weighted_squared_error_sum(Var pred, const Tensor& target, std::span<const double> weights) {
  const Tensor& pv = pred.value();
  if (!pv.same_shape(target)) shape_error("squared error", pv, target);
  if (weights.size() != pv.rows()) throw DimensionError("squared error: weight count != rows");
  const double n = double(pv.cols());
  const RowMat diff = view(pv) - view(target);
  double loss = 0.0;
  for (Eigen::Index r = 0; r < diff.rows(); ++r) {
    loss += weights[std::size_t(r)] * diff.row(r).squaredNorm() / n;
  }
  const std::size_t ip = pred.id();
  std::vector<double> w(weights.begin(), weights.end());
  const Var in[] = {pred};
  return pred.tape().record(Tensor::scalar(loss), in, [ip, diff, w, n](Tape& t, std::size_t self) {
    if (!t.requires_grad(ip)) return;
    const double g = t.grad(self)[0];
    auto buf = view(t.grad_buffer(ip));
    for (Eigen::Index r = 0; r < buf.rows(); ++r) {
      buf.row(r) += (2.0 * g * w[std::size_t(r)] / n) * diff.row(r);
    }
  });
}

}  // namespace cslab::nn
