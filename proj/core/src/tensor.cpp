#include "grex/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <utility>

namespace grex {

namespace {

using EigenRowMajor =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const EigenRowMajor>;
using MutMap = Eigen::Map<EigenRowMajor>;

ConstMap map_of(const Tensor& t) { return ConstMap(t.data.data(), t.rows, t.cols); }
MutMap map_of(Tensor& t) { return MutMap(t.data.data(), t.rows, t.cols); }

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw Error("E_SHAPE", std::string(op) + ": incompatible shapes " + a.shape_str() +
                             " and " + b.shape_str());
}

void require_same_tape_target(const Tensor& t, const Tape* tape, const char* op) {
  if (t.taped() && t.tape != tape) {
    throw Error("E_STATE", std::string(op) + ": operands live on different tapes");
  }
}

bool broadcasts_as_row(const Tensor& a, const Tensor& b) {
  return b.rows == 1 && a.cols == b.cols && a.rows != 1;
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::full(int r, int c, double value) {
  Tensor t(r, c);
  std::fill(t.data.begin(), t.data.end(), value);
  return t;
}

Tensor Tensor::identity(int n) {
  Tensor t(n, n);
  for (int i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

Tensor Tensor::scalar(double v) {
  Tensor t(1, 1);
  t.data[0] = v;
  return t;
}

Tensor Tensor::from_row(std::span<const double> values) {
  Tensor t(1, static_cast<int>(values.size()));
  std::copy(values.begin(), values.end(), t.data.begin());
  return t;
}

double Tensor::value() const {
  if (!is_scalar()) {
    throw Error("E_SHAPE", "value(): tensor is " + shape_str() + ", expected 1x1");
  }
  return data[0];
}

Tensor Tensor::detached() const {
  Tensor t = *this;
  t.tape = nullptr;
  t.node = kNoNode;
  return t;
}

std::string Tensor::shape_str() const {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%dx%d", rows, cols);
  return buf;
}

// ---- finiteness ------------------------------------------------------------

namespace detail {

void check_finite(const Tensor& t, const char* op) {
  // Cheap screen first: a sum is non-finite iff some entry is non-finite
  // (or the sum itself overflows, in which case downstream math is lost
  // anyway). The exact offender is located only on failure.
  double acc = 0.0;
  for (double v : t.data) acc += v;
  if (std::isfinite(acc)) return;
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    if (!std::isfinite(t.data[i])) {
      throw Error("E_NONFINITE", std::string(op) + ": non-finite value at entry " +
                                     std::to_string(i) + " of a " + t.shape_str() +
                                     " tensor");
    }
  }
  throw Error("E_NONFINITE", std::string(op) + ": result magnitude overflowed");
}

Tape* merge_tapes(std::initializer_list<const Tensor*> operands) {
  Tape* tape = nullptr;
  for (const Tensor* t : operands) {
    if (t->taped()) {
      if (tape == nullptr) tape = t->tape;
    }
  }
  for (const Tensor* t : operands) require_same_tape_target(*t, tape, "op");
  return tape;
}

}  // namespace detail

// ---- Tape ------------------------------------------------------------------

Tensor& Tape::GradSink::slot(int node, int rows, int cols) {
  auto& grads = *tape_.live_grads_;
  Tensor& s = grads[static_cast<std::size_t>(node)];
  if (s.data.empty()) {
    s = Tensor(rows, cols);
  } else if (s.rows != rows || s.cols != cols) {
    throw Error("E_SHAPE", "grad-accumulate: slot is " + s.shape_str() + ", expected " +
                               Tensor(rows, cols).shape_str());
  }
  return s;
}

void Tape::GradSink::add(int node, const Tensor& g) {
  if (node == kNoNode) return;
  Tensor& s = slot(node, g.rows, g.cols);
  for (int i = 0; i < s.size(); ++i) s.data[i] += g.data[i];
}

void Tape::GradSink::add_scaled(int node, const Tensor& g, double scale) {
  if (node == kNoNode) return;
  Tensor& s = slot(node, g.rows, g.cols);
  for (int i = 0; i < s.size(); ++i) s.data[i] += scale * g.data[i];
}

void Tape::GradSink::add_row_scaled(int node, int row, const Tensor& g_row, double scale) {
  if (node == kNoNode) return;
  const NodeRecord& rec = tape_.nodes_[static_cast<std::size_t>(node)];
  if (g_row.rows != 1 || g_row.cols != rec.cols || row < 0 || row >= rec.rows) {
    throw Error("E_SHAPE", "grad-accumulate: row " + std::to_string(row) + " of a " +
                               Tensor(rec.rows, rec.cols).shape_str() + " node given a " +
                               g_row.shape_str() + " gradient");
  }
  Tensor& s = slot(node, rec.rows, rec.cols);
  double* dst = s.row_ptr(row);
  for (int c = 0; c < rec.cols; ++c) dst[c] += scale * g_row.data[static_cast<std::size_t>(c)];
}

Tensor Tape::watch(const Tensor& x) {
  Tensor taped = x;
  taped.tape = this;
  taped.node = record(x.rows, x.cols, {}, nullptr);
  return taped;
}

int Tape::record(int rows, int cols, std::vector<int> parents, BackwardFn backward) {
  nodes_.push_back(NodeRecord{rows, cols, std::move(parents), std::move(backward)});
  return static_cast<int>(nodes_.size()) - 1;
}

GradientMap Tape::backward(const Tensor& y) {
  if (!y.is_scalar()) {
    throw Error("E_STATE", "backward: y is " + y.shape_str() + ", expected a 1x1 scalar");
  }
  if (!y.taped() || y.tape != this) {
    throw Error("E_STATE", "backward: y is not recorded on this tape");
  }

  GradientMap out;
  out.grads_.resize(nodes_.size());
  live_grads_ = &out.grads_;
  out.grads_[static_cast<std::size_t>(y.node)] = Tensor::full(1, 1, 1.0);

  GradSink sink(*this);
  for (int id = y.node; id >= 0; --id) {
    const Tensor& g = out.grads_[static_cast<std::size_t>(id)];
    if (g.data.empty()) continue;       // node does not influence y
    const NodeRecord& rec = nodes_[static_cast<std::size_t>(id)];
    if (rec.backward) rec.backward(g, sink);
  }
  live_grads_ = nullptr;

  // Materialize zeros for untouched nodes so lookups always have a shape.
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (out.grads_[id].data.empty()) {
      out.grads_[id] = Tensor(nodes_[id].rows, nodes_[id].cols);
    }
  }
  return out;
}

const Tensor& GradientMap::at(int node) const {
  if (node < 0 || node >= static_cast<int>(grads_.size())) {
    throw Error("E_STATE", "gradient lookup for node " + std::to_string(node) +
                               " outside the tape");
  }
  return grads_[static_cast<std::size_t>(node)];
}

const Tensor& GradientMap::at(const Tensor& t) const {
  if (!t.taped()) throw Error("E_STATE", "gradient lookup for an untaped tensor");
  return at(t.node);
}

// ---- ops -------------------------------------------------------------------

namespace {

/// Shared tail of every op: finiteness check plus tape recording.
Tensor finish(Tensor result, const char* op, Tape* tape, std::vector<int> parents,
              Tape::BackwardFn backward) {
  detail::check_finite(result, op);
  if (tape != nullptr) {
    result.tape = tape;
    result.node = tape->record(result.rows, result.cols, std::move(parents),
                               std::move(backward));
  }
  return result;
}

Tensor matmul_values(const Tensor& a, const Tensor& b) {
  Tensor out(a.rows, b.cols);
  map_of(out).noalias() = map_of(a) * map_of(b);
  return out;
}

Tensor transpose_values(const Tensor& a) {
  Tensor out(a.cols, a.rows);
  map_of(out).noalias() = map_of(a).transpose();
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols != b.rows) shape_error("matmul", a, b);
  Tape* tape = detail::merge_tapes({&a, &b});
  Tensor out = matmul_values(a, b);

  Tape::BackwardFn backward;
  if (tape != nullptr) {
    const int pa = a.node, pb = b.node;
    const Tensor av = a.detached(), bv = b.detached();
    backward = [pa, pb, av, bv](const Tensor& g, Tape::GradSink& sink) {
      if (pa != kNoNode) sink.add(pa, matmul_values(g, transpose_values(bv)));
      if (pb != kNoNode) sink.add(pb, matmul_values(transpose_values(av), g));
    };
  }
  return finish(std::move(out), "matmul", tape, {a.node, b.node}, std::move(backward));
}

Tensor add(const Tensor& a, const Tensor& b) {
  const bool row_bcast = broadcasts_as_row(a, b);
  if (!row_bcast && (a.rows != b.rows || a.cols != b.cols)) shape_error("add", a, b);
  Tape* tape = detail::merge_tapes({&a, &b});

  Tensor out = a.detached();
  if (row_bcast) {
    for (int r = 0; r < out.rows; ++r) {
      double* dst = out.row_ptr(r);
      const double* src = b.row_ptr(0);
      for (int c = 0; c < out.cols; ++c) dst[c] += src[c];
    }
  } else {
    for (int i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
  }

  Tape::BackwardFn backward;
  if (tape != nullptr) {
    const int pa = a.node, pb = b.node;
    backward = [pa, pb, row_bcast](const Tensor& g, Tape::GradSink& sink) {
      sink.add(pa, g);
      if (pb == kNoNode) return;
      if (!row_bcast) {
        sink.add(pb, g);
      } else {
        Tensor gb(1, g.cols);
        for (int r = 0; r < g.rows; ++r) {
          const double* src = g.row_ptr(r);
          for (int c = 0; c < g.cols; ++c) gb.data[c] += src[c];
        }
        sink.add(pb, gb);
      }
    };
  }
  return finish(std::move(out), "add", tape, {a.node, b.node}, std::move(backward));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const bool row_bcast = broadcasts_as_row(a, b);
  if (!row_bcast && (a.rows != b.rows || a.cols != b.cols)) shape_error("sub", a, b);
  Tape* tape = detail::merge_tapes({&a, &b});

  Tensor out = a.detached();
  if (row_bcast) {
    for (int r = 0; r < out.rows; ++r) {
      double* dst = out.row_ptr(r);
      const double* src = b.row_ptr(0);
      for (int c = 0; c < out.cols; ++c) dst[c] -= src[c];
    }
  } else {
    for (int i = 0; i < out.size(); ++i) out.data[i] -= b.data[i];
  }

  Tape::BackwardFn backward;
  if (tape != nullptr) {
    const int pa = a.node, pb = b.node;
    backward = [pa, pb, row_bcast](const Tensor& g, Tape::GradSink& sink) {
      sink.add(pa, g);
      if (pb == kNoNode) return;
      if (!row_bcast) {
        sink.add_scaled(pb, g, -1.0);
      } else {
        Tensor gb(1, g.cols);
        for (int r = 0; r < g.rows; ++r) {
          const double* src = g.row_ptr(r);
          for (int c = 0; c < g.cols; ++c) gb.data[c] -= src[c];
        }
        sink.add(pb, gb);
      }
    };
  }
  return finish(std::move(out), "sub", tape, {a.node, b.node}, std::move(backward));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.rows != b.rows || a.cols != b.cols) shape_error("mul", a, b);
  Tape* tape = detail::merge_tapes({&a, &b});

  Tensor out = a.detached();
  for (int i = 0; i < out.size(); ++i) out.data[i] *= b.data[i];

  Tape::BackwardFn backward;
  if (tape != nullptr) {
    const int pa = a.node, pb = b.node;
    const Tensor av = a.detached(), bv = b.detached();
    backward = [pa, pb, av, bv](const Tensor& g, Tape::GradSink& sink) {
      if (pa != kNoNode) {
        Tensor ga = g;
        ga.tape = nullptr;
        ga.node = kNoNode;
        for (int i = 0; i < ga.size(); ++i) ga.data[i] *= bv.data[i];
        sink.add(pa, ga);
      }
      if (pb != kNoNode) {
        Tensor gb = g;
        gb.tape = nullptr;
        gb.node = kNoNode;
        for (int i = 0; i < gb.size(); ++i) gb.data[i] *= av.data[i];
        sink.add(pb, gb);
      }
    };
  }
  return finish(std::move(out), "mul", tape, {a.node, b.node}, std::move(backward));
}

Tensor scalar_mul(const Tensor& a, double s) {
  Tape* tape = detail::merge_tapes({&a});
  Tensor out = a.detached();
  for (double& v : out.data) v *= s;

  Tape::BackwardFn backward;
  if (tape != nullptr) {
    const int pa = a.node;
    backward = [pa, s](const Tensor& g, Tape::GradSink& sink) {
      sink.add_scaled(pa, g, s);
    };
  }
  return finish(std::move(out), "scalar_mul", tape, {a.node}, std::move(backward));
}

Tensor sigmoid(const Tensor& a) {
  Tape* tape = detail::merge_tapes({&a});
  Tensor out = a.detached();
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));

  Tape::BackwardFn backward;
  if (tape != nullptr) {
    const int pa = a.node;
    const Tensor ov = out;
    backward = [pa, ov](const Tensor& g, Tape::GradSink& sink) {
      Tensor ga = g;
      ga.tape = nullptr;
      ga.node = kNoNode;
      for (int i = 0; i < ga.size(); ++i) {
        ga.data[i] *= ov.data[i] * (1.0 - ov.data[i]);
      }
      sink.add(pa, ga);
    };
  }
  return finish(std::move(out), "sigmoid", tape, {a.node}, std::move(backward));
}

Tensor tanh(const Tensor& a) {
  Tape* tape = detail::merge_tapes({&a});
  Tensor out = a.detached();
  for (double& v : out.data) v = std::tanh(v);

  Tape::BackwardFn backward;
  if (tape != nullptr) {
    const int pa = a.node;
    const Tensor ov = out;
    backward = [pa, ov](const Tensor& g, Tape::GradSink& sink) {
      Tensor ga = g;
      ga.tape = nullptr;
      ga.node = kNoNode;
      for (int i = 0; i < ga.size(); ++i) {
        ga.data[i] *= 1.0 - ov.data[i] * ov.data[i];
      }
      sink.add(pa, ga);
    };
  }
  return finish(std::move(out), "tanh", tape, {a.node}, std::move(backward));
}

Tensor relu(const Tensor& a) {
  Tape* tape = detail::merge_tapes({&a});
  Tensor out = a.detached();
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;

  Tape::BackwardFn backward;
  if (tape != nullptr) {
    const int pa = a.node;
    const Tensor av = a.detached();
    backward = [pa, av](const Tensor& g, Tape::GradSink& sink) {
      Tensor ga = g;
      ga.tape = nullptr;
      ga.node = kNoNode;
      for (int i = 0; i < ga.size(); ++i) {
        if (av.data[i] <= 0.0) ga.data[i] = 0.0;
      }
      sink.add(pa, ga);
    };
  }
  return finish(std::move(out), "relu", tape, {a.node}, std::move(backward));
}

Tensor row_sum(const Tensor& a) {
  Tape* tape = detail::merge_tapes({&a});
  Tensor out(1, a.cols);
  for (int r = 0; r < a.rows; ++r) {
    const double* src = a.row_ptr(r);
    for (int c = 0; c < a.cols; ++c) out.data[c] += src[c];
  }

  Tape::BackwardFn backward;
  if (tape != nullptr) {
    const int pa = a.node;
    const int rows = a.rows;
    backward = [pa, rows](const Tensor& g, Tape::GradSink& sink) {
      Tensor ga(rows, g.cols);
      for (int r = 0; r < rows; ++r) {
        double* dst = ga.row_ptr(r);
        for (int c = 0; c < g.cols; ++c) dst[c] = g.data[c];
      }
      sink.add(pa, ga);
    };
  }
  return finish(std::move(out), "row_sum", tape, {a.node}, std::move(backward));
}

Tensor mean_all(const Tensor& a) {
  if (a.size() == 0) throw Error("E_SHAPE", "mean_all: empty tensor");
  Tape* tape = detail::merge_tapes({&a});
  double acc = 0.0;
  for (double v : a.data) acc += v;
  Tensor out = Tensor::scalar(acc / a.size());

  Tape::BackwardFn backward;
  if (tape != nullptr) {
    const int pa = a.node;
    const int rows = a.rows, cols = a.cols;
    backward = [pa, rows, cols](const Tensor& g, Tape::GradSink& sink) {
      const double share = g.value() / (static_cast<double>(rows) * cols);
      sink.add(pa, Tensor::full(rows, cols, share));
    };
  }
  return finish(std::move(out), "mean_all", tape, {a.node}, std::move(backward));
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows != b.rows) shape_error("concat_cols", a, b);
  Tape* tape = detail::merge_tapes({&a, &b});
  Tensor out(a.rows, a.cols + b.cols);
  for (int r = 0; r < a.rows; ++r) {
    double* dst = out.row_ptr(r);
    std::copy(a.row_ptr(r), a.row_ptr(r) + a.cols, dst);
    std::copy(b.row_ptr(r), b.row_ptr(r) + b.cols, dst + a.cols);
  }

  Tape::BackwardFn backward;
  if (tape != nullptr) {
    const int pa = a.node, pb = b.node;
    const int ca = a.cols, cb = b.cols;
    backward = [pa, pb, ca, cb](const Tensor& g, Tape::GradSink& sink) {
      if (pa != kNoNode) {
        Tensor ga(g.rows, ca);
        for (int r = 0; r < g.rows; ++r) {
          std::copy(g.row_ptr(r), g.row_ptr(r) + ca, ga.row_ptr(r));
        }
        sink.add(pa, ga);
      }
      if (pb != kNoNode) {
        Tensor gb(g.rows, cb);
        for (int r = 0; r < g.rows; ++r) {
          std::copy(g.row_ptr(r) + ca, g.row_ptr(r) + ca + cb, gb.row_ptr(r));
        }
        sink.add(pb, gb);
      }
    };
  }
  return finish(std::move(out), "concat_cols", tape, {a.node, b.node}, std::move(backward));
}

Tensor select_rows(const Tensor& a, std::span<const int> row_ids) {
  for (int r : row_ids) {
    if (r < 0 || r >= a.rows) {
      throw Error("E_RANGE", "select_rows: row " + std::to_string(r) +
                                 " outside a " + a.shape_str() + " tensor");
    }
  }
  Tape* tape = detail::merge_tapes({&a});
  Tensor out(static_cast<int>(row_ids.size()), a.cols);
  for (std::size_t i = 0; i < row_ids.size(); ++i) {
    std::copy(a.row_ptr(row_ids[i]), a.row_ptr(row_ids[i]) + a.cols,
              out.row_ptr(static_cast<int>(i)));
  }

  Tape::BackwardFn backward;
  if (tape != nullptr) {
    const int pa = a.node;
    const int rows = a.rows;
    const std::vector<int> ids(row_ids.begin(), row_ids.end());
    backward = [pa, rows, ids](const Tensor& g, Tape::GradSink& sink) {
      Tensor ga(rows, g.cols);
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const double* src = g.row_ptr(static_cast<int>(i));
        double* dst = ga.row_ptr(ids[i]);
        for (int c = 0; c < g.cols; ++c) dst[c] += src[c];
      }
      sink.add(pa, ga);
    };
  }
  return finish(std::move(out), "select_rows", tape, {a.node}, std::move(backward));
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (static_cast<int>(labels.size()) != logits.rows) {
    throw Error("E_SHAPE", "softmax_cross_entropy: " + std::to_string(labels.size()) +
                               " labels for " + logits.shape_str() + " logits");
  }
  for (int y : labels) {
    if (y < 0 || y >= logits.cols) {
      throw Error("E_RANGE", "softmax_cross_entropy: label " + std::to_string(y) +
                                 " outside " + std::to_string(logits.cols) + " classes");
    }
  }
  Tape* tape = detail::merge_tapes({&logits});

  // Stable log-softmax; keep the probabilities for the backward pass.
  Tensor probs(logits.rows, logits.cols);
  double loss = 0.0;
  for (int r = 0; r < logits.rows; ++r) {
    const double* row = logits.row_ptr(r);
    double m = row[0];
    for (int c = 1; c < logits.cols; ++c) m = std::max(m, row[c]);
    double z = 0.0;
    for (int c = 0; c < logits.cols; ++c) z += std::exp(row[c] - m);
    const double log_z = std::log(z) + m;
    loss += log_z - row[labels[r]];
    double* p = probs.row_ptr(r);
    for (int c = 0; c < logits.cols; ++c) p[c] = std::exp(row[c] - log_z);
  }
  Tensor out = Tensor::scalar(loss / logits.rows);

  Tape::BackwardFn backward;
  if (tape != nullptr) {
    const int pa = logits.node;
    const std::vector<int> ys(labels.begin(), labels.end());
    backward = [pa, probs, ys](const Tensor& g, Tape::GradSink& sink) {
      const double scale = g.value() / static_cast<double>(probs.rows);
      Tensor ga = probs;
      for (int r = 0; r < ga.rows; ++r) ga(r, ys[static_cast<std::size_t>(r)]) -= 1.0;
      for (double& v : ga.data) v *= scale;
      sink.add(pa, ga);
    };
  }
  return finish(std::move(out), "softmax_cross_entropy", tape, {logits.node},
                std::move(backward));
}

std::vector<int> argmax_rows(const Tensor& t) {
  std::vector<int> out(static_cast<std::size_t>(t.rows));
  for (int r = 0; r < t.rows; ++r) {
    const double* row = t.row_ptr(r);
    int best = 0;
    for (int c = 1; c < t.cols; ++c) {
      if (row[c] > row[best]) best = c;
    }
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double step) {
  if (!(step > 0.0)) throw Error("E_RANGE", "grad_check: step must be positive");

  Tape tape;
  Tensor watched = tape.watch(x.detached());
  Tensor y = f(watched);
  if (!y.is_scalar()) {
    throw Error("E_SHAPE", "grad_check: f returned " + y.shape_str() + ", expected 1x1");
  }
  detail::check_finite(y, "grad_check");
  const GradientMap grads = tape.backward(y);
  const Tensor& analytic = grads.at(watched);

  double worst = 0.0;
  Tensor probe = x.detached();
  for (int i = 0; i < probe.size(); ++i) {
    const double saved = probe.data[i];
    probe.data[i] = saved + step;
    const double up = f(probe).value();
    probe.data[i] = saved - step;
    const double down = f(probe).value();
    probe.data[i] = saved;
    const double cd = (up - down) / (2.0 * step);
    const double a = analytic.data[i];
    const double err = std::abs(a - cd) / std::max({std::abs(a), std::abs(cd), 1e-12});
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace grex
