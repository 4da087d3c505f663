#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "grex/error.hpp"

namespace grex {

class Tape;

inline constexpr int kNoNode = -1;

/// Dense row-major matrix of 64-bit floats, optionally attached to a Tape.
/// A Tensor with tape == nullptr is a plain value; operations on it compute
/// values only. When any operand is taped, the producing operation records a
/// node on that tape so backward() can reach it. Every operation rejects
/// non-finite results at the site that produced them.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;  // row-major, size rows*cols
  Tape* tape = nullptr;
  int node = kNoNode;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  static Tensor full(int r, int c, double value);
  static Tensor identity(int n);
  static Tensor scalar(double v);
  static Tensor from_row(std::span<const double> values);

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  double* row_ptr(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
  const double* row_ptr(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }

  int size() const { return rows * cols; }
  bool is_scalar() const { return rows == 1 && cols == 1; }
  bool taped() const { return tape != nullptr && node != kNoNode; }

  /// Value of a 1x1 tensor; E_SHAPE otherwise.
  double value() const;

  /// Detached copy: same values, no tape handle.
  Tensor detached() const;

  std::string shape_str() const;
};

/// Gradients produced by Tape::backward, indexed by tape node id. Nodes the
/// backward sweep never touched report a zero tensor of the node's shape.
class GradientMap {
 public:
  const Tensor& at(int node) const;
  const Tensor& at(const Tensor& t) const;

 private:
  friend class Tape;
  std::vector<Tensor> grads_;  // one slot per tape node; empty data => zero
};

/// Reverse-mode tape. Records one node per operation output, in creation
/// order (which is a topological order); backward() visits them exactly once
/// in reverse. A tape serves one forward+backward and is not thread-safe;
/// run concurrent evaluations on separate tapes.
class Tape {
 public:
  /// Callback that pushes this node's gradient into its parents.
  /// `add(parent_node, g)` accumulates; parents that are untaped constants
  /// were recorded as kNoNode and add() ignores them.
  class GradSink {
   public:
    void add(int node, const Tensor& g);
    void add_scaled(int node, const Tensor& g, double scale);
    /// Accumulates scale * g_row (1 x cols) into one row of the node's
    /// gradient. For ops that touch a single row of a large parent.
    void add_row_scaled(int node, int row, const Tensor& g_row, double scale);

   private:
    friend class Tape;
    explicit GradSink(Tape& tape) : tape_(tape) {}
    Tensor& slot(int node, int rows, int cols);
    Tape& tape_;
  };

  using BackwardFn = std::function<void(const Tensor& grad_out, GradSink& sink)>;

  /// Registers x as a differentiable leaf and returns a taped copy of it.
  Tensor watch(const Tensor& x);

  /// Records an operation node and returns its id. Parents may contain
  /// kNoNode entries for untaped operands. `backward` may be empty for
  /// leaves.
  int record(int rows, int cols, std::vector<int> parents, BackwardFn backward);

  /// Gradient of scalar y with respect to every node on this tape.
  /// y must be a 1x1 tensor recorded on this tape.
  GradientMap backward(const Tensor& y);

  int num_nodes() const { return static_cast<int>(nodes_.size()); }

 private:
  struct NodeRecord {
    int rows = 0;
    int cols = 0;
    std::vector<int> parents;
    BackwardFn backward;
  };

  std::vector<NodeRecord> nodes_;
  std::vector<Tensor>* live_grads_ = nullptr;  // set during backward()
};

// ---- Core operations ------------------------------------------------------
//
// Shapes follow ordinary matrix conventions. add/sub accept equal shapes or a
// 1xC row-vector second operand broadcast across rows (the bias case); no
// other broadcasting exists.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scalar_mul(const Tensor& a, double s);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor row_sum(const Tensor& a);   // adds the rows together -> 1 x cols
Tensor mean_all(const Tensor& a);  // mean of all entries -> 1 x 1
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor select_rows(const Tensor& a, std::span<const int> row_ids);

/// Mean softmax cross-entropy over rows: labels[i] is the class of row i.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Argmax of each row (ties resolve to the lowest column).
std::vector<int> argmax_rows(const Tensor& t);

/// Max relative error between analytic gradients of f at x and central finite
/// differences with the given step:
///   max_i |analytic_i - cd_i| / max(|analytic_i|, |cd_i|, 1e-12).
/// f must map a (possibly taped) tensor to a scalar tensor using grex ops.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double step);

namespace detail {
/// E_NONFINITE unless every entry of t is finite; `op` names the producer.
void check_finite(const Tensor& t, const char* op);
/// Tape shared by the operands (E_STATE if two operands live on different
/// tapes); nullptr when all operands are constants.
Tape* merge_tapes(std::initializer_list<const Tensor*> operands);
}  // namespace detail

}  // namespace grex
