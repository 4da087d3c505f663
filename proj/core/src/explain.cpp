#include "grex/explain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "grex/parallel.hpp"

namespace grex {

std::string method_name(Method m) {
  switch (m) {
    case Method::kLime: return "lime";
    case Method::kSaliency: return "saliency";
    case Method::kGradCam: return "gradcam";
    case Method::kRemoval: return "removal";
    case Method::kRandom: return "random";
  }
  throw Error("E_RANGE", "unknown method enum value");
}

Method method_from_name(const std::string& name) {
  for (Method m : kAllMethods) {
    if (method_name(m) == name) return m;
  }
  throw Error("E_USAGE", "unknown method '" + name +
                             "' (expected lime|saliency|gradcam|removal|random)");
}

EdgeWeights perturb_edges(const Graph& g, double p, Rng& rng, bool binary) {
  if (!(p > 0.0 && p < 1.0)) {
    throw Error("E_RANGE", "perturbation probability " + std::to_string(p) +
                               " outside (0,1)");
  }
  std::vector<double> w(static_cast<std::size_t>(g.num_edges()), 1.0);
  for (double& v : w) {
    if (rng.bernoulli(p)) v = binary ? 0.0 : rng.uniform01();
  }
  return EdgeWeights(g, std::move(w));
}

double kernel_weight(const EdgeWeights& x, int n, double sigma) {
  if (!(sigma > 0.0)) throw Error("E_RANGE", "kernel sigma must be positive");
  const double d = static_cast<double>(n) - x.l1_norm();
  return std::exp(-(d * d) / (sigma * sigma));
}

// ---- lasso ------------------------------------------------------------------

namespace {

double soft_threshold(double a, double t) {
  if (a > t) return a - t;
  if (a < -t) return a + t;
  return 0.0;
}

constexpr double kLassoTol = 1e-8;
constexpr int kLassoMaxSweeps = 10000;

}  // namespace

LassoFit fit_lasso(const Tensor& x, const std::vector<double>& y,
                   const std::vector<double>& sample_weights, double lambda) {
  const int m = x.rows;
  const int n = x.cols;
  if (m < 1) throw Error("E_RANGE", "lasso needs at least one sample");
  if (static_cast<int>(y.size()) != m || static_cast<int>(sample_weights.size()) != m) {
    throw Error("E_SHAPE", "lasso given " + std::to_string(y.size()) + " targets and " +
                               std::to_string(sample_weights.size()) + " weights for " +
                               std::to_string(m) + " samples");
  }
  if (!(lambda >= 0.0)) throw Error("E_RANGE", "lasso lambda must be >= 0");
  detail::check_finite(x, "fit_lasso(x)");
  double weight_sum = 0.0;
  for (int k = 0; k < m; ++k) {
    if (!std::isfinite(y[static_cast<std::size_t>(k)]) ||
        !std::isfinite(sample_weights[static_cast<std::size_t>(k)])) {
      throw Error("E_NONFINITE", "lasso inputs contain a non-finite value at sample " +
                                     std::to_string(k));
    }
    if (sample_weights[static_cast<std::size_t>(k)] < 0.0) {
      throw Error("E_RANGE", "negative sample weight at sample " + std::to_string(k));
    }
    weight_sum += sample_weights[static_cast<std::size_t>(k)];
  }
  if (weight_sum <= 0.0) throw Error("E_RANGE", "all-zero sample weights");

  // Column-major copy for contiguous coordinate updates.
  std::vector<double> col(static_cast<std::size_t>(n) * m);
  std::vector<double> z(static_cast<std::size_t>(n));  // sum_k s_k x_kj^2
  for (int j = 0; j < n; ++j) {
    double* cj = col.data() + static_cast<std::size_t>(j) * m;
    double zj = 0.0;
    for (int k = 0; k < m; ++k) {
      const double v = x(k, j);
      cj[k] = v;
      zj += sample_weights[static_cast<std::size_t>(k)] * v * v;
    }
    z[static_cast<std::size_t>(j)] = zj;
  }

  LassoFit fit;
  fit.coefficients.assign(static_cast<std::size_t>(n), 0.0);
  std::vector<double> residual(y);  // r_k = y_k - b - x_k . w
  const double threshold = lambda / 2.0;

  auto update_intercept = [&]() {
    double num = 0.0;
    for (int k = 0; k < m; ++k) {
      num += sample_weights[static_cast<std::size_t>(k)] *
             residual[static_cast<std::size_t>(k)];
    }
    const double delta = num / weight_sum;
    fit.intercept += delta;
    for (double& r : residual) r -= delta;
    return std::abs(delta);
  };

  auto update_coordinate = [&](int j) {
    const double zj = z[static_cast<std::size_t>(j)];
    if (zj <= 0.0) return 0.0;  // constant-zero column keeps coefficient 0
    const double* cj = col.data() + static_cast<std::size_t>(j) * m;
    double dot = 0.0;
    for (int k = 0; k < m; ++k) {
      dot += sample_weights[static_cast<std::size_t>(k)] * cj[k] *
             residual[static_cast<std::size_t>(k)];
    }
    double& wj = fit.coefficients[static_cast<std::size_t>(j)];
    const double candidate = soft_threshold(dot + wj * zj, threshold) / zj;
    const double delta = candidate - wj;
    if (delta != 0.0) {
      wj = candidate;
      for (int k = 0; k < m; ++k) residual[static_cast<std::size_t>(k)] -= delta * cj[k];
    }
    return std::abs(delta);
  };

  // Cyclic sweeps with an active-set shortcut: after a full sweep, iterate
  // only the nonzero coordinates until they settle, then re-check everything.
  // Convergence is always certified by a full sweep.
  std::vector<int> active;
  bool need_full = true;
  while (fit.sweeps < kLassoMaxSweeps) {
    ++fit.sweeps;
    double max_change = update_intercept();
    if (need_full) {
      active.clear();
      for (int j = 0; j < n; ++j) {
        max_change = std::max(max_change, update_coordinate(j));
        if (fit.coefficients[static_cast<std::size_t>(j)] != 0.0) active.push_back(j);
      }
      if (max_change < kLassoTol) break;
      need_full = false;
    } else {
      for (int j : active) max_change = std::max(max_change, update_coordinate(j));
      if (max_change < kLassoTol) need_full = true;  // certify with a full sweep
    }
  }
  return fit;
}

// ---- explainers ---------------------------------------------------------------

namespace {

nlohmann::ordered_json lime_config_json(const LimeConfig& c) {
  return nlohmann::ordered_json{{"p", c.p},
                                {"m", c.m},
                                {"sigma", c.sigma},
                                {"lambda", c.lambda},
                                {"binary_perturbation", c.binary_perturbation}};
}

/// Traced forward + backward shared by saliency and grad-cam.
struct TracedGradients {
  MessageTrace trace;
  GradientMap grads;
};

TracedGradients traced_backward(const GraphModel& model, const Graph& g,
                                const TargetSpec& target, ForwardCounter* counter) {
  TracedGradients out;
  Tape tape;
  ForwardHooks hooks;
  hooks.tape = &tape;
  hooks.trace = &out.trace;
  hooks.counter = counter;
  const Tensor y = predict_scalar(model, g, uniform_weights(g, 1.0), target, hooks);
  out.grads = tape.backward(y);
  return out;
}

void check_importance_finite(const std::vector<double>& importance, const char* who) {
  for (double v : importance) {
    if (!std::isfinite(v)) {
      throw Error("E_NONFINITE", std::string(who) + " produced a non-finite importance");
    }
  }
}

}  // namespace

Explanation explain_lime(const GraphModel& model, const Graph& g, const TargetSpec& target,
                         const LimeConfig& config, ForwardCounter* counter) {
  const int n = g.num_edges();
  LimeConfig c = config;
  if (c.m == 0) c.m = std::min(2000, 50 * std::max(n, 1));
  if (c.sigma == 0.0) c.sigma = std::sqrt(std::max(n, 1));
  if (c.m < 1) throw Error("E_RANGE", "lime sample count must be >= 1");
  if (!(c.p > 0.0 && c.p < 1.0)) {
    throw Error("E_RANGE", "lime perturbation probability outside (0,1)");
  }
  if (!(c.sigma > 0.0)) throw Error("E_RANGE", "lime sigma must be positive");
  if (!(c.lambda >= 0.0)) throw Error("E_RANGE", "lime lambda must be >= 0");

  const TargetSpec resolved = resolve_target(model, g, target, counter);
  const Tensor input_cache = model.input_product(g);

  Tensor x(c.m, n);
  std::vector<double> y(static_cast<std::size_t>(c.m));
  std::vector<double> kernel(static_cast<std::size_t>(c.m));
  parallel_for(static_cast<std::size_t>(c.m), c.jobs, [&](std::size_t k) {
    Rng rng(Rng::derive(c.seed, k));
    const EdgeWeights xw = perturb_edges(g, c.p, rng, c.binary_perturbation);
    ForwardHooks hooks;
    hooks.counter = counter;
    hooks.input_cache = &input_cache;
    y[k] = predict_scalar(model, g, xw, resolved, hooks).value();
    std::copy(xw.values().begin(), xw.values().end(), x.row_ptr(static_cast<int>(k)));
    kernel[k] = kernel_weight(xw, n, c.sigma);
  });

  const LassoFit fit = fit_lasso(x, y, kernel, c.lambda);
  Explanation e;
  e.method = Method::kLime;
  e.importance = fit.coefficients;
  e.target = resolved;
  e.seed = c.seed;
  e.config = lime_config_json(c);
  check_importance_finite(e.importance, "lime");
  return e;
}

Explanation explain_saliency(const GraphModel& model, const Graph& g,
                             const TargetSpec& target, ForwardCounter* counter) {
  const TargetSpec resolved = resolve_target(model, g, target, counter);
  const TracedGradients tg = traced_backward(model, g, resolved, counter);

  Explanation e;
  e.method = Method::kSaliency;
  e.target = resolved;
  e.importance.assign(static_cast<std::size_t>(g.num_edges()), 0.0);
  for (const auto& step : tg.trace.steps) {
    for (const auto& msg : step.messages) {
      const Tensor& grad = tg.grads.at(msg.node);
      double s = 0.0;
      for (double v : grad.data) s += v;
      e.importance[static_cast<std::size_t>(msg.edge)] += s;
    }
  }
  check_importance_finite(e.importance, "saliency");
  return e;
}

Explanation explain_gradcam(const GraphModel& model, const Graph& g,
                            const TargetSpec& target, ForwardCounter* counter) {
  const TargetSpec resolved = resolve_target(model, g, target, counter);
  const TracedGradients tg = traced_backward(model, g, resolved, counter);
  const double num_nodes = static_cast<double>(g.num_nodes());

  Explanation e;
  e.method = Method::kGradCam;
  e.target = resolved;
  e.importance.assign(static_cast<std::size_t>(g.num_edges()), 0.0);
  for (const auto& step : tg.trace.steps) {
    if (step.messages.empty()) continue;
    const int d = step.messages.front().value.cols;
    // alpha_k = (1/N) sum_v d y / d (summed incoming message of v)_k
    std::vector<double> alpha(static_cast<std::size_t>(d), 0.0);
    for (int agg_node : step.aggregate_nodes) {
      if (agg_node == kNoNode) continue;
      const Tensor& grad = tg.grads.at(agg_node);
      for (int j = 0; j < d; ++j) alpha[static_cast<std::size_t>(j)] += grad.data[static_cast<std::size_t>(j)];
    }
    for (double& a : alpha) a /= num_nodes;
    // importance += alpha . message for each direction
    for (const auto& msg : step.messages) {
      double dot = 0.0;
      for (int j = 0; j < d; ++j) {
        dot += alpha[static_cast<std::size_t>(j)] * msg.value.data[static_cast<std::size_t>(j)];
      }
      e.importance[static_cast<std::size_t>(msg.edge)] += dot;
    }
  }
  check_importance_finite(e.importance, "gradcam");
  return e;
}

Explanation explain_removal(const GraphModel& model, const Graph& g,
                            const TargetSpec& target, ForwardCounter* counter, int jobs) {
  const TargetSpec resolved = resolve_target(model, g, target, counter);
  const Tensor input_cache = model.input_product(g);
  const EdgeWeights ones = uniform_weights(g, 1.0);

  ForwardHooks hooks;
  hooks.counter = counter;
  hooks.input_cache = &input_cache;
  const double y0 = predict_scalar(model, g, ones, resolved, hooks).value();

  Explanation e;
  e.method = Method::kRemoval;
  e.target = resolved;
  e.importance.assign(static_cast<std::size_t>(g.num_edges()), 0.0);
  parallel_for(static_cast<std::size_t>(g.num_edges()), jobs, [&](std::size_t i) {
    ForwardHooks h;
    h.counter = counter;
    h.input_cache = &input_cache;
    const double yi =
        predict_scalar(model, g, ones.with_weight(static_cast<EdgeId>(i), 0.0), resolved, h)
            .value();
    e.importance[i] = y0 - yi;
  });
  check_importance_finite(e.importance, "removal");
  return e;
}

Explanation explain_random(const Graph& g, std::uint64_t seed) {
  Rng rng(seed);
  Explanation e;
  e.method = Method::kRandom;
  e.seed = seed;
  e.importance.resize(static_cast<std::size_t>(g.num_edges()));
  for (double& v : e.importance) v = rng.uniform01();
  return e;
}

std::vector<EdgeId> top_k_edges(const Explanation& e, int k) {
  if (k < 1) throw Error("E_RANGE", "top-k needs k >= 1");
  std::vector<EdgeId> ids(e.importance.size());
  std::iota(ids.begin(), ids.end(), 0);
  const auto better = [&](EdgeId a, EdgeId b) {
    const double ia = e.importance[static_cast<std::size_t>(a)];
    const double ib = e.importance[static_cast<std::size_t>(b)];
    if (ia != ib) return ia > ib;
    return a < b;
  };
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(take),
                    ids.end(), better);
  ids.resize(take);
  return ids;
}

// ---- files -----------------------------------------------------------------

void save_explanation(const std::filesystem::path& path, const ExplanationRecord& record) {
  nlohmann::ordered_json j;
  j["method"] = method_name(record.explanation.method);
  j["dataset"] = record.dataset;
  j["graph"] = record.graph_name;
  j["graph_index"] = record.graph_index;
  nlohmann::ordered_json target;
  target["node"] = record.explanation.target.node;
  if (record.explanation.target.class_id) {
    target["class"] = *record.explanation.target.class_id;
  }
  j["target"] = std::move(target);
  j["seed"] = record.explanation.seed;
  j["config"] = record.explanation.config;
  j["importance"] = record.explanation.importance;

  std::ofstream out(path);
  if (!out) throw Error("E_IO", "cannot write explanation '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

ExplanationRecord load_explanation(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("E_IO", "cannot open explanation '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
    ExplanationRecord record;
    record.explanation.method = method_from_name(j.at("method").get<std::string>());
    record.dataset = j.value("dataset", std::string{});
    record.graph_name = j.value("graph", std::string{});
    record.graph_index = j.value("graph_index", 0);
    record.explanation.target.node = j.at("target").at("node").get<int>();
    if (j.at("target").contains("class")) {
      record.explanation.target.class_id = j["target"]["class"].get<int>();
    }
    record.explanation.seed = j.value("seed", 0ULL);
    record.explanation.config = j.value("config", nlohmann::json::object());
    record.explanation.importance = j.at("importance").get<std::vector<double>>();
    return record;
  } catch (const nlohmann::json::exception& e) {
    throw Error("E_FORMAT", "explanation '" + path.string() + "': " + e.what());
  }
}

void write_explanation_csv(const std::filesystem::path& path, const Explanation& e,
                           const Graph& g) {
  if (static_cast<int>(e.importance.size()) != g.num_edges()) {
    throw Error("E_SHAPE", "explanation covers " + std::to_string(e.importance.size()) +
                               " edges but the graph has " + std::to_string(g.num_edges()));
  }
  std::ofstream out(path);
  if (!out) throw Error("E_IO", "cannot write '" + path.string() + "'");
  out << "edge_id,u,v,importance\n";
  for (EdgeId i = 0; i < g.num_edges(); ++i) {
    const auto& edge = g.edge(i);
    out << i << ',' << edge.u << ',' << edge.v << ','
        << nlohmann::json(e.importance[static_cast<std::size_t>(i)]).dump() << '\n';
  }
}

}  // namespace grex
