#include "xem/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "xem/error.hpp"
#include "xem/util.hpp"

namespace xem {

using nlohmann::json;

namespace {

void add_scaled(std::span<double> dst, std::span<const double> src, double scale) {
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += scale * src[k];
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

ParamGradients zero_gradients(const GcnParams& p) {
  return {Matrix(p.w1.rows(), p.w1.cols()), Matrix(p.w2.rows(), p.w2.cols()),
          std::vector<double>(p.head.size(), 0.0), 0.0};
}

void check_graph(const EntityGraph& graph, const GcnParams& params) {
  params.check_shapes();
  if (graph.dimension() != params.dimension()) {
    throw Error(ErrorCode::kShape, "graph features are " + std::to_string(graph.node_count()) +
                                       "x" + std::to_string(graph.dimension()) +
                                       " but W1 is " + params.w1.shape());
  }
}

}  // namespace

std::string Matrix::shape() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

void GcnParams::check_shapes() const {
  const std::size_t h = w1.cols();
  if (w2.rows() != h || w2.cols() != h || head.size() != h) {
    throw Error(ErrorCode::kShape, "inconsistent parameter shapes: W1 " + w1.shape() + ", W2 " +
                                       w2.shape() + ", head " + std::to_string(head.size()));
  }
}

double GcnParams::squared_norm() const {
  double s = bias * bias;
  for (double x : w1.data()) s += x * x;
  for (double x : w2.data()) s += x * x;
  for (double x : head) s += x * x;
  return s;
}

std::string GcnParams::fingerprint() const { return xem::fingerprint(model_to_json(*this).dump()); }

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorCode::kConfig, "learning_rate must be > 0");
  }
  if (epochs < 1) throw Error(ErrorCode::kConfig, "epochs must be >= 1");
  if (hidden < 1) throw Error(ErrorCode::kConfig, "hidden width must be >= 1");
  if (!(l2 >= 0.0)) throw Error(ErrorCode::kConfig, "l2 must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorCode::kConfig, "momentum must be in [0,1)");
}

GcnParams init_params(std::size_t dimension, std::size_t hidden, std::uint64_t seed) {
  GcnParams p;
  p.w1 = Matrix(dimension, hidden);
  p.w2 = Matrix(hidden, hidden);
  p.head.assign(hidden, 0.0);
  CounterRng rng(seed, 0x67636eULL);
  const double a1 = 1.0 / std::sqrt(static_cast<double>(dimension));
  const double a2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (double& x : p.w1.data()) x = rng.uniform(-a1, a1);
  for (double& x : p.w2.data()) x = rng.uniform(-a2, a2);
  for (double& x : p.head) x = rng.uniform(-a2, a2);
  return p;
}

ComputationPlan ComputationPlan::full(const EntityGraph& graph) {
  ComputationPlan plan;
  const std::size_t n = graph.node_count();
  const auto& adj = graph.adjacency();
  plan.input_nodes_.resize(n);
  for (std::size_t i = 0; i < n; ++i) plan.input_nodes_[i] = i;
  plan.hidden_nodes_ = plan.input_nodes_;
  plan.output_nodes_ = plan.input_nodes_;
  plan.first_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = adj.row_start[i]; k < adj.row_start[i + 1]; ++k) {
      plan.first_[i].emplace_back(adj.column[k], adj.value[k]);
    }
  }
  plan.second_ = plan.first_;
  plan.output_row_.resize(n);
  for (std::size_t i = 0; i < n; ++i) plan.output_row_[i] = static_cast<long>(i);
  return plan;
}

ComputationPlan ComputationPlan::around(const EntityGraph& graph, std::vector<std::size_t> targets) {
  const auto& adj = graph.adjacency();
  const std::size_t n = graph.node_count();
  std::sort(targets.begin(), targets.end());
  targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
  for (auto t : targets) {
    if (t >= n) throw Error(ErrorCode::kLookup, "target node out of range");
  }
  auto expand = [&](const std::vector<std::size_t>& nodes) {
    std::vector<std::size_t> out;
    for (auto i : nodes) {
      for (std::size_t k = adj.row_start[i]; k < adj.row_start[i + 1]; ++k) out.push_back(adj.column[k]);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  };
  ComputationPlan plan;
  plan.output_nodes_ = targets;
  plan.hidden_nodes_ = expand(targets);
  plan.input_nodes_ = expand(plan.hidden_nodes_);

  auto local_rows = [](const std::vector<std::size_t>& nodes) {
    std::unordered_map<std::size_t, std::size_t> m;
    for (std::size_t i = 0; i < nodes.size(); ++i) m.emplace(nodes[i], i);
    return m;
  };
  const auto input_row = local_rows(plan.input_nodes_);
  const auto hidden_row = local_rows(plan.hidden_nodes_);
  for (auto i : plan.hidden_nodes_) {
    auto& agg = plan.first_.emplace_back();
    for (std::size_t k = adj.row_start[i]; k < adj.row_start[i + 1]; ++k) {
      agg.emplace_back(input_row.at(adj.column[k]), adj.value[k]);
    }
  }
  for (auto i : plan.output_nodes_) {
    auto& agg = plan.second_.emplace_back();
    for (std::size_t k = adj.row_start[i]; k < adj.row_start[i + 1]; ++k) {
      agg.emplace_back(hidden_row.at(adj.column[k]), adj.value[k]);
    }
  }
  plan.output_row_.assign(n, -1);
  for (std::size_t r = 0; r < targets.size(); ++r) plan.output_row_[targets[r]] = static_cast<long>(r);
  return plan;
}

std::size_t ComputationPlan::output_row(std::size_t node) const {
  if (node >= output_row_.size() || output_row_[node] < 0) {
    throw Error(ErrorCode::kLookup, "node is not an output of this computation plan");
  }
  return static_cast<std::size_t>(output_row_[node]);
}

GcnPass::GcnPass(const EntityGraph& graph, const ComputationPlan& plan, const GcnParams& params,
                 std::span<const double> feature_scale)
    : graph_(graph), plan_(plan), params_(params), scale_(feature_scale) {
  check_graph(graph, params);
  if (!scale_.empty() && scale_.size() != params.dimension()) {
    throw Error(ErrorCode::kShape, "feature scale has length " + std::to_string(scale_.size()) +
                                       " but the model expects " +
                                       std::to_string(params.dimension()));
  }
  const std::size_t h = params.hidden();
  const auto& features = graph.features();

  xw_ = Matrix(plan.input_nodes_.size(), h);
  for (std::size_t r = 0; r < plan.input_nodes_.size(); ++r) {
    auto out = xw_.row(r);
    for (auto f : features[plan.input_nodes_[r]]) {
      add_scaled(out, params.w1.row(f), scale_.empty() ? 1.0 : scale_[f]);
    }
  }

  z1_ = Matrix(plan.hidden_nodes_.size(), h);
  h1_ = Matrix(plan.hidden_nodes_.size(), h);
  for (std::size_t r = 0; r < plan.hidden_nodes_.size(); ++r) {
    auto z = z1_.row(r);
    for (const auto& [k, w] : plan.first_[r]) add_scaled(z, xw_.row(k), w);
    auto a = h1_.row(r);
    for (std::size_t c = 0; c < h; ++c) a[c] = std::max(0.0, z[c]);
  }

  Matrix hw(plan.hidden_nodes_.size(), h);
  for (std::size_t r = 0; r < plan.hidden_nodes_.size(); ++r) {
    auto out = hw.row(r);
    auto a = h1_.row(r);
    for (std::size_t k = 0; k < h; ++k) {
      if (a[k] != 0.0) add_scaled(out, params.w2.row(k), a[k]);
    }
  }

  z2_ = Matrix(plan.output_nodes_.size(), h);
  h2_ = Matrix(plan.output_nodes_.size(), h);
  for (std::size_t r = 0; r < plan.output_nodes_.size(); ++r) {
    auto z = z2_.row(r);
    for (const auto& [k, w] : plan.second_[r]) add_scaled(z, hw.row(k), w);
    auto a = h2_.row(r);
    for (std::size_t c = 0; c < h; ++c) a[c] = std::max(0.0, z[c]);
  }
}

double GcnPass::logit(std::size_t u, std::size_t v) const {
  const auto hu = h2_.row(plan_.output_row(u));
  const auto hv = h2_.row(plan_.output_row(v));
  double s = params_.bias;
  for (std::size_t k = 0; k < hu.size(); ++k) s += params_.head[k] * hu[k] * hv[k];
  return s;
}

void GcnPass::backward(const Matrix& d_embeddings, ParamGradients& grads,
                       std::vector<double>* scale_grad) const {
  const std::size_t h = params_.hidden();
  const auto& features = graph_.features();

  Matrix d_hw(plan_.hidden_nodes_.size(), h);
  for (std::size_t r = 0; r < plan_.output_nodes_.size(); ++r) {
    const auto dh = d_embeddings.row(r);
    const auto z = z2_.row(r);
    std::vector<double> dz(h);
    bool any = false;
    for (std::size_t c = 0; c < h; ++c) {
      dz[c] = z[c] > 0.0 ? dh[c] : 0.0;
      any = any || dz[c] != 0.0;
    }
    if (!any) continue;
    for (const auto& [k, w] : plan_.second_[r]) add_scaled(d_hw.row(k), dz, w);
  }

  Matrix d_xw(plan_.input_nodes_.size(), h);
  std::vector<double> dz1(h);
  for (std::size_t r = 0; r < plan_.hidden_nodes_.size(); ++r) {
    const auto g = d_hw.row(r);
    const auto a = h1_.row(r);
    // dW2 += h1^T d_hw ; dh1 = d_hw W2^T
    for (std::size_t k = 0; k < h; ++k) {
      if (a[k] != 0.0) add_scaled(grads.w2.row(k), g, a[k]);
    }
    const auto z = z1_.row(r);
    bool any = false;
    for (std::size_t k = 0; k < h; ++k) {
      dz1[k] = z[k] > 0.0 ? dot(params_.w2.row(k), g) : 0.0;
      any = any || dz1[k] != 0.0;
    }
    if (!any) continue;
    for (const auto& [k, w] : plan_.first_[r]) add_scaled(d_xw.row(k), dz1, w);
  }

  for (std::size_t r = 0; r < plan_.input_nodes_.size(); ++r) {
    const auto g = d_xw.row(r);
    for (auto f : features[plan_.input_nodes_[r]]) {
      add_scaled(grads.w1.row(f), g, scale_.empty() ? 1.0 : scale_[f]);
      if (scale_grad) (*scale_grad)[f] += dot(params_.w1.row(f), g);
    }
  }
}

Matrix forward(const EntityGraph& graph, const GcnParams& params) {
  const ComputationPlan plan = ComputationPlan::full(graph);
  return GcnPass(graph, plan, params).embeddings();
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Prediction predict_link(const Matrix& embeddings, const EntityGraph& graph, std::string_view u,
                        std::string_view v, const GcnParams& params) {
  const auto hu = embeddings.row(graph.index_of(u));
  const auto hv = embeddings.row(graph.index_of(v));
  double s = params.bias;
  for (std::size_t k = 0; k < hu.size(); ++k) s += params.head[k] * hu[k] * hv[k];
  return {std::string(u), std::string(v), s, sigmoid(s)};
}

std::vector<IndexedPair> index_pairs(const EntityGraph& graph, const std::vector<TrainingPair>& pairs) {
  std::vector<IndexedPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    out.push_back({graph.index_of(p.u), graph.index_of(p.v), static_cast<double>(p.label), 1.0});
  }
  return out;
}

namespace {

LossAndGradients loss_on_plan(const EntityGraph& graph, const ComputationPlan& plan,
                              const GcnParams& params, const std::vector<IndexedPair>& batch,
                              double l2) {
  if (batch.empty()) throw Error(ErrorCode::kPrecondition, "empty training batch");
  GcnPass pass(graph, plan, params);
  const Matrix& H = pass.embeddings();
  const std::size_t h = params.hidden();

  double weight_sum = 0.0;
  for (const auto& p : batch) weight_sum += p.weight;

  LossAndGradients out;
  out.grads = zero_gradients(params);
  Matrix dH(H.rows(), h);
  double bce = 0.0;
  for (const auto& p : batch) {
    const std::size_t ru = plan.output_row(p.u);
    const std::size_t rv = plan.output_row(p.v);
    const auto hu = H.row(ru);
    const auto hv = H.row(rv);
    double s = params.bias;
    for (std::size_t k = 0; k < h; ++k) s += params.head[k] * hu[k] * hv[k];
    bce += p.weight * (softplus(s) - p.label * s);
    const double ds = p.weight * (sigmoid(s) - p.label) / weight_sum;
    out.grads.bias += ds;
    auto du = dH.row(ru);
    auto dv = dH.row(rv);
    for (std::size_t k = 0; k < h; ++k) {
      out.grads.head[k] += ds * hu[k] * hv[k];
      du[k] += ds * params.head[k] * hv[k];
      dv[k] += ds * params.head[k] * hu[k];
    }
  }
  pass.backward(dH, out.grads);

  out.loss = bce / weight_sum + 0.5 * l2 * params.squared_norm();
  if (l2 > 0.0) {
    for (std::size_t i = 0; i < params.w1.data().size(); ++i) out.grads.w1.data()[i] += l2 * params.w1.data()[i];
    for (std::size_t i = 0; i < params.w2.data().size(); ++i) out.grads.w2.data()[i] += l2 * params.w2.data()[i];
    for (std::size_t i = 0; i < h; ++i) out.grads.head[i] += l2 * params.head[i];
    out.grads.bias += l2 * params.bias;
  }
  return out;
}

}  // namespace

LossAndGradients loss_and_gradients(const EntityGraph& graph, const GcnParams& params,
                                    const std::vector<IndexedPair>& batch, double l2) {
  const ComputationPlan plan = ComputationPlan::full(graph);
  return loss_on_plan(graph, plan, params, batch, l2);
}

TrainResult train(const EntityGraph& graph, const std::vector<TrainingPair>& pairs,
                  const TrainConfig& config) {
  config.validate();
  if (pairs.empty()) throw Error(ErrorCode::kTrainingSet, "empty training set");
  const auto batch = index_pairs(graph, pairs);
  const ComputationPlan plan = ComputationPlan::full(graph);

  TrainResult result;
  GcnParams params = init_params(graph.dimension(), config.hidden, config.seed);
  params.codec_fingerprint = graph.codec().fingerprint();
  ParamGradients velocity = zero_gradients(params);

  auto step = [&](std::vector<double>& theta, std::vector<double>& vel, const std::vector<double>& g) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
      vel[i] = config.momentum * vel[i] - config.learning_rate * g[i];
      theta[i] += vel[i];
    }
  };

  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 0; epoch <= config.epochs; ++epoch) {
    LossAndGradients lg = loss_on_plan(graph, plan, params, batch, config.l2);
    if (!std::isfinite(lg.loss)) {
      throw Error(ErrorCode::kDivergence,
                  "training loss became non-finite at epoch " + std::to_string(epoch));
    }
    result.losses.push_back(lg.loss);
    if (lg.loss < best_loss) {
      best_loss = lg.loss;
      result.params = params;
    }
    if (epoch == config.epochs) break;
    step(params.w1.data(), velocity.w1.data(), lg.grads.w1.data());
    step(params.w2.data(), velocity.w2.data(), lg.grads.w2.data());
    step(params.head, velocity.head, lg.grads.head);
    velocity.bias = config.momentum * velocity.bias - config.learning_rate * lg.grads.bias;
    params.bias += velocity.bias;
  }
  return result;
}

double agreement(const GcnParams& params, const EntityGraph& graph,
                 const std::vector<TrainingPair>& heldout) {
  if (heldout.empty()) throw Error(ErrorCode::kPrecondition, "empty held-out set");
  const Matrix H = forward(graph, params);
  std::size_t agree = 0;
  for (const auto& p : heldout) {
    const Prediction pred = predict_link(H, graph, p.u, p.v, params);
    agree += ((pred.probability >= 0.5) == (p.label == 1)) ? 1 : 0;
  }
  return static_cast<double>(agree) / static_cast<double>(heldout.size());
}

json model_to_json(const GcnParams& params) {
  return {{"format", "xem-gcn/1"},
          {"dimension", params.dimension()},
          {"hidden", params.hidden()},
          {"codec_fingerprint", params.codec_fingerprint},
          {"w1", params.w1.data()},
          {"w2", params.w2.data()},
          {"head", params.head},
          {"bias", params.bias}};
}

GcnParams model_from_json(const json& doc, const FeatureCodec& codec) {
  GcnParams p;
  try {
    const auto d = doc.at("dimension").get<std::size_t>();
    const auto h = doc.at("hidden").get<std::size_t>();
    if (d != codec.dimension()) {
      throw Error(ErrorCode::kShape, "model dimension " + std::to_string(d) +
                                         " does not match codec dimension " +
                                         std::to_string(codec.dimension()));
    }
    p.codec_fingerprint = doc.at("codec_fingerprint").get<std::string>();
    if (p.codec_fingerprint != codec.fingerprint()) {
      throw Error(ErrorCode::kFingerprint, "model was trained against a different feature codec");
    }
    p.w1 = Matrix(d, h);
    p.w2 = Matrix(h, h);
    p.w1.data() = doc.at("w1").get<std::vector<double>>();
    p.w2.data() = doc.at("w2").get<std::vector<double>>();
    p.head = doc.at("head").get<std::vector<double>>();
    p.bias = doc.at("bias").get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("malformed model: ") + e.what());
  }
  if (p.w1.data().size() != p.dimension() * p.head.size() ||
      p.w2.data().size() != p.head.size() * p.head.size()) {
    throw Error(ErrorCode::kShape, "model arrays do not match declared shapes");
  }
  p.check_shapes();
  return p;
}

}  // namespace xem
