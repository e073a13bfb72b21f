#include <cmath>
#include <functional>

#include <gtest/gtest.h>

#include "support.hpp"
#include "xem/error.hpp"
#include "xem/gnn.hpp"

using namespace xem;

namespace {

// D = 5 name buckets + 3 identifier buckets + 2 presence bits.
FeatureCodec tiny_codec() {
  return FeatureCodec(Schema({{"a", AttributeKind::kName}, {"b", AttributeKind::kIdentifier}}), 5, 3);
}

EntityGraph random_graph(std::size_t n, std::uint64_t seed, double edge_p = 0.4) {
  const FeatureCodec codec = tiny_codec();
  CounterRng rng(seed);
  std::vector<std::string> ids;
  std::vector<SparseFeatures> features;
  for (std::size_t i = 0; i < n; ++i) {
    ids.push_back("n" + std::to_string(i));
    SparseFeatures f;
    for (std::uint32_t d = 0; d < codec.dimension(); ++d) {
      if (rng.bernoulli(0.5)) f.push_back(d);
    }
    features.push_back(f);
  }
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.bernoulli(edge_p)) edges.emplace_back(i, j);
  return EntityGraph(codec, ids, features, edges);
}

GcnParams random_params(std::size_t d, std::size_t h, std::uint64_t seed) {
  GcnParams p = init_params(d, h, seed);
  CounterRng rng(seed, 1);
  p.bias = rng.uniform(-0.5, 0.5);
  for (double& x : p.head) x *= 3.0;
  return p;
}

// Dense recomputation: A+I from the edge list, D^-1/2 (A+I) D^-1/2, then two
// relu(A X W) layers by triple loops.
Matrix naive_forward(const EntityGraph& g, const GcnParams& p, const std::vector<double>& scale = {}) {
  const std::size_t n = g.node_count(), d = g.dimension(), h = p.hidden();
  std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) a[i][i] = 1.0;
  for (auto [u, v] : g.edges()) a[u][v] = a[v][u] = 1.0;
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) deg[i] += a[i][j];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a[i][j] /= std::sqrt(deg[i] * deg[j]);
  std::vector<std::vector<double>> x(n, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (auto f : g.features()[i]) x[i][f] = scale.empty() ? 1.0 : scale[f];
  auto layer = [&](const std::vector<std::vector<double>>& in, const Matrix& w) {
    const std::size_t k_in = w.rows();
    std::vector<std::vector<double>> ax(n, std::vector<double>(k_in, 0.0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < k_in; ++k) ax[i][k] += a[i][j] * in[j][k];
    std::vector<std::vector<double>> out(n, std::vector<double>(h, 0.0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < h; ++c) {
        double s = 0.0;
        for (std::size_t k = 0; k < k_in; ++k) s += ax[i][k] * w(k, c);
        out[i][c] = std::max(0.0, s);
      }
    return out;
  };
  const auto h2 = layer(layer(x, p.w1), p.w2);
  Matrix out(n, h);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < h; ++c) out(i, c) = h2[i][c];
  return out;
}

void expect_close_grad(double analytic, double numeric, const std::string& what) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  EXPECT_LE(std::abs(analytic - numeric) / denom, 1e-4) << what << " analytic " << analytic << " numeric " << numeric;
}

}  // namespace

TEST(Gnn, SingleNodeIdentityWeights) {
  const FeatureCodec codec = tiny_codec();
  const std::size_t d = codec.dimension();
  const EntityGraph g(codec, {"x"}, {{1, 3, 7}}, {});
  GcnParams p;
  p.w1 = Matrix(d, d);
  p.w2 = Matrix(d, d);
  p.head.assign(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) p.w1(i, i) = p.w2(i, i) = 1.0;
  const Matrix h = forward(g, p);
  for (std::size_t c = 0; c < d; ++c) EXPECT_DOUBLE_EQ(h(0, c), (c == 1 || c == 3 || c == 7) ? 1.0 : 0.0);
}

TEST(Gnn, ZeroFeaturesGiveZeroEmbeddings) {
  const EntityGraph g(tiny_codec(), {"a", "b", "c"}, {{}, {}, {}}, {{0, 1}});
  const Matrix h = forward(g, init_params(g.dimension(), 8, 3));
  for (double x : h.data()) EXPECT_EQ(x, 0.0);
}

TEST(Gnn, ForwardMatchesNaiveRecomputation) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const EntityGraph g = random_graph(3 + seed % 8, seed);
    const GcnParams p = random_params(g.dimension(), 6, seed);
    const Matrix fast = forward(g, p);
    const Matrix slow = naive_forward(g, p);
    ASSERT_EQ(fast.rows(), slow.rows());
    for (std::size_t i = 0; i < fast.data().size(); ++i) EXPECT_NEAR(fast.data()[i], slow.data()[i], 1e-12);
  }
}

TEST(Gnn, LocalPlanAndScaledPassMatchOracle) {
  const EntityGraph g = random_graph(10, 77, 0.25);
  const GcnParams p = random_params(g.dimension(), 6, 77);
  CounterRng rng(5);
  std::vector<double> scale(g.dimension());
  for (double& s : scale) s = rng.uniform();
  const Matrix slow = naive_forward(g, p, scale);
  const auto plan = ComputationPlan::around(g, {2, 7});
  const GcnPass pass(g, plan, p, scale);
  for (std::size_t node : {2u, 7u}) {
    const auto row = pass.embeddings().row(plan.output_row(node));
    for (std::size_t c = 0; c < p.hidden(); ++c) EXPECT_NEAR(row[c], slow(node, c), 1e-12);
  }
  EXPECT_THROW(plan.output_row(plan.output_nodes().empty() ? 0 : 100), Error);
  std::vector<double> wrong(3, 1.0);
  EXPECT_THROW(GcnPass(g, plan, p, wrong), Error);
}

TEST(Gnn, ShapeMismatchNamesBothShapes) {
  const EntityGraph g = random_graph(3, 1);
  const GcnParams p = init_params(g.dimension() + 1, 4, 1);
  try {
    forward(g, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShape);
    EXPECT_NE(std::string(e.what()).find("3x10"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("11x4"), std::string::npos) << e.what();
  }
}

TEST(Gnn, PredictionHandExample) {
  const EntityGraph g(tiny_codec(), {"u", "v"}, {{}, {}}, {{0, 1}});
  Matrix h(2, 2);
  h(0, 0) = 1;
  h(0, 1) = 2;
  h(1, 0) = 3;
  h(1, 1) = 4;
  GcnParams p;
  p.head = {0.5, -1.0};
  p.bias = 0.1;
  const Prediction pred = predict_link(h, g, "u", "v", p);
  const double logit = 0.5 * 1 * 3 - 1.0 * 2 * 4 + 0.1;
  EXPECT_DOUBLE_EQ(pred.logit, logit);
  EXPECT_DOUBLE_EQ(pred.probability, 1.0 / (1.0 + std::exp(-logit)));
  EXPECT_THROW(predict_link(h, g, "u", "zz", p), Error);
}

TEST(Gnn, ZeroHeadGivesOneHalfAndPredictionIsSymmetric) {
  const EntityGraph g = random_graph(10, 9);
  GcnParams p = random_params(g.dimension(), 6, 9);
  const Matrix h = forward(g, p);
  CounterRng rng(10);
  for (int i = 0; i < 100; ++i) {
    const auto& u = g.node_ids()[rng.below(10)];
    const auto& v = g.node_ids()[rng.below(10)];
    EXPECT_EQ(predict_link(h, g, u, v, p).probability, predict_link(h, g, v, u, p).probability);
  }
  p.head.assign(p.hidden(), 0.0);
  p.bias = 0.0;
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(predict_link(h, g, g.node_ids()[i], g.node_ids()[0], p).probability, 0.5);
}

TEST(Gnn, GradientsMatchCentralDifferences) {
  const EntityGraph g = random_graph(6, 31, 0.5);
  const GcnParams p = random_params(g.dimension(), 4, 31);
  const std::vector<IndexedPair> batch{{0, 1, 1.0}, {2, 3, 0.0}, {4, 5, 1.0}, {0, 5, 0.0}, {1, 1, 1.0}};
  const double l2 = 0.01;
  const auto lg = loss_and_gradients(g, p, batch, l2);
  const double eps = 1e-5;
  auto check = [&](std::vector<double>& (*get)(GcnParams&), const std::vector<double>& grad, const char* name) {
    for (std::size_t i = 0; i < grad.size(); ++i) {
      GcnParams hi = p, lo = p;
      get(hi)[i] += eps;
      get(lo)[i] -= eps;
      const double numeric =
          (loss_and_gradients(g, hi, batch, l2).loss - loss_and_gradients(g, lo, batch, l2).loss) / (2 * eps);
      expect_close_grad(grad[i], numeric, std::string(name) + "[" + std::to_string(i) + "]");
    }
  };
  check([](GcnParams& q) -> std::vector<double>& { return q.w1.data(); }, lg.grads.w1.data(), "w1");
  check([](GcnParams& q) -> std::vector<double>& { return q.w2.data(); }, lg.grads.w2.data(), "w2");
  check([](GcnParams& q) -> std::vector<double>& { return q.head; }, lg.grads.head, "head");
  GcnParams hi = p, lo = p;
  hi.bias += eps;
  lo.bias -= eps;
  expect_close_grad(lg.grads.bias,
                    (loss_and_gradients(g, hi, batch, l2).loss - loss_and_gradients(g, lo, batch, l2).loss) / (2 * eps),
                    "bias");
}

TEST(Gnn, FeatureScaleGradientMatchesCentralDifferences) {
  const EntityGraph g = random_graph(7, 41, 0.4);
  const GcnParams p = random_params(g.dimension(), 5, 41);
  const auto plan = ComputationPlan::around(g, {1, 4});
  CounterRng rng(3);
  std::vector<double> scale(g.dimension());
  for (double& s : scale) s = rng.uniform(0.2, 1.0);
  // Loss = logit(1, 4); its embedding derivative is head (.) other row.
  auto objective = [&](const std::vector<double>& s) { return GcnPass(g, plan, p, s).logit(1, 4); };
  const GcnPass pass(g, plan, p, scale);
  Matrix d(pass.embeddings().rows(), p.hidden());
  const auto hu = pass.embeddings().row(plan.output_row(1));
  const auto hv = pass.embeddings().row(plan.output_row(4));
  for (std::size_t k = 0; k < p.hidden(); ++k) {
    d(plan.output_row(1), k) += p.head[k] * hv[k];
    d(plan.output_row(4), k) += p.head[k] * hu[k];
  }
  ParamGradients grads{Matrix(p.dimension(), p.hidden()), Matrix(p.hidden(), p.hidden()),
                       std::vector<double>(p.hidden(), 0.0), 0.0};
  std::vector<double> scale_grad(g.dimension(), 0.0);
  pass.backward(d, grads, &scale_grad);
  for (std::size_t i = 0; i < scale.size(); ++i) {
    auto hi = scale, lo = scale;
    hi[i] += 1e-5;
    lo[i] -= 1e-5;
    expect_close_grad(scale_grad[i], (objective(hi) - objective(lo)) / 2e-5, "scale[" + std::to_string(i) + "]");
  }
}

TEST(Gnn, PerfectPredictionsDriveLossToZero) {
  const EntityGraph g = random_graph(4, 2);
  GcnParams p = init_params(g.dimension(), 4, 2);
  p.head.assign(4, 0.0);
  p.bias = 50.0;
  const auto lg = loss_and_gradients(g, p, {{0, 1, 1.0}, {2, 3, 1.0}}, 0.0);
  EXPECT_LT(lg.loss, 1e-20);
}

TEST(Gnn, DuplicatedEntriesEqualWeightTwo) {
  const EntityGraph g = random_graph(6, 12);
  const GcnParams p = random_params(g.dimension(), 4, 12);
  const auto dup = loss_and_gradients(g, p, {{0, 1, 1.0}, {0, 1, 1.0}, {2, 3, 0.0}}, 1e-3);
  const auto weighted = loss_and_gradients(g, p, {{0, 1, 1.0, 2.0}, {2, 3, 0.0, 1.0}}, 1e-3);
  EXPECT_NEAR(dup.loss, weighted.loss, 1e-14);
  for (std::size_t i = 0; i < dup.grads.w1.data().size(); ++i) {
    EXPECT_NEAR(dup.grads.w1.data()[i], weighted.grads.w1.data()[i], 1e-14);
  }
  // The mean by hand: (2 * bce(0,1) + bce(2,3)) / 3 plus the penalty.
  const Matrix h = forward(g, p);
  auto bce = [&](std::size_t u, std::size_t v, double y) {
    const double q = predict_link(h, g, g.node_ids()[u], g.node_ids()[v], p).probability;
    return -(y * std::log(q) + (1 - y) * std::log(1 - q));
  };
  EXPECT_NEAR(dup.loss, (2 * bce(0, 1, 1) + bce(2, 3, 0)) / 3 + 0.5e-3 * p.squared_norm(), 1e-12);
  EXPECT_THROW(loss_and_gradients(g, p, {}, 0.0), Error);
}

TEST(Gnn, TrainConfigPreconditions) {
  TrainConfig cfg;
  cfg.epochs = 0;
  try {
    cfg.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
  }
  cfg = TrainConfig{};
  cfg.learning_rate = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Gnn, TrainingIsDeterministicAndDescends) {
  const auto& run = xem::testing::small_run();
  const auto& g = run.proxy.model.graph;
  const auto set = make_training_set(run.pairs, run.records.ids(), 1.0, 42);
  TrainConfig cfg = run.config.training.model;
  cfg.epochs = 30;
  const auto a = train(g, set, cfg);
  const auto b = train(g, set, cfg);
  EXPECT_TRUE(a.params == b.params);
  ASSERT_GE(a.losses.size(), 11u);
  for (std::size_t e = 1; e <= 10; ++e) EXPECT_LT(a.losses[e], a.losses[e - 1]) << "epoch " << e;
  const double best = *std::min_element(a.losses.begin(), a.losses.end());
  EXPECT_LE(best, a.losses.front());
  const auto idx = index_pairs(g, set);
  EXPECT_DOUBLE_EQ(loss_and_gradients(g, a.params, idx, cfg.l2).loss, best);
}

TEST(Gnn, AgreementBaselines) {
  const auto& run = xem::testing::small_run();
  const auto& g = run.proxy.model.graph;
  const auto set = make_training_set(run.pairs, run.records.ids(), 1.0, 42);

  GcnParams always = init_params(g.dimension(), 4, 1);
  always.head.assign(4, 0.0);
  always.bias = 1e-9;
  std::vector<TrainingPair> positives;
  for (const auto& t : set) if (t.label == 1) positives.push_back(t);
  EXPECT_EQ(agreement(always, g, positives), 1.0);
  EXPECT_THROW(agreement(always, g, {}), Error);

  // An untrained model on the balanced set: within 3 sigma of a coin flip.
  const double n = static_cast<double>(set.size());
  const double acc = agreement(init_params(g.dimension(), 32, 42), g, set);
  EXPECT_NEAR(acc, 0.5, 3.0 * std::sqrt(0.25 / n));

  EXPECT_GE(run.proxy.summary.agreement, 0.0);
  EXPECT_LE(run.proxy.summary.agreement, 1.0);
}

TEST(Gnn, ModelJsonRoundTripAndCodecGuard) {
  const auto& run = xem::testing::small_run();
  const auto& model = run.proxy.model;
  const auto back = model_from_json(model_to_json(model.params), model.graph.codec());
  EXPECT_TRUE(back == model.params);
  EXPECT_THROW(model_from_json(model_to_json(model.params), tiny_codec()), Error);
  const FeatureCodec same_dim(organization_schema(), 64, 16);
  auto doc = model_to_json(model.params);
  doc["codec_fingerprint"] = "0000";
  EXPECT_THROW(model_from_json(doc, same_dim), Error);
}
