#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "xem/proxygraph.hpp"

namespace xem {

// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }
  std::string shape() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct GcnParams {
  Matrix w1;                  // D x h
  Matrix w2;                  // h x h
  std::vector<double> head;   // h, scores H_u (.) H_v
  double bias = 0.0;
  std::string codec_fingerprint;

  std::size_t dimension() const { return w1.rows(); }
  std::size_t hidden() const { return w2.rows(); }
  void check_shapes() const;
  double squared_norm() const;
  std::string fingerprint() const;

  bool operator==(const GcnParams&) const = default;
};

struct TrainConfig {
  std::size_t hidden = 32;
  double learning_rate = 0.1;
  std::size_t epochs = 400;
  std::uint64_t seed = 42;
  double l2 = 1e-4;
  double momentum = 0.99;

  void validate() const;
};

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per weight block; bias 0.
GcnParams init_params(std::size_t dimension, std::size_t hidden, std::uint64_t seed);

struct Prediction {
  std::string u;
  std::string v;
  double logit = 0.0;
  double probability = 0.5;
};

// Which nodes each layer must evaluate so that the final embeddings of
// `targets` are exact. The full plan evaluates every node.
class ComputationPlan {
 public:
  static ComputationPlan full(const EntityGraph& graph);
  static ComputationPlan around(const EntityGraph& graph, std::vector<std::size_t> targets);

  const std::vector<std::size_t>& input_nodes() const { return input_nodes_; }
  const std::vector<std::size_t>& hidden_nodes() const { return hidden_nodes_; }
  const std::vector<std::size_t>& output_nodes() const { return output_nodes_; }
  // Local output row of a global node; throws kLookup if not an output.
  std::size_t output_row(std::size_t node) const;

 private:
  friend class GcnPass;
  using Aggregation = std::vector<std::vector<std::pair<std::size_t, double>>>;

  std::vector<std::size_t> input_nodes_, hidden_nodes_, output_nodes_;
  Aggregation first_;   // per hidden node: (input row, weight)
  Aggregation second_;  // per output node: (hidden row, weight)
  std::vector<long> output_row_;  // global -> output row or -1
};

struct ParamGradients {
  Matrix w1;
  Matrix w2;
  std::vector<double> head;
  double bias = 0.0;
};

// One forward evaluation with cached activations for backpropagation.
// `feature_scale` (length D), when given, multiplies every feature column:
// X is replaced by X (.) scale on all nodes.
class GcnPass {
 public:
  GcnPass(const EntityGraph& graph, const ComputationPlan& plan, const GcnParams& params,
          std::span<const double> feature_scale = {});

  // Final embeddings, one row per plan output node.
  const Matrix& embeddings() const { return h2_; }
  double logit(std::size_t u, std::size_t v) const;

  // Accumulates into `grads` (and `scale_grad` when non-null) the gradient
  // of a loss whose derivative wrt the embedding rows is `d_embeddings`.
  void backward(const Matrix& d_embeddings, ParamGradients& grads,
                std::vector<double>* scale_grad = nullptr) const;

 private:
  const EntityGraph& graph_;
  const ComputationPlan& plan_;
  const GcnParams& params_;
  std::span<const double> scale_;
  Matrix xw_, z1_, h1_, z2_, h2_;
};

// Full-graph embeddings H (N x h). Throws kShape on dimension mismatch.
Matrix forward(const EntityGraph& graph, const GcnParams& params);

double sigmoid(double x);
Prediction predict_link(const Matrix& embeddings, const EntityGraph& graph, std::string_view u,
                        std::string_view v, const GcnParams& params);

struct IndexedPair {
  std::size_t u;
  std::size_t v;
  double label;
  double weight = 1.0;
};

std::vector<IndexedPair> index_pairs(const EntityGraph& graph, const std::vector<TrainingPair>& pairs);

struct LossAndGradients {
  double loss = 0.0;
  ParamGradients grads;
};

// Weighted mean BCE over the batch plus l2 * ||params||^2 / 2 (bias included).
LossAndGradients loss_and_gradients(const EntityGraph& graph, const GcnParams& params,
                                    const std::vector<IndexedPair>& batch, double l2);

struct TrainResult {
  GcnParams params;
  std::vector<double> losses;  // loss before each epoch's update, then the final loss
};

// Full-batch momentum descent; keeps the parameters with the lowest loss seen.
TrainResult train(const EntityGraph& graph, const std::vector<TrainingPair>& pairs,
                  const TrainConfig& config);

double agreement(const GcnParams& params, const EntityGraph& graph,
                 const std::vector<TrainingPair>& heldout);

nlohmann::json model_to_json(const GcnParams& params);
// Refuses a model whose dimension or codec fingerprint differs from `codec`.
GcnParams model_from_json(const nlohmann::json& doc, const FeatureCodec& codec);

}  // namespace xem
