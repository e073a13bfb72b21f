#include "xem/explainers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include <Eigen/Dense>

#include "xem/error.hpp"
#include "xem/util.hpp"

namespace xem {

using nlohmann::json;

namespace {

double bce_from_logit(double logit, double target) {
  const double sp = logit > 0 ? logit + std::log1p(std::exp(-logit)) : std::log1p(std::exp(logit));
  return sp - target * logit;
}

double binary_entropy(double s) {
  double h = 0.0;
  if (s > 0.0) h -= s * std::log(s);
  if (s < 1.0) h -= (1.0 - s) * std::log(1.0 - s);
  return h;
}

// Mean activation over the attribute's active dimensions; 0 when it has none.
AttributeScores rollup_scores(const FeatureCodec& codec, const std::vector<double>& activation,
                              const std::vector<char>& active) {
  AttributeScores out;
  for (std::size_t a = 0; a < codec.attribute_count(); ++a) {
    double sum = 0.0;
    std::size_t n = 0;
    for (auto d : codec.attribute_dims(a)) {
      if (!active[d]) continue;
      sum += activation[d];
      ++n;
    }
    out.emplace_back(codec.blocks()[a].attribute, n == 0 ? 0.0 : sum / static_cast<double>(n));
  }
  return out;
}

json scores_to_json(const AttributeScores& scores) {
  json out = json::object();
  for (const auto& [name, v] : scores) out[name] = v;
  return out;
}

json ranked_to_json(const AttributeScores& scores) {
  json out = json::array();
  for (const auto& [name, v] : scores) out.push_back({{"attribute", name}, {"score", v}});
  return out;
}

std::vector<double> deletion_scale(const FeatureCodec& codec, const std::vector<std::size_t>& attributes) {
  std::vector<double> scale(codec.dimension(), 1.0);
  for (auto a : attributes) {
    for (auto d : codec.attribute_dims(a)) scale[d] = 0.0;
  }
  return scale;
}

bool same_anonymous_value(const std::optional<std::string>& x, const std::optional<std::string>& y,
                          AttributeKind kind, const AnonymousValueList& anon) {
  if (!x || !y) return false;
  if (!is_anonymous(*x, kind, anon) || !is_anonymous(*y, kind, anon)) return false;
  if (kind == AttributeKind::kPhone || kind == AttributeKind::kDob) {
    return digits_only(*x) == digits_only(*y);
  }
  return *x == *y;
}

}  // namespace

void MaskConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::kConfig, "mask learning rate must be > 0");
  if (!(sparsity >= 0.0) || !(entropy >= 0.0)) {
    throw Error(ErrorCode::kConfig, "mask regularizer weights must be >= 0");
  }
  if (!std::isfinite(init_logit) || !(init_noise >= 0.0)) {
    throw Error(ErrorCode::kConfig, "mask initialization must be finite");
  }
}

AttributeScores FeatureMask::top(std::size_t k) const {
  AttributeScores sorted = rollup;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& x, const auto& y) { return x.second > y.second; });
  if (sorted.size() > k) sorted.resize(k);
  return sorted;
}

double FeatureMask::sparsity() const {
  if (active_dims.empty()) return 0.0;
  const auto above =
      std::count_if(active_dims.begin(), active_dims.end(), [&](std::size_t d) { return activation[d] > 0.5; });
  return static_cast<double>(above) / static_cast<double>(active_dims.size());
}

json FeatureMask::to_json() const {
  return {{"pair", {pair.a, pair.b}},
          {"p_original", p_original},
          {"p_masked", p_masked},
          {"fidelity", fidelity},
          {"sparsity", sparsity()},
          {"rollup", scores_to_json(rollup)},
          {"activation", activation}};
}

double masked_probability(const GcnParams& params, const EntityGraph& graph, std::size_t u,
                          std::size_t v, std::span<const double> scale) {
  const ComputationPlan plan = ComputationPlan::around(graph, {u, v});
  return sigmoid(GcnPass(graph, plan, params, scale).logit(u, v));
}

FeatureMask explain_pair_mask(const GcnParams& params, const EntityGraph& graph,
                              std::string_view u_id, std::string_view v_id,
                              const MaskConfig& config) {
  config.validate();
  const RecordPair pair = canonical_pair(u_id, v_id);
  const std::size_t u = graph.index_of(pair.a);
  const std::size_t v = graph.index_of(pair.b);
  const std::size_t dim = graph.dimension();
  const ComputationPlan plan = ComputationPlan::around(graph, {u, v});

  FeatureMask mask;
  mask.pair = pair;
  mask.p_original = sigmoid(GcnPass(graph, plan, params).logit(u, v));
  const double target = mask.p_original >= 0.5 ? 1.0 : 0.0;

  mask.logits.assign(dim, config.init_logit);
  if (config.init_noise > 0.0) {
    CounterRng rng(config.seed, 0x6d61736bULL);
    for (double& m : mask.logits) m += rng.uniform(-config.init_noise, config.init_noise);
  }

  // Only dimensions present on some node of the plan can move the
  // prediction; the regularizers and the rollup are taken over those.
  std::vector<char> active(dim, 0);
  for (auto node : plan.input_nodes()) {
    for (auto d : graph.features()[node]) active[d] = 1;
  }
  for (std::size_t d = 0; d < dim; ++d) {
    if (active[d]) mask.active_dims.push_back(d);
  }
  const double inv_active = mask.active_dims.empty() ? 0.0 : 1.0 / static_cast<double>(mask.active_dims.size());

  std::vector<double> s(dim), scale_grad(dim), first(dim, 0.0), second(dim, 0.0);
  ParamGradients scratch{Matrix(params.w1.rows(), params.w1.cols()),
                         Matrix(params.w2.rows(), params.w2.cols()),
                         std::vector<double>(params.head.size(), 0.0), 0.0};
  const std::size_t h = params.hidden();
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  double beta1_t = 1.0, beta2_t = 1.0;

  for (std::size_t it = 0; it < config.iterations; ++it) {
    for (std::size_t d = 0; d < dim; ++d) s[d] = sigmoid(mask.logits[d]);
    GcnPass pass(graph, plan, params, s);
    const double logit = pass.logit(u, v);
    double objective = bce_from_logit(logit, target);
    for (auto d : mask.active_dims) {
      objective += inv_active * (config.sparsity * s[d] + config.entropy * binary_entropy(s[d]));
    }
    if (!std::isfinite(objective)) {
      throw Error(ErrorCode::kDivergence,
                  "mask objective became non-finite at iteration " + std::to_string(it));
    }

    const double dlogit = sigmoid(logit) - target;
    const Matrix& H = pass.embeddings();
    const std::size_t ru = plan.output_row(u);
    const std::size_t rv = plan.output_row(v);
    Matrix dH(H.rows(), h);
    for (std::size_t k = 0; k < h; ++k) {
      dH(ru, k) += dlogit * params.head[k] * H(rv, k);
      dH(rv, k) += dlogit * params.head[k] * H(ru, k);
    }
    std::fill(scale_grad.begin(), scale_grad.end(), 0.0);
    pass.backward(dH, scratch, &scale_grad);

    // Adam, as in the GNNExplainer reference optimizer.
    beta1_t *= kBeta1;
    beta2_t *= kBeta2;
    for (auto d : mask.active_dims) {
      const double sd = s[d];
      const double reg = inv_active * (config.sparsity + config.entropy * std::log((1.0 - sd) / sd));
      const double g = (scale_grad[d] + (std::isfinite(reg) ? reg : 0.0)) * sd * (1.0 - sd);
      first[d] = kBeta1 * first[d] + (1.0 - kBeta1) * g;
      second[d] = kBeta2 * second[d] + (1.0 - kBeta2) * g * g;
      const double m_hat = first[d] / (1.0 - beta1_t);
      const double v_hat = second[d] / (1.0 - beta2_t);
      mask.logits[d] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + kEps);
    }
  }

  mask.activation.resize(dim);
  for (std::size_t d = 0; d < dim; ++d) mask.activation[d] = sigmoid(mask.logits[d]);
  mask.p_masked = sigmoid(GcnPass(graph, plan, params, mask.activation).logit(u, v));
  mask.fidelity = std::abs(mask.p_masked - mask.p_original);
  mask.rollup = rollup_scores(graph.codec(), mask.activation, active);
  return mask;
}

double MaskSuiteStats::fraction_fidelity_within(double tolerance) const {
  if (fidelity.empty()) return 0.0;
  const auto ok = std::count_if(fidelity.begin(), fidelity.end(), [&](double f) { return f <= tolerance; });
  return static_cast<double>(ok) / static_cast<double>(fidelity.size());
}

double MaskSuiteStats::mean_sparsity() const {
  if (sparsity.empty()) return 0.0;
  return std::accumulate(sparsity.begin(), sparsity.end(), 0.0) / static_cast<double>(sparsity.size());
}

MaskSuiteStats mask_fidelity_suite(const GcnParams& params, const EntityGraph& graph,
                                   const std::vector<RecordPair>& pairs, const MaskConfig& config,
                                   std::size_t deleted_attributes, std::uint64_t deletion_seed) {
  if (pairs.empty()) throw Error(ErrorCode::kPrecondition, "mask suite needs at least one pair");
  const FeatureCodec& codec = graph.codec();
  const std::size_t n_attr = codec.attribute_count();
  deleted_attributes = std::min(deleted_attributes, n_attr);

  MaskSuiteStats stats;
  stats.deleted_attributes = deleted_attributes;
  double top_sum = 0.0;
  double random_sum = 0.0;
  const std::vector<double> ones(graph.dimension(), 1.0);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const FeatureMask mask = explain_pair_mask(params, graph, pairs[i].a, pairs[i].b, config);
    stats.fidelity.push_back(mask.fidelity);
    stats.sparsity.push_back(mask.sparsity());

    const std::size_t u = graph.index_of(mask.pair.a);
    const std::size_t v = graph.index_of(mask.pair.b);
    stats.identity_fidelity.push_back(
        std::abs(masked_probability(params, graph, u, v, ones) - mask.p_original));

    std::vector<std::size_t> order(n_attr);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      return mask.rollup[x].second > mask.rollup[y].second;
    });
    const std::vector<std::size_t> top(order.begin(), order.begin() + static_cast<long>(deleted_attributes));

    CounterRng rng(deletion_seed, i);
    std::vector<std::size_t> shuffled(n_attr);
    std::iota(shuffled.begin(), shuffled.end(), std::size_t{0});
    for (std::size_t k = 0; k < deleted_attributes; ++k) {
      std::swap(shuffled[k], shuffled[k + rng.below(n_attr - k)]);
    }
    const std::vector<std::size_t> random(shuffled.begin(),
                                          shuffled.begin() + static_cast<long>(deleted_attributes));

    top_sum += std::abs(masked_probability(params, graph, u, v, deletion_scale(codec, top)) -
                        mask.p_original);
    random_sum += std::abs(masked_probability(params, graph, u, v, deletion_scale(codec, random)) -
                           mask.p_original);
  }
  stats.top_deletion_mean = top_sum / static_cast<double>(pairs.size());
  stats.random_deletion_mean = random_sum / static_cast<double>(pairs.size());
  return stats;
}

double Attribution::contribution(std::string_view attribute) const {
  for (const auto& [name, c] : contributions) {
    if (name == attribute) return c;
  }
  throw Error(ErrorCode::kLookup, "attribution has no attribute \"" + std::string(attribute) + "\"");
}

json Attribution::to_json() const {
  return {{"pair", {pair.a, pair.b}},
          {"contributions", scores_to_json(contributions)},
          {"intercept", intercept},
          {"surrogate_r2", surrogate_r2}};
}

PairScorer engine_scorer(const Schema& schema, const MatcherConfig& config) {
  return [schema, config](const Record& a, const Record& b) {
    return score_pair(compare_records(a, b, schema, config.anonymous), config.weights).total;
  };
}

Attribution attribute_contributions(const PairScorer& scorer, const Record& a, const Record& b,
                                    const Schema& schema, const AttributionConfig& config) {
  const std::size_t n_attr = schema.size();
  if (a.values.size() != n_attr || b.values.size() != n_attr) {
    throw Error(ErrorCode::kShape, "records do not share the schema");
  }
  const std::size_t n = config.n_samples;
  Eigen::MatrixXd design(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n_attr + 1));
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  CounterRng rng(config.seed, 0x61747472ULL);
  for (std::size_t i = 0; i < n; ++i) {
    Record pa = a;
    Record pb = b;
    const auto row = static_cast<Eigen::Index>(i);
    design(row, 0) = 1.0;
    for (std::size_t j = 0; j < n_attr; ++j) {
      const bool keep = rng.bernoulli(0.5);
      design(row, static_cast<Eigen::Index>(j + 1)) = keep ? 1.0 : 0.0;
      if (!keep) {
        pa.values[j].reset();
        pb.values[j].reset();
      }
    }
    y(row) = scorer(pa, pb);
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < design.cols()) {
    throw Error(ErrorCode::kSampling, "attribute subsets do not determine every contribution; "
                                      "increase n_samples");
  }
  const Eigen::VectorXd coef = qr.solve(y);

  // Coefficients within solver round-off of zero are reported as zero, so an
  // inert attribute (missing or suppressed on either side) reads exactly 0.
  const double roundoff = 1e-9 * std::max(1.0, y.cwiseAbs().maxCoeff());
  auto snap = [&](double c) { return std::abs(c) <= roundoff ? 0.0 : c; };

  Attribution out;
  out.pair = canonical_pair(a.record_id, b.record_id);
  out.intercept = snap(coef(0));
  for (std::size_t j = 0; j < n_attr; ++j) {
    out.contributions.emplace_back(schema[j].name, snap(coef(static_cast<Eigen::Index>(j + 1))));
  }
  const Eigen::VectorXd residual = y - design * coef;
  const double ss_res = residual.squaredNorm();
  const double ss_tot = (y.array() - y.mean()).matrix().squaredNorm();
  if (ss_tot <= 1e-24) {
    out.surrogate_r2 = ss_res <= 1e-18 ? 1.0 : 0.0;
  } else {
    out.surrogate_r2 = std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0);
  }
  return out;
}

json ExplanationReport::to_json() const {
  json rows_json = json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"member", r.member},
                         {"partner", r.partner},
                         {"proxy_probability", r.proxy_probability},
                         {"pme_total", r.pme_total},
                         {"top_attributes", ranked_to_json(r.top_attributes)},
                         {"attribution", r.attribution.to_json()},
                         {"flags",
                          {{"weak_link", r.weak_link},
                           {"glue_record", r.glue_record},
                           {"anonymous_match_suspect", r.anonymous_match_suspect}}}});
  }
  return {{"entity_id", entity_id}, {"representative", representative}, {"rows", rows_json}};
}

std::string ExplanationReport::to_csv(const Schema& schema) const {
  std::ostringstream out;
  out.precision(17);
  out << "entity_id,member,representative,proxy_probability,pme_total,top_attributes";
  for (const auto& a : schema.attributes()) out << ",contrib_" << a.name;
  out << ",weak_link,glue_record,anonymous_match_suspect\n";
  for (const auto& r : rows) {
    out << entity_id << ',' << r.member << ',' << r.partner << ',' << r.proxy_probability << ','
        << r.pme_total << ',';
    for (std::size_t i = 0; i < r.top_attributes.size(); ++i) {
      if (i) out << ';';
      out << r.top_attributes[i].first << ':' << r.top_attributes[i].second;
    }
    for (const auto& a : schema.attributes()) out << ',' << r.attribution.contribution(a.name);
    out << ',' << (r.weak_link ? "true" : "false") << ',' << (r.glue_record ? "true" : "false")
        << ',' << (r.anonymous_match_suspect ? "true" : "false") << '\n';
  }
  return out.str();
}

std::vector<std::string> articulation_points(const std::vector<std::string>& members,
                                             const std::vector<RecordPair>& edges) {
  const std::size_t n = members.size();
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < n; ++i) pos.emplace(members[i], i);
  std::vector<std::vector<std::size_t>> adj(n);
  for (const auto& e : edges) {
    auto x = pos.find(e.a);
    auto y = pos.find(e.b);
    if (x == pos.end() || y == pos.end()) continue;
    adj[x->second].push_back(y->second);
    adj[y->second].push_back(x->second);
  }

  std::vector<long> disc(n, -1), low(n, 0);
  std::vector<std::size_t> parent(n, n), child_count(n, 0);
  std::vector<bool> cut(n, false);
  long timer = 0;
  struct Frame {
    std::size_t node;
    std::size_t next;
  };
  for (std::size_t root = 0; root < n; ++root) {
    if (disc[root] >= 0) continue;
    std::vector<Frame> stack{{root, 0}};
    disc[root] = low[root] = timer++;
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next < adj[f.node].size()) {
        const std::size_t w = adj[f.node][f.next++];
        if (disc[w] < 0) {
          parent[w] = f.node;
          ++child_count[f.node];
          disc[w] = low[w] = timer++;
          stack.push_back({w, 0});
        } else if (w != parent[f.node]) {
          low[f.node] = std::min(low[f.node], disc[w]);
        }
        continue;
      }
      const std::size_t node = f.node;
      stack.pop_back();
      if (!stack.empty()) {
        const std::size_t p = stack.back().node;
        low[p] = std::min(low[p], low[node]);
        if (parent[p] != n && low[node] >= disc[p]) cut[p] = true;
      }
    }
    if (child_count[root] > 1) cut[root] = true;
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (cut[i]) out.push_back(members[i]);
  }
  return out;
}

std::vector<RecordPair> entity_match_edges(const Entity& entity,
                                           const std::vector<PairScore>& pair_scores,
                                           const std::vector<UnlinkRule>& rules) {
  const std::set<std::string> members(entity.members.begin(), entity.members.end());
  std::set<RecordPair> removed;
  for (const auto& r : rules) removed.insert(r.pair);
  std::vector<RecordPair> edges;
  for (const auto& s : pair_scores) {
    if (s.match_class != MatchClass::kMatch || removed.contains(s.pair)) continue;
    if (members.contains(s.pair.a) && members.contains(s.pair.b)) edges.push_back(s.pair);
  }
  return edges;
}

ExplanationReport build_explanation_report(const Entity& entity, const RecordSet& records,
                                           const std::vector<PairScore>& pair_scores,
                                           const std::vector<UnlinkRule>& rules,
                                           const GcnParams& params, const EntityGraph& graph,
                                           const MatcherConfig& matcher,
                                           const ReportConfig& config) {
  for (const auto& m : entity.members) {
    if (!graph.contains(m)) {
      throw Error(ErrorCode::kStaleness, "record \"" + m +
                                             "\" is missing from the proxy graph; "
                                             "rebuild the graph and retrain the proxy");
    }
  }
  ExplanationReport report;
  report.entity_id = entity.entity_id;
  report.representative = entity.representative;
  if (entity.members.size() < 2) return report;

  const auto glue_list = articulation_points(entity.members, entity_match_edges(entity, pair_scores, rules));
  const std::set<std::string> glue(glue_list.begin(), glue_list.end());
  const Schema& schema = records.schema();
  const PairScorer scorer = engine_scorer(schema, matcher);
  const Record& rep = records.at(entity.representative);

  for (const auto& member : entity.members) {
    if (member == entity.representative) continue;
    ReportRow row;
    row.member = member;
    row.partner = entity.representative;
    const FeatureMask mask = explain_pair_mask(params, graph, member, entity.representative, config.mask);
    row.proxy_probability = mask.p_original;
    row.top_attributes = mask.top(config.top_k);
    const Record& rec = records.at(member);
    row.pme_total = scorer(rec, rep);
    row.attribution = attribute_contributions(scorer, rec, rep, schema, config.attribution);
    row.weak_link = row.proxy_probability < config.weak_threshold;
    row.glue_record = glue.contains(member);
    for (std::size_t i = 0; i < schema.size(); ++i) {
      row.anonymous_match_suspect = row.anonymous_match_suspect ||
          same_anonymous_value(rec.values[i], rep.values[i], schema[i].kind, matcher.anonymous);
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace xem
