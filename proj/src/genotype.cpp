#include "hinas/genotype.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <random>
#include <sstream>

#include "hinas/nn.hpp"
#include "nlohmann/json.hpp"

namespace hinas {

using nlohmann::json;

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::conv: return "conv";
    case OpKind::sep: return "sep";
    case OpKind::dil: return "dil";
    case OpKind::def: return "def";
    case OpKind::skip: return "skip";
    case OpKind::none: return "none";
  }
  return "?";
}

std::optional<OpKind> op_from_name(const std::string& s) {
  for (OpKind k : kAllOps)
    if (s == op_name(k)) return k;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// AlphaTable

AlphaTable::AlphaTable(int node_count) : node_count_(node_count) {
  if (node_count < 1) throw GenotypeError("AlphaTable: node_count must be >= 1");
  int off = 0;
  for (int i = 0; i < node_count; ++i) {
    for (int j = 0; j < inputs_of(i); ++j) {
      offsets_.push_back(off);
      edge_node_.push_back(i);
      edge_input_.push_back(j);
      off += kNumOps;
    }
  }
  logits_.assign(off, 0.0);
  grads_.assign(off, 0.0);
}

int AlphaTable::index(int node, int input) const {
  if (node < 0 || node >= node_count_ || input < 0 || input >= inputs_of(node))
    throw GenotypeError("AlphaTable: edge (" + std::to_string(node) + "," + std::to_string(input) +
                        ") out of range");
  // edges laid out node-major: node i starts after sum_{t<i}(2+t) edges
  int eid = node * 2 + node * (node - 1) / 2 + input;
  return offsets_[eid];
}

double* AlphaTable::edge_logits(int node, int input) { return logits_.data() + index(node, input); }
const double* AlphaTable::edge_logits(int node, int input) const {
  return logits_.data() + index(node, input);
}
double* AlphaTable::edge_grads(int node, int input) { return grads_.data() + index(node, input); }

void AlphaTable::zero_grads() { std::fill(grads_.begin(), grads_.end(), 0.0); }

// ---------------------------------------------------------------------------
// BetaTable

BetaTable::BetaTable(int layer_count) : layer_count_(layer_count) {
  if (layer_count < 1) throw GenotypeError("BetaTable: layer_count must be >= 1");
  // dense (layer-1) x 3 x 3 slab; invalid (target, source) slots stay unused
  logits_.assign(std::size_t(std::max(0, layer_count - 1)) * 9, 0.0);
  grads_.assign(logits_.size(), 0.0);
}

bool BetaTable::has(int layer, int target, int source) const {
  return layer >= 2 && layer <= layer_count_ && target >= 0 && target <= 2 && source >= 0 &&
         source <= 2 && std::abs(target - source) <= 1;
}

int BetaTable::index(int layer, int target, int source) const {
  if (!has(layer, target, source))
    throw GenotypeError("BetaTable: no entry (layer " + std::to_string(layer) + ", target " +
                        std::to_string(target) + ", source " + std::to_string(source) + ")");
  return ((layer - 2) * 3 + target) * 3 + source;
}

double& BetaTable::at(int layer, int target, int source) { return logits_[index(layer, target, source)]; }
double BetaTable::at(int layer, int target, int source) const {
  return logits_[index(layer, target, source)];
}
double& BetaTable::grad_at(int layer, int target, int source) {
  return grads_[index(layer, target, source)];
}

std::vector<std::pair<int, double>> BetaTable::normalized_incoming(int layer, int target) const {
  std::vector<int> srcs = valid_sources(target);
  std::vector<double> logits;
  logits.reserve(srcs.size());
  for (int k : srcs) logits.push_back(at(layer, target, k));
  std::vector<double> p = softmax(logits);
  std::vector<std::pair<int, double>> out;
  for (std::size_t i = 0; i < srcs.size(); ++i) out.emplace_back(srcs[i], p[i]);
  return out;
}

void BetaTable::zero_grads() { std::fill(grads_.begin(), grads_.end(), 0.0); }

// ---------------------------------------------------------------------------
// Genotype validation

void CellGenotype::validate() const {
  if (nodes.empty()) throw GenotypeError("cell: must have at least one node");
  for (int i = 0; i < node_count(); ++i) {
    const auto& nd = nodes[i];
    const int limit = 2 + i;
    if (nd.inputs[0].first == nd.inputs[1].first)
      throw GenotypeError("cell node " + std::to_string(i) + ": duplicate input index");
    for (const auto& [idx, op] : nd.inputs) {
      if (idx < 0 || idx >= limit)
        throw GenotypeError("cell node " + std::to_string(i) + ": input index " +
                            std::to_string(idx) + " out of range [0," + std::to_string(limit) + ")");
      if (op == OpKind::none)
        throw GenotypeError("cell node " + std::to_string(i) + ": `none` op not allowed");
    }
  }
}

void WidthPath::validate() const {
  if (levels.empty()) throw GenotypeError("path: must cover at least one layer");
  for (std::size_t l = 0; l < levels.size(); ++l) {
    if (levels[l] < 0 || levels[l] > 2)
      throw GenotypeError("path: level " + std::to_string(levels[l]) + " out of {0,1,2}");
    if (l > 0 && std::abs(levels[l] - levels[l - 1]) > 1)
      throw GenotypeError("path: level jump > 1 between layers " + std::to_string(l) + " and " +
                          std::to_string(l + 1));
  }
}

void NetworkGenotype::validate() const {
  cell.validate();
  path.validate();
  if (base_width < 1) throw GenotypeError("genotype: base width must be >= 1");
}

bool NetworkGenotype::operator==(const NetworkGenotype& o) const {
  if (base_width != o.base_width || path.levels != o.path.levels ||
      cell.nodes.size() != o.cell.nodes.size())
    return false;
  for (std::size_t i = 0; i < cell.nodes.size(); ++i)
    if (cell.nodes[i].inputs != o.cell.nodes[i].inputs) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Derivation

CellGenotype derive_cell(const AlphaTable& alpha) {
  const int N = alpha.node_count();
  if (N < 1) throw GenotypeError("derive_cell: malformed alpha table");
  CellGenotype cell;
  cell.nodes.resize(N);
  for (int i = 0; i < N; ++i) {
    const int num_in = AlphaTable::inputs_of(i);
    if (num_in < 2) throw GenotypeError("derive_cell: node with fewer than 2 candidate inputs");
    std::vector<double> score(num_in);
    std::vector<OpKind> best_op(num_in);
    for (int j = 0; j < num_in; ++j) {
      const double* logit = alpha.edge_logits(i, j);
      std::vector<double> p = softmax(std::vector<double>(logit, logit + kNumOps));
      double best = -1.0;
      OpKind op = OpKind::conv;
      for (int k = 0; k < kNumOps; ++k) {
        if (kAllOps[k] == OpKind::none) continue;
        if (p[k] > best) {
          best = p[k];
          op = kAllOps[k];
        }
      }
      score[j] = best;
      best_op[j] = op;
    }
    std::vector<int> order(num_in);
    for (int j = 0; j < num_in; ++j) order[j] = j;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return score[a] > score[b]; });
    int a = order[0], b = order[1];
    if (a > b) std::swap(a, b);
    cell.nodes[i].inputs = {std::make_pair(a, best_op[a]), std::make_pair(b, best_op[b])};
  }
  cell.validate();
  return cell;
}

WidthPath derive_width_path(const BetaTable& beta, int layer_count) {
  if (layer_count < 1) throw GenotypeError("derive_width_path: layer count must be >= 1");
  if (beta.layer_count() < layer_count)
    throw GenotypeError("derive_width_path: beta table covers fewer layers than requested");

  // log transition weights: trans[l][target][source], layers 2..layer_count
  auto log_trans = [&](int l, int target, int source) {
    for (auto& [k, p] : beta.normalized_incoming(l, target))
      if (k == source) return std::log(p);
    throw GenotypeError("derive_width_path: invalid transition");
  };

  // best[l][i]: best achievable log-likelihood from layer l at level i to the end
  std::vector<std::array<double, 3>> best(layer_count + 1);
  best[layer_count] = {0.0, 0.0, 0.0};
  for (int l = layer_count - 1; l >= 1; --l) {
    for (int i = 0; i < 3; ++i) {
      double b = -1e300;
      for (int j = std::max(0, i - 1); j <= std::min(2, i + 1); ++j)
        b = std::max(b, log_trans(l + 1, j, i) + best[l + 1][j]);
      best[l][i] = b;
    }
  }

  // forward reconstruction; ties resolve to the lowest level, which yields
  // the lexicographically smallest maximizing path
  WidthPath path;
  path.levels.resize(layer_count);
  const double prior = std::log(1.0 / 3.0);
  int cur = 0;
  double bestv = -1e300;
  for (int i = 0; i < 3; ++i) {
    const double v = prior + best[1][i];
    if (v > bestv) {
      bestv = v;
      cur = i;
    }
  }
  path.levels[0] = cur;
  for (int l = 2; l <= layer_count; ++l) {
    int nxt = -1;
    double nv = -1e300;
    for (int j = std::max(0, cur - 1); j <= std::min(2, cur + 1); ++j) {
      const double v = log_trans(l, j, cur) + best[l][j];
      if (v > nv) {
        nv = v;
        nxt = j;
      }
    }
    cur = nxt;
    path.levels[l - 1] = cur;
  }
  path.validate();
  return path;
}

// ---------------------------------------------------------------------------
// Perturbations

NetworkGenotype perturb_genotype(const NetworkGenotype& g, PerturbMode mode, uint64_t seed) {
  g.validate();
  NetworkGenotype out = g;
  if (mode == PerturbMode::R1) {
    for (auto& node : out.cell.nodes)
      for (auto& [idx, op] : node.inputs)
        if (op == OpKind::conv) op = OpKind::def;
    return out;
  }

  // R2: rewire one input of one node to a different valid index
  std::mt19937_64 rng(seed);
  struct Option {
    int node, slot, new_idx;
  };
  std::vector<Option> options;
  for (int i = 0; i < out.cell.node_count(); ++i) {
    const auto& nd = out.cell.nodes[i];
    for (int slot = 0; slot < 2; ++slot) {
      for (int idx = 0; idx < 2 + i; ++idx) {
        if (idx == nd.inputs[0].first || idx == nd.inputs[1].first) continue;
        options.push_back({i, slot, idx});
      }
    }
  }
  if (options.empty()) {
    std::cerr << "perturb R2: no rewiring preserves cell validity; genotype unchanged\n";
    return out;
  }
  const Option& pick = options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
  auto& nd = out.cell.nodes[pick.node];
  nd.inputs[pick.slot].first = pick.new_idx;
  if (nd.inputs[0].first > nd.inputs[1].first) std::swap(nd.inputs[0], nd.inputs[1]);
  out.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {
constexpr int kGenotypeSchemaVersion = 1;
}

std::string serialize_genotype(const NetworkGenotype& g) {
  g.validate();
  json j;
  j["version"] = kGenotypeSchemaVersion;
  j["N"] = g.cell.node_count();
  j["L"] = g.path.layer_count();
  j["W"] = g.base_width;
  j["nodes"] = json::array();
  for (const auto& nd : g.cell.nodes) {
    json inputs = json::array();
    for (const auto& [idx, op] : nd.inputs) inputs.push_back(json::array({idx, op_name(op)}));
    j["nodes"].push_back(json{{"inputs", inputs}});
  }
  j["path"] = g.path.levels;
  return j.dump(2) + "\n";
}

NetworkGenotype parse_genotype(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw GenotypeError(std::string("genotype parse error at byte ") + std::to_string(e.byte) +
                        ": " + e.what());
  }
  try {
    const int version = j.at("version").get<int>();
    if (version != kGenotypeSchemaVersion)
      throw GenotypeError("genotype: unsupported schema version " + std::to_string(version));
    NetworkGenotype g;
    g.base_width = j.at("W").get<int>();
    const int N = j.at("N").get<int>();
    const int L = j.at("L").get<int>();
    for (const auto& nd : j.at("nodes")) {
      CellGenotype::NodeSpec spec;
      const auto& inputs = nd.at("inputs");
      if (inputs.size() != 2) throw GenotypeError("genotype: each node needs exactly 2 inputs");
      for (int s = 0; s < 2; ++s) {
        spec.inputs[s].first = inputs[s].at(0).get<int>();
        const std::string name = inputs[s].at(1).get<std::string>();
        auto op = op_from_name(name);
        if (!op) throw GenotypeError("genotype: unknown op `" + name + "`");
        spec.inputs[s].second = *op;
      }
      g.cell.nodes.push_back(spec);
    }
    g.path.levels = j.at("path").get<std::vector<int>>();
    if (g.cell.node_count() != N) throw GenotypeError("genotype: N does not match nodes array");
    if (g.path.layer_count() != L) throw GenotypeError("genotype: L does not match path length");
    g.validate();
    return g;
  } catch (const json::exception& e) {
    throw GenotypeError(std::string("genotype: malformed document: ") + e.what());
  }
}

}  // namespace hinas
