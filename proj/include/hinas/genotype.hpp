#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hinas {

/// The six candidate operators. `none` appears only in relaxed search,
/// never in a derived genotype.
enum class OpKind { conv, sep, dil, def, skip, none };
inline constexpr int kNumOps = 6;
inline constexpr std::array<OpKind, kNumOps> kAllOps = {OpKind::conv, OpKind::sep, OpKind::dil,
                                                        OpKind::def,  OpKind::skip, OpKind::none};

const char* op_name(OpKind k);
std::optional<OpKind> op_from_name(const std::string& s);

struct GenotypeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Unnormalized logits for the intra-cell operator mixture. Node i has
/// 2 + i candidate inputs (cell inputs h_{l-1}, h_{l-2}, then prior nodes),
/// each carrying one logit per operator.
class AlphaTable {
public:
  AlphaTable() = default;
  explicit AlphaTable(int node_count);

  int node_count() const { return node_count_; }
  static int inputs_of(int node) { return 2 + node; }
  int edge_count() const { return int(offsets_.size()); }

  double* edge_logits(int node, int input);
  const double* edge_logits(int node, int input) const;
  double* edge_grads(int node, int input);

  std::vector<double>& raw() { return logits_; }
  const std::vector<double>& raw() const { return logits_; }
  std::vector<double>& raw_grads() { return grads_; }

  void zero_grads();

private:
  int index(int node, int input) const;
  int node_count_ = 0;
  std::vector<int> offsets_;  // edge id -> logit offset; edges enumerated node-major
  std::vector<int> edge_node_, edge_input_;
  std::vector<double> logits_;
  std::vector<double> grads_;
};

/// Unnormalized logits for inter-cell width transitions. Entries exist for
/// layers 2..L, target level i in {0,1,2}, source level k with |k - i| <= 1.
/// Layer 1 has no entries; the stem is its only source.
class BetaTable {
public:
  BetaTable() = default;
  explicit BetaTable(int layer_count);

  int layer_count() const { return layer_count_; }
  static std::vector<int> valid_sources(int target) {
    std::vector<int> s;
    for (int k = target - 1; k <= target + 1; ++k)
      if (k >= 0 && k <= 2) s.push_back(k);
    return s;
  }

  bool has(int layer, int target, int source) const;
  double& at(int layer, int target, int source);
  double at(int layer, int target, int source) const;
  double& grad_at(int layer, int target, int source);

  /// Softmax over the target cell's valid incoming sources.
  std::vector<std::pair<int, double>> normalized_incoming(int layer, int target) const;

  std::vector<double>& raw() { return logits_; }
  const std::vector<double>& raw() const { return logits_; }
  std::vector<double>& raw_grads() { return grads_; }
  void zero_grads();

private:
  int index(int layer, int target, int source) const;
  int layer_count_ = 0;
  std::vector<double> logits_;
  std::vector<double> grads_;
};

struct CellGenotype {
  struct NodeSpec {
    // exactly two (input index, op) pairs, input indices distinct, ascending
    std::array<std::pair<int, OpKind>, 2> inputs;
  };
  std::vector<NodeSpec> nodes;

  int node_count() const { return int(nodes.size()); }
  void validate() const;
};

struct WidthPath {
  std::vector<int> levels;  // one of {0,1,2} per layer; |delta| <= 1 between layers
  int layer_count() const { return int(levels.size()); }
  void validate() const;
};

struct NetworkGenotype {
  CellGenotype cell;
  WidthPath path;
  int base_width = 0;  // W

  void validate() const;
  bool operator==(const NetworkGenotype& o) const;
};

enum class PerturbMode { R1, R2 };

/// Rank each node's candidate inputs by the largest softmax weight among its
/// non-none operators; keep the top two and assign each kept edge its argmax
/// non-none operator. Ties break toward the lower input index, then toward
/// the earlier entry in the operator list.
CellGenotype derive_cell(const AlphaTable& alpha);

/// Maximum-probability level path under a uniform layer-1 prior and
/// per-target softmax transition likelihoods, via Viterbi decoding.
/// Equal-probability ties resolve to the lexicographically smallest path.
WidthPath derive_width_path(const BetaTable& beta, int layer_count);

NetworkGenotype perturb_genotype(const NetworkGenotype& g, PerturbMode mode, uint64_t seed);

std::string serialize_genotype(const NetworkGenotype& g);
NetworkGenotype parse_genotype(const std::string& text);

}  // namespace hinas
