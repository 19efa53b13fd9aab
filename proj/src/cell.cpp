#include "hinas/cell.hpp"

#include <stdexcept>

namespace hinas {

namespace {

void check_cell_inputs(const Tensor& a, const Tensor& b, int width) {
  if (a.c() != width || b.c() != width)
    throw ShapeError("cell: inputs must carry the cell width (" + std::to_string(width) +
                     "), got " + a.shape_str() + " and " + b.shape_str());
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
    throw ShapeError("cell: inputs disagree: " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace

// ---------------------------------------------------------------------------
// SuperCell

SuperCell::SuperCell(int node_count, int width) : node_count_(node_count), width_(width) {
  if (node_count < 1 || width < 1) throw ShapeError("SuperCell: node_count and width must be >= 1");
  edges_.resize(node_count);
  for (int i = 0; i < node_count; ++i) {
    edges_[i].reserve(AlphaTable::inputs_of(i));
    for (int j = 0; j < AlphaTable::inputs_of(i); ++j) edges_[i].emplace_back(width);
  }
}

Tensor SuperCell::forward(const TensorPtr& h_prev, const TensorPtr& h_prevprev,
                          const AlphaTable& alpha, const FwdCtx& ctx) {
  check_cell_inputs(*h_prev, *h_prevprev, width_);
  if (alpha.node_count() != node_count_)
    throw GenotypeError("SuperCell: alpha table covers " + std::to_string(alpha.node_count()) +
                        " nodes, cell has " + std::to_string(node_count_));
  bn_ = h_prev->n();
  bh_ = h_prev->h();
  bw_ = h_prev->w();

  std::vector<TensorPtr> inputs = {h_prev, h_prevprev};
  for (int i = 0; i < node_count_; ++i) {
    Tensor acc(bn_, width_, bh_, bw_);
    for (int j = 0; j < int(edges_[i].size()); ++j)
      acc += edges_[i][j].forward(inputs[j], alpha.edge_logits(i, j), ctx);
    inputs.push_back(make_shared_tensor(std::move(acc)));
  }

  std::vector<const Tensor*> parts;
  for (int i = 0; i < node_count_; ++i) parts.push_back(inputs[2 + i].get());
  return concat_channels(parts);
}

std::pair<Tensor, Tensor> SuperCell::backward(const Tensor& gy, AlphaTable& alpha) {
  if (gy.c() != out_channels())
    throw ShapeError("SuperCell::backward: expected " + std::to_string(out_channels()) +
                     " channels, got " + gy.shape_str());
  // per-node totals seeded from the concat slices, then fed the contributions
  // of later nodes as we walk the DAG in reverse
  std::vector<Tensor> gnode;
  gnode.reserve(node_count_);
  for (int i = 0; i < node_count_; ++i)
    gnode.push_back(slice_channels(gy, i * width_, (i + 1) * width_));
  Tensor g_prev(bn_, width_, bh_, bw_);
  Tensor g_prevprev(bn_, width_, bh_, bw_);

  for (int i = node_count_ - 1; i >= 0; --i) {
    for (int j = int(edges_[i].size()) - 1; j >= 0; --j) {
      Tensor gin = edges_[i][j].backward(gnode[i], alpha.edge_grads(i, j));
      if (j == 0)
        g_prev += gin;
      else if (j == 1)
        g_prevprev += gin;
      else
        gnode[j - 2] += gin;
    }
  }
  return {std::move(g_prev), std::move(g_prevprev)};
}

void SuperCell::init(Rng& rng) {
  for (auto& row : edges_)
    for (auto& e : row) e.init(rng);
}

void SuperCell::collect_params(const std::string& prefix, ParamList& out) {
  for (int i = 0; i < node_count_; ++i)
    for (int j = 0; j < int(edges_[i].size()); ++j)
      edges_[i][j].collect_params(prefix + ".n" + std::to_string(i) + ".e" + std::to_string(j), out);
}

void SuperCell::release() {
  for (auto& row : edges_)
    for (auto& e : row) e.release();
}

int64_t SuperCell::param_count() const {
  int64_t c = 0;
  for (const auto& row : edges_)
    for (const auto& e : row) c += e.param_count();
  return c;
}

// ---------------------------------------------------------------------------
// CompactCell

CompactCell::CompactCell(const CellGenotype& g, int width) : width_(width) {
  g.validate();
  nodes_.resize(g.node_count());
  for (int i = 0; i < g.node_count(); ++i)
    for (int s = 0; s < 2; ++s) {
      nodes_[i][s].input = g.nodes[i].inputs[s].first;
      nodes_[i][s].op = make_op(g.nodes[i].inputs[s].second, width);
    }
}

Tensor CompactCell::forward(const TensorPtr& h_prev, const TensorPtr& h_prevprev,
                            const FwdCtx& ctx) {
  check_cell_inputs(*h_prev, *h_prevprev, width_);
  bn_ = h_prev->n();
  bh_ = h_prev->h();
  bw_ = h_prev->w();

  std::vector<TensorPtr> inputs = {h_prev, h_prevprev};
  for (auto& node : nodes_) {
    Tensor acc(bn_, width_, bh_, bw_);
    for (auto& e : node) acc += e.op->forward(inputs[e.input], ctx);
    inputs.push_back(make_shared_tensor(std::move(acc)));
  }
  std::vector<const Tensor*> parts;
  for (int i = 0; i < node_count(); ++i) parts.push_back(inputs[2 + i].get());
  return concat_channels(parts);
}

std::pair<Tensor, Tensor> CompactCell::backward(const Tensor& gy) {
  if (gy.c() != out_channels())
    throw ShapeError("CompactCell::backward: expected " + std::to_string(out_channels()) +
                     " channels, got " + gy.shape_str());
  std::vector<Tensor> gnode;
  gnode.reserve(node_count());
  for (int i = 0; i < node_count(); ++i)
    gnode.push_back(slice_channels(gy, i * width_, (i + 1) * width_));
  Tensor g_prev(bn_, width_, bh_, bw_);
  Tensor g_prevprev(bn_, width_, bh_, bw_);

  for (int i = node_count() - 1; i >= 0; --i) {
    for (int s = 1; s >= 0; --s) {
      auto& e = nodes_[i][s];
      Tensor gin = e.op->backward(gnode[i]);
      if (e.input == 0)
        g_prev += gin;
      else if (e.input == 1)
        g_prevprev += gin;
      else
        gnode[e.input - 2] += gin;
    }
  }
  return {std::move(g_prev), std::move(g_prevprev)};
}

void CompactCell::init(Rng& rng) {
  for (auto& node : nodes_)
    for (auto& e : node) e.op->init(rng);
}

void CompactCell::collect_params(const std::string& prefix, ParamList& out) {
  for (int i = 0; i < node_count(); ++i)
    for (int s = 0; s < 2; ++s)
      nodes_[i][s].op->collect_params(
          prefix + ".n" + std::to_string(i) + ".e" + std::to_string(s) + "." +
              op_name(nodes_[i][s].op->kind()),
          out);
}

void CompactCell::release() {
  for (auto& node : nodes_)
    for (auto& e : node) e.op->release();
}

int64_t CompactCell::param_count() const {
  int64_t c = 0;
  for (const auto& node : nodes_)
    for (const auto& e : node) c += e.op->param_count();
  return c;
}

}  // namespace hinas
