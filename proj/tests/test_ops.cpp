#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"

#include "hinas/ops.hpp"
#include "test_support.hpp"

using namespace hinas;
using namespace hinas::testing;

namespace {

std::map<std::string, ParamRef> by_name(const ParamList& pl) {
  std::map<std::string, ParamRef> m;
  for (const ParamRef& p : pl) m.emplace(p.name, p);
  return m;
}

std::vector<double> one_hot_logits(int k, double off = -1e4) {
  std::vector<double> lg(kNumOps, off);
  lg[std::size_t(k)] = 0.0;
  return lg;
}

// random values bounded away from zero so FD never straddles the relu kink
Tensor random_signed_tensor(int n, int c, int h, int w, uint64_t seed) {
  Tensor t(n, c, h, w);
  Rng rng(seed);
  for (std::size_t i = 0; i < t.numel(); ++i)
    t[i] = rng.uniform(0.1, 1.0) * (rng.coin() ? 1.0 : -1.0);
  return t;
}

}  // namespace

TEST_CASE("every op kind preserves channel count and spatial size") {
  Rng rng(3);
  for (OpKind kind : kAllOps) {
    auto op = make_op(kind, 3);
    CHECK(op->kind() == kind);
    op->init(rng);
    for (int hw : {5, 8, 11, 17}) {
      Tensor x = random_tensor(1, 3, hw, hw - (hw % 2), 50 + hw, -1.0, 1.0);
      Tensor y = op->forward(make_shared_tensor(Tensor(x)), eval_ctx());
      CHECK(y.shape() == x.shape());
    }
  }
}

TEST_CASE("skip is identity and none is zero") {
  auto skip = make_op(OpKind::skip, 2);
  auto none = make_op(OpKind::none, 2);
  Tensor x = random_tensor(2, 2, 7, 5, 8, -1.0, 1.0);
  CHECK(max_abs_diff(skip->forward(make_shared_tensor(Tensor(x)), eval_ctx()), x) == 0.0);
  Tensor z = none->forward(make_shared_tensor(Tensor(x)), eval_ctx());
  for (std::size_t i = 0; i < z.numel(); ++i) CHECK(z[i] == 0.0);
  CHECK(skip->param_count() == 0);
  CHECK(none->param_count() == 0);
}

TEST_CASE("a one-hot mixture equals the selected operator alone") {
  MixedOp mixed(2);
  Rng rng(17);
  mixed.init(rng);
  ParamList mp;
  mixed.collect_params("m", mp);
  auto mixed_params = by_name(mp);

  Tensor x = random_tensor(1, 2, 6, 6, 70, -1.0, 1.0);
  for (int k = 0; k < kNumOps; ++k) {
    const OpKind kind = kAllOps[std::size_t(k)];
    auto solo = make_op(kind, 2);
    ParamList sp;
    solo->collect_params("s", sp);
    for (const ParamRef& pr : sp) {
      const std::string want = "m." + std::string(op_name(kind)) + pr.name.substr(1);
      auto it = mixed_params.find(want);
      REQUIRE(it != mixed_params.end());
      *pr.value = *it->second.value;
    }
    Tensor ym = mixed.forward(make_shared_tensor(Tensor(x)), one_hot_logits(k).data(), eval_ctx());
    Tensor ys = solo->forward(make_shared_tensor(Tensor(x)), eval_ctx());
    CHECK(max_abs_diff(ym, ys) < 1e-6);
  }
}

TEST_CASE("a uniform mixture averages the six operator outputs") {
  MixedOp mixed(2);
  Rng rng(23);
  mixed.init(rng);
  Tensor x = random_tensor(1, 2, 8, 8, 71, -1.0, 1.0);

  Tensor sum(1, 2, 8, 8);
  for (int k = 0; k < kNumOps; ++k) {
    Tensor yk = mixed.forward(make_shared_tensor(Tensor(x)), one_hot_logits(k).data(), eval_ctx());
    sum += yk;
  }
  sum *= 1.0 / kNumOps;

  const std::vector<double> flat(kNumOps, 0.7);
  Tensor uniform = mixed.forward(make_shared_tensor(Tensor(x)), flat.data(), eval_ctx());
  CHECK(max_abs_diff(uniform, sum) < 1e-6);
}

TEST_CASE("with batchnorm affine zeroed a uniform mixture is x over six") {
  MixedOp mixed(3);
  Rng rng(29);
  mixed.init(rng);
  ParamList pl;
  mixed.collect_params("m", pl);
  for (const ParamRef& pr : pl) {
    const bool affine = pr.name.size() > 6 && (pr.name.rfind(".gamma") == pr.name.size() - 6 ||
                                               pr.name.rfind(".beta") == pr.name.size() - 5);
    if (affine) pr.value->zero();
  }
  Tensor x = random_tensor(2, 3, 6, 6, 72, -1.0, 1.0);
  const std::vector<double> flat(kNumOps, 0.0);
  Tensor y = mixed.forward(make_shared_tensor(Tensor(x)), flat.data(), eval_ctx());
  Tensor want = x;
  want *= 1.0 / kNumOps;
  CHECK(max_abs_diff(y, want) < 1e-6);
}

TEST_CASE("an arbitrary mixture is the softmax-weighted sum of per-op outputs") {
  MixedOp mixed(2);
  Rng rng(31);
  mixed.init(rng);
  Tensor x = random_tensor(1, 2, 7, 7, 73, -1.0, 1.0);

  const std::vector<double> logits = {0.4, -0.9, 1.3, 0.1, -0.2, 0.6};
  std::vector<double> p = softmax(logits);
  Tensor want(1, 2, 7, 7);
  for (int k = 0; k < kNumOps; ++k) {
    if (kAllOps[std::size_t(k)] == OpKind::none) continue;
    Tensor yk = mixed.forward(make_shared_tensor(Tensor(x)), one_hot_logits(k).data(), eval_ctx());
    want.add_scaled(yk, p[std::size_t(k)]);
  }
  Tensor got = mixed.forward(make_shared_tensor(Tensor(x)), logits.data(), eval_ctx());
  CHECK(max_abs_diff(got, want) < 1e-9);
}

TEST_CASE("mixture gradients w.r.t. alpha match finite differences") {
  MixedOp mixed(2);
  Rng rng(37);
  mixed.init(rng);
  Tensor x = random_signed_tensor(1, 2, 6, 6, 74);
  Tensor r = random_tensor(1, 2, 6, 6, 75, -1.0, 1.0);
  std::vector<double> logits = {0.2, -0.5, 0.9, 0.0, 0.4, -0.1};

  auto value = [&] {
    return mixed
        .forward(make_shared_tensor(Tensor(x)), logits.data(), FwdCtx{Phase::train, false, false})
        .dot(r);
  };

  mixed.forward(make_shared_tensor(Tensor(x)), logits.data(), FwdCtx{Phase::train, false, false});
  std::vector<double> ga(kNumOps, 0.0);
  Tensor gx = mixed.backward(r, ga.data());

  for (int k = 0; k < kNumOps; ++k) CHECK(rel_err(ga[std::size_t(k)], fd_grad(&logits[std::size_t(k)], value)) < 1e-3);
  CHECK(fd_check_tensor(x, gx, value) < 1e-3);
}

TEST_CASE("mixture rejects non-finite logits") {
  MixedOp mixed(1);
  Rng rng(41);
  mixed.init(rng);
  Tensor x = random_tensor(1, 1, 5, 5, 76);
  std::vector<double> logits(kNumOps, 0.0);
  logits[2] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(mixed.forward(make_shared_tensor(Tensor(x)), logits.data(), eval_ctx()),
                  NumericError);
}

TEST_CASE("mixture backward requires a train-phase forward") {
  MixedOp mixed(1);
  Rng rng(43);
  mixed.init(rng);
  Tensor x = random_tensor(1, 1, 5, 5, 77);
  const std::vector<double> logits(kNumOps, 0.0);
  mixed.forward(make_shared_tensor(Tensor(x)), logits.data(), eval_ctx());
  std::vector<double> ga(kNumOps, 0.0);
  CHECK_THROWS_AS(mixed.backward(x, ga.data()), std::logic_error);
}
