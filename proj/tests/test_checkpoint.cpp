#include <filesystem>
#include <fstream>

#include "doctest.h"

#include "hinas/checkpoint.hpp"
#include "test_support.hpp"

using namespace hinas;
using namespace hinas::testing;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("hinas_ck_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("checkpoints round trip tensors, vectors, kind, step and metadata") {
  const fs::path dir = fresh_dir("roundtrip");
  const std::string path = (dir / "a.ckpt").string();

  Checkpoint ck;
  ck.kind = "supernet";
  ck.step = 42;
  ck.meta["note"] = "hello";
  ck.meta["nested"]["value"] = 3.5;
  Tensor t = random_tensor(2, 3, 4, 5, 31, -2.0, 2.0);
  ck.put_tensor("w", t);
  ck.put_vector("alpha", {0.25, -1.5, 3.0});
  ck.save(path);

  Checkpoint back = Checkpoint::load(path);
  CHECK(back.kind == "supernet");
  CHECK(back.step == 42);
  CHECK(back.meta.at("note").get<std::string>() == "hello");
  CHECK(back.meta.at("nested").at("value").get<double>() == 3.5);
  REQUIRE(back.has_tensor("w"));
  CHECK(max_abs_diff(back.get_tensor("w"), t) == 0.0);
  REQUIRE(back.has_vector("alpha"));
  CHECK(back.get_vector("alpha") == std::vector<double>{0.25, -1.5, 3.0});
  CHECK(back.tensor_names() == std::vector<std::string>{"w"});

  CHECK_THROWS_AS(back.get_tensor("nope"), ConfigError);
  CHECK_THROWS_AS(back.get_vector("nope"), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("saving over an existing checkpoint replaces it atomically") {
  const fs::path dir = fresh_dir("overwrite");
  const std::string path = (dir / "a.ckpt").string();

  Checkpoint first;
  first.kind = "compact";
  first.step = 1;
  first.put_vector("v", {1.0});
  first.save(path);

  Checkpoint second;
  second.kind = "compact";
  second.step = 2;
  second.put_vector("v", {2.0});
  second.save(path);

  Checkpoint back = Checkpoint::load(path);
  CHECK(back.step == 2);
  CHECK(back.get_vector("v") == std::vector<double>{2.0});
  CHECK(!fs::exists(path + ".tmp"));  // no temp file left behind
  fs::remove_all(dir);
}

TEST_CASE("loading rejects missing, corrupt and foreign-version files") {
  const fs::path dir = fresh_dir("errors");
  CHECK_THROWS_AS(Checkpoint::load((dir / "missing.ckpt").string()), ConfigError);

  {
    std::ofstream out(dir / "garbage.ckpt", std::ios::binary);
    out << "this is not cbor at all";
  }
  CHECK_THROWS_AS(Checkpoint::load((dir / "garbage.ckpt").string()), ConfigError);

  {
    nlohmann::json j;
    j["version"] = 99;
    j["kind"] = "supernet";
    j["step"] = 0;
    const std::vector<uint8_t> bytes = nlohmann::json::to_cbor(j);
    std::ofstream out(dir / "future.ckpt", std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  }
  CHECK_THROWS_AS(Checkpoint::load((dir / "future.ckpt").string()), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("parameter lists restore strictly by name and shape") {
  Tensor w = random_tensor(1, 2, 3, 3, 33);
  Tensor gw = Tensor::zeros_like(w);
  Tensor b = random_tensor(1, 2, 1, 1, 34);
  Tensor gb = Tensor::zeros_like(b);
  ParamList params;
  params.push_back({"conv.w", &w, &gw, true, false});
  params.push_back({"conv.b", &b, &gb, true, false});

  Checkpoint ck;
  put_params(ck, params);

  Tensor w2(1, 2, 3, 3), b2(1, 2, 1, 1);
  ParamList into;
  into.push_back({"conv.w", &w2, nullptr, true, false});
  into.push_back({"conv.b", &b2, nullptr, true, false});
  load_params(ck, into);
  CHECK(max_abs_diff(w2, w) == 0.0);
  CHECK(max_abs_diff(b2, b) == 0.0);

  // unknown name
  Tensor x(1, 1, 1, 1);
  ParamList missing;
  missing.push_back({"other.w", &x, nullptr, true, false});
  CHECK_THROWS_AS(load_params(ck, missing), ConfigError);

  // shape mismatch
  Tensor wrong(1, 2, 5, 5);
  ParamList bad;
  bad.push_back({"conv.w", &wrong, nullptr, true, false});
  CHECK_THROWS_AS(load_params(ck, bad), ShapeError);
}
