#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hinas/nn.hpp"
#include "nlohmann/json.hpp"

namespace hinas {

/// Versioned binary checkpoint: named tensors/vectors plus free-form JSON
/// metadata, stored as a single CBOR document. Writes are atomic
/// (temp file + rename).
class Checkpoint {
public:
  static constexpr int kVersion = 1;

  std::string kind;        // "supernet" or "compact"
  int64_t step = 0;        // epoch or iteration, owner-defined
  nlohmann::json meta;     // config echo, history, anything reproducibility needs

  void put_tensor(const std::string& name, const Tensor& t);
  Tensor get_tensor(const std::string& name) const;
  bool has_tensor(const std::string& name) const { return tensors_.count(name) > 0; }

  void put_vector(const std::string& name, const std::vector<double>& v);
  std::vector<double> get_vector(const std::string& name) const;
  bool has_vector(const std::string& name) const { return vectors_.count(name) > 0; }

  std::vector<std::string> tensor_names() const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

private:
  struct Entry {
    std::array<int, 4> shape{};
    std::vector<double> data;
  };
  std::map<std::string, Entry> tensors_;
  std::map<std::string, std::vector<double>> vectors_;
};

/// Stores every parameter and buffer in `params` under its name.
void put_params(Checkpoint& ck, const ParamList& params);
/// Strict restore: every entry in `params` must exist with matching shape.
void load_params(const Checkpoint& ck, ParamList& params);

}  // namespace hinas
