#include "hinas/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace hinas {

namespace {

json::binary_t pack_doubles(const double* p, std::size_t count) {
  json::binary_t bin;
  bin.resize(count * sizeof(double));
  std::memcpy(bin.data(), p, bin.size());
  return bin;
}

std::vector<double> unpack_doubles(const json::binary_t& bin) {
  if (bin.size() % sizeof(double) != 0)
    throw ConfigError("checkpoint: binary blob is not a whole number of doubles");
  std::vector<double> out(bin.size() / sizeof(double));
  std::memcpy(out.data(), bin.data(), bin.size());
  return out;
}

}  // namespace

void Checkpoint::put_tensor(const std::string& name, const Tensor& t) {
  Entry e;
  e.shape = {t.n(), t.c(), t.h(), t.w()};
  e.data.assign(t.data(), t.data() + t.numel());
  tensors_[name] = std::move(e);
}

Tensor Checkpoint::get_tensor(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ConfigError("checkpoint: no tensor named " + name);
  const Entry& e = it->second;
  Tensor t(e.shape[0], e.shape[1], e.shape[2], e.shape[3]);
  std::memcpy(t.data(), e.data.data(), e.data.size() * sizeof(double));
  return t;
}

void Checkpoint::put_vector(const std::string& name, const std::vector<double>& v) {
  vectors_[name] = v;
}

std::vector<double> Checkpoint::get_vector(const std::string& name) const {
  auto it = vectors_.find(name);
  if (it == vectors_.end()) throw ConfigError("checkpoint: no vector named " + name);
  return it->second;
}

std::vector<std::string> Checkpoint::tensor_names() const {
  std::vector<std::string> names;
  for (const auto& [name, entry] : tensors_) names.push_back(name);
  return names;
}

void Checkpoint::save(const std::string& path) const {
  json j;
  j["version"] = kVersion;
  j["kind"] = kind;
  j["step"] = step;
  j["meta"] = meta;
  json jt = json::object();
  for (const auto& [name, e] : tensors_) {
    jt[name] = json{{"shape", e.shape},
                    {"data", pack_doubles(e.data.data(), e.data.size())}};
  }
  j["tensors"] = std::move(jt);
  json jv = json::object();
  for (const auto& [name, v] : vectors_) jv[name] = pack_doubles(v.data(), v.size());
  j["vectors"] = std::move(jv);

  const std::vector<uint8_t> cbor = json::to_cbor(j);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("checkpoint: cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(cbor.data()), std::streamsize(cbor.size()));
    if (!out) throw ConfigError("checkpoint: short write to " + tmp);
  }
  fs::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("checkpoint: cannot open " + path);
  std::vector<uint8_t> cbor((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  json j;
  try {
    j = json::from_cbor(cbor);
  } catch (const json::parse_error& e) {
    throw ConfigError("checkpoint: corrupt file " + path + ": " + e.what());
  }
  Checkpoint ck;
  try {
    const int version = j.at("version").get<int>();
    if (version != kVersion)
      throw ConfigError("checkpoint: unsupported version " + std::to_string(version));
    ck.kind = j.at("kind").get<std::string>();
    ck.step = j.at("step").get<int64_t>();
    ck.meta = j.value("meta", json::object());
    for (const auto& [name, entry] : j.at("tensors").items()) {
      Entry e;
      const auto shape = entry.at("shape").get<std::vector<int>>();
      if (shape.size() != 4) throw ConfigError("checkpoint: tensor " + name + " has bad shape");
      std::copy(shape.begin(), shape.end(), e.shape.begin());
      e.data = unpack_doubles(entry.at("data").get_binary());
      const std::size_t expect =
          std::size_t(e.shape[0]) * e.shape[1] * e.shape[2] * e.shape[3];
      if (e.data.size() != expect)
        throw ConfigError("checkpoint: tensor " + name + " size does not match its shape");
      ck.tensors_[name] = std::move(e);
    }
    for (const auto& [name, entry] : j.at("vectors").items())
      ck.vectors_[name] = unpack_doubles(entry.get_binary());
  } catch (const json::exception& e) {
    throw ConfigError("checkpoint: malformed document in " + path + ": " + e.what());
  }
  return ck;
}

void put_params(Checkpoint& ck, const ParamList& params) {
  for (const auto& p : params) ck.put_tensor(p.name, *p.value);
}

void load_params(const Checkpoint& ck, ParamList& params) {
  for (auto& p : params) {
    Tensor t = ck.get_tensor(p.name);
    t.require_same_shape(*p.value, ("checkpoint: " + p.name).c_str());
    *p.value = std::move(t);
  }
}

}  // namespace hinas
