#ifndef HNETPP_CHECKPOINT_HPP
#define HNETPP_CHECKPOINT_HPP

// Single-file checkpoint:
//   8 bytes   magic "HNETPPCK"
//   u32 LE    format version
//   u64 LE    header length N
//   N bytes   JSON header {format_version, config, step, meta,
//                          tensors: [{name, shape, dtype, offset, nbytes}]}
//   payload   little-endian arrays; offsets are relative to the payload start

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "hnetpp/autodiff.hpp"
#include "hnetpp/config.hpp"
#include "hnetpp/optim.hpp"

namespace hnetpp {

inline constexpr char kCheckpointMagic[8] = {'H', 'N', 'E', 'T', 'P', 'P', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename Real>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<Real, float>) {
    return "f32";
  } else {
    static_assert(std::is_same_v<Real, double>, "checkpoints hold f32 or f64 tensors");
    return "f64";
  }
}

struct StoredTensor {
  Shape shape;
  std::string dtype;
  std::vector<unsigned char> bytes;  // little-endian payload
};

struct CheckpointFile {
  json header;
  RunConfig config;
  std::size_t step = 0;
  json meta;
  std::map<std::string, StoredTensor> tensors;
  std::vector<std::string> order;  // manifest order
};

namespace detail {

template <typename T>
void put_le(std::vector<unsigned char>& out, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

template <typename T>
T get_le(const unsigned char* p) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

template <typename Real>
void append_tensor(json& manifest, std::vector<unsigned char>& payload, const std::string& name, const Tensor<Real>& t) {
  const std::size_t offset = payload.size();
  for (Real v : t.values()) put_le(payload, v);
  manifest.push_back({{"name", name},
                      {"shape", t.shape()},
                      {"dtype", dtype_name<Real>()},
                      {"offset", offset},
                      {"nbytes", payload.size() - offset}});
}

inline std::size_t dtype_size(const std::string& dtype) {
  if (dtype == "f32") return 4;
  if (dtype == "f64") return 8;
  throw CheckpointError("unknown dtype " + dtype);
}

}  // namespace detail

/// Writes parameters (and optionally optimizer moments) atomically via a
/// temporary file in the same directory.
template <typename Real>
void save_checkpoint(const std::string& path, const RunConfig& config, std::size_t step,
                     const ParameterStore<Real>& params, const AdamState<Real>* adam = nullptr, json meta = json::object()) {
  json manifest = json::array();
  std::vector<unsigned char> payload;
  for (const auto& p : params) detail::append_tensor(manifest, payload, "param/" + p->name, p->value);
  if (adam && adam->m.size() == params.size()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      detail::append_tensor(manifest, payload, "adam_m/" + params[i].name, adam->m[i]);
      detail::append_tensor(manifest, payload, "adam_v/" + params[i].name, adam->v[i]);
    }
    meta["adam_steps"] = adam->steps;
  }
  json header = {{"format_version", kCheckpointVersion},
                 {"config", config_to_json(config)},
                 {"step", step},
                 {"meta", meta},
                 {"tensors", manifest}};
  const std::string text = header.dump();
  std::vector<unsigned char> out(kCheckpointMagic, kCheckpointMagic + 8);
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());

  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot write checkpoint " + tmp);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw CheckpointError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, target);
}

inline CheckpointFile read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path);
  std::vector<unsigned char> data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  constexpr std::size_t fixed = 8 + 4 + 8;
  if (data.size() < fixed) throw CheckpointError(path + ": truncated before the header (" + std::to_string(data.size()) + " bytes)");
  if (std::memcmp(data.data(), kCheckpointMagic, 8) != 0) throw CheckpointError(path + ": bad magic, not a checkpoint");
  const auto version = detail::get_le<std::uint32_t>(data.data() + 8);
  if (version != kCheckpointVersion) {
    throw CheckpointError(path + ": unsupported format version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = detail::get_le<std::uint64_t>(data.data() + 12);
  if (header_len > data.size() - fixed) throw CheckpointError(path + ": truncated header");
  CheckpointFile ck;
  try {
    ck.header = json::parse(data.begin() + fixed, data.begin() + fixed + static_cast<std::ptrdiff_t>(header_len));
  } catch (const json::exception& e) {
    throw CheckpointError(path + ": malformed header: " + e.what());
  }
  const std::size_t payload_start = fixed + header_len;
  const std::size_t payload_size = data.size() - payload_start;
  try {
    if (ck.header.at("format_version").get<std::uint32_t>() != version) {
      throw CheckpointError(path + ": header version disagrees with container version");
    }
    ck.config = config_from_json(ck.header.at("config"));
    ck.step = ck.header.at("step").get<std::size_t>();
    ck.meta = ck.header.value("meta", json::object());
    std::size_t expected_offset = 0;
    for (const auto& e : ck.header.at("tensors")) {
      StoredTensor t;
      const std::string name = e.at("name").get<std::string>();
      t.shape = e.at("shape").get<Shape>();
      t.dtype = e.at("dtype").get<std::string>();
      const auto offset = e.at("offset").get<std::size_t>();
      const auto nbytes = e.at("nbytes").get<std::size_t>();
      if (offset != expected_offset) {
        throw CheckpointError(path + ": tensor " + name + " at offset " + std::to_string(offset) + ", manifest implies " +
                              std::to_string(expected_offset));
      }
      if (nbytes != shape_size(t.shape) * detail::dtype_size(t.dtype)) {
        throw CheckpointError(path + ": tensor " + name + " declares " + std::to_string(nbytes) + " bytes for shape " +
                              shape_string(t.shape));
      }
      if (offset + nbytes > payload_size) throw CheckpointError(path + ": truncated payload in tensor " + name);
      t.bytes.assign(data.begin() + static_cast<std::ptrdiff_t>(payload_start + offset),
                     data.begin() + static_cast<std::ptrdiff_t>(payload_start + offset + nbytes));
      if (ck.tensors.count(name)) throw CheckpointError(path + ": duplicate tensor " + name);
      ck.order.push_back(name);
      ck.tensors.emplace(name, std::move(t));
      expected_offset = offset + nbytes;
    }
    if (expected_offset != payload_size) {
      throw CheckpointError(path + ": payload has " + std::to_string(payload_size) + " bytes, manifest covers " +
                            std::to_string(expected_offset));
    }
  } catch (const json::exception& e) {
    throw CheckpointError(path + ": malformed manifest: " + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(path + ": embedded config rejected: " + e.what());
  }
  return ck;
}

namespace detail {

template <typename Real>
void restore_tensor(const CheckpointFile& ck, const std::string& name, Tensor<Real>& dst) {
  auto it = ck.tensors.find(name);
  if (it == ck.tensors.end()) throw CheckpointError("checkpoint lacks tensor " + name);
  const StoredTensor& t = it->second;
  if (t.dtype != dtype_name<Real>()) {
    throw CheckpointError("tensor " + name + " stored as " + t.dtype + ", model uses " + dtype_name<Real>());
  }
  if (t.shape != dst.shape()) {
    throw CheckpointError("tensor " + name + " has shape " + shape_string(t.shape) + ", model expects " +
                          shape_string(dst.shape()));
  }
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = get_le<Real>(t.bytes.data() + i * sizeof(Real));
}

}  // namespace detail

/// Copies stored parameters into `params`; names, shapes and dtype must match
/// exactly and the checkpoint may not hold parameters the model lacks.
template <typename Real>
void restore_parameters(const CheckpointFile& ck, ParameterStore<Real>& params) {
  std::size_t stored = 0;
  for (const auto& name : ck.order) stored += name.rfind("param/", 0) == 0;
  if (stored != params.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(stored) + " parameter tensors, model has " +
                          std::to_string(params.size()));
  }
  for (auto& p : params) detail::restore_tensor(ck, "param/" + p->name, p->value);
}

template <typename Real>
bool restore_adam(const CheckpointFile& ck, const ParameterStore<Real>& params, AdamState<Real>& adam) {
  if (!ck.meta.contains("adam_steps")) return false;
  adam.init(params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    detail::restore_tensor(ck, "adam_m/" + params[i].name, adam.m[i]);
    detail::restore_tensor(ck, "adam_v/" + params[i].name, adam.v[i]);
  }
  adam.steps = ck.meta["adam_steps"].get<std::size_t>();
  return true;
}

}  // namespace hnetpp

#endif  // HNETPP_CHECKPOINT_HPP
