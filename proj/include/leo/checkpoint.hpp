#pragma once

// Checkpoint files.
//
// Byte layout (all integers little-endian):
//   offset 0      4 bytes   magic "LEO1"
//   offset 4      4 bytes   uint32 H, length of the JSON header
//   offset 8      H bytes   JSON header (UTF-8, compact)
//   offset 8 + H  payload   IEEE-754 float32 values, little-endian, one array per
//                           header "tensors" entry in listed order, row-major
//
// Header keys:
//   format_version  1
//   model           model configuration (see to_json(ModelConfig))
//   train           training configuration echo, or null
//   state           {stage, epochs_done, shuffle_state, adam_step} or null
//   tensors         [{name, kind, shape}], kind is "param", "adam_m" or "adam_v"
//
// Every model parameter appears exactly once with kind "param". Optimizer
// moments, when present, use the parameter's name and shape.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "leo/config.hpp"
#include "leo/error.hpp"
#include "leo/model.hpp"
#include "leo/training.hpp"

namespace leo {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr std::string_view kCheckpointMagic = "LEO1";
inline constexpr int kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  ModelConfig model;
  nlohmann::json train;  // null when absent
  std::optional<TrainState> state;
  std::vector<NamedArray> params;
};

template <typename T>
Checkpoint make_checkpoint(const LeoModel<T>& model, const std::optional<TrainState>& state = std::nullopt,
                           nlohmann::json train = nullptr) {
  Checkpoint ck;
  ck.model = model.config();
  ck.train = std::move(train);
  ck.state = state;
  for (const auto& p : model.params().params()) {
    NamedArray a{p.name, p.tensor.shape(), {}};
    for (T v : p.tensor.values()) a.values.push_back(static_cast<float>(v));
    ck.params.push_back(std::move(a));
  }
  return ck;
}

namespace detail {

inline void append_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void append_floats(std::string& out, const std::vector<float>& v) {
  const auto* bytes = reinterpret_cast<const char*>(v.data());
  out.append(bytes, v.size() * sizeof(float));
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["model"] = to_json(ck.model);
  header["train"] = ck.train;
  auto tensors = nlohmann::json::array();
  for (const auto& p : ck.params) tensors.push_back({{"name", p.name}, {"kind", "param"}, {"shape", p.shape}});
  std::vector<const std::vector<float>*> payload;
  for (const auto& p : ck.params) payload.push_back(&p.values);
  if (ck.state) {
    header["state"] = {{"stage", ck.state->stage},
                       {"epochs_done", ck.state->epochs_done},
                       {"shuffle_state", ck.state->shuffle_state},
                       {"adam_step", ck.state->optimizer.step}};
    for (const auto* kind : {"adam_m", "adam_v"}) {
      const auto& moments = std::string(kind) == "adam_m" ? ck.state->optimizer.m : ck.state->optimizer.v;
      for (const auto& [name, values] : moments) {
        tensors.push_back({{"name", name}, {"kind", kind}, {"shape", Shape{values.size()}}});
        payload.push_back(&values);
      }
    }
  } else {
    header["state"] = nullptr;
  }
  header["tensors"] = tensors;
  const std::string text = header.dump();
  std::string out(kCheckpointMagic);
  detail::append_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  for (const auto* v : payload) detail::append_floats(out, *v);
  return out;
}

inline Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 8 || bytes.substr(0, 4) != kCheckpointMagic) throw ValidationError("not a LEO1 checkpoint");
  std::uint32_t h = 0;
  for (int i = 0; i < 4; ++i) h |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 + i])) << (8 * i);
  if (bytes.size() < 8 + static_cast<std::size_t>(h)) throw ValidationError("checkpoint header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(8, h));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint header: ") + e.what());
  }
  if (header.value("format_version", 0) != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version");
  }
  Checkpoint ck;
  ck.model = model_config_from_json(header.at("model"));
  ck.train = header.value("train", nlohmann::json());
  const auto& st = header.at("state");
  if (!st.is_null()) {
    TrainState s;
    s.stage = st.at("stage").get<int>();
    s.epochs_done = st.at("epochs_done").get<std::size_t>();
    s.shuffle_state = st.at("shuffle_state").get<std::uint64_t>();
    s.optimizer.step = st.at("adam_step").get<std::uint64_t>();
    ck.state = s;
  }
  std::size_t offset = 8 + h;
  std::set<std::string> seen;
  for (const auto& t : header.at("tensors")) {
    NamedArray a;
    a.name = t.at("name").get<std::string>();
    a.shape = t.at("shape").get<Shape>();
    const auto kind = t.at("kind").get<std::string>();
    const std::size_t n = shape_numel(a.shape);
    if (bytes.size() < offset + n * sizeof(float)) throw ValidationError("checkpoint payload truncated at " + a.name);
    a.values.resize(n);
    std::memcpy(a.values.data(), bytes.data() + offset, n * sizeof(float));
    offset += n * sizeof(float);
    if (kind == "param") {
      if (!seen.insert(a.name).second) throw ValidationError("checkpoint lists parameter twice: " + a.name);
      ck.params.push_back(std::move(a));
    } else if ((kind == "adam_m" || kind == "adam_v") && ck.state) {
      auto& dst = kind == "adam_m" ? ck.state->optimizer.m : ck.state->optimizer.v;
      dst[a.name] = std::move(a.values);
    } else {
      throw ValidationError("checkpoint tensor of unknown kind: " + kind);
    }
  }
  if (offset != bytes.size()) throw ValidationError("checkpoint has trailing bytes");
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path);
  const auto bytes = encode_checkpoint(ck);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("failed writing " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot read checkpoint " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

inline bool same_architecture(const ModelConfig& a, const ModelConfig& b) { return to_json(a) == to_json(b); }

/// Copies checkpoint values into the model; the architectures must match and
/// every model parameter must be present exactly once.
template <typename T>
void apply_checkpoint(const Checkpoint& ck, LeoModel<T>& model) {
  if (!same_architecture(ck.model, model.config())) {
    throw ValidationError("checkpoint model configuration does not match: " + to_json(ck.model).dump() + " vs " +
                          to_json(model.config()).dump());
  }
  std::map<std::string, const NamedArray*> by_name;
  for (const auto& a : ck.params) by_name[a.name] = &a;
  if (by_name.size() != model.params().size()) throw ValidationError("checkpoint parameter count mismatch");
  for (auto& p : model.params().params()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw ValidationError("checkpoint is missing parameter " + p.name);
    if (it->second->shape != p.tensor.shape()) throw ValidationError("checkpoint shape mismatch for " + p.name);
    auto dst = p.tensor.mutable_values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(it->second->values[i]);
  }
}

template <typename T = float>
LeoModel<T> model_from_checkpoint(const Checkpoint& ck) {
  LeoModel<T> model(ck.model, 0);
  apply_checkpoint(ck, model);
  return model;
}

}  // namespace leo
