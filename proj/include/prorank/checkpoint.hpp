#pragma once

// Checkpoint file:
//   "PRORANK1" | u64 LE header length | JSON header | f32 LE payload
// The payload holds the parameters in manifest order, followed by the AdamW
// first and second moments when an optimizer state is stored.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "json.hpp"
#include "prorank/common.hpp"
#include "prorank/model.hpp"
#include "prorank/optim.hpp"

namespace prorank {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads assume a little-endian host");

inline constexpr std::string_view kCheckpointMagic = "PRORANK1";
inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
  std::string stage = "init";
  std::optional<std::string> lineage;  // fingerprint of the parent checkpoint
};

struct Checkpoint {
  PolicyState<float> policy;
  std::optional<OptimizerState<float>> optimizer;
  CheckpointMeta meta;
};

inline void save_checkpoint(const PolicyState<float>& policy, const OptimizerState<float>* opt,
                            const std::filesystem::path& path, const CheckpointMeta& meta = {}) {
  nlohmann::ordered_json header;
  header["format_version"] = kCheckpointVersion;
  header["config"] = nlohmann::json(policy.config);
  auto manifest = nlohmann::ordered_json::array();
  for (const auto& t : policy.layout.tensors()) {
    manifest.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", t.offset}});
  }
  header["tensors"] = std::move(manifest);
  header["fingerprint"] = hex64(policy.fingerprint());
  header["stage"] = meta.stage;
  header["lineage"] = meta.lineage ? nlohmann::ordered_json(*meta.lineage) : nlohmann::ordered_json(nullptr);
  header["optimizer"] = opt ? nlohmann::ordered_json{{"step", opt->step}} : nlohmann::ordered_json(nullptr);
  Fnv1a64 sum;
  auto add = [&](const std::vector<float>& v) { sum.update(v.data(), v.size() * sizeof(float)); };
  add(policy.params);
  if (opt) {
    add(opt->m);
    add(opt->v);
  }
  header["payload_checksum"] = hex64(sum.digest());
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic.data(), static_cast<std::streamsize>(kCheckpointMagic.size()));
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  auto write_floats = [&](const std::vector<float>& v) {
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
  };
  write_floats(policy.params);
  if (opt) {
    write_floats(opt->m);
    write_floats(opt->v);
  }
  if (!out) throw data_error("failed writing checkpoint " + path.string());
}

// Throws data_error on a bad magic string, version, truncated or corrupted
// payload, and on a config differing from `expected` when one is given.
inline Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open checkpoint " + path.string());
  std::string magic(kCheckpointMagic.size(), '\0');
  in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (!in || magic != kCheckpointMagic) throw data_error("not a checkpoint file: " + path.string());
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1ULL << 30)) throw data_error("corrupted checkpoint header: " + path.string());
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw data_error("truncated checkpoint header: " + path.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw data_error("corrupted checkpoint header: " + std::string(e.what()));
  }
  if (header.value("format_version", -1) != kCheckpointVersion) {
    throw data_error("checkpoint format version mismatch in " + path.string());
  }
  Checkpoint ck;
  ck.policy.config = header.at("config").get<ModelConfig>();
  ck.policy.config.validate();
  if (expected && !(*expected == ck.policy.config)) {
    throw data_error("checkpoint " + path.string() + " was written for a different model config");
  }
  ck.policy.layout = ParamLayout(ck.policy.config);
  const auto& manifest = header.at("tensors");
  const auto& tensors = ck.policy.layout.tensors();
  if (manifest.size() != tensors.size()) throw data_error("checkpoint tensor manifest mismatch");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (manifest[i].at("name").get<std::string>() != tensors[i].name ||
        manifest[i].at("shape").get<std::vector<std::size_t>>() != tensors[i].shape ||
        manifest[i].at("offset").get<std::size_t>() != tensors[i].offset) {
      throw data_error("checkpoint tensor manifest mismatch at " + tensors[i].name);
    }
  }
  const std::size_t n = ck.policy.layout.total();
  auto read_floats = [&](std::vector<float>& v) {
    v.resize(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw data_error("truncated checkpoint payload: " + path.string());
  };
  read_floats(ck.policy.params);
  if (!header.at("optimizer").is_null()) {
    OptimizerState<float> opt;
    opt.step = header["optimizer"].at("step").get<std::int64_t>();
    read_floats(opt.m);
    read_floats(opt.v);
    ck.optimizer = std::move(opt);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw data_error("trailing bytes in checkpoint " + path.string());
  Fnv1a64 sum;
  auto add = [&](const std::vector<float>& v) { sum.update(v.data(), v.size() * sizeof(float)); };
  add(ck.policy.params);
  if (ck.optimizer) {
    add(ck.optimizer->m);
    add(ck.optimizer->v);
  }
  if (hex64(sum.digest()) != header.value("payload_checksum", "")) {
    throw data_error("checkpoint checksum mismatch (corrupted payload): " + path.string());
  }
  if (hex64(ck.policy.fingerprint()) != header.at("fingerprint").get<std::string>()) {
    throw data_error("checkpoint fingerprint mismatch (corrupted payload): " + path.string());
  }
  ck.meta.stage = header.value("stage", "unknown");
  if (header.contains("lineage") && header["lineage"].is_string()) ck.meta.lineage = header["lineage"].get<std::string>();
  return ck;
}

}  // namespace prorank
