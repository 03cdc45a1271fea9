#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ctp/layers.hpp"

namespace ctp {

inline constexpr std::string_view kCheckpointMagic = "CTPK";
inline constexpr std::string_view kEmbeddingMagic = "CTPE";
inline constexpr std::uint32_t kFormatVersion = 1;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parameters plus the configuration that produced them.
struct Checkpoint {
  nlohmann::json config;
  ParamSet params;
};

/// Layout (all integers u32 little-endian, reals f32 little-endian):
///   magic[4] version config_len config_json tensor_count
///   { name_len name rank dims[rank] data[prod(dims)] }*
/// Tensors are written in lexicographic name order.
std::vector<std::uint8_t> encode_tensor_file(std::string_view magic, const nlohmann::json& config,
                                             const std::map<std::string, Tensor>& tensors);

struct TensorFile {
  nlohmann::json config;
  std::map<std::string, Tensor> tensors;
};

TensorFile decode_tensor_file(std::string_view magic, std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);
/// Hash of the serialized parameter tensors alone (config excluded).
std::string params_hash(const ParamSet& params);

}  // namespace ctp
