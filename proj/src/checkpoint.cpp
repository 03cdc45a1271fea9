#include "ctp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <openssl/evp.h>

namespace ctp {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

void put_string(std::vector<std::uint8_t>& out, std::string_view s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::string raw(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw FormatError("tensor file truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_tensor_file(std::string_view magic, const nlohmann::json& config,
                                             const std::map<std::string, Tensor>& tensors) {
  std::vector<std::uint8_t> out(magic.begin(), magic.end());
  put_u32(out, kFormatVersion);
  put_string(out, config.dump());
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_string(out, name);
    put_u32(out, 2);
    put_u32(out, static_cast<std::uint32_t>(t.rows));
    put_u32(out, static_cast<std::uint32_t>(t.cols));
    for (double v : t.data) put_f32(out, static_cast<float>(v));
  }
  return out;
}

TensorFile decode_tensor_file(std::string_view magic, std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.raw(magic.size()) != magic) throw FormatError("bad magic, expected " + std::string(magic));
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion) {
    throw FormatError("unsupported format version " + std::to_string(version));
  }
  TensorFile file;
  try {
    file.config = nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("config blob: ") + e.what());
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 2) throw FormatError("tensor " + name + ": unsupported rank");
    std::size_t rows = 1;
    std::size_t cols = r.u32();
    if (rank == 2) {
      rows = cols;
      cols = r.u32();
    }
    Tensor t(rows, cols);
    for (double& v : t.data) v = r.f32();
    if (!file.tensors.emplace(std::move(name), std::move(t)).second) {
      throw FormatError("duplicate tensor name");
    }
  }
  if (!r.done()) throw FormatError("trailing bytes after tensor table");
  return file;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  return encode_tensor_file(kCheckpointMagic, ckpt.config, ckpt.params.tensors());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  TensorFile f = decode_tensor_file(kCheckpointMagic, bytes);
  Checkpoint ckpt{std::move(f.config), ParamSet(Precision::f32)};
  for (auto& [name, t] : f.tensors) ckpt.params.add(name, std::move(t));
  return ckpt;
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_bytes(path));
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[md[i] >> 4]);
    hex.push_back(kHex[md[i] & 0xf]);
  }
  return hex;
}

std::string sha256_hex(std::string_view text) {
  return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string params_hash(const ParamSet& params) {
  return sha256_hex(encode_tensor_file(kCheckpointMagic, nlohmann::json::object(), params.tensors()));
}

}  // namespace ctp
