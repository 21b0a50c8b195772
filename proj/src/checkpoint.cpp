#include "kexnet/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace kexnet {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

bool get_bytes(std::istream& is, void* dst, std::size_t n) {
  is.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(is.gcount()) == n;
}

nlohmann::json read_manifest(std::istream& is, const std::string& path) {
  unsigned char head[12];
  if (!get_bytes(is, head, 12) || std::memcmp(head, kCheckpointMagic, 8) != 0)
    throw CheckpointError("not a checkpoint: " + path);
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(head[8 + i]) << (8 * i);
  std::string text(len, '\0');
  if (!get_bytes(is, text.data(), len)) throw CheckpointError("truncated manifest: " + path);
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(text);
    if (m.at("version").get<int>() != kCheckpointVersion)
      throw CheckpointError("unsupported checkpoint version " + m.at("version").dump());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad manifest: ") + e.what());
  }
  return m;
}

}  // namespace

void write_checkpoint(const std::string& path, nlohmann::json manifest, const std::vector<const Parameter*>& params) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const Parameter* p : params) tensors.push_back({{"name", p->name}, {"shape", p->value.shape}});
  manifest["version"] = kCheckpointVersion;
  manifest["tensors"] = std::move(tensors);
  const std::string text = manifest.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot write " + path);
  os.write(kCheckpointMagic, 8);
  put_u32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Parameter* p : params) {
    for (double d : p->value.data) put_f64(os, d);
  }
  if (!os) throw CheckpointError("write failed: " + path);
}

nlohmann::json read_checkpoint_manifest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot read " + path);
  return read_manifest(is, path);
}

nlohmann::json read_checkpoint(const std::string& path,
                               const std::function<std::vector<Parameter*>(const nlohmann::json&)>& build) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot read " + path);
  nlohmann::json manifest = read_manifest(is, path);
  std::vector<Parameter*> params;
  try {
    params = build(manifest);
    const auto& tensors = manifest.at("tensors");
    if (tensors.size() != params.size()) throw CheckpointError("tensor count mismatch");
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (tensors[k].at("name").get<std::string>() != params[k]->name ||
          tensors[k].at("shape").get<std::vector<std::size_t>>() != params[k]->value.shape)
        throw CheckpointError("tensor " + std::to_string(k) + " does not match " + params[k]->name);
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad manifest: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("bad manifest: ") + e.what());
  }
  for (Parameter* p : params) {
    for (double& d : p->value.data) {
      unsigned char b[8];
      if (!get_bytes(is, b, 8)) throw CheckpointError("truncated tensor data");
      std::uint64_t v = 0;
      for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
      std::memcpy(&d, &v, 8);
      if (!std::isfinite(d)) throw CheckpointError("non-finite value in " + p->name);
    }
    p->zero_grad();
  }
  if (is.peek() != std::char_traits<char>::eof()) throw CheckpointError("trailing bytes after tensor data");
  return manifest;
}

}  // namespace kexnet
