#pragma once

#include <functional>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "kexnet/tensor.hpp"

namespace kexnet {

inline constexpr const char* kCheckpointMagic = "KXCKPT01";
inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Container layout: 8-byte magic, u32 manifest length, JSON manifest, then
/// every tensor as little-endian f64 in manifest order. The writer adds
/// "version" and "tensors" (name and shape per parameter) to `manifest`.
void write_checkpoint(const std::string& path, nlohmann::json manifest, const std::vector<const Parameter*>& params);

/// Reads the manifest, lets `build` create the parameters it describes, then
/// fills them. Names, shapes, version and length are all checked.
nlohmann::json read_checkpoint(const std::string& path,
                               const std::function<std::vector<Parameter*>(const nlohmann::json&)>& build);

/// Manifest only.
nlohmann::json read_checkpoint_manifest(const std::string& path);

}  // namespace kexnet
