#pragma once

#include <array>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "kexnet/model.hpp"

namespace kexnet {

/// Fixed-length protocol encodings for the MLP baseline.
///
/// Tlm: one slot per message position, each a histogram of the node labels
/// of that message over the vocabulary. Nesting is discarded. Messages past
/// the last slot are added into it.
/// Counts: one histogram of atom and function labels over the whole
/// protocol, then the message count and the deepest message depth.
enum class Conversion { Tlm, Counts };

inline constexpr std::size_t kTlmSlots = 7;

std::string_view conversion_name(Conversion c) noexcept;
Conversion conversion_from_name(std::string_view s);

std::size_t conversion_width(Conversion c);
std::vector<double> convert_tlm(const Protocol& p);
std::vector<double> convert_counts(const Protocol& p);
std::vector<double> convert(Conversion c, const Protocol& p);

struct MlpConfig {
  Conversion conversion = Conversion::Tlm;
  std::size_t hidden = 128;
  std::uint64_t seed = 0;
};

/// width -> hidden -> hidden -> 2 with tanh activations and softmax output.
class Mlp {
 public:
  explicit Mlp(const MlpConfig& cfg);
  Mlp(const Mlp&) = delete;
  Mlp& operator=(const Mlp&) = delete;
  Mlp(Mlp&&) = default;

  MlpConfig config;
  std::uint64_t steps = 0;
  Parameter w1, b1, w2, b2, w3, b3;

  std::vector<Parameter*> all_parameters();
  std::vector<const Parameter*> all_parameters() const;
};

Var class_probabilities(Tape& tape, Mlp& mlp, const Protocol& p);
Var class_probabilities(Tape& tape, const Mlp& mlp, const Protocol& p);
std::array<double, 2> classify(const Mlp& mlp, const Protocol& p);

struct MlpTrainConfig {
  std::size_t steps = 200;
  std::size_t batch = 100;
  RmsPropConfig optimizer;
  std::uint64_t seed = 0;
  MlpConfig mlp;
};

/// Same loss, optimizer and batching as train(); mlp.seed is replaced by seed.
Mlp train_mlp(const std::vector<Example>& data, const MlpTrainConfig& cfg,
              const std::function<void(const StepRecord&)>& on_step = {});

Metrics evaluate(const Mlp& mlp, const std::vector<Example>& data);

inline constexpr const char* kMlpArch = "mlp";

void save_checkpoint(const Mlp& mlp, const std::string& path);
Mlp load_mlp_checkpoint(const std::string& path);

}  // namespace kexnet
