#pragma once

#include <functional>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "kexnet/augment.hpp"
#include "kexnet/baselines.hpp"
#include "kexnet/generator.hpp"
#include "kexnet/model.hpp"

namespace kexnet {

/// Everything a pipeline run depends on. Stage seeds are streams of `seed`.
struct RunConfig {
  std::uint64_t seed = 1;
  unsigned workers = 0;  // 0: all hardware threads
  std::size_t count = 5000;
  GenConfig gen;
  OracleConfig oracle;
  int per_item = 1;
  std::vector<AugmentKind> kinds = {std::begin(kAugmentKinds), std::end(kAugmentKinds)};
  /// Held-out random test set: this many secure and insecure protocols.
  std::size_t test_per_class = 192;
  /// Drop the tail of the larger training class.
  bool balance = true;
  TrainConfig train;
  std::vector<Conversion> baselines = {Conversion::Tlm, Conversion::Counts};
  std::string out_dir = "run";
};

/// Unknown keys are rejected so that typos do not silently fall back.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::string& path);

/// Seed for a named stage ("augment", "train").
std::uint64_t stage_seed(const RunConfig& cfg, std::string_view stage);

class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
std::string file_hash(const std::string& path);

/// Records with a Secure or Insecure label, as training examples.
std::vector<Example> examples_from_records(const std::vector<ProtocolRecord>& records);

struct TimingRow {
  std::size_t size = 0;
  std::uint64_t ops = 0;
  double seconds = 0;
};

/// Per-protocol classify time: `warmup` untimed calls, then `repeats` rounds
/// over the protocols in shuffled order, keeping each protocol's fastest call.
std::vector<TimingRow> bench_time(const Model& model, const std::vector<Protocol>& ps, std::size_t warmup = 5,
                                  std::size_t repeats = 3);
void write_timing_csv(const std::string& path, const std::vector<TimingRow>& rows);

struct LinearFit {
  double slope = 0, intercept = 0, r = 0;
  std::size_t n = 0;
};
/// Least squares y = slope x + intercept with Pearson r. Needs two distinct x.
LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);

/// generate -> label -> split -> augment -> train -> evaluate. Writes every
/// intermediate file plus report.json into cfg.out_dir and returns the report.
/// Failures are rethrown as StageError naming the stage.
nlohmann::json pipeline_run(const RunConfig& cfg, const std::function<void(const std::string&)>& log = {});

}  // namespace kexnet
