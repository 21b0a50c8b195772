#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kexnet/protocol.hpp"

namespace kexnet {

enum class Provenance { PassiveOracle, ActiveSearch, ExternalTool, Timeout, Reference };

/// Adversary derivation evidence: absorbing `observed` into the initial
/// adversary knowledge makes `target` derivable.
struct Witness {
  std::vector<Term> observed;
  Term target;
  std::vector<std::string> trace;
};

struct SecurityLabel {
  Verdict verdict = Verdict::Unknown;
  Provenance provenance = Provenance::PassiveOracle;
  int bound = 0;  // session bound of the active search that decided
  std::optional<Witness> witness;
  std::size_t states = 0;
  std::string note;
};

/// "passive", "active(2)", "timeout", "external", "reference".
std::string provenance_string(const SecurityLabel& l);

struct OracleConfig {
  /// Concurrent role instances (threads) explored by the active search.
  int session_bound = 2;
  /// Largest adversary-synthesized message, in nodes.
  std::size_t depth_bound = 64;
  int time_budget_ms = 5000;
  /// Deterministic cap on explored search states per protocol.
  std::size_t max_states = 200000;
  /// Cap on network messages tried at one receive step.
  std::size_t max_candidates = 4096;
  /// Cap on candidate values for one network-chosen variable.
  std::size_t max_var_candidates = 64;
};

void check_config(const OracleConfig& cfg);

class NoSessionKey : public std::runtime_error {
 public:
  NoSessionKey() : std::runtime_error("protocol defines no session key") {}
};

/// Eavesdropper only. Insecure (with witness) iff the session key is
/// derivable from the sent messages; otherwise Unknown.
SecurityLabel label_passive(const Protocol& p);

/// Bounded Dolev-Yao search over up to cfg.session_bound interleaved role
/// instances whose peer is honest or the adversary E.
SecurityLabel label_active(const Protocol& p, const OracleConfig& cfg);

/// Passive first, then active.
SecurityLabel label(const Protocol& p, const OracleConfig& cfg);

/// Replays a witness through the knowledge engine.
bool replay_witness(const Witness& w);

/// Labels each protocol on `workers` threads; results are in input order.
std::vector<SecurityLabel> label_corpus(const std::vector<Protocol>& ps, const OracleConfig& cfg,
                                        unsigned workers = 1);

class UnsupportedConstruct : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kProverifTemplateVersion = "kexnet-pv/1";

/// Verifier script with Initiator and Responder processes and a secrecy
/// query on the session key. Byte-deterministic.
std::string emit_proverif(const Protocol& p);

/// Result of running an installed external verifier on an emitted script.
struct ExternalResult {
  bool available = false;
  std::optional<Verdict> verdict;
  std::string output;
};

/// Runs `executable` on the script if it can be found on PATH.
ExternalResult run_external_verifier(const std::string& script, const std::string& executable = "proverif",
                                     int timeout_s = 5);

}  // namespace kexnet
