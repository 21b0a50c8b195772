#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kexnet/protocol.hpp"

namespace kexnet {

/// A protocol term the compiler cannot express for a party (e.g. a sent
/// element the sender cannot construct).
class CompileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class StepKind {
  Send,     // pattern: behavior-rooted recipe
  Receive,  // pattern: behavior-rooted pattern; new_vars are chosen by the network
  Open,     // match the value of `var` against `pattern` (decrypt / read signature)
  Check,    // value of `var` must equal recipe `pattern`
  Accept,   // pattern: recipe of the accepted key
};

struct Step {
  StepKind kind;
  Term pattern;
  std::uint32_t var = 0;
  std::vector<std::uint32_t> new_vars;
  std::size_t message = 0;  // index into Protocol::messages
};

/// Variable of a compiled role. `source` is the protocol term it stands for.
struct VarInfo {
  Term source;
  bool opaque = false;  // a received composite the party cannot read yet
  bool hole = false;    // placeholder inside a candidate template only
  bool used_later = true;
  /// For network-chosen opaque variables: the shape an honest receiver
  /// expects, with unknown atoms as hole variables.
  std::optional<Term> candidate_template;
  /// Emitter name, e.g. "esk_R1" or "m5".
  std::string name;
};

/// One party's view of a protocol, in the receive/decrypt/verify order of
/// the emitted verifier script. Patterns mention the protocol's own atoms
/// (instantiated per session by the oracle) and Var nodes.
struct CompiledRole {
  Role role = Role::I;
  std::vector<Step> steps;
  std::vector<VarInfo> vars;
  /// True if the protocol has accept events. Without them, a party that
  /// holds a transported SK at the end gets an implicit Accept of it.
  bool explicit_accept = false;
};

CompiledRole compile_role(const Protocol& p, Role role);

/// Replaces bound variables; nullopt if an unbound one remains.
std::optional<Term> substitute(const Term& pattern, const std::vector<std::optional<Term>>& binding);

/// Syntactic matching of a pattern against a DH-normalized ground value.
/// Ground sub-patterns are compared modulo DH. Extends `binding` on success.
bool match_pattern(const Term& pattern, const Term& value, std::vector<std::optional<Term>>& binding);

}  // namespace kexnet
