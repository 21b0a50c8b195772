#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "kexnet/knowledge.hpp"
#include "kexnet/term.hpp"

namespace kexnet {

/// Transport: one party creates a fresh SK and ships it.
/// Establishment: both parties derive SK from exchanged material.
enum class ProtocolKind { Transport, Establishment };

std::string_view kind_name(ProtocolKind k) noexcept;
ProtocolKind kind_from_name(std::string_view s);

/// Ordered behavior-rooted message trees. Sends come first and alternate
/// starting with sendIR; at most one acceptI and one acceptR follow.
struct Protocol {
  std::vector<Term> messages;
  ProtocolKind kind = ProtocolKind::Transport;
  std::uint64_t seed = 0;

  std::size_t send_count() const;
  bool has_accepts() const;
  friend bool operator==(const Protocol&, const Protocol&) = default;
};

/// Total node count over all messages, behavior roots included.
std::size_t protocol_size(const Protocol& p);

/// Party that sends the given root (I for sendIR, R for sendRI).
Role sender_of(const Term& message);
Role receiver_of(const Term& message);

/// Session key term: the accept body if there are accepts, otherwise the SK
/// atom when it occurs in some message. nullopt if neither.
std::optional<Term> session_key(const Protocol& p);

/// Party that introduced the SK atom (sender of its first occurrence).
std::optional<Role> sk_owner(const Protocol& p);

/// Party knowledge at the start of a run, including SK for its owner.
KnowledgeSet party_initial_knowledge(const Protocol& p, Role party);

/// Party knowledge after every send message has been delivered.
KnowledgeSet party_final_knowledge(const Protocol& p, Role party);

/// Empty iff the protocol is well formed and every sent message is
/// constructible by its sender at send time.
std::vector<std::string> validate_protocol(const Protocol& p);

enum class Verdict { Secure, Insecure, Unknown };
std::string_view verdict_name(Verdict v) noexcept;
Verdict verdict_from_name(std::string_view s);

/// One line of a corpus file.
struct ProtocolRecord {
  Protocol protocol;
  std::optional<Verdict> label;
  std::string provenance;  // which labeler decided; empty if unlabeled
  std::string name;        // practical corpus entries only
  std::string origin;      // "random", "leak_secret", ...
};

std::string record_to_line(const ProtocolRecord& r);
ProtocolRecord record_from_line(std::string_view line);

std::vector<ProtocolRecord> read_records(const std::string& path);
void write_records(const std::string& path, const std::vector<ProtocolRecord>& records);

/// Messages joined one per line, as accepted by `verify`.
std::string render_protocol(const Protocol& p);
/// One message per non-empty line; '#' starts a comment line.
Protocol parse_protocol_text(std::string_view text);

}  // namespace kexnet
