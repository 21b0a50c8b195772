#pragma once

#include <string>
#include <vector>

#include "kexnet/protocol.hpp"

namespace kexnet {

/// Hand encodings of published two-party key exchange protocols, numbered
/// as in Boyd, Mathuria and Stebila, "Protocols for Authentication and Key
/// Establishment" (2nd ed.), with the attack-found flag as ground truth.
struct PracticalEntry {
  std::string number;  // e.g. "4.15"; twins carry a "-leak" suffix
  std::string name;
  bool attack = false;
  Protocol protocol;
  std::string note;  // how the encoding departs from the original
  std::string twin_of;  // source number for leak twins, else empty
};

struct UnsupportedEntry {
  std::string number;
  std::string name;
  std::string reason;
};

/// Originals first, then leak twins: each twin appends the session key in
/// clear to the last send whose sender can already construct it.
std::vector<PracticalEntry> practical_corpus();

/// Listed protocols that the term vocabulary cannot express.
std::vector<UnsupportedEntry> practical_unsupported();

/// Records with label from the attack flag and provenance "reference".
std::vector<ProtocolRecord> practical_records();

}  // namespace kexnet
