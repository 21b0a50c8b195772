#pragma once

#include <optional>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "kexnet/labeling.hpp"
#include "kexnet/protocol.hpp"
#include "kexnet/rng.hpp"

namespace kexnet {

enum class AugmentKind { LeakSecret, WeakEncryptionKey, WeakSessionKey };

inline constexpr AugmentKind kAugmentKinds[] = {AugmentKind::LeakSecret, AugmentKind::WeakEncryptionKey,
                                                AugmentKind::WeakSessionKey};

std::string_view augment_name(AugmentKind k) noexcept;  // "leak_secret", ...
AugmentKind augment_from_name(std::string_view s);

class AugmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class NoSecretAvailable : public AugmentError {
 public:
  NoSecretAvailable() : AugmentError("no secret a sender can leak") {}
};
class NoEncryptionNode : public AugmentError {
 public:
  NoEncryptionNode() : AugmentError("no encryption guarding a secret can be weakened") {}
};
class NotEstablishment : public AugmentError {
 public:
  NotEstablishment() : AugmentError("protocol has no jointly derived session key") {}
};

/// Appends one secret (the session key, K, lsk_I or lsk_R, whichever occur
/// in the run) as an extra plaintext element of a send message whose sender
/// can construct it. The secret, then the message, are drawn uniformly.
Protocol leak_secret(const Protocol& p, Rng& rng);

/// Send positions whose sender can construct `secret` at send time.
std::vector<std::size_t> leak_positions(const Protocol& p, const Term& secret);
/// `p` with `secret` appended as the last element of message `idx`.
Protocol append_element(const Protocol& p, std::size_t idx, const Term& secret);

/// Replaces the key of one senc/aenc that carries a secret with a key the
/// adversary knows: pk_E for aenc, an atom already visible on the wire for
/// senc (pk_E if none). Every copy of that ciphertext is rewritten. Only
/// results that still validate are considered.
Protocol weaken_encryption(const Protocol& p, Rng& rng);

/// Replaces both accept bodies with a hash over one or two atoms that the
/// eavesdropper and both parties know at the end of the run.
Protocol weaken_session_key(const Protocol& p, Rng& rng);

/// Dispatches to one of the above; nullopt if the kind does not apply.
std::optional<Protocol> apply_augment(AugmentKind k, const Protocol& p, Rng& rng);

struct AugmentedRecord {
  Protocol protocol;
  SecurityLabel label;
  std::optional<AugmentKind> kind;  // nullopt for the original
  std::size_t source = 0;           // index into the input list
};

struct AugmentConfig {
  int per_item = 1;
  std::uint64_t seed = 0;
  /// Kinds tried for each variant, drawn uniformly among those that apply.
  std::vector<AugmentKind> kinds = {std::begin(kAugmentKinds), std::end(kAugmentKinds)};
  OracleConfig oracle;
  unsigned workers = 1;
};

/// For each secure input: the original, then up to per_item variants that
/// the oracle labels Insecure. Input i uses stream i of cfg.seed.
std::vector<AugmentedRecord> augment_corpus(const std::vector<Protocol>& secure, const AugmentConfig& cfg);

}  // namespace kexnet
