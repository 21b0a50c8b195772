#pragma once

#include <vector>

#include "kexnet/term.hpp"

namespace kexnet {

enum class Owner { I, R, Adversary };

/// Dolev-Yao knowledge of one principal.
///
/// The basis is closed under decomposition: tuple members, signed payloads,
/// and payloads of ciphertexts whose decryption key is known are all in the
/// basis. Hashes and exponentials are never inverted. All stored terms are in
/// DH-normal form. Values are immutable; `absorb` returns a new set.
class KnowledgeSet {
 public:
  explicit KnowledgeSet(Owner owner) : owner_(owner) {}

  Owner owner() const noexcept { return owner_; }
  const TermSet& basis() const noexcept { return basis_; }
  bool contains(const Term& t) const { return basis_.contains(t); }
  std::size_t size() const noexcept { return basis_.size(); }
  /// Basis in the canonical term order.
  std::vector<Term> sorted_basis() const;
  /// Order-independent digest of the basis.
  std::uint64_t fingerprint() const noexcept { return fingerprint_; }

 private:
  friend KnowledgeSet absorb(KnowledgeSet k, const Term& t);
  friend KnowledgeSet absorb_all(KnowledgeSet k, std::span<const Term> ts);

  bool insert(const Term& t);

  Owner owner_;
  TermSet basis_;
  std::vector<Term> locked_;  // ciphertexts whose key is not (yet) known
  std::uint64_t fingerprint_ = 0;
};

/// Public atoms: identities and public keys of I and R, their timestamps, and the
/// adversary's identity and public key.
std::vector<Term> public_atoms();

/// The public atoms plus the owner's secrets: both ephemeral keys, the long-term key,
/// and (for honest parties) the pre-shared key K. The adversary additionally
/// knows T_E and K_E, a key it shares with any honest party that talks to it.
KnowledgeSet initial_knowledge(Owner owner, const std::vector<Term>& publics);

/// Decomposition closure of basis ∪ {t}. A behavior-rooted `t` contributes
/// its children (the message body).
KnowledgeSet absorb(KnowledgeSet k, const Term& t);
KnowledgeSet absorb_all(KnowledgeSet k, std::span<const Term> ts);

/// True iff `t` is in the composition closure of the basis, modulo DH.
bool derivable(const KnowledgeSet& k, const Term& t);

/// Flattens exp towers and sorts the exponent multiset so that
/// exp(exp(g;a);b) and exp(exp(g;b);a) coincide. Applied recursively.
Term dh_normalize(const Term& t);

/// The long-term secret key matching a public key atom.
Term secret_key_for(const Term& public_key);

}  // namespace kexnet
