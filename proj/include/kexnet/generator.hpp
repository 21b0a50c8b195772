#pragma once

#include <array>
#include <optional>
#include <vector>

#include "kexnet/knowledge.hpp"
#include "kexnet/protocol.hpp"
#include "kexnet/rng.hpp"

namespace kexnet {

struct GenConfig {
  int m_max = 5;
  int c_max = 3;
  /// Probability of drawing an establishment-type protocol.
  double establishment_share = 0.5;
  std::uint64_t seed = 0;
  /// generate_message nesting level at which only atoms may be drawn.
  int depth_cap = 4;
  /// Transport attempts before falling back to establishment.
  int max_attempts = 20;
};

/// Throws std::invalid_argument on a bad config.
void check_config(const GenConfig& cfg);

/// Function symbols a party can draw, in draw-index order after the pool.
inline constexpr std::array<Symbol, 5> kDrawFunctions = {Symbol::Senc, Symbol::Aenc, Symbol::Sign, Symbol::Hash,
                                                         Symbol::Exp};

/// Terms a party may draw: its basis without adversary-tagged terms, in
/// canonical order.
std::vector<Term> draw_pool(const KnowledgeSet& k);

/// Joint session-key candidates hash(a) and hash(a, b) over atoms both
/// parties know. Candidates containing a non-public atom are returned when
/// any exist; otherwise all candidates.
std::vector<Term> session_key_candidates(const KnowledgeSet& k_i, const KnowledgeSet& k_r);

namespace detail {

template <ChoiceSource R>
Term draw_element(int c_max, int depth_cap, const std::vector<Term>& pool, Role sender, int level, R& rng);

template <ChoiceSource R>
std::vector<Term> draw_children(int count, int c_max, int depth_cap, const std::vector<Term>& pool, Role sender,
                                int level, R& rng) {
  std::vector<Term> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(draw_element(c_max, depth_cap, pool, sender, level, rng));
  return out;
}

template <ChoiceSource R>
int draw_count(int c_max, R& rng) {
  return 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(c_max)));
}

template <ChoiceSource R>
Term draw_element(int c_max, int depth_cap, const std::vector<Term>& pool, Role sender, int level, R& rng) {
  const bool allow_fn = level < depth_cap;
  const std::uint64_t n = pool.size() + (allow_fn ? kDrawFunctions.size() : 0);
  const std::uint64_t pick = rng.below(n);
  if (pick < pool.size()) return pool[pick];
  const Symbol f = kDrawFunctions[pick - pool.size()];
  const int next = level + 1;
  switch (f) {
    case Symbol::Senc:
      return terms::senc(draw_children(draw_count(c_max, rng), c_max, depth_cap, pool, sender, next, rng), terms::K());
    case Symbol::Aenc:
      return terms::aenc(draw_children(draw_count(c_max, rng), c_max, depth_cap, pool, sender, next, rng),
                         terms::pk(partner(sender)));
    case Symbol::Sign:
      return terms::sign(draw_children(draw_count(c_max, rng), c_max, depth_cap, pool, sender, next, rng),
                         terms::lsk(sender));
    case Symbol::Hash:
      return terms::hash(draw_children(draw_count(c_max, rng), c_max, depth_cap, pool, sender, next, rng));
    default: {
      Term base = draw_element(c_max, depth_cap, pool, sender, next, rng);
      Term exponent = draw_element(c_max, depth_cap, pool, sender, next, rng);
      return terms::exp(std::move(base), std::move(exponent));
    }
  }
}

}  // namespace detail

/// Message elements for one send: c ~ U{1..c_max} children, each drawn
/// uniformly from the sender's pool plus the function symbols. Function
/// children recurse; key positions are forced (K, partner pk, own lsk).
template <ChoiceSource R>
std::vector<Term> generate_message(int c_max, int depth_cap, const KnowledgeSet& k, Role sender, R& rng) {
  const std::vector<Term> pool = draw_pool(k);
  std::vector<Term> kids = detail::draw_children(detail::draw_count(c_max, rng), c_max, depth_cap, pool, sender, 1, rng);
  for (Term& t : kids) t = dh_normalize(t);
  return kids;
}

/// Appends accept events. Establishment: a shared candidate term.
/// Transport: the SK atom, which must have been sent and be derivable by
/// the receiving party. nullopt means the protocol must be regenerated.
template <ChoiceSource R>
std::optional<Protocol> choose_session_keys(Protocol p, const KnowledgeSet& k_i, const KnowledgeSet& k_r, R& rng) {
  Term key = terms::SK();
  if (p.kind == ProtocolKind::Establishment) {
    std::vector<Term> cands = session_key_candidates(k_i, k_r);
    if (cands.empty()) return std::nullopt;
    key = cands[rng.below(cands.size())];
  } else {
    auto owner = sk_owner(p);
    if (!owner) return std::nullopt;
    const KnowledgeSet& other = *owner == Role::I ? k_r : k_i;
    if (!derivable(other, key)) return std::nullopt;
  }
  p.messages.push_back(terms::accept_i(key));
  p.messages.push_back(terms::accept_r(key));
  return p;
}

/// One pass of protocol generation with a given kind. Draw order: message
/// count, SK owner (transport, m > 1 only), then each message's elements.
template <ChoiceSource R>
std::optional<Protocol> generate_attempt(const GenConfig& cfg, ProtocolKind kind, R& rng) {
  Protocol p;
  p.kind = kind;
  const int m = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.m_max)));
  KnowledgeSet ki = initial_knowledge(Owner::I, public_atoms());
  KnowledgeSet kr = initial_knowledge(Owner::R, public_atoms());
  if (kind == ProtocolKind::Transport) {
    const Role owner = m == 1 || rng.below(2) == 0 ? Role::I : Role::R;
    KnowledgeSet& ko = owner == Role::I ? ki : kr;
    ko = absorb(std::move(ko), terms::SK());
  }
  for (int i = 0; i < m; ++i) {
    const Role s = i % 2 == 0 ? Role::I : Role::R;
    KnowledgeSet& ks = s == Role::I ? ki : kr;
    KnowledgeSet& kq = s == Role::I ? kr : ki;
    std::vector<Term> body = generate_message(cfg.c_max, cfg.depth_cap, ks, s, rng);
    Term msg = s == Role::I ? terms::send_ir(std::move(body)) : terms::send_ri(std::move(body));
    kq = absorb(std::move(kq), msg);
    p.messages.push_back(std::move(msg));
  }
  return choose_session_keys(std::move(p), ki, kr, rng);
}

/// Deterministic in cfg.seed. The kind is drawn first from Rng(seed); attempt
/// a then runs on stream a + 1 of that seed.
Protocol generate_protocol(const GenConfig& cfg);

/// Seed of the i-th protocol of a corpus with base seed s.
std::uint64_t corpus_seed(std::uint64_t base, std::uint64_t index);

/// `count` protocols with seeds corpus_seed(cfg.seed, i), generated on
/// `workers` threads; output order is by index.
std::vector<Protocol> generate_corpus(const GenConfig& cfg, std::size_t count, unsigned workers = 1);

}  // namespace kexnet
