#include "kexnet/augment.hpp"

#include <algorithm>

#include "kexnet/parallel.hpp"

namespace kexnet {

namespace {

bool is_send(const Term& m) { return m.symbol() == Symbol::SendIR || m.symbol() == Symbol::SendRI; }

bool is_public(const Term& atom) {
  const auto pub = public_atoms();
  return std::find(pub.begin(), pub.end(), atom) != pub.end();
}

bool occurs(const Protocol& p, const Term& t) {
  return std::any_of(p.messages.begin(), p.messages.end(), [&](const Term& m) { return m.contains(t); });
}

// Knowledge of the sender of message `idx` just before sending it.
KnowledgeSet sender_knowledge(const Protocol& p, std::size_t idx) {
  const Role s = sender_of(p.messages[idx]);
  KnowledgeSet k = party_initial_knowledge(p, s);
  for (std::size_t j = 0; j < idx; ++j) {
    if (is_send(p.messages[j]) && receiver_of(p.messages[j]) == s) k = absorb(std::move(k), p.messages[j]);
  }
  return k;
}

// Eavesdropper knowledge after the sends before message `idx`.
KnowledgeSet wire_knowledge(const Protocol& p, std::size_t idx) {
  KnowledgeSet k = initial_knowledge(Owner::Adversary, public_atoms());
  for (std::size_t j = 0; j < idx && j < p.messages.size(); ++j) {
    if (is_send(p.messages[j])) k = absorb(std::move(k), p.messages[j]);
  }
  return k;
}

Term replace(const Term& t, const Term& from, const Term& to) {
  if (t == from) return to;
  if (t.is_atom() || !t.contains(from)) return t;
  std::vector<Term> kids;
  kids.reserve(t.arity());
  for (const Term& c : t.children()) kids.push_back(replace(c, from, to));
  return Term(t.label(), std::move(kids));
}

Term with_extra_child(const Term& msg, const Term& extra) {
  std::vector<Term> kids(msg.children().begin(), msg.children().end());
  kids.push_back(extra);
  return Term(msg.label(), std::move(kids));
}

bool carries_secret(const Term& t) {
  if (t.is_atom()) return t.label().role != Role::E && !is_public(t);
  return std::any_of(t.children().begin(), t.children().end(), carries_secret);
}

void collect_ciphertexts(const Term& t, std::vector<Term>& out) {
  for (const Term& c : t.children()) collect_ciphertexts(c, out);
  if ((t.symbol() == Symbol::Senc || t.symbol() == Symbol::Aenc) &&
      std::any_of(t.payload().begin(), t.payload().end(), carries_secret) &&
      std::find(out.begin(), out.end(), t) == out.end()) {
    out.push_back(t);
  }
}

template <class T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[rng.below(v.size())];
}

}  // namespace

std::string_view augment_name(AugmentKind k) noexcept {
  switch (k) {
    case AugmentKind::LeakSecret:
      return "leak_secret";
    case AugmentKind::WeakEncryptionKey:
      return "weaken_encryption";
    case AugmentKind::WeakSessionKey:
      return "weaken_session_key";
  }
  return "?";
}

AugmentKind augment_from_name(std::string_view s) {
  for (AugmentKind k : kAugmentKinds) {
    if (augment_name(k) == s) return k;
  }
  throw std::invalid_argument("unknown augmentation: " + std::string(s));
}

std::vector<std::size_t> leak_positions(const Protocol& p, const Term& secret) {
  std::vector<std::size_t> where;
  for (std::size_t i = 0; i < p.messages.size(); ++i) {
    if (is_send(p.messages[i]) && derivable(sender_knowledge(p, i), secret)) where.push_back(i);
  }
  return where;
}

Protocol append_element(const Protocol& p, std::size_t idx, const Term& secret) {
  Protocol out = p;
  out.messages.at(idx) = with_extra_child(p.messages[idx], dh_normalize(secret));
  return out;
}

Protocol leak_secret(const Protocol& p, Rng& rng) {
  std::vector<Term> secrets;
  if (auto key = session_key(p)) secrets.push_back(*key);
  for (const Term& t : {terms::K(), terms::lsk(Role::I), terms::lsk(Role::R)}) {
    if (occurs(p, t) && std::find(secrets.begin(), secrets.end(), t) == secrets.end()) secrets.push_back(t);
  }
  // Positions where each secret can be sent.
  std::vector<std::pair<Term, std::vector<std::size_t>>> options;
  for (const Term& s : secrets) {
    std::vector<std::size_t> where = leak_positions(p, s);
    if (!where.empty()) options.emplace_back(s, std::move(where));
  }
  if (options.empty()) throw NoSecretAvailable();
  const auto& [secret, where] = pick(options, rng);
  const std::size_t idx = pick(where, rng);
  return append_element(p, idx, secret);
}

Protocol weaken_encryption(const Protocol& p, Rng& rng) {
  std::vector<Term> cts;
  for (const Term& m : p.messages) {
    if (is_send(m)) collect_ciphertexts(m, cts);
  }
  rng.shuffle(cts.begin(), cts.end());
  for (const Term& ct : cts) {
    std::size_t first = 0;
    while (!p.messages[first].contains(ct)) ++first;
    Term key = terms::pk(Role::E);
    if (ct.symbol() == Symbol::Senc) {
      const KnowledgeSet wire = wire_knowledge(p, first);
      const KnowledgeSet sender = sender_knowledge(p, first);
      std::vector<Term> clear, pub;
      for (const Term& t : wire.sorted_basis()) {
        if (!t.is_atom() || t.label().role == Role::E || t == ct.key() || !sender.contains(t)) continue;
        (is_public(t) ? pub : clear).push_back(t);
      }
      if (!clear.empty()) {
        key = pick(clear, rng);
      } else if (!pub.empty()) {
        key = pick(pub, rng);
      }
    }
    std::vector<Term> payload(ct.payload().begin(), ct.payload().end());
    const Term weak = ct.symbol() == Symbol::Senc ? terms::senc(payload, key) : terms::aenc(payload, key);
    Protocol out = p;
    for (Term& m : out.messages) m = dh_normalize(replace(m, ct, weak));
    if (validate_protocol(out).empty()) return out;
  }
  throw NoEncryptionNode();
}

Protocol weaken_session_key(const Protocol& p, Rng& rng) {
  if (p.kind != ProtocolKind::Establishment || !p.has_accepts()) throw NotEstablishment();
  const KnowledgeSet wire = wire_knowledge(p, p.messages.size());
  const KnowledgeSet ki = party_final_knowledge(p, Role::I);
  const KnowledgeSet kr = party_final_knowledge(p, Role::R);
  std::vector<Term> pool;
  for (const Term& t : wire.sorted_basis()) {
    if (t.is_atom() && t.label().role != Role::E && ki.contains(t) && kr.contains(t)) pool.push_back(t);
  }
  if (pool.empty()) throw NotEstablishment();
  const std::size_t n = std::min<std::size_t>(pool.size(), 1 + rng.below(2));
  rng.shuffle(pool.begin(), pool.end());
  std::vector<Term> elems(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n));
  std::sort(elems.begin(), elems.end());
  const Term key = terms::hash(std::move(elems));
  Protocol out = p;
  for (Term& m : out.messages) {
    if (m.symbol() == Symbol::AcceptI) m = terms::accept_i(key);
    if (m.symbol() == Symbol::AcceptR) m = terms::accept_r(key);
  }
  return out;
}

std::optional<Protocol> apply_augment(AugmentKind k, const Protocol& p, Rng& rng) {
  try {
    switch (k) {
      case AugmentKind::LeakSecret:
        return leak_secret(p, rng);
      case AugmentKind::WeakEncryptionKey:
        return weaken_encryption(p, rng);
      case AugmentKind::WeakSessionKey:
        return weaken_session_key(p, rng);
    }
  } catch (const AugmentError&) {
  }
  return std::nullopt;
}

std::vector<AugmentedRecord> augment_corpus(const std::vector<Protocol>& secure, const AugmentConfig& cfg) {
  if (cfg.per_item < 0) throw std::invalid_argument("per_item must be >= 0");
  if (cfg.kinds.empty()) throw std::invalid_argument("no augmentation kinds");
  check_config(cfg.oracle);
  std::vector<std::vector<AugmentedRecord>> parts(secure.size());
  const Rng root(cfg.seed);
  parallel_for(secure.size(), cfg.workers, [&](std::size_t i) {
    const Protocol& p = secure[i];
    Rng rng = root.split(i);
    SecurityLabel base = label(p, cfg.oracle);
    if (base.verdict != Verdict::Secure) return;
    parts[i].push_back(AugmentedRecord{p, std::move(base), std::nullopt, i});
    for (int v = 0; v < cfg.per_item; ++v) {
      // Each kind that applies is equally likely.
      std::vector<AugmentKind> order = cfg.kinds;
      rng.shuffle(order.begin(), order.end());
      for (AugmentKind k : order) {
        Rng sub = rng.split(static_cast<std::uint64_t>(v) * 4 + static_cast<std::uint64_t>(k));
        auto q = apply_augment(k, p, sub);
        if (!q) continue;
        q->seed = p.seed;
        SecurityLabel l = label(*q, cfg.oracle);
        if (l.verdict == Verdict::Insecure) parts[i].push_back(AugmentedRecord{std::move(*q), std::move(l), k, i});
        break;
      }
    }
  });
  std::vector<AugmentedRecord> out;
  for (auto& part : parts) {
    for (auto& r : part) out.push_back(std::move(r));
  }
  return out;
}

}  // namespace kexnet
