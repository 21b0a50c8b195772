#include "kexnet/generator.hpp"

#include <algorithm>

#include "kexnet/parallel.hpp"

namespace kexnet {

void check_config(const GenConfig& cfg) {
  if (cfg.m_max < 1) throw std::invalid_argument("m_max must be >= 1");
  if (cfg.c_max < 1) throw std::invalid_argument("c_max must be >= 1");
  if (cfg.depth_cap < 1) throw std::invalid_argument("depth_cap must be >= 1");
  if (cfg.max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");
  if (!(cfg.establishment_share >= 0.0 && cfg.establishment_share <= 1.0)) {
    throw std::invalid_argument("establishment_share must lie in [0, 1]");
  }
}

namespace {

bool mentions_adversary(const Term& t) {
  if (t.label().role == Role::E) return true;
  return std::any_of(t.children().begin(), t.children().end(), mentions_adversary);
}

bool is_public(const Term& t) {
  static const std::vector<Term> pubs = public_atoms();
  return std::find(pubs.begin(), pubs.end(), t) != pubs.end();
}

}  // namespace

std::vector<Term> draw_pool(const KnowledgeSet& k) {
  std::vector<Term> pool;
  for (const Term& t : k.sorted_basis()) {
    if (!mentions_adversary(t)) pool.push_back(t);
  }
  return pool;
}

std::vector<Term> session_key_candidates(const KnowledgeSet& k_i, const KnowledgeSet& k_r) {
  std::vector<Term> atoms;
  for (const Term& t : k_i.sorted_basis()) {
    if (t.is_atom() && !mentions_adversary(t) && k_r.contains(t)) atoms.push_back(t);
  }
  std::vector<Term> strong, all;
  auto add = [&](Term c, bool secret) {
    if (secret) strong.push_back(c);
    all.push_back(std::move(c));
  };
  for (const Term& a : atoms) add(terms::hash({a}), !is_public(a));
  for (const Term& a : atoms) {
    for (const Term& b : atoms) {
      if (a == b) continue;
      add(terms::hash({a, b}), !is_public(a) || !is_public(b));
    }
  }
  return strong.empty() ? all : strong;
}

Protocol generate_protocol(const GenConfig& cfg) {
  check_config(cfg);
  Rng top(cfg.seed);
  const bool establishment = top.uniform() < cfg.establishment_share;
  ProtocolKind kind = establishment ? ProtocolKind::Establishment : ProtocolKind::Transport;
  for (int a = 0;; ++a) {
    if (a == cfg.max_attempts) kind = ProtocolKind::Establishment;
    Rng rng = top.split(static_cast<std::uint64_t>(a) + 1);
    if (auto p = generate_attempt(cfg, kind, rng)) {
      p->seed = cfg.seed;
      return *std::move(p);
    }
    if (a > 2 * cfg.max_attempts) throw std::logic_error("generate_protocol: establishment fallback failed");
  }
}

std::uint64_t corpus_seed(std::uint64_t base, std::uint64_t index) { return Rng(base).split(index).seed(); }

std::vector<Protocol> generate_corpus(const GenConfig& cfg, std::size_t count, unsigned workers) {
  check_config(cfg);
  std::vector<std::optional<Protocol>> slots(count);
  parallel_for(count, workers, [&](std::size_t i) {
    GenConfig c = cfg;
    c.seed = corpus_seed(cfg.seed, i);
    slots[i] = generate_protocol(c);
  });
  std::vector<Protocol> out;
  out.reserve(count);
  for (auto& s : slots) out.push_back(*std::move(s));
  return out;
}

}  // namespace kexnet
