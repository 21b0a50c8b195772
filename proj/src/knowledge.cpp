#include "kexnet/knowledge.hpp"

#include <algorithm>
#include <deque>

namespace kexnet {

namespace {

std::uint64_t spread(std::uint64_t x) noexcept {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ULL;
  return x ^ (x >> 33);
}

}  // namespace

std::vector<Term> KnowledgeSet::sorted_basis() const {
  std::vector<Term> out(basis_.begin(), basis_.end());
  std::sort(out.begin(), out.end());
  return out;
}

bool KnowledgeSet::insert(const Term& t) {
  if (!basis_.insert(t).second) return false;
  fingerprint_ += spread(t.hash());
  return true;
}

std::vector<Term> public_atoms() {
  using namespace terms;
  return {id(Role::I), id(Role::R), pk(Role::I), pk(Role::R), timestamp(Role::I), timestamp(Role::R),
          id(Role::E), pk(Role::E)};
}

KnowledgeSet initial_knowledge(Owner owner, const std::vector<Term>& publics) {
  using namespace terms;
  KnowledgeSet k(owner);
  std::vector<Term> init = publics;
  switch (owner) {
    case Owner::I:
    case Owner::R: {
      Role r = owner == Owner::I ? Role::I : Role::R;
      init.insert(init.end(), {esk(r, 1), esk(r, 2), lsk(r), K()});
      break;
    }
    case Owner::Adversary:
      init.insert(init.end(), {esk(Role::E, 1), esk(Role::E, 2), lsk(Role::E), timestamp(Role::E),
                               Term::atom(Symbol::K, Role::E)});
      break;
    default:
      throw std::invalid_argument("initial_knowledge: unknown owner");
  }
  return absorb_all(std::move(k), init);
}

Term secret_key_for(const Term& public_key) {
  const NodeLabel& l = public_key.label();
  return Term::atom(Symbol::Lsk, l.role, 0, l.instance);
}

Term dh_normalize(const Term& t) {
  if (t.arity() == 0) return t;
  bool changed = false;
  std::vector<Term> kids;
  kids.reserve(t.arity());
  for (const Term& c : t.children()) {
    kids.push_back(dh_normalize(c));
    changed = changed || !(kids.back() == c);
  }
  if (t.symbol() != Symbol::Exp) return changed ? Term(t.label(), std::move(kids)) : t;

  std::vector<Term> exps{kids[1]};
  Term base = kids[0];
  while (base.symbol() == Symbol::Exp) {
    exps.push_back(base.child(1));
    Term next = base.child(0);
    base = next;
  }
  std::sort(exps.begin(), exps.end());
  for (const Term& e : exps) base = terms::exp(base, e);
  return base;
}

namespace {

bool can_open(const KnowledgeSet& k, const Term& t) {
  switch (t.symbol()) {
    case Symbol::Senc:
      return t.key().is_atom() ? k.contains(t.key()) : derivable(k, t.key());
    case Symbol::Aenc:
      return t.key().symbol() == Symbol::Pk && k.contains(secret_key_for(t.key()));
    default:
      return false;
  }
}

}  // namespace

KnowledgeSet absorb_all(KnowledgeSet k, std::span<const Term> ts) {
  std::deque<Term> work;
  for (const Term& t : ts) {
    if (t.kind() == NodeKind::Behavior) {
      for (const Term& c : t.children()) work.push_back(dh_normalize(c));
    } else {
      work.push_back(dh_normalize(t));
    }
  }
  for (;;) {
    while (!work.empty()) {
      Term x = std::move(work.front());
      work.pop_front();
      if (!k.insert(x)) continue;
      switch (x.symbol()) {
        case Symbol::Tuple:
          for (const Term& c : x.children()) work.push_back(c);
          break;
        case Symbol::Sign:
          for (const Term& c : x.payload()) work.push_back(c);
          break;
        case Symbol::Senc:
        case Symbol::Aenc:
          if (can_open(k, x)) {
            for (const Term& c : x.payload()) work.push_back(c);
          } else {
            k.locked_.push_back(x);
          }
          break;
        default:
          break;
      }
    }
    // New atoms may unlock earlier ciphertexts.
    bool progressed = false;
    for (auto it = k.locked_.begin(); it != k.locked_.end();) {
      if (can_open(k, *it)) {
        for (const Term& c : it->payload()) work.push_back(c);
        it = k.locked_.erase(it);
        progressed = true;
      } else {
        ++it;
      }
    }
    if (!progressed) break;
  }
  return k;
}

KnowledgeSet absorb(KnowledgeSet k, const Term& t) { return absorb_all(std::move(k), std::span<const Term>(&t, 1)); }

namespace {

class Composer {
 public:
  explicit Composer(const KnowledgeSet& k) : k_(k) {}

  bool operator()(const Term& t) {
    if (k_.contains(t)) return true;
    switch (t.kind()) {
      case NodeKind::Atomic:
      case NodeKind::Variable:
      case NodeKind::Behavior:
        return false;
      case NodeKind::Function:
        break;
    }
    if (auto it = memo_.find(t); it != memo_.end()) return it->second;
    bool ok = t.symbol() == Symbol::Exp ? exp_derivable(t) : all_children(t);
    memo_.emplace(t, ok);
    return ok;
  }

 private:
  bool all_children(const Term& t) {
    for (const Term& c : t.children()) {
      if (!(*this)(c)) return false;
    }
    return true;
  }

  // t is normalized: exp(...exp(base;e1)...;en) with sorted exponents. The
  // adversary derives it by raising some derivable exp(base; E \ {e}) to e.
  bool exp_derivable(const Term& t) {
    std::vector<Term> exps;
    Term base = t;
    while (base.symbol() == Symbol::Exp) {
      exps.push_back(base.child(1));
      Term next = base.child(0);
      base = next;
    }
    std::sort(exps.begin(), exps.end());
    for (std::size_t i = 0; i < exps.size(); ++i) {
      if (i > 0 && exps[i] == exps[i - 1]) continue;
      if (!(*this)(exps[i])) continue;
      Term rest = base;
      for (std::size_t j = 0; j < exps.size(); ++j) {
        if (j != i) rest = terms::exp(rest, exps[j]);
      }
      if ((*this)(rest)) return true;
    }
    return false;
  }

  const KnowledgeSet& k_;
  TermMap<bool> memo_;
};

}  // namespace

bool derivable(const KnowledgeSet& k, const Term& t) {
  if (t.kind() == NodeKind::Behavior) return false;
  return Composer(k)(dh_normalize(t));
}

}  // namespace kexnet
