#include "kexnet/role.hpp"

#include <algorithm>
#include <functional>

namespace kexnet {

std::string pv_atom_name(const Term& atom);  // defined in proverif.cpp

namespace {

bool is_send(const Term& m) { return m.symbol() == Symbol::SendIR || m.symbol() == Symbol::SendRI; }

class Compiler {
 public:
  Compiler(const Protocol& p, Role role) : p_(p), role_(role) {
    out_.role = role;
    const KnowledgeSet init = party_initial_knowledge(p, role);
    for (const Term& t : init.basis()) {
      if (t.is_atom()) recipe_.emplace(t, t);
    }
  }

  CompiledRole run() {
    std::size_t element_base = 0;
    for (std::size_t i = 0; i < p_.messages.size(); ++i) {
      const Term& m = p_.messages[i];
      if (is_send(m)) {
        if (sender_of(m) == role_) {
          emit_send(m, i);
        } else {
          emit_receive(m, i, element_base);
        }
        element_base += m.arity();
      } else if (sender_of(m) == role_) {
        auto r = recipe(m.child(0));
        if (!r) throw CompileError("accepted key not constructible: " + render_term(m.child(0)));
        out_.steps.push_back(Step{StepKind::Accept, *r, 0, {}, i});
        out_.explicit_accept = true;
      }
    }
    if (!out_.explicit_accept && sk_owner(p_)) {
      if (auto r = recipe(terms::SK())) out_.steps.push_back(Step{StepKind::Accept, *r, 0, {}, p_.messages.size()});
    }
    mark_usage();
    return std::move(out_);
  }

 private:
  std::uint32_t new_var(const Term& source, bool opaque, bool hole, std::string name) {
    VarInfo v{source, opaque, hole, true, std::nullopt, std::move(name)};
    out_.vars.push_back(std::move(v));
    return static_cast<std::uint32_t>(out_.vars.size() - 1);
  }

  // Recipe of `t` from what the party holds. With skip_top, a recipe stored
  // for `t` itself is ignored so only genuine construction counts.
  std::optional<Term> recipe(const Term& raw, bool skip_top = false) {
    const Term t = dh_normalize(raw);
    if (!skip_top) {
      if (auto it = recipe_.find(t); it != recipe_.end()) return it->second;
    }
    if (t.is_atom()) return std::nullopt;
    if (t.symbol() == Symbol::Exp) {
      std::vector<Term> exps;
      Term base = t;
      while (base.symbol() == Symbol::Exp) {
        exps.push_back(base.child(1));
        Term next = base.child(0);
        base = next;
      }
      std::sort(exps.begin(), exps.end());
      for (std::size_t i = 0; i < exps.size(); ++i) {
        auto re = recipe(exps[i]);
        if (!re) continue;
        Term rest = base;
        for (std::size_t j = 0; j < exps.size(); ++j) {
          if (j != i) rest = terms::exp(rest, exps[j]);
        }
        if (auto rr = recipe(rest)) return terms::exp(*rr, *re);
      }
      return std::nullopt;
    }
    std::vector<Term> kids;
    for (const Term& c : t.children()) {
      auto r = recipe(c);
      if (!r) return std::nullopt;
      kids.push_back(*r);
    }
    return Term(t.label(), std::move(kids));
  }

  void emit_send(const Term& m, std::size_t idx) {
    std::vector<Term> kids;
    for (const Term& c : m.children()) {
      auto r = recipe(c);
      if (!r) throw CompileError("sender cannot construct " + render_term(c));
      kids.push_back(*r);
    }
    out_.steps.push_back(Step{StepKind::Send, Term(m.label(), std::move(kids)), 0, {}, idx});
  }

  // Expected shape of a received composite, for adversary candidates.
  Term candidate_template(const Term& t) {
    if (auto r = recipe(t)) return *r;
    if (t.is_atom()) return Term::variable(new_var(t, false, true, ""));
    std::vector<Term> kids;
    for (std::size_t i = 0; i < t.arity(); ++i) {
      const bool sign_key = t.symbol() == Symbol::Sign && i + 1 == t.arity();
      kids.push_back(sign_key ? t.child(i) : candidate_template(t.child(i)));
    }
    return Term(t.label(), std::move(kids));
  }

  // Pattern for a received term. New variables are appended to `fresh`.
  Term pattern(const Term& raw, const std::string& name, std::vector<std::uint32_t>* fresh) {
    const Term t = dh_normalize(raw);
    if (auto r = recipe(t)) return *r;
    if (t.is_atom()) {
      std::uint32_t v = new_var(t, false, false, pv_atom_name(t));
      if (fresh) fresh->push_back(v);
      recipe_.emplace(t, Term::variable(v));
      return Term::variable(v);
    }
    if (t.symbol() == Symbol::Tuple) {
      std::vector<Term> kids;
      for (std::size_t i = 0; i < t.arity(); ++i) {
        kids.push_back(pattern(t.child(i), name + "_" + std::to_string(i + 1), fresh));
      }
      Term pat(t.label(), std::move(kids));
      recipe_.emplace(t, pat);
      return pat;
    }
    std::optional<Term> tmpl;
    if (fresh) tmpl = candidate_template(t);
    std::uint32_t v = new_var(t, true, false, name);
    out_.vars[v].candidate_template = std::move(tmpl);
    if (fresh) fresh->push_back(v);
    recipe_.emplace(t, Term::variable(v));
    pending_.push_back(v);
    return Term::variable(v);
  }

  void emit_receive(const Term& m, std::size_t idx, std::size_t element_base) {
    std::vector<std::uint32_t> fresh;
    std::vector<Term> kids;
    for (std::size_t j = 0; j < m.arity(); ++j) {
      kids.push_back(pattern(m.child(j), "m" + std::to_string(element_base + j + 1), &fresh));
    }
    out_.steps.push_back(Step{StepKind::Receive, Term(m.label(), std::move(kids)), 0, std::move(fresh), idx});
    resolve_pending(idx);
  }

  bool can_open(const Term& t) {
    switch (t.symbol()) {
      case Symbol::Senc:
        return recipe(t.key()).has_value();
      case Symbol::Aenc:
        return t.key() == terms::pk(role_);
      case Symbol::Sign:
        return true;
      default:
        return false;
    }
  }

  void resolve_pending(std::size_t idx) {
    for (bool progress = true; progress;) {
      progress = false;
      for (std::size_t i = 0; i < pending_.size(); ++i) {
        const std::uint32_t v = pending_[i];
        const Term src = out_.vars[v].source;
        if (can_open(src)) {
          pending_.erase(pending_.begin() + static_cast<std::ptrdiff_t>(i));
          std::vector<Term> kids;
          const auto payload = src.payload();
          for (std::size_t k = 0; k < payload.size(); ++k) {
            kids.push_back(pattern(payload[k], out_.vars[v].name + "_" + std::to_string(k + 1), nullptr));
          }
          Term key = src.symbol() == Symbol::Senc ? *recipe(src.key()) : src.key();
          kids.push_back(key);
          out_.steps.push_back(Step{StepKind::Open, Term(src.label(), std::move(kids)), v, {}, idx});
          progress = true;
          break;
        }
        if (auto r = recipe(src, true)) {
          pending_.erase(pending_.begin() + static_cast<std::ptrdiff_t>(i));
          out_.steps.push_back(Step{StepKind::Check, *r, v, {}, idx});
          progress = true;
          break;
        }
      }
    }
  }

  // A network-chosen variable matters only if something after its own
  // receive position refers to it.
  void mark_usage() {
    std::vector<int> uses(out_.vars.size(), 0);
    std::function<void(const Term&)> count = [&](const Term& t) {
      if (t.is_variable()) {
        ++uses[t.label().instance];
        return;
      }
      for (const Term& c : t.children()) count(c);
    };
    for (const Step& s : out_.steps) {
      count(s.pattern);
      if (s.kind == StepKind::Open || s.kind == StepKind::Check) ++uses[s.var];
    }
    for (std::size_t v = 0; v < out_.vars.size(); ++v) out_.vars[v].used_later = uses[v] > 1;
  }

  const Protocol& p_;
  Role role_;
  CompiledRole out_;
  TermMap<Term> recipe_;
  std::vector<std::uint32_t> pending_;
};

}  // namespace

CompiledRole compile_role(const Protocol& p, Role role) {
  if (role != Role::I && role != Role::R) throw std::invalid_argument("compile_role: role must be I or R");
  return Compiler(p, role).run();
}

std::optional<Term> substitute(const Term& pattern, const std::vector<std::optional<Term>>& binding) {
  if (!pattern.has_variables()) return pattern;
  if (pattern.is_variable()) {
    const auto id = pattern.label().instance;
    if (id >= binding.size() || !binding[id]) return std::nullopt;
    return *binding[id];
  }
  std::vector<Term> kids;
  kids.reserve(pattern.arity());
  for (const Term& c : pattern.children()) {
    auto s = substitute(c, binding);
    if (!s) return std::nullopt;
    kids.push_back(std::move(*s));
  }
  return Term(pattern.label(), std::move(kids));
}

bool match_pattern(const Term& pattern, const Term& value, std::vector<std::optional<Term>>& binding) {
  if (pattern.is_variable()) {
    auto& slot = binding.at(pattern.label().instance);
    if (slot) return *slot == value;
    slot = value;
    return true;
  }
  if (auto ground = substitute(pattern, binding)) return dh_normalize(*ground) == value;
  if (pattern.label() != value.label() || pattern.arity() != value.arity()) return false;
  for (std::size_t i = 0; i < pattern.arity(); ++i) {
    if (!match_pattern(pattern.child(i), value.child(i), binding)) return false;
  }
  return true;
}

}  // namespace kexnet
