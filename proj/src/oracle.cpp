#include <algorithm>
#include <chrono>
#include <functional>
#include <unordered_set>

#include "kexnet/labeling.hpp"
#include "kexnet/parallel.hpp"
#include "kexnet/role.hpp"
#include "kexnet/rng.hpp"

namespace kexnet {

namespace {

using Binding = std::vector<std::optional<Term>>;
using Clock = std::chrono::steady_clock;

KnowledgeSet adversary_start() { return initial_knowledge(Owner::Adversary, public_atoms()); }

// One role thread of the active search: which role, whether its intended
// peer is honest, and the instance tag of its fresh values.
struct ThreadSpec {
  Role role;
  bool honest_peer;
  std::uint32_t instance;
};

std::string spec_name(const ThreadSpec& s) {
  std::string out(1, role_char(s.role));
  out += "#" + std::to_string(s.instance) + "->";
  out += s.honest_peer ? role_char(partner(s.role)) : 'E';
  return out;
}

Term instantiate(const Term& t, const ThreadSpec& s) {
  if (t.is_variable()) return t;
  if (t.is_atom()) {
    NodeLabel l = t.label();
    switch (l.symbol) {
      case Symbol::Esk:
        if (l.role == s.role) l.instance = s.instance;
        break;
      case Symbol::SK:
        l.instance = s.instance;
        break;
      case Symbol::K:
        if (!s.honest_peer) l.role = Role::E;
        break;
      case Symbol::ID:
      case Symbol::Pk:
      case Symbol::Lsk:
      case Symbol::T:
        if (!s.honest_peer && l.role == partner(s.role)) l.role = Role::E;
        break;
      default:
        break;
    }
    return Term(l);
  }
  std::vector<Term> kids;
  kids.reserve(t.arity());
  for (const Term& c : t.children()) kids.push_back(instantiate(c, s));
  return Term(t.label(), std::move(kids));
}

// A compiled role specialised to one thread.
struct Thread {
  ThreadSpec spec;
  const CompiledRole* role;
  std::vector<Step> steps;
  std::vector<std::optional<Term>> templates;
};

Thread make_thread(const CompiledRole& role, const ThreadSpec& spec) {
  Thread th{spec, &role, {}, {}};
  for (const Step& s : role.steps) {
    Step c = s;
    c.pattern = instantiate(s.pattern, spec);
    th.steps.push_back(std::move(c));
  }
  for (const VarInfo& v : role.vars) {
    th.templates.push_back(v.candidate_template ? std::optional<Term>(instantiate(*v.candidate_template, spec))
                                                : std::nullopt);
  }
  return th;
}

struct ThreadState {
  std::size_t pc = 0;
  bool alive = true;
  Binding binding;
};

struct State {
  std::vector<ThreadState> threads;
  KnowledgeSet adversary{Owner::Adversary};
  std::vector<Term> claims;
  std::vector<Term> observed;
  std::vector<std::string> trace;
};

// Atom classes used to type network-chosen atom variables.
int atom_class(Symbol s) {
  switch (s) {
    case Symbol::ID:
      return 0;
    case Symbol::Esk:
    case Symbol::SK:
      return 1;
    case Symbol::Lsk:
      return 2;
    case Symbol::Pk:
      return 3;
    case Symbol::T:
      return 4;
    case Symbol::K:
      return 5;
    default:
      return -1;
  }
}

// Enumerates adversary-derivable instances of patterns for one thread.
class Solver {
 public:
  Solver(const KnowledgeSet& adv, const std::vector<Term>& basis, const Thread& th, Binding& b,
         const OracleConfig& cfg)
      : adv_(adv), basis_(basis), th_(th), b_(b), cfg_(cfg) {
    for (const Term& t : basis_) {
      if (!t.is_atom()) continue;
      int c = atom_class(t.symbol());
      if (c >= 0) atoms_[static_cast<std::size_t>(c)].push_back(t);
    }
  }

  // Calls `cb` once per joint solution of items[pos..]; stops when cb
  // returns false. Returns false iff stopped.
  bool solve(const std::vector<Term>& items, std::size_t pos, const std::function<bool()>& cb) {
    if (pos == items.size()) return cb();
    const Term& p = items[pos];
    if (auto g = substitute(p, b_)) {
      Term v = dh_normalize(*g);
      if (v.size() > cfg_.depth_bound || !is_derivable(v)) return true;
      return solve(items, pos + 1, cb);
    }
    if (p.is_variable()) {
      const auto id = p.label().instance;
      for (const Term& c : candidates(id)) {
        b_[id] = c;
        const bool go = solve(items, pos + 1, cb);
        b_[id].reset();
        if (!go) return false;
      }
      return true;
    }
    // Replay a known term of the same shape.
    for (const Term& t : basis_) {
      if (t.label() != p.label() || t.arity() != p.arity()) continue;
      Binding saved = b_;
      if (match_pattern(p, t, b_)) {
        if (!solve(items, pos + 1, cb)) {
          b_ = std::move(saved);
          return false;
        }
      }
      b_ = std::move(saved);
    }
    // Compose it: every child must be derivable, including the key.
    std::vector<Term> next(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(pos));
    for (const Term& c : p.children()) next.push_back(c);
    next.insert(next.end(), items.begin() + static_cast<std::ptrdiff_t>(pos) + 1, items.end());
    return solve(next, pos, cb);
  }

  std::vector<Term> candidates(std::uint32_t v) {
    const VarInfo& info = th_.role->vars.at(v);
    std::vector<Term> out;
    if (!info.opaque) {
      int c = atom_class(info.source.symbol());
      if (c >= 0) out = atoms_[static_cast<std::size_t>(c)];
    } else {
      TermSet seen;
      if (const auto& tmpl = th_.templates.at(v)) {
        solve({*tmpl}, 0, [&] {
          Term val = dh_normalize(*substitute(*tmpl, b_));
          if (val.size() <= cfg_.depth_bound && seen.insert(val).second) out.push_back(val);
          return out.size() < cfg_.max_var_candidates;
        });
      }
      for (const Term& t : basis_) {
        if (out.size() >= cfg_.max_var_candidates) break;
        if (t.label() == info.source.label() && seen.insert(t).second) out.push_back(t);
      }
    }
    if (out.size() > cfg_.max_var_candidates) {
      out.erase(out.begin() + static_cast<std::ptrdiff_t>(cfg_.max_var_candidates), out.end());
      truncated = true;
    }
    if (!info.used_later && out.size() > 1) out.erase(out.begin() + 1, out.end());
    return out;
  }

  bool truncated = false;

 private:
  bool is_derivable(const Term& t) {
    if (auto it = memo_.find(t); it != memo_.end()) return it->second;
    bool d = derivable(adv_, t);
    memo_.emplace(t, d);
    return d;
  }

  const KnowledgeSet& adv_;
  const std::vector<Term>& basis_;
  const Thread& th_;
  Binding& b_;
  const OracleConfig& cfg_;
  std::array<std::vector<Term>, 6> atoms_;
  TermMap<bool> memo_;
};

std::uint64_t mix(std::uint64_t h, std::uint64_t v) { return splitmix64(h ^ splitmix64(v)); }

class Search {
 public:
  Search(std::vector<Thread> threads, const OracleConfig& cfg, Clock::time_point deadline, std::size_t& states)
      : threads_(std::move(threads)), cfg_(cfg), deadline_(deadline), states_(states) {}

  // Witness if an attack is found. Otherwise the flags below tell whether
  // the space was explored in full.
  std::optional<Witness> run() {
    State s;
    s.adversary = adversary_start();
    for (const Thread& t : threads_) s.threads.push_back(ThreadState{0, true, Binding(t.role->vars.size())});
    for (std::size_t i = 0; i < threads_.size(); ++i) advance(s, i);
    if (auto w = check_claims(s)) return w;
    dfs(s);
    return found_;
  }

  bool timed_out() const { return timed_out_; }
  bool state_capped() const { return capped_; }
  bool truncated() const { return truncated_; }

 private:
  void advance(State& s, std::size_t i) {
    const Thread& th = threads_[i];
    ThreadState& ts = s.threads[i];
    while (ts.alive && ts.pc < th.steps.size()) {
      const Step& step = th.steps[ts.pc];
      switch (step.kind) {
        case StepKind::Receive:
          return;
        case StepKind::Send: {
          auto v = substitute(step.pattern, ts.binding);
          if (!v) {
            ts.alive = false;
            return;
          }
          Term msg = dh_normalize(*v);
          s.adversary = absorb(std::move(s.adversary), msg);
          s.observed.push_back(msg);
          s.trace.push_back(spec_name(th.spec) + " sends " + render_term(msg));
          break;
        }
        case StepKind::Open: {
          Binding copy = ts.binding;
          if (!ts.binding[step.var] || !match_pattern(step.pattern, *ts.binding[step.var], copy)) {
            ts.alive = false;
            return;
          }
          ts.binding = std::move(copy);
          break;
        }
        case StepKind::Check: {
          auto v = substitute(step.pattern, ts.binding);
          if (!v || !ts.binding[step.var] || dh_normalize(*v) != *ts.binding[step.var]) {
            ts.alive = false;
            return;
          }
          break;
        }
        case StepKind::Accept: {
          auto v = substitute(step.pattern, ts.binding);
          if (!v) {
            ts.alive = false;
            return;
          }
          Term key = dh_normalize(*v);
          if (th.spec.honest_peer) s.claims.push_back(key);
          s.trace.push_back(spec_name(th.spec) + " accepts " + render_term(key));
          break;
        }
      }
      ++ts.pc;
    }
  }

  std::optional<Witness> check_claims(const State& s) const {
    for (const Term& c : s.claims) {
      if (derivable(s.adversary, c)) return Witness{s.observed, c, s.trace};
    }
    return std::nullopt;
  }

  std::uint64_t fingerprint(const State& s) const {
    std::uint64_t h = s.adversary.fingerprint();
    for (const ThreadState& t : s.threads) {
      h = mix(h, t.pc * 2 + (t.alive ? 1 : 0));
      for (const auto& v : t.binding) h = mix(h, v ? v->hash() : 0x9e37u);
    }
    return mix(h, s.claims.size());
  }

  bool out_of_budget() {
    if (states_ >= cfg_.max_states) capped_ = true;
    if (Clock::now() >= deadline_) timed_out_ = true;
    return capped_ || timed_out_;
  }

  // Distinct messages the adversary can deliver to thread i's receive step,
  // each with the resulting binding.
  std::vector<std::pair<Term, Binding>> deliveries(const State& s, std::size_t i, const std::vector<Term>& basis) {
    const Thread& th = threads_[i];
    const Step& step = th.steps[s.threads[i].pc];
    Binding b = s.threads[i].binding;
    Solver solver(s.adversary, basis, th, b, cfg_);
    std::vector<Term> items(step.pattern.children().begin(), step.pattern.children().end());
    std::vector<std::pair<Term, Binding>> out;
    TermSet seen;
    solver.solve(items, 0, [&] {
      Term msg = dh_normalize(*substitute(step.pattern, b));
      for (const Term& c : msg.children()) {
        if (c.size() > cfg_.depth_bound) return true;
      }
      if (seen.insert(msg).second) out.emplace_back(msg, b);
      if (out.size() >= cfg_.max_candidates) {
        truncated_ = true;
        return false;
      }
      return true;
    });
    truncated_ = truncated_ || solver.truncated;
    return out;
  }

  void dfs(const State& s) {
    if (found_ || out_of_budget()) return;
    ++states_;
    if (!visited_.insert(fingerprint(s)).second) return;
    const std::vector<Term> basis = s.adversary.sorted_basis();
    for (std::size_t i = 0; i < threads_.size(); ++i) {
      const ThreadState& ts = s.threads[i];
      if (!ts.alive || ts.pc >= threads_[i].steps.size()) continue;
      for (auto& [msg, binding] : deliveries(s, i, basis)) {
        State n = s;
        n.threads[i].binding = std::move(binding);
        ++n.threads[i].pc;
        n.trace.push_back(spec_name(threads_[i].spec) + " receives " + render_term(msg));
        advance(n, i);
        if (auto w = check_claims(n)) {
          found_ = std::move(w);
          return;
        }
        dfs(n);
        if (found_ || timed_out_ || capped_) return;
      }
    }
  }

  std::vector<Thread> threads_;
  const OracleConfig& cfg_;
  Clock::time_point deadline_;
  std::size_t& states_;
  std::unordered_set<std::uint64_t> visited_;
  std::optional<Witness> found_;
  bool timed_out_ = false;
  bool capped_ = false;
  bool truncated_ = false;
};

bool claims_something(const CompiledRole& r) {
  return std::any_of(r.steps.begin(), r.steps.end(), [](const Step& s) { return s.kind == StepKind::Accept; });
}

}  // namespace

std::string provenance_string(const SecurityLabel& l) {
  switch (l.provenance) {
    case Provenance::PassiveOracle:
      return "passive";
    case Provenance::ActiveSearch:
      return "active(" + std::to_string(l.bound) + ")";
    case Provenance::ExternalTool:
      return "external";
    case Provenance::Timeout:
      return "timeout";
    case Provenance::Reference:
      return "reference";
  }
  return "unknown";
}

void check_config(const OracleConfig& cfg) {
  if (cfg.session_bound < 1) throw std::invalid_argument("session_bound must be >= 1");
  if (cfg.time_budget_ms <= 0) throw std::invalid_argument("time budget must be positive");
  if (cfg.depth_bound < 1 || cfg.max_states < 1 || cfg.max_candidates < 1 || cfg.max_var_candidates < 1) {
    throw std::invalid_argument("oracle bounds must be positive");
  }
}

SecurityLabel label_passive(const Protocol& p) {
  auto key = session_key(p);
  if (!key) throw NoSessionKey();
  std::vector<Term> sent;
  std::vector<std::string> trace;
  for (const Term& m : p.messages) {
    if (m.symbol() == Symbol::SendIR || m.symbol() == Symbol::SendRI) {
      sent.push_back(m);
      trace.push_back("observe " + render_term(m));
    }
  }
  SecurityLabel out;
  out.provenance = Provenance::PassiveOracle;
  Term target = dh_normalize(*key);
  if (derivable(absorb_all(adversary_start(), sent), target)) {
    out.verdict = Verdict::Insecure;
    out.witness = Witness{std::move(sent), target, std::move(trace)};
  }
  return out;
}

SecurityLabel label_active(const Protocol& p, const OracleConfig& cfg) {
  check_config(cfg);
  SecurityLabel out = label_passive(p);
  out.provenance = Provenance::ActiveSearch;
  out.bound = 1;
  if (out.verdict == Verdict::Insecure) {
    out.note = "honest run";
    return out;
  }

  std::array<CompiledRole, 2> roles;
  try {
    roles = {compile_role(p, Role::I), compile_role(p, Role::R)};
  } catch (const CompileError& e) {
    out.verdict = Verdict::Unknown;
    out.note = e.what();
    return out;
  }

  // Thread types: (role, honest peer).
  const std::array<std::pair<Role, bool>, 4> types = {
      {{Role::I, true}, {Role::R, true}, {Role::I, false}, {Role::R, false}}};
  const auto deadline = Clock::now() + std::chrono::milliseconds(cfg.time_budget_ms);
  std::size_t states = 0;
  bool incomplete = false;

  for (int k = 1; k <= cfg.session_bound; ++k) {
    // Multisets of k thread types as nondecreasing index sequences.
    std::vector<int> pick(static_cast<std::size_t>(k), 0);
    for (;;) {
      std::vector<Thread> threads;
      bool claims = false;
      for (std::size_t j = 0; j < pick.size(); ++j) {
        auto [role, honest] = types[static_cast<std::size_t>(pick[j])];
        const CompiledRole& cr = roles[role == Role::I ? 0 : 1];
        claims = claims || (honest && claims_something(cr));
        threads.push_back(make_thread(cr, ThreadSpec{role, honest, static_cast<std::uint32_t>(j + 1)}));
      }
      if (claims) {
        Search search(std::move(threads), cfg, deadline, states);
        auto w = search.run();
        incomplete = incomplete || search.truncated();
        if (w) {
          out.verdict = Verdict::Insecure;
          out.bound = k;
          out.witness = std::move(w);
          out.states = states;
          return out;
        }
        if (search.timed_out() || search.state_capped()) {
          out.verdict = Verdict::Unknown;
          out.provenance = Provenance::Timeout;
          out.bound = k;
          out.states = states;
          out.note = search.timed_out() ? "time budget exhausted" : "state cap reached";
          return out;
        }
      }
      // Next multiset.
      int j = k - 1;
      while (j >= 0 && pick[static_cast<std::size_t>(j)] == 3) --j;
      if (j < 0) break;
      int v = ++pick[static_cast<std::size_t>(j)];
      for (std::size_t q = static_cast<std::size_t>(j) + 1; q < pick.size(); ++q) pick[q] = v;
    }
  }
  out.states = states;
  out.bound = cfg.session_bound;
  if (incomplete) {
    out.verdict = Verdict::Unknown;
    out.provenance = Provenance::Timeout;
    out.note = "candidate cap reached";
  } else {
    out.verdict = Verdict::Secure;
  }
  return out;
}

SecurityLabel label(const Protocol& p, const OracleConfig& cfg) {
  check_config(cfg);
  SecurityLabel passive = label_passive(p);
  if (passive.verdict == Verdict::Insecure) return passive;
  return label_active(p, cfg);
}

bool replay_witness(const Witness& w) { return derivable(absorb_all(adversary_start(), w.observed), w.target); }

std::vector<SecurityLabel> label_corpus(const std::vector<Protocol>& ps, const OracleConfig& cfg, unsigned workers) {
  check_config(cfg);
  std::vector<SecurityLabel> out(ps.size());
  parallel_for(ps.size(), workers, [&](std::size_t i) { out[i] = label(ps[i], cfg); });
  return out;
}

}  // namespace kexnet
