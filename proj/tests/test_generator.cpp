#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <deque>

#include "kexnet/generator.hpp"

using namespace kexnet;
using namespace kexnet::terms;

namespace {

// Replays a fixed list of draws and checks each is in range.
struct Script {
  std::deque<std::uint64_t> picks;
  std::uint64_t below(std::uint64_t n) {
    if (picks.empty()) throw std::runtime_error("script exhausted");
    std::uint64_t v = picks.front();
    picks.pop_front();
    if (v >= n) throw std::runtime_error("scripted draw out of range");
    return v;
  }
};

std::uint64_t index_of(const std::vector<Term>& v, const Term& t) {
  auto it = std::find(v.begin(), v.end(), t);
  if (it == v.end()) throw std::runtime_error("term not in pool: " + render_term(t));
  return static_cast<std::uint64_t>(it - v.begin());
}

std::uint64_t fn_index(const std::vector<Term>& pool, Symbol f) {
  auto it = std::find(kDrawFunctions.begin(), kDrawFunctions.end(), f);
  return pool.size() + static_cast<std::uint64_t>(it - kDrawFunctions.begin());
}

}  // namespace

// Worked example: m_max = 3, c_max = 5, two messages, establishment key.
TEST(Generate, WorkedExampleFromScriptedDraws) {
  GenConfig cfg;
  cfg.m_max = 3;
  cfg.c_max = 5;
  const Term eski = esk(Role::I, 1);

  KnowledgeSet ki = initial_knowledge(Owner::I, public_atoms());
  KnowledgeSet kr = initial_knowledge(Owner::R, public_atoms());
  std::vector<Term> p1 = draw_pool(ki);
  Term m1 = send_ir({aenc({id(Role::R)}, pk(Role::R)), hash({senc({eski}, K())}), eski});
  kr = absorb(std::move(kr), m1);
  std::vector<Term> p2 = draw_pool(kr);
  Term m2 = send_ri({hash({eski}), id(Role::I)});
  ki = absorb(std::move(ki), m2);
  std::vector<Term> cands = session_key_candidates(ki, kr);
  Term key = hash({eski, pk(Role::R)});

  Script s;
  s.picks = {1,                                                       // m = 2
             2,                                                       // three elements
             fn_index(p1, Symbol::Aenc), 0, index_of(p1, id(Role::R)),  // aenc(ID_R; pk_R)
             fn_index(p1, Symbol::Hash), 0, fn_index(p1, Symbol::Senc), 0, index_of(p1, eski),
             index_of(p1, eski),
             1,  // two elements
             fn_index(p2, Symbol::Hash), 0, index_of(p2, eski), index_of(p2, id(Role::I)),
             index_of(cands, key)};
  auto p = generate_attempt(cfg, ProtocolKind::Establishment, s);
  ASSERT_TRUE(p.has_value());
  EXPECT_TRUE(s.picks.empty());
  ASSERT_EQ(p->messages.size(), 4u);
  EXPECT_EQ(p->messages[0], m1);
  EXPECT_EQ(render_term(p->messages[0]), "(sendIR (aenc (ID R) (pk R)) (hash (senc (esk I 1) (K))) (esk I 1))");
  EXPECT_EQ(p->messages[1], m2);
  EXPECT_EQ(p->messages[2], accept_i(key));
  EXPECT_EQ(p->messages[3], accept_r(key));
  EXPECT_TRUE(validate_protocol(*p).empty());
}

TEST(Generate, ScriptedAencChild) {
  KnowledgeSet ki = initial_knowledge(Owner::I, public_atoms());
  std::vector<Term> pool = draw_pool(ki);
  Script s;
  s.picks = {0, fn_index(pool, Symbol::Aenc), 0, index_of(pool, id(Role::R))};
  auto kids = generate_message(3, 4, ki, Role::I, s);
  ASSERT_EQ(kids.size(), 1u);
  EXPECT_EQ(kids[0], aenc({id(Role::R)}, pk(Role::R)));
}

TEST(Generate, ForcedShapeAtMinimumConfig) {
  GenConfig cfg;
  cfg.m_max = 1;
  cfg.c_max = 1;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    cfg.seed = seed;
    Protocol p = generate_protocol(cfg);
    ASSERT_EQ(p.send_count(), 1u);
    EXPECT_EQ(p.messages[0].symbol(), Symbol::SendIR);
    EXPECT_EQ(p.messages[0].arity(), 1u);
    EXPECT_TRUE(validate_protocol(p).empty());
  }
}

TEST(Generate, PoolExcludesAdversaryTerms) {
  for (const Term& t : draw_pool(initial_knowledge(Owner::R, public_atoms()))) {
    EXPECT_NE(t.label().role, Role::E);
  }
}

TEST(Generate, Deterministic) {
  GenConfig cfg;
  cfg.seed = 1234;
  auto a = generate_corpus(cfg, 200, 1);
  auto b = generate_corpus(cfg, 200, 4);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(render_protocol(a[i]), render_protocol(b[i]));
    EXPECT_EQ(a[i].seed, corpus_seed(1234, i));
  }
  cfg.seed = 1235;
  auto c = generate_corpus(cfg, 200);
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += render_protocol(a[i]) == render_protocol(c[i]);
  EXPECT_LT(same, 20u);
}

TEST(Generate, ValidAndBounded) {
  GenConfig cfg;
  cfg.seed = 5;
  std::size_t transport = 0;
  for (const Protocol& p : generate_corpus(cfg, 2000)) {
    auto v = validate_protocol(p);
    ASSERT_TRUE(v.empty()) << v.front() << "\n" << render_protocol(p);
    ASSERT_GE(p.send_count(), 1u);
    ASSERT_LE(p.send_count(), 5u);
    ASSERT_TRUE(p.has_accepts());
    transport += p.kind == ProtocolKind::Transport;
  }
  EXPECT_GT(transport, 200u);
  EXPECT_LT(transport, 1800u);
}

TEST(Generate, ChosenKeyDerivableByBoth) {
  GenConfig cfg;
  cfg.seed = 77;
  for (const Protocol& p : generate_corpus(cfg, 1000)) {
    auto key = session_key(p);
    ASSERT_TRUE(key.has_value());
    EXPECT_TRUE(derivable(party_final_knowledge(p, Role::I), *key));
    EXPECT_TRUE(derivable(party_final_knowledge(p, Role::R), *key));
    EXPECT_EQ(p.messages[p.messages.size() - 1].child(0), p.messages[p.messages.size() - 2].child(0));
  }
}

TEST(Generate, CandidatesPreferSecretAtoms) {
  KnowledgeSet ki = initial_knowledge(Owner::I, public_atoms());
  KnowledgeSet kr = initial_knowledge(Owner::R, public_atoms());
  auto c = session_key_candidates(ki, kr);
  ASSERT_FALSE(c.empty());
  for (const Term& t : c) EXPECT_TRUE(t.contains(K()));
}

TEST(Generate, ChildCountIsUniform) {
  Rng rng(31337);
  const int c_max = 3;
  const int n = 10000;
  double sum = 0;
  for (int i = 0; i < n; ++i) sum += detail::draw_count(c_max, rng);
  double mean = sum / n;
  double sigma = std::sqrt((c_max * c_max - 1) / 12.0 / n);
  EXPECT_NEAR(mean, (1 + c_max) / 2.0, 3 * sigma);
}

TEST(Generate, BadConfig) {
  GenConfig cfg;
  cfg.m_max = 0;
  EXPECT_THROW(generate_protocol(cfg), std::invalid_argument);
}
