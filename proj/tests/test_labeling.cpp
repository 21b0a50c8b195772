#include <gtest/gtest.h>

#include <chrono>
#include <set>

#include "dy_oracle.hpp"
#include "kexnet/generator.hpp"
#include "kexnet/labeling.hpp"
#include "kexnet/role.hpp"

using namespace kexnet;
using namespace kexnet::terms;

namespace {

Protocol from_text(const std::string& text) { return parse_protocol_text(text); }

const char* kKtm4 =
    "(sendIR (esk I 1))\n"
    "(sendRI (ID I) (esk I 1) (esk R 1) (aenc (ID R) (SK) (pk I)) "
    "(sign (ID I) (esk I 1) (esk R 1) (aenc (ID R) (SK) (pk I)) (lsk R)))\n";

const char* kKtm4Leak =
    "(sendIR (esk I 1))\n"
    "(sendRI (ID I) (esk I 1) (esk R 1) (aenc (ID R) (SK) (pk I)) "
    "(sign (ID I) (esk I 1) (esk R 1) (aenc (ID R) (SK) (pk I)) (lsk R)) (SK))\n";

const char* kNeedhamSchroeder =
    "(sendIR (aenc (esk I 1) (ID I) (pk R)))\n"
    "(sendRI (aenc (esk I 1) (esk R 1) (pk I)))\n"
    "(sendIR (aenc (esk R 1) (pk R)))\n"
    "(acceptI (hash (esk I 1) (esk R 1)))\n"
    "(acceptR (hash (esk I 1) (esk R 1)))\n";

// Lowe's fix: the responder names itself in message 2.
const char* kNeedhamSchroederLowe =
    "(sendIR (aenc (esk I 1) (ID I) (pk R)))\n"
    "(sendRI (aenc (esk I 1) (esk R 1) (ID R) (pk I)))\n"
    "(sendIR (aenc (esk R 1) (pk R)))\n"
    "(acceptI (hash (esk I 1) (esk R 1)))\n"
    "(acceptR (hash (esk I 1) (esk R 1)))\n";

const char* kDiffieHellman =
    "(sendIR (exp (T I) (esk I 1)))\n"
    "(sendRI (exp (T I) (esk R 1)))\n"
    "(acceptI (exp (exp (T I) (esk I 1)) (esk R 1)))\n"
    "(acceptR (exp (exp (T I) (esk I 1)) (esk R 1)))\n";

OracleConfig fast_config() {
  OracleConfig c;
  c.max_states = 20000;
  c.time_budget_ms = 20000;
  return c;
}

}  // namespace

TEST(Passive, CleartextSessionKey) {
  Protocol p = from_text("(sendIR (esk I 1) (SK))\n");
  SecurityLabel l = label_passive(p);
  EXPECT_EQ(l.verdict, Verdict::Insecure);
  ASSERT_TRUE(l.witness.has_value());
  EXPECT_TRUE(replay_witness(*l.witness));
}

TEST(Passive, Ktm4NotPassivelyDerivable) {
  EXPECT_EQ(label_passive(from_text(kKtm4)).verdict, Verdict::Unknown);
}

TEST(Passive, Ktm4LeakVariant) {
  SecurityLabel l = label(from_text(kKtm4Leak), OracleConfig{});
  EXPECT_EQ(l.verdict, Verdict::Insecure);
  EXPECT_EQ(l.provenance, Provenance::PassiveOracle);
  EXPECT_EQ(provenance_string(l), "passive");
  EXPECT_TRUE(replay_witness(*l.witness));
}

TEST(Passive, NoSessionKey) {
  EXPECT_THROW(label_passive(from_text("(sendIR (esk I 1))\n")), NoSessionKey);
}

TEST(Active, Ktm4Secure) {
  auto t0 = std::chrono::steady_clock::now();
  SecurityLabel l = label(from_text(kKtm4), OracleConfig{});
  double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_EQ(l.verdict, Verdict::Secure) << l.note;
  EXPECT_EQ(provenance_string(l), "active(2)");
  EXPECT_LT(ms, 5000.0);
}

TEST(Active, NeedhamSchroederInsecure) {
  SecurityLabel l = label(from_text(kNeedhamSchroeder), OracleConfig{});
  ASSERT_EQ(l.verdict, Verdict::Insecure) << l.note;
  EXPECT_EQ(l.provenance, Provenance::ActiveSearch);
  EXPECT_EQ(l.bound, 2);
  ASSERT_TRUE(l.witness.has_value());
  EXPECT_TRUE(replay_witness(*l.witness));
  // The honest run alone leaks nothing.
  EXPECT_EQ(label_passive(from_text(kNeedhamSchroeder)).verdict, Verdict::Unknown);
  OracleConfig one;
  one.session_bound = 1;
  EXPECT_NE(label(from_text(kNeedhamSchroeder), one).verdict, Verdict::Insecure);
}

TEST(Active, NeedhamSchroederLoweSecure) {
  SecurityLabel l = label(from_text(kNeedhamSchroederLowe), OracleConfig{});
  EXPECT_EQ(l.verdict, Verdict::Secure) << l.note;
}

TEST(Active, DiffieHellmanInsecure) {
  SecurityLabel l = label(from_text(kDiffieHellman), OracleConfig{});
  ASSERT_EQ(l.verdict, Verdict::Insecure) << l.note;
  EXPECT_EQ(l.provenance, Provenance::ActiveSearch);
  EXPECT_TRUE(replay_witness(*l.witness));
}

TEST(Active, TinyBudgetGivesUnknown) {
  OracleConfig c;
  c.max_states = 1;
  SecurityLabel l = label(from_text(kKtm4), c);
  EXPECT_EQ(l.verdict, Verdict::Unknown);
  EXPECT_EQ(provenance_string(l), "timeout");
}

TEST(Active, BadConfig) {
  OracleConfig c;
  c.session_bound = 0;
  EXPECT_THROW(label(from_text(kKtm4), c), std::invalid_argument);
}

// Passive insecurity implies active insecurity; a larger bound never turns
// Insecure into Secure; every witness replays.
TEST(Active, MonotoneAndSound) {
  GenConfig g;
  g.seed = 11;
  g.m_max = 3;
  auto corpus = generate_corpus(g, 120);
  OracleConfig b1 = fast_config();
  b1.session_bound = 1;
  OracleConfig b2 = fast_config();
  int insecure = 0;
  for (const Protocol& p : corpus) {
    SecurityLabel pas = label_passive(p);
    SecurityLabel a1 = label_active(p, b1);
    SecurityLabel a2 = label_active(p, b2);
    if (pas.verdict == Verdict::Insecure) {
      EXPECT_EQ(a1.verdict, Verdict::Insecure);
      EXPECT_EQ(a2.verdict, Verdict::Insecure);
    }
    if (a1.verdict == Verdict::Insecure) EXPECT_NE(a2.verdict, Verdict::Secure) << render_protocol(p);
    for (const SecurityLabel* l : {&pas, &a1, &a2}) {
      if (l->verdict == Verdict::Insecure) {
        ASSERT_TRUE(l->witness.has_value());
        EXPECT_TRUE(replay_witness(*l->witness)) << render_protocol(p);
      }
    }
    insecure += a2.verdict == Verdict::Insecure;
  }
  EXPECT_GT(insecure, 0);
}

TEST(Label, CorpusIsDeterministicAcrossWorkers) {
  GenConfig g;
  g.seed = 3;
  g.m_max = 3;
  auto corpus = generate_corpus(g, 40);
  auto a = label_corpus(corpus, fast_config(), 1);
  auto b = label_corpus(corpus, fast_config(), 3);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].verdict, b[i].verdict);
    EXPECT_EQ(provenance_string(a[i]), provenance_string(b[i]));
    EXPECT_EQ(a[i].states, b[i].states);
  }
}

// Every single-send protocol of size <= 8 over {SK, K, esk_I1, lsk_R, pk_R}
// that sends SK somewhere: the passive verdict matches a brute-force
// decomposition closure.
TEST(Passive, AgreesWithBruteForceOnSmallProtocols) {
  const std::vector<Term> atoms = {SK(), K(), esk(Role::I, 1), lsk(Role::R), pk(Role::R)};
  std::vector<Term> elems;
  for (const Term& t : oracle::enumerate_terms(atoms, 3)) {
    if (t.size() <= 7) elems.push_back(t);
  }
  std::size_t checked = 0;
  auto check = [&](const std::vector<Term>& body) {
    Protocol p;
    p.messages.push_back(send_ir(body));
    if (!sk_owner(p)) return;
    std::vector<Term> universe = atoms;
    std::set<Term> seen(atoms.begin(), atoms.end());
    std::function<void(const Term&)> add = [&](const Term& t) {
      for (const Term& c : t.children()) add(c);
      if (seen.insert(t).second) universe.push_back(t);
    };
    for (const Term& t : body) add(t);
    oracle::Universe u(universe);
    std::vector<Term> start = body;
    start.push_back(pk(Role::R));
    oracle::Saturation sat = oracle::saturate(u, start);
    const bool brute = sat.closure[static_cast<std::size_t>(u.lookup(SK()))] != 0;
    ASSERT_EQ(label_passive(p).verdict == Verdict::Insecure, brute) << render_protocol(p);
    ++checked;
  };
  for (std::size_t i = 0; i < elems.size(); ++i) {
    if (1 + elems[i].size() <= 8) check({elems[i]});
    for (std::size_t j = i; j < elems.size(); ++j) {
      if (1 + elems[i].size() + elems[j].size() <= 8) check({elems[i], elems[j]});
    }
  }
  EXPECT_GT(checked, 1000u);
}

TEST(Roles, Ktm4InitiatorShape) {
  CompiledRole r = compile_role(from_text(kKtm4), Role::I);
  std::vector<StepKind> kinds;
  for (const Step& s : r.steps) kinds.push_back(s.kind);
  EXPECT_EQ(kinds, (std::vector<StepKind>{StepKind::Send, StepKind::Receive, StepKind::Open, StepKind::Open,
                                          StepKind::Accept}));
}

TEST(Emit, Ktm4MatchesTemplate) {
  std::string pv = emit_proverif(from_text(kKtm4));
  EXPECT_NE(pv.find("out(c,(esk_I1));"), std::string::npos) << pv;
  EXPECT_NE(pv.find("in(c, (=ID_I,=esk_I1,esk_R1:bitstring,m5:bitstring,m6:bitstring));"), std::string::npos)
      << pv;
  EXPECT_NE(pv.find("let (=ID_R,SK:bitstring) = adec(m5,lsk_I) in"), std::string::npos) << pv;
  EXPECT_NE(pv.find("if verif(m6, (ID_I,esk_I1,esk_R1,m5),pk_R)=true then"), std::string::npos) << pv;
  EXPECT_NE(pv.find("event acceptI(SK);"), std::string::npos);
  EXPECT_NE(pv.find("event acceptR(SK)"), std::string::npos);
  EXPECT_NE(pv.find("in(c, (esk_I1:bitstring));"), std::string::npos) << pv;
  EXPECT_NE(pv.find("out(c,(ID_I,esk_I1,esk_R1,aenc((ID_R,SK),pk_I),sign((ID_I,esk_I1,esk_R1,aenc((ID_R,SK),pk_I)),"
                    "lsk_R)));"),
            std::string::npos)
      << pv;
  EXPECT_NE(pv.find("query attacker(message)."), std::string::npos);
  EXPECT_EQ(pv.rfind("(* kexnet-pv/1 *)", 0), 0u);
}

TEST(Emit, Deterministic) {
  GenConfig g;
  g.seed = 8;
  for (const Protocol& p : generate_corpus(g, 200)) {
    std::string a = emit_proverif(p);
    EXPECT_EQ(a, emit_proverif(p));
    EXPECT_EQ(a.find('\r'), std::string::npos);
  }
}

TEST(Emit, RejectsAdversaryAtoms) {
  Protocol p = from_text("(sendIR (aenc (SK) (pk E)))\n");
  EXPECT_THROW(emit_proverif(p), UnsupportedConstruct);
}
