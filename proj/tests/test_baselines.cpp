#include <gtest/gtest.h>

#include <filesystem>
#include <map>

#include "kexnet/baselines.hpp"
#include "kexnet/generator.hpp"

using namespace kexnet;
using namespace kexnet::terms;

namespace {

std::vector<Example> toy_set() {
  const Term xs[] = {id(Role::I), esk(Role::I, 1), esk(Role::I, 2), pk(Role::I), pk(Role::R),
                     id(Role::R), hash({esk(Role::I, 1)}), hash({id(Role::I)}), sign({id(Role::I)}, lsk(Role::I)),
                     Term::atom(Symbol::T, Role::I)};
  std::vector<Example> out;
  for (const Term& x : xs) {
    out.push_back({Protocol{{send_ir({x, SK()}), accept_i(SK()), accept_r(SK())}}, 1});
    out.push_back({Protocol{{send_ir({x, aenc({SK()}, pk(Role::R))}), accept_i(SK()), accept_r(SK())}}, 0});
  }
  return out;
}

// Pairs of distinct protocols in `ps` whose encodings coincide.
std::size_t collisions(Conversion c, const std::vector<Protocol>& ps) {
  std::map<std::vector<double>, std::map<std::string, std::size_t>> groups;
  for (const Protocol& p : ps) groups[convert(c, p)][render_protocol(p)] += 0;
  std::size_t pairs = 0;
  for (const auto& [v, distinct] : groups) pairs += distinct.size() * (distinct.size() - 1) / 2;
  return pairs;
}

}  // namespace

TEST(Tlm, NestingPairCollides) {
  const Term x = sign({aenc({id(Role::I), SK()}, pk(Role::R))}, lsk(Role::I));
  const Term y = aenc({sign({id(Role::I), SK()}, lsk(Role::I))}, pk(Role::R));
  ASSERT_NE(x, y);
  EXPECT_EQ(convert_tlm(Protocol{{send_ir({x})}}), convert_tlm(Protocol{{send_ir({y})}}));
  EXPECT_EQ(convert_counts(Protocol{{send_ir({x})}}), convert_counts(Protocol{{send_ir({y})}}));
}

TEST(Tlm, AbsentMessagesArePaddedWithZeros) {
  const auto v = convert_tlm(Protocol{{send_ir({esk(Role::I, 1)})}});
  const std::size_t V = vocabulary_size();
  ASSERT_EQ(v.size(), kTlmSlots * V);
  EXPECT_EQ(v[vocabulary_index(esk(Role::I, 1).label())], 1.0);
  EXPECT_EQ(v[vocabulary_index(send_ir({SK()}).label())], 1.0);
  for (std::size_t i = V; i < v.size(); ++i) EXPECT_EQ(v[i], 0.0);
}

TEST(Tlm, WidthIsConstant) {
  GenConfig g;
  g.seed = 12;
  for (const Protocol& p : generate_corpus(g, 1000)) {
    ASSERT_EQ(convert_tlm(p).size(), conversion_width(Conversion::Tlm));
    ASSERT_EQ(convert_counts(p).size(), conversion_width(Conversion::Counts));
  }
}

TEST(Tlm, OverflowGoesToLastSlot) {
  Protocol p;
  for (std::size_t i = 0; i < kTlmSlots + 2; ++i) p.messages.push_back(send_ir({SK()}));
  const auto v = convert_tlm(p);
  const std::size_t V = vocabulary_size(), sk = vocabulary_index(SK().label());
  EXPECT_EQ(v[(kTlmSlots - 2) * V + sk], 1.0);
  EXPECT_EQ(v[(kTlmSlots - 1) * V + sk], 3.0);
}

TEST(Counts, SingleMessage) {
  const auto v = convert_counts(Protocol{{send_ir({esk(Role::I, 1)})}});
  const std::size_t esk_row = vocabulary_index(esk(Role::I, 1).label());
  for (std::size_t i = 0; i + 2 < v.size(); ++i) EXPECT_EQ(v[i], i == esk_row ? 1.0 : 0.0) << i;
  EXPECT_EQ(v[v.size() - 2], 1.0);  // messages
  EXPECT_EQ(v[v.size() - 1], 1.0);  // depth
}

TEST(Counts, MessageOrderIsLost) {
  const Term a = send_ir({esk(Role::I, 1)}), b = send_ri({hash({esk(Role::R, 1), id(Role::I)})});
  EXPECT_EQ(convert_counts(Protocol{{a, b}}), convert_counts(Protocol{{b, a}}));
  EXPECT_NE(convert_tlm(Protocol{{a, b}}), convert_tlm(Protocol{{b, a}}));
}

TEST(Counts, CollidesMoreOftenThanTlm) {
  GenConfig g;
  g.seed = 13;
  const auto ps = generate_corpus(g, 10000);
  const std::size_t tlm = collisions(Conversion::Tlm, ps), counts = collisions(Conversion::Counts, ps);
  RecordProperty("tlm_collisions", static_cast<int>(tlm));
  RecordProperty("counts_collisions", static_cast<int>(counts));
  EXPECT_GT(counts, tlm) << "tlm " << tlm << " counts " << counts;
}

TEST(Mlp, UntrainedIsUniform) {
  Mlp m(MlpConfig{});
  const Metrics mt = evaluate(m, toy_set());
  EXPECT_EQ(mt.accuracy, 0.5);
  EXPECT_EQ(classify(m, toy_set()[0].protocol), (std::array<double, 2>{0.5, 0.5}));
}

TEST(Mlp, SeparableToySetIsLearned) {
  for (Conversion c : {Conversion::Tlm, Conversion::Counts}) {
    MlpTrainConfig cfg;
    cfg.mlp.conversion = c;
    cfg.seed = 2;
    std::vector<double> losses;
    Mlp m = train_mlp(toy_set(), cfg, [&](const StepRecord& r) { losses.push_back(r.loss); });
    EXPECT_NEAR(losses.front(), std::log(2.0), 1e-12);
    EXPECT_EQ(evaluate(m, toy_set()).accuracy, 1.0) << conversion_name(c);
  }
}

TEST(Mlp, CheckpointRoundTrip) {
  MlpTrainConfig cfg;
  cfg.mlp.conversion = Conversion::Counts;
  cfg.steps = 5;
  cfg.seed = 9;
  Mlp m = train_mlp(toy_set(), cfg);
  const auto path = (std::filesystem::temp_directory_path() / "kexnet_mlp.ckpt").string();
  save_checkpoint(m, path);
  Mlp back = load_mlp_checkpoint(path);
  EXPECT_EQ(back.config.conversion, Conversion::Counts);
  EXPECT_EQ(back.steps, 5u);
  for (const Example& e : toy_set()) EXPECT_EQ(classify(m, e.protocol), classify(back, e.protocol));
  EXPECT_THROW(load_checkpoint(path), CheckpointError);
  std::filesystem::remove(path);
}

TEST(Mlp, RejectsDegenerateData) {
  EXPECT_THROW(train_mlp({}, MlpTrainConfig{}), EmptyDataset);
  EXPECT_THROW(conversion_from_name("bag"), std::invalid_argument);
}
