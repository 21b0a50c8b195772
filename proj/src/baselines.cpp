#include "kexnet/baselines.hpp"

#include <chrono>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "kexnet/hash.hpp"

namespace kexnet {

namespace {

// Atom and function rows come first in the vocabulary.
constexpr std::size_t kSymbolRows = 27;

void count_labels(const Term& t, double* hist, bool behaviors) {
  const std::size_t r = vocabulary_index(t.label());
  if (behaviors || r < kSymbolRows) hist[r] += 1;
  for (const Term& c : t.children()) count_labels(c, hist, behaviors);
}

Tensor glorot(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t({rows, cols});
  for (double& v : t.data) v = (2.0 * rng.uniform() - 1.0) * limit;
  return t;
}

}  // namespace

std::string_view conversion_name(Conversion c) noexcept { return c == Conversion::Tlm ? "tlm" : "counts"; }

Conversion conversion_from_name(std::string_view s) {
  if (s == "tlm") return Conversion::Tlm;
  if (s == "counts") return Conversion::Counts;
  throw std::invalid_argument("unknown conversion: " + std::string(s));
}

std::size_t conversion_width(Conversion c) {
  return c == Conversion::Tlm ? kTlmSlots * vocabulary_size() : kSymbolRows + 2;
}

std::vector<double> convert_tlm(const Protocol& p) {
  const std::size_t V = vocabulary_size();
  std::vector<double> out(kTlmSlots * V, 0.0);
  for (std::size_t i = 0; i < p.messages.size(); ++i) {
    const std::size_t slot = std::min(i, kTlmSlots - 1);
    count_labels(p.messages[i], out.data() + slot * V, true);
  }
  return out;
}

std::vector<double> convert_counts(const Protocol& p) {
  std::vector<double> out(kSymbolRows + 2, 0.0);
  std::size_t depth = 0;
  for (const Term& m : p.messages) {
    count_labels(m, out.data(), false);
    depth = std::max(depth, m.depth());
  }
  out[kSymbolRows] = static_cast<double>(p.messages.size());
  out[kSymbolRows + 1] = static_cast<double>(depth);
  return out;
}

std::vector<double> convert(Conversion c, const Protocol& p) {
  return c == Conversion::Tlm ? convert_tlm(p) : convert_counts(p);
}

Mlp::Mlp(const MlpConfig& cfg) : config(cfg) {
  if (cfg.hidden == 0) throw std::invalid_argument("hidden width must be positive");
  const std::size_t w = conversion_width(cfg.conversion), n = cfg.hidden;
  Rng rng(cfg.seed);
  w1 = Parameter("mlp.w1", glorot(n, w, rng));
  b1 = Parameter("mlp.b1", Tensor({n}));
  w2 = Parameter("mlp.w2", glorot(n, n, rng));
  b2 = Parameter("mlp.b2", Tensor({n}));
  // Zero output layer, as in the tree model.
  w3 = Parameter("mlp.w3", Tensor({2, n}));
  b3 = Parameter("mlp.b3", Tensor({2}));
}

std::vector<Parameter*> Mlp::all_parameters() { return {&w1, &b1, &w2, &b2, &w3, &b3}; }

std::vector<const Parameter*> Mlp::all_parameters() const {
  auto ps = const_cast<Mlp*>(this)->all_parameters();
  return {ps.begin(), ps.end()};
}

namespace {

template <class M>
Var mlp_forward(Tape& t, M& m, const Protocol& p) {
  std::vector<double> x = convert(m.config.conversion, p);
  const std::size_t w = x.size();
  Var h = t.constant(Tensor({w}, std::move(x)));
  h = t.tanh(t.add(t.matvec(t.param(m.w1), h), t.param(m.b1)));
  h = t.tanh(t.add(t.matvec(t.param(m.w2), h), t.param(m.b2)));
  return t.softmax(t.add(t.matvec(t.param(m.w3), h), t.param(m.b3)));
}

}  // namespace

Var class_probabilities(Tape& tape, Mlp& mlp, const Protocol& p) { return mlp_forward(tape, mlp, p); }
Var class_probabilities(Tape& tape, const Mlp& mlp, const Protocol& p) { return mlp_forward(tape, mlp, p); }

std::array<double, 2> classify(const Mlp& mlp, const Protocol& p) {
  Tape t;
  const Tensor& v = t.value(class_probabilities(t, mlp, p));
  return {v[0], v[1]};
}

Mlp train_mlp(const std::vector<Example>& data, const MlpTrainConfig& cfg,
              const std::function<void(const StepRecord&)>& on_step) {
  check_dataset(data);
  MlpConfig mc = cfg.mlp;
  mc.seed = cfg.seed;
  Mlp mlp(mc);
  RmsPropState state;
  BatchStream batches(data, cfg.batch, cfg.seed);
  const auto params = mlp.all_parameters();
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const auto& batch = batches.next();
    for (Parameter* p : params) p->zero_grad();
    const double scale = 1.0 / static_cast<double>(batch.size());
    double loss = 0;
    for (const Example* ex : batch) {
      Tape tape;
      const Var ce = tape.cross_entropy(class_probabilities(tape, mlp, ex->protocol), static_cast<std::size_t>(ex->label));
      loss += tape.value(ce)[0];
      tape.backward(ce, scale);
    }
    rmsprop_step(params, state, cfg.optimizer);
    ++mlp.steps;
    if (on_step) on_step(StepRecord{step, loss * scale});
  }
  return mlp;
}

Metrics evaluate(const Mlp& mlp, const std::vector<Example>& data) {
  Metrics m;
  std::size_t correct = 0;
  for (const Example& e : data) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto probs = classify(mlp, e.protocol);
    m.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    const int pred = probs[1] > probs[0] ? 1 : 0;
    m.predicted.push_back(pred);
    if (e.label == 0 || e.label == 1) ++m.confusion[static_cast<std::size_t>(e.label)][static_cast<std::size_t>(pred)];
    if (pred == e.label) ++correct;
  }
  m.accuracy = data.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(data.size());
  return m;
}

void save_checkpoint(const Mlp& mlp, const std::string& path) {
  const nlohmann::json cfg = {
      {"conversion", conversion_name(mlp.config.conversion)}, {"hidden", mlp.config.hidden}, {"seed", mlp.config.seed}};
  write_checkpoint(path,
                   {{"arch", kMlpArch},
                    {"config", cfg},
                    {"config_hash", hex64(fnv1a64(cfg.dump()))},
                    {"steps", mlp.steps},
                    {"vocabulary", vocabulary_size()}},
                   mlp.all_parameters());
}

Mlp load_mlp_checkpoint(const std::string& path) {
  std::optional<Mlp> mlp;
  read_checkpoint(path, [&](const nlohmann::json& m) {
    if (m.at("arch").get<std::string>() != kMlpArch) throw CheckpointError("not an mlp checkpoint");
    const auto& c = m.at("config");
    if (m.at("config_hash").get<std::string>() != hex64(fnv1a64(c.dump()))) throw CheckpointError("config hash mismatch");
    if (m.at("vocabulary").get<std::size_t>() != vocabulary_size()) throw CheckpointError("vocabulary size mismatch");
    MlpConfig cfg;
    cfg.conversion = conversion_from_name(c.at("conversion").get<std::string>());
    cfg.hidden = c.at("hidden").get<std::size_t>();
    cfg.seed = c.at("seed").get<std::uint64_t>();
    mlp.emplace(cfg);
    mlp->steps = m.at("steps").get<std::uint64_t>();
    return mlp->all_parameters();
  });
  return std::move(*mlp);
}

}  // namespace kexnet
