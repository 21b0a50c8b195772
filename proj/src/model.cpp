#include "kexnet/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <nlohmann/json.hpp>
#include <type_traits>
#include <utility>

#include "kexnet/hash.hpp"

namespace kexnet {

namespace {

constexpr Symbol kFunctions[] = {Symbol::Senc, Symbol::Aenc, Symbol::Sign, Symbol::Hash, Symbol::Exp, Symbol::Tuple};
constexpr Symbol kBehaviors[] = {Symbol::SendIR, Symbol::SendRI, Symbol::AcceptI, Symbol::AcceptR};

// Atom rows: ID, lsk, pk, T for I/R/E (12), esk for I/R/E x fresh 1..2 (6),
// K and K_E (2), SK (1).
constexpr std::size_t kAtomRows = 21;

std::size_t party_offset(Role r) {
  switch (r) {
    case Role::I:
      return 0;
    case Role::R:
      return 1;
    case Role::E:
      return 2;
    default:
      throw UnknownLabel("atom requires a party tag");
  }
}

}  // namespace

std::size_t vocabulary_size() { return kAtomRows + std::size(kFunctions) + std::size(kBehaviors); }

std::size_t vocabulary_index(const NodeLabel& l) {
  switch (l.symbol) {
    case Symbol::ID:
      return 0 + party_offset(l.role);
    case Symbol::Lsk:
      return 3 + party_offset(l.role);
    case Symbol::Pk:
      return 6 + party_offset(l.role);
    case Symbol::T:
      return 9 + party_offset(l.role);
    case Symbol::Esk:
      if (l.fresh < 1 || l.fresh > 2) throw UnknownLabel("esk fresh index out of vocabulary");
      return 12 + party_offset(l.role) * 2 + (l.fresh - 1u);
    case Symbol::K:
      return l.role == Role::E ? 19 : 18;
    case Symbol::SK:
      return 20;
    case Symbol::Var:
      throw UnknownLabel("pattern variable has no embedding");
    default:
      break;
  }
  for (std::size_t i = 0; i < std::size(kFunctions); ++i) {
    if (kFunctions[i] == l.symbol) return kAtomRows + i;
  }
  for (std::size_t i = 0; i < std::size(kBehaviors); ++i) {
    if (kBehaviors[i] == l.symbol) return kAtomRows + std::size(kFunctions) + i;
  }
  throw UnknownLabel("label outside the vocabulary");
}

namespace {

Tensor glorot(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t({rows, cols});
  for (double& v : t.data) v = (2.0 * rng.uniform() - 1.0) * limit;
  return t;
}

void check_model_config(const ModelConfig& c) {
  if (c.hidden == 0 || c.embed == 0) throw std::invalid_argument("hidden and embed widths must be positive");
  if (!(c.embed_sigma > 0) || !std::isfinite(c.embed_sigma)) throw std::invalid_argument("embed_sigma must be positive");
}

}  // namespace

Model::Model(const ModelConfig& cfg) : config(cfg) {
  check_model_config(cfg);
  const std::size_t n = cfg.hidden, d = cfg.embed, V = vocabulary_size();
  Rng rng(cfg.seed);

  Tensor emb({V, d});
  for (double& v : emb.data) v = cfg.embed_sigma * rng.normal();
  embedding = Parameter("embedding", std::move(emb));

  tree_w_iou = Parameter("tree.w_iou", glorot(3 * n, d, rng));
  tree_u_iou = Parameter("tree.u_iou", glorot(3 * n, n, rng));
  tree_b_iou = Parameter("tree.b_iou", Tensor({3 * n}));
  tree_w_f = Parameter("tree.w_f", glorot(n, d, rng));
  tree_u_f = Parameter("tree.u_f", glorot(n, n, rng));
  tree_b_f = Parameter("tree.b_f", Tensor({n}, 1.0));

  lstm_w = Parameter("lstm.w", glorot(4 * n, n, rng));
  lstm_u = Parameter("lstm.u", glorot(4 * n, n, rng));
  Tensor lb({4 * n});
  for (std::size_t i = n; i < 2 * n; ++i) lb[i] = 1.0;  // forget gate
  lstm_b = Parameter("lstm.b", std::move(lb));

  // Zero classifier: an untrained model predicts (0.5, 0.5).
  out_w = Parameter("out.w", Tensor({2, n}));
  out_b = Parameter("out.b", Tensor({2}));
}

std::vector<Parameter*> Model::all_parameters() {
  return {&embedding, &tree_w_iou, &tree_u_iou, &tree_b_iou, &tree_w_f, &tree_u_f, &tree_b_f,
          &lstm_w,    &lstm_u,     &lstm_b,     &out_w,      &out_b};
}

std::vector<const Parameter*> Model::all_parameters() const {
  auto ps = const_cast<Model*>(this)->all_parameters();
  return {ps.begin(), ps.end()};
}

std::vector<Parameter*> Model::trainable() {
  auto ps = all_parameters();
  if (!config.train_embeddings) ps.erase(ps.begin());
  return ps;
}

namespace {

Tensor positional_offset(std::size_t pos, std::size_t d) {
  Tensor t({d});
  for (std::size_t i = 0; i < d; ++i) {
    const double rate = std::pow(10000.0, static_cast<double>(i - i % 2) / static_cast<double>(d));
    const double a = static_cast<double>(pos) / rate;
    t[i] = i % 2 == 0 ? std::sin(a) : std::cos(a);
  }
  return t;
}

// M is Model (trainable leaves) or const Model (read-only leaves).
template <class M>
class Graph {
 public:
  Graph(Tape& tape, M& m) : t_(tape), m_(m), n_(m.config.hidden) {
    w_iou_ = t_.param(m.tree_w_iou);
    u_iou_ = t_.param(m.tree_u_iou);
    b_iou_ = t_.param(m.tree_b_iou);
    w_f_ = t_.param(m.tree_w_f);
    u_f_ = t_.param(m.tree_u_f);
    b_f_ = t_.param(m.tree_b_f);
    zero_ = t_.constant(Tensor({n_}));
  }

  HiddenState node(const Term& t, std::size_t pos) {
    std::vector<HiddenState> kids;
    kids.reserve(t.arity());
    for (std::size_t k = 0; k < t.arity(); ++k) kids.push_back(node(t.child(k), k));

    Var x = embed(t.label());
    if (m_.config.positional) x = t_.add(x, t_.constant(positional_offset(pos, m_.config.embed)));

    std::vector<Var> hs{zero_};
    for (const auto& k : kids) hs.push_back(k.h);
    const Var h_sum = t_.sum_list(hs);

    const Var iou = t_.add(t_.add(t_.matvec(w_iou_, x), t_.matvec(u_iou_, h_sum)), b_iou_);
    const Var i = t_.sigmoid(t_.slice(iou, 0, n_));
    const Var o = t_.sigmoid(t_.slice(iou, n_, n_));
    const Var u = t_.tanh(t_.slice(iou, 2 * n_, n_));

    std::vector<Var> cs{t_.mul(i, u)};
    if (!kids.empty()) {
      const Var fx = t_.add(t_.matvec(w_f_, x), b_f_);
      for (const auto& k : kids) {
        const Var f = t_.sigmoid(t_.add(fx, t_.matvec(u_f_, k.h)));
        cs.push_back(t_.mul(f, k.c));
      }
    }
    const Var c = t_.sum_list(cs);
    return {t_.mul(o, t_.tanh(c)), c};
  }

  Var sequence(const Protocol& p) {
    const Var w = t_.param(m_.lstm_w), u = t_.param(m_.lstm_u), b = t_.param(m_.lstm_b);
    Var h = zero_, c = zero_;
    for (const Term& msg : p.messages) {
      const Var x = node(msg, 0).h;
      const Var z = t_.add(t_.add(t_.matvec(w, x), t_.matvec(u, h)), b);
      const Var i = t_.sigmoid(t_.slice(z, 0, n_));
      const Var f = t_.sigmoid(t_.slice(z, n_, n_));
      const Var o = t_.sigmoid(t_.slice(z, 2 * n_, n_));
      const Var g = t_.tanh(t_.slice(z, 3 * n_, n_));
      c = t_.add(t_.mul(f, c), t_.mul(i, g));
      h = t_.mul(o, t_.tanh(c));
    }
    return h;
  }

  Var probabilities(const Protocol& p) {
    const Var h = sequence(p);
    return t_.softmax(t_.add(t_.matvec(t_.param(m_.out_w), h), t_.param(m_.out_b)));
  }

 private:
  Var embed(const NodeLabel& l) {
    const std::size_t r = vocabulary_index(l);
    if constexpr (!std::is_const_v<M>) {
      if (m_.config.train_embeddings) return t_.row(m_.embedding, r);
    }
    return t_.row(std::as_const(m_.embedding), r);
  }

  Tape& t_;
  M& m_;
  std::size_t n_;
  Var w_iou_, u_iou_, b_iou_, w_f_, u_f_, b_f_, zero_;
};

}  // namespace

HiddenState encode_message(Tape& tape, Model& model, const Term& message) {
  return Graph<Model>(tape, model).node(message, 0);
}
HiddenState encode_message(Tape& tape, const Model& model, const Term& message) {
  return Graph<const Model>(tape, model).node(message, 0);
}

Var encode_protocol(Tape& tape, Model& model, const Protocol& p) { return Graph<Model>(tape, model).sequence(p); }
Var encode_protocol(Tape& tape, const Model& model, const Protocol& p) {
  return Graph<const Model>(tape, model).sequence(p);
}

Var class_probabilities(Tape& tape, Model& model, const Protocol& p) {
  return Graph<Model>(tape, model).probabilities(p);
}
Var class_probabilities(Tape& tape, const Model& model, const Protocol& p) {
  return Graph<const Model>(tape, model).probabilities(p);
}

std::array<double, 2> classify(const Model& model, const Protocol& p, std::uint64_t* ops) {
  Tape tape;
  const Tensor& v = tape.value(class_probabilities(tape, model, p));
  if (ops) *ops = tape.ops;
  return {v[0], v[1]};
}

double train_step(Model& model, const std::vector<const Example*>& batch, RmsPropState& state,
                  const RmsPropConfig& opt) {
  if (batch.empty()) throw EmptyDataset();
  auto params = model.trainable();
  for (Parameter* p : params) p->zero_grad();
  if (!model.config.train_embeddings) model.embedding.zero_grad();
  const double scale = 1.0 / static_cast<double>(batch.size());
  double loss = 0;
  // One tape per example; gradients accumulate in a fixed order.
  for (const Example* ex : batch) {
    if (ex->label != 0 && ex->label != 1) throw std::invalid_argument("label must be 0 or 1");
    Tape tape;
    const Var ce = tape.cross_entropy(class_probabilities(tape, model, ex->protocol), static_cast<std::size_t>(ex->label));
    loss += tape.value(ce)[0];
    tape.backward(ce, scale);
  }
  rmsprop_step(params, state, opt);
  ++model.steps;
  return loss * scale;
}

void check_dataset(const std::vector<Example>& data) {
  if (data.empty()) throw EmptyDataset();
  bool seen[2] = {false, false};
  for (const Example& e : data) {
    if (e.label != 0 && e.label != 1) throw std::invalid_argument("label must be 0 or 1");
    seen[e.label] = true;
  }
  if (!seen[0] || !seen[1]) throw SingleClassDataset();
}

BatchStream::BatchStream(const std::vector<Example>& data, std::size_t batch, std::uint64_t seed)
    : data_(data), batch_(batch), rng_(Rng(seed).split(1)), order_(data.size()), cursor_(data.size()) {
  if (batch == 0) throw std::invalid_argument("batch must be positive");
}

const std::vector<const Example*>& BatchStream::next() {
  out_.clear();
  while (out_.size() < batch_ && out_.size() < data_.size()) {
    if (cursor_ == order_.size()) {
      for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
      rng_.shuffle(order_.begin(), order_.end());
      cursor_ = 0;
    }
    out_.push_back(&data_[order_[cursor_++]]);
  }
  return out_;
}

Model train(const std::vector<Example>& data, const TrainConfig& cfg,
            const std::function<void(const StepRecord&)>& on_step) {
  check_dataset(data);
  ModelConfig mc = cfg.model;
  mc.seed = cfg.seed;
  Model model(mc);
  RmsPropState state;
  BatchStream batches(data, cfg.batch, cfg.seed);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const double loss = train_step(model, batches.next(), state, cfg.optimizer);
    if (on_step) on_step(StepRecord{step, loss});
  }
  return model;
}

Metrics evaluate(const Model& model, const std::vector<Example>& data) {
  Metrics m;
  m.seconds.reserve(data.size());
  m.predicted.reserve(data.size());
  std::size_t correct = 0;
  for (const Example& e : data) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto probs = classify(model, e.protocol);
    const auto t1 = std::chrono::steady_clock::now();
    m.seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
    const int pred = probs[1] > probs[0] ? 1 : 0;
    m.predicted.push_back(pred);
    if (e.label == 0 || e.label == 1) ++m.confusion[static_cast<std::size_t>(e.label)][static_cast<std::size_t>(pred)];
    if (pred == e.label) ++correct;
  }
  m.accuracy = data.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(data.size());
  return m;
}

namespace {

nlohmann::json config_json(const ModelConfig& c) {
  return {{"hidden", c.hidden},
          {"embed", c.embed},
          {"positional", c.positional},
          {"train_embeddings", c.train_embeddings},
          {"embed_sigma", c.embed_sigma},
          {"seed", c.seed}};
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  const nlohmann::json cfg = config_json(model.config);
  write_checkpoint(path,
                   {{"arch", kTreeArch},
                    {"config", cfg},
                    {"config_hash", hex64(fnv1a64(cfg.dump()))},
                    {"steps", model.steps},
                    {"vocabulary", vocabulary_size()}},
                   model.all_parameters());
}

Model load_checkpoint(const std::string& path) {
  std::optional<Model> model;
  read_checkpoint(path, [&](const nlohmann::json& m) {
    if (m.at("arch").get<std::string>() != kTreeArch) throw CheckpointError("not a tree-lstm checkpoint");
    const auto& c = m.at("config");
    if (m.at("config_hash").get<std::string>() != hex64(fnv1a64(c.dump()))) throw CheckpointError("config hash mismatch");
    if (m.at("vocabulary").get<std::size_t>() != vocabulary_size()) throw CheckpointError("vocabulary size mismatch");
    ModelConfig cfg;
    cfg.hidden = c.at("hidden").get<std::size_t>();
    cfg.embed = c.at("embed").get<std::size_t>();
    cfg.positional = c.at("positional").get<bool>();
    cfg.train_embeddings = c.at("train_embeddings").get<bool>();
    cfg.embed_sigma = c.at("embed_sigma").get<double>();
    cfg.seed = c.at("seed").get<std::uint64_t>();
    model.emplace(cfg);
    model->steps = m.at("steps").get<std::uint64_t>();
    return model->all_parameters();
  });
  return std::move(*model);
}

}  // namespace kexnet
