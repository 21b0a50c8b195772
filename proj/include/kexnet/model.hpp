#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kexnet/checkpoint.hpp"
#include "kexnet/protocol.hpp"
#include "kexnet/rng.hpp"
#include "kexnet/tensor.hpp"

namespace kexnet {

/// Fixed node vocabulary: every atom label (per role and fresh index),
/// function symbol and behavior symbol.
std::size_t vocabulary_size();
/// Row of the embedding table for a label. Instance tags are ignored.
std::size_t vocabulary_index(const NodeLabel& label);

class UnknownLabel : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  std::size_t hidden = 128;  // n
  std::size_t embed = 128;   // d
  /// Adds a sinusoidal offset for a node's position among its siblings.
  bool positional = false;
  bool train_embeddings = true;
  double embed_sigma = 1.0;
  std::uint64_t seed = 0;
};

/// Child-Sum Tree-LSTM over each message, LSTM over the message sequence,
/// linear layer and softmax. Class 0 is secure, class 1 insecure.
class Model {
 public:
  explicit Model(const ModelConfig& cfg);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;

  ModelConfig config;
  std::uint64_t steps = 0;

  Parameter embedding;  // V x d
  // Tree-LSTM: input, output and candidate stacked in W_iou / U_iou / b_iou.
  Parameter tree_w_iou, tree_u_iou, tree_b_iou;
  Parameter tree_w_f, tree_u_f, tree_b_f;
  // Sequence LSTM: input, forget, output and candidate stacked.
  Parameter lstm_w, lstm_u, lstm_b;
  Parameter out_w, out_b;

  /// Every parameter in checkpoint order.
  std::vector<Parameter*> all_parameters();
  std::vector<const Parameter*> all_parameters() const;
  /// Parameters updated by training.
  std::vector<Parameter*> trainable();
};

struct HiddenState {
  Var h, c;
};

/// Root (h, c) of one message tree.
HiddenState encode_message(Tape& tape, Model& model, const Term& message);
HiddenState encode_message(Tape& tape, const Model& model, const Term& message);

/// Final LSTM hidden state over the message vectors.
Var encode_protocol(Tape& tape, Model& model, const Protocol& p);
Var encode_protocol(Tape& tape, const Model& model, const Protocol& p);

/// softmax(A h_T + b) as a tape node.
Var class_probabilities(Tape& tape, Model& model, const Protocol& p);
Var class_probabilities(Tape& tape, const Model& model, const Protocol& p);

/// (P(secure), P(insecure)). `ops`, if given, receives the scalar
/// arithmetic operation count of the forward pass.
std::array<double, 2> classify(const Model& model, const Protocol& p, std::uint64_t* ops = nullptr);

struct Example {
  Protocol protocol;
  int label = 0;  // 0 secure, 1 insecure
};

class EmptyDataset : public std::invalid_argument {
 public:
  EmptyDataset() : std::invalid_argument("training set is empty") {}
};
class SingleClassDataset : public std::invalid_argument {
 public:
  SingleClassDataset() : std::invalid_argument("training set has only one label") {}
};

/// Throws EmptyDataset, SingleClassDataset, or invalid_argument for a label
/// outside {0, 1}.
void check_dataset(const std::vector<Example>& data);

/// Fixed-size batches from a reshuffle of the data at every pass.
class BatchStream {
 public:
  BatchStream(const std::vector<Example>& data, std::size_t batch, std::uint64_t seed);
  const std::vector<const Example*>& next();

 private:
  const std::vector<Example>& data_;
  std::size_t batch_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_;
  std::vector<const Example*> out_;
};

struct TrainConfig {
  std::size_t steps = 200;
  std::size_t batch = 100;
  RmsPropConfig optimizer;
  std::uint64_t seed = 0;
  ModelConfig model;
};

struct StepRecord {
  std::size_t step = 0;
  double loss = 0;  // mean cross-entropy of the batch before the update
};

/// Mean cross-entropy over shuffled batches, RMSprop updates. The example
/// order is reshuffled with the run seed at every pass over the data.
Model train(const std::vector<Example>& data, const TrainConfig& cfg,
            const std::function<void(const StepRecord&)>& on_step = {});

/// One optimisation step on the given examples; returns the batch loss.
double train_step(Model& model, const std::vector<const Example*>& batch, RmsPropState& state,
                  const RmsPropConfig& opt);

struct Metrics {
  double accuracy = 0;
  /// confusion[true][predicted]
  std::array<std::array<std::size_t, 2>, 2> confusion{};
  std::vector<double> seconds;  // per-protocol classify time
  std::vector<int> predicted;
};

Metrics evaluate(const Model& model, const std::vector<Example>& data);

inline constexpr const char* kTreeArch = "tree-lstm";

/// Manifest "arch" is kTreeArch.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace kexnet
