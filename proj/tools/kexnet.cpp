// kexnet command-line front end. Exit codes: 0 success, 1 usage, 2 stage failure.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <variant>

#include "kexnet/labeling.hpp"
#include "kexnet/pipeline.hpp"
#include "kexnet/practical.hpp"

using namespace kexnet;
using nlohmann::json;

namespace {

class Usage : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using AnyModel = std::variant<Model, Mlp>;

AnyModel load_any(const std::string& path) {
  const json m = read_checkpoint_manifest(path);
  const std::string arch = m.value("arch", "");
  if (arch == kTreeArch) return load_checkpoint(path);
  if (arch == kMlpArch) return load_mlp_checkpoint(path);
  throw CheckpointError(path + ": unknown arch '" + arch + "'");
}

std::array<double, 2> classify_any(const AnyModel& m, const Protocol& p) {
  return std::visit([&](const auto& x) { return classify(x, p); }, m);
}

Metrics evaluate_any(const AnyModel& m, const std::vector<Example>& data) {
  return std::visit([&](const auto& x) { return evaluate(x, data); }, m);
}

std::vector<ProtocolRecord> read_input(const std::string& path) {
  if (!std::filesystem::exists(path)) throw Usage("no such file: " + path);
  return read_records(path);
}

void add_oracle_options(CLI::App* cmd, OracleConfig& o) {
  cmd->add_option("--session-bound", o.session_bound, "Sessions per role in the active search")->capture_default_str();
  cmd->add_option("--time-budget-ms", o.time_budget_ms, "Per-protocol oracle budget")->capture_default_str();
  cmd->add_option("--max-states", o.max_states, "State cap of the active search")->capture_default_str();
}

void add_train_options(CLI::App* cmd, TrainConfig& t) {
  cmd->add_option("--steps", t.steps)->capture_default_str();
  cmd->add_option("--batch", t.batch)->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--lr", t.optimizer.lr)->capture_default_str();
  cmd->add_option("--hidden", t.model.hidden)->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--embed", t.model.embed)->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--seed", t.seed)->capture_default_str();
  cmd->add_flag("--positional", t.model.positional, "Sibling-position offsets in the tree encoder");
}

json metrics_json(const Metrics& m) {
  return {{"accuracy", m.accuracy},
          {"confusion", {{m.confusion[0][0], m.confusion[0][1]}, {m.confusion[1][0], m.confusion[1][1]}}},
          {"n", m.predicted.size()}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Key-exchange protocol generation, labeling and neural verification"};
  app.require_subcommand(1);

  // generate
  GenConfig gen;
  std::size_t count = 1000;
  unsigned workers = 0;
  std::string out;
  auto* c_gen = app.add_subcommand("generate", "Draw random protocols");
  c_gen->add_option("--count,-n", count)->capture_default_str();
  c_gen->add_option("--seed", gen.seed)->capture_default_str();
  c_gen->add_option("--m-max", gen.m_max)->capture_default_str();
  c_gen->add_option("--c-max", gen.c_max)->capture_default_str();
  c_gen->add_option("--establishment-share", gen.establishment_share)->capture_default_str();
  c_gen->add_option("--workers", workers, "0: all hardware threads")->capture_default_str();
  c_gen->add_option("--out,-o", out)->required();

  // label
  OracleConfig oracle;
  std::string in;
  bool cross_check = false;
  auto* c_label = app.add_subcommand("label", "Label protocols with the symbolic oracle");
  c_label->add_option("--in,-i", in)->required();
  c_label->add_option("--out,-o", out)->required();
  c_label->add_option("--workers", workers)->capture_default_str();
  c_label->add_flag("--cross-check", cross_check, "Also run an installed proverif and report disagreements");
  add_oracle_options(c_label, oracle);

  // augment
  AugmentConfig aug;
  std::vector<std::string> kinds;
  auto* c_aug = app.add_subcommand("augment", "Add insecure variants of the secure protocols");
  c_aug->add_option("--in,-i", in, "Labeled records")->required();
  c_aug->add_option("--out,-o", out)->required();
  c_aug->add_option("--per-item", aug.per_item)->capture_default_str();
  c_aug->add_option("--seed", aug.seed)->capture_default_str();
  c_aug->add_option("--kinds", kinds, "leak_secret, weaken_encryption, weaken_session_key");
  c_aug->add_option("--workers", workers)->capture_default_str();
  add_oracle_options(c_aug, aug.oracle);

  // train
  TrainConfig tc;
  std::string arch = "tree", conversion = "tlm", loss_csv;
  auto* c_train = app.add_subcommand("train", "Train a classifier on labeled records");
  c_train->add_option("--in,-i", in)->required();
  c_train->add_option("--out,-o", out, "Checkpoint path")->required();
  c_train->add_option("--arch", arch)->check(CLI::IsMember({"tree", "mlp"}))->capture_default_str();
  c_train->add_option("--conversion", conversion, "MLP input conversion")
      ->check(CLI::IsMember({"tlm", "counts"}))
      ->capture_default_str();
  c_train->add_option("--loss-csv", loss_csv);
  add_train_options(c_train, tc);

  // eval
  std::string model_path, timing_csv;
  auto* c_eval = app.add_subcommand("eval", "Accuracy and confusion matrix on labeled records");
  c_eval->add_option("--model,-m", model_path)->required();
  c_eval->add_option("--in,-i", in)->required();
  c_eval->add_option("--timing-csv", timing_csv, "Per-protocol classify times (tree model only)");

  // verify
  std::string protocol_text;
  auto* c_verify = app.add_subcommand("verify", "Classify one protocol");
  c_verify->add_option("--model,-m", model_path)->required();
  auto* v_text = c_verify->add_option("--protocol,-p", protocol_text, "Messages, one per line");
  auto* v_file = c_verify->add_option("--file,-f", in, "File with one message per line");
  v_text->excludes(v_file);

  // emit-proverif
  std::string out_dir;
  auto* c_emit = app.add_subcommand("emit-proverif", "Write a verifier script per record");
  c_emit->add_option("--in,-i", in)->required();
  c_emit->add_option("--out-dir,-o", out_dir)->required();

  // bench
  auto* c_bench = app.add_subcommand("bench", "Classify time against protocol size");
  c_bench->add_option("--model,-m", model_path)->required();
  c_bench->add_option("--in,-i", in)->required();
  c_bench->add_option("--out,-o", out, "CSV path")->required();

  // pipeline
  std::string config_path;
  auto* c_pipe = app.add_subcommand("pipeline", "Run every stage from a JSON config");
  c_pipe->add_option("--config,-c", config_path)->check(CLI::ExistingFile);
  c_pipe->add_option("--out-dir,-o", out_dir, "Overrides out_dir of the config");
  bool print_config = false;
  c_pipe->add_flag("--print-config", print_config, "Print the effective config and exit");

  // practical
  auto* c_prac = app.add_subcommand("practical", "Export the hand-encoded textbook protocols");
  c_prac->add_option("--out,-o", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (c_gen->parsed()) {
      check_config(gen);
      std::vector<ProtocolRecord> rs;
      for (Protocol& p : generate_corpus(gen, count, workers)) {
        ProtocolRecord r;
        r.protocol = std::move(p);
        r.origin = "random";
        rs.push_back(std::move(r));
      }
      write_records(out, rs);
      std::cerr << "generated " << rs.size() << " protocols\n";
    } else if (c_label->parsed()) {
      check_config(oracle);
      auto rs = read_input(in);
      std::vector<Protocol> ps;
      for (const auto& r : rs) ps.push_back(r.protocol);
      const auto labels = label_corpus(ps, oracle, workers);
      std::size_t n[3] = {0, 0, 0}, checked = 0, disagree = 0;
      bool have_external = true;
      for (std::size_t i = 0; i < rs.size(); ++i) {
        rs[i].label = labels[i].verdict;
        rs[i].provenance = provenance_string(labels[i]);
        ++n[static_cast<int>(labels[i].verdict)];
        if (cross_check && have_external) {
          const ExternalResult ext = run_external_verifier(emit_proverif(rs[i].protocol));
          if (!ext.available) {
            have_external = false;
            std::cerr << "cross-check skipped: proverif not found on PATH\n";
          } else if (ext.verdict) {
            ++checked;
            if (*ext.verdict != labels[i].verdict && labels[i].verdict != Verdict::Unknown) {
              ++disagree;
              std::cerr << "disagreement on record " << i << ": oracle " << verdict_name(labels[i].verdict)
                        << ", proverif " << verdict_name(*ext.verdict) << '\n';
            }
          }
        }
      }
      write_records(out, rs);
      std::cerr << "secure " << n[0] << ", insecure " << n[1] << ", unknown " << n[2] << '\n';
      if (cross_check && have_external) std::cerr << "cross-checked " << checked << ", disagreements " << disagree << '\n';
    } else if (c_aug->parsed()) {
      check_config(aug.oracle);
      if (!kinds.empty()) {
        aug.kinds.clear();
        for (const auto& k : kinds) aug.kinds.push_back(augment_from_name(k));
      }
      aug.workers = workers;
      std::vector<Protocol> secure;
      for (const auto& r : read_input(in))
        if (r.label == Verdict::Secure) secure.push_back(r.protocol);
      std::vector<ProtocolRecord> rs;
      for (auto& a : augment_corpus(secure, aug)) {
        ProtocolRecord r;
        r.protocol = std::move(a.protocol);
        r.label = a.label.verdict;
        r.provenance = provenance_string(a.label);
        r.origin = a.kind ? std::string(augment_name(*a.kind)) : "random";
        rs.push_back(std::move(r));
      }
      write_records(out, rs);
      std::cerr << "wrote " << rs.size() << " records from " << secure.size() << " secure inputs\n";
    } else if (c_train->parsed()) {
      const auto data = examples_from_records(read_input(in));
      std::ofstream loss;
      if (!loss_csv.empty()) {
        loss.open(loss_csv);
        loss << "step,loss\n";
        loss.precision(17);
      }
      auto on_step = [&](const StepRecord& r) {
        if (loss.is_open()) loss << r.step << ',' << r.loss << '\n';
      };
      if (arch == "tree") {
        const Model m = train(data, tc, on_step);
        save_checkpoint(m, out);
        std::cerr << "train accuracy " << evaluate(m, data).accuracy << '\n';
      } else {
        MlpTrainConfig mc;
        mc.steps = tc.steps;
        mc.batch = tc.batch;
        mc.optimizer = tc.optimizer;
        mc.seed = tc.seed;
        mc.mlp.conversion = conversion_from_name(conversion);
        mc.mlp.hidden = tc.model.hidden;
        const Mlp m = train_mlp(data, mc, on_step);
        save_checkpoint(m, out);
        std::cerr << "train accuracy " << evaluate(m, data).accuracy << '\n';
      }
    } else if (c_eval->parsed()) {
      const AnyModel m = load_any(model_path);
      const auto data = examples_from_records(read_input(in));
      const Metrics r = evaluate_any(m, data);
      std::cout << metrics_json(r).dump() << '\n';
      if (!timing_csv.empty()) {
        const auto* tree = std::get_if<Model>(&m);
        if (!tree) throw Usage("--timing-csv needs a tree-lstm checkpoint");
        std::vector<Protocol> ps;
        for (const auto& e : data) ps.push_back(e.protocol);
        write_timing_csv(timing_csv, bench_time(*tree, ps));
      }
    } else if (c_verify->parsed()) {
      if (protocol_text.empty() && in.empty()) throw Usage("verify needs --protocol or --file");
      if (!in.empty()) {
        std::ifstream f(in);
        if (!f) throw Usage("no such file: " + in);
        std::stringstream ss;
        ss << f.rdbuf();
        protocol_text = ss.str();
      }
      Protocol p;
      try {
        p = parse_protocol_text(protocol_text);
      } catch (const ParseError& e) {
        throw Usage(std::string("cannot parse protocol: ") + e.what());
      }
      const auto problems = validate_protocol(p);
      for (const auto& msg : problems) std::cerr << "warning: " << msg << '\n';
      const auto probs = classify_any(load_any(model_path), p);
      const bool insecure = probs[1] > probs[0];
      std::cout << (insecure ? "insecure" : "secure") << ' ' << (insecure ? probs[1] : probs[0]) << '\n';
    } else if (c_emit->parsed()) {
      std::filesystem::create_directories(out_dir);
      const auto rs = read_input(in);
      std::size_t written = 0;
      for (std::size_t i = 0; i < rs.size(); ++i) {
        try {
          const std::string script = emit_proverif(rs[i].protocol);
          char name[32];
          std::snprintf(name, sizeof name, "p%06zu.pv", i);
          std::ofstream(std::filesystem::path(out_dir) / name) << script;
          ++written;
        } catch (const UnsupportedConstruct& e) {
          std::cerr << "record " << i << ": " << e.what() << '\n';
        }
      }
      std::cerr << "wrote " << written << " scripts\n";
    } else if (c_bench->parsed()) {
      const AnyModel m = load_any(model_path);
      const auto* tree = std::get_if<Model>(&m);
      if (!tree) throw Usage("bench needs a tree-lstm checkpoint");
      std::vector<Protocol> ps;
      for (const auto& r : read_input(in)) ps.push_back(r.protocol);
      const auto rows = bench_time(*tree, ps);
      write_timing_csv(out, rows);
      if (rows.size() >= 2) {
        std::vector<double> x, t;
        for (const auto& r : rows) {
          x.push_back(static_cast<double>(r.size));
          t.push_back(r.seconds);
        }
        try {
          const LinearFit f = linear_fit(x, t);
          std::cout << json{{"slope", f.slope}, {"intercept", f.intercept}, {"r", f.r}, {"n", f.n}}.dump() << '\n';
        } catch (const std::invalid_argument&) {
          std::cerr << "all protocols have the same size; no fit\n";
        }
      }
    } else if (c_pipe->parsed()) {
      RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      if (print_config) {
        std::cout << run_config_to_json(cfg).dump(2) << '\n';
        return 0;
      }
      const json report = pipeline_run(cfg, [](const std::string& s) { std::cerr << s << '\n'; });
      std::cout << json{{"accuracy", report["accuracy"]}, {"train_size", report["train_size"]}}.dump(2) << '\n';
    } else if (c_prac->parsed()) {
      write_records(out, practical_records());
      for (const auto& u : practical_unsupported())
        std::cerr << "unsupported " << u.number << ' ' << u.name << ": " << u.reason << '\n';
    }
  } catch (const Usage& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const StageError& e) {
    std::cerr << "stage " << e.stage() << " failed: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
