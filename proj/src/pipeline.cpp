#include "kexnet/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>

#include "kexnet/hash.hpp"
#include "kexnet/labeling.hpp"
#include "kexnet/practical.hpp"

namespace kexnet {

namespace {

using nlohmann::json;

void allow_keys(const json& j, const char* where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw std::invalid_argument(std::string(where) + " must be an object");
  const std::set<std::string> ok(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items()) {
    if (!ok.count(k)) throw std::invalid_argument("unknown config key " + std::string(where) + "." + k);
  }
}

template <class T>
void read(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  try {
    allow_keys(j, "config",
               {"seed", "workers", "count", "generate", "oracle", "augment", "split", "train", "baselines", "out_dir"});
    read(j, "seed", c.seed);
    read(j, "workers", c.workers);
    read(j, "count", c.count);
    read(j, "out_dir", c.out_dir);
    if (j.contains("generate")) {
      const json& g = j["generate"];
      allow_keys(g, "generate", {"m_max", "c_max", "establishment_share", "depth_cap", "max_attempts"});
      read(g, "m_max", c.gen.m_max);
      read(g, "c_max", c.gen.c_max);
      read(g, "establishment_share", c.gen.establishment_share);
      read(g, "depth_cap", c.gen.depth_cap);
      read(g, "max_attempts", c.gen.max_attempts);
    }
    if (j.contains("oracle")) {
      const json& o = j["oracle"];
      allow_keys(o, "oracle",
                 {"session_bound", "depth_bound", "time_budget_ms", "max_states", "max_candidates",
                  "max_var_candidates"});
      read(o, "session_bound", c.oracle.session_bound);
      read(o, "depth_bound", c.oracle.depth_bound);
      read(o, "time_budget_ms", c.oracle.time_budget_ms);
      read(o, "max_states", c.oracle.max_states);
      read(o, "max_candidates", c.oracle.max_candidates);
      read(o, "max_var_candidates", c.oracle.max_var_candidates);
    }
    if (j.contains("augment")) {
      const json& a = j["augment"];
      allow_keys(a, "augment", {"per_item", "kinds"});
      read(a, "per_item", c.per_item);
      if (a.contains("kinds")) {
        c.kinds.clear();
        for (const auto& k : a["kinds"]) c.kinds.push_back(augment_from_name(k.get<std::string>()));
      }
    }
    if (j.contains("split")) {
      const json& s = j["split"];
      allow_keys(s, "split", {"test_per_class", "balance"});
      read(s, "test_per_class", c.test_per_class);
      read(s, "balance", c.balance);
    }
    if (j.contains("train")) {
      const json& t = j["train"];
      allow_keys(t, "train",
                 {"steps", "batch", "lr", "decay", "eps", "hidden", "embed", "positional", "train_embeddings",
                  "embed_sigma"});
      read(t, "steps", c.train.steps);
      read(t, "batch", c.train.batch);
      read(t, "lr", c.train.optimizer.lr);
      read(t, "decay", c.train.optimizer.decay);
      read(t, "eps", c.train.optimizer.eps);
      read(t, "hidden", c.train.model.hidden);
      read(t, "embed", c.train.model.embed);
      read(t, "positional", c.train.model.positional);
      read(t, "train_embeddings", c.train.model.train_embeddings);
      read(t, "embed_sigma", c.train.model.embed_sigma);
    }
    if (j.contains("baselines")) {
      c.baselines.clear();
      for (const auto& b : j["baselines"]) c.baselines.push_back(conversion_from_name(b.get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("bad config: ") + e.what());
  }
  check_config(c.gen);
  check_config(c.oracle);
  if (c.per_item < 0) throw std::invalid_argument("augment.per_item must be >= 0");
  if (c.train.batch == 0) throw std::invalid_argument("train.batch must be positive");
  return c;
}

json run_config_to_json(const RunConfig& c) {
  json kinds = json::array();
  for (AugmentKind k : c.kinds) kinds.push_back(augment_name(k));
  json baselines = json::array();
  for (Conversion b : c.baselines) baselines.push_back(conversion_name(b));
  return {{"seed", c.seed},
          {"workers", c.workers},
          {"count", c.count},
          {"generate",
           {{"m_max", c.gen.m_max},
            {"c_max", c.gen.c_max},
            {"establishment_share", c.gen.establishment_share},
            {"depth_cap", c.gen.depth_cap},
            {"max_attempts", c.gen.max_attempts}}},
          {"oracle",
           {{"session_bound", c.oracle.session_bound},
            {"depth_bound", c.oracle.depth_bound},
            {"time_budget_ms", c.oracle.time_budget_ms},
            {"max_states", c.oracle.max_states},
            {"max_candidates", c.oracle.max_candidates},
            {"max_var_candidates", c.oracle.max_var_candidates}}},
          {"augment", {{"per_item", c.per_item}, {"kinds", kinds}}},
          {"split", {{"test_per_class", c.test_per_class}, {"balance", c.balance}}},
          {"train",
           {{"steps", c.train.steps},
            {"batch", c.train.batch},
            {"lr", c.train.optimizer.lr},
            {"decay", c.train.optimizer.decay},
            {"eps", c.train.optimizer.eps},
            {"hidden", c.train.model.hidden},
            {"embed", c.train.model.embed},
            {"positional", c.train.model.positional},
            {"train_embeddings", c.train.model.train_embeddings},
            {"embed_sigma", c.train.model.embed_sigma}}},
          {"baselines", baselines},
          {"out_dir", c.out_dir}};
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path);
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
  return run_config_from_json(j);
}

std::uint64_t stage_seed(const RunConfig& cfg, std::string_view stage) { return Rng(cfg.seed).split(fnv1a64(stage)).seed(); }

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::uint64_t h = fnv1a64("");
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    h = fnv1a64(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
  }
  return hex64(h);
}

std::vector<Example> examples_from_records(const std::vector<ProtocolRecord>& records) {
  std::vector<Example> out;
  for (const auto& r : records) {
    if (!r.label || *r.label == Verdict::Unknown) continue;
    out.push_back(Example{r.protocol, *r.label == Verdict::Insecure ? 1 : 0});
  }
  return out;
}

std::vector<TimingRow> bench_time(const Model& model, const std::vector<Protocol>& ps, std::size_t warmup,
                                  std::size_t repeats) {
  for (std::size_t i = 0; i < std::min(warmup, ps.size()); ++i) classify(model, ps[i]);
  std::vector<TimingRow> rows(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    rows[i].size = protocol_size(ps[i]);
    rows[i].seconds = INFINITY;
  }
  // Each round visits the protocols in a fresh order so that a burst of
  // machine noise does not land on one size range.
  std::vector<std::size_t> order(ps.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(0x7157);
  for (std::size_t r = 0; r < std::max<std::size_t>(repeats, 1); ++r) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t i : order) {
      const auto t0 = std::chrono::steady_clock::now();
      classify(model, ps[i], &rows[i].ops);
      const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      rows[i].seconds = std::min(rows[i].seconds, dt);
    }
  }
  return rows;
}

void write_timing_csv(const std::string& path, const std::vector<TimingRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "protocol_size,ops,seconds\n";
  out.precision(9);
  for (const auto& r : rows) out << r.size << ',' << r.ops << ',' << r.seconds << '\n';
}

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("linear_fit: length mismatch");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0)) throw std::invalid_argument("linear_fit: needs two distinct x values");
  LinearFit f;
  f.n = x.size();
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r = syy > 0 ? sxy / std::sqrt(sxx * syy) : 1.0;
  return f;
}

namespace {

using Clock = std::chrono::steady_clock;

json class_counts(const std::vector<ProtocolRecord>& rs) {
  std::size_t s = 0, i = 0, u = 0;
  for (const auto& r : rs) {
    if (!r.label || *r.label == Verdict::Unknown)
      ++u;
    else
      (*r.label == Verdict::Secure ? s : i) += 1;
  }
  return {{"total", rs.size()}, {"secure", s}, {"insecure", i}, {"unknown", u}};
}

json metrics_json(const Metrics& m) {
  return {{"accuracy", m.accuracy},
          {"confusion", {{m.confusion[0][0], m.confusion[0][1]}, {m.confusion[1][0], m.confusion[1][1]}}}};
}

template <class F>
auto run_stage(const char* name, json& seconds, const std::function<void(const std::string&)>& log, F&& f) {
  if (log) log(std::string("stage ") + name);
  const auto t0 = Clock::now();
  try {
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      seconds[name] = std::chrono::duration<double>(Clock::now() - t0).count();
    } else {
      auto r = f();
      seconds[name] = std::chrono::duration<double>(Clock::now() - t0).count();
      return r;
    }
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace

json pipeline_run(const RunConfig& cfg, const std::function<void(const std::string&)>& log) {
  namespace fs = std::filesystem;
  json report;
  json seconds = json::object();
  json files = json::object();
  const fs::path dir(cfg.out_dir);
  auto path = [&](const char* name) { return (dir / name).string(); };
  auto note_file = [&](const char* key, const std::string& p, std::size_t records) {
    files[key] = {{"path", p}, {"fnv1a64", file_hash(p)}, {"records", records}};
  };

  run_stage("setup", seconds, log, [&] {
    fs::create_directories(dir);
    std::ofstream(path("config.json")) << run_config_to_json(cfg).dump(2) << '\n';
  });

  std::vector<ProtocolRecord> corpus = run_stage("generate", seconds, log, [&] {
    GenConfig g = cfg.gen;
    g.seed = cfg.seed;
    std::vector<ProtocolRecord> rs;
    for (Protocol& p : generate_corpus(g, cfg.count, cfg.workers)) {
      ProtocolRecord r;
      r.protocol = std::move(p);
      r.origin = "random";
      rs.push_back(std::move(r));
    }
    write_records(path("corpus.pl"), rs);
    note_file("corpus", path("corpus.pl"), rs.size());
    return rs;
  });

  run_stage("label", seconds, log, [&] {
    std::vector<Protocol> ps;
    ps.reserve(corpus.size());
    for (const auto& r : corpus) ps.push_back(r.protocol);
    const auto labels = label_corpus(ps, cfg.oracle, cfg.workers);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      corpus[i].label = labels[i].verdict;
      corpus[i].provenance = provenance_string(labels[i]);
    }
    write_records(path("labeled.pl"), corpus);
    note_file("labeled", path("labeled.pl"), corpus.size());
    report["counts"]["labeled"] = class_counts(corpus);
  });

  std::vector<ProtocolRecord> test;
  std::vector<Protocol> secure_rest;
  run_stage("split", seconds, log, [&] {
    std::size_t taken[2] = {0, 0};
    for (const auto& r : corpus) {
      if (*r.label == Verdict::Unknown) continue;
      const int c = *r.label == Verdict::Insecure ? 1 : 0;
      if (taken[c] < cfg.test_per_class) {
        ++taken[c];
        test.push_back(r);
      } else if (c == 0) {
        secure_rest.push_back(r.protocol);
      }
    }
    if (taken[0] < cfg.test_per_class || taken[1] < cfg.test_per_class)
      throw std::runtime_error("not enough labeled protocols for a balanced test set of " +
                               std::to_string(2 * cfg.test_per_class));
    write_records(path("test.pl"), test);
    note_file("test", path("test.pl"), test.size());
    report["counts"]["test"] = class_counts(test);
  });

  std::vector<ProtocolRecord> train_set = run_stage("augment", seconds, log, [&] {
    AugmentConfig a;
    a.per_item = cfg.per_item;
    a.seed = stage_seed(cfg, "augment");
    a.kinds = cfg.kinds;
    a.oracle = cfg.oracle;
    a.workers = cfg.workers;
    std::vector<ProtocolRecord> rs;
    std::size_t per_kind[std::size(kAugmentKinds)] = {};
    for (auto& ar : augment_corpus(secure_rest, a)) {
      ProtocolRecord r;
      r.protocol = std::move(ar.protocol);
      r.label = ar.label.verdict;
      r.provenance = provenance_string(ar.label);
      r.origin = ar.kind ? std::string(augment_name(*ar.kind)) : "random";
      if (ar.kind) ++per_kind[static_cast<std::size_t>(*ar.kind)];
      rs.push_back(std::move(r));
    }
    write_records(path("augmented.pl"), rs);
    note_file("augmented", path("augmented.pl"), rs.size());
    json kinds;
    for (AugmentKind k : kAugmentKinds) kinds[std::string(augment_name(k))] = per_kind[static_cast<std::size_t>(k)];
    report["counts"]["augmented_by_kind"] = kinds;
    if (cfg.balance) {
      std::size_t n[2] = {0, 0};
      for (const auto& r : rs) ++n[*r.label == Verdict::Insecure];
      const std::size_t keep = std::min(n[0], n[1]);
      std::size_t seen[2] = {0, 0};
      std::vector<ProtocolRecord> kept;
      for (auto& r : rs) {
        const int c = *r.label == Verdict::Insecure;
        if (seen[c]++ < keep) kept.push_back(std::move(r));
      }
      rs = std::move(kept);
    }
    write_records(path("train.pl"), rs);
    note_file("train", path("train.pl"), rs.size());
    report["counts"]["train"] = class_counts(rs);
    return rs;
  });

  const std::vector<ProtocolRecord> practical = practical_records();
  write_records(path("practical.pl"), practical);
  note_file("practical", path("practical.pl"), practical.size());
  report["counts"]["practical"] = class_counts(practical);

  const std::vector<Example> train_ex = examples_from_records(train_set);
  const std::vector<Example> test_ex = examples_from_records(test);
  const std::vector<Example> practical_ex = examples_from_records(practical);

  json rows = json::array();
  Model model = run_stage("train", seconds, log, [&] {
    TrainConfig t = cfg.train;
    t.seed = stage_seed(cfg, "train");
    std::ofstream loss(path("loss.csv"));
    loss << "step,loss\n";
    loss.precision(17);
    Model m = train(train_ex, t, [&](const StepRecord& r) { loss << r.step << ',' << r.loss << '\n'; });
    save_checkpoint(m, path("model.ckpt"));
    files["model"] = {{"path", path("model.ckpt")}, {"fnv1a64", file_hash(path("model.ckpt"))}};
    return m;
  });

  run_stage("evaluate", seconds, log, [&] {
    const Metrics r = evaluate(model, test_ex), pr = evaluate(model, practical_ex);
    rows.push_back({{"conversion", "tree"},
                    {"model", "Tree-LSTM + LSTM"},
                    {"random", metrics_json(r)},
                    {"practical", metrics_json(pr)}});
    for (const auto& e : practical_corpus()) {
      if (e.number != "4.15") continue;
      const auto ktm4 = classify(model, e.protocol);
      report["ktm4"] = {{"p_secure", ktm4[0]}, {"p_insecure", ktm4[1]}};
    }
  });

  run_stage("baselines", seconds, log, [&] {
    for (Conversion c : cfg.baselines) {
      MlpTrainConfig t;
      t.steps = cfg.train.steps;
      t.batch = cfg.train.batch;
      t.optimizer = cfg.train.optimizer;
      t.seed = stage_seed(cfg, "train");
      t.mlp.conversion = c;
      t.mlp.hidden = cfg.train.model.hidden;
      Mlp m = train_mlp(train_ex, t);
      const std::string name = "mlp_" + std::string(conversion_name(c)) + ".ckpt";
      save_checkpoint(m, path(name.c_str()));
      rows.push_back({{"conversion", conversion_name(c)},
                      {"model", "MLP"},
                      {"random", metrics_json(evaluate(m, test_ex))},
                      {"practical", metrics_json(evaluate(m, practical_ex))}});
    }
  });
  report["accuracy"] = rows;

  run_stage("bench", seconds, log, [&] {
    std::vector<Protocol> ps;
    for (const auto& e : test_ex) ps.push_back(e.protocol);
    const auto timing = bench_time(model, ps);
    write_timing_csv(path("timing.csv"), timing);
    if (timing.size() >= 2) {
      std::vector<double> x, t, o;
      for (const auto& r : timing) {
        x.push_back(static_cast<double>(r.size));
        t.push_back(r.seconds);
        o.push_back(static_cast<double>(r.ops));
      }
      try {
        const LinearFit ft = linear_fit(x, t), fo = linear_fit(x, o);
        report["timing"] = {{"seconds_per_node", ft.slope}, {"intercept", ft.intercept}, {"r", ft.r},
                            {"ops_per_node", fo.slope}, {"ops_r", fo.r}, {"n", ft.n}};
      } catch (const std::invalid_argument&) {
      }
    }
  });

  report["counts"]["raw"] = cfg.count;
  report["train_size"] = train_ex.size();
  report["files"] = files;
  report["seconds"] = seconds;
  report["config"] = run_config_to_json(cfg);
  std::ofstream(path("report.json")) << report.dump(2) << '\n';
  return report;
}

}  // namespace kexnet
