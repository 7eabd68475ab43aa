#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "passforge/candidates.hpp"
#include "passforge/cli.hpp"
#include "passforge/coreset.hpp"
#include "passforge/error.hpp"
#include "passforge/evalcli.hpp"
#include "passforge/graphrep.hpp"
#include "passforge/train.hpp"

namespace passforge {

namespace {

using nlohmann::json;
using synthenv::ProgramRecord;

struct CliUsage : std::runtime_error {
  CliUsage(const std::string& what, std::string h) : std::runtime_error(what), help(std::move(h)) {}
  std::string help;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << text;
}

json read_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw DataError(path + ": " + e.what());
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// A corpus JSON file, or a generator config file describing one program.
std::vector<ProgramRecord> load_programs(const std::string& path) {
  const std::string text = read_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    try {
      return synthenv::corpus_from_json(json::parse(text));
    } catch (const json::parse_error& e) {
      throw DataError(path + ": " + e.what());
    }
  }
  const auto cfg = synthenv::parse_generator_config(text);
  return {{cfg, synthenv::generate_program(cfg.seed, cfg)}};
}

coreset::Coreset load_coreset(const std::string& path) {
  auto c = coreset::Coreset::from_json(read_json(path));
  if (c.sequences.empty() || c.sequences.size() != c.selected.size()) {
    throw DataError(path + ": coreset has no sequences (select with --candidates)");
  }
  return c;
}

std::vector<const train::Example*> pointers(const std::vector<train::Example>& ex,
                                            const std::vector<std::size_t>& idx) {
  std::vector<const train::Example*> out;
  for (auto i : idx) out.push_back(&ex.at(i));
  return out;
}

std::vector<const train::Example*> pointers(const std::vector<train::Example>& ex) {
  std::vector<const train::Example*> out;
  for (const auto& e : ex) out.push_back(&e);
  return out;
}

// Top-45 popularity from the rewards of training examples.
std::vector<double> example_popularity(const std::vector<const train::Example*>& ex) {
  std::vector<std::vector<double>> rows;
  for (const auto* e : ex) rows.push_back(e->values());
  const auto m = coreset::normalize_rows(coreset::RewardMatrix::from_rows(rows));
  std::vector<std::size_t> cols(m.cols);
  for (std::size_t j = 0; j < cols.size(); ++j) cols[j] = j;
  return evalcli::popularity(m, cols);
}

evalcli::EvalReport table_report(const std::string& method, const std::vector<const train::Example*>& ex,
                                 const std::vector<synthenv::PassSequence>& seqs, std::span<const double> scores,
                                 std::size_t budget) {
  evalcli::EvalReport rep{method, budget, {}};
  const auto plan = evalcli::infer(scores, seqs, budget);
  for (const auto* e : ex) {
    const auto r = evalcli::execute_plan(e->table, plan);
    rep.rows.push_back({e->program_id, e->family, e->table.initial, e->size_oz, r.best_size, r.passes_used});
  }
  return rep;
}

evalcli::EvalReport oracle_report(const std::vector<const train::Example*>& ex) {
  evalcli::EvalReport rep{"oracle", 0, {}};
  for (const auto* e : ex) {
    std::size_t best = e->table.initial, used = 0;
    for (std::size_t k = 0; k < e->table.traces.size(); ++k) {
      best = std::min(best, e->table.best_within(k, SIZE_MAX));
      used += e->table.traces[k].size() - 1;
    }
    rep.rows.push_back({e->program_id, e->family, e->table.initial, e->size_oz, best, used});
  }
  return rep;
}

void write_report(const evalcli::EvalReport& rep, const std::string& out, const std::string& csv) {
  write_file(out, rep.to_json().dump(2) + "\n");
  write_file(csv.empty() ? out + ".csv" : csv, rep.summary_csv());
}

struct TrainFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> temperature;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> budget;
  std::optional<std::string> objective;
  std::optional<std::string> encoder;
  std::optional<double> mixup;

  void add(CLI::App* app) {
    app->add_option("--config", config, "training config (key=value or JSON)");
    app->add_option("--seed", seed, "training seed");
    app->add_option("--temperature", temperature, "NVP temperature");
    app->add_option("--epochs", epochs, "epochs");
    app->add_option("--budget", budget, "pass budget for validation");
    app->add_option("--objective", objective, "nvp, bc or qvalue");
    app->add_option("--encoder", encoder, "gean or flat");
    app->add_option("--mixup", mixup, "graph mixup probability");
  }

  train::TrainConfig resolve() const {
    train::TrainConfig c = config.empty() ? train::TrainConfig{} : train::parse_train_config(read_file(config));
    if (seed) c.seed = *seed;
    if (temperature) c.temperature = *temperature;
    if (epochs) c.epochs = *epochs;
    if (budget) c.budget = *budget;
    if (objective) c.objective = gean::parse_head(*objective);
    if (encoder) c.encoder = gean::parse_encoder(*encoder);
    if (mixup) c.mixup = *mixup;
    c.validate();
    return c;
  }
};

struct Prepared {
  std::vector<ProgramRecord> corpus;
  coreset::Coreset core;
  train::Splits splits;
  graphrep::Vocabulary vocab;
  std::vector<train::Example> examples;
};

Prepared prepare(const std::string& programs, const std::string& coreset_path, const train::TrainConfig& cfg) {
  Prepared p;
  p.corpus = load_programs(programs);
  p.core = load_coreset(coreset_path);
  p.splits = train::make_splits(p.corpus, cfg.split);
  if (p.splits.train.empty()) throw InputError("training split is empty");
  std::vector<ProgramRecord> train_programs;
  for (auto i : p.splits.train) train_programs.push_back(p.corpus[i]);
  p.vocab = train::build_vocabulary(train_programs);
  p.examples = train::make_examples(p.corpus, p.core.sequences, p.vocab);
  return p;
}

// ---------------------------------------------------------------------------

int run(int argc, const char* const* argv, std::ostream& out) {
  CLI::App app{"passforge: pass-sequence coresets and normalized value prediction", "passforge"};
  app.require_subcommand(1);

  // gen
  synthenv::CorpusSpec gspec;
  std::string gen_families = "A,B,C,D,E", gen_sizes = "small", gen_config, gen_out;
  auto* gen = app.add_subcommand("gen", "generate a program corpus");
  gen->add_option("--count", gspec.count, "number of programs")->capture_default_str();
  gen->add_option("--seed", gspec.seed, "corpus seed")->capture_default_str();
  gen->add_option("--families", gen_families, "comma-separated families")->capture_default_str();
  gen->add_option("--sizes", gen_sizes, "comma-separated size classes")->capture_default_str();
  gen->add_option("--alphabet", gspec.opcode_alphabet_size, "optional opcode alphabet size")->capture_default_str();
  gen->add_option("--config", gen_config, "generator config file for a single program");
  gen->add_option("--out", gen_out, "output corpus JSON")->required();

  // mine
  std::string mine_programs, mine_out;
  std::size_t mine_episodes = 50, mine_len = synthenv::kEpisodeLength, mine_limit = 0;
  std::uint64_t mine_seed = 0;
  auto* mine = app.add_subcommand("mine", "mine candidate sequences with random rollouts");
  mine->add_option("--programs", mine_programs, "corpus JSON or generator config")->required();
  mine->add_option("--episodes", mine_episodes, "episodes per program")->capture_default_str();
  mine->add_option("--max-len", mine_len, "episode length")->capture_default_str();
  mine->add_option("--limit", mine_limit, "use only the first N programs (0 = all)")->capture_default_str();
  mine->add_option("--seed", mine_seed, "rng seed")->capture_default_str();
  mine->add_option("--out", mine_out, "candidate JSON")->required();

  // matrix
  std::string mat_programs, mat_candidates, mat_out;
  auto* matrix = app.add_subcommand("matrix", "compute the reward matrix");
  matrix->add_option("--programs", mat_programs, "corpus JSON or generator config")->required();
  matrix->add_option("--candidates", mat_candidates, "candidate JSON")->required();
  matrix->add_option("--out", mat_out, "reward matrix CSV")->required();

  // coreset
  std::string cs_matrix, cs_candidates, cs_out;
  std::size_t cs_k = 50;
  auto* cs = app.add_subcommand("coreset", "greedy coreset selection");
  cs->add_option("--matrix", cs_matrix, "reward matrix CSV")->required();
  cs->add_option("--k", cs_k, "coreset size")->capture_default_str()->check(CLI::PositiveNumber);
  cs->add_option("--candidates", cs_candidates, "candidate JSON, fills the sequences");
  cs->add_option("--out", cs_out, "coreset JSON")->required();

  // graph
  std::string g_program, g_out;
  std::size_t g_index = 0;
  bool g_flat = false;
  auto* graph = app.add_subcommand("graph", "emit a program graph");
  graph->add_option("--program", g_program, "corpus JSON or generator config")->required();
  graph->add_option("--index", g_index, "program index within a corpus")->capture_default_str();
  graph->add_flag("--flat", g_flat, "emit the flat counters instead");
  graph->add_option("--out", g_out, "graph JSON")->required();

  // train
  std::string t_programs, t_coreset, t_out, t_log, t_manifest, t_graphs;
  TrainFlags tflags;
  auto* trn = app.add_subcommand("train", "train a model over the coreset");
  trn->add_option("--programs", t_programs, "corpus JSON")->required();
  trn->add_option("--coreset", t_coreset, "coreset JSON")->required();
  trn->add_option("--out", t_out, "model checkpoint")->required();
  trn->add_option("--log", t_log, "JSON-lines log (default <out>.log.jsonl)");
  trn->add_option("--manifest", t_manifest, "dataset manifest (default <out>.manifest.json)");
  trn->add_option("--graphs", t_graphs, "directory for per-program graph files");
  tflags.add(trn);

  // eval
  std::string e_programs, e_coreset, e_model, e_matrix, e_out, e_csv, e_method = "model";
  std::size_t e_budget = evalcli::kBudget;
  auto* ev = app.add_subcommand("eval", "evaluate a policy and write a report");
  ev->add_option("--programs", e_programs, "corpus JSON")->required();
  ev->add_option("--coreset", e_coreset, "coreset JSON")->required();
  ev->add_option("--method", e_method, "model, top45, oracle or oz")
      ->capture_default_str()
      ->check(CLI::IsMember({"model", "top45", "oracle", "oz"}));
  ev->add_option("--model", e_model, "model checkpoint (method model)");
  ev->add_option("--matrix", e_matrix, "training reward matrix CSV (method top45)");
  ev->add_option("--budget", e_budget, "pass budget")->capture_default_str()->check(CLI::PositiveNumber);
  ev->add_option("--out", e_out, "report JSON")->required();
  ev->add_option("--csv", e_csv, "summary CSV (default <out>.csv)");

  // oracle
  std::string o_programs, o_coreset, o_out, o_csv;
  auto* orc = app.add_subcommand("oracle", "brute force over the whole coreset");
  orc->add_option("--programs", o_programs, "corpus JSON")->required();
  orc->add_option("--coreset", o_coreset, "coreset JSON")->required();
  orc->add_option("--out", o_out, "report JSON")->required();
  orc->add_option("--csv", o_csv, "summary CSV (default <out>.csv)");

  // ablate
  std::string a_programs, a_coreset, a_out, a_sweep = "temperature", a_values;
  TrainFlags aflags;
  auto* abl = app.add_subcommand("ablate", "train one model per setting and compare");
  abl->add_option("--programs", a_programs, "corpus JSON")->required();
  abl->add_option("--coreset", a_coreset, "coreset JSON")->required();
  abl->add_option("--sweep", a_sweep, "setting to vary")
      ->capture_default_str()
      ->check(CLI::IsMember({"temperature", "objective", "encoder", "edge_update", "mixup", "activation"}));
  abl->add_option("--values", a_values, "comma-separated values (defaults per sweep)");
  abl->add_option("--out", a_out, "results CSV")->required();
  aflags.add(abl);

  if (argc > 1 && argv[1][0] != '-' && app.get_subcommand_no_throw(argv[1]) == nullptr) {
    throw CliUsage(std::string("unknown subcommand ") + argv[1], app.help());
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    if (!app.get_subcommands().empty() && app.get_subcommands().front()->parsed()) {
      throw CliUsage(e.what(), app.get_subcommands().front()->help());
    }
    throw CliUsage(e.what(), app.help());
  }

  if (gen->parsed()) {
    std::vector<ProgramRecord> corpus;
    if (!gen_config.empty()) {
      const auto cfg = synthenv::parse_generator_config(read_file(gen_config));
      corpus.push_back({cfg, synthenv::generate_program(cfg.seed, cfg)});
    } else {
      gspec.families.clear();
      for (const auto& f : split_list(gen_families)) gspec.families.push_back(synthenv::parse_family(f));
      gspec.sizes.clear();
      for (const auto& s : split_list(gen_sizes)) gspec.sizes.push_back(synthenv::parse_size_class(s));
      corpus = synthenv::generate_corpus(gspec);
    }
    write_file(gen_out, synthenv::corpus_to_json(corpus).dump() + "\n");
    out << "wrote " << corpus.size() << " programs to " << gen_out << "\n";
  } else if (mine->parsed()) {
    auto programs = synthenv::corpus_programs(load_programs(mine_programs));
    if (mine_limit > 0 && mine_limit < programs.size()) programs.resize(mine_limit);
    const auto cs_set = candidates::mine_candidates(programs, mine_episodes, mine_len, mine_seed);
    write_file(mine_out, cs_set.to_json().dump() + "\n");
    write_file(mine_out + ".provenance.json", cs_set.provenance_json().dump() + "\n");
    out << "mined " << cs_set.sequences.size() << " candidates\n";
  } else if (matrix->parsed()) {
    const auto programs = synthenv::corpus_programs(load_programs(mat_programs));
    const auto cands = candidates::CandidateSet::from_json(read_json(mat_candidates));
    const auto r = coreset::build_reward_matrix(programs, cands.sequences);
    write_file(mat_out, coreset::to_csv(r));
    out << "wrote " << r.rows << " x " << r.cols << " matrix\n";
  } else if (cs->parsed()) {
    const auto r = coreset::normalize_rows(coreset::from_csv(read_file(cs_matrix)));
    std::optional<candidates::CandidateSet> cands;
    if (!cs_candidates.empty()) {
      cands = candidates::CandidateSet::from_json(read_json(cs_candidates));
      for (auto id : r.col_ids) {
        if (id >= cands->sequences.size()) throw DataError("matrix column refers past the candidate list");
      }
    }
    if (cs_k > r.cols) throw ConfigError("--k exceeds the number of matrix columns");
    const auto c = coreset::greedy_select(r, cs_k, cands ? &cands->sequences : nullptr);
    write_file(cs_out, c.to_json().dump() + "\n");
    out << "selected=" << json(c.selected).dump() << "\n";
  } else if (graph->parsed()) {
    const auto corpus = load_programs(g_program);
    if (g_index >= corpus.size()) throw InputError("--index out of range");
    const auto& p = corpus[g_index].program;
    const json j = g_flat ? json(graphrep::flat_features(p)) : graphrep::program_graph(p).to_json();
    write_file(g_out, j.dump() + "\n");
  } else if (trn->parsed()) {
    const auto cfg = tflags.resolve();
    const Prepared d = prepare(t_programs, t_coreset, cfg);
    std::ostringstream log;
    const auto res = train::train_model(pointers(d.examples, d.splits.train), pointers(d.examples, d.splits.val),
                                        d.core.sequences, static_cast<int>(d.vocab.size()), cfg,
                                        [&](const train::EpochLog& l) {
                                          log << l.to_json().dump() << "\n";
                                          out << "epoch " << l.epoch << " loss " << l.loss << " val "
                                              << l.val_mean_over_oz << "\n";
                                        });
    if (const auto dir = std::filesystem::path(t_out).parent_path(); !dir.empty()) {
      std::filesystem::create_directories(dir);
    }
    gean::save_model(t_out, res.model, res.best_state);
    write_file(t_out + ".vocab.json", d.vocab.to_json().dump() + "\n");
    write_file(t_out + ".train.json", cfg.to_json().dump(2) + "\n");
    write_file(t_log.empty() ? t_out + ".log.jsonl" : t_log, log.str());
    std::vector<std::string> graph_files;
    if (!t_graphs.empty()) {
      for (std::size_t i = 0; i < d.corpus.size(); ++i) {
        const std::string f = (std::filesystem::path(t_graphs) / (d.examples[i].program_id + ".json")).string();
        auto g = graphrep::program_graph(d.corpus[i].program);
        g.values = d.examples[i].values();
        write_file(f, g.to_json().dump() + "\n");
        graph_files.push_back(f);
      }
    }
    write_file(t_manifest.empty() ? t_out + ".manifest.json" : t_manifest,
               train::dataset_manifest(d.examples, d.splits, graph_files).dump(2) + "\n");
    out << "best epoch " << res.best_epoch << " val " << res.best_val << "\n";
  } else if (ev->parsed()) {
    const auto corpus = load_programs(e_programs);
    const auto core = load_coreset(e_coreset);
    evalcli::EvalReport rep;
    if (e_method == "oracle") {
      rep = evalcli::evaluate_oracle(corpus, core.sequences);
    } else if (e_method == "oz") {
      rep = evalcli::evaluate_oz(corpus);
    } else if (e_method == "top45") {
      if (e_matrix.empty()) throw CliUsage("--matrix is required for top45", ev->help());
      const auto m = coreset::normalize_rows(coreset::from_csv(read_file(e_matrix)));
      const auto pop = evalcli::popularity(m, core.selected);
      const auto plan = evalcli::infer(pop, core.sequences, e_budget);
      rep = evalcli::evaluate("top45", corpus, core.sequences, [&](std::size_t) { return plan; }, e_budget);
    } else {
      if (e_model.empty()) throw CliUsage("--model is required for method model", ev->help());
      const auto [mc, state] = gean::load_model(e_model);
      const auto vocab = graphrep::Vocabulary::from_json(read_json(e_model + ".vocab.json"));
      if (mc.k != static_cast<int>(core.sequences.size())) throw DataError("model and coreset sizes differ");
      gean::Model<double> model(mc, 0);
      model.load_state(state);
      const auto ex = train::make_examples(corpus, core.sequences, vocab);
      rep = train::evaluate_model(model, pointers(ex), core.sequences, e_budget, std::string(gean::head_name(mc.head)));
    }
    write_report(rep, e_out, e_csv);
    const auto a = rep.aggregate();
    out << rep.method << " mean_over_oz " << a.mean_over_oz << " gmean_over_oz " << a.gmean_over_oz << "\n";
  } else if (orc->parsed()) {
    const auto rep = evalcli::evaluate_oracle(load_programs(o_programs), load_coreset(o_coreset).sequences);
    write_report(rep, o_out, o_csv);
    out << "oracle mean_over_oz " << rep.aggregate().mean_over_oz << "\n";
  } else if (abl->parsed()) {
    const auto base = aflags.resolve();
    const Prepared d = prepare(a_programs, a_coreset, base);
    std::vector<std::string> values = split_list(a_values);
    if (values.empty()) {
      if (a_sweep == "temperature") values = {"0.05", "0.1", "0.25", "0.5", "1.0"};
      else if (a_sweep == "objective") values = {"nvp", "bc", "qvalue"};
      else if (a_sweep == "encoder") values = {"gean", "flat"};
      else if (a_sweep == "edge_update") values = {"true", "false"};
      else if (a_sweep == "mixup") values = {"0", "0.25", "0.5"};
      else values = {"elu", "relu"};
    }
    const auto tr = pointers(d.examples, d.splits.train);
    const auto val = pointers(d.examples, d.splits.val);
    std::vector<std::pair<std::string, std::vector<const train::Example*>>> tests;
    if (!d.splits.test_in_domain.empty()) tests.emplace_back("test_in_domain", pointers(d.examples, d.splits.test_in_domain));
    if (!d.splits.test_out_of_domain.empty()) {
      tests.emplace_back("test_out_of_domain", pointers(d.examples, d.splits.test_out_of_domain));
    }
    if (tests.empty()) throw InputError("ablation needs a non-empty test split");
    std::ostringstream csv;
    csv.precision(17);
    csv << "sweep,value,method,split,programs,mean_over_oz,gmean_over_oz,best_epoch\n";
    auto emit = [&](const std::string& value, const evalcli::EvalReport& rep, const std::string& split,
                    std::size_t epoch) {
      const auto a = rep.aggregate();
      csv << a_sweep << ',' << value << ',' << rep.method << ',' << split << ',' << a.programs << ','
          << a.mean_over_oz << ',' << a.gmean_over_oz << ',' << epoch << '\n';
    };
    const auto pop = example_popularity(tr);
    for (const auto& [split, ex] : tests) {
      emit("-", oracle_report(ex), split, 0);
      emit("-", table_report("top45", ex, d.core.sequences, pop, base.budget), split, 0);
    }
    for (const auto& v : values) {
      train::TrainConfig cfg = base;
      train::set_train_key(cfg, a_sweep, v);
      cfg.validate();
      const auto res = train::train_model(tr, val, d.core.sequences, static_cast<int>(d.vocab.size()), cfg);
      gean::Model<double> model(res.model, 0);
      model.load_state(res.best_state);
      for (const auto& [split, ex] : tests) {
        emit(v, train::evaluate_model(model, ex, d.core.sequences, cfg.budget, std::string(gean::head_name(cfg.objective))),
             split, res.best_epoch);
      }
      out << a_sweep << "=" << v << " done\n";
    }
    write_file(a_out, csv.str());
  }
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  try {
    return run(argc, argv, out);
  } catch (const CliUsage& e) {
    err << "usage error: " << e.what() << "\n" << e.help;
    return 2;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return 1;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << "\n";
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "input error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace passforge
