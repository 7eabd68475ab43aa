#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "passforge/error.hpp"
#include "passforge/rng.hpp"
#include "passforge/train.hpp"

namespace passforge::train {

using tensor::Mat;

std::vector<double> nvp_targets(std::span<const double> r, double temperature) {
  if (!(temperature > 0)) throw ConfigError("temperature must be positive");
  if (r.empty()) throw InputError("nvp_targets: empty value vector");
  const double mx = *std::max_element(r.begin(), r.end());
  if (!(mx > 0)) throw InputError("nvp_targets: values must be positive");
  std::vector<double> v(r.size());
  double sum = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    v[i] = std::exp((r[i] / mx - 1.0) / temperature);
    sum += v[i];
  }
  for (double& x : v) x /= sum;
  return v;
}

double nvp_loss(std::span<const double> a, std::span<const double> v) {
  if (a.size() != v.size()) throw InputError("nvp_loss: size mismatch");
  double l = 0;
  for (std::size_t i = 0; i < a.size(); ++i) l -= v[i] * std::log(std::max(a[i], 1e-12));
  return l;
}

std::size_t bc_label(std::span<const Ratio> r, const std::vector<PassSequence>& sequences) {
  if (r.empty() || r.size() != sequences.size()) throw InputError("bc_label: size mismatch");
  std::size_t best = 0;
  for (std::size_t i = 1; i < r.size(); ++i) {
    if (r[i] > r[best] || (r[i] == r[best] && synthenv::length_lex_less(sequences[i], sequences[best]))) best = i;
  }
  return best;
}

double qvalue_loss(std::span<const double> pred, std::span<const double> r) {
  if (pred.size() != r.size() || r.empty()) throw InputError("qvalue_loss: size mismatch");
  double s = 0;
  for (std::size_t i = 0; i < r.size(); ++i) s += (pred[i] - r[i]) * (pred[i] - r[i]);
  return s / static_cast<double>(r.size());
}

namespace {

template <class V>
void shuffle(V& xs, Rng& rng) {
  for (std::size_t i = xs.size(); i > 1; --i) std::swap(xs[i - 1], xs[rng.below(i)]);
}

Ratio add(const Ratio& a, const Ratio& b) { return {a.num * b.den + b.num * a.den, a.den * b.den}; }

}  // namespace

Splits make_splits(const std::vector<synthenv::ProgramRecord>& programs, const SplitSpec& spec) {
  std::vector<bool> present(synthenv::kNumFamilies, false);
  for (const auto& p : programs) present[static_cast<std::size_t>(p.config.family)] = true;
  if (std::count(present.begin(), present.end(), true) < 2) throw InputError("splits need two or more families");
  for (auto f : spec.held_out) {
    if (!present[static_cast<std::size_t>(f)]) {
      throw ConfigError("held-out family " + std::string(synthenv::family_name(f)) + " is not in the corpus");
    }
  }
  Splits s;
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < programs.size(); ++i) {
    const auto f = programs[i].config.family;
    if (std::find(spec.held_out.begin(), spec.held_out.end(), f) != spec.held_out.end()) {
      s.test_out_of_domain.push_back(i);
    } else {
      pool.push_back(i);
    }
  }
  Rng rng(spec.seed);
  shuffle(pool, rng);
  const auto n = static_cast<double>(pool.size());
  const std::size_t n_train = std::min(pool.size(), static_cast<std::size_t>(std::llround(spec.train * n)));
  const std::size_t n_val = std::min(pool.size() - n_train, static_cast<std::size_t>(std::llround(spec.val * n)));
  s.train.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(pool.begin() + static_cast<std::ptrdiff_t>(n_train),
               pool.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test_in_domain.assign(pool.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), pool.end());
  return s;
}

// ---------------------------------------------------------------------------
// Configuration

void TrainConfig::validate() const {
  if (!(temperature > 0)) throw ConfigError("temperature must be positive");
  if (!(mixup >= 0 && mixup <= 1)) throw ConfigError("mixup must lie in [0, 1]");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("betas must lie in [0, 1)");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be non-negative");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (budget == 0) throw ConfigError("budget must be positive");
  if (!(split.train >= 0 && split.val >= 0 && split.test >= 0) ||
      std::abs(split.train + split.val + split.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
  model_config(1, 1).validate();
}

gean::ModelConfig TrainConfig::model_config(int k, int vocab_size) const {
  gean::ModelConfig m;
  m.encoder = encoder;
  m.embed_dim = embed_dim;
  m.num_layers = num_layers;
  m.hidden_dim = hidden_dim;
  m.head = objective;
  m.k = k;
  m.vocab_size = vocab_size;
  m.activation = activation;
  m.edge_update = edge_update;
  return m;
}

nlohmann::json TrainConfig::to_json() const {
  std::vector<std::string> held;
  for (auto f : split.held_out) held.emplace_back(synthenv::family_name(f));
  return {{"objective", gean::head_name(objective)},
          {"encoder", gean::encoder_name(encoder)},
          {"embed_dim", embed_dim},
          {"num_layers", num_layers},
          {"hidden_dim", hidden_dim},
          {"activation", gean::activation_name(activation)},
          {"edge_update", edge_update},
          {"temperature", temperature},
          {"learning_rate", learning_rate},
          {"beta1", beta1},
          {"beta2", beta2},
          {"weight_decay", weight_decay},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"seed", seed},
          {"mixup", mixup},
          {"budget", budget},
          {"split_train", split.train},
          {"split_val", split.val},
          {"split_test", split.test},
          {"held_out", held},
          {"split_seed", split.seed}};
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ConfigError("bad number for " + key + ": " + v);
  return x;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError("bad unsigned integer for " + key + ": " + v);
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError("bad unsigned integer for " + key + ": " + v);
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("bad boolean for " + key + ": " + v);
}

}  // namespace

void set_train_key(TrainConfig& c, const std::string& key, const std::string& v) {
  if (key == "objective") c.objective = gean::parse_head(v);
  else if (key == "encoder") c.encoder = gean::parse_encoder(v);
  else if (key == "embed_dim") c.embed_dim = static_cast<int>(to_uint(key, v));
  else if (key == "num_layers") c.num_layers = static_cast<int>(to_uint(key, v));
  else if (key == "hidden_dim") c.hidden_dim = static_cast<int>(to_uint(key, v));
  else if (key == "activation") c.activation = gean::parse_activation(v);
  else if (key == "edge_update") c.edge_update = to_bool(key, v);
  else if (key == "temperature") c.temperature = to_double(key, v);
  else if (key == "learning_rate") c.learning_rate = to_double(key, v);
  else if (key == "beta1") c.beta1 = to_double(key, v);
  else if (key == "beta2") c.beta2 = to_double(key, v);
  else if (key == "weight_decay") c.weight_decay = to_double(key, v);
  else if (key == "batch_size") c.batch_size = to_uint(key, v);
  else if (key == "epochs") c.epochs = to_uint(key, v);
  else if (key == "seed") c.seed = to_uint(key, v);
  else if (key == "mixup") c.mixup = to_double(key, v);
  else if (key == "budget") c.budget = to_uint(key, v);
  else if (key == "split_train") c.split.train = to_double(key, v);
  else if (key == "split_val") c.split.val = to_double(key, v);
  else if (key == "split_test") c.split.test = to_double(key, v);
  else if (key == "split_seed") c.split.seed = to_uint(key, v);
  else if (key == "held_out") {
    c.split.held_out.clear();
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) c.split.held_out.push_back(synthenv::parse_family(item));
    }
  } else {
    throw ConfigError("unknown training key: " + key);
  }
}

TrainConfig parse_train_config(std::string_view text) {
  TrainConfig c;
  const std::string body = trim(text);
  if (!body.empty() && body.front() == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("training config: ") + e.what());
    }
    for (const auto& [key, val] : j.items()) {
      std::string s;
      if (val.is_string()) {
        s = val.get<std::string>();
      } else if (val.is_array()) {
        for (const auto& x : val) {
          if (!x.is_string()) throw ConfigError("held_out entries must be strings");
          s += (s.empty() ? "" : ",") + x.get<std::string>();
        }
      } else if (val.is_number_float()) {
        std::ostringstream os;
        os.precision(17);
        os << val.get<double>();
        s = os.str();
      } else {
        s = val.dump();
      }
      set_train_key(c, key, s);
    }
  } else {
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("expected key=value: " + line);
      set_train_key(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Data

std::vector<double> Example::values() const {
  std::vector<double> v;
  v.reserve(rewards.size());
  for (const auto& r : rewards) v.push_back(r.value());
  return v;
}

graphrep::Vocabulary build_vocabulary(const std::vector<synthenv::ProgramRecord>& programs) {
  std::vector<graphrep::ProgramGraph> graphs;
  graphs.reserve(programs.size());
  for (const auto& p : programs) graphs.push_back(graphrep::program_graph(p.program));
  return graphrep::Vocabulary::build(graphs);
}

std::vector<Example> make_examples(const std::vector<synthenv::ProgramRecord>& programs,
                                   const std::vector<PassSequence>& sequences, const graphrep::Vocabulary& vocab) {
  if (sequences.empty()) throw InputError("make_examples: empty coreset");
  std::vector<Example> out;
  out.reserve(programs.size());
  for (const auto& rec : programs) {
    Example e;
    e.program_id = std::to_string(rec.config.seed);
    e.family = std::string(synthenv::family_name(rec.config.family));
    e.sample.graph = graphrep::encode(graphrep::program_graph(rec.program), vocab);
    e.sample.flat = graphrep::flat_features(rec.program);
    e.table = evalcli::size_table(rec.program, sequences);
    for (std::size_t k = 0; k < sequences.size(); ++k) {
      e.rewards.push_back({e.table.initial, e.table.best_within(k, SIZE_MAX)});
    }
    e.sample.graph.values = e.values();
    e.size_oz = synthenv::baseline_sizes(rec.program).size_oz;
    out.push_back(std::move(e));
  }
  return out;
}

nlohmann::json dataset_manifest(const std::vector<Example>& examples, const Splits& splits,
                                const std::vector<std::string>& graph_files) {
  std::vector<std::string> split_of(examples.size(), "unused");
  auto mark = [&](const std::vector<std::size_t>& idx, const char* name) {
    for (auto i : idx) split_of.at(i) = name;
  };
  mark(splits.train, "train");
  mark(splits.val, "val");
  mark(splits.test_in_domain, "test_in_domain");
  mark(splits.test_out_of_domain, "test_out_of_domain");
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i = 0; i < examples.size(); ++i) {
    nlohmann::json rewards = nlohmann::json::array();
    for (const auto& r : examples[i].rewards) rewards.push_back({r.num, r.den});
    arr.push_back({{"program_id", examples[i].program_id},
                   {"family", examples[i].family},
                   {"split", split_of[i]},
                   {"graph", i < graph_files.size() ? graph_files[i] : ""},
                   {"rewards", rewards},
                   {"values", examples[i].values()}});
  }
  return {{"programs", arr}};
}

// ---------------------------------------------------------------------------
// Optimization

Adam::Adam(std::vector<tensor::Parameter<double>>& params, double lr, double beta1, double beta2, double weight_decay)
    : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), wd_(weight_decay) {
  for (const auto& p : params_) {
    m_.push_back(Mat<double>::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Mat<double>::Zero(p.value.rows(), p.value.cols()));
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    Mat<double> g = p.grad;
    if (wd_ > 0) g += wd_ * p.value;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    p.value.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + 1e-8);
  }
}

nlohmann::json EpochLog::to_json() const {
  return {{"epoch", epoch}, {"loss", loss}, {"val_mean_over_oz", val_mean_over_oz}, {"mixup_pairs", mixup_pairs}};
}

namespace {

constexpr std::size_t kEvalBatch = 32;

// A training item: one program or a composed pair.
struct Item {
  const gean::Sample* sample = nullptr;
  std::vector<Ratio> rewards;
};

std::vector<double> ratio_values(const std::vector<Ratio>& r) {
  std::vector<double> v;
  v.reserve(r.size());
  for (const auto& x : r) v.push_back(x.value());
  return v;
}

Mat<double> targets(const std::vector<Item>& items, const TrainConfig& cfg, const std::vector<PassSequence>& seqs) {
  const auto k = static_cast<Eigen::Index>(seqs.size());
  Mat<double> y = Mat<double>::Zero(static_cast<Eigen::Index>(items.size()), k);
  for (std::size_t b = 0; b < items.size(); ++b) {
    const auto row = static_cast<Eigen::Index>(b);
    switch (cfg.objective) {
      case gean::Head::Nvp: {
        const auto v = nvp_targets(ratio_values(items[b].rewards), cfg.temperature);
        for (Eigen::Index j = 0; j < k; ++j) y(row, j) = v[static_cast<std::size_t>(j)];
        break;
      }
      case gean::Head::Bc:
        y(row, static_cast<Eigen::Index>(bc_label(items[b].rewards, seqs))) = 1.0;
        break;
      case gean::Head::QValue: {
        const auto v = ratio_values(items[b].rewards);
        for (Eigen::Index j = 0; j < k; ++j) y(row, j) = v[static_cast<std::size_t>(j)];
        break;
      }
    }
  }
  return y;
}

using Tape = tensor::Tape<double>;

Tape::Var batch_loss(Tape& t, gean::Model<double>& model, const std::vector<Item>& items, const TrainConfig& cfg,
                     const std::vector<PassSequence>& seqs) {
  std::vector<const gean::Sample*> batch;
  batch.reserve(items.size());
  for (const auto& it : items) batch.push_back(it.sample);
  const auto out = model.forward(t, batch);
  const Mat<double> y = targets(items, cfg, seqs);
  return cfg.objective == gean::Head::QValue ? t.mse(out, y) : t.cross_entropy_soft(out, y);
}

std::vector<std::vector<double>> scores(gean::Model<double>& model, const std::vector<const Example*>& examples) {
  std::vector<std::vector<double>> out;
  out.reserve(examples.size());
  for (std::size_t s = 0; s < examples.size(); s += kEvalBatch) {
    const std::size_t e = std::min(examples.size(), s + kEvalBatch);
    std::vector<const gean::Sample*> batch;
    for (std::size_t i = s; i < e; ++i) batch.push_back(&examples[i]->sample);
    Tape t;
    const Mat<double>& y = t.value(model.forward(t, batch));
    for (Eigen::Index r = 0; r < y.rows(); ++r) out.emplace_back(y.row(r).data(), y.row(r).data() + y.cols());
  }
  return out;
}

}  // namespace

double dataset_loss(gean::Model<double>& model, const std::vector<const Example*>& examples, const TrainConfig& cfg,
                    const std::vector<PassSequence>& sequences) {
  if (examples.empty()) throw InputError("dataset_loss: no examples");
  double total = 0;
  for (std::size_t s = 0; s < examples.size(); s += kEvalBatch) {
    const std::size_t e = std::min(examples.size(), s + kEvalBatch);
    std::vector<Item> items;
    for (std::size_t i = s; i < e; ++i) items.push_back({&examples[i]->sample, examples[i]->rewards});
    Tape t;
    total += t.value(batch_loss(t, model, items, cfg, sequences))(0, 0) * static_cast<double>(items.size());
  }
  return total / static_cast<double>(examples.size());
}

double target_entropy(const std::vector<const Example*>& examples, double temperature) {
  if (examples.empty()) throw InputError("target_entropy: no examples");
  double h = 0;
  for (const auto* e : examples) {
    for (double v : nvp_targets(e->values(), temperature)) {
      if (v > 0) h -= v * std::log(v);
    }
  }
  return h / static_cast<double>(examples.size());
}

evalcli::EvalReport evaluate_model(gean::Model<double>& model, const std::vector<const Example*>& examples,
                                   const std::vector<PassSequence>& sequences, std::size_t budget,
                                   const std::string& method) {
  evalcli::EvalReport rep{method, budget, {}};
  const auto sc = scores(model, examples);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const Example& e = *examples[i];
    const auto ex = evalcli::execute_plan(e.table, evalcli::infer(sc[i], sequences, budget));
    rep.rows.push_back({e.program_id, e.family, e.table.initial, e.size_oz, ex.best_size, ex.passes_used});
  }
  return rep;
}

double validation_metric(gean::Model<double>& model, const std::vector<const Example*>& examples,
                         const std::vector<PassSequence>& sequences, std::size_t budget) {
  return evalcli::mean_over_oz(evaluate_model(model, examples, sequences, budget).rows);
}

TrainResult train_model(const std::vector<const Example*>& train, const std::vector<const Example*>& val,
                        const std::vector<PassSequence>& sequences, int vocab_size, const TrainConfig& cfg,
                        const std::function<void(const EpochLog&)>& on_epoch) {
  if (train.empty()) throw InputError("training set is empty");
  cfg.validate();
  for (const auto* e : train) {
    if (e->rewards.size() != sequences.size()) throw InputError("example reward count differs from coreset size");
  }
  TrainResult res;
  res.model = cfg.model_config(static_cast<int>(sequences.size()), vocab_size);
  gean::Model<double> model(res.model, cfg.seed);
  Adam opt(model.parameters(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.weight_decay);
  Rng rng(mix_seed(cfg.seed, 0x7261696eULL));

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  bool have_best = false;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle(order, rng);
    EpochLog log;
    log.epoch = epoch;
    double loss_sum = 0;
    std::size_t items_seen = 0;
    for (std::size_t s = 0; s < order.size(); s += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), s + cfg.batch_size);
      std::vector<gean::Sample> mixed;
      mixed.reserve(e - s);
      std::vector<Item> items;
      for (std::size_t i = s; i < e; ++i) {
        const Example* a = train[order[i]];
        if (cfg.mixup > 0 && i + 1 < e && rng.chance(cfg.mixup)) {
          const Example* b = train[order[i + 1]];
          mixed.push_back(gean::mix_samples(a->sample, b->sample));
          std::vector<Ratio> sum(a->rewards.size());
          for (std::size_t k = 0; k < sum.size(); ++k) sum[k] = add(a->rewards[k], b->rewards[k]);
          items.push_back({&mixed.back(), std::move(sum)});
          ++log.mixup_pairs;
          ++i;
        } else {
          items.push_back({&a->sample, a->rewards});
        }
      }
      Tape t;
      const auto loss = batch_loss(t, model, items, cfg, sequences);
      model.zero_grad();
      t.backward(loss);
      opt.step();
      loss_sum += t.value(loss)(0, 0) * static_cast<double>(items.size());
      items_seen += items.size();
    }
    log.loss = loss_sum / static_cast<double>(items_seen);
    log.val_mean_over_oz = val.empty() ? 0.0 : validation_metric(model, val, sequences, cfg.budget);
    if (!have_best || val.empty() || log.val_mean_over_oz > res.best_val) {
      have_best = true;
      res.best_val = log.val_mean_over_oz;
      res.best_epoch = epoch;
      res.best_state = model.state();
    }
    res.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return res;
}

}  // namespace passforge::train
