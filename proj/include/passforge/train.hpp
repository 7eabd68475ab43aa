#pragma once

// Supervised training over the coreset action space.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "passforge/evalcli.hpp"
#include "passforge/gean.hpp"
#include "passforge/graphrep.hpp"
#include "passforge/synthenv.hpp"

namespace passforge::train {

using synthenv::PassSequence;
using synthenv::Ratio;

// softmax(r / max(r) / T). Throws ConfigError when T <= 0, InputError on an
// empty or non-positive vector.
std::vector<double> nvp_targets(std::span<const double> r, double temperature);
// -sum v log a, with log guarded by 1e-12.
double nvp_loss(std::span<const double> a, std::span<const double> v);
// Among the exact maxima, the index whose sequence is first in length-lex order.
std::size_t bc_label(std::span<const Ratio> r, const std::vector<PassSequence>& sequences);
double qvalue_loss(std::span<const double> pred, std::span<const double> r);

struct SplitSpec {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  std::vector<synthenv::Family> held_out;
  std::uint64_t seed = 0;
  friend bool operator==(const SplitSpec&, const SplitSpec&) = default;
};

struct Splits {
  std::vector<std::size_t> train, val, test_in_domain, test_out_of_domain;  // program indices
};

// Programs of held-out families go to test_out_of_domain; the rest are
// shuffled with the split seed and cut by the ratios.
Splits make_splits(const std::vector<synthenv::ProgramRecord>& programs, const SplitSpec& spec);

struct TrainConfig {
  gean::Head objective = gean::Head::Nvp;
  gean::Encoder encoder = gean::Encoder::Gean;
  int embed_dim = 64;
  int num_layers = 4;
  int hidden_dim = 128;
  gean::Activation activation = gean::Activation::Elu;
  bool edge_update = true;

  double temperature = 0.25;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.0;
  std::size_t batch_size = 16;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  double mixup = 0.0;
  std::size_t budget = evalcli::kBudget;
  SplitSpec split;

  void validate() const;  // ConfigError
  gean::ModelConfig model_config(int k, int vocab_size) const;
  nlohmann::json to_json() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Either a JSON object or key=value lines ('#' comments). Unknown keys are
// a ConfigError.
TrainConfig parse_train_config(std::string_view text);
// Sets one key from its text form without validating the whole config.
void set_train_key(TrainConfig& c, const std::string& key, const std::string& value);

// One program prepared for training and validation.
struct Example {
  std::string program_id;
  std::string family;
  gean::Sample sample;
  std::vector<Ratio> rewards;  // per coreset sequence
  evalcli::SizeTable table;
  std::size_t size_oz = 0;

  std::vector<double> values() const;
};

// Throws InputError when a sequence list is empty.
std::vector<Example> make_examples(const std::vector<synthenv::ProgramRecord>& programs,
                                   const std::vector<PassSequence>& sequences, const graphrep::Vocabulary& vocab);

// Vocabulary over the tokens of the given programs' graphs.
graphrep::Vocabulary build_vocabulary(const std::vector<synthenv::ProgramRecord>& programs);

class Adam {
 public:
  Adam(std::vector<tensor::Parameter<double>>& params, double lr, double beta1, double beta2, double weight_decay);
  void step();

 private:
  std::vector<tensor::Parameter<double>>& params_;
  double lr_, beta1_, beta2_, wd_;
  std::size_t t_ = 0;
  std::vector<tensor::Mat<double>> m_, v_;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0;
  double val_mean_over_oz = 0;
  std::size_t mixup_pairs = 0;
  nlohmann::json to_json() const;
};

struct TrainResult {
  gean::ModelConfig model;
  std::vector<tensor::NamedTensor> best_state;
  std::size_t best_epoch = 0;
  double best_val = 0;
  std::vector<EpochLog> log;
};

// Mean loss of `model` over `examples` under the configured objective.
double dataset_loss(gean::Model<double>& model, const std::vector<const Example*>& examples,
                    const TrainConfig& cfg, const std::vector<PassSequence>& sequences);
// Mean entropy of the NVP targets.
double target_entropy(const std::vector<const Example*>& examples, double temperature);

// Budgeted MeanOverOz with the model's scores ordering the coreset.
double validation_metric(gean::Model<double>& model, const std::vector<const Example*>& examples,
                         const std::vector<PassSequence>& sequences, std::size_t budget);
evalcli::EvalReport evaluate_model(gean::Model<double>& model, const std::vector<const Example*>& examples,
                                   const std::vector<PassSequence>& sequences, std::size_t budget,
                                   const std::string& method = "model");

// Mini-batch training; the state with the best validation metric is kept
// (earliest on ties). With no validation examples the last epoch wins.
// `on_epoch` sees every log entry as it is produced.
// Throws InputError on an empty training set.
TrainResult train_model(const std::vector<const Example*>& train, const std::vector<const Example*>& val,
                        const std::vector<PassSequence>& sequences, int vocab_size, const TrainConfig& cfg,
                        const std::function<void(const EpochLog&)>& on_epoch = {});

// Manifest tying program ids to splits, value vectors and graph files.
nlohmann::json dataset_manifest(const std::vector<Example>& examples, const Splits& splits,
                                const std::vector<std::string>& graph_files);

}  // namespace passforge::train
