#pragma once

// Graph Edge Attention Network and the flat-feature MLP baseline.
//
// Every layer passes each (source, edge, target) triplet through five affine
// maps: a message and a scalar score for the source node, a message and a
// score for the target node, and the next edge representation. Each node
// normalizes the scores of all of its contributions with one softmax.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "passforge/graphrep.hpp"
#include "passforge/tensor.hpp"

namespace passforge::gean {

enum class Encoder : std::uint8_t { Gean, Flat };
enum class Head : std::uint8_t { Nvp, Bc, QValue };
enum class Activation : std::uint8_t { Elu, Relu };

std::string_view encoder_name(Encoder e);
std::string_view head_name(Head h);
std::string_view activation_name(Activation a);
Encoder parse_encoder(std::string_view s);  // ConfigError on failure
Head parse_head(std::string_view s);
Activation parse_activation(std::string_view s);

struct ModelConfig {
  Encoder encoder = Encoder::Gean;
  int embed_dim = 64;
  int num_layers = 4;
  int hidden_dim = 128;
  Head head = Head::Nvp;
  int k = 50;
  int vocab_size = 1;
  Activation activation = Activation::Elu;
  bool edge_update = true;

  void validate() const;  // ConfigError
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);  // ConfigError
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// One model input: the encoded graph and the counters of the same program.
struct Sample {
  graphrep::EncodedGraph graph;
  graphrep::FlatFeatures flat{};
};

// Disjoint union of two samples; flat counters add.
Sample mix_samples(const Sample& a, const Sample& b);

template <class T>
class Model {
 public:
  using Tape = tensor::Tape<T>;
  using Var = typename Tape::Var;

  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  // B x K outputs, one row per sample.
  Var forward(Tape& t, std::span<const Sample* const> batch);
  std::vector<double> predict(const Sample& s);

  // Building blocks of the graph encoder.
  Var embed_nodes(Tape& t, const graphrep::EncodedGraph& g);
  Var embed_edges(Tape& t, const graphrep::EncodedGraph& g);
  std::pair<Var, Var> layer(Tape& t, std::size_t index, Var x, Var e, const graphrep::EncodedGraph& g);

  std::vector<tensor::Parameter<T>>& parameters() { return params_; }
  tensor::Parameter<T>& parameter(const std::string& name);
  std::vector<tensor::NamedTensor> state() const;
  // Throws DataError on a missing or misshapen tensor.
  void load_state(const std::vector<tensor::NamedTensor>& state);
  void zero_grad();

 private:
  Var act(Tape& t, Var x);
  Var affine(Tape& t, Var x, const std::string& prefix);
  Var forward_graphs(Tape& t, std::span<const Sample* const> batch);
  Var forward_flat(Tape& t, std::span<const Sample* const> batch);
  void add_param(const std::string& name, int rows, int cols, double bound, std::uint64_t seed);
  void add_affine(const std::string& prefix, int in, int out, std::uint64_t seed);

  ModelConfig config_;
  std::vector<tensor::Parameter<T>> params_;
};

extern template class Model<double>;
extern template class Model<float>;

// Model checkpoint plus JSON sidecar at `path + ".json"`.
void save_model(const std::string& path, const ModelConfig& config, const std::vector<tensor::NamedTensor>& state);
std::pair<ModelConfig, std::vector<tensor::NamedTensor>> load_model(const std::string& path);

}  // namespace passforge::gean
