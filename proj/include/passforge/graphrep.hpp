#pragma once

// Program graphs: instruction/variable/constant/type nodes joined by
// control, data, call and type edges.

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "passforge/synthenv.hpp"

namespace passforge::graphrep {

enum class NodeKind : std::uint8_t { Instruction, Variable, Constant, Type };
enum class Flow : std::uint8_t { Call, Control, Data, Type };
inline constexpr std::size_t kNumFlows = 4;
inline constexpr int kMaxPosition = 32;

std::string_view node_kind_name(NodeKind k);
std::string_view flow_name(Flow f);

struct GraphNode {
  NodeKind kind = NodeKind::Instruction;
  std::string text;
  int function = 0;
  int block = 0;  // -1 for type nodes

  friend bool operator==(const GraphNode&, const GraphNode&) = default;
};

struct GraphEdge {
  Flow flow = Flow::Control;
  int position = 0;
  std::size_t src = 0;
  std::size_t dst = 0;

  friend bool operator==(const GraphEdge&, const GraphEdge&) = default;
};

struct ProgramGraph {
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
  std::optional<std::vector<double>> values;

  nlohmann::json to_json() const;
  static ProgramGraph from_json(const nlohmann::json& j);  // DataError on bad input
  friend bool operator==(const ProgramGraph&, const ProgramGraph&) = default;
};

ProgramGraph build_graph(const synthenv::Program& p);

// Replaces composite type text by constructor tokens and adds shared type
// nodes: one per distinct type, primitive leaves linked to every variable
// and constant of that type.
ProgramGraph expand_type_graph(const ProgramGraph& g);

// build_graph followed by expand_type_graph.
ProgramGraph program_graph(const synthenv::Program& p);

int block_relpos(const GraphEdge& e, const std::vector<GraphNode>& nodes);
int clamp_edge_position(int pos);

// Disjoint union. Throws InputError unless both graphs carry value vectors
// of equal length.
ProgramGraph mixup(const ProgramGraph& a, const ProgramGraph& b);

class Vocabulary {
 public:
  static constexpr int kUnknown = 0;

  Vocabulary() = default;
  // Throws InputError on an empty graph set.
  static Vocabulary build(const std::vector<ProgramGraph>& graphs);

  int encode(const std::string& token) const;
  std::size_t size() const { return tokens_.size() + 1; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> tokens_;  // id = index + 1
  std::map<std::string, int, std::less<>> ids_;
};

// Integer form consumed by the models.
struct EncodedGraph {
  std::size_t num_nodes = 0;
  std::vector<int> tokens;
  std::vector<int> src;
  std::vector<int> dst;
  std::vector<int> flow;
  std::vector<int> position;  // clamped to [0, 32]
  std::vector<int> relpos;    // block relpos + 1, in [0, 2]
  std::vector<double> values; // empty when absent

  std::size_t num_edges() const { return src.size(); }
};

EncodedGraph encode(const ProgramGraph& g, const Vocabulary& vocab);
EncodedGraph mixup(const EncodedGraph& a, const EncodedGraph& b);

inline constexpr std::size_t kFlatFeatures = 56;
using FlatFeatures = std::array<std::int64_t, kFlatFeatures>;

// Additive counters: the features of a disjoint union are the sums.
FlatFeatures flat_features(const synthenv::Program& p);

}  // namespace passforge::graphrep
