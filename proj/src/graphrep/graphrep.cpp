#include "passforge/graphrep.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>

#include "passforge/error.hpp"

namespace passforge::graphrep {

using nlohmann::json;
using namespace synthenv;

namespace {

constexpr std::array<std::string_view, 4> kKindNames = {"instruction", "variable", "constant", "type"};
constexpr std::array<std::string_view, 4> kFlowNames = {"call", "control", "data", "type"};

std::string value_type_text(const Instruction& ins, const TypeTable& types) {
  if (ins.op == Opcode::Alloca || ins.op == Opcode::Gep) return types.render(ins.type) + "*";
  return types.render(ins.type);
}

bool yields_value(const Instruction& ins, const TypeTable& types) {
  switch (ins.op) {
    case Opcode::Store:
    case Opcode::Br:
    case Opcode::CondBr:
    case Opcode::Ret:
      return false;
    case Opcode::Call: {
      const TypeDesc& d = types.at(ins.type);
      return !(d.kind == TypeKind::Primitive && d.prim == Prim::Void);
    }
    default:
      return true;
  }
}

// Type assumed for an immediate operand of `ins` at operand index `k`.
std::string constant_type_text(const Program& p, const Instruction& ins, std::size_t k) {
  const TypeTable& types = p.types();
  static const std::string kI32 = "i32";
  switch (ins.op) {
    case Opcode::Call: {
      const auto callee = static_cast<std::size_t>(ins.operand(0).value);
      const Function& f = p.functions()[callee];
      if (k >= 1 && k - 1 < f.arg_types.size()) return types.render(f.arg_types[k - 1]);
      return kI32;
    }
    case Opcode::Select:
      if (k == 0) return "i1";
      break;
    case Opcode::ZExt:
    case Opcode::Trunc:
    case Opcode::BitCast:
    case Opcode::ICmp:
    case Opcode::Gep:
    case Opcode::Store:
    case Opcode::CondBr:
    case Opcode::Ret:
    case Opcode::Alloca:
    case Opcode::Load:
    case Opcode::Br:
      return kI32;
    default:
      break;
  }
  const TypeDesc& d = types.at(ins.type);
  if (d.kind != TypeKind::Primitive || d.prim == Prim::Void) return kI32;
  return types.render(ins.type);
}

// Parsed form of a rendered type string.
struct TypeExpr {
  enum class Kind { Prim, Pointer, Record, Array } kind = Kind::Prim;
  std::string text;  // full rendering
  std::vector<TypeExpr> members;
};

class TypeParser {
 public:
  explicit TypeParser(std::string_view s) : s_(s) {}

  std::optional<TypeExpr> parse_all() {
    auto t = parse();
    if (!t || pos_ != s_.size()) return std::nullopt;
    return t;
  }

 private:
  std::optional<TypeExpr> parse() {
    const std::size_t start = pos_;
    std::optional<TypeExpr> base;
    if (peek('{')) {
      ++pos_;
      TypeExpr r;
      r.kind = TypeExpr::Kind::Record;
      if (!peek('}')) {
        while (true) {
          auto m = parse();
          if (!m) return std::nullopt;
          r.members.push_back(std::move(*m));
          if (peek(',')) {
            ++pos_;
            continue;
          }
          break;
        }
      }
      if (!peek('}')) return std::nullopt;
      ++pos_;
      base = std::move(r);
    } else if (peek('[')) {
      ++pos_;
      const std::size_t digits = pos_;
      while (pos_ < s_.size() && s_[pos_] >= '0' && s_[pos_] <= '9') ++pos_;
      if (pos_ == digits || s_.substr(pos_, 3) != " x ") return std::nullopt;
      pos_ += 3;
      auto e = parse();
      if (!e || !peek(']')) return std::nullopt;
      ++pos_;
      TypeExpr a;
      a.kind = TypeExpr::Kind::Array;
      a.members.push_back(std::move(*e));
      base = std::move(a);
    } else {
      const std::size_t b = pos_;
      while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      if (!prim_from_name(s_.substr(b, pos_ - b))) return std::nullopt;
      base = TypeExpr{};
    }
    base->text = std::string(s_.substr(start, pos_ - start));
    while (peek('*')) {
      ++pos_;
      TypeExpr ptr;
      ptr.kind = TypeExpr::Kind::Pointer;
      ptr.members.push_back(std::move(*base));
      ptr.text = std::string(s_.substr(start, pos_ - start));
      base = std::move(ptr);
    }
    return base;
  }

  bool peek(char c) const { return pos_ < s_.size() && s_[pos_] == c; }

  std::string_view s_;
  std::size_t pos_ = 0;
};

std::string_view constructor_token(TypeExpr::Kind k) {
  switch (k) {
    case TypeExpr::Kind::Pointer:
      return "pointer";
    case TypeExpr::Kind::Record:
      return "record";
    case TypeExpr::Kind::Array:
      return "array";
    case TypeExpr::Kind::Prim:
      break;
  }
  return {};
}

class TypeExpander {
 public:
  explicit TypeExpander(ProgramGraph& g) : g_(g) {}

  std::size_t node_for(const TypeExpr& t) {
    if (auto it = index_.find(t.text); it != index_.end()) return it->second;
    const std::size_t id = g_.nodes.size();
    const std::string text =
        t.kind == TypeExpr::Kind::Prim ? t.text : std::string(constructor_token(t.kind));
    g_.nodes.push_back({NodeKind::Type, text, -1, -1});
    index_.emplace(t.text, id);
    for (std::size_t i = 0; i < t.members.size(); ++i) {
      const std::size_t child = node_for(t.members[i]);
      g_.edges.push_back({Flow::Type, static_cast<int>(i), child, id});
    }
    return id;
  }

 private:
  ProgramGraph& g_;
  std::unordered_map<std::string, std::size_t> index_;
};

NodeKind parse_kind(const json& j) {
  const auto s = j.get<std::string>();
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (kKindNames[i] == s) return static_cast<NodeKind>(i);
  throw DataError("unknown node kind: " + s);
}

Flow parse_flow(const json& j) {
  const auto s = j.get<std::string>();
  for (std::size_t i = 0; i < kFlowNames.size(); ++i)
    if (kFlowNames[i] == s) return static_cast<Flow>(i);
  throw DataError("unknown edge flow: " + s);
}

std::vector<double> sum_values(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw InputError("mixup requires value vectors of equal length");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

}  // namespace

std::string_view node_kind_name(NodeKind k) { return kKindNames[static_cast<std::size_t>(k)]; }
std::string_view flow_name(Flow f) { return kFlowNames[static_cast<std::size_t>(f)]; }

json ProgramGraph::to_json() const {
  json ns = json::array();
  for (const GraphNode& n : nodes) {
    ns.push_back({{"kind", node_kind_name(n.kind)}, {"text", n.text}, {"function", n.function},
                  {"block", n.block}});
  }
  json es = json::array();
  for (const GraphEdge& e : edges) {
    es.push_back({{"flow", flow_name(e.flow)}, {"position", e.position}, {"src", e.src}, {"dst", e.dst}});
  }
  json j = {{"nodes", std::move(ns)}, {"edges", std::move(es)}};
  if (values) j["values"] = *values;
  return j;
}

ProgramGraph ProgramGraph::from_json(const json& j) {
  try {
    ProgramGraph g;
    if (!j.is_object() || !j.contains("nodes") || !j.contains("edges"))
      throw DataError("graph JSON needs nodes and edges");
    for (const json& n : j.at("nodes")) {
      g.nodes.push_back({parse_kind(n.at("kind")), n.at("text").get<std::string>(),
                         n.at("function").get<int>(), n.at("block").get<int>()});
    }
    for (const json& e : j.at("edges")) {
      GraphEdge edge{parse_flow(e.at("flow")), e.at("position").get<int>(),
                     e.at("src").get<std::size_t>(), e.at("dst").get<std::size_t>()};
      if (edge.position < 0) throw DataError("negative edge position");
      if (edge.src >= g.nodes.size() || edge.dst >= g.nodes.size())
        throw DataError("edge endpoint out of range");
      g.edges.push_back(edge);
    }
    if (j.contains("values") && !j.at("values").is_null())
      g.values = j.at("values").get<std::vector<double>>();
    return g;
  } catch (const json::exception& e) {
    throw DataError(std::string("bad graph JSON: ") + e.what());
  }
}

ProgramGraph build_graph(const Program& p) {
  const TypeTable& types = p.types();
  const auto& fns = p.functions();
  ProgramGraph g;
  auto add_node = [&](NodeKind k, std::string text, std::size_t fi, std::size_t bi) {
    g.nodes.push_back({k, std::move(text), static_cast<int>(fi), static_cast<int>(bi)});
    return g.nodes.size() - 1;
  };

  // Pass 1: argument, instruction and result nodes.
  std::vector<std::vector<std::size_t>> arg_nodes(fns.size());
  std::vector<std::vector<std::vector<std::size_t>>> instr_nodes(fns.size());
  std::unordered_map<std::uint32_t, std::size_t> value_nodes;
  for (std::size_t fi = 0; fi < fns.size(); ++fi) {
    const Function& f = fns[fi];
    for (TypeId t : f.arg_types) arg_nodes[fi].push_back(add_node(NodeKind::Variable, types.render(t), fi, 0));
    instr_nodes[fi].resize(f.blocks.size());
    for (std::size_t bi = 0; bi < f.blocks.size(); ++bi) {
      for (const Instruction& ins : f.blocks[bi].instrs) {
        const std::size_t n = add_node(NodeKind::Instruction, std::string(opcode_name(ins.op)), fi, bi);
        instr_nodes[fi][bi].push_back(n);
        if (yields_value(ins, types)) {
          const std::size_t v = add_node(NodeKind::Variable, value_type_text(ins, types), fi, bi);
          value_nodes.emplace(ins.id, v);
          g.edges.push_back({Flow::Data, 0, n, v});
        }
      }
    }
  }

  // Pass 2: operands, control and call edges.
  for (std::size_t fi = 0; fi < fns.size(); ++fi) {
    const Function& f = fns[fi];
    for (std::size_t bi = 0; bi < f.blocks.size(); ++bi) {
      const auto& instrs = f.blocks[bi].instrs;
      for (std::size_t ii = 0; ii < instrs.size(); ++ii) {
        const Instruction& ins = instrs[ii];
        const std::size_t n = instr_nodes[fi][bi][ii];
        if (ii + 1 < instrs.size()) g.edges.push_back({Flow::Control, 0, n, instr_nodes[fi][bi][ii + 1]});
        int succ = 0;
        for (std::size_t k = 0; k < ins.num_operands(); ++k) {
          const Operand& o = ins.operand(k);
          const int pos = static_cast<int>(k);
          switch (o.kind) {
            case Operand::Kind::Value:
              g.edges.push_back({Flow::Data, pos, value_nodes.at(static_cast<std::uint32_t>(o.value)), n});
              break;
            case Operand::Kind::Arg:
              g.edges.push_back({Flow::Data, pos, arg_nodes[fi][static_cast<std::size_t>(o.value)], n});
              break;
            case Operand::Kind::Const: {
              const std::size_t c = add_node(NodeKind::Constant, constant_type_text(p, ins, k), fi, bi);
              g.edges.push_back({Flow::Data, pos, c, n});
              break;
            }
            case Operand::Kind::Block:
              g.edges.push_back(
                  {Flow::Control, succ++, n, instr_nodes[fi][static_cast<std::size_t>(o.value)].front()});
              break;
            case Operand::Kind::Func: {
              const auto callee = static_cast<std::size_t>(o.value);
              g.edges.push_back({Flow::Call, 0, n, instr_nodes[callee][0].front()});
              const Function& cf = fns[callee];
              for (std::size_t cb = 0; cb < cf.blocks.size(); ++cb) {
                for (std::size_t ci = 0; ci < cf.blocks[cb].instrs.size(); ++ci) {
                  if (cf.blocks[cb].instrs[ci].op == Opcode::Ret)
                    g.edges.push_back({Flow::Call, 0, instr_nodes[callee][cb][ci], n});
                }
              }
              break;
            }
          }
        }
      }
    }
  }
  return g;
}

ProgramGraph expand_type_graph(const ProgramGraph& in) {
  ProgramGraph g = in;
  TypeExpander ex(g);
  const std::size_t n = in.nodes.size();
  for (std::size_t i = 0; i < n; ++i) {
    const NodeKind k = g.nodes[i].kind;
    if (k != NodeKind::Variable && k != NodeKind::Constant) continue;
    const auto t = TypeParser(g.nodes[i].text).parse_all();
    if (!t) continue;
    const std::size_t tn = ex.node_for(*t);
    if (t->kind != TypeExpr::Kind::Prim) g.nodes[i].text = std::string(constructor_token(t->kind));
    g.edges.push_back({Flow::Type, 0, tn, i});
  }
  return g;
}

ProgramGraph program_graph(const Program& p) { return expand_type_graph(build_graph(p)); }

int block_relpos(const GraphEdge& e, const std::vector<GraphNode>& nodes) {
  const int a = nodes.at(e.src).block, b = nodes.at(e.dst).block;
  return (a > b) - (a < b);
}

int clamp_edge_position(int pos) {
  if (pos < 0) throw InputError("edge position must be non-negative");
  return std::min(pos, kMaxPosition);
}

ProgramGraph mixup(const ProgramGraph& a, const ProgramGraph& b) {
  if (!a.values || !b.values) throw InputError("mixup requires value vectors on both graphs");
  ProgramGraph g = a;
  const std::size_t off = a.nodes.size();
  g.nodes.insert(g.nodes.end(), b.nodes.begin(), b.nodes.end());
  for (GraphEdge e : b.edges) {
    e.src += off;
    e.dst += off;
    g.edges.push_back(e);
  }
  g.values = sum_values(*a.values, *b.values);
  return g;
}

Vocabulary Vocabulary::build(const std::vector<ProgramGraph>& graphs) {
  if (graphs.empty()) throw InputError("vocabulary needs at least one graph");
  std::vector<std::string> all;
  for (const ProgramGraph& g : graphs)
    for (const GraphNode& n : g.nodes) all.push_back(n.text);
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  Vocabulary v;
  v.tokens_ = std::move(all);
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) v.ids_.emplace(v.tokens_[i], static_cast<int>(i + 1));
  return v;
}

int Vocabulary::encode(const std::string& token) const {
  const auto it = ids_.find(token);
  return it == ids_.end() ? kUnknown : it->second;
}

json Vocabulary::to_json() const { return {{"tokens", tokens_}}; }

Vocabulary Vocabulary::from_json(const json& j) {
  try {
    Vocabulary v;
    v.tokens_ = j.at("tokens").get<std::vector<std::string>>();
    if (!std::is_sorted(v.tokens_.begin(), v.tokens_.end()) ||
        std::adjacent_find(v.tokens_.begin(), v.tokens_.end()) != v.tokens_.end()) {
      throw DataError("vocabulary tokens must be sorted and distinct");
    }
    for (std::size_t i = 0; i < v.tokens_.size(); ++i) v.ids_.emplace(v.tokens_[i], static_cast<int>(i + 1));
    return v;
  } catch (const json::exception& e) {
    throw DataError(std::string("bad vocabulary JSON: ") + e.what());
  }
}

EncodedGraph encode(const ProgramGraph& g, const Vocabulary& vocab) {
  EncodedGraph e;
  e.num_nodes = g.nodes.size();
  e.tokens.reserve(g.nodes.size());
  for (const GraphNode& n : g.nodes) e.tokens.push_back(vocab.encode(n.text));
  for (const GraphEdge& edge : g.edges) {
    e.src.push_back(static_cast<int>(edge.src));
    e.dst.push_back(static_cast<int>(edge.dst));
    e.flow.push_back(static_cast<int>(edge.flow));
    e.position.push_back(clamp_edge_position(edge.position));
    e.relpos.push_back(block_relpos(edge, g.nodes) + 1);
  }
  if (g.values) e.values = *g.values;
  return e;
}

EncodedGraph mixup(const EncodedGraph& a, const EncodedGraph& b) {
  if (a.values.empty() || b.values.empty()) throw InputError("mixup requires value vectors on both graphs");
  EncodedGraph e = a;
  const int off = static_cast<int>(a.num_nodes);
  e.num_nodes += b.num_nodes;
  e.tokens.insert(e.tokens.end(), b.tokens.begin(), b.tokens.end());
  for (std::size_t i = 0; i < b.num_edges(); ++i) {
    e.src.push_back(b.src[i] + off);
    e.dst.push_back(b.dst[i] + off);
  }
  e.flow.insert(e.flow.end(), b.flow.begin(), b.flow.end());
  e.position.insert(e.position.end(), b.position.begin(), b.position.end());
  e.relpos.insert(e.relpos.end(), b.relpos.begin(), b.relpos.end());
  e.values = sum_values(a.values, b.values);
  return e;
}

FlatFeatures flat_features(const Program& p) {
  FlatFeatures f{};
  const TypeTable& types = p.types();
  auto prim_of = [&](TypeId t) -> std::optional<Prim> {
    const TypeDesc& d = types.at(t);
    if (d.kind != TypeKind::Primitive) return std::nullopt;
    return d.prim;
  };

  std::unordered_map<std::uint32_t, std::size_t> uses;
  for (const Function& fn : p.functions())
    for (const Block& b : fn.blocks)
      for (const Instruction& ins : b.instrs)
        for (const Operand& o : ins.operands())
          if (o.is(Operand::Kind::Value)) ++uses[static_cast<std::uint32_t>(o.value)];

  for (const Function& fn : p.functions()) {
    f[2] += 1;
    f[52] += static_cast<std::int64_t>(fn.arg_types.size());
    if (fn.blocks.size() == 1) f[53] += 1;
    std::vector<std::size_t> preds(fn.blocks.size(), 0);
    for (std::size_t bi = 0; bi < fn.blocks.size(); ++bi) {
      const Instruction& term = fn.blocks[bi].instrs.back();
      std::size_t nsucc = 0;
      for (const Operand& o : term.operands()) {
        if (!o.is(Operand::Kind::Block)) continue;
        ++nsucc;
        ++preds[static_cast<std::size_t>(o.value)];
        if (static_cast<std::size_t>(o.value) == bi) f[36] += 1;
      }
      if (nsucc == 1) f[34] += 1;
      if (nsucc == 2) f[35] += 1;
    }
    for (std::size_t n : preds) {
      if (n == 1) f[32] += 1;
      if (n >= 2) f[33] += 1;
    }
    for (const Block& b : fn.blocks) {
      f[1] += 1;
      for (const Instruction& ins : b.instrs) {
        f[0] += 1;
        f[3 + static_cast<std::size_t>(ins.op)] += 1;
        bool all_const = ins.num_operands() > 0;
        std::size_t nconst = 0;
        for (const Operand& o : ins.operands()) {
          switch (o.kind) {
            case Operand::Kind::Const:
              f[27] += 1;
              ++nconst;
              break;
            case Operand::Kind::Value:
              f[28] += 1;
              break;
            case Operand::Kind::Arg:
              f[29] += 1;
              break;
            case Operand::Kind::Block:
              f[30] += 1;
              break;
            case Operand::Kind::Func:
              f[31] += 1;
              break;
          }
          if (!o.is(Operand::Kind::Const) && !o.is(Operand::Kind::Func)) all_const = false;
        }
        if (all_const) f[40] += 1;
        if (ins.num_operands() == 2 && nconst == 1 && ins.op != Opcode::Store && ins.op != Opcode::Gep)
          f[41] += 1;
        switch (ins.op) {
          case Opcode::Alloca:
            if (types.is_composite(ins.type)) f[26] += 1;
            break;
          case Opcode::Gep:
            if (ins.num_operands() > 1 && ins.operand(1).is(Operand::Kind::Const)) f[42] += 1;
            break;
          case Opcode::Store: {
            if (ins.operand(0).is(Operand::Kind::Const)) f[43] += 1;
            const Operand& ptr = ins.operand(1);
            if (ptr.is(Operand::Kind::Arg)) f[45] += 1;
            else f[44] += 1;
            break;
          }
          case Opcode::Load:
            if (ins.operand(0).is(Operand::Kind::Arg)) f[47] += 1;
            else f[46] += 1;
            break;
          case Opcode::Ret:
            if (ins.num_operands() > 0) f[54] += 1;
            break;
          case Opcode::Call:
            if (all_const) f[55] += 1;
            break;
          default:
            break;
        }
        if (yields_value(ins, types)) {
          const auto it = uses.find(ins.id);
          const std::size_t u = it == uses.end() ? 0 : it->second;
          f[u == 0 ? 37 : (u == 1 ? 38 : 39)] += 1;
          if (ins.op == Opcode::Alloca || ins.op == Opcode::Gep) {
            f[51] += 1;
          } else if (auto pr = prim_of(ins.type)) {
            if (*pr == Prim::I1) f[48] += 1;
            else if (*pr == Prim::I32) f[49] += 1;
            else if (*pr == Prim::F32 || *pr == Prim::F64) f[50] += 1;
          }
        }
      }
    }
  }
  return f;
}

}  // namespace passforge::graphrep
