#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "passforge/error.hpp"
#include "passforge/evalcli.hpp"

namespace passforge::evalcli {

std::size_t PolicyPlan::total() const {
  std::size_t n = 0;
  for (const auto& s : steps) n += s.allotted;
  return n;
}

PolicyPlan infer(std::span<const double> scores, const std::vector<PassSequence>& sequences, std::size_t budget) {
  if (scores.size() != sequences.size()) throw InputError("infer: score count differs from coreset size");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  PolicyPlan plan;
  std::size_t left = budget;
  for (std::size_t k : order) {
    if (left == 0) break;
    const std::size_t a = std::min(left, sequences[k].size());
    if (a == 0) continue;
    plan.steps.push_back({k, a});
    left -= a;
  }
  return plan;
}

Execution execute_plan(const Program& p, const PolicyPlan& plan, const std::vector<PassSequence>& sequences) {
  Execution ex{p.instruction_count(), 0};
  for (const auto& s : plan.steps) {
    ex.best_size = std::min(ex.best_size, synthenv::best_size_within(p, sequences.at(s.index), s.allotted));
    ex.passes_used += s.allotted;
  }
  return ex;
}

std::size_t SizeTable::best_within(std::size_t k, std::size_t allowance) const {
  const auto& tr = traces.at(k);
  const std::size_t n = std::min(allowance, tr.size() - 1);
  return *std::min_element(tr.begin(), tr.begin() + static_cast<std::ptrdiff_t>(n) + 1);
}

SizeTable size_table(const Program& p, const std::vector<PassSequence>& sequences) {
  SizeTable t;
  t.initial = p.instruction_count();
  t.traces.reserve(sequences.size());
  for (const auto& seq : sequences) {
    std::vector<std::size_t> tr{t.initial};
    Program cur = p;
    for (auto a : seq) {
      cur = synthenv::apply_pass(cur, a);
      tr.push_back(cur.instruction_count());
    }
    t.traces.push_back(std::move(tr));
  }
  return t;
}

Execution execute_plan(const SizeTable& table, const PolicyPlan& plan) {
  Execution ex{table.initial, 0};
  for (const auto& s : plan.steps) {
    ex.best_size = std::min(ex.best_size, table.best_within(s.index, s.allotted));
    ex.passes_used += s.allotted;
  }
  return ex;
}

std::size_t oracle_eval(const Program& p, const std::vector<PassSequence>& sequences) {
  std::size_t best = p.instruction_count();
  for (const auto& s : sequences) best = std::min(best, synthenv::best_size_within(p, s));
  return best;
}

std::vector<double> popularity(const coreset::RewardMatrix& train, const std::vector<std::size_t>& columns) {
  if (columns.empty()) throw InputError("popularity: no columns");
  for (auto c : columns) {
    if (c >= train.cols) throw InputError("popularity: column out of range");
  }
  std::vector<double> pop(columns.size(), 0.0);
  std::vector<std::size_t> tied;
  for (std::size_t i = 0; i < train.rows; ++i) {
    double m = train.at(i, columns[0]);
    for (auto c : columns) m = std::max(m, train.at(i, c));
    tied.clear();
    for (std::size_t k = 0; k < columns.size(); ++k) {
      if (train.at(i, columns[k]) == m) tied.push_back(k);
    }
    for (auto k : tied) pop[k] += 1.0 / static_cast<double>(tied.size());
  }
  return pop;
}

std::size_t topk_popular_eval(const Program& p, const std::vector<PassSequence>& sequences,
                              std::span<const double> pop, std::size_t budget) {
  return execute_plan(p, infer(pop, sequences, budget), sequences).best_size;
}

namespace {

void check_rows(std::span<const ReportRow> rows) {
  if (rows.empty()) throw InputError("metrics need at least one program");
  for (const auto& r : rows) {
    if (r.size_oz == 0 || r.size_policy == 0) throw InputError("metrics: zero program size");
  }
}

Summary summarize(const std::string& group, std::span<const ReportRow> rows) {
  Summary s;
  s.group = group;
  s.programs = rows.size();
  s.mean_over_oz = mean_over_oz(rows);
  s.gmean_over_oz = gmean_over_oz(rows);
  for (const auto& r : rows) s.max_passes = std::max(s.max_passes, r.passes_used);
  return s;
}

nlohmann::json summary_json(const Summary& s) {
  return {{"group", s.group},
          {"programs", s.programs},
          {"mean_over_oz", s.mean_over_oz},
          {"gmean_over_oz", s.gmean_over_oz},
          {"max_passes", s.max_passes}};
}

}  // namespace

double mean_over_oz(std::span<const ReportRow> rows) {
  check_rows(rows);
  double sum = 0;
  for (const auto& r : rows) {
    const double oz = static_cast<double>(r.size_oz);
    sum += (oz - static_cast<double>(r.size_policy)) / oz;
  }
  return sum / static_cast<double>(rows.size());
}

double gmean_over_oz(std::span<const ReportRow> rows) {
  check_rows(rows);
  double log_sum = 0;
  for (const auto& r : rows) {
    log_sum += std::log(static_cast<double>(r.size_oz)) - std::log(static_cast<double>(r.size_policy));
  }
  return std::exp(log_sum / static_cast<double>(rows.size()));
}

Summary EvalReport::aggregate() const { return summarize("all", rows); }

std::vector<Summary> EvalReport::by_family() const {
  std::map<std::string, std::vector<ReportRow>> groups;
  for (const auto& r : rows) groups[r.family].push_back(r);
  std::vector<Summary> out;
  for (const auto& [name, g] : groups) out.push_back(summarize(name, g));
  return out;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : rows) {
    rs.push_back({{"program_id", r.program_id},
                  {"family", r.family},
                  {"size_o0", r.size_o0},
                  {"size_oz", r.size_oz},
                  {"size_policy", r.size_policy},
                  {"passes_used", r.passes_used}});
  }
  nlohmann::json fam = nlohmann::json::array();
  for (const auto& s : by_family()) fam.push_back(summary_json(s));
  return {{"method", method},
          {"budget", budget},
          {"rows", rs},
          {"aggregate", rows.empty() ? nlohmann::json(nullptr) : summary_json(aggregate())},
          {"families", fam}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  try {
    EvalReport rep;
    rep.method = j.at("method").get<std::string>();
    rep.budget = j.at("budget").get<std::size_t>();
    for (const auto& r : j.at("rows")) {
      rep.rows.push_back({r.at("program_id").get<std::string>(), r.at("family").get<std::string>(),
                          r.at("size_o0").get<std::size_t>(), r.at("size_oz").get<std::size_t>(),
                          r.at("size_policy").get<std::size_t>(), r.at("passes_used").get<std::size_t>()});
    }
    return rep;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("eval report: ") + e.what());
  }
}

std::string EvalReport::summary_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "method,group,programs,mean_over_oz,gmean_over_oz,max_passes\n";
  auto line = [&](const Summary& s) {
    os << method << ',' << s.group << ',' << s.programs << ',' << s.mean_over_oz << ',' << s.gmean_over_oz << ','
       << s.max_passes << '\n';
  };
  for (const auto& s : by_family()) line(s);
  if (!rows.empty()) line(aggregate());
  return os.str();
}

namespace {

ReportRow base_row(const synthenv::ProgramRecord& rec) {
  const auto b = synthenv::baseline_sizes(rec.program);
  ReportRow r;
  r.program_id = std::to_string(rec.config.seed);
  r.family = std::string(synthenv::family_name(rec.config.family));
  r.size_o0 = b.size_o0;
  r.size_oz = b.size_oz;
  return r;
}

}  // namespace

EvalReport evaluate(const std::string& method, const std::vector<synthenv::ProgramRecord>& programs,
                    const std::vector<PassSequence>& sequences,
                    const std::function<PolicyPlan(std::size_t)>& plan_for, std::size_t budget) {
  EvalReport rep{method, budget, {}};
  for (std::size_t i = 0; i < programs.size(); ++i) {
    ReportRow r = base_row(programs[i]);
    const Execution ex = execute_plan(programs[i].program, plan_for(i), sequences);
    r.size_policy = ex.best_size;
    r.passes_used = ex.passes_used;
    rep.rows.push_back(std::move(r));
  }
  return rep;
}

EvalReport evaluate_oracle(const std::vector<synthenv::ProgramRecord>& programs,
                           const std::vector<PassSequence>& sequences) {
  std::size_t total = 0;
  for (const auto& s : sequences) total += s.size();
  EvalReport rep{"oracle", 0, {}};
  for (const auto& rec : programs) {
    ReportRow r = base_row(rec);
    r.size_policy = oracle_eval(rec.program, sequences);
    r.passes_used = total;
    rep.rows.push_back(std::move(r));
  }
  return rep;
}

EvalReport evaluate_oz(const std::vector<synthenv::ProgramRecord>& programs) {
  EvalReport rep{"oz", synthenv::oz_sequence().size(), {}};
  for (const auto& rec : programs) {
    ReportRow r = base_row(rec);
    r.size_policy = r.size_oz;
    r.passes_used = synthenv::oz_sequence().size();
    rep.rows.push_back(std::move(r));
  }
  return rep;
}

}  // namespace passforge::evalcli
