#pragma once

// Budgeted inference, the Oracle and Top-45 baselines, metrics and reports.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "passforge/coreset.hpp"
#include "passforge/synthenv.hpp"

namespace passforge::evalcli {

using synthenv::PassSequence;
using synthenv::Program;

inline constexpr std::size_t kBudget = 45;

struct PlanStep {
  std::size_t index = 0;     // coreset position
  std::size_t allotted = 0;  // passes rolled out from this sequence
  friend bool operator==(const PlanStep&, const PlanStep&) = default;
};

struct PolicyPlan {
  std::vector<PlanStep> steps;
  std::size_t total() const;
};

// Descending score, ties to the lower index. The sequence that would cross
// the budget is truncated to the remaining allowance.
// Throws InputError when |scores| != |sequences|.
PolicyPlan infer(std::span<const double> scores, const std::vector<PassSequence>& sequences,
                 std::size_t budget = kBudget);

struct Execution {
  std::size_t best_size = 0;
  std::size_t passes_used = 0;
};

// Every step restarts from `p`; the result never exceeds the initial size.
Execution execute_plan(const Program& p, const PolicyPlan& plan, const std::vector<PassSequence>& sequences);

// Per-sequence rollout size traces of one program, so that any plan can be
// scored without re-running passes.
struct SizeTable {
  std::size_t initial = 0;
  std::vector<std::vector<std::size_t>> traces;  // traces[k][0] == initial

  std::size_t best_within(std::size_t k, std::size_t allowance) const;
};
SizeTable size_table(const Program& p, const std::vector<PassSequence>& sequences);
Execution execute_plan(const SizeTable& table, const PolicyPlan& plan);

// Unbudgeted minimum over the whole coreset.
std::size_t oracle_eval(const Program& p, const std::vector<PassSequence>& sequences);

// Row-maximum frequency over the coreset columns of a training matrix;
// a row with t tied maxima gives 1/t to each.
std::vector<double> popularity(const coreset::RewardMatrix& train, const std::vector<std::size_t>& columns);
std::size_t topk_popular_eval(const Program& p, const std::vector<PassSequence>& sequences,
                              std::span<const double> popularity, std::size_t budget = kBudget);

struct ReportRow {
  std::string program_id;
  std::string family;
  std::size_t size_o0 = 0;
  std::size_t size_oz = 0;
  std::size_t size_policy = 0;
  std::size_t passes_used = 0;
  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

// Throws InputError on an empty list or a zero size.
double mean_over_oz(std::span<const ReportRow> rows);
double gmean_over_oz(std::span<const ReportRow> rows);

struct Summary {
  std::string group;  // family name or "all"
  std::size_t programs = 0;
  double mean_over_oz = 0;
  double gmean_over_oz = 0;
  std::size_t max_passes = 0;
  friend bool operator==(const Summary&, const Summary&) = default;
};

struct EvalReport {
  std::string method;
  std::size_t budget = kBudget;  // 0 when unbudgeted
  std::vector<ReportRow> rows;

  Summary aggregate() const;
  std::vector<Summary> by_family() const;  // sorted by family name

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);  // DataError
  // One line per family plus "all".
  std::string summary_csv() const;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

// Builds a report; `plan_for(i)` returns the plan for program i.
EvalReport evaluate(const std::string& method, const std::vector<synthenv::ProgramRecord>& programs,
                    const std::vector<PassSequence>& sequences,
                    const std::function<PolicyPlan(std::size_t)>& plan_for, std::size_t budget = kBudget);
EvalReport evaluate_oracle(const std::vector<synthenv::ProgramRecord>& programs,
                           const std::vector<PassSequence>& sequences);
EvalReport evaluate_oz(const std::vector<synthenv::ProgramRecord>& programs);

}  // namespace passforge::evalcli
