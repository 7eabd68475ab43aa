#pragma once

// Reward matrix, coverage objective and greedy coreset selection.

#include <string>
#include <vector>

#include <json.hpp>

#include "passforge/synthenv.hpp"

namespace passforge::coreset {

using synthenv::PassSequence;
using synthenv::Program;

struct RewardMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // row-major
  std::vector<std::string> row_ids;
  std::vector<std::size_t> col_ids;
  bool normalized = false;

  double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  double& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }

  static RewardMatrix from_rows(const std::vector<std::vector<double>>& rows);
};

// values[i][j] = sequence_reward(programs[i], candidates[j]).
// Row ids default to the program seeds. Throws InputError on empty inputs.
RewardMatrix build_reward_matrix(const std::vector<Program>& programs,
                                 const std::vector<PassSequence>& candidates);

RewardMatrix normalize_rows(const RewardMatrix& r);

// J(S) = sum_i max_{j in S} r_ij, with J({}) = 0.
double objective(const RewardMatrix& r, const std::vector<std::size_t>& s);

struct Coreset {
  std::vector<std::size_t> selected;
  std::vector<PassSequence> sequences;
  std::vector<double> objective_trace;

  nlohmann::json to_json() const;
  static Coreset from_json(const nlohmann::json& j);  // DataError on bad input
};

// Ties go to the lowest column index; stops early when no column adds value.
// `candidates`, when given, fills Coreset::sequences (indexed by col_ids).
Coreset greedy_select(const RewardMatrix& r, std::size_t k,
                      const std::vector<PassSequence>* candidates = nullptr);

struct BruteForceResult {
  std::vector<std::size_t> selected;
  double objective = 0;
};

inline constexpr double kMaxSubsets = 1e6;

// Exact maximizer; ties go to the lexicographically smallest set.
// Throws InputError when C(M, K) exceeds kMaxSubsets.
BruteForceResult brute_force_select(const RewardMatrix& r, std::size_t k);

std::string to_csv(const RewardMatrix& r);
// Throws DataError on malformed text.
RewardMatrix from_csv(const std::string& text);

}  // namespace passforge::coreset
