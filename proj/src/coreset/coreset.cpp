#include "passforge/coreset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "passforge/error.hpp"

namespace passforge::coreset {

namespace {

constexpr double kTieEps = 1e-12;

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

RewardMatrix RewardMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
  RewardMatrix r;
  r.rows = rows.size();
  r.cols = rows.empty() ? 0 : rows[0].size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != r.cols) throw InputError("ragged reward matrix");
    r.values.insert(r.values.end(), rows[i].begin(), rows[i].end());
    r.row_ids.push_back(std::to_string(i));
  }
  for (std::size_t j = 0; j < r.cols; ++j) r.col_ids.push_back(j);
  return r;
}

RewardMatrix build_reward_matrix(const std::vector<Program>& programs,
                                 const std::vector<PassSequence>& candidates) {
  if (programs.empty() || candidates.empty()) throw InputError("reward matrix needs programs and candidates");
  RewardMatrix r;
  r.rows = programs.size();
  r.cols = candidates.size();
  r.values.resize(r.rows * r.cols);
  for (std::size_t i = 0; i < r.rows; ++i) {
    r.row_ids.push_back(std::to_string(programs[i].seed()));
    for (std::size_t j = 0; j < r.cols; ++j) r.at(i, j) = synthenv::sequence_reward(programs[i], candidates[j]);
  }
  for (std::size_t j = 0; j < r.cols; ++j) r.col_ids.push_back(j);
  return r;
}

RewardMatrix normalize_rows(const RewardMatrix& r) {
  RewardMatrix out = r;
  for (std::size_t i = 0; i < r.rows; ++i) {
    double m = 0;
    for (std::size_t j = 0; j < r.cols; ++j) m = std::max(m, r.at(i, j));
    if (!(m > 0)) throw InputError("reward rows must be positive");
    for (std::size_t j = 0; j < r.cols; ++j) out.at(i, j) = r.at(i, j) / m;
  }
  out.normalized = true;
  return out;
}

double objective(const RewardMatrix& r, const std::vector<std::size_t>& s) {
  if (s.empty()) return 0.0;
  double total = 0;
  for (std::size_t i = 0; i < r.rows; ++i) {
    double m = r.at(i, s[0]);
    for (std::size_t j : s) m = std::max(m, r.at(i, j));
    total += m;
  }
  return total;
}

Coreset greedy_select(const RewardMatrix& r, std::size_t k, const std::vector<PassSequence>* candidates) {
  if (k == 0 || k > r.cols) throw InputError("greedy_select: K must be in [1, M]");
  Coreset c;
  std::vector<double> best(r.rows, 0.0);
  std::vector<bool> taken(r.cols, false);
  for (std::size_t step = 0; step < k; ++step) {
    std::size_t pick = r.cols;
    double pick_gain = 0;
    for (std::size_t j = 0; j < r.cols; ++j) {
      if (taken[j]) continue;
      double gain = 0;
      for (std::size_t i = 0; i < r.rows; ++i) gain += std::max(0.0, r.at(i, j) - best[i]);
      if (gain > pick_gain + kTieEps) {
        pick = j;
        pick_gain = gain;
      }
    }
    if (pick == r.cols) break;
    taken[pick] = true;
    c.selected.push_back(pick);
    for (std::size_t i = 0; i < r.rows; ++i) best[i] = std::max(best[i], r.at(i, pick));
    c.objective_trace.push_back(objective(r, c.selected));
  }
  if (candidates) {
    for (std::size_t j : c.selected) c.sequences.push_back(candidates->at(r.col_ids[j]));
  }
  return c;
}

BruteForceResult brute_force_select(const RewardMatrix& r, std::size_t k) {
  if (k == 0 || k > r.cols) throw InputError("brute_force_select: K must be in [1, M]");
  double subsets = 1;
  for (std::size_t i = 0; i < k; ++i) subsets = subsets * static_cast<double>(r.cols - i) / static_cast<double>(i + 1);
  if (subsets > kMaxSubsets) throw InputError("brute_force_select: too many subsets");
  std::vector<std::size_t> s(k);
  for (std::size_t i = 0; i < k; ++i) s[i] = i;
  BruteForceResult out{s, objective(r, s)};
  while (true) {
    // Next combination in lexicographic order.
    std::size_t i = k;
    while (i > 0 && s[i - 1] == r.cols - k + i - 1) --i;
    if (i == 0) break;
    ++s[i - 1];
    for (std::size_t t = i; t < k; ++t) s[t] = s[t - 1] + 1;
    const double j = objective(r, s);
    if (j > out.objective + kTieEps) out = {s, j};
  }
  return out;
}

nlohmann::json Coreset::to_json() const {
  nlohmann::json seqs = nlohmann::json::array();
  for (const PassSequence& s : sequences) seqs.push_back(synthenv::sequence_to_ints(s));
  return {{"selected", selected}, {"sequences", seqs}, {"objective_trace", objective_trace}};
}

Coreset Coreset::from_json(const nlohmann::json& j) {
  Coreset c;
  try {
    c.selected = j.at("selected").get<std::vector<std::size_t>>();
    for (const auto& s : j.at("sequences")) {
      c.sequences.push_back(synthenv::sequence_from_ints(s.get<std::vector<int>>()));
    }
    c.objective_trace = j.at("objective_trace").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad coreset JSON: ") + e.what());
  } catch (const std::out_of_range& e) {
    throw DataError(std::string("bad pass id: ") + e.what());
  }
  if (c.sequences.empty()) throw DataError("coreset has no sequences");
  return c;
}

std::string to_csv(const RewardMatrix& r) {
  std::string out = "program_id";
  for (std::size_t j = 0; j < r.cols; ++j) out += ",seq_" + std::to_string(r.col_ids[j]);
  out += "\n";
  for (std::size_t i = 0; i < r.rows; ++i) {
    out += r.row_ids[i];
    for (std::size_t j = 0; j < r.cols; ++j) out += "," + format_double(r.at(i, j));
    out += "\n";
  }
  return out;
}

RewardMatrix from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(l);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!l.empty() && l.back() == ',') cells.emplace_back();
    return cells;
  };
  if (!std::getline(in, line)) throw DataError("empty reward matrix CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line);
  if (header.size() < 2 || header[0] != "program_id") throw DataError("CSV header must start with program_id");
  RewardMatrix r;
  r.cols = header.size() - 1;
  for (std::size_t j = 1; j < header.size(); ++j) {
    const std::string& h = header[j];
    std::size_t id = 0;
    const auto res = std::from_chars(h.data() + std::min<std::size_t>(4, h.size()), h.data() + h.size(), id);
    if (h.rfind("seq_", 0) != 0 || res.ec != std::errc() || res.ptr != h.data() + h.size()) {
      throw DataError("bad column header: " + h);
    }
    r.col_ids.push_back(id);
  }
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) throw DataError("CSV row " + std::to_string(r.rows + 1) + " has wrong width");
    r.row_ids.push_back(cells[0]);
    for (std::size_t j = 1; j < cells.size(); ++j) {
      double v = 0;
      const auto res = std::from_chars(cells[j].data(), cells[j].data() + cells[j].size(), v);
      if (res.ec != std::errc() || res.ptr != cells[j].data() + cells[j].size() || !std::isfinite(v) || !(v > 0)) {
        throw DataError("bad reward value: " + cells[j]);
      }
      r.values.push_back(v);
    }
    ++r.rows;
  }
  if (r.rows == 0) throw DataError("reward matrix CSV has no rows");
  r.normalized = true;
  for (std::size_t i = 0; i < r.rows && r.normalized; ++i) {
    double m = 0;
    for (std::size_t j = 0; j < r.cols; ++j) m = std::max(m, r.at(i, j));
    r.normalized = m == 1.0;
  }
  return r;
}

}  // namespace passforge::coreset
