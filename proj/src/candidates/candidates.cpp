#include "passforge/candidates.hpp"

#include <algorithm>
#include <optional>

#include "passforge/error.hpp"
#include "passforge/rng.hpp"

namespace passforge::candidates {

using synthenv::PassId;

PassSequence truncate_sequence(const Program& p, const PassSequence& seq) {
  const synthenv::RolloutResult r = synthenv::rollout(p, seq);
  // kept[k] = (pass, hash after it); the hash before the first is the initial state.
  std::vector<std::pair<PassId, std::uint64_t>> kept;
  for (std::size_t i = 0; i < r.best_step; ++i) {
    const std::uint64_t after = r.state_hashes[i + 1];
    const std::uint64_t before = kept.empty() ? r.state_hashes[0] : kept.back().second;
    if (after == before) continue;
    if (after == r.state_hashes[0]) {
      kept.clear();
      continue;
    }
    auto loop = std::find_if(kept.begin(), kept.end(), [&](const auto& k) { return k.second == after; });
    if (loop != kept.end()) {
      kept.erase(loop + 1, kept.end());
      continue;
    }
    kept.emplace_back(seq[i], after);
  }
  PassSequence out;
  out.reserve(kept.size());
  for (const auto& [a, h] : kept) out.push_back(a);
  return out;
}

std::vector<PassSequence> length_lex_dedup(std::vector<Scored> cands) {
  std::stable_sort(cands.begin(), cands.end(), [](const Scored& a, const Scored& b) {
    return synthenv::length_lex_less(a.seq, b.seq);
  });
  std::vector<Ratio> seen;
  std::vector<PassSequence> out;
  for (Scored& c : cands) {
    if (std::any_of(seen.begin(), seen.end(), [&](const Ratio& r) { return r == c.reward; })) continue;
    seen.push_back(c.reward);
    out.push_back(std::move(c.seq));
  }
  return out;
}

CandidateSet mine_candidates(const std::vector<Program>& programs, std::size_t episodes,
                             std::size_t max_len, std::uint64_t rng_seed) {
  if (programs.empty()) throw InputError("mine_candidates: no programs");
  if (episodes == 0) throw InputError("mine_candidates: episodes must be >= 1");
  struct Found {
    PassSequence seq;
    Provenance prov;
  };
  std::vector<Found> found;
  for (std::size_t pi = 0; pi < programs.size(); ++pi) {
    const Program& p = programs[pi];
    Rng rng(mix_seed(rng_seed, pi));
    std::optional<Ratio> best;
    std::vector<std::pair<PassSequence, std::size_t>> tied;
    for (std::size_t e = 0; e < episodes; ++e) {
      PassSequence seq(max_len);
      for (PassId& a : seq) a = PassId(static_cast<int>(rng.below(synthenv::kNumPasses)));
      const Ratio r = synthenv::sequence_reward_exact(p, seq);
      if (!best || r > *best) {
        best = r;
        tied.clear();
      }
      if (r == *best) tied.emplace_back(std::move(seq), e);
    }
    if (!(*best > Ratio{1, 1})) continue;
    std::optional<Found> pick;
    for (const auto& [seq, e] : tied) {
      PassSequence t = truncate_sequence(p, seq);
      if (!pick || synthenv::length_lex_less(t, pick->seq)) {
        pick = Found{std::move(t), {p.seed(), e, seq.size()}};
      }
    }
    found.push_back(std::move(*pick));
  }
  std::stable_sort(found.begin(), found.end(),
                   [](const Found& a, const Found& b) { return synthenv::length_lex_less(a.seq, b.seq); });
  CandidateSet out;
  for (Found& f : found) {
    if (!out.sequences.empty() && out.sequences.back() == f.seq) continue;
    out.sequences.push_back(std::move(f.seq));
    out.provenance.push_back(f.prov);
  }
  return out;
}

nlohmann::json CandidateSet::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const PassSequence& s : sequences) j.push_back(synthenv::sequence_to_ints(s));
  return j;
}

nlohmann::json CandidateSet::provenance_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const Provenance& p : provenance) {
    j.push_back({{"program_seed", p.program_seed}, {"episode", p.episode}, {"original_length", p.original_length}});
  }
  return j;
}

CandidateSet CandidateSet::from_json(const nlohmann::json& seqs, const nlohmann::json* provenance) {
  CandidateSet out;
  try {
    if (!seqs.is_array()) throw DataError("candidate file must be a JSON array");
    for (const auto& s : seqs) {
      const auto ints = s.get<std::vector<int>>();
      if (ints.empty() || ints.size() > synthenv::kEpisodeLength) {
        throw DataError("candidate length must be in [1, 45]");
      }
      out.sequences.push_back(synthenv::sequence_from_ints(ints));
    }
    if (provenance) {
      for (const auto& p : *provenance) {
        out.provenance.push_back({p.at("program_seed").get<std::uint64_t>(), p.at("episode").get<std::size_t>(),
                                  p.at("original_length").get<std::size_t>()});
      }
      if (out.provenance.size() != out.sequences.size()) throw DataError("provenance length mismatch");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad candidate JSON: ") + e.what());
  } catch (const std::out_of_range& e) {
    throw DataError(std::string("bad pass id: ") + e.what());
  }
  return out;
}

}  // namespace passforge::candidates
