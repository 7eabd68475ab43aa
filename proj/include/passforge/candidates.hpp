#pragma once

// Candidate pass-sequence mining with a uniform random policy.

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "passforge/synthenv.hpp"

namespace passforge::candidates {

using synthenv::PassSequence;
using synthenv::Program;
using synthenv::Ratio;

struct Provenance {
  std::uint64_t program_seed = 0;
  std::size_t episode = 0;
  std::size_t original_length = 0;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct CandidateSet {
  std::vector<PassSequence> sequences;  // sorted length-lex, no duplicates
  std::vector<Provenance> provenance;   // parallel to sequences

  nlohmann::json to_json() const;             // array of integer arrays
  nlohmann::json provenance_json() const;     // sidecar
  // Throws DataError on malformed input.
  static CandidateSet from_json(const nlohmann::json& seqs, const nlohmann::json* provenance = nullptr);
};

// Drops steps that leave the state unchanged, loops that return to an earlier
// state, and everything after the best step.
PassSequence truncate_sequence(const Program& p, const PassSequence& seq);

struct Scored {
  PassSequence seq;
  Ratio reward;
};

// Among equal rewards keep only the length-lex first; output sorted length-lex.
std::vector<PassSequence> length_lex_dedup(std::vector<Scored> cands);

// Throws InputError on an empty program list or zero episodes.
CandidateSet mine_candidates(const std::vector<Program>& programs, std::size_t episodes,
                             std::size_t max_len, std::uint64_t rng_seed);

}  // namespace passforge::candidates
