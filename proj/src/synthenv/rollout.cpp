#include <algorithm>
#include <set>

#include "passforge/rng.hpp"
#include "passforge/synthenv.hpp"

namespace passforge::synthenv {

RolloutResult rollout(const Program& p, const PassSequence& seq) {
  RolloutResult r;
  r.sizes.reserve(seq.size() + 1);
  r.state_hashes.reserve(seq.size() + 1);
  r.sizes.push_back(p.instruction_count());
  r.state_hashes.push_back(p.content_hash());
  r.best_size = p.instruction_count();
  r.best_state = p;
  Program cur = p;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    cur = apply_pass(cur, seq[i]);
    r.sizes.push_back(cur.instruction_count());
    r.state_hashes.push_back(cur.content_hash());
    if (cur.instruction_count() < r.best_size) {
      r.best_size = cur.instruction_count();
      r.best_step = i + 1;
      r.best_state = cur;
    }
  }
  return r;
}

std::size_t best_size_within(const Program& p, const PassSequence& seq, std::size_t allowance) {
  std::size_t best = p.instruction_count();
  Program cur = p;
  const std::size_t n = std::min(allowance, seq.size());
  for (std::size_t i = 0; i < n; ++i) {
    cur = apply_pass(cur, seq[i]);
    best = std::min(best, cur.instruction_count());
  }
  return best;
}

BaselineSizes baseline_sizes(const Program& p) {
  return {p.instruction_count(), best_size_within(p, oz_sequence())};
}

Ratio sequence_reward_exact(const Program& p, const PassSequence& seq) {
  return {p.instruction_count(), best_size_within(p, seq)};
}

double sequence_reward(const Program& p, const PassSequence& seq) {
  return sequence_reward_exact(p, seq).value();
}

PassSequence greedy_calibrate(const std::vector<Program>& programs, std::size_t length) {
  auto joint_hash = [](const std::vector<Program>& ps) {
    std::uint64_t h = 0;
    for (const Program& p : ps) h = mix_seed(h, p.content_hash());
    return h;
  };
  std::vector<Program> cur = programs;
  std::set<std::uint64_t> visited{joint_hash(cur)};
  PassSequence seq;
  for (std::size_t step = 0; step < length; ++step) {
    std::size_t best_total = SIZE_MAX;
    std::size_t best_changed = 0;
    int best_pass = 0;
    std::vector<Program> best_states;
    for (int a = 0; a < static_cast<int>(kNumPasses); ++a) {
      std::vector<Program> next;
      next.reserve(cur.size());
      std::size_t total = 0, changed = 0;
      for (const Program& p : cur) {
        next.push_back(apply_pass(p, PassId(a)));
        total += next.back().instruction_count();
        changed += next.back().content_hash() != p.content_hash();
      }
      // Revisiting an earlier joint state counts as no change.
      if (changed > 0 && visited.count(joint_hash(next))) changed = 0;
      if (total < best_total || (total == best_total && changed > best_changed)) {
        best_total = total;
        best_changed = changed;
        best_pass = a;
        best_states = std::move(next);
      }
    }
    seq.push_back(PassId(best_pass));
    cur = std::move(best_states);
    visited.insert(joint_hash(cur));
  }
  return seq;
}

std::vector<Program> oz_calibration_programs() {
  std::vector<Program> out;
  for (std::size_t f = 0; f < kNumFamilies; ++f) {
    for (std::uint64_t i = 0; i < 8; ++i) {
      GeneratorConfig cfg;
      cfg.family = static_cast<Family>(f);
      cfg.size_class = i < 6 ? SizeClass::Small : SizeClass::Medium;
      cfg.seed = mix_seed(0xca11b8a7e5ULL, f * 100 + i);
      out.push_back(generate_program(cfg.seed, cfg));
    }
  }
  return out;
}

const PassSequence& oz_sequence() {
  static const PassSequence seq = [] {
    // Frozen output of greedy_calibrate(oz_calibration_programs(), 45).
    static constexpr int kFrozen[] = {21, 25, 2, 119, 45, 35, 70, 93, 25, 2, 110, 117, 25, 117, 45,
                                      21, 98, 122, 18, 77, 70, 117, 45, 54, 98, 122, 74, 77, 98, 0,
                                      0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
    return sequence_from_ints(kFrozen);
  }();
  return seq;
}

}  // namespace passforge::synthenv
