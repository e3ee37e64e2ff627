#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "twnn/fixpoint.hpp"

namespace twnn {

enum class ExitReason { Converged, MaxIter, Skipped };

const char* to_string(ExitReason reason) noexcept;

struct BlockVisit {
  std::size_t block = 0;
  int iterations = 0;
  ExitReason reason = ExitReason::Converged;
  /// True when the block was entered through a backward hop.
  bool wormhole = false;
};

struct WormholeDecision {
  enum class Kind { Advance, HopBack, Halt };
  Kind kind = Kind::Halt;
  std::size_t target = 0;

  friend bool operator==(const WormholeDecision&, const WormholeDecision&) = default;
};

/// Controller state for one pass over a stack: which blocks ran, how they
/// exited, which wormhole gates are open, and how many backward hops remain.
///
/// Control only moves backward through a hop, and a hop revisit resumes at
/// the block after the one that requested it, so a pass makes at most
/// block_count + initial_hop_budget visits.
class WormholePlan {
 public:
  WormholePlan(std::size_t block_count, int backward_hop_budget);
  WormholePlan(std::size_t block_count, int backward_hop_budget, std::vector<bool> gates);

  std::size_t block_count() const noexcept { return gate_state_.size(); }
  const std::vector<BlockVisit>& visit_log() const noexcept { return visit_log_; }
  const std::vector<bool>& gate_state() const noexcept { return gate_state_; }
  int backward_hop_budget() const noexcept { return budget_; }
  int initial_hop_budget() const noexcept { return initial_budget_; }
  int hops_taken() const noexcept { return initial_budget_ - budget_; }

  void set_gate(std::size_t block, bool open);
  /// Exit reason of the latest visit to `block`, if any.
  std::optional<ExitReason> last_exit(std::size_t block) const;
  /// Appends a Skipped entry for each block that was never visited.
  void mark_unvisited_skipped();

 private:
  friend WormholeDecision wormhole_next(WormholePlan&, std::size_t, double, const FixResult&, double);

  std::vector<BlockVisit> visit_log_;
  std::vector<bool> gate_state_;
  int initial_budget_;
  int budget_;
  bool in_wormhole_ = false;
  std::optional<std::size_t> resume_at_;
};

/// Logs the visit to `current` and picks the next block:
///  (a) block_loss <= loss_threshold        -> advance
///  (b) fix hit max_iter unconverged, budget left, and some earlier open-gated
///      block last exited converged          -> hop back to the most recently
///                                              visited such block
///  (c) nothing left to advance to          -> halt
///  (d) otherwise                           -> advance
/// "Advance" means the block after `current`, or after the block that opened
/// the wormhole when `current` was itself a hop target.
WormholeDecision wormhole_next(WormholePlan& plan, std::size_t current, double block_loss,
                               const FixResult& fix_result, double loss_threshold);

struct BlockClassification {
  std::vector<std::size_t> useful;   // Dw
  std::vector<std::size_t> passive;  // Dp
};

/// Dw: blocks whose final visit converged after more than one iteration.
/// Dp: everything else (skipped, never visited, one-iteration, or max_iter exits).
BlockClassification classify_blocks(const WormholePlan& plan);

}  // namespace twnn
