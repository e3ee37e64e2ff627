#include "twnn/wormhole.hpp"

#include "twnn/error.hpp"

namespace twnn {

const char* to_string(ExitReason reason) noexcept {
  switch (reason) {
    case ExitReason::Converged: return "converged";
    case ExitReason::MaxIter: return "max_iter";
    case ExitReason::Skipped: return "skipped";
  }
  return "unknown";
}

WormholePlan::WormholePlan(std::size_t block_count, int backward_hop_budget)
    : WormholePlan(block_count, backward_hop_budget, std::vector<bool>(block_count, true)) {}

WormholePlan::WormholePlan(std::size_t block_count, int backward_hop_budget, std::vector<bool> gates)
    : gate_state_(std::move(gates)), initial_budget_(backward_hop_budget), budget_(backward_hop_budget) {
  if (block_count == 0) throw Error(ErrorKind::InvalidArgument, "plan over an empty stack");
  if (gate_state_.size() != block_count) throw Error(ErrorKind::InvalidArgument, "one gate per block expected");
  if (backward_hop_budget < 0) throw Error(ErrorKind::InvalidArgument, "backward_hop_budget must be >= 0");
}

void WormholePlan::set_gate(std::size_t block, bool open) { gate_state_.at(block) = open; }

std::optional<ExitReason> WormholePlan::last_exit(std::size_t block) const {
  for (auto it = visit_log_.rbegin(); it != visit_log_.rend(); ++it) {
    if (it->block == block) return it->reason;
  }
  return std::nullopt;
}

void WormholePlan::mark_unvisited_skipped() {
  for (std::size_t b = 0; b < block_count(); ++b) {
    if (!last_exit(b)) visit_log_.push_back(BlockVisit{b, 0, ExitReason::Skipped, false});
  }
}

WormholeDecision wormhole_next(WormholePlan& plan, std::size_t current, double block_loss,
                               const FixResult& fix_result, double loss_threshold) {
  if (current >= plan.block_count()) {
    throw Error(ErrorKind::InvalidArgument, "block index " + std::to_string(current) + " outside the stack");
  }
  plan.visit_log_.push_back(BlockVisit{current, fix_result.iterations,
                                       fix_result.converged ? ExitReason::Converged : ExitReason::MaxIter,
                                       plan.in_wormhole_});

  const std::size_t forward = plan.resume_at_.value_or(current + 1);

  if (!(block_loss <= loss_threshold) && !fix_result.converged && plan.budget_ > 0) {
    // Most recently visited earlier block whose latest exit converged.
    std::vector<bool> seen(plan.block_count(), false);
    for (auto it = plan.visit_log_.rbegin(); it != plan.visit_log_.rend(); ++it) {
      const std::size_t b = it->block;
      if (b >= current || seen[b]) continue;
      seen[b] = true;
      if (it->reason == ExitReason::Converged && plan.gate_state_[b]) {
        --plan.budget_;
        plan.in_wormhole_ = true;
        plan.resume_at_ = forward;
        return {WormholeDecision::Kind::HopBack, b};
      }
    }
  }

  plan.in_wormhole_ = false;
  plan.resume_at_.reset();
  if (forward >= plan.block_count()) return {WormholeDecision::Kind::Halt, forward};
  return {WormholeDecision::Kind::Advance, forward};
}

BlockClassification classify_blocks(const WormholePlan& plan) {
  BlockClassification out;
  for (std::size_t b = 0; b < plan.block_count(); ++b) {
    int iterations = 0;
    std::optional<ExitReason> reason;
    for (auto it = plan.visit_log().rbegin(); it != plan.visit_log().rend(); ++it) {
      if (it->block == b) {
        reason = it->reason;
        iterations = it->iterations;
        break;
      }
    }
    if (reason == ExitReason::Converged && iterations > 1) {
      out.useful.push_back(b);
    } else {
      out.passive.push_back(b);
    }
  }
  return out;
}

}  // namespace twnn
