#include "robsim/rob.hpp"

#include <algorithm>

namespace robsim {

void compute_shadows(Rob& rob, Cycle now) {
  std::optional<SeqNum> cover;
  for (auto& e : rob) {
    const bool was_shadowed = e.shadow.has_value();
    e.shadow = cover;
    if (was_shadowed && !cover) e.unshadow_cycle = now;
    if (!cover && e.is_branch() && !e.done) cover = e.seq;
  }
}

namespace {

template <typename R>
auto* find_in(R& rob, SeqNum seq) {
  auto it = std::lower_bound(rob.begin(), rob.end(), seq, [](const RobEntry& e, SeqNum s) { return e.seq < s; });
  return (it != rob.end() && it->seq == seq) ? &*it : nullptr;
}

}  // namespace

const RobEntry* find_entry(const Rob& rob, SeqNum seq) { return find_in(rob, seq); }
RobEntry* find_entry(Rob& rob, SeqNum seq) { return find_in(rob, seq); }

}  // namespace robsim
