#include "sase/flop_counter.hpp"

namespace sase::flops {

namespace {
thread_local std::uint64_t t_count = 0;
}

void add(std::uint64_t n) { t_count += n; }
std::uint64_t total() { return t_count; }

}  // namespace sase::flops
