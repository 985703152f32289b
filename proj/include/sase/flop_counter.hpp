#pragma once

#include <cstdint>

namespace sase::flops {

// Runtime operation counter incremented inside every primitive kernel.
// Convention: one multiply-accumulate counts as one FLOP for conv, linear
// and matmul; every other op counts once per output element; pure data
// movement (reshape, transpose, concat, split) is free.
void add(std::uint64_t n);
std::uint64_t total();

// Reads the number of FLOPs issued on this thread since construction.
class Scope {
 public:
  Scope() : start_(total()) {}
  std::uint64_t elapsed() const { return total() - start_; }

 private:
  std::uint64_t start_;
};

}  // namespace sase::flops
