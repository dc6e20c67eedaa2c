#pragma once

#include "tfacm/tensor.hpp"

#include <cstdint>
#include <ostream>
#include <string>

namespace tfacm {

// Invariant suites with seeded random weights and inputs. Each prints one
// line per property ("[pass]"/"[FAIL]", with the failing trial's seed) and
// returns false if any property failed.
bool verify_causality(std::uint64_t seed, int trials, std::ostream& log);
bool verify_streaming(std::uint64_t seed, int trials, std::ostream& log);
bool verify_dsp(std::uint64_t seed, int trials, std::ostream& log);
bool verify_loss(std::uint64_t seed, int trials, std::ostream& log);

bool run_suite(const std::string& name, std::uint64_t seed, int trials, std::ostream& log);

// Deterministic test signal in [-0.5, 0.5], bit-reproducible across platforms.
Tensor random_signal(std::uint64_t seed, std::size_t len);

}  // namespace tfacm
