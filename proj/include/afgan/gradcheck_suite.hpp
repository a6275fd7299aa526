#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "afgan/grad_check.hpp"

namespace afgan {

struct SuiteCheck {
  std::string name;
  GradCheckReport report;
};

// Finite-difference checks in 64-bit for every layer kind, each activation,
// the BCE loss and the composite discriminator(generator(z)) at desk scale.
std::vector<SuiteCheck> run_gradcheck_suite(double tolerance = 1e-4, std::uint64_t seed = 1);

}  // namespace afgan
