#pragma once

#include <string>
#include <vector>

#include "hrm/harness.hpp"

namespace hrm::properties {

struct PropertyResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Mean over `inputs` of KL( N(m_a(x), s_a^2) || N(m_b(x), s_b^2) ), where
/// each conditional is an ordinary least-squares fit of y on the chosen
/// columns of its own sample (plus an intercept).
double gaussian_conditional_kl(const Dataset& a, const Dataset& b, const std::vector<int>& cols,
                               const Matrix& inputs);

/// One selection-bias instance: true if the conditional KL between the two
/// training environments is at least as large on the variant columns as on
/// all of X.
bool kl_inequality_holds(const synthetic::SelectionBiasConfig& config, std::uint64_t seed,
                         double* kl_x = nullptr, double* kl_psi = nullptr);

/// The invariant suite used by `hrm_lab selftest` and the acceptance run.
std::vector<PropertyResult> run_property_suite(std::uint64_t seed = 0);

}  // namespace hrm::properties
