#pragma once

/// Finite-difference verification of every analytic gradient in the library:
/// the weakened distance, both cosine variants, the seven losses (with their
/// mined pair sets frozen), and the encoder backward, alone and composed
/// with a loss. Cases are generated from seeded substreams and filtered away
/// from hinge kinks and degenerate norms, where one-sided behavior would
/// make central differences meaningless.

#include <cstdint>
#include <string>
#include <vector>

namespace ism {

struct GradCheckOptions {
  std::uint64_t seed = 0;
  int cases_distance = 300;
  int cases_cosine = 150;  // per variant
  int cases_loss = 60;     // per loss
  int cases_encoder = 40;
  int cases_composed = 20;
  double fd_step = 1e-5;
  double tol = 1e-5;
  // Deliberately flips one gradient block inside the checker's analytic
  // path, proving the harness catches sign errors. Never touches the
  // library's real gradients.
  bool inject_sign_bug = false;
};

struct GradCheckReport {
  struct Kind {
    std::string name;
    int cases = 0;
    double max_rel_err = 0.0;
  };
  std::vector<Kind> kinds;
  int total_cases = 0;
  double max_rel_err = 0.0;
  double tol = 0.0;
  bool pass = false;
};

GradCheckReport run_gradcheck(const GradCheckOptions& opt);

}  // namespace ism
