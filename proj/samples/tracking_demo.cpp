// Tracks the kinematic task with both filters and prints the summary metrics.
//
//   tracking_demo [seed] [n_steps]

#include "gkf/gkf.hpp"

#include <cstdlib>
#include <iostream>

int main(int argc, char** argv) {
  gkf::ExperimentConfig cfg;
  if (argc > 1) cfg.seed = std::strtoull(argv[1], nullptr, 10);
  if (argc > 2) cfg.inference.n_steps = std::atoi(argv[2]);

  const gkf::ExperimentResult r = gkf::run_tracking(cfg);
  std::cout << gkf::summarize(r);

  const auto& last = r.records.back();
  std::cout << "\nfinal position: truth " << last.x_true[0] << ", kalman " << last.mu_kf[0]
            << ", gradient " << last.mu_gkf[0] << "\n";
  return 0;
}
