#pragma once

#include <string>
#include <vector>

#include "vila/bag.hpp"
#include "vila/model.hpp"

namespace vila {

struct GradCheckEntry {
    std::string group;
    double max_rel_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> groups;
    double worst = 0.0;
    bool passed(double tolerance = 1e-4) const { return worst <= tolerance; }
};

// Compares analytic gradients of the full forward+loss against central
// finite differences, entry by entry, for every trainable parameter group.
GradCheckReport gradcheck_model(VilaModel& model, const Bag& bag, int label,
                                double fd_step = 1e-4);

// The standard self-check configuration: d=8, N_p=2, C=2, M=2, 5 patches per
// scale, seeded synthetic bag.
GradCheckReport gradcheck_tiny_model(double fd_step = 1e-4);

// Tiny fixtures shared with the test suites.
ModelConfig tiny_model_config();
Bag tiny_bag(std::uint64_t seed = 42, int dim = 8, int n_low = 5, int n_high = 5);

}  // namespace vila
