#pragma once

// Finite-difference checks over every differentiable component, from single
// ops up to the full network.

#include "haaseg/gradcheck.hpp"

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace haaseg {

struct GradcheckConfig;

struct GradcheckComponent {
    std::string name;
    /// Runs one seed; fills `input_names` parallel to the checked inputs.
    std::function<GradCheckResult(std::uint64_t seed, std::vector<std::string>& input_names)> run;
};

std::vector<GradcheckComponent> default_gradcheck_components(const GradcheckConfig& cfg);

struct GradcheckRow {
    std::string name;
    double max_rel_error = 0;
    std::uint64_t worst_seed = 0;
    std::string worst_input;
    std::size_t worst_coordinate = 0;
    double analytic = 0, numeric = 0;
    std::size_t coordinates_checked = 0;
    bool passed = false;
};

struct GradcheckReport {
    std::vector<GradcheckRow> rows;
    bool all_passed() const;
};

/// Seeds are base_seed, base_seed + 1, ...; a component passes when its
/// worst error over all seeds is below `tolerance`.
GradcheckReport run_gradcheck(const std::vector<GradcheckComponent>& components, std::uint64_t base_seed,
                              std::size_t seeds, double tolerance, std::ostream* progress = nullptr);

void print_gradcheck_report(const GradcheckReport& report, double tolerance, std::ostream& out);

} // namespace haaseg
