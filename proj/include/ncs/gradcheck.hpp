#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace ncs {

inline constexpr int kEnergyTerms = 7;
inline constexpr std::array<const char*, kEnergyTerms> kEnergyTermNames = {
    "mass_spring", "baraff_witkin", "stvk", "bending", "collision", "gravity", "inertia"};

struct GradcheckReport {
    std::array<double, kEnergyTerms> max_rel_error{};  // per term, over all configurations
    int configurations = 0;
    int vertices = 0;

    double worst() const;
};

// Central differences (step h) of every energy term on seeded random
// configurations of a 5 x 5 swatch pressed onto a cylinder.
GradcheckReport gradient_check(std::uint64_t seed, int configurations = 20, double h = 1e-6);

}  // namespace ncs
