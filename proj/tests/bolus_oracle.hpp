#pragma once

// Brute-force reference for the optimal bolus: evaluate the objective on a
// uniform grid and take the smallest value.

#include "apsim/bolus_opt.hpp"

#include <cstddef>

namespace oracle {

struct GridMin {
    double bolus = 0.0;
    double cost = 0.0;
    double cell = 0.0;
};

inline GridMin grid_min(const apsim::BolusObjective& phi, double upper, std::size_t points = 2000) {
    GridMin best;
    best.cell = upper / static_cast<double>(points - 1);
    best.cost = phi(0.0);
    for (std::size_t j = 1; j < points; ++j) {
        const double b = best.cell * static_cast<double>(j);
        const double c = phi(b);
        if (c < best.cost) {
            best.cost = c;
            best.bolus = b;
        }
    }
    return best;
}

/// Grid upper bound [mU/min] comfortably above any optimum seen for `meal_g`.
inline double grid_upper(double meal_g) { return 20.0 * meal_g + 200.0; }

}  // namespace oracle
