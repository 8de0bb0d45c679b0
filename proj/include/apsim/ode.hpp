#pragma once

#include <array>
#include <cstddef>

namespace apsim {

/// One classical 4th-order Runge-Kutta step of size h for x' = f(x).
template <std::size_t N, class F>
void rk4_step(std::array<double, N>& x, double h, F&& f) {
    using V = std::array<double, N>;
    const V k1 = f(x);
    V tmp;
    for (std::size_t i = 0; i < N; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
    const V k2 = f(tmp);
    for (std::size_t i = 0; i < N; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
    const V k3 = f(tmp);
    for (std::size_t i = 0; i < N; ++i) tmp[i] = x[i] + h * k3[i];
    const V k4 = f(tmp);
    for (std::size_t i = 0; i < N; ++i) x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

}  // namespace apsim
