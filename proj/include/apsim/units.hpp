#pragma once

namespace apsim::units {

/// mg/dL per mmol/L of glucose. The only definition site of this factor.
inline constexpr double kMgdlPerMmol = 18.016;

/// Glucose molar mass [g/mol], derived from the mg/dL factor (1 mmol/L = 18.016 mg/dL).
inline constexpr double kGlucoseGramsPerMol = 10.0 * kMgdlPerMmol;

inline constexpr double kMinutesPerHour = 60.0;
inline constexpr double kMinutesPerDay = 1440.0;
inline constexpr double kMilliUnitsPerUnit = 1000.0;

[[nodiscard]] constexpr double mmol_to_mgdl(double mmol_per_l) noexcept {
    return mmol_per_l * kMgdlPerMmol;
}

[[nodiscard]] constexpr double mgdl_to_mmol(double mg_per_dl) noexcept {
    return mg_per_dl / kMgdlPerMmol;
}

/// Grams of carbohydrate (as glucose) to mmol.
[[nodiscard]] constexpr double carb_grams_to_mmol(double grams) noexcept {
    return grams * 1000.0 / kGlucoseGramsPerMol;
}

}  // namespace apsim::units
