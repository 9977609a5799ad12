#pragma once

// Internal-standard HPLC yield analytics.

#include <string>

#include "condrec/error.hpp"

namespace condrec {

/// Relative response factor: (A_IS * C_reference) / (A_reference * C_IS).
inline double compute_rrf(double area_is, double conc_reference, double area_reference, double conc_is) {
  if (area_reference == 0.0 || conc_is == 0.0)
    fail(Errc::DivisionByZero, "RRF needs non-zero reference area and IS concentration");
  return (area_is * conc_reference) / (area_reference * conc_is);
}

/// C_product = (A_product * C_IS * RRF) / A_IS.
inline double compute_product_concentration(double area_product, double conc_is, double rrf, double area_is) {
  if (area_is == 0.0) fail(Errc::DivisionByZero, "IS peak area is zero");
  return (area_product * conc_is * rrf) / area_is;
}

struct YieldValue {
  double fraction = 0.0;
  bool exceeds_unity = false;  // warning, not an error

  double percent() const { return fraction * 100.0; }
};

inline YieldValue compute_yield(double conc_product, double conc_substrate) {
  if (conc_substrate == 0.0) fail(Errc::DivisionByZero, "substrate concentration is zero");
  const double y = conc_product / conc_substrate;
  return {y, y > 1.0};
}

}  // namespace condrec
