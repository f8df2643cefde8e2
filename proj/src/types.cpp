#include "paircam/types.hpp"

#include <numbers>

namespace paircam {

std::string to_string(Basis b) {
  return b == Basis::NearField ? "nf" : "ff";
}

Basis basis_from_string(const std::string& s) {
  if (s == "nf" || s == "NF" || s == "near" || s == "nearfield") return Basis::NearField;
  if (s == "ff" || s == "FF" || s == "far" || s == "farfield") return Basis::FarField;
  throw ConfigError("unknown basis '" + s + "' (expected nf or ff)");
}

double pixel_scale(const OpticsConfig& optics) {
  if (optics.basis == Basis::NearField) {
    // Camera plane magnified image of the crystal: one pixel spans
    // pitch / magnification at the crystal.
    return optics.pixel_pitch_m / optics.magnification_nf;
  }
  // Fourier plane: transverse wavevector k maps to position f*lambda*k/(2*pi),
  // so one pixel spans 2*pi*pitch / (lambda*f) in k.
  return 2.0 * std::numbers::pi * optics.pixel_pitch_m /
         (optics.wavelength_m * optics.f_eff_m);
}

double pixel_to_physical(const OpticsConfig& optics, double pixels) {
  return pixels * pixel_scale(optics);
}

}  // namespace paircam
