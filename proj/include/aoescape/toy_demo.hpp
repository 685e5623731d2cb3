#pragma once

#include "aoescape/core.hpp"

namespace aoescape {

// Demonstration of the escape loop on f(x,y) = (x-y)^2 - x^2 y^2, which is
// unbounded below but traps coordinatewise minimization at the saddle (0,0).
// The search is confined to the box [-box, box]^2; the escape phase searches
// the diagonal {x = y} inside the box.
struct ToyDemoResult {
  double ao_value;       // objective after plain AO from the start point
  Vector point;          // final point after the escape loop
  double value;          // objective at the final point
  EscapeReport report;
};

ToyDemoResult run_toy_demo(double x0 = 0.0, double y0 = 0.0, double box = 10.0,
                           const EscapeConfig& cfg = {});

}  // namespace aoescape
