#pragma once

#include "optrack/program.hpp"

namespace optrack {

/// min (z1 - 1)^2 + (z2 - 1)^2  s.t.  z1 z2 - s = 0,  z1, z2 in [0, 2].
/// Two scalar blocks; for s in (0, 4] the critical point is z1 = z2 = sqrt(s).
MultiConvexProgram toy_program();

}  // namespace optrack
