#pragma once

#include "growfrag/model.hpp"

namespace testspec {

/// Default benchmark model: Gompertz growth a=1 on [0,1], Beta(2,2) split
/// kernel, ramp division rate bbar=3 above m_div=0.25.
inline growfrag::ModelSpec default_spec(double death_rate) {
    return growfrag::ModelSpec(growfrag::GompertzGrowth{1.0},
                               growfrag::RampDivision{3.0, 0.25},
                               growfrag::SymmetricBetaKernel{2.0}, death_rate, 1.0);
}

/// b == 0 edge model (no division ever).
inline growfrag::ModelSpec no_division_spec(double death_rate) {
    return growfrag::ModelSpec(growfrag::GompertzGrowth{1.0},
                               growfrag::RampDivision{0.0, 0.25},
                               growfrag::SymmetricBetaKernel{2.0}, death_rate, 1.0);
}

} // namespace testspec
