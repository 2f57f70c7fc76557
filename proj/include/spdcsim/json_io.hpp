#pragma once

// JSON schemas for states and stacks.
//
// Ket:            {"basis": ["HH","HV","VH","VV"], "re": [..4..], "im": [..4..]}
// Density matrix: {"basis": ["HH","HV","VH","VV"], "re": [[..]], "im": [[..]]}  (row-major 4x4)
// Stack:          {"layers": [{"thickness_nm": <number or null for half-infinite>,
//                              "n_table": [[lambda_nm, n_re, n_im], ...]}, ...],
//                  "film_index": <int>}

#include <nlohmann/json.hpp>

#include "spdcsim/greens.hpp"
#include "spdcsim/polarization.hpp"

namespace spdcsim {

nlohmann::json ket_to_json(const TwoQubitKet& ket);
TwoQubitKet ket_from_json(const nlohmann::json& j);

nlohmann::json density_to_json(const DensityMatrix& rho);
DensityMatrix density_from_json(const nlohmann::json& j);

nlohmann::json stack_to_json(const LayeredStack& stack);
LayeredStack stack_from_json(const nlohmann::json& j);

}  // namespace spdcsim
