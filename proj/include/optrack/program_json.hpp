#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Core>
#include <json.hpp>

#include "optrack/program.hpp"

namespace optrack {

using Json = nlohmann::json;

/// Dense real matrices are arrays of row arrays; +-infinity is written as the
/// strings "inf" / "-inf" since JSON has no literal for it.
Json matrix_to_json(const Eigen::MatrixXd& M);
Eigen::MatrixXd matrix_from_json(const Json& j);
Json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const Json& j);

Json set_to_json(const ConvexSet& set);
ConvexSet set_from_json(const Json& j);

/// Program document: layout, objective (dense H, h, c0), constraint rows with
/// sparse pair terms {a, b, Q} and per-block linear terms, sets as tagged variants.
Json program_to_json(const MultiConvexProgram& prog);
MultiConvexProgram program_from_json(const Json& j);

MultiConvexProgram load_program(const std::string& path);
void save_program(const MultiConvexProgram& prog, const std::string& path);

/// FNV-1a over the compact JSON dump; stable across runs and platforms.
std::uint64_t program_hash(const MultiConvexProgram& prog);

}  // namespace optrack
