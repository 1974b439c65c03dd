#include "optrack/program_json.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>
#include <utility>

#include "optrack/errors.hpp"
#include "optrack/io.hpp"

namespace optrack {

namespace {

Json number_to_json(double x) {
  if (std::isinf(x)) return x > 0 ? Json("inf") : Json("-inf");
  return Json(x);
}

double number_from_json(const Json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw ModelError("unrecognised numeric string '" + s + "'");
  }
  return j.get<double>();
}

}  // namespace

Json matrix_to_json(const Eigen::MatrixXd& M) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(number_to_json(M(r, c)));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
  if (!j.is_array()) throw ModelError("matrix must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Eigen::MatrixXd M(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw ModelError("matrix row " + std::to_string(r) + " has inconsistent length");
    }
    for (Eigen::Index c = 0; c < cols; ++c) M(r, c) = number_from_json(row[static_cast<std::size_t>(c)]);
  }
  return M;
}

Json vector_to_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(number_to_json(v[i]));
  return out;
}

Eigen::VectorXd vector_from_json(const Json& j) {
  if (!j.is_array()) throw ModelError("vector must be an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = number_from_json(j[i]);
  return v;
}

Json set_to_json(const ConvexSet& set) {
  if (const auto* b = set.get_if<ConvexSet::Box>()) {
    return {{"type", "box"}, {"lower", vector_to_json(b->lower)}, {"upper", vector_to_json(b->upper)}};
  }
  if (const auto* b = set.get_if<ConvexSet::Ball>()) {
    return {{"type", "ball"}, {"center", vector_to_json(b->center)}, {"radius", b->radius}};
  }
  if (set.get_if<ConvexSet::NonnegativeOrthant>()) {
    return {{"type", "orthant"}, {"dim", set.dimension()}};
  }
  return {{"type", "whole_space"}, {"dim", set.dimension()}};
}

ConvexSet set_from_json(const Json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "box") return ConvexSet::box(vector_from_json(j.at("lower")), vector_from_json(j.at("upper")));
  if (type == "ball") return ConvexSet::ball(vector_from_json(j.at("center")), j.at("radius").get<double>());
  if (type == "orthant") return ConvexSet::nonnegative_orthant(j.at("dim").get<int>());
  if (type == "whole_space") return ConvexSet::whole_space(j.at("dim").get<int>());
  throw ModelError("unknown set type '" + type + "'");
}

Json program_to_json(const MultiConvexProgram& prog) {
  const auto& layout = prog.layout();
  const auto& con = prog.constraint();
  const int m = con.rows();

  // Group terms per row: pairs (a, b) -> dense Q, block -> dense coefficients.
  std::vector<std::map<std::pair<int, int>, Eigen::MatrixXd>> pairs(static_cast<std::size_t>(m));
  std::vector<std::map<int, Eigen::VectorXd>> linear(static_cast<std::size_t>(m));
  for (const auto& term : con.bilinear_terms()) {
    auto& Q = pairs[static_cast<std::size_t>(term.row)][{term.block_a, term.block_b}];
    if (Q.size() == 0) Q = Eigen::MatrixXd::Zero(layout.size(term.block_a), layout.size(term.block_b));
    Q(term.index_a, term.index_b) += term.coeff;
  }
  for (const auto& term : con.linear_terms()) {
    auto& v = linear[static_cast<std::size_t>(term.row)][term.block];
    if (v.size() == 0) v = Eigen::VectorXd::Zero(layout.size(term.block));
    v[term.index] += term.coeff;
  }

  Json rows = Json::array();
  for (int r = 0; r < m; ++r) {
    Json row;
    row["pairs"] = Json::array();
    for (const auto& [key, Q] : pairs[static_cast<std::size_t>(r)]) {
      row["pairs"].push_back({{"a", key.first}, {"b", key.second}, {"Q", matrix_to_json(Q)}});
    }
    row["linear"] = Json::array();
    for (const auto& [block, v] : linear[static_cast<std::size_t>(r)]) {
      row["linear"].push_back({{"block", block}, {"coeffs", vector_to_json(v)}});
    }
    row["S"] = vector_to_json(con.S().row(r).transpose());
    row["t"] = con.t()[r];
    rows.push_back(std::move(row));
  }

  Json sets = Json::array();
  for (const auto& s : prog.sets()) sets.push_back(set_to_json(s));

  Json j;
  j["layout"] = layout.sizes();
  j["objective"] = {{"H", matrix_to_json(prog.objective().H)},
                    {"h", vector_to_json(prog.objective().h)},
                    {"c0", prog.objective().c0}};
  j["constraint"] = {{"param_dim", con.param_dim()}, {"rows", std::move(rows)}};
  j["sets"] = std::move(sets);
  return j;
}

MultiConvexProgram program_from_json(const Json& j) {
  try {
    BlockLayout layout(j.at("layout").get<std::vector<int>>());
    const auto& jo = j.at("objective");
    QuadraticObjective obj{matrix_from_json(jo.at("H")), vector_from_json(jo.at("h")),
                           jo.value("c0", 0.0)};
    if (obj.H.size() == 0) obj.H = Eigen::MatrixXd::Zero(layout.total(), layout.total());

    const auto& jc = j.at("constraint");
    const auto& jrows = jc.at("rows");
    const int m = static_cast<int>(jrows.size());
    const int p = jc.at("param_dim").get<int>();
    BilinearConstraint con(m, p);
    for (int r = 0; r < m; ++r) {
      const auto& row = jrows[static_cast<std::size_t>(r)];
      for (const auto& pair : row.value("pairs", Json::array())) {
        const int a = pair.at("a").get<int>();
        const int b = pair.at("b").get<int>();
        layout.check_block(a);
        layout.check_block(b);
        const Eigen::MatrixXd Q = matrix_from_json(pair.at("Q"));
        if (Q.rows() != layout.size(a) || Q.cols() != layout.size(b)) {
          throw DimensionError("row " + std::to_string(r) + " pair (" + std::to_string(a) + "," +
                               std::to_string(b) + ") has a Q of the wrong shape");
        }
        for (Eigen::Index x = 0; x < Q.rows(); ++x)
          for (Eigen::Index y = 0; y < Q.cols(); ++y)
            if (Q(x, y) != 0.0) con.add_bilinear(r, a, static_cast<int>(x), b, static_cast<int>(y), Q(x, y));
      }
      for (const auto& lin : row.value("linear", Json::array())) {
        const int block = lin.at("block").get<int>();
        layout.check_block(block);
        const Eigen::VectorXd v = vector_from_json(lin.at("coeffs"));
        if (v.size() != layout.size(block)) {
          throw DimensionError("row " + std::to_string(r) + " linear term on block " +
                               std::to_string(block) + " has the wrong length");
        }
        for (Eigen::Index x = 0; x < v.size(); ++x)
          if (v[x] != 0.0) con.add_linear(r, block, static_cast<int>(x), v[x]);
      }
      if (p > 0) {
        const Eigen::VectorXd Srow = vector_from_json(row.at("S"));
        if (Srow.size() != p) throw DimensionError("row " + std::to_string(r) + " S has the wrong length");
        con.S().row(r) = Srow.transpose();
      }
      con.t()[r] = row.value("t", 0.0);
    }

    std::vector<ConvexSet> sets;
    for (const auto& js : j.at("sets")) sets.push_back(set_from_json(js));
    return MultiConvexProgram(std::move(layout), std::move(obj), std::move(con), std::move(sets));
  } catch (const Json::exception& e) {
    throw ModelError(std::string("malformed program document: ") + e.what());
  }
}

MultiConvexProgram load_program(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open program file '" + path + "'");
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw ModelError("program file '" + path + "' is not valid JSON: " + e.what());
  }
  return program_from_json(j);
}

void save_program(const MultiConvexProgram& prog, const std::string& path) {
  write_file_atomic(path, program_to_json(prog).dump(2) + "\n");
}

std::uint64_t program_hash(const MultiConvexProgram& prog) {
  return fnv1a64(program_to_json(prog).dump());
}

}  // namespace optrack
