#pragma once

// JSON/CSV input and output for architectures, parameters, losses, kernels,
// fibers and trajectories. Exact values are written as "p/q" strings.

#include "ntk_geom/conv_core.hpp"
#include "ntk_geom/dense.hpp"
#include "ntk_geom/fiber.hpp"
#include "ntk_geom/flow.hpp"

#include "json.hpp"

#include <stdexcept>
#include <string>

namespace ntk_geom {

using Json = nlohmann::json;

/// Parses text; syntax errors become ConfigError with line and column.
Json parse_json(const std::string& text, const std::string& source = "<input>");
Json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

/// {"layers": [{"shape": [3], "stride": [2]}, ...]}; also accepts an object with an "arch" member.
Architecture arch_from_json(const Json& j);
Json arch_to_json(const Architecture& arch);

template <typename S>
S scalar_from_json(const Json& j) {
  if (j.is_string()) {
    try {
      return ScalarTraits<S>::parse(j.get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (j.is_number_integer()) return S(j.get<long long>());
  if (j.is_number()) return ScalarTraits<S>::from_double(j.get<double>());
  throw ConfigError("expected a number or a \"p/q\" string, got " + j.dump());
}

template <typename S>
Json scalar_to_json(const S& x) {
  if constexpr (ScalarTraits<S>::exact) {
    return ScalarTraits<S>::to_string(x);
  } else {
    return x;
  }
}

/// {"filters": [[...], ...]}, entries row-major within each filter.
template <typename S>
ParamTuple<S> params_from_json(const Json& j, const Architecture& arch) {
  const Json& f = j.is_object() ? j.at("filters") : j;
  if (!f.is_array() || f.size() != arch.depth()) {
    throw ConfigError("\"filters\" must be an array with one entry per layer (" + std::to_string(arch.depth()) + ")");
  }
  ParamTuple<S> theta;
  for (std::size_t l = 0; l < arch.depth(); ++l) {
    std::vector<S> w;
    for (const auto& x : f[l]) w.push_back(scalar_from_json<S>(x));
    theta.filters.emplace_back(arch.layer(l).filter_shape, std::move(w));
  }
  return theta;
}

template <typename S>
Json params_to_json(const ParamTuple<S>& theta) {
  Json filters = Json::array();
  for (const auto& w : theta.filters) {
    Json a = Json::array();
    for (const auto& x : w.entries()) a.push_back(scalar_to_json(x));
    filters.push_back(a);
  }
  return Json{{"filters", filters}};
}

/// {"filter": [...]} or a bare array.
template <typename S>
EndToEndFilter<S> filter_from_json(const Json& j, const Architecture& arch) {
  const Json& f = j.is_object() ? j.at("filter") : j;
  std::vector<S> v;
  for (const auto& x : f) v.push_back(scalar_from_json<S>(x));
  return EndToEndFilter<S>(arch.end_to_end_shape(), std::move(v));
}

template <typename S>
Json vector_to_json(const std::vector<S>& v) {
  Json a = Json::array();
  for (const auto& x : v) a.push_back(scalar_to_json(x));
  return a;
}

template <typename S>
Json matrix_to_json(const DenseMatrix<S>& M) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < M.rows(); ++i) {
    Json r = Json::array();
    for (std::size_t j = 0; j < M.cols(); ++j) r.push_back(scalar_to_json(M(i, j)));
    rows.push_back(r);
  }
  return rows;
}

template <typename S>
DenseMatrix<S> matrix_from_json(const Json& j) {
  std::vector<std::vector<S>> rows;
  for (const auto& r : j) {
    std::vector<S> row;
    for (const auto& x : r) row.push_back(scalar_from_json<S>(x));
    rows.push_back(std::move(row));
  }
  return DenseMatrix<S>::from_rows(rows);
}

template <typename S>
std::string matrix_to_csv(const DenseMatrix<S>& M) {
  std::string out;
  for (std::size_t i = 0; i < M.rows(); ++i) {
    for (std::size_t j = 0; j < M.cols(); ++j) {
      if (j) out += ',';
      out += ScalarTraits<S>::to_string(M(i, j));
    }
    out += '\n';
  }
  return out;
}

/// {"A": [[...]], "u": [...], "c": 0} or {"dataset": {"inputs": [[...]], "outputs": [[...]]}}
/// (flattened tensors; optional "output_shape") or {"random": {"seed": s}}.
QuadraticLoss loss_from_json(const Json& j, const Architecture& arch);
Json loss_to_json(const QuadraticLoss& L);

Json fiber_to_json(const FiberResult& r);

/// Columns: t, loss, grad_norm, delta_1..delta_{H-1}, v_0..v_{k-1}.
std::string trajectory_csv(const Trajectory& traj);
Json trajectory_summary(const Trajectory& traj);

}  // namespace ntk_geom
