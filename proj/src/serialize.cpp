#include "ntk_geom/serialize.hpp"

#include <fstream>
#include <sstream>

namespace ntk_geom {

namespace {

std::vector<int> int_list(const Json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw ConfigError(std::string(what) + " must be a non-empty array of integers");
  std::vector<int> out;
  for (const auto& x : j) {
    if (!x.is_number_integer()) throw ConfigError(std::string(what) + " must contain integers, got " + x.dump());
    out.push_back(x.get<int>());
  }
  return out;
}

Tensor<double> tensor_from_flat(const Json& j, const Shape& shape, const char* what) {
  std::vector<double> v;
  for (const auto& x : j) v.push_back(scalar_from_json<double>(x));
  if (v.size() != element_count(shape)) {
    throw ConfigError(std::string(what) + " needs " + std::to_string(element_count(shape)) + " entries for shape " +
                      shape_string(shape) + ", got " + std::to_string(v.size()));
  }
  return Tensor<double>(shape, std::move(v));
}

}  // namespace

Json parse_json(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    std::size_t line = 1, col = 1;
    const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": JSON parse error: " +
                      e.what());
  }
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_json(ss.str(), path);
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << text;
}

Architecture arch_from_json(const Json& j) {
  if (j.is_object() && j.contains("arch")) return arch_from_json(j.at("arch"));
  if (!j.is_object() || !j.contains("layers")) throw ConfigError("architecture needs a \"layers\" array");
  std::vector<LayerSpec> layers;
  for (const auto& L : j.at("layers")) {
    if (!L.contains("shape")) throw ConfigError("every layer needs a \"shape\"");
    Shape shape = int_list(L.at("shape"), "layer shape");
    std::vector<int> stride = L.contains("stride") ? int_list(L.at("stride"), "layer stride")
                                                   : std::vector<int>(shape.size(), 1);
    layers.push_back({std::move(shape), StrideVector(std::move(stride))});
  }
  Architecture arch(std::move(layers));
  if (j.contains("signal_dim") && j.at("signal_dim").get<std::size_t>() != arch.signal_dim()) {
    throw ConfigError("\"signal_dim\" disagrees with the layer shapes");
  }
  return arch;
}

Json arch_to_json(const Architecture& arch) {
  Json layers = Json::array();
  for (std::size_t l = 0; l < arch.depth(); ++l) {
    const auto& s = l + 1 == arch.depth() ? arch.output_stride() : arch.layer(l).stride;
    layers.push_back({{"shape", arch.layer(l).filter_shape}, {"stride", s.components()}});
  }
  return Json{{"signal_dim", arch.signal_dim()}, {"layers", layers}};
}

QuadraticLoss loss_from_json(const Json& j, const Architecture& arch) {
  const std::size_t k = arch.filter_size();
  if (j.contains("A")) {
    QuadraticLoss L;
    L.A = matrix_from_json<double>(j.at("A"));
    for (const auto& x : j.at("u")) L.u.push_back(scalar_from_json<double>(x));
    L.c = j.contains("c") ? scalar_from_json<double>(j.at("c")) : 0.0;
    if (L.u.size() != k) throw ShapeMismatch("loss: u must have " + std::to_string(k) + " entries");
    validate_loss(L);
    return L;
  }
  if (j.contains("dataset")) {
    const Json& d = j.at("dataset");
    Shape out_shape = d.contains("output_shape") ? int_list(d.at("output_shape"), "output_shape")
                                                 : Shape(arch.signal_dim(), 1);
    const Shape in_shape = network_input_shape(arch, out_shape);
    Dataset data;
    for (const auto& x : d.at("inputs")) data.inputs.push_back(tensor_from_flat(x, in_shape, "input"));
    for (const auto& y : d.at("outputs")) data.outputs.push_back(tensor_from_flat(y, out_shape, "output"));
    if (data.inputs.size() != data.outputs.size()) throw ConfigError("dataset: inputs and outputs differ in number");
    return dataset_to_quadratic(arch, data);
  }
  if (j.contains("random")) {
    const Json& r = j.at("random");
    return random_quadratic_loss(k, r.value("seed", std::uint64_t{0}));
  }
  throw ConfigError("loss needs \"A\"/\"u\", \"dataset\" or \"random\"");
}

Json loss_to_json(const QuadraticLoss& L) {
  return Json{{"A", matrix_to_json(L.A)}, {"u", L.u}, {"c", L.c}};
}

Json fiber_to_json(const FiberResult& r) {
  Json reps = Json::array();
  for (const auto& t : r.representatives) reps.push_back(params_to_json(t).at("filters"));
  return Json{{"classes", r.class_count()},
              {"unique", r.unique},
              {"representatives", reps},
              {"ranks", r.ranks},
              {"residuals", r.residuals},
              {"diagnostics", r.diagnostics}};
}

std::string trajectory_csv(const Trajectory& traj) {
  std::ostringstream os;
  os.precision(17);
  const std::size_t nd = traj.deltas.empty() ? 0 : traj.deltas.front().size();
  const std::size_t nv = traj.functions.empty() ? 0 : traj.functions.front().size();
  os << "t,loss,grad_norm";
  for (std::size_t i = 0; i < nd; ++i) os << ",delta_" << i + 1;
  for (std::size_t i = 0; i < nv; ++i) os << ",v_" << i;
  os << '\n';
  for (std::size_t s = 0; s < traj.times.size(); ++s) {
    os << traj.times[s] << ',' << traj.losses[s] << ',' << traj.grad_norms[s];
    for (double d : traj.deltas[s]) os << ',' << d;
    for (double v : traj.functions[s]) os << ',' << v;
    os << '\n';
  }
  return os.str();
}

Json trajectory_summary(const Trajectory& traj) {
  Json j{{"space", traj.space},
         {"method", traj.method},
         {"steps", traj.steps},
         {"t_end", traj.times.empty() ? 0.0 : traj.times.back()},
         {"final_loss", traj.losses.empty() ? 0.0 : traj.losses.back()},
         {"final_grad_norm", traj.grad_norms.empty() ? 0.0 : traj.grad_norms.back()},
         {"converged", traj.converged},
         {"max_delta_drift", traj.max_delta_drift},
         {"drift_flagged", traj.drift_flagged},
         {"loss_monotone", traj.loss_monotone},
         {"max_loss_increase", traj.max_loss_increase}};
  if (traj.space == "function") {
    j["full_recoveries"] = traj.full_recoveries;
    j["max_tracking_residual"] = traj.max_tracking_residual;
  }
  return j;
}

}  // namespace ntk_geom
