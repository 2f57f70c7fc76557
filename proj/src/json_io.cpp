#include "spdcsim/json_io.hpp"

#include <cmath>
#include <limits>

namespace spdcsim {

using nlohmann::json;

namespace {
const json kBasis = json::array({"HH", "HV", "VH", "VV"});

void check_basis(const json& j) {
  if (j.contains("basis") && j.at("basis") != kBasis)
    throw std::invalid_argument("state JSON: unexpected basis ordering");
}
}  // namespace

json ket_to_json(const TwoQubitKet& ket) {
  json re = json::array(), im = json::array();
  for (int i = 0; i < 4; ++i) {
    re.push_back(ket.amplitude(i).real());
    im.push_back(ket.amplitude(i).imag());
  }
  return json{{"basis", kBasis}, {"re", re}, {"im", im}};
}

TwoQubitKet ket_from_json(const json& j) {
  check_basis(j);
  const auto& re = j.at("re");
  const auto& im = j.at("im");
  if (re.size() != 4 || im.size() != 4)
    throw std::invalid_argument("ket JSON: need length-4 re/im arrays");
  Eigen::Vector4cd a;
  for (int i = 0; i < 4; ++i) a(i) = Complex(re[i].get<double>(), im[i].get<double>());
  return TwoQubitKet(a);
}

json density_to_json(const DensityMatrix& rho) {
  json re = json::array(), im = json::array();
  for (int i = 0; i < 4; ++i) {
    json rrow = json::array(), irow = json::array();
    for (int k = 0; k < 4; ++k) {
      rrow.push_back(rho(i, k).real());
      irow.push_back(rho(i, k).imag());
    }
    re.push_back(rrow);
    im.push_back(irow);
  }
  return json{{"basis", kBasis}, {"re", re}, {"im", im}};
}

DensityMatrix density_from_json(const json& j) {
  check_basis(j);
  const auto& re = j.at("re");
  const auto& im = j.at("im");
  if (re.size() != 4 || im.size() != 4)
    throw std::invalid_argument("density JSON: need 4x4 re/im arrays");
  Eigen::Matrix4cd m;
  for (int i = 0; i < 4; ++i) {
    if (re[i].size() != 4 || im[i].size() != 4)
      throw std::invalid_argument("density JSON: need 4x4 re/im arrays");
    for (int k = 0; k < 4; ++k)
      m(i, k) = Complex(re[i][k].get<double>(), im[i][k].get<double>());
  }
  return DensityMatrix(m);
}

json stack_to_json(const LayeredStack& stack) {
  json layers = json::array();
  for (const auto& l : stack.layers()) {
    json table = json::array();
    if (l.index.wavelength_m.empty()) {
      table.push_back({0.0, l.index.n.front().real(), l.index.n.front().imag()});
    } else {
      for (size_t i = 0; i < l.index.wavelength_m.size(); ++i)
        table.push_back(
            {l.index.wavelength_m[i] * 1e9, l.index.n[i].real(), l.index.n[i].imag()});
    }
    json layer;
    if (std::isinf(l.thickness_m))
      layer["thickness_nm"] = nullptr;
    else
      layer["thickness_nm"] = l.thickness_m * 1e9;
    layer["n_table"] = table;
    layers.push_back(layer);
  }
  return json{{"layers", layers}, {"film_index", stack.film_index()}};
}

LayeredStack stack_from_json(const json& j) {
  std::vector<Layer> layers;
  for (const auto& lj : j.at("layers")) {
    Layer l;
    const auto& th = lj.at("thickness_nm");
    l.thickness_m = th.is_null() ? std::numeric_limits<double>::infinity()
                                 : th.get<double>() * 1e-9;
    const auto& table = lj.at("n_table");
    if (table.size() == 1) {
      l.index = IndexTable::constant(
          Complex(table[0][1].get<double>(),
                  table[0].size() > 2 ? table[0][2].get<double>() : 0.0));
    } else {
      for (const auto& row : table) {
        l.index.wavelength_m.push_back(row[0].get<double>() * 1e-9);
        l.index.n.emplace_back(row[1].get<double>(),
                               row.size() > 2 ? row[2].get<double>() : 0.0);
      }
    }
    layers.push_back(std::move(l));
  }
  return LayeredStack(std::move(layers), j.at("film_index").get<int>());
}

}  // namespace spdcsim
