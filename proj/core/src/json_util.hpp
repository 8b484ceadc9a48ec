#pragma once

#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>

#include "quadfit/types.hpp"

namespace quadfit {

using nlohmann::json;

inline json load_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open " + path);
  json j;
  is >> j;
  return j;
}

inline void save_json_file(const std::string& path, const json& j, int indent = 1) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << j.dump(indent) << '\n';
  if (!os) throw std::runtime_error("write failed for " + path);
}

inline json to_json(const VecX& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
inline json to_json(const Vec2& v) { return json::array({v.x(), v.y()}); }

template <typename Derived>
json matrix_to_json(const Eigen::MatrixBase<Derived>& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline VecX vecx_from_json(const json& a) {
  VecX v(a.size());
  for (size_t i = 0; i < a.size(); ++i) v[i] = a[i].get<double>();
  return v;
}

inline Vec3 vec3_from_json(const json& a) {
  if (a.size() != 3) throw std::invalid_argument("expected 3 numbers");
  return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
}

inline Vec2 vec2_from_json(const json& a) {
  if (a.size() != 2) throw std::invalid_argument("expected 2 numbers");
  return Vec2(a[0].get<double>(), a[1].get<double>());
}

template <typename Mat>
Mat matrix_from_json(const json& rows) {
  const Eigen::Index nr = static_cast<Eigen::Index>(rows.size());
  Eigen::Index nc = nr > 0 ? static_cast<Eigen::Index>(rows[0].size()) : 0;
  Mat m(nr, nc);
  for (Eigen::Index r = 0; r < nr; ++r) {
    if (static_cast<Eigen::Index>(rows[r].size()) != nc)
      throw std::invalid_argument("ragged matrix rows");
    for (Eigen::Index c = 0; c < nc; ++c) m(r, c) = rows[r][c].get<typename Mat::Scalar>();
  }
  return m;
}

inline json sparse_to_json(const SparseMat& m) {
  json triplets = json::array();
  for (int r = 0; r < m.outerSize(); ++r)
    for (SparseMat::InnerIterator it(m, r); it; ++it)
      triplets.push_back(json::array({it.row(), it.col(), it.value()}));
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"triplets", std::move(triplets)}};
}

inline SparseMat sparse_from_json(const json& j) {
  SparseMat m(j.at("rows").get<int>(), j.at("cols").get<int>());
  std::vector<Eigen::Triplet<double>> trips;
  for (const auto& t : j.at("triplets"))
    trips.emplace_back(t[0].get<int>(), t[1].get<int>(), t[2].get<double>());
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

}  // namespace quadfit
