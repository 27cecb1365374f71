#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dtsa/matrix.hpp"
#include "dtsa/network.hpp"
#include "dtsa/problem.hpp"

namespace dtsa {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

inline json matrix_to_json(const DenseMatrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows; ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < m.cols; ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline DenseMatrix matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty() || !j.front().is_array())
    throw std::invalid_argument("matrix_from_json: expected an array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = j.front().size();
  std::vector<double> entries;
  entries.reserve(rows * cols);
  for (const auto& row : j) {
    if (row.size() != cols)
      throw std::invalid_argument("matrix_from_json: ragged rows");
    for (const auto& x : row) entries.push_back(x.get<double>());
  }
  return DenseMatrix::from(rows, cols, std::move(entries));
}

inline json vector_to_json(const DenseVector& v) {
  json out = json::array();
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline DenseVector vector_from_json(const json& j) {
  if (!j.is_array()) throw std::invalid_argument("vector_from_json: expected an array");
  std::vector<double> entries;
  for (const auto& x : j) entries.push_back(x.get<double>());
  return DenseVector::from(std::move(entries));
}

inline json block_system_to_json(const BlockSystem& sys) {
  json j;
  j["d"] = sys.d;
  j["N"] = sys.N;
  j["R"] = sys.R;
  j["heterogeneous"] = sys.heterogeneous;
  j["A11"] = matrix_to_json(sys.A11);
  j["A12"] = matrix_to_json(sys.A12);
  j["A21"] = matrix_to_json(sys.A21);
  j["A22"] = matrix_to_json(sys.A22);
  j["b1"] = json::array();
  j["b2"] = json::array();
  for (const auto& b : sys.b1) j["b1"].push_back(vector_to_json(b));
  for (const auto& b : sys.b2) j["b2"].push_back(vector_to_json(b));
  if (sys.heterogeneous) {
    json blocks = json::array();
    for (const auto& nb : sys.node_blocks) {
      json nj;
      nj["A11"] = matrix_to_json(nb.A11);
      nj["A12"] = matrix_to_json(nb.A12);
      nj["A21"] = matrix_to_json(nb.A21);
      nj["A22"] = matrix_to_json(nb.A22);
      blocks.push_back(std::move(nj));
    }
    j["node_blocks"] = std::move(blocks);
  }
  return j;
}

inline BlockSystem block_system_from_json(const json& j) {
  BlockSystem sys;
  sys.d = j.at("d").get<std::size_t>();
  sys.N = j.at("N").get<std::size_t>();
  sys.R = j.value("R", 0.0);
  sys.heterogeneous = j.value("heterogeneous", false);
  sys.A11 = matrix_from_json(j.at("A11"));
  sys.A12 = matrix_from_json(j.at("A12"));
  sys.A21 = matrix_from_json(j.at("A21"));
  sys.A22 = matrix_from_json(j.at("A22"));
  for (const auto& b : j.at("b1")) sys.b1.push_back(vector_from_json(b));
  for (const auto& b : j.at("b2")) sys.b2.push_back(vector_from_json(b));
  if (sys.heterogeneous) {
    for (const auto& nj : j.at("node_blocks"))
      sys.node_blocks.push_back({matrix_from_json(nj.at("A11")), matrix_from_json(nj.at("A12")),
                                 matrix_from_json(nj.at("A21")),
                                 matrix_from_json(nj.at("A22"))});
    require(sys.node_blocks.size() == sys.N,
            "block_system_from_json: need one block set per node");
  }
  const auto check_dims = [&](const DenseMatrix& m) {
    require(m.rows == sys.d && m.cols == sys.d, "block_system_from_json: block shape mismatch");
  };
  check_dims(sys.A11);
  check_dims(sys.A12);
  check_dims(sys.A21);
  check_dims(sys.A22);
  require(sys.b1.size() == sys.N && sys.b2.size() == sys.N,
          "block_system_from_json: need one vector pair per node");
  for (const auto& b : sys.b1) require(b.size() == sys.d, "block_system_from_json: b1 size");
  for (const auto& b : sys.b2) require(b.size() == sys.d, "block_system_from_json: b2 size");
  return sys;
}

// One "i j" pair per line.
inline std::string edge_list_text(const Topology& t) {
  std::ostringstream out;
  for (const auto& [i, j] : t.edges) out << i << " " << j << "\n";
  return out.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace dtsa
