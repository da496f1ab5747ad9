#include "parametrix/json_io.hpp"

#include <fstream>
#include <sstream>
#include <vector>

#include "parametrix/errors.hpp"

namespace parametrix {

namespace {

const Json& require_key(const Json& doc, const std::string& key, const std::string& what) {
  if (!doc.is_object() || !doc.contains(key)) {
    throw ParseError(what + ": missing required key \"" + key + "\"");
  }
  return doc.at(key);
}

Eigen::MatrixXd optional_matrix(const Json& doc, const std::string& key, Eigen::Index rows,
                                Eigen::Index cols, const std::string& what) {
  if (!doc.contains(key)) return Eigen::MatrixXd::Zero(rows, cols);
  Eigen::MatrixXd m = matrix_from_json(doc.at(key), what + "." + key);
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream os;
    os << what << "." << key << ": expected " << rows << "x" << cols << ", got " << m.rows()
       << "x" << m.cols();
    throw ParseError(os.str());
  }
  return m;
}

void require_shape(const Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols,
                   const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream os;
    os << what << ": expected " << rows << "x" << cols << ", got " << m.rows() << "x" << m.cols();
    throw ParseError(os.str());
  }
}

}  // namespace

Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open \"" + path + "\"");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("\"" + path + "\": " + e.what());
  }
}

std::string dump_document(const Json& doc) { return doc.dump(2) + "\n"; }

Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const Json& j, const std::string& what) {
  if (!j.is_array()) throw ParseError(what + ": expected a nested array of numbers");
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return Eigen::MatrixXd(0, 0);
  if (!j.at(0).is_array()) throw ParseError(what + ": rows must be arrays");
  const Eigen::Index cols = static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Json& row = j.at(static_cast<size_t>(i));
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw ParseError(what + ": ragged rows (all rows must have equal length)");
    }
    for (Eigen::Index k = 0; k < cols; ++k) {
      const Json& v = row.at(static_cast<size_t>(k));
      if (!v.is_number()) throw ParseError(what + ": non-numeric entry");
      m(i, k) = v.get<double>();
    }
  }
  return m;
}

Json fir_to_json(const FirTransferMatrix& g) {
  Json coeffs = Json::array();
  for (const Eigen::MatrixXd& c : g.coeffs()) coeffs.push_back(matrix_to_json(c));
  return Json{{"coeffs", std::move(coeffs)}};
}

FirTransferMatrix fir_from_json(const Json& j, const std::string& what) {
  const Json& coeffs = j.is_object() ? require_key(j, "coeffs", what) : j;
  if (!coeffs.is_array() || coeffs.empty()) {
    throw ParseError(what + ": \"coeffs\" must be a non-empty array of matrices");
  }
  std::vector<Eigen::MatrixXd> taps;
  taps.reserve(coeffs.size());
  for (size_t k = 0; k < coeffs.size(); ++k) {
    std::ostringstream os;
    os << what << ".coeffs[" << k << "]";
    taps.push_back(matrix_from_json(coeffs.at(k), os.str()));
    if (taps.back().rows() != taps.front().rows() || taps.back().cols() != taps.front().cols()) {
      throw ParseError(what + ": coefficient shapes differ between taps");
    }
  }
  return FirTransferMatrix(std::move(taps));
}

StateSpacePlant plant_from_json(const Json& doc) {
  const std::string what = "plant";
  const Eigen::MatrixXd A = matrix_from_json(require_key(doc, "A", what), "plant.A");
  if (A.rows() != A.cols()) throw ParseError("plant.A: must be square");
  const Eigen::Index nx = A.rows();
  const Eigen::MatrixXd B1 = matrix_from_json(require_key(doc, "B1", what), "plant.B1");
  const Eigen::MatrixXd B2 = matrix_from_json(require_key(doc, "B2", what), "plant.B2");
  const Eigen::MatrixXd C1 = matrix_from_json(require_key(doc, "C1", what), "plant.C1");
  const Eigen::MatrixXd C2 = matrix_from_json(require_key(doc, "C2", what), "plant.C2");
  if (B1.rows() != nx) throw ParseError("plant.B1: row count must match A");
  if (B2.rows() != nx) throw ParseError("plant.B2: row count must match A");
  if (C1.cols() != nx) throw ParseError("plant.C1: column count must match A");
  if (C2.cols() != nx) throw ParseError("plant.C2: column count must match A");
  const Eigen::Index nw = B1.cols(), nu = B2.cols(), nz = C1.rows(), ny = C2.rows();
  const Eigen::MatrixXd D11 = optional_matrix(doc, "D11", nz, nw, what);
  const Eigen::MatrixXd D12 = optional_matrix(doc, "D12", nz, nu, what);
  const Eigen::MatrixXd D21 = optional_matrix(doc, "D21", ny, nw, what);
  const Eigen::MatrixXd D22 = optional_matrix(doc, "D22", ny, nu, what);
  if (D22.cwiseAbs().maxCoeff() != 0.0) {
    throw ParseError("plant.D22: must be absent or all-zero (strictly proper measurement path)");
  }
  return StateSpacePlant(A, B1, B2, C1, C2, D11, D12, D21);
}

Json plant_to_json(const StateSpacePlant& P) {
  Json doc = Json::object();
  doc["A"] = matrix_to_json(P.A);
  doc["B1"] = matrix_to_json(P.B1);
  doc["B2"] = matrix_to_json(P.B2);
  doc["C1"] = matrix_to_json(P.C1);
  doc["C2"] = matrix_to_json(P.C2);
  doc["D11"] = matrix_to_json(P.D11);
  doc["D12"] = matrix_to_json(P.D12);
  doc["D21"] = matrix_to_json(P.D21);
  return doc;
}

DoublyCoprimeFactors factors_from_json(const Json& doc) {
  const Json& root = (doc.is_object() && doc.contains("factors")) ? doc.at("factors") : doc;
  DoublyCoprimeFactors f;
  f.Ul = fir_from_json(require_key(root, "Ul", "factors"), "factors.Ul");
  f.Vl = fir_from_json(require_key(root, "Vl", "factors"), "factors.Vl");
  f.Nl = fir_from_json(require_key(root, "Nl", "factors"), "factors.Nl");
  f.Ml = fir_from_json(require_key(root, "Ml", "factors"), "factors.Ml");
  f.Ur = fir_from_json(require_key(root, "Ur", "factors"), "factors.Ur");
  f.Vr = fir_from_json(require_key(root, "Vr", "factors"), "factors.Vr");
  f.Nr = fir_from_json(require_key(root, "Nr", "factors"), "factors.Nr");
  f.Mr = fir_from_json(require_key(root, "Mr", "factors"), "factors.Mr");
  if (root.contains("gains")) {
    const Json& g = root.at("gains");
    StabilizingGains gains;
    gains.F = matrix_from_json(require_key(g, "F", "factors.gains"), "factors.gains.F");
    gains.L = matrix_from_json(require_key(g, "L", "factors.gains"), "factors.gains.L");
    gains.Lc = matrix_from_json(require_key(g, "Lc", "factors.gains"), "factors.gains.Lc");
    f.gains = gains;
  }
  return f;
}

Json factors_to_json(const DoublyCoprimeFactors& f) {
  Json doc = Json::object();
  doc["Ul"] = fir_to_json(f.Ul);
  doc["Vl"] = fir_to_json(f.Vl);
  doc["Nl"] = fir_to_json(f.Nl);
  doc["Ml"] = fir_to_json(f.Ml);
  doc["Ur"] = fir_to_json(f.Ur);
  doc["Vr"] = fir_to_json(f.Vr);
  doc["Nr"] = fir_to_json(f.Nr);
  doc["Mr"] = fir_to_json(f.Mr);
  if (f.gains) {
    Json g = Json::object();
    g["F"] = matrix_to_json(f.gains->F);
    g["L"] = matrix_to_json(f.gains->L);
    g["Lc"] = matrix_to_json(f.gains->Lc);
    doc["gains"] = std::move(g);
  }
  return doc;
}

SparsityPattern pattern_from_json(const Json& doc) {
  const Json* root = &doc;
  if (doc.is_object()) {
    if (doc.contains("mask")) {
      root = &doc.at("mask");
    } else if (doc.contains("pattern")) {
      root = &doc.at("pattern");
    } else {
      throw ParseError("pattern: expected a nested 0/1 array or a \"mask\" key");
    }
  }
  const Eigen::MatrixXd m = matrix_from_json(*root, "pattern");
  if (m.size() == 0) throw ParseError("pattern: must be non-empty");
  return SparsityPattern(m.unaryExpr([](double v) { return v != 0.0 ? 1.0 : 0.0; })
                             .cast<int>()
                             .eval());
}

Eigen::MatrixXd adjacency_from_json(const Json& doc) {
  const Json* root = &doc;
  if (doc.is_object()) {
    if (doc.contains("graph")) {
      root = &doc.at("graph");
    } else if (doc.contains("adjacency")) {
      root = &doc.at("adjacency");
    } else {
      throw ParseError("graph: expected a nested array or a \"graph\" key");
    }
  }
  const Eigen::MatrixXd adj = matrix_from_json(*root, "graph");
  if (adj.rows() != adj.cols() || adj.rows() == 0) throw ParseError("graph: must be square");
  return adj;
}

}  // namespace parametrix
