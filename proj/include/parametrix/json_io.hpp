#pragma once

#include <Eigen/Core>
#include <json.hpp>
#include <string>

#include "parametrix/coprime.hpp"
#include "parametrix/fir.hpp"
#include "parametrix/plant.hpp"
#include "parametrix/synthesis.hpp"

// JSON document layer shared by the command-line front end and its tests.
//
// Matrices are row-major nested arrays of numbers; FIR transfer matrices are
// objects {"coeffs": [matrix, ...]} listing impulse-response coefficients
// from tap 0 upward. Serialization uses shortest round-trip decimals, so
// every emitted document parses back to bit-identical values.

namespace parametrix {

using Json = nlohmann::ordered_json;

// Reads and parses a UTF-8 JSON file; throws ParseError with the path and
// the underlying reason on failure.
Json load_json_file(const std::string& path);

// Serializes with two-space indentation and a trailing newline.
std::string dump_document(const Json& doc);

Json matrix_to_json(const Eigen::MatrixXd& m);
// `what` names the field in error messages.
Eigen::MatrixXd matrix_from_json(const Json& j, const std::string& what);

Json fir_to_json(const FirTransferMatrix& g);
FirTransferMatrix fir_from_json(const Json& j, const std::string& what);

// Plant document: required A, B1, B2, C1, C2; optional D11, D12, D21
// (default zero); optional all-zero D22; optional "name" and "graph" keys
// are preserved for the caller but not interpreted here.
StateSpacePlant plant_from_json(const Json& doc);
Json plant_to_json(const StateSpacePlant& P);

// Factor document: the eight transfer matrices Ul, Vl, Nl, Ml, Ur, Vr, Nr,
// Mr, either at the top level or under a "factors" key, plus optional
// stabilizing gains {"F", "L", "Lc"} preserved across round trips.
DoublyCoprimeFactors factors_from_json(const Json& doc);
Json factors_to_json(const DoublyCoprimeFactors& f);

// Pattern document: a bare 0/1 nested array, or an object with a "mask" or
// "pattern" key holding one.
SparsityPattern pattern_from_json(const Json& doc);

// Adjacency document: a bare nested array, or an object with a "graph" or
// "adjacency" key (a plant document carrying "graph" works directly).
Eigen::MatrixXd adjacency_from_json(const Json& doc);

}  // namespace parametrix
