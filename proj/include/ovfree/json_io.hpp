#pragma once

// JSON encodings of matrices, laws and distributions for the batch driver.
//
//   matrix        {"re": [[...]], "im": [[...]]}   row-major, "im" optional
//                 {"scalar": "2i", "dim": 2}        scalar multiple of 1
//                 "1+2i" or 3.5                     1×1
//   law           {"variant": "cauchy", "location": 0, "scale": 1} or "cauchy";
//                 {"atoms": [[position, weight], ...]} for atomic laws
//   distribution  {"backend": "scalar" | "dirac" | "semicircular" | "diagonal" | "matrix_model", ...}

#include <complex>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "ovfree/measures.hpp"
#include "ovfree/numerics.hpp"
#include "ovfree/ovdist.hpp"

namespace ovfree {

using Json = nlohmann::ordered_json;

/// Malformed or unknown configuration content.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Throws SchemaError naming the first key of j not in allowed.
void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where);

/// "1+2i", "-i", "0.3-2.5i", "4", "1e-3+2i"
std::complex<double> parse_complex(const std::string& text);
std::string format_complex(std::complex<double> z);

Json to_json(std::complex<double> z);
Json to_json(const ComplexMatrix& m);
ComplexMatrix matrix_from_json(const Json& j);

ScalarMeasure measure_from_json(const Json& j);
/// default_seed feeds Monte-Carlo backends whose spec has no seed of its own.
OVDistribution distribution_from_json(const Json& j, std::uint64_t default_seed);

/// FNV-1a 64 over the key-sorted compact dump.
std::uint64_t config_hash(const Json& config);
std::string hex64(std::uint64_t h);

}  // namespace ovfree
