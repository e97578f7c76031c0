#pragma once

#include <complex>
#include <string>
#include <vector>

namespace ovfree {

enum class IndependenceMode { Equal, Classical, Free, Boolean };

std::string to_string(IndependenceMode mode);
IndependenceMode independence_mode_from_string(const std::string& s);

/// One factor (z − X_var)^{-1} of a resolvent word; var is 0-based.
struct Letter {
  std::complex<double> z;
  int var;
};

using Word = std::vector<Letter>;

}  // namespace ovfree
