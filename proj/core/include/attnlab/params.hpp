#pragma once

#include <string>
#include <vector>

#include "attnlab/matrix.hpp"

namespace attnlab {

// Non-owning view of one learnable tensor. Vectors are stored as 1×n matrices.
struct NamedParam {
  std::string name;
  Matrix* value = nullptr;
};

using ParamList = std::vector<NamedParam>;

// Prefixes every name with `prefix` + ".".
inline void append_params(ParamList& out, const std::string& prefix, ParamList items) {
  for (auto& p : items) {
    p.name = prefix + "." + p.name;
    out.push_back(std::move(p));
  }
}

}  // namespace attnlab
