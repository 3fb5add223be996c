// Gathers a dataset's samples into per-noise-group column blocks so the
// per-iteration passes run as matrix products over each group instead of
// per-sample loops.

#pragma once

#include <Eigen/Dense>

#include <vector>

#include "hemppcat/types.hpp"

namespace hemppcat {

struct GroupedData {
  GroupedData(const Dataset& data, int L) : L(L) {
    index.resize(static_cast<std::size_t>(L));
    for (int i = 0; i < data.n(); ++i)
      index[static_cast<std::size_t>(data.group[i])].push_back(i);
    block.reserve(static_cast<std::size_t>(L));
    for (int l = 0; l < L; ++l) {
      const auto& idx = index[static_cast<std::size_t>(l)];
      Eigen::MatrixXd b(data.dim(), static_cast<Eigen::Index>(idx.size()));
      for (std::size_t c = 0; c < idx.size(); ++c) b.col(static_cast<Eigen::Index>(c)) = data.samples.col(idx[c]);
      block.push_back(std::move(b));
    }
  }

  int count(int l) const { return static_cast<int>(index[static_cast<std::size_t>(l)].size()); }

  int L;
  std::vector<std::vector<int>> index;  // original sample indices, ascending
  std::vector<Eigen::MatrixXd> block;   // d x n_l gathered columns
};

}  // namespace hemppcat
