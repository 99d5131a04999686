#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cbdr/types.hpp"

namespace cbdr {

/// Immutable-by-convention study table. Treatment entries are exactly -1/+1,
/// outcomes are finite, and predictive covariates `w` hold NaN wherever the
/// mask `r` is 0.
struct Dataset {
  Matrix x;  // n x p confounders
  Vector a;  // treatment in {-1, +1}
  Vector y;  // outcome, larger is better
  Matrix w;  // n x q predictive covariates, NaN where unobserved
  Matrix r;  // n x q observation indicators in {0, 1}

  Index n() const { return x.rows(); }
  Index p() const { return x.cols(); }
  Index q() const { return w.cols(); }
  bool has_predictive() const { return w.cols() > 0; }

  /// Throws std::invalid_argument when any structural invariant fails
  /// (shape mismatches, non-finite mandatory values, a not in {-1,+1},
  /// unobserved-only predictive columns).
  void validate() const;
};

struct ColumnSchema {
  std::string treatment;
  std::string outcome;
  std::vector<std::string> confounders;
  std::vector<std::string> predictive;
};

/// Reads a headered CSV. Empty cells and the token NA mark missing values,
/// which are only legal in predictive columns; {0,1} treatment coding is
/// remapped to {-1,+1}.
Dataset load_csv(const std::string& path, const ColumnSchema& schema);

/// Inverse of load_csv for finite values: doubles are printed with 17
/// significant digits so a reload reproduces the dataset bit-exactly.
void write_csv(const Dataset& ds, const std::string& path,
               const ColumnSchema& schema);

/// Standardizes the selected columns to mean 0 / sd 1 (n-1 denominator).
/// Indices 0..p-1 address confounders, p..p+q-1 predictive columns; for the
/// latter the statistics use observed entries only. Errors on zero variance.
Dataset normalize(const Dataset& ds, const std::vector<Index>& columns);

struct SplitSpec {
  double train_fraction = 0.5;
  std::uint64_t seed = 0;
};

/// Seeded disjoint row partition; train size is round-half-up of
/// n * train_fraction and row order within each part preserves the original
/// order.
std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec);

/// Augmented covariate set: `columns` stacks [X | w_tilde | R] in that fixed
/// order (p + 2q columns).
struct AugmentedDataset {
  Dataset base;
  Matrix w_tilde;
  Matrix columns;
};

/// Requires w_tilde to be finite, match w's shape, and agree with w on every
/// observed entry.
AugmentedDataset augment(const Dataset& ds, const Matrix& w_tilde);

/// Covariate view handed to the nuisance models: `cov` is X or [X|W~|R]
/// depending on the design, while rules always act on the leading p columns.
struct DesignData {
  DesignKind kind = DesignKind::X;
  Matrix cov;
  Vector a;
  Vector y;
  Index p = 0;
  Index q = 0;

  Index n() const { return cov.rows(); }
  auto x() const { return cov.leftCols(p); }
};

DesignData make_design(const Dataset& ds);
DesignData make_design(const AugmentedDataset& aug);

}  // namespace cbdr
