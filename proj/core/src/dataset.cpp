#include "cbdr/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "cbdr/rng.hpp"

namespace cbdr {

namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument("dataset: " + msg);
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "NA";
}

double parse_number(const std::string& cell, const std::string& where) {
  const std::string t = trim(cell);
  if (t.empty()) fail("non-numeric cell in " + where);
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || !std::isfinite(v)) {
    fail("non-numeric cell '" + t + "' in " + where);
  }
  return v;
}

Matrix slice_rows(const Matrix& m, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (Index i = 0; i < out.rows(); ++i) out.row(i) = m.row(rows[i]);
  return out;
}

Vector slice_rows(const Vector& v, const std::vector<Index>& rows) {
  Vector out(static_cast<Index>(rows.size()));
  for (Index i = 0; i < out.size(); ++i) out[i] = v[rows[i]];
  return out;
}

}  // namespace

void Dataset::validate() const {
  const Index rows = x.rows();
  if (rows < 1) fail("needs at least one row");
  if (a.size() != rows || y.size() != rows) fail("a/y length mismatch");
  if (!x.allFinite()) fail("non-finite confounder value");
  if (!y.allFinite()) fail("non-finite outcome value");
  for (Index i = 0; i < rows; ++i) {
    if (a[i] != 1.0 && a[i] != -1.0) fail("treatment entries must be -1 or +1");
  }
  if (w.rows() != r.rows() || w.cols() != r.cols()) {
    fail("w/r shape mismatch");
  }
  if (w.cols() > 0 && w.rows() != rows) fail("w row count mismatch");
  for (Index j = 0; j < r.cols(); ++j) {
    double observed = 0.0;
    for (Index i = 0; i < r.rows(); ++i) {
      const double rij = r(i, j);
      if (rij != 0.0 && rij != 1.0) fail("mask entries must be 0 or 1");
      if (rij == 1.0) {
        if (!std::isfinite(w(i, j))) fail("observed w entry is not finite");
        observed += 1.0;
      }
    }
    if (observed == 0.0) {
      fail("predictive column " + std::to_string(j) + " has no observed values");
    }
  }
}

Dataset load_csv(const std::string& path, const ColumnSchema& schema) {
  if (schema.treatment.empty() || schema.outcome.empty() ||
      schema.confounders.empty()) {
    fail("schema needs a treatment column, an outcome column, and at least "
         "one confounder column");
  }

  std::ifstream in(path);
  if (!in) fail("cannot open file: " + path);

  std::string line;
  if (!std::getline(in, line)) fail("empty file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_line(line);

  auto col_index = [&](const std::string& name) -> Index {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) fail("unknown column '" + name + "'");
    return static_cast<Index>(it - header.begin());
  };

  const Index a_col = col_index(schema.treatment);
  const Index y_col = col_index(schema.outcome);
  std::vector<Index> x_cols, w_cols;
  for (const auto& name : schema.confounders) x_cols.push_back(col_index(name));
  for (const auto& name : schema.predictive) w_cols.push_back(col_index(name));

  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != header.size()) {
      fail("row " + std::to_string(rows.size() + 2) + " has " +
           std::to_string(cells.size()) + " cells, expected " +
           std::to_string(header.size()));
    }
    rows.push_back(std::move(cells));
  }
  const Index n = static_cast<Index>(rows.size());
  if (n < 1) fail("no data rows in " + path);

  const Index p = static_cast<Index>(x_cols.size());
  const Index q = static_cast<Index>(w_cols.size());
  Dataset ds;
  ds.x.resize(n, p);
  ds.a.resize(n);
  ds.y.resize(n);
  ds.w.resize(n, q);
  ds.r.resize(n, q);

  std::set<double> a_values;
  for (Index i = 0; i < n; ++i) {
    const auto& cells = rows[i];
    const std::string where = "row " + std::to_string(i + 2);
    if (is_missing(cells[a_col]) || is_missing(cells[y_col])) {
      fail("missing mandatory value in " + where);
    }
    ds.a[i] = parse_number(cells[a_col], where + " (treatment)");
    ds.y[i] = parse_number(cells[y_col], where + " (outcome)");
    a_values.insert(ds.a[i]);
    for (Index j = 0; j < p; ++j) {
      const auto& cell = cells[x_cols[j]];
      if (is_missing(cell)) fail("missing mandatory value in " + where);
      ds.x(i, j) = parse_number(cell, where);
    }
    for (Index j = 0; j < q; ++j) {
      const auto& cell = cells[w_cols[j]];
      if (is_missing(cell)) {
        ds.r(i, j) = 0.0;
        ds.w(i, j) = std::numeric_limits<double>::quiet_NaN();
      } else {
        ds.r(i, j) = 1.0;
        ds.w(i, j) = parse_number(cell, where);
      }
    }
  }

  const std::set<double> zero_one{0.0, 1.0};
  const std::set<double> minus_plus{-1.0, 1.0};
  auto subset_of = [&](const std::set<double>& allowed) {
    return std::all_of(a_values.begin(), a_values.end(),
                       [&](double v) { return allowed.count(v) > 0; });
  };
  if (a_values.size() < 2) fail("treatment column is constant");
  if (subset_of(zero_one)) {
    for (Index i = 0; i < n; ++i) {
      if (ds.a[i] == 0.0) ds.a[i] = -1.0;
    }
  } else if (!subset_of(minus_plus)) {
    fail("treatment column must be coded {-1,1} or {0,1}");
  }

  ds.validate();
  return ds;
}

void write_csv(const Dataset& ds, const std::string& path,
               const ColumnSchema& schema) {
  if (static_cast<Index>(schema.confounders.size()) != ds.p() ||
      static_cast<Index>(schema.predictive.size()) != ds.q()) {
    fail("schema does not match dataset shape");
  }
  std::ofstream out(path);
  if (!out) fail("cannot write file: " + path);

  auto fmt = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };

  for (const auto& name : schema.confounders) out << name << ',';
  for (const auto& name : schema.predictive) out << name << ',';
  out << schema.treatment << ',' << schema.outcome << '\n';

  for (Index i = 0; i < ds.n(); ++i) {
    for (Index j = 0; j < ds.p(); ++j) out << fmt(ds.x(i, j)) << ',';
    for (Index j = 0; j < ds.q(); ++j) {
      if (ds.r(i, j) == 1.0) out << fmt(ds.w(i, j));
      out << ',';
    }
    out << fmt(ds.a[i]) << ',' << fmt(ds.y[i]) << '\n';
  }
}

Dataset normalize(const Dataset& ds, const std::vector<Index>& columns) {
  Dataset out = ds;
  for (const Index col : columns) {
    if (col < 0 || col >= ds.p() + ds.q()) {
      fail("normalize: column index out of range");
    }
    if (col < ds.p()) {
      auto c = out.x.col(col);
      const double mean = c.mean();
      const double sd =
          std::sqrt((c.array() - mean).square().sum() /
                    static_cast<double>(ds.n() - 1));
      if (!(sd > 0.0)) {
        fail("normalize: zero-variance column " + std::to_string(col));
      }
      c = (c.array() - mean) / sd;
    } else {
      const Index j = col - ds.p();
      double sum = 0.0, count = 0.0;
      for (Index i = 0; i < ds.n(); ++i) {
        if (ds.r(i, j) == 1.0) {
          sum += ds.w(i, j);
          count += 1.0;
        }
      }
      const double mean = sum / count;
      double ss = 0.0;
      for (Index i = 0; i < ds.n(); ++i) {
        if (ds.r(i, j) == 1.0) {
          const double d = ds.w(i, j) - mean;
          ss += d * d;
        }
      }
      if (count < 2.0) fail("normalize: too few observed values");
      const double sd = std::sqrt(ss / (count - 1.0));
      if (!(sd > 0.0)) {
        fail("normalize: zero-variance column " + std::to_string(col));
      }
      for (Index i = 0; i < ds.n(); ++i) {
        if (ds.r(i, j) == 1.0) out.w(i, j) = (ds.w(i, j) - mean) / sd;
      }
    }
  }
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec) {
  if (ds.n() < 2) fail("split: needs at least two rows");
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    fail("split: train_fraction must lie in (0,1)");
  }
  const Index n = ds.n();
  const Index n_train = static_cast<Index>(
      std::floor(static_cast<double>(n) * spec.train_fraction + 0.5));

  std::vector<Index> perm(n);
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng(spec.seed);
  for (Index i = n - 1; i > 0; --i) {
    const Index j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(perm[i], perm[j]);
  }

  std::vector<Index> train_rows(perm.begin(), perm.begin() + n_train);
  std::vector<Index> test_rows(perm.begin() + n_train, perm.end());
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());

  auto take = [&](const std::vector<Index>& rows) {
    Dataset part;
    part.x = slice_rows(ds.x, rows);
    part.a = slice_rows(ds.a, rows);
    part.y = slice_rows(ds.y, rows);
    part.w = slice_rows(ds.w, rows);
    part.r = slice_rows(ds.r, rows);
    return part;
  };
  return {take(train_rows), take(test_rows)};
}

AugmentedDataset augment(const Dataset& ds, const Matrix& w_tilde) {
  if (w_tilde.rows() != ds.w.rows() || w_tilde.cols() != ds.w.cols()) {
    fail("augment: w_tilde shape mismatch");
  }
  if (!w_tilde.allFinite()) fail("augment: w_tilde must be finite");
  for (Index j = 0; j < ds.q(); ++j) {
    for (Index i = 0; i < ds.n(); ++i) {
      if (ds.r(i, j) == 1.0 && w_tilde(i, j) != ds.w(i, j)) {
        fail("augment: w_tilde disagrees with an observed entry");
      }
    }
  }
  AugmentedDataset aug;
  aug.base = ds;
  aug.w_tilde = w_tilde;
  aug.columns.resize(ds.n(), ds.p() + 2 * ds.q());
  aug.columns.leftCols(ds.p()) = ds.x;
  aug.columns.middleCols(ds.p(), ds.q()) = w_tilde;
  aug.columns.rightCols(ds.q()) = ds.r;
  return aug;
}

DesignData make_design(const Dataset& ds) {
  DesignData dd;
  dd.kind = DesignKind::X;
  dd.cov = ds.x;
  dd.a = ds.a;
  dd.y = ds.y;
  dd.p = ds.p();
  dd.q = 0;
  return dd;
}

DesignData make_design(const AugmentedDataset& aug) {
  DesignData dd;
  dd.kind = aug.base.q() == 0 ? DesignKind::X : DesignKind::XDagger;
  dd.cov = aug.columns;
  dd.a = aug.base.a;
  dd.y = aug.base.y;
  dd.p = aug.base.p();
  dd.q = aug.base.q();
  return dd;
}

}  // namespace cbdr
