#pragma once

#include <gfi/error.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace gfi {

using ParamVector = Eigen::VectorXd;
/// T x p, one particle per row.
using ParticleMatrix = Eigen::MatrixXd;

/// A block of observations: responses plus an optional covariate matrix
/// with one row per response (zero columns for univariate models).
struct Dataset
{
  Eigen::VectorXd y;
  Eigen::MatrixXd x;

  std::size_t size() const { return static_cast<std::size_t>(y.size()); }
  std::size_t covariates() const { return static_cast<std::size_t>(x.cols()); }
};

/// One worker's block y_k together with its index set I_k into the pooled data.
struct DataSubset
{
  std::size_t id = 0;
  std::vector<std::size_t> indices;
  Dataset data;

  std::size_t size() const { return data.size(); }
};

inline void validate(const Dataset& d)
{
  if (d.x.cols() > 0 && d.x.rows() != d.y.size())
    throw InvalidArgument("covariate row count does not match response count");
  if (!d.y.allFinite() || !d.x.allFinite())
    throw InvalidArgument("observations must be finite");
}

/// Whole dataset viewed as a single subset (K = 1).
inline DataSubset as_subset(const Dataset& d, std::size_t id = 0)
{
  DataSubset s;
  s.id = id;
  s.indices.resize(d.size());
  std::iota(s.indices.begin(), s.indices.end(), std::size_t{0});
  s.data = d;
  if (s.data.x.rows() != s.data.y.size())
    s.data.x.resize(s.data.y.size(), 0);
  return s;
}

inline DataSubset select(const Dataset& d, std::span<const std::size_t> indices,
                         std::size_t id)
{
  DataSubset s;
  s.id = id;
  s.indices.assign(indices.begin(), indices.end());
  const auto n = static_cast<Eigen::Index>(indices.size());
  s.data.y.resize(n);
  s.data.x.resize(n, d.x.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto src = static_cast<Eigen::Index>(indices[static_cast<std::size_t>(r)]);
    s.data.y(r) = d.y(src);
    if (d.x.cols() > 0)
      s.data.x.row(r) = d.x.row(src);
  }
  return s;
}

/// Row-wise concatenation, preserving order. Used only on oracle paths that
/// need the pooled data in one place.
inline DataSubset concatenate(std::span<const DataSubset> parts)
{
  DataSubset out;
  Eigen::Index n = 0;
  Eigen::Index q = parts.empty() ? 0 : parts.front().data.x.cols();
  for (const auto& p : parts) {
    n += p.data.y.size();
    if (p.data.x.cols() != q)
      throw InvalidArgument("subsets disagree on covariate count");
  }
  out.data.y.resize(n);
  out.data.x.resize(n, q);
  Eigen::Index row = 0;
  for (const auto& p : parts) {
    const auto m = p.data.y.size();
    out.data.y.segment(row, m) = p.data.y;
    if (q > 0)
      out.data.x.middleRows(row, m) = p.data.x;
    out.indices.insert(out.indices.end(), p.indices.begin(), p.indices.end());
    row += m;
  }
  out.id = parts.empty() ? 0 : parts.front().id;
  return out;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line)
{
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ','))
    out.push_back(cell);
  if (!line.empty() && line.back() == ',')
    out.emplace_back();
  return out;
}

inline std::string trim(std::string s)
{
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos)
    return {};
  return s.substr(b, e - b + 1);
}

inline std::string format_double(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

} // namespace detail

/// Observations as CSV: header `y,x1,...,xq`, one row per observation.
inline void write_csv(std::ostream& os, const Dataset& d)
{
  os << "y";
  for (Eigen::Index j = 0; j < d.x.cols(); ++j)
    os << ",x" << (j + 1);
  os << "\n";
  for (Eigen::Index i = 0; i < d.y.size(); ++i) {
    os << detail::format_double(d.y(i));
    for (Eigen::Index j = 0; j < d.x.cols(); ++j)
      os << "," << detail::format_double(d.x(i, j));
    os << "\n";
  }
}

inline void write_csv(const std::string& path, const Dataset& d)
{
  std::ofstream os(path);
  if (!os)
    throw InvalidArgument("cannot open '" + path + "' for writing");
  write_csv(os, d);
}

inline Dataset read_csv(std::istream& is)
{
  std::string line;
  if (!std::getline(is, line))
    throw InvalidArgument("data file is empty");
  const auto header = detail::split_csv_line(line);
  if (header.empty() || detail::trim(header[0]) != "y")
    throw InvalidArgument("data header must start with 'y'");
  for (std::size_t j = 1; j < header.size(); ++j)
    if (detail::trim(header[j]) != "x" + std::to_string(j))
      throw InvalidArgument("data header column " + std::to_string(j + 1) +
                            " must be 'x" + std::to_string(j) + "'");
  const std::size_t cols = header.size();

  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    if (detail::trim(line).empty())
      continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != cols)
      throw InvalidArgument("data row " + std::to_string(rows + 2) + " has " +
                            std::to_string(cells.size()) + " columns, expected " +
                            std::to_string(cols));
    for (const auto& c : cells) {
      std::size_t used = 0;
      double v = 0.0;
      const auto t = detail::trim(c);
      try {
        v = std::stod(t, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != t.size() || t.empty() || !std::isfinite(v))
        throw InvalidArgument("non-numeric or non-finite value '" + c + "' in data row " +
                              std::to_string(rows + 2));
      values.push_back(v);
    }
    ++rows;
  }

  Dataset d;
  d.y.resize(static_cast<Eigen::Index>(rows));
  d.x.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols - 1));
  for (std::size_t i = 0; i < rows; ++i) {
    d.y(static_cast<Eigen::Index>(i)) = values[i * cols];
    for (std::size_t j = 1; j < cols; ++j)
      d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j - 1)) = values[i * cols + j];
  }
  return d;
}

inline Dataset read_csv(const std::string& path)
{
  std::ifstream is(path);
  if (!is)
    throw InvalidArgument("cannot open data file '" + path + "'");
  return read_csv(is);
}

} // namespace gfi
