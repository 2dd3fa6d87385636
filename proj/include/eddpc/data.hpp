#pragma once

// Dataset model, CSV I/O, Hankel construction, persistent-excitation rank
// check, experiment averaging and SNR computation.

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "eddpc/errors.hpp"
#include "eddpc/numkit.hpp"

namespace eddpc::data {

using numkit::Matrix;
using numkit::Vector;

/// Recorded input/state sequences; the only plant knowledge the synthesizer
/// ever sees. `x` holds the measured states; `w` the noise realization when
/// the dataset came from the built-in simulator.
struct Dataset {
  Eigen::Index m = 0;    // input dimension
  Eigen::Index n = 0;    // state dimension
  std::vector<Vector> u; // t = 0 .. T_s-1
  std::vector<Vector> x;
  std::vector<Vector> w; // optional, same length as x when present

  Eigen::Index samples() const { return static_cast<Eigen::Index>(x.size()); }
  bool has_noise() const { return !w.empty(); }

  void validate() const {
    if (u.size() != x.size())
      throw InvalidInputError("Dataset: input/state lengths differ");
    if (!w.empty() && w.size() != x.size())
      throw InvalidInputError("Dataset: noise length differs from states");
    for (const auto& v : u)
      if (v.size() != m) throw InvalidInputError("Dataset: bad input width");
    for (const auto& v : x)
      if (v.size() != n) throw InvalidInputError("Dataset: bad state width");
    for (const auto& v : w)
      if (v.size() != n) throw InvalidInputError("Dataset: bad noise width");
  }
};

/// The three data matrices that replace the model. Columns are consistent
/// sliding windows of the source dataset; all share N = T_s - L columns.
struct PredictorData {
  Eigen::Index L = 0;
  Eigen::Index N = 0;
  Matrix X_past;        // n  x N, columns x(j)
  Matrix U_block;       // mL x N, column j stacks u(j) .. u(j+L-1)
  Matrix X_future;      // nL x N, column j stacks x(j+1) .. x(j+L)
  Matrix stacked_pinv;  // pinv([X_past; U_block]), cached for reuse

  Eigen::Index n() const { return X_past.rows(); }
  Eigen::Index m() const { return L > 0 ? U_block.rows() / L : 0; }

  Matrix stacked() const {
    Matrix s(X_past.rows() + U_block.rows(), N);
    s.topRows(X_past.rows()) = X_past;
    s.bottomRows(U_block.rows()) = U_block;
    return s;
  }
};

/// Hankel matrix of depth `depth`: column j stacks signal(j)..signal(j+depth-1).
inline Matrix build_hankel(const std::vector<Vector>& signal,
                           Eigen::Index depth) {
  if (depth < 1) throw InvalidInputError("build_hankel: depth must be >= 1");
  const Eigen::Index len = static_cast<Eigen::Index>(signal.size());
  if (depth > len)
    throw InvalidInputError("build_hankel: depth exceeds signal length");
  const Eigen::Index d = signal.front().size();
  const Eigen::Index cols = len - depth + 1;
  Matrix h(d * depth, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index k = 0; k < depth; ++k)
      h.block(k * d, j, d, 1) = signal[static_cast<size_t>(j + k)];
  return h;
}

inline PredictorData build_predictor_data(const Dataset& d, Eigen::Index L) {
  d.validate();
  if (L < 1) throw InvalidInputError("build_predictor_data: L must be >= 1");
  const Eigen::Index T_s = d.samples();
  if (T_s < L + 1)
    throw InvalidInputError("build_predictor_data: horizon too long for data");
  PredictorData pd;
  pd.L = L;
  pd.N = T_s - L;
  pd.X_past = Matrix(d.n, pd.N);
  for (Eigen::Index j = 0; j < pd.N; ++j)
    pd.X_past.col(j) = d.x[static_cast<size_t>(j)];
  pd.U_block = Matrix(d.m * L, pd.N);
  pd.X_future = Matrix(d.n * L, pd.N);
  for (Eigen::Index j = 0; j < pd.N; ++j) {
    for (Eigen::Index k = 0; k < L; ++k) {
      pd.U_block.block(k * d.m, j, d.m, 1) = d.u[static_cast<size_t>(j + k)];
      pd.X_future.block(k * d.n, j, d.n, 1) =
          d.x[static_cast<size_t>(j + k + 1)];
    }
  }
  pd.stacked_pinv = numkit::pinv(pd.stacked());
  return pd;
}

struct RankCheck {
  Eigen::Index rank = 0;
  Eigen::Index required = 0;
  bool satisfied = false;
};

/// Fundamental-lemma rank condition on [X_past; U_block]: required n + mL.
inline RankCheck check_rank_condition(const PredictorData& pd, Eigen::Index n,
                                      Eigen::Index m) {
  RankCheck rc;
  rc.required = n + m * pd.L;
  rc.rank = numkit::numerical_rank(pd.stacked(), 1e-10);
  rc.satisfied = rc.rank >= rc.required;
  return rc;
}

/// Mean of repeated experiments driven by the identical input sequence.
inline Dataset average_datasets(const std::vector<Dataset>& runs) {
  if (runs.empty()) throw InvalidInputError("average_datasets: no runs");
  const Dataset& first = runs.front();
  for (const auto& r : runs) {
    r.validate();
    if (r.m != first.m || r.n != first.n || r.samples() != first.samples())
      throw InvalidInputError("average_datasets: mismatched dimensions");
    for (size_t t = 0; t < r.u.size(); ++t)
      if (r.u[t] != first.u[t])
        throw InvalidInputError(
            "average_datasets: runs must share the identical input sequence");
  }
  Dataset avg;
  avg.m = first.m;
  avg.n = first.n;
  avg.u = first.u;
  const double inv = 1.0 / static_cast<double>(runs.size());
  const bool all_noise = std::all_of(runs.begin(), runs.end(),
                                     [](const Dataset& r) { return r.has_noise(); });
  for (size_t t = 0; t < first.x.size(); ++t) {
    Vector xs = Vector::Zero(first.n);
    Vector ws = Vector::Zero(first.n);
    for (const auto& r : runs) {
      xs += r.x[t];
      if (all_noise) ws += r.w[t];
    }
    avg.x.push_back(inv * xs);
    if (all_noise) avg.w.push_back(inv * ws);
  }
  return avg;
}

/// Channel-averaged SNR in dB:
///   (1/n) sum_i 10 log10( sum_t (x_i(t) - w_i(t))^2 / sum_t w_i(t)^2 ).
inline double snr_db(const std::vector<Vector>& x,
                     const std::vector<Vector>& w) {
  if (x.size() != w.size() || x.empty())
    throw InvalidInputError("snr_db: sequence lengths differ or empty");
  const Eigen::Index n = x.front().size();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double sig = 0.0, noise = 0.0;
    for (size_t t = 0; t < x.size(); ++t) {
      const double s = x[t](i) - w[t](i);
      sig += s * s;
      noise += w[t](i) * w[t](i);
    }
    if (noise == 0.0)
      throw InvalidInputError("snr_db: identically-zero noise channel");
    acc += 10.0 * std::log10(sig / noise);
  }
  return acc / static_cast<double>(n);
}

// --- CSV I/O ---------------------------------------------------------------
// Header: t,u_1..u_m,x_1..x_n[,w_1..w_n]; 17 significant digits.

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

inline void write_dataset(const Dataset& d, const std::string& path) {
  d.validate();
  std::ofstream f(path);
  if (!f) throw InvalidInputError("write_dataset: cannot open " + path);
  f << "t";
  for (Eigen::Index j = 0; j < d.m; ++j) f << ",u_" << (j + 1);
  for (Eigen::Index j = 0; j < d.n; ++j) f << ",x_" << (j + 1);
  if (d.has_noise())
    for (Eigen::Index j = 0; j < d.n; ++j) f << ",w_" << (j + 1);
  f << "\n";
  for (Eigen::Index t = 0; t < d.samples(); ++t) {
    f << t;
    for (Eigen::Index j = 0; j < d.m; ++j)
      f << "," << detail::fmt17(d.u[static_cast<size_t>(t)](j));
    for (Eigen::Index j = 0; j < d.n; ++j)
      f << "," << detail::fmt17(d.x[static_cast<size_t>(t)](j));
    if (d.has_noise())
      for (Eigen::Index j = 0; j < d.n; ++j)
        f << "," << detail::fmt17(d.w[static_cast<size_t>(t)](j));
    f << "\n";
  }
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("read_dataset: cannot open " + path);
  std::string line;
  if (!std::getline(f, line) || line.empty())
    throw ParseError("read_dataset: empty file", 1);
  const auto header = detail::split_csv(line);
  if (header.empty() || header[0] != "t")
    throw ParseError("read_dataset: header must start with 't'", 1);
  Eigen::Index m = 0, n = 0, nw = 0;
  for (size_t j = 1; j < header.size(); ++j) {
    if (header[j].rfind("u_", 0) == 0)
      ++m;
    else if (header[j].rfind("x_", 0) == 0)
      ++n;
    else if (header[j].rfind("w_", 0) == 0)
      ++nw;
    else
      throw ParseError("read_dataset: unknown column '" + header[j] + "'", 1);
  }
  if (n == 0) throw SchemaError("read_dataset: no state columns");
  if (nw != 0 && nw != n)
    throw SchemaError("read_dataset: noise column count differs from states");
  Dataset d;
  d.m = m;
  d.n = n;
  long lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = detail::split_csv(line);
    if (static_cast<Eigen::Index>(cells.size()) != 1 + m + n + nw)
      throw SchemaError("read_dataset: wrong column count at line " +
                        std::to_string(lineno));
    size_t c = 1;
    const auto parse = [&](Eigen::Index count) {
      Vector v(count);
      for (Eigen::Index j = 0; j < count; ++j) {
        try {
          size_t pos = 0;
          v(j) = std::stod(cells[c], &pos);
          if (pos != cells[c].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
          throw ParseError("read_dataset: bad number '" + cells[c] + "'",
                           lineno);
        }
        ++c;
      }
      return v;
    };
    d.u.push_back(parse(m));
    d.x.push_back(parse(n));
    if (nw > 0) d.w.push_back(parse(n));
  }
  if (d.x.empty()) throw ParseError("read_dataset: no data rows", lineno);
  d.validate();
  return d;
}

/// FNV-1a over the raw numeric bytes; used for provenance digests.
inline std::uint64_t digest(const Dataset& d) {
  std::uint64_t h = 14695981039346656037ull;
  const auto mix = [&h](const Vector& v) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(v.data());
    for (Eigen::Index i = 0; i < v.size() * static_cast<Eigen::Index>(sizeof(double)); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& v : d.u) mix(v);
  for (const auto& v : d.x) mix(v);
  return h;
}

}  // namespace eddpc::data
