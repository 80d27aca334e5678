#pragma once

// Embedding and ratings CSV I/O, plus masked NMF to turn ratings into
// nonnegative user embeddings.

#include "supply_eq/core_geometry.hpp"
#include "supply_eq/error.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace supply_eq {

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::string strip(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t k = 0;
  while (k < s.size() && (s[k] == ' ' || s[k] == '\t')) ++k;
  return s.substr(k);
}

inline double parse_number(const std::string& cell, const std::string& where) {
  const std::string s = strip(cell);
  if (s.empty()) throw InputError(where + ": empty value");
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) throw InputError(where + ": not a finite number '" + s + "'");
  return v;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    line = strip(line);
    // '#' lines carry provenance written by the CLI.
    if (!line.empty() && line[0] != '#') lines.push_back(line);
  }
  return lines;
}

}  // namespace detail

struct EmbeddingTable {
  std::vector<std::string> ids;
  UserSet users;
};

/// Reads `user_id,f0,...,f{D-1}`; rows keep file order.
inline EmbeddingTable load_embeddings_table(const std::string& path) {
  const auto lines = detail::read_lines(path);
  if (lines.empty()) throw InputError(path + ": missing header");
  const auto header = detail::split_csv_line(lines[0]);
  if (header.size() < 2 || detail::strip(header[0]) != "user_id") {
    throw InputError(path + ": header must be user_id,f0,...,f{D-1}");
  }
  for (std::size_t d = 1; d < header.size(); ++d) {
    if (detail::strip(header[d]) != "f" + std::to_string(d - 1)) {
      throw InputError(path + ": header column " + std::to_string(d) + " must be f" + std::to_string(d - 1));
    }
  }
  const auto dim = static_cast<Eigen::Index>(header.size() - 1);
  if (lines.size() < 2) throw InputError(path + ": no users");

  EmbeddingTable t;
  Matrix m(static_cast<Eigen::Index>(lines.size() - 1), dim);
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto cells = detail::split_csv_line(lines[r]);
    const std::string where = path + ": row " + std::to_string(r);
    if (cells.size() != header.size()) {
      throw InputError(where + ": expected " + std::to_string(header.size()) + " columns, got " +
                       std::to_string(cells.size()));
    }
    t.ids.push_back(detail::strip(cells[0]));
    bool positive = false;
    for (Eigen::Index d = 0; d < dim; ++d) {
      const std::string cell_where = where + ", column f" + std::to_string(d);
      const double v = detail::parse_number(cells[static_cast<std::size_t>(d + 1)], cell_where);
      if (v < 0.0) throw InputError(cell_where + ": negative entry " + detail::strip(cells[static_cast<std::size_t>(d + 1)]));
      positive = positive || v > 0.0;
      m(static_cast<Eigen::Index>(r - 1), d) = v;
    }
    if (!positive) throw InputError(where + ": all-zero embedding");
  }
  t.users = UserSet(std::move(m));
  return t;
}

inline UserSet load_embeddings_csv(const std::string& path) { return load_embeddings_table(path).users; }

/// Writes embeddings with 17 significant digits; ids default to row indices.
inline void write_embeddings_csv(std::ostream& out, const Matrix& rows, const std::vector<std::string>& ids = {}) {
  if (!ids.empty() && ids.size() != static_cast<std::size_t>(rows.rows())) {
    throw std::invalid_argument("write_embeddings_csv: id count does not match rows");
  }
  out << "user_id";
  for (Eigen::Index d = 0; d < rows.cols(); ++d) out << ",f" << d;
  out << '\n';
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    out << (ids.empty() ? std::to_string(i) : ids[static_cast<std::size_t>(i)]);
    for (Eigen::Index d = 0; d < rows.cols(); ++d) out << ',' << detail::format_double(rows(i, d));
    out << '\n';
  }
}

inline void save_embeddings_csv(const std::string& path, const UserSet& users,
                                const std::vector<std::string>& ids = {}) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  write_embeddings_csv(out, users.matrix(), ids);
}

struct Rating {
  std::size_t user = 0;
  std::size_t item = 0;
  double value = 0.0;
};

struct RatingsTable {
  std::vector<Rating> ratings;
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  std::unordered_map<std::string, std::size_t> user_index;
  std::unordered_map<std::string, std::size_t> item_index;

  /// Adds a rating, assigning indices in order of first appearance.
  void add(const std::string& user, const std::string& item, double value) {
    if (!std::isfinite(value)) throw InputError("rating must be finite");
    if (value < 0.0) throw InputError("negative rating for user " + user + ", item " + item);
    auto intern = [](auto& index, auto& ids, const std::string& key) {
      auto [it, fresh] = index.try_emplace(key, ids.size());
      if (fresh) ids.push_back(key);
      return it->second;
    };
    ratings.push_back({intern(user_index, user_ids, user), intern(item_index, item_ids, item), value});
  }
};

/// Reads `user_id,item_id,rating`. Duplicate (user, item) pairs are rejected.
inline RatingsTable load_ratings_csv(const std::string& path) {
  const auto lines = detail::read_lines(path);
  if (lines.empty()) throw InputError(path + ": missing header");
  const auto header = detail::split_csv_line(lines[0]);
  if (header.size() != 3 || detail::strip(header[0]) != "user_id" || detail::strip(header[1]) != "item_id" ||
      detail::strip(header[2]) != "rating") {
    throw InputError(path + ": header must be user_id,item_id,rating");
  }
  RatingsTable t;
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto cells = detail::split_csv_line(lines[r]);
    const std::string where = path + ": row " + std::to_string(r);
    if (cells.size() != 3) throw InputError(where + ": expected 3 columns");
    const std::string u = detail::strip(cells[0]);
    const std::string i = detail::strip(cells[1]);
    if (!seen.try_emplace(u + '\x1f' + i, r).second) throw InputError(where + ": duplicate rating for " + u + "/" + i);
    const double v = detail::parse_number(cells[2], where);
    try {
      t.add(u, i, v);
    } catch (const InputError& e) {
      throw InputError(where + ": " + e.what());
    }
  }
  if (t.ratings.empty()) throw InputError(path + ": no ratings");
  return t;
}

struct NmfConfig {
  int factors = 2;
  int epochs = 200;
  std::uint64_t seed = 0;
  double init_scale = 0.1;
  double min_entry = 1e-9;

  void validate() const {
    if (factors < 1) throw std::invalid_argument("NmfConfig: factors must be >= 1");
    if (epochs < 1) throw std::invalid_argument("NmfConfig: epochs must be >= 1");
    if (!(init_scale > 0.0)) throw std::invalid_argument("NmfConfig: init_scale must be > 0");
    if (!(min_entry > 0.0)) throw std::invalid_argument("NmfConfig: min_entry must be > 0");
  }
};

struct NmfResult {
  UserSet users;
  std::vector<std::string> user_ids;
  Matrix item_factors;  // D x items
  /// Squared error over observed entries: initial value, then one entry per epoch.
  std::vector<double> trace;
  std::vector<std::string> dropped_users;
};

/// Masked multiplicative updates for min sum over observed (i,j) of (R_ij - (WH)_ij)^2.
/// Users whose ratings are all zero carry no signal and are dropped.
inline NmfResult nmf_factorize(const RatingsTable& table, const NmfConfig& cfg) {
  cfg.validate();
  std::vector<bool> has_positive(table.user_ids.size(), false);
  for (const auto& r : table.ratings) {
    if (r.value < 0.0) throw InputError("negative rating");
    if (r.value > 0.0) has_positive[r.user] = true;
  }
  NmfResult res;
  std::vector<Eigen::Index> row_of(table.user_ids.size(), -1);
  for (std::size_t u = 0; u < table.user_ids.size(); ++u) {
    if (has_positive[u]) {
      row_of[u] = static_cast<Eigen::Index>(res.user_ids.size());
      res.user_ids.push_back(table.user_ids[u]);
    } else {
      res.dropped_users.push_back(table.user_ids[u]);
    }
  }
  if (res.user_ids.empty()) throw InputError("nmf: no user has a positive rating");

  const auto n = static_cast<Eigen::Index>(res.user_ids.size());
  const auto m = static_cast<Eigen::Index>(table.item_ids.size());
  const Eigen::Index k = cfg.factors;
  Matrix R = Matrix::Zero(n, m);
  Matrix mask = Matrix::Zero(n, m);
  for (const auto& r : table.ratings) {
    if (row_of[r.user] < 0) continue;
    R(row_of[r.user], static_cast<Eigen::Index>(r.item)) = r.value;
    mask(row_of[r.user], static_cast<Eigen::Index>(r.item)) = 1.0;
  }

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix W(n, k);
  Matrix H(k, m);
  for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = cfg.init_scale * (0.5 + unif(rng));
  for (Eigen::Index i = 0; i < H.size(); ++i) H.data()[i] = cfg.init_scale * (0.5 + unif(rng));

  const Matrix MR = mask.cwiseProduct(R);
  auto objective = [&] { return (mask.cwiseProduct(W * H) - MR).squaredNorm(); };
  constexpr double kTiny = 1e-300;
  res.trace.push_back(objective());
  for (int e = 0; e < cfg.epochs; ++e) {
    const Matrix num_w = MR * H.transpose();
    const Matrix den_w = mask.cwiseProduct(W * H) * H.transpose();
    W = W.cwiseProduct(num_w.cwiseQuotient(den_w.array().max(kTiny).matrix())).cwiseMax(cfg.min_entry);
    const Matrix num_h = W.transpose() * MR;
    const Matrix den_h = W.transpose() * mask.cwiseProduct(W * H);
    H = H.cwiseProduct(num_h.cwiseQuotient(den_h.array().max(kTiny).matrix())).cwiseMax(cfg.min_entry);
    res.trace.push_back(objective());
  }
  res.users = UserSet(std::move(W));
  res.item_factors = std::move(H);
  return res;
}

}  // namespace supply_eq
