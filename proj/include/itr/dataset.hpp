#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace itr {

struct Dataset {
  Eigen::MatrixXd w;  // n x p covariates
  Eigen::VectorXd a;  // treatment, 0/1
  Eigen::VectorXd y;  // observed outcome
  bool has_potential_outcomes = false;
  Eigen::VectorXd y0, y1;

  Eigen::Index n() const { return w.rows(); }
  Eigen::Index p() const { return w.cols(); }
};

inline void write_dataset_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_dataset_csv: cannot open " + path);
  out.precision(17);
  const Eigen::Index p = data.p();
  for (Eigen::Index j = 0; j < p; ++j) out << 'W' << (j + 1) << ',';
  out << "A,Y";
  if (data.has_potential_outcomes) out << ",Y0,Y1";
  out << '\n';
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    for (Eigen::Index j = 0; j < p; ++j) out << data.w(i, j) << ',';
    out << data.a[i] << ',' << data.y[i];
    if (data.has_potential_outcomes) out << ',' << data.y0[i] << ',' << data.y1[i];
    out << '\n';
  }
  if (!out) throw std::runtime_error("write_dataset_csv: write failed for " + path);
}

inline Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_dataset_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("read_dataset_csv: empty file " + path);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  Eigen::Index p = 0;
  while (p < static_cast<Eigen::Index>(header.size()) &&
         header[p] == 'W' + std::to_string(p + 1))
    ++p;
  if (p == 0 || p + 2 > static_cast<Eigen::Index>(header.size()) || header[p] != "A" ||
      header[p + 1] != "Y")
    throw std::runtime_error("read_dataset_csv: expected header W1..Wp,A,Y in " + path);
  const bool has_po = header.size() == static_cast<std::size_t>(p) + 4 &&
                      header[p + 2] == "Y0" && header[p + 3] == "Y1";
  if (!has_po && header.size() != static_cast<std::size_t>(p) + 2)
    throw std::runtime_error("read_dataset_csv: unexpected trailing columns in " + path);

  std::vector<std::vector<double>> rows;
  const std::size_t want = header.size();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    row.reserve(want);
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != want)
      throw std::runtime_error("read_dataset_csv: ragged row in " + path);
    rows.push_back(std::move(row));
  }

  Dataset data;
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  data.w.resize(n, p);
  data.a.resize(n);
  data.y.resize(n);
  data.has_potential_outcomes = has_po;
  if (has_po) {
    data.y0.resize(n);
    data.y1.resize(n);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) data.w(i, j) = rows[i][j];
    data.a[i] = rows[i][p];
    data.y[i] = rows[i][p + 1];
    if (has_po) {
      data.y0[i] = rows[i][p + 2];
      data.y1[i] = rows[i][p + 3];
    }
  }
  return data;
}

// Raw little-endian double dump with a small header; used as a replicate cache.
inline void write_dataset_binary(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_dataset_binary: cannot open " + path);
  const std::uint64_t magic = 0x495452444154ULL;  // "ITRDAT"
  const std::uint64_t n = static_cast<std::uint64_t>(data.n());
  const std::uint64_t p = static_cast<std::uint64_t>(data.p());
  const std::uint64_t po = data.has_potential_outcomes ? 1 : 0;
  auto put = [&](const void* ptr, std::size_t bytes) {
    out.write(static_cast<const char*>(ptr), static_cast<std::streamsize>(bytes));
  };
  put(&magic, 8);
  put(&n, 8);
  put(&p, 8);
  put(&po, 8);
  put(data.w.data(), sizeof(double) * data.w.size());
  put(data.a.data(), sizeof(double) * n);
  put(data.y.data(), sizeof(double) * n);
  if (po) {
    put(data.y0.data(), sizeof(double) * n);
    put(data.y1.data(), sizeof(double) * n);
  }
  if (!out) throw std::runtime_error("write_dataset_binary: write failed for " + path);
}

inline Dataset read_dataset_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_dataset_binary: cannot open " + path);
  std::uint64_t magic = 0, n = 0, p = 0, po = 0;
  auto get = [&](void* ptr, std::size_t bytes) {
    in.read(static_cast<char*>(ptr), static_cast<std::streamsize>(bytes));
  };
  get(&magic, 8);
  get(&n, 8);
  get(&p, 8);
  get(&po, 8);
  if (!in || magic != 0x495452444154ULL)
    throw std::runtime_error("read_dataset_binary: bad header in " + path);
  Dataset data;
  data.w.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  data.a.resize(static_cast<Eigen::Index>(n));
  data.y.resize(static_cast<Eigen::Index>(n));
  data.has_potential_outcomes = po == 1;
  get(data.w.data(), sizeof(double) * data.w.size());
  get(data.a.data(), sizeof(double) * n);
  get(data.y.data(), sizeof(double) * n);
  if (po) {
    data.y0.resize(static_cast<Eigen::Index>(n));
    data.y1.resize(static_cast<Eigen::Index>(n));
    get(data.y0.data(), sizeof(double) * n);
    get(data.y1.data(), sizeof(double) * n);
  }
  if (!in) throw std::runtime_error("read_dataset_binary: truncated file " + path);
  return data;
}

}  // namespace itr
