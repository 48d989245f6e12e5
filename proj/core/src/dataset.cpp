#include "fgee/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "fgee/errors.hpp"

namespace fgee {

CovariateValue Cluster::covariate_value(int r, int j) const {
  const auto& cov = x[r];
  if (cov.functional) return CovariateValue::make_functional(cov.values.row(j).transpose());
  return CovariateValue::make_scalar(cov.scalar[j]);
}

long FunctionalDataset::total_obs() const {
  long n = 0;
  for (const auto& c : clusters) n += c.n();
  return n;
}

long FunctionalDataset::total_values() const { return total_obs() * num_points(); }

int FunctionalDataset::max_cluster_size() const {
  int n = 0;
  for (const auto& c : clusters) n = std::max(n, c.n());
  return n;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, long line_no, const std::string& column) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (end[-1] == ' ' || end[-1] == '\t' || end[-1] == '\r')) --end;
  double value = 0.0;
  const auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc() || res.ptr != end)
    throw validation_error("csv line " + std::to_string(line_no) + ": non-numeric value '" + s +
                           "' in column " + column);
  return value;
}

}  // namespace

FunctionalDataset read_long_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open input file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw validation_error("empty input file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_csv_line(line);
  const std::vector<std::string> required = {"cluster_id", "obs_index", "s", "y"};
  if (header.size() < required.size())
    throw validation_error("csv header must start with cluster_id,obs_index,s,y");
  for (std::size_t i = 0; i < required.size(); ++i)
    if (header[i] != required[i])
      throw validation_error("csv header column " + std::to_string(i + 1) + " must be '" +
                             required[i] + "', found '" + header[i] + "'");
  const int q = static_cast<int>(header.size()) - 4;

  struct Row {
    double s, y;
    std::vector<double> x;
  };
  // (cluster, obs) -> s -> row, with deterministic ordering.
  std::map<long, std::map<long, std::map<double, Row>>> table;

  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != 4 + q)
      throw validation_error("csv line " + std::to_string(line_no) + ": expected " +
                             std::to_string(4 + q) + " fields, found " +
                             std::to_string(fields.size()));
    const long cid = static_cast<long>(parse_number(fields[0], line_no, "cluster_id"));
    const long obs = static_cast<long>(parse_number(fields[1], line_no, "obs_index"));
    Row row;
    row.s = parse_number(fields[2], line_no, "s");
    row.y = parse_number(fields[3], line_no, "y");
    row.x.resize(q);
    for (int r = 0; r < q; ++r) row.x[r] = parse_number(fields[4 + r], line_no, header[4 + r]);
    auto& slot = table[cid][obs];
    if (slot.count(row.s))
      throw validation_error("csv line " + std::to_string(line_no) + ": duplicate row for (cluster " +
                             std::to_string(cid) + ", obs " + std::to_string(obs) + ", s " +
                             std::to_string(row.s) + ")");
    slot.emplace(row.s, std::move(row));
  }
  if (table.empty()) throw validation_error("input file has no data rows: " + path);

  // Shared grid from the first (cluster, obs) pair.
  const auto& first_obs = table.begin()->second.begin()->second;
  const int L = static_cast<int>(first_obs.size());
  Eigen::VectorXd grid(L);
  {
    int l = 0;
    for (const auto& [s, row] : first_obs) grid[l++] = s;
  }

  FunctionalDataset data;
  data.grid = grid;
  data.q = q;
  for (const auto& [cid, obs_map] : table) {
    Cluster cluster;
    cluster.id = cid;
    const int n = static_cast<int>(obs_map.size());
    cluster.y.resize(n, L);
    std::vector<Eigen::MatrixXd> xv(q, Eigen::MatrixXd(n, L));
    long expect = obs_map.begin()->first;
    int j = 0;
    for (const auto& [obs, rows] : obs_map) {
      if (obs != expect)
        throw validation_error("cluster " + std::to_string(cid) + ": obs_index " +
                               std::to_string(obs) + " is not consecutive (expected " +
                               std::to_string(expect) +
                               "); irregular longitudinal spacing is unsupported (AR1 requires "
                               "regular trial intervals)");
      ++expect;
      int l = 0;
      for (const auto& [s, row] : rows) {
        if (l >= L || s != grid[l])
          throw validation_error("cluster " + std::to_string(cid) + ", obs " +
                                 std::to_string(obs) + ": grid point " + std::to_string(s) +
                                 " does not match the shared grid");
        cluster.y(j, l) = row.y;
        for (int r = 0; r < q; ++r) xv[r](j, l) = row.x[r];
        ++l;
      }
      if (l != L) {
        // Name one missing grid point for the offending (cluster, obs).
        for (int g = 0; g < L; ++g) {
          if (!rows.count(grid[g])) {
            throw validation_error("missing row for (cluster " + std::to_string(cid) + ", obs " +
                                   std::to_string(obs) + ", s " + std::to_string(grid[g]) + ")");
          }
        }
        throw validation_error("cluster " + std::to_string(cid) + ", obs " + std::to_string(obs) +
                               ": incomplete grid");
      }
      ++j;
    }
    cluster.x.resize(q);
    for (int r = 0; r < q; ++r) {
      bool constant = true;
      for (int jj = 0; jj < n && constant; ++jj)
        for (int l = 1; l < L; ++l)
          if (xv[r](jj, l) != xv[r](jj, 0)) {
            constant = false;
            break;
          }
      cluster.x[r].functional = !constant;
      if (constant)
        cluster.x[r].scalar = xv[r].col(0);
      else
        cluster.x[r].values = std::move(xv[r]);
    }
    data.clusters.push_back(std::move(cluster));
  }
  return data;
}

void write_long_csv(const FunctionalDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw validation_error("cannot open output file: " + path);
  out << "cluster_id,obs_index,s,y";
  for (int r = 0; r < data.q; ++r) out << ",x" << (r + 1);
  out << "\n";
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
  };
  const int L = data.num_points();
  for (const auto& cluster : data.clusters) {
    for (int j = 0; j < cluster.n(); ++j) {
      for (int l = 0; l < L; ++l) {
        out << cluster.id << ',' << (j + 1) << ',';
        put(data.grid[l]);
        out << ',';
        put(cluster.y(j, l));
        for (int r = 0; r < data.q; ++r) {
          out << ',';
          put(cluster.covariate(r, j, l));
        }
        out << "\n";
      }
    }
  }
}

}  // namespace fgee
