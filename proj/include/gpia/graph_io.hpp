#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "gpia/graph.hpp"

namespace gpia {

namespace detail {

inline std::vector<std::string> split_line(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    std::size_t b = 0;
    while (b < cell.size() && cell[b] == ' ') ++b;
    out.push_back(cell.substr(b));
  }
  return out;
}

inline long long parse_int(const std::string& s, const std::string& where) {
  long long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc{} && p == s.data() + s.size(), Errc::parse_error,
          where + ": not an integer '" + s + "'");
  return v;
}

inline double parse_real(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    require(used == s.size(), Errc::parse_error, where + ": not a number '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    fail(Errc::parse_error, where + ": not a number '" + s + "'");
  }
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), Errc::missing_file, path.string());
  return in;
}

}  // namespace detail

/// Reads an edge list (two tab-separated integer columns per line) and a node
/// CSV with header `id,label,attr,f0..f{d-1}`. Node ids must cover 0..n-1.
inline AttributedGraph load_graph(const std::filesystem::path& edge_path,
                                  const std::filesystem::path& node_path) {
  EdgeSet edges;
  long long max_endpoint = -1;
  {
    auto in = detail::open_input(edge_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line == "\r" || line[0] == '#') continue;
      auto cols = detail::split_line(line, '\t');
      require(cols.size() == 2, Errc::parse_error,
              edge_path.string() + ":" + std::to_string(lineno) + ": expected two columns");
      const auto where = edge_path.string() + ":" + std::to_string(lineno);
      long long a = detail::parse_int(cols[0], where);
      long long b = detail::parse_int(cols[1], where);
      require(a >= 0 && b >= 0, Errc::edge_out_of_range, where);
      max_endpoint = std::max({max_endpoint, a, b});
      edges.emplace_back(static_cast<NodeId>(a), static_cast<NodeId>(b));
    }
  }

  std::vector<std::vector<double>> rows;
  std::vector<long long> ids;
  std::vector<int> labels, attrs;
  {
    auto in = detail::open_input(node_path);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), Errc::parse_error,
            node_path.string() + ": missing header");
    auto header = detail::split_line(line, ',');
    require(header.size() >= 3 && header[0] == "id" && header[1] == "label" && header[2] == "attr",
            Errc::parse_error, node_path.string() + ": header must start with id,label,attr");
    const std::size_t width = header.size();
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line == "\r") continue;
      auto cols = detail::split_line(line, ',');
      const auto where = node_path.string() + ":" + std::to_string(lineno);
      require(cols.size() == width, Errc::ragged_attributes, where);
      ids.push_back(detail::parse_int(cols[0], where));
      labels.push_back(static_cast<int>(detail::parse_int(cols[1], where)));
      attrs.push_back(static_cast<int>(detail::parse_int(cols[2], where)));
      std::vector<double> f;
      for (std::size_t c = 3; c < width; ++c) f.push_back(detail::parse_real(cols[c], where));
      rows.push_back(std::move(f));
    }
  }

  const std::size_t n = rows.size();
  require(max_endpoint < static_cast<long long>(n), Errc::ragged_attributes,
          "attribute table has " + std::to_string(n) + " rows but edges reference node " +
              std::to_string(max_endpoint));
  const std::size_t dim = n ? rows.front().size() : 0;
  Eigen::MatrixXd features(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  std::vector<int> attr(n), label(n);
  std::vector<bool> seen(n, false);
  int num_classes = 1;
  for (std::size_t i = 0; i < n; ++i) {
    const long long id = ids[i];
    require(id >= 0 && id < static_cast<long long>(n) && !seen[id], Errc::parse_error,
            "node ids must be contiguous from 0");
    seen[id] = true;
    for (std::size_t c = 0; c < dim; ++c) features(id, static_cast<Eigen::Index>(c)) = rows[i][c];
    attr[id] = attrs[i];
    label[id] = labels[i];
    require(labels[i] >= 0, Errc::parse_error, "negative class label");
    num_classes = std::max(num_classes, labels[i] + 1);
  }
  return AttributedGraph(n, std::move(edges), std::move(features), std::move(attr),
                         std::move(label), num_classes);
}

inline void save_graph(const AttributedGraph& g, const std::filesystem::path& edge_path,
                       const std::filesystem::path& node_path) {
  std::ofstream eo(edge_path);
  require(eo.good(), Errc::io, edge_path.string());
  for (const auto& e : g.edges()) eo << e.u << '\t' << e.v << '\n';

  std::ofstream no(node_path);
  require(no.good(), Errc::io, node_path.string());
  no << "id,label,attr";
  for (std::size_t c = 0; c < g.feature_dim(); ++c) no << ",f" << c;
  no << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    no << i << ',' << g.class_label()[i] << ',' << g.property_attr()[i];
    for (std::size_t c = 0; c < g.feature_dim(); ++c)
      no << ',' << g.features()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
    no << '\n';
  }
  require(eo.good() && no.good(), Errc::io, "write failed");
}

}  // namespace gpia
