#include "trajctl/export_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "trajctl/errors.hpp"

namespace trajctl {
namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_text_file(const std::string& path, const std::string& content) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(target.parent_path(), ec);
    if (ec)
      throw Error(ErrorCode::IoError, "cannot create directory " +
                                          target.parent_path().string() +
                                          ": " + ec.message());
  }
  const std::filesystem::path tmp(path + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw Error(ErrorCode::IoError, "cannot open " + tmp.string() +
                                          " for writing");
    out.write(content.data(),
              static_cast<std::streamsize>(content.size()));
    if (!out)
      throw Error(ErrorCode::IoError, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec)
    throw Error(ErrorCode::IoError,
                "cannot rename " + tmp.string() + " to " + path + ": " +
                    ec.message());
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string matrix_to_csv(const Mat& m) {
  std::string out;
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) {
      if (j) out += ',';
      out += format_double(m.at(i, j));
    }
    out += '\n';
  }
  return out;
}

std::string matrix_to_pgm(const Mat& m) {
  double lo = 0.0;
  double hi = 0.0;
  if (!m.data.empty()) {
    lo = *std::min_element(m.data.begin(), m.data.end());
    hi = *std::max_element(m.data.begin(), m.data.end());
  }
  const double span = hi - lo;
  std::string out = "P2\n" + std::to_string(m.cols) + " " +
                    std::to_string(m.rows) + "\n255\n";
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) {
      int level = 0;
      if (span > 0.0)
        level = static_cast<int>(
            std::lround((m.at(i, j) - lo) / span * 255.0));
      if (j) out += ' ';
      out += std::to_string(level);
    }
    out += '\n';
  }
  return out;
}

std::string mask_to_csv(const AttentionMask& mask) {
  std::string out;
  for (std::size_t i = 0; i < mask.query_count(); ++i) {
    for (std::size_t j = 0; j < mask.key_count(); ++j) {
      if (j) out += ',';
      out += mask.blocked(i, j) ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

std::string mask_to_pgm(const AttentionMask& mask) {
  std::string out = "P2\n" + std::to_string(mask.key_count()) + " " +
                    std::to_string(mask.query_count()) + "\n1\n";
  for (std::size_t i = 0; i < mask.query_count(); ++i) {
    for (std::size_t j = 0; j < mask.key_count(); ++j) {
      if (j) out += ' ';
      out += mask.blocked(i, j) ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

std::string matrix_to_json(const Mat& m) {
  nlohmann::ordered_json j;
  j["rows"] = m.rows;
  j["cols"] = m.cols;
  nlohmann::ordered_json values = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < m.rows; ++i) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < m.cols; ++c) row.push_back(m.at(i, c));
    values.push_back(std::move(row));
  }
  j["values"] = std::move(values);
  return j.dump(2) + "\n";
}

std::string mask_to_json(const AttentionMask& mask) {
  nlohmann::ordered_json j;
  j["query_count"] = mask.query_count();
  j["key_count"] = mask.key_count();
  nlohmann::ordered_json blocked = nlohmann::ordered_json::array();
  for (const auto& [i, k] : mask.blocked_pairs())
    blocked.push_back(nlohmann::ordered_json::array({i, k}));
  j["blocked"] = std::move(blocked);
  return j.dump(2) + "\n";
}

std::string rope_coords_to_json(const RopeTable& table) {
  nlohmann::ordered_json tokens = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < table.lattice.size(); ++i) {
    const TokenLattice::Coords c = table.lattice.coords(i);
    nlohmann::ordered_json e;
    e["token"] = i;
    e["frame"] = c.t;
    e["row"] = c.y;
    e["col"] = c.x;
    e["coord_t"] = table.coord_t[i];
    e["coord_y"] = table.coord_y[i];
    e["coord_x"] = table.coord_x[i];
    tokens.push_back(std::move(e));
  }
  nlohmann::ordered_json j;
  j["tokens"] = std::move(tokens);
  return j.dump(2) + "\n";
}

std::string rope_coords_to_csv(const RopeTable& table) {
  std::string out = "token,frame,row,col,coord_t,coord_y,coord_x\n";
  for (std::size_t i = 0; i < table.lattice.size(); ++i) {
    const TokenLattice::Coords c = table.lattice.coords(i);
    out += std::to_string(i) + ',' + std::to_string(c.t) + ',' +
           std::to_string(c.y) + ',' + std::to_string(c.x) + ',' +
           std::to_string(table.coord_t[i]) + ',' +
           std::to_string(table.coord_y[i]) + ',' +
           std::to_string(table.coord_x[i]) + '\n';
  }
  return out;
}

}  // namespace trajctl
