#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "stork/coefficients.hpp"

namespace stork {

inline constexpr char kVersion[] = "0.1.0";

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Shortest round-trip decimal form; independent of the C locale.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// Provenance attached to every output: version, config hash, table checksum.
struct OutputMeta {
  nlohmann::json config;

  std::string config_hash() const { return hex64(fnv1a(config.dump())); }
  std::string table() const { return std::string(rock4_table_version()) + " " + hex64(rock4_table_checksum()); }

  nlohmann::json to_json() const {
    return {{"version", kVersion}, {"config_hash", config_hash()}, {"coefficient_table", table()}, {"config", config}};
  }
};

/// A table with a mandatory header row. Cells are pre-formatted strings.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }
};

namespace detail {

inline std::string csv_escape(const std::string& cell) {
  if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace detail

/// '#'-prefixed provenance lines, then the header row, then data rows.
inline std::string to_csv(const Table& t, const OutputMeta& meta) {
  std::ostringstream out;
  out << "# stork " << kVersion << "\n";
  out << "# config_hash " << meta.config_hash() << "\n";
  out << "# coefficient_table " << meta.table() << "\n";
  out << "# config " << meta.config.dump() << "\n";
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << detail::csv_escape(cells[i]);
    out << "\n";
  };
  line(t.columns);
  for (const auto& r : t.rows) line(r);
  return out.str();
}

/// {"meta": ..., "result": ...} with sorted keys.
inline std::string to_json_document(const nlohmann::json& result, const OutputMeta& meta) {
  nlohmann::json doc = {{"meta", meta.to_json()}, {"result", result}};
  return doc.dump(2) + "\n";
}

/// Writes via a temporary sibling and rename, so readers never see a partial file.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path() && !std::filesystem::exists(path.parent_path()))
    std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    f << content;
    f.flush();
    if (!f) {
      f.close();
      std::filesystem::remove(tmp);
      throw std::runtime_error("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw std::runtime_error("cannot move output into place at " + path.string() + ": " + ec.message());
  }
}

}  // namespace stork
