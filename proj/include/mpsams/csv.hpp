#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mpsams/errors.hpp"

namespace mpsams {

/// Shortest round-trip decimal rendering, stable across runs.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// CSV with one leading comment line carrying the config hash, then a header
/// row. Cells are written verbatim; callers format numbers themselves.
class CsvWriter {
public:
    CsvWriter(std::vector<std::string> header, std::uint64_t config_hash)
        : header_(std::move(header)), config_hash_(config_hash) {}

    void row(const std::vector<std::string>& cells) {
        if (cells.size() != header_.size())
            throw InvalidInput("csv: row has " + std::to_string(cells.size()) + " cells, header has " +
                               std::to_string(header_.size()));
        rows_.push_back(cells);
    }

    std::string str() const {
        std::ostringstream out;
        char hash[32];
        std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(config_hash_));
        out << "# config_hash=" << hash << "\n";
        write_line(out, header_);
        for (const auto& r : rows_) write_line(out, r);
        return out.str();
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("csv: cannot open " + path + " for writing");
        const std::string s = str();
        out.write(s.data(), static_cast<std::streamsize>(s.size()));
        if (!out) throw IoError("csv: write failed for " + path);
    }

private:
    static void write_line(std::ostringstream& out, const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out << ',';
            out << cells[i];
        }
        out << '\n';
    }

    std::vector<std::string> header_;
    std::uint64_t config_hash_;
    std::vector<std::vector<std::string>> rows_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }
};

/// Reads a CSV written by CsvWriter; '#' comment lines are skipped.
inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("csv: cannot open " + path);
    CsvTable table;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.push_back("");
        if (!have_header) {
            table.header = std::move(cells);
            have_header = true;
        } else {
            table.rows.push_back(std::move(cells));
        }
    }
    if (!have_header) throw DataError("csv: no header row in " + path);
    return table;
}

}  // namespace mpsams
