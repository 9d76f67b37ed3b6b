#include "hsitl/convert.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <vector>

#include "hsitl/cube.hpp"
#include "hsitl/errors.hpp"

namespace hsitl {
namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r' && ch != ' ' && ch != '\t') {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

bool parse_u32(const std::string& s, uint32_t& out) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_double(const std::string& s, double& out) {
    try {
        size_t used = 0;
        out = std::stod(s, &used);
        return used == s.size();
    } catch (...) {
        return false;
    }
}

struct CsvRows {
    std::vector<std::vector<uint32_t>> ints;  // leading integer columns
    std::vector<double> values;               // last column when wanted
};

CsvRows read_rows(const std::string& path, size_t int_cols, bool has_value) {
    std::ifstream in(path);
    if (!in) throw DataError("convert: cannot open " + path);
    CsvRows rows;
    std::string line;
    size_t lineno = 0;
    bool first = true;
    size_t expect = int_cols + (has_value ? 1 : 0);
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto fields = split_fields(line);
        if (first) {
            first = false;
            uint32_t probe;
            if (!fields.empty() && !parse_u32(fields[0], probe)) continue;  // header line
        }
        if (fields.size() != expect)
            throw DataError("convert: expected " + std::to_string(expect) + " columns at " +
                            path + ":" + std::to_string(lineno));
        std::vector<uint32_t> ints(int_cols);
        for (size_t i = 0; i < int_cols; ++i)
            if (!parse_u32(fields[i], ints[i]))
                throw DataError("convert: bad integer '" + fields[i] + "' at " + path + ":" +
                                std::to_string(lineno));
        if (has_value) {
            double v;
            if (!parse_double(fields[int_cols], v) || !std::isfinite(v))
                throw DataError("convert: bad value '" + fields[int_cols] + "' at " + path +
                                ":" + std::to_string(lineno));
            rows.values.push_back(v);
        }
        rows.ints.push_back(std::move(ints));
    }
    if (rows.ints.empty()) throw DataError("convert: no data rows in " + path);
    return rows;
}

}  // namespace

void convert_cube_csv(const std::string& csv_path, const std::string& out_path, uint32_t height,
                      uint32_t width, uint32_t bands) {
    CsvRows rows = read_rows(csv_path, 3, true);
    uint32_t max_y = 0, max_x = 0, max_b = 0;
    for (const auto& r : rows.ints) {
        max_y = std::max(max_y, r[0]);
        max_x = std::max(max_x, r[1]);
        max_b = std::max(max_b, r[2]);
    }
    SpectralCube cube;
    cube.height = height ? height : max_y + 1;
    cube.width = width ? width : max_x + 1;
    cube.bands = bands ? bands : max_b + 1;
    cube.data.assign(cube.value_count(), 0.0f);
    std::vector<uint8_t> seen(cube.value_count(), 0);
    for (size_t i = 0; i < rows.ints.size(); ++i) {
        uint32_t y = rows.ints[i][0], x = rows.ints[i][1], b = rows.ints[i][2];
        if (y >= cube.height || x >= cube.width || b >= cube.bands)
            throw DataError("convert: cell (" + std::to_string(y) + "," + std::to_string(x) +
                            "," + std::to_string(b) + ") outside declared dimensions");
        size_t at = (size_t(y) * cube.width + x) * cube.bands + b;
        if (seen[at])
            throw DataError("convert: duplicate cell (" + std::to_string(y) + "," +
                            std::to_string(x) + "," + std::to_string(b) + ")");
        seen[at] = 1;
        cube.data[at] = float(rows.values[i]);
    }
    for (size_t i = 0; i < seen.size(); ++i)
        if (!seen[i]) throw DataError("convert: cube has unspecified cells");
    save_cube(cube, out_path);
}

void convert_labels_csv(const std::string& csv_path, const std::string& out_path, uint32_t height,
                        uint32_t width) {
    CsvRows rows = read_rows(csv_path, 3, false);
    uint32_t max_y = 0, max_x = 0;
    for (const auto& r : rows.ints) {
        max_y = std::max(max_y, r[0]);
        max_x = std::max(max_x, r[1]);
        if (r[2] > 0xFFFF) throw DataError("convert: label exceeds 16 bits");
    }
    LabelMap map;
    map.height = height ? height : max_y + 1;
    map.width = width ? width : max_x + 1;
    map.labels.assign(size_t(map.height) * map.width, 0);
    std::vector<uint8_t> seen(map.labels.size(), 0);
    for (const auto& r : rows.ints) {
        if (r[0] >= map.height || r[1] >= map.width)
            throw DataError("convert: pixel (" + std::to_string(r[0]) + "," +
                            std::to_string(r[1]) + ") outside declared dimensions");
        size_t at = size_t(r[0]) * map.width + r[1];
        if (seen[at]) throw DataError("convert: duplicate pixel in label CSV");
        seen[at] = 1;
        map.labels[at] = uint16_t(r[2]);
    }
    map.validate();
    save_labels(map, out_path);
}

}  // namespace hsitl
