// SPDX-License-Identifier: Apache-2.0
#include "mopd/cli/csv.hpp"

#include <array>
#include <charconv>
#include <stdexcept>

namespace mopd::cli {

std::string format_double(double v)
{
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::general, 17);
    if (ec != std::errc{}) {
        throw std::runtime_error("format_double failed");
    }
    return std::string(buf.data(), end);
}

std::string format_optional(const std::optional<double>& v)
{
    return v ? format_double(*v) : std::string();
}

CsvWriter::CsvWriter(const std::filesystem::path& path, std::vector<std::string> header)
    : columns_(header.size()), path_(path)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) {
        throw std::runtime_error("cannot open " + path.string());
    }
    row(header);
}

void CsvWriter::row(const std::vector<std::string>& cells)
{
    if (cells.size() != columns_) {
        throw std::logic_error(path_.string() + ": row has " + std::to_string(cells.size()) +
                               " cells, header has " + std::to_string(columns_));
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) {
            out_ << ',';
        }
        out_ << cells[i];
    }
    out_ << '\n';
    if (!out_) {
        throw std::runtime_error("write failed: " + path_.string());
    }
}

} // namespace mopd::cli
