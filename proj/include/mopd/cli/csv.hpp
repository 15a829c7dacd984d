// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace mopd::cli {

/// 17 significant digits, so every double round-trips.
std::string format_double(double v);
std::string format_optional(const std::optional<double>& v); // empty cell when absent

/// Header-first CSV file. Cells are written as given; none of ours need quoting.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, std::vector<std::string> header);

    void row(const std::vector<std::string>& cells);
    void flush() { out_.flush(); }

private:
    std::ofstream out_;
    std::size_t columns_;
    std::filesystem::path path_;
};

} // namespace mopd::cli
