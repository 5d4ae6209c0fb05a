#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dtx::csv {

/// Comma-separated text with a header row. Fields are not quoted in any of the
/// files this project reads or writes.
class Table {
public:
    static Table read(const std::filesystem::path& file);
    static Table parse(std::string text, std::string name);

    const std::string& name() const { return name_; }
    const std::vector<std::string>& header() const { return header_; }
    std::size_t rows() const { return rows_.size(); }
    /// 1-based source line of data row `row`.
    std::size_t line(std::size_t row) const { return lines_[row]; }
    std::string_view field(std::size_t row, std::size_t col) const { return rows_[row][col]; }
    std::optional<std::size_t> column(std::string_view name) const;

private:
    std::string name_;
    std::string text_;
    std::vector<std::string> header_;
    std::vector<std::vector<std::string_view>> rows_;
    std::vector<std::size_t> lines_;
};

std::vector<std::string_view> split(std::string_view line, char sep);

}  // namespace dtx::csv
