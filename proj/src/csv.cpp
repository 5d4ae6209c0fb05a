#include "csv.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dtx/errors.hpp"

namespace dtx::csv {

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

Table Table::read(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str(), file.string());
}

Table Table::parse(std::string text, std::string name) {
    Table table;
    table.name_ = std::move(name);
    table.text_ = std::move(text);
    std::string_view all = table.text_;
    if (all.starts_with("\xEF\xBB\xBF")) all.remove_prefix(3);

    std::size_t line_no = 0;
    bool have_header = false;
    while (!all.empty()) {
        const std::size_t end = all.find('\n');
        std::string_view line = all.substr(0, end);
        all = end == std::string_view::npos ? std::string_view{} : all.substr(end + 1);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        auto fields = split(line, ',');
        if (!have_header) {
            for (auto f : fields) table.header_.emplace_back(f);
            have_header = true;
            continue;
        }
        if (fields.size() != table.header_.size()) {
            throw ParseError(table.name_, line_no, "",
                             "expected " + std::to_string(table.header_.size()) + " fields, found " +
                                 std::to_string(fields.size()));
        }
        table.rows_.push_back(std::move(fields));
        table.lines_.push_back(line_no);
    }
    if (!have_header) throw ParseError(table.name_, 1, "", "missing header row");
    return table;
}

std::optional<std::size_t> Table::column(std::string_view name) const {
    for (std::size_t i = 0; i < header_.size(); ++i) {
        if (header_[i] == name) return i;
    }
    return std::nullopt;
}

}  // namespace dtx::csv
