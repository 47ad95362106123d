#include "csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "atlas/error.hpp"

namespace atlas::csv {

std::string_view trim(std::string_view s) noexcept {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string> split_line(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        const auto field = line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                             : comma - start);
        out.emplace_back(trim(field));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

std::size_t Table::column(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i] == name) return i;
    }
    throw ValidationError("CSV is missing required column '" + std::string(name) + "'");
}

bool Table::has_column(std::string_view name) const noexcept {
    for (const auto& c : columns) {
        if (c == name) return true;
    }
    return false;
}

Table parse(std::istream& in, const std::string& source) {
    Table t;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
            static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF) {
            line.erase(0, 3);
        }
        const auto trimmed = trim(line);
        if (trimmed.empty()) continue;
        if (trimmed.front() == '#') {
            t.comments.emplace_back(trim(trimmed.substr(1)));
            continue;
        }
        auto fields = split_line(trimmed);
        if (!have_header) {
            t.columns = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != t.columns.size()) {
            std::ostringstream msg;
            msg << source << ":" << line_no << ": expected " << t.columns.size() << " fields, got "
                << fields.size();
            throw ValidationError(msg.str());
        }
        t.rows.push_back(std::move(fields));
        t.line_numbers.push_back(line_no);
    }
    if (!have_header) throw ValidationError(source + ": missing CSV header row");
    return t;
}

Table read_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    return parse(in, path.string());
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw RuntimeFailure("cannot open " + tmp.string() + " for writing");
        out << contents;
        if (!out) throw RuntimeFailure("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

double parse_double(std::string_view s, const std::string& context) {
    s = trim(s);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ValidationError(context + ": not a number: '" + std::string(s) + "'");
    }
    return v;
}

long long parse_int(std::string_view s, const std::string& context) {
    s = trim(s);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ValidationError(context + ": not an integer: '" + std::string(s) + "'");
    }
    return v;
}

bool parse_bool(std::string_view s, const std::string& context) {
    s = trim(s);
    if (s == "1" || s == "true" || s == "TRUE" || s == "True" || s == "yes") return true;
    if (s == "0" || s == "false" || s == "FALSE" || s == "False" || s == "no" || s.empty()) return false;
    throw ValidationError(context + ": not a boolean: '" + std::string(s) + "'");
}

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace atlas::csv
