#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace hetexp {

/// Minimal CSV emitter. Doubles print with 17 significant digits so dumps
/// round-trip exactly and repeated runs produce byte-identical bodies.
class CsvWriter {
public:
    CsvWriter(std::ostream& out, const std::vector<std::string>& columns) : out_(out), width_(columns.size()) {
        for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
        out_ << '\n';
    }

    CsvWriter& operator<<(double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return cell(buf);
    }
    CsvWriter& operator<<(long long v) { return cell(std::to_string(v)); }
    CsvWriter& operator<<(unsigned long long v) { return cell(std::to_string(v)); }
    CsvWriter& operator<<(int v) { return cell(std::to_string(v)); }
    CsvWriter& operator<<(std::size_t v) { return cell(std::to_string(v)); }
    CsvWriter& operator<<(const std::string& v) { return cell(v); }

private:
    CsvWriter& cell(const std::string& text) {
        out_ << (column_ ? "," : "") << text;
        if (++column_ == width_) {
            out_ << '\n';
            column_ = 0;
        }
        return *this;
    }

    std::ostream& out_;
    std::size_t width_;
    std::size_t column_ = 0;
};

}  // namespace hetexp
