#pragma once

// CSV artifacts: comma-separated, header row, UTF-8, LF endings, numerics
// with 17 significant digits.

#include <cstdio>
#include <string>
#include <variant>
#include <vector>

namespace renlab {

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {
        for (std::size_t i = 0; i < header_.size(); ++i) {
            if (i) body_ += ",";
            body_ += header_[i];
        }
        body_ += "\n";
        cols_ = header_.size();
    }

    CsvWriter& cell(double v) {
        char buf[40];
        snprintf(buf, sizeof buf, "%.17g", v);
        return cell_raw(buf);
    }
    CsvWriter& cell(long v) { return cell_raw(std::to_string(v)); }
    CsvWriter& cell(int v) { return cell_raw(std::to_string(v)); }
    CsvWriter& cell(const std::string& v) { return cell_raw(v); }

    void endrow() {
        body_ += "\n";
        in_row_ = 0;
    }

    const std::string& body() const { return body_; }

private:
    CsvWriter& cell_raw(const std::string& s) {
        if (in_row_) body_ += ",";
        body_ += s;
        ++in_row_;
        return *this;
    }

    std::vector<std::string> header_;
    std::string body_;
    std::size_t cols_ = 0;
    std::size_t in_row_ = 0;
};

} // namespace renlab
