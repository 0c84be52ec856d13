#include "audioext/io.hpp"

#include <cstdio>
#include <stdexcept>

namespace audioext {

std::string format_float(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return std::string(buf);
}

CsvWriter::CsvWriter(const std::filesystem::path& path,
                     const nlohmann::ordered_json& effective_config)
    : out_(path), path_(path) {
    if (!out_) {
        throw std::runtime_error("CsvWriter: cannot open " + path.string());
    }
    out_ << "# schema_version=1\n";
    out_ << "# config=" << effective_config.dump() << "\n";
}

void CsvWriter::header(const std::vector<std::string>& columns) {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        out_ << (i ? "," : "") << columns[i];
    }
    out_ << "\n";
}

void CsvWriter::row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
        out_ << (i ? "," : "") << cells[i];
    }
    out_ << "\n";
}

void CsvWriter::close() {
    out_.close();
    if (out_.fail()) {
        throw std::runtime_error("CsvWriter: write failed for " + path_.string());
    }
}

void write_run_meta(const std::filesystem::path& path, const nlohmann::ordered_json& meta) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("write_run_meta: cannot open " + path.string());
    }
    out << meta.dump(2) << "\n";
}

}  // namespace audioext
