#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace audioext {

// 17 significant digits: every double round-trips exactly and reruns with
// the same seed emit identical bytes.
std::string format_float(double value);

// CSV with '#' comment lines carrying the schema version and the effective
// config, so every output file records its provenance.
class CsvWriter {
  public:
    CsvWriter(const std::filesystem::path& path, const nlohmann::ordered_json& effective_config);

    void header(const std::vector<std::string>& columns);
    void row(const std::vector<std::string>& cells);
    void close();

  private:
    std::ofstream out_;
    std::filesystem::path path_;
};

// Run metadata sidecar (JSON). Timing lives here, not in the CSVs, which
// stay byte-deterministic.
void write_run_meta(const std::filesystem::path& path, const nlohmann::ordered_json& meta);

}  // namespace audioext
