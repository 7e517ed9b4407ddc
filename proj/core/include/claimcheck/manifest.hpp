#pragma once

#include <map>
#include <string>
#include <vector>

namespace claimcheck {

// Reproducibility record written next to every command's primary output.
// Input digests are captured before execution; the manifest is written even
// when the run fails partway.
struct RunManifest {
    std::string command;
    std::map<std::string, std::string> config;       // flag -> value snapshot
    std::map<std::string, std::string> input_digests;  // path -> sha256
    std::string version;
    std::string created_at;  // ISO timestamp; excluded from byte comparisons
    std::map<std::string, std::int64_t> timings_ms;
    std::vector<std::string> traces;
    std::string error;  // non-empty on partial failure

    void add_input(const std::string& path);  // digests the file now
    void write(const std::string& path) const;
};

std::string sha256_file(const std::string& path);
std::string sha256_hex(const std::string& bytes);

}  // namespace claimcheck
