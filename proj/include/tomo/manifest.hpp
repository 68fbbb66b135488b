#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace tomo {

// Plain-text key=value record written atomically beside every CLI output.
// Holds the full normalized argv, so `tomoprior rerun <manifest>` replays
// the command; with --threads 1 the replay is bit-identical.
struct RunManifest {
    std::string subcommand;
    std::vector<std::string> argv;  // full command line, excluding argv[0]
    std::map<std::string, std::string> fields;  // seeds, paths, hashes, version

    void save(const std::string& path) const;
    static RunManifest load(const std::string& path);
};

// FNV-1a over the file bytes; used to pin checkpoint identity in manifests.
uint64_t fnv1a_file(const std::string& path);
std::string hash_hex(uint64_t h);

std::string manifest_path_for(const std::string& output_path);

}  // namespace tomo
