#include "tomo/manifest.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "tomo/error.hpp"

namespace tomo {

namespace {

// one-level escaping so argv entries survive the line format
std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '\\' || c == '\n' || c == '\t') {
            out += '\\';
            out += (c == '\n' ? 'n' : (c == '\t' ? 't' : '\\'));
        } else {
            out += c;
        }
    }
    return out;
}

std::string unescape(const std::string& s) {
    std::string out;
    for (size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && i + 1 < s.size()) {
            ++i;
            out += s[i] == 'n' ? '\n' : (s[i] == 't' ? '\t' : s[i]);
        } else {
            out += s[i];
        }
    }
    return out;
}

}  // namespace

void RunManifest::save(const std::string& path) const {
    std::ostringstream out;
    out << "subcommand=" << escape(subcommand) << "\n";
    for (const auto& a : argv) out << "arg=" << escape(a) << "\n";
    for (const auto& [k, v] : fields) out << k << "=" << escape(v) << "\n";
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::trunc);
        if (!os) throw ValidationError("manifest: cannot write " + tmp);
        os << out.str();
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw ValidationError("manifest: cannot rename " + tmp + " to " + path);
}

RunManifest RunManifest::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("manifest: cannot open " + path);
    RunManifest m;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const size_t p = line.find('=');
        if (p == std::string::npos)
            throw ValidationError("manifest: " + path + ": malformed line: " + line);
        const std::string key = line.substr(0, p);
        const std::string val = unescape(line.substr(p + 1));
        if (key == "subcommand")
            m.subcommand = val;
        else if (key == "arg")
            m.argv.push_back(val);
        else
            m.fields[key] = val;
    }
    if (m.subcommand.empty())
        throw ValidationError("manifest: " + path + ": missing subcommand");
    return m;
}

uint64_t fnv1a_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("hash: cannot open " + path);
    uint64_t h = 1469598103934665603ull;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize n = in.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<uint8_t>(buf[i]);
            h *= 1099511628211ull;
        }
        if (!in) break;
    }
    return h;
}

std::string hash_hex(uint64_t h) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "fnv1a:%016llx",
                  static_cast<unsigned long long>(h));
    return buf;
}

std::string manifest_path_for(const std::string& output_path) {
    return output_path + ".manifest";
}

}  // namespace tomo
