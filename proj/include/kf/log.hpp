#pragma once

#include <cstdlib>
#include <iostream>
#include <string>

namespace kf {

/// Verbosity from the KF_LOG environment variable: 0/unset quiet,
/// 1 or "info" informational, 2 or "debug" chatty.
inline int log_level() {
    static int level = [] {
        const char* v = std::getenv("KF_LOG");
        if (!v) return 0;
        std::string s(v);
        if (s == "debug" || s == "2") return 2;
        if (s == "info" || s == "1") return 1;
        return 0;
    }();
    return level;
}

inline void log_info(const std::string& msg) {
    if (log_level() >= 1) std::cerr << "[kf] " << msg << "\n";
}

inline void log_debug(const std::string& msg) {
    if (log_level() >= 2) std::cerr << "[kf:debug] " << msg << "\n";
}

}  // namespace kf
