#pragma once

#include <cstdio>
#include <string>
#include <vector>

namespace gradcert {

// Doubles are written with 17 significant digits everywhere (%.17g), which
// round-trips IEEE doubles exactly, so text artifacts are lossless and
// checksummable.
inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string join17(const std::vector<double>& vs, const char* sep = " ") {
    std::string out;
    for (std::size_t i = 0; i < vs.size(); ++i) {
        if (i) out += sep;
        out += fmt17(vs[i]);
    }
    return out;
}

}  // namespace gradcert
