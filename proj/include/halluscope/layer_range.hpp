#pragma once

#include <stdexcept>
#include <string>

namespace halluscope {

/// Inclusive layer range [first, last].
struct LayerRange {
    int first = 0;
    int last = 0;

    int count() const { return last - first + 1; }

    bool contains(int layer) const { return layer >= first && layer <= last; }

    void validate(int num_layers) const {
        if (first < 0 || last < first || last >= num_layers)
            throw std::invalid_argument("layer range [" + std::to_string(first) + "," +
                                        std::to_string(last) + "] invalid for L=" +
                                        std::to_string(num_layers));
    }

    /// Parses "ls:le".
    static LayerRange parse(const std::string& s) {
        const auto pos = s.find(':');
        if (pos == std::string::npos) throw std::invalid_argument("layer range must be ls:le, got '" + s + "'");
        LayerRange r;
        r.first = std::stoi(s.substr(0, pos));
        r.last = std::stoi(s.substr(pos + 1));
        if (r.first < 0 || r.last < r.first) throw std::invalid_argument("layer range must satisfy 0 <= ls <= le");
        return r;
    }

    std::string str() const { return std::to_string(first) + ":" + std::to_string(last); }
};

inline bool operator==(const LayerRange& a, const LayerRange& b) {
    return a.first == b.first && a.last == b.last;
}

}  // namespace halluscope
