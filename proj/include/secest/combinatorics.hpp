// Index-set helpers: sensor subsets are sorted vectors of 0-based indices.
#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

namespace secest {

using Subset = std::vector<int>;

inline std::uint64_t binomial(int n, int k) {
    if (k < 0 || k > n) return 0;
    k = std::min(k, n - k);
    std::uint64_t r = 1;
    for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
    return r;
}

/// All size-k subsets of {0..n-1} in lexicographic order.
inline std::vector<Subset> combinations(int n, int k) {
    std::vector<Subset> out;
    if (k < 0 || k > n) return out;
    out.reserve(binomial(n, k));
    Subset s(k);
    std::iota(s.begin(), s.end(), 0);
    while (true) {
        out.push_back(s);
        int i = k - 1;
        while (i >= 0 && s[i] == n - k + i) --i;
        if (i < 0) break;
        ++s[i];
        for (int j = i + 1; j < k; ++j) s[j] = s[j - 1] + 1;
    }
    return out;
}

/// {0..n-1} minus `s` (s sorted).
inline Subset complement(const Subset& s, int n) {
    Subset out;
    out.reserve(n - static_cast<int>(s.size()));
    auto it = s.begin();
    for (int i = 0; i < n; ++i) {
        if (it != s.end() && *it == i) {
            ++it;
        } else {
            out.push_back(i);
        }
    }
    return out;
}

inline std::string to_string(const Subset& s) {
    std::string out = "{";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "}";
}

}  // namespace secest
