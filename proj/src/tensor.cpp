#include "polarbev/tensor.hpp"

namespace polarbev::tc {

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    out += "]";
    return out;
}

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto e : s) {
        if (e <= 0) throw DimensionError("non-positive extent in shape " + shape_str(s));
        n *= e;
    }
    return n;
}

} // namespace polarbev::tc
