#include "spinchain/constants.hpp"

namespace spinchain {

const std::vector<Isotope>& builtin_isotopes() {
    static const std::vector<Isotope> table = {
        {"1H", 42.577, 0.5},
        {"13C", 10.708, 0.5},
        {"15N", -4.316, 0.5},
        {"19F", 40.078, 0.5},
        {"31P", 17.235, 0.5},
        {"29Si", -8.465, 0.5},
    };
    return table;
}

std::optional<Isotope> find_isotope(std::string_view symbol) {
    for (const auto& iso : builtin_isotopes())
        if (iso.symbol == symbol) return iso;
    return std::nullopt;
}

}  // namespace spinchain
