#include "spinchain/spin_system.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace spinchain {

namespace {

void validate_groups(const std::vector<Spin>& spins, const std::vector<EquivalenceGroup>& groups) {
    std::set<int> seen;
    for (const auto& g : groups) {
        if (g.size < 1)
            throw SpinSystemError("equivalence group '" + g.label + "' has size " +
                                  std::to_string(g.size) + " (must be >= 1)");
        if (g.members.empty())
            throw SpinSystemError("equivalence group '" + g.label + "' has no members");
        for (int m : g.members) {
            if (m < 0 || m >= static_cast<int>(spins.size()))
                throw SpinSystemError("equivalence group '" + g.label + "' references spin index " +
                                      std::to_string(m) + " out of range");
            if (!seen.insert(m).second)
                throw SpinSystemError("spin index " + std::to_string(m) +
                                      " appears in more than one equivalence group");
        }
        const Spin& first = spins[g.members.front()];
        for (int m : g.members) {
            if (spins[m].isotope.symbol != first.isotope.symbol)
                throw SpinSystemError("equivalence group '" + g.label +
                                      "' mixes isotopes " + first.isotope.symbol + " and " +
                                      spins[m].isotope.symbol);
            if (spins[m].shift_ppm != first.shift_ppm)
                throw SpinSystemError("equivalence group '" + g.label +
                                      "' mixes chemical shifts");
        }
        if (static_cast<int>(g.members.size()) > 1 &&
            static_cast<int>(g.members.size()) != g.size)
            throw SpinSystemError("equivalence group '" + g.label + "' declares size " +
                                  std::to_string(g.size) + " but lists " +
                                  std::to_string(g.members.size()) + " members");
    }
}

}  // namespace

SpinSystem::SpinSystem(std::vector<Spin> spins, Eigen::MatrixXd couplings_hz,
                       std::vector<EquivalenceGroup> groups)
    : spins_(std::move(spins)), couplings_(std::move(couplings_hz)), groups_(std::move(groups)) {
    const int n = static_cast<int>(spins_.size());
    if (n == 0) throw SpinSystemError("spin system needs at least one spin");
    if (n > 20) throw SpinSystemError("spin system too large for dense product basis");
    if (couplings_.rows() != n || couplings_.cols() != n)
        throw SpinSystemError("coupling matrix shape does not match spin count");
    for (const auto& s : spins_) {
        if (s.isotope.spin != 0.5)
            throw SpinSystemError("spin '" + s.label + "': only spin-1/2 isotopes are supported");
        if (!std::isfinite(s.isotope.gamma_mhz_per_t) || s.isotope.gamma_mhz_per_t == 0.0)
            throw SpinSystemError("spin '" + s.label + "': gyromagnetic ratio must be finite and nonzero");
    }
    for (int a = 0; a < n; ++a) {
        if (couplings_(a, a) != 0.0)
            throw SpinSystemError("coupling matrix must have zero diagonal (spin '" +
                                  spins_[a].label + "')");
        for (int b = 0; b < a; ++b)
            if (couplings_(a, b) != couplings_(b, a))
                throw SpinSystemError("coupling matrix not symmetric between '" + spins_[b].label +
                                      "' and '" + spins_[a].label + "'");
    }
    validate_groups(spins_, groups_);
}

bool SpinSystem::expanded() const {
    return std::all_of(groups_.begin(), groups_.end(), [](const EquivalenceGroup& g) {
        return static_cast<int>(g.members.size()) == g.size;
    });
}

std::vector<int> SpinSystem::spins_of_isotope(std::string_view symbol) const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i)
        if (spins_[i].isotope.symbol == symbol) out.push_back(i);
    return out;
}

bool SpinSystem::has_isotope(std::string_view symbol) const {
    return !spins_of_isotope(symbol).empty();
}

std::vector<EquivalenceGroup> SpinSystem::detection_groups() const {
    std::vector<EquivalenceGroup> out;
    std::vector<bool> grouped(spins_.size(), false);
    for (const auto& g : groups_)
        for (int m : g.members) grouped[m] = true;
    std::vector<const EquivalenceGroup*> declared(spins_.size(), nullptr);
    for (const auto& g : groups_) declared[g.members.front()] = &g;
    for (int i = 0; i < size(); ++i) {
        if (declared[i]) {
            out.push_back(*declared[i]);
        } else if (!grouped[i]) {
            out.push_back(EquivalenceGroup{spins_[i].label, {i}, 1});
        }
    }
    return out;
}

SpinSystem expand_equivalence(const SpinSystem& system) {
    if (system.expanded()) return system;

    const int n = system.size();
    // Per-site multiplicity; sites not in any pending group keep count 1.
    std::vector<int> count(n, 1);
    std::vector<const EquivalenceGroup*> site_group(n, nullptr);
    for (const auto& g : system.groups()) {
        if (static_cast<int>(g.members.size()) == g.size) continue;  // already expanded
        count[g.members.front()] = g.size;
        site_group[g.members.front()] = &g;
    }

    std::vector<Spin> spins;
    std::vector<int> site_of;  // expanded index -> compact site
    std::vector<std::vector<int>> members_of(n);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < count[i]; ++k) {
            Spin s = system.spin(i);
            if (count[i] > 1) s.label += static_cast<char>('a' + k);
            members_of[i].push_back(static_cast<int>(spins.size()));
            site_of.push_back(i);
            spins.push_back(std::move(s));
        }
    }

    const int m = static_cast<int>(spins.size());
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(m, m);
    for (int p = 0; p < m; ++p)
        for (int q = 0; q < p; ++q) {
            const int a = site_of[p], b = site_of[q];
            // Members of one group stay uncoupled; equivalent-spin
            // intra-group couplings do not affect observables.
            const double val = (a == b) ? 0.0 : system.coupling(a, b);
            j(p, q) = j(q, p) = val;
        }

    std::vector<EquivalenceGroup> groups;
    for (const auto& g : system.groups()) {
        EquivalenceGroup eg = g;
        eg.members.clear();
        for (int site : g.members)
            for (int idx : members_of[site]) eg.members.push_back(idx);
        groups.push_back(std::move(eg));
    }
    return SpinSystem(std::move(spins), std::move(j), std::move(groups));
}

}  // namespace spinchain
