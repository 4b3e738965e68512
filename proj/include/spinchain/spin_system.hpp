#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

#include "spinchain/constants.hpp"

namespace spinchain {

/// Error raised for invalid spin-system descriptions (bad couplings,
/// malformed equivalence groups, unknown isotopes).
class SpinSystemError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// One nuclear spin site.
struct Spin {
    std::string label;
    Isotope isotope;
    double shift_ppm = 0.0;
};

/// A set of magnetically equivalent spins. In a compact system a group may
/// hold a single placeholder site together with the declared multiplicity
/// (e.g. CH3 -> one site, size 3); expand_equivalence() turns it into
/// `size` individual member spins.
struct EquivalenceGroup {
    std::string label;
    std::vector<int> members;  // indices into SpinSystem::spins()
    int size = 1;              // declared multiplicity
};

/// Immutable description of a J-coupled spin-1/2 network: spins with
/// isotopes and chemical shifts, the symmetric coupling matrix in Hz, and
/// optional equivalence groups.
///
/// Basis convention used throughout: spin 0 is the most significant qubit
/// of the 2^N product basis, and bit value 0 encodes m = +1/2.
class SpinSystem {
  public:
    SpinSystem(std::vector<Spin> spins, Eigen::MatrixXd couplings_hz,
               std::vector<EquivalenceGroup> groups = {});

    int size() const { return static_cast<int>(spins_.size()); }
    std::size_t dim() const { return std::size_t{1} << spins_.size(); }

    const std::vector<Spin>& spins() const { return spins_; }
    const Spin& spin(int index) const { return spins_.at(index); }
    const Eigen::MatrixXd& couplings() const { return couplings_; }
    double coupling(int a, int b) const { return couplings_(a, b); }
    const std::vector<EquivalenceGroup>& groups() const { return groups_; }

    /// True if every equivalence group is fully expanded (one spin per
    /// declared member).
    bool expanded() const;

    /// Indices of all spins of the given isotope symbol.
    std::vector<int> spins_of_isotope(std::string_view symbol) const;

    /// True if any spin carries this isotope.
    bool has_isotope(std::string_view symbol) const;

    /// Partition of all spin indices into detection groups: each declared
    /// equivalence group is one entry, every remaining spin is a singleton.
    /// Order follows spin order of the first member.
    std::vector<EquivalenceGroup> detection_groups() const;

  private:
    std::vector<Spin> spins_;
    Eigen::MatrixXd couplings_;
    std::vector<EquivalenceGroup> groups_;
};

/// Expands equivalence groups into individual spins: a group declared with
/// size k on one site becomes k spins labelled "<site>a", "<site>b", ...;
/// couplings from the group to external spins are replicated to every
/// member and intra-group couplings are set to zero. Already expanded
/// systems are returned unchanged (the map is idempotent).
SpinSystem expand_equivalence(const SpinSystem& system);

}  // namespace spinchain
