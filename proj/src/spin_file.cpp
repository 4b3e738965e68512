#include "spinchain/spin_file.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace spinchain {

namespace {

struct Line {
    int number;
    std::string text;
};

std::vector<std::string> split_tokens(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> tokens;
    std::string token;
    while (in >> token) tokens.push_back(token);
    return tokens;
}

[[noreturn]] void fail(const std::string& origin, int line, const std::string& what) {
    throw ParseError(origin + ":" + std::to_string(line) + ": " + what);
}

double parse_number(const std::string& origin, int line, const std::string& token,
                    const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(token, &used);
        if (used != token.size()) throw std::invalid_argument(token);
        return v;
    } catch (const std::exception&) {
        fail(origin, line, "expected a number for " + what + ", got '" + token + "'");
    }
}

}  // namespace

SpinFile parse_spin_text(const std::string& text, const std::string& origin) {
    std::map<std::string, std::vector<Line>> sections;
    std::vector<std::string> section_order;
    {
        std::istringstream in(text);
        std::string raw;
        int number = 0;
        std::string current;
        while (std::getline(in, raw)) {
            ++number;
            const auto hash = raw.find('#');
            std::string line = hash == std::string::npos ? raw : raw.substr(0, hash);
            const auto begin = line.find_first_not_of(" \t\r");
            if (begin == std::string::npos) continue;
            const auto end = line.find_last_not_of(" \t\r");
            line = line.substr(begin, end - begin + 1);
            if (line.front() == '[') {
                if (line.back() != ']') fail(origin, number, "malformed section header");
                current = line.substr(1, line.size() - 2);
                if (!sections.count(current)) section_order.push_back(current);
                sections[current];  // create
                continue;
            }
            if (current.empty()) fail(origin, number, "content before any [section]");
            sections[current].push_back({number, line});
        }
    }
    for (const auto& name : section_order)
        if (name != "system" && name != "isotopes" && name != "spins" && name != "couplings" &&
            name != "protocol" && name != "fit")
            throw ParseError(origin + ": unknown section [" + name + "]");
    if (!sections.count("spins"))
        throw ParseError(origin + ": missing required section [spins]");

    std::string name;
    if (sections.count("system")) {
        for (const auto& line : sections["system"]) {
            const auto eq = line.text.find('=');
            if (eq == std::string::npos) fail(origin, line.number, "expected key = value");
            std::string key = line.text.substr(0, eq);
            std::string value = line.text.substr(eq + 1);
            key.erase(key.find_last_not_of(" \t") + 1);
            value.erase(0, value.find_first_not_of(" \t"));
            if (key == "name") name = value;
        }
    }

    std::map<std::string, Isotope> isotopes;
    for (const auto& iso : builtin_isotopes()) isotopes[iso.symbol] = iso;
    if (sections.count("isotopes")) {
        for (const auto& line : sections["isotopes"]) {
            const auto tokens = split_tokens(line.text);
            if (tokens.size() != 2)
                fail(origin, line.number, "expected: symbol gamma_mhz_per_t");
            Isotope iso;
            iso.symbol = tokens[0];
            iso.gamma_mhz_per_t =
                parse_number(origin, line.number, tokens[1], "gyromagnetic ratio");
            if (iso.gamma_mhz_per_t == 0.0 || !std::isfinite(iso.gamma_mhz_per_t))
                fail(origin, line.number, "gyromagnetic ratio must be finite and nonzero");
            isotopes[iso.symbol] = iso;
        }
    }

    std::vector<Spin> spins;
    std::vector<EquivalenceGroup> groups;
    std::map<std::string, int> site_of_label;
    for (const auto& line : sections["spins"]) {
        const auto tokens = split_tokens(line.text);
        if (tokens.size() != 3 && tokens.size() != 4)
            fail(origin, line.number, "expected: label isotope shift_ppm [count]");
        Spin spin;
        spin.label = tokens[0];
        if (site_of_label.count(spin.label))
            fail(origin, line.number, "duplicate spin label '" + spin.label + "'");
        const auto iso = isotopes.find(tokens[1]);
        if (iso == isotopes.end())
            fail(origin, line.number, "unknown isotope symbol '" + tokens[1] + "'");
        spin.isotope = iso->second;
        spin.shift_ppm = parse_number(origin, line.number, tokens[2], "chemical shift");
        int count = 1;
        if (tokens.size() == 4) {
            count = static_cast<int>(parse_number(origin, line.number, tokens[3], "count"));
            if (count < 1) fail(origin, line.number, "count must be >= 1");
        }
        const int site = static_cast<int>(spins.size());
        site_of_label[spin.label] = site;
        if (count > 1) groups.push_back({spin.label, {site}, count});
        spins.push_back(std::move(spin));
    }

    Eigen::MatrixXd couplings = Eigen::MatrixXd::Zero(spins.size(), spins.size());
    // Remember where each pair was set so conflicts can cite both lines.
    std::map<std::pair<int, int>, int> set_at_line;
    if (sections.count("couplings")) {
        for (const auto& line : sections["couplings"]) {
            const auto tokens = split_tokens(line.text);
            if (tokens.size() != 3)
                fail(origin, line.number, "expected: site_a site_b J_hz");
            const auto a = site_of_label.find(tokens[0]);
            const auto b = site_of_label.find(tokens[1]);
            if (a == site_of_label.end())
                fail(origin, line.number, "unknown spin label '" + tokens[0] + "'");
            if (b == site_of_label.end())
                fail(origin, line.number, "unknown spin label '" + tokens[1] + "'");
            if (a->second == b->second)
                fail(origin, line.number, "a spin cannot couple to itself");
            const double j = parse_number(origin, line.number, tokens[2], "J coupling");
            const auto key = std::minmax(a->second, b->second);
            const auto prev = set_at_line.find(key);
            if (prev != set_at_line.end()) {
                if (couplings(key.first, key.second) != j)
                    fail(origin, line.number,
                         "conflicting coupling for " + tokens[0] + "-" + tokens[1] +
                             ": also set at line " + std::to_string(prev->second) +
                             " with a different value");
            } else {
                set_at_line.emplace(key, line.number);
            }
            couplings(key.first, key.second) = couplings(key.second, key.first) = j;
        }
    }

    SpinFile file{SpinSystem(std::move(spins), std::move(couplings), std::move(groups)),
                  std::nullopt,
                  {},
                  name};

    if (sections.count("protocol")) {
        ProtocolSchedule schedule;
        bool have_prepolarize = false;
        for (const auto& line : sections["protocol"]) {
            const auto tokens = split_tokens(line.text);
            if (tokens.empty()) continue;
            const std::string& verb = tokens[0];
            if (verb == "prepolarize") {
                if (tokens.size() != 2) fail(origin, line.number, "expected: prepolarize field");
                schedule.prepolarize_field_tesla =
                    parse_number(origin, line.number, tokens[1], "field");
                have_prepolarize = true;
            } else if (verb == "ramp") {
                if (tokens.size() != 3)
                    fail(origin, line.number, "expected: ramp from_field to_field");
                schedule.segments.push_back(AdiabaticRampSegment{
                    parse_number(origin, line.number, tokens[1], "field"),
                    parse_number(origin, line.number, tokens[2], "field")});
            } else if (verb == "sudden") {
                if (tokens.size() != 2) fail(origin, line.number, "expected: sudden to_field");
                schedule.segments.push_back(SuddenSwitchSegment{
                    parse_number(origin, line.number, tokens[1], "field")});
            } else if (verb == "evolve") {
                if (tokens.size() != 3)
                    fail(origin, line.number, "expected: evolve field duration|var");
                FreeEvolutionSegment seg;
                seg.field_tesla = parse_number(origin, line.number, tokens[1], "field");
                if (tokens[2] == "var") {
                    seg.variable = true;
                } else {
                    seg.duration_s = parse_number(origin, line.number, tokens[2], "duration");
                }
                schedule.segments.push_back(seg);
            } else if (verb == "detect") {
                DetectSegment seg;
                seg.targets.assign(tokens.begin() + 1, tokens.end());
                schedule.segments.push_back(seg);
            } else {
                fail(origin, line.number, "unknown protocol verb '" + verb + "'");
            }
        }
        if (!have_prepolarize)
            throw ParseError(origin + ": [protocol] requires a prepolarize line");
        schedule.validate();
        file.protocol = std::move(schedule);
    }

    if (sections.count("fit")) {
        for (const auto& line : sections["fit"]) {
            const auto eq = line.text.find('=');
            if (eq == std::string::npos) fail(origin, line.number, "expected key = value");
            std::string key = line.text.substr(0, eq);
            std::string value = line.text.substr(eq + 1);
            key.erase(key.find_last_not_of(" \t") + 1);
            value.erase(0, value.find_first_not_of(" \t"));
            value.erase(value.find_last_not_of(" \t") + 1);
            if (key == "field") {
                file.fit.field_tesla = parse_number(origin, line.number, value, "field");
            } else if (key == "linewidth") {
                file.fit.linewidth_hz = parse_number(origin, line.number, value, "linewidth");
            } else if (key == "max_iterations") {
                file.fit.max_iterations =
                    static_cast<int>(parse_number(origin, line.number, value, "max_iterations"));
            } else if (key == "secular_factor") {
                file.fit.secular_factor =
                    parse_number(origin, line.number, value, "secular_factor");
            } else if (key == "free") {
                file.fit.free_couplings = value.find("couplings") != std::string::npos;
                file.fit.free_shifts = value.find("shifts") != std::string::npos;
                file.fit.free_linewidth = value.find("linewidth") != std::string::npos;
                if (!file.fit.free_couplings && !file.fit.free_shifts &&
                    !file.fit.free_linewidth)
                    fail(origin, line.number,
                         "free must list couplings, shifts and/or linewidth");
            } else {
                fail(origin, line.number, "unknown fit key '" + key + "'");
            }
        }
    }
    return file;
}

SpinFile parse_spin_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open spin file '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_spin_text(text.str(), path);
}

std::string serialize_spin_system(const SpinSystem& system, const std::string& name) {
    std::ostringstream out;
    out.precision(12);
    if (!name.empty()) out << "[system]\nname = " << name << "\n\n";
    out << "[isotopes]\n";
    std::vector<std::string> written;
    for (const auto& spin : system.spins()) {
        if (std::find(written.begin(), written.end(), spin.isotope.symbol) != written.end())
            continue;
        written.push_back(spin.isotope.symbol);
        out << spin.isotope.symbol << " " << spin.isotope.gamma_mhz_per_t << "\n";
    }
    out << "\n[spins]\n";
    std::vector<int> counts(system.size(), 1);
    for (const auto& g : system.groups())
        if (g.members.size() == 1) counts[g.members.front()] = g.size;
    for (int i = 0; i < system.size(); ++i) {
        const Spin& s = system.spin(i);
        out << s.label << " " << s.isotope.symbol << " " << s.shift_ppm;
        if (counts[i] > 1) out << " " << counts[i];
        out << "\n";
    }
    out << "\n[couplings]\n";
    for (int a = 0; a < system.size(); ++a)
        for (int b = a + 1; b < system.size(); ++b)
            if (system.coupling(a, b) != 0.0)
                out << system.spin(a).label << " " << system.spin(b).label << " "
                    << system.coupling(a, b) << "\n";
    return out.str();
}

}  // namespace spinchain
