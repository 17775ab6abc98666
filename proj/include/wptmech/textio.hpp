#pragma once

#include <charconv>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace wptmech {

// 17 significant digits round-trip a double exactly; std::to_chars is
// locale-independent, so files and CSVs are byte-stable across machines.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view sv, const std::string& context) {
    double v = 0.0;
    const char* first = sv.data();
    const char* last = sv.data() + sv.size();
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last)
        throw std::invalid_argument("bad number for key '" + context + "': " +
                                    std::string(sv));
    return v;
}

inline long long parse_int(std::string_view sv, const std::string& context) {
    long long v = 0;
    auto res = std::from_chars(sv.data(), sv.data() + sv.size(), v);
    if (res.ec != std::errc{} || res.ptr != sv.data() + sv.size())
        throw std::invalid_argument("bad integer for key '" + context + "': " +
                                    std::string(sv));
    return v;
}

inline std::string_view trim(std::string_view sv) {
    while (!sv.empty() && (sv.front() == ' ' || sv.front() == '\t')) sv.remove_prefix(1);
    while (!sv.empty() && (sv.back() == ' ' || sv.back() == '\t' || sv.back() == '\r'))
        sv.remove_suffix(1);
    return sv;
}

inline std::vector<std::string> split_fields(std::string_view sv) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : sv) {
        if (c == ' ' || c == '\t') {
            if (!cur.empty()) out.push_back(std::exchange(cur, {}));
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

// Flat "key = value" text dialect shared by scenario, profile, solution and
// plan files. Values may be scalars or space-separated lists; '#' starts a
// comment line.
class KvFile {
public:
    void set(const std::string& key, const std::string& value) {
        entries_.emplace_back(key, value);
        index_[key] = entries_.size() - 1;
    }
    void set_double(const std::string& key, double v) { set(key, format_double(v)); }
    void set_int(const std::string& key, long long v) { set(key, std::to_string(v)); }
    void set_doubles(const std::string& key, const std::vector<double>& vs) {
        std::string out;
        for (std::size_t i = 0; i < vs.size(); ++i) {
            if (i) out += ' ';
            out += format_double(vs[i]);
        }
        set(key, out);
    }

    bool has(const std::string& key) const { return index_.count(key) > 0; }

    const std::string& get(const std::string& key) const {
        auto it = index_.find(key);
        if (it == index_.end())
            throw std::invalid_argument("missing required key '" + key + "'");
        return entries_[it->second].second;
    }
    double get_double(const std::string& key) const {
        return parse_double(get(key), key);
    }
    long long get_int(const std::string& key) const { return parse_int(get(key), key); }
    std::vector<double> get_doubles(const std::string& key) const {
        std::vector<double> out;
        for (const auto& f : split_fields(get(key))) out.push_back(parse_double(f, key));
        return out;
    }
    std::vector<std::string> get_strings(const std::string& key) const {
        return split_fields(get(key));
    }

    const std::vector<std::pair<std::string, std::string>>& entries() const {
        return entries_;
    }

    void write(std::ostream& os) const {
        for (const auto& [k, v] : entries_) os << k << " = " << v << '\n';
    }

    static KvFile read(std::istream& is) {
        KvFile kv;
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            std::string_view sv = trim(line);
            if (sv.empty() || sv.front() == '#') continue;
            const auto eq = sv.find('=');
            if (eq == std::string_view::npos)
                throw std::invalid_argument("line " + std::to_string(lineno) +
                                            ": expected 'key = value'");
            const std::string key(trim(sv.substr(0, eq)));
            const std::string value(trim(sv.substr(eq + 1)));
            if (key.empty())
                throw std::invalid_argument("line " + std::to_string(lineno) +
                                            ": empty key");
            kv.set(key, value);
        }
        return kv;
    }

    // Format guard: every file carries a versioned header key.
    void require_format(const std::string& expected) const {
        const auto& got = get("format");
        if (got != expected)
            throw std::invalid_argument("unsupported format '" + got + "', expected '" +
                                        expected + "'");
    }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
    std::map<std::string, std::size_t> index_;
};

}  // namespace wptmech
