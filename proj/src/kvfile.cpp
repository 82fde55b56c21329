#include "mmscan/kvfile.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace mmscan {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

KeyValueFile KeyValueFile::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    KeyValueFile kv;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!key.empty()) kv.set(key, value);
    }
    return kv;
}

void KeyValueFile::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot create " + path);
    for (const auto& key : order_) out << key << " = " << entries_.at(key) << "\n";
    if (!out) throw IoError("short write to " + path);
}

bool KeyValueFile::has(const std::string& key) const { return entries_.count(key) > 0; }

void KeyValueFile::set(const std::string& key, const std::string& value) {
    if (!entries_.count(key)) order_.push_back(key);
    entries_[key] = value;
}

void KeyValueFile::set(const std::string& key, double value) { set(key, format_double(value)); }

void KeyValueFile::set(const std::string& key, int value) { set(key, std::to_string(value)); }

void KeyValueFile::set_vector(const std::string& key, const std::vector<double>& values) {
    std::ostringstream os;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) os << " ";
        os << format_double(values[i]);
    }
    set(key, os.str());
}

const std::string& KeyValueFile::get(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw IoError("missing key: " + key);
    return it->second;
}

std::string KeyValueFile::get_or(const std::string& key, const std::string& fallback) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
}

double KeyValueFile::get_double(const std::string& key) const { return std::stod(get(key)); }

double KeyValueFile::get_double_or(const std::string& key, double fallback) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? fallback : std::stod(it->second);
}

int KeyValueFile::get_int(const std::string& key) const { return std::stoi(get(key)); }

int KeyValueFile::get_int_or(const std::string& key, int fallback) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? fallback : std::stoi(it->second);
}

std::vector<double> KeyValueFile::get_vector(const std::string& key) const {
    std::istringstream is(get(key));
    std::vector<double> out;
    double v;
    while (is >> v) out.push_back(v);
    return out;
}

}  // namespace mmscan
