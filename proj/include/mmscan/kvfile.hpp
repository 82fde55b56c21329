#pragma once

#include <map>
#include <string>
#include <vector>

#include "mmscan/common.hpp"

namespace mmscan {

/// Line-oriented `key = value` store used for calibration files, reports and
/// configs. Keys are dotted paths, values are free text; '#' starts a comment.
/// Insertion order is preserved on write so reports stay diffable.
class KeyValueFile {
public:
    KeyValueFile() = default;

    static KeyValueFile load(const std::string& path);
    void save(const std::string& path) const;

    bool has(const std::string& key) const;

    void set(const std::string& key, const std::string& value);
    void set(const std::string& key, double value);
    void set(const std::string& key, int value);
    void set_vector(const std::string& key, const std::vector<double>& values);

    const std::string& get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    double get_double_or(const std::string& key, double fallback) const;
    int get_int(const std::string& key) const;
    int get_int_or(const std::string& key, int fallback) const;
    std::vector<double> get_vector(const std::string& key) const;

    const std::vector<std::string>& keys() const { return order_; }

private:
    std::map<std::string, std::string> entries_;
    std::vector<std::string> order_;
};

}  // namespace mmscan
