#pragma once

// Flat `key = value` configuration files.
//
// Syntax: one assignment per line, `#` starts a comment, blank lines are
// ignored, keys are dotted identifiers (`controller.k_p_ma`). Later
// assignments override earlier ones, which is how layering works: defaults,
// then a file, then command-line `key=value` overrides.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace apsim {

/// Shortest decimal text that parses back to exactly `value`.
[[nodiscard]] std::string format_double(double value);

[[nodiscard]] double parse_double(std::string_view text, std::string_view key);
[[nodiscard]] std::int64_t parse_int(std::string_view text, std::string_view key);
[[nodiscard]] std::uint64_t parse_uint(std::string_view text, std::string_view key);
[[nodiscard]] bool parse_bool(std::string_view text, std::string_view key);

class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig parse(std::string_view text, std::string_view origin = "<text>");
    static KeyValueConfig load(const std::filesystem::path& path);

    /// Applies a single `key=value` override.
    void apply_override(std::string_view assignment);
    /// Applies every entry of `other` on top of this one.
    void merge(const KeyValueConfig& other);

    void set(std::string key, std::string value);
    void set(std::string key, double value) { set(std::move(key), format_double(value)); }

    [[nodiscard]] bool contains(std::string_view key) const;
    [[nodiscard]] const std::string* find(std::string_view key) const;

    // Typed getters mark the key as consumed; the fallback is used when absent.
    [[nodiscard]] double get_double(std::string_view key, double fallback) const;
    [[nodiscard]] std::int64_t get_int(std::string_view key, std::int64_t fallback) const;
    [[nodiscard]] std::uint64_t get_uint(std::string_view key, std::uint64_t fallback) const;
    [[nodiscard]] bool get_bool(std::string_view key, bool fallback) const;
    [[nodiscard]] std::string get_string(std::string_view key, std::string fallback) const;

    /// Entries under `prefix.` with the prefix stripped.
    [[nodiscard]] KeyValueConfig subtree(std::string_view prefix) const;

    /// Throws ConfigError naming the first key no getter has consumed.
    void require_all_consumed() const;

    [[nodiscard]] const std::map<std::string, std::string, std::less<>>& entries() const { return entries_; }
    [[nodiscard]] std::string render() const;

private:
    void mark(std::string_view key) const;

    std::map<std::string, std::string, std::less<>> entries_;
    mutable std::set<std::string, std::less<>> consumed_;
    std::string origin_ = "<config>";
};

}  // namespace apsim
