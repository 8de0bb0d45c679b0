#include "apsim/kv_config.hpp"

#include "apsim/error.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace apsim {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

bool valid_key(std::string_view key) {
    if (key.empty()) return false;
    for (char c : key) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-')) return false;
    }
    return true;
}

std::pair<std::string, std::string> split_assignment(std::string_view line, std::string_view where) {
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
        throw ConfigError(std::string(where) + ": expected `key = value`, got `" + std::string(line) + "`");
    }
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (!valid_key(key)) {
        throw ConfigError(std::string(where) + ": invalid key `" + std::string(key) + "`");
    }
    return {std::string(key), std::string(value)};
}

}  // namespace

std::string format_double(double value) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    if (ec != std::errc{}) throw Error("format_double: conversion failed");
    return std::string(buf.data(), ptr);
}

double parse_double(std::string_view text, std::string_view key) {
    text = trim(text);
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(out)) {
        throw ConfigError("key `" + std::string(key) + "`: not a finite number: `" + std::string(text) + "`");
    }
    return out;
}

std::int64_t parse_int(std::string_view text, std::string_view key) {
    text = trim(text);
    std::int64_t out = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw ConfigError("key `" + std::string(key) + "`: not an integer: `" + std::string(text) + "`");
    }
    return out;
}

std::uint64_t parse_uint(std::string_view text, std::string_view key) {
    text = trim(text);
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw ConfigError("key `" + std::string(key) + "`: not an unsigned integer: `" + std::string(text) + "`");
    }
    return out;
}

bool parse_bool(std::string_view text, std::string_view key) {
    text = trim(text);
    if (text == "1" || text == "true" || text == "yes" || text == "on") return true;
    if (text == "0" || text == "false" || text == "no" || text == "off") return false;
    throw ConfigError("key `" + std::string(key) + "`: not a boolean: `" + std::string(text) + "`");
}

KeyValueConfig KeyValueConfig::parse(std::string_view text, std::string_view origin) {
    KeyValueConfig cfg;
    cfg.origin_ = std::string(origin);
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        auto line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto [k, v] = split_assignment(line, std::string(origin) + ":" + std::to_string(line_no));
        cfg.entries_[std::move(k)] = std::move(v);
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file `" + path.string() + "`");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

void KeyValueConfig::apply_override(std::string_view assignment) {
    auto [k, v] = split_assignment(trim(assignment), "override");
    entries_[std::move(k)] = std::move(v);
}

void KeyValueConfig::merge(const KeyValueConfig& other) {
    for (const auto& [k, v] : other.entries_) entries_[k] = v;
}

void KeyValueConfig::set(std::string key, std::string value) {
    if (!valid_key(key)) throw ConfigError("invalid key `" + key + "`");
    entries_[std::move(key)] = std::move(value);
}

bool KeyValueConfig::contains(std::string_view key) const { return entries_.find(key) != entries_.end(); }

const std::string* KeyValueConfig::find(std::string_view key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
}

void KeyValueConfig::mark(std::string_view key) const { consumed_.emplace(key); }

double KeyValueConfig::get_double(std::string_view key, double fallback) const {
    mark(key);
    const auto* v = find(key);
    return v ? parse_double(*v, key) : fallback;
}

std::int64_t KeyValueConfig::get_int(std::string_view key, std::int64_t fallback) const {
    mark(key);
    const auto* v = find(key);
    return v ? parse_int(*v, key) : fallback;
}

std::uint64_t KeyValueConfig::get_uint(std::string_view key, std::uint64_t fallback) const {
    mark(key);
    const auto* v = find(key);
    return v ? parse_uint(*v, key) : fallback;
}

bool KeyValueConfig::get_bool(std::string_view key, bool fallback) const {
    mark(key);
    const auto* v = find(key);
    return v ? parse_bool(*v, key) : fallback;
}

std::string KeyValueConfig::get_string(std::string_view key, std::string fallback) const {
    mark(key);
    const auto* v = find(key);
    return v ? *v : fallback;
}

KeyValueConfig KeyValueConfig::subtree(std::string_view prefix) const {
    KeyValueConfig out;
    out.origin_ = origin_;
    const std::string p = std::string(prefix) + ".";
    for (const auto& [k, v] : entries_) {
        if (k.size() > p.size() && k.compare(0, p.size(), p) == 0) {
            out.entries_[k.substr(p.size())] = v;
            consumed_.insert(k);
        }
    }
    return out;
}

void KeyValueConfig::require_all_consumed() const {
    for (const auto& [k, v] : entries_) {
        if (!consumed_.contains(k)) throw ConfigError("unknown config key `" + k + "` in " + origin_);
    }
}

std::string KeyValueConfig::render() const {
    std::string out;
    for (const auto& [k, v] : entries_) {
        out += k;
        out += " = ";
        out += v;
        out += '\n';
    }
    return out;
}

}  // namespace apsim
