#pragma once

#include <charconv>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tcmf {

/// Locale-independent shortest round-trip formatting (CSV fields).
inline std::string fmt_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// 17 significant digits (JSON numbers).
inline std::string fmt_double17(double v) {
    char buf[40];
    const auto res =
        std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

inline std::string json_escape(std::string_view s) {
    std::string out;
    out.reserve(s.size() + 2);
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default: out += c;
        }
    }
    return out;
}

/// Minimal ordered JSON builder; numbers go through fmt_double17.
class JsonWriter {
public:
    JsonWriter& begin_object() { return token("{"); }
    JsonWriter& end_object() { return close("}"); }
    JsonWriter& begin_array() { return token("["); }
    JsonWriter& end_array() { return close("]"); }

    JsonWriter& key(std::string_view name) {
        comma();
        out_ += '"';
        out_ += json_escape(name);
        out_ += "\":";
        pending_value_ = true;
        return *this;
    }
    JsonWriter& value(double v) { return raw(fmt_double17(v)); }
    template <class T>
        requires std::integral<T> && (!std::same_as<T, bool>)
    JsonWriter& value(T v) {
        return raw(std::to_string(v));
    }
    JsonWriter& value(bool v) { return raw(v ? "true" : "false"); }
    JsonWriter& value(std::string_view v) {
        return raw('"' + json_escape(v) + '"');
    }
    JsonWriter& value(const char* v) { return value(std::string_view(v)); }
    JsonWriter& values(const std::vector<double>& xs) {
        begin_array();
        for (double x : xs) value(x);
        return end_array();
    }

    const std::string& str() const { return out_; }

    void write(const std::filesystem::path& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("cannot open " + path.string());
        f << out_ << '\n';
    }

private:
    void comma() {
        if (!out_.empty() && out_.back() != '{' && out_.back() != '[' &&
            out_.back() != ':' && !pending_value_)
            out_ += ',';
    }
    JsonWriter& token(const char* t) {
        comma();
        out_ += t;
        pending_value_ = false;
        return *this;
    }
    JsonWriter& close(const char* t) {
        out_ += t;
        pending_value_ = false;
        return *this;
    }
    JsonWriter& raw(std::string v) {
        if (!pending_value_) comma();
        out_ += v;
        pending_value_ = false;
        return *this;
    }

    std::string out_;
    bool pending_value_ = false;
};

/// CSV file with '.' decimal separator regardless of locale.
class CsvWriter {
public:
    explicit CsvWriter(const std::filesystem::path& path) : f_(path, std::ios::binary) {
        if (!f_) throw std::runtime_error("cannot open " + path.string());
    }

    void header(const std::vector<std::string>& names) {
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (i) f_ << ',';
            f_ << names[i];
        }
        f_ << '\n';
    }

    void field(double v) { sep(); f_ << fmt_double(v); }
    template <class T>
        requires std::integral<T> && (!std::same_as<T, bool>)
    void field(T v) {
        sep();
        f_ << v;
    }
    void field(const std::string& v) { sep(); f_ << v; }
    void end_row() {
        f_ << '\n';
        first_ = true;
    }

private:
    void sep() {
        if (!first_) f_ << ',';
        first_ = false;
    }
    std::ofstream f_;
    bool first_ = true;
};

/// FNV-1a over the raw config text; stable across platforms.
inline std::string config_hash(std::string_view text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    static const char* hex = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = hex[h & 0xF];
        h >>= 4;
    }
    buf[16] = '\0';
    return std::string(buf, 16);
}

}  // namespace tcmf
