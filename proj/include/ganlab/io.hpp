#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ganlab/errors.hpp"

namespace ganlab {

/// Shortest round-trip decimal representation (std::to_chars).
inline std::string fmt_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw numeric_error("fmt_double: conversion failed");
    return std::string(buf, ptr);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw invalid_input_error("parse_double: bad numeric field '" + std::string(s) + "'");
    return v;
}

/// Minimal CSV with a fixed header row and %.17g-class numeric fields.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

    void row(const std::vector<double>& values) {
        if (values.size() != header_.size())
            throw invalid_input_error("csv: row width does not match header");
        rows_.push_back(values);
    }

    std::string str() const {
        std::ostringstream out;
        for (std::size_t i = 0; i < header_.size(); ++i)
            out << (i ? "," : "") << header_[i];
        out << "\n";
        for (const auto& r : rows_) {
            for (std::size_t i = 0; i < r.size(); ++i)
                out << (i ? "," : "") << fmt_double(r[i]);
            out << "\n";
        }
        return out.str();
    }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<double>> rows_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        throw invalid_input_error("csv: no column named '" + name + "'");
    }
};

inline CsvTable parse_csv(const std::string& text) {
    CsvTable t;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            std::size_t comma = line.find(',', start);
            fields.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (first) {
            t.header = fields;
            first = false;
        } else {
            std::vector<double> row;
            row.reserve(fields.size());
            for (auto& f : fields) row.push_back(parse_double(f));
            t.rows.push_back(std::move(row));
        }
    }
    return t;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw invalid_input_error("cannot open for writing: " + path.string());
    out << content;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw invalid_input_error("cannot open for reading: " + path.string());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

/// Small deterministic SVG 1.1 writer used for phase portraits.
class SvgWriter {
public:
    SvgWriter(double width, double height) : w_(width), h_(height) {
        body_ << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
              << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << fmt(w_)
              << "\" height=\"" << fmt(h_) << "\" viewBox=\"0 0 " << fmt(w_) << " " << fmt(h_)
              << "\">\n";
    }

    void rect(double x, double y, double w, double h, const std::string& fill,
              double opacity = 1.0) {
        body_ << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(w)
              << "\" height=\"" << fmt(h) << "\" fill=\"" << fill << "\" fill-opacity=\""
              << fmt(opacity) << "\"/>\n";
    }

    void line(double x1, double y1, double x2, double y2, const std::string& stroke,
              double width) {
        body_ << "<line x1=\"" << fmt(x1) << "\" y1=\"" << fmt(y1) << "\" x2=\"" << fmt(x2)
              << "\" y2=\"" << fmt(y2) << "\" stroke=\"" << stroke << "\" stroke-width=\""
              << fmt(width) << "\"/>\n";
    }

    void circle(double cx, double cy, double r, const std::string& fill) {
        body_ << "<circle cx=\"" << fmt(cx) << "\" cy=\"" << fmt(cy) << "\" r=\"" << fmt(r)
              << "\" fill=\"" << fill << "\"/>\n";
    }

    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke,
                  double width) {
        body_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\""
              << fmt(width) << "\" points=\"";
        for (std::size_t i = 0; i < pts.size(); ++i)
            body_ << (i ? " " : "") << fmt(pts[i].first) << "," << fmt(pts[i].second);
        body_ << "\"/>\n";
    }

    void text(double x, double y, const std::string& s, double size = 12.0) {
        body_ << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" font-family=\"monospace\" "
              << "font-size=\"" << fmt(size) << "\">" << s << "</text>\n";
    }

    std::string str() const { return body_.str() + "</svg>\n"; }

private:
    double w_, h_;
    std::ostringstream body_;

    // fixed 6-decimal layout coordinates keep the bytes deterministic
    static std::string fmt(double v) {
        char buf[40];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 6);
        if (ec != std::errc{}) throw numeric_error("svg: coordinate formatting failed");
        return std::string(buf, ptr);
    }
};

} // namespace ganlab
