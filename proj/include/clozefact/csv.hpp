#pragma once

// Minimal RFC-4180 reader/writer. Quoted fields may hold doubled quotes and
// newlines; records end in CRLF or LF.

#include <cstddef>
#include <istream>
#include <ostream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "clozefact/error.hpp"

namespace clozefact::csv {

struct Record {
    std::vector<std::string> fields;
    std::size_t line = 0; // 1-based line on which the record starts
};

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    // Returns nullopt at end of input.
    std::optional<Record> next() {
        Record rec;
        rec.line = line_ + 1;
        std::string field;
        bool in_quotes = false;
        bool field_was_quoted = false;
        bool any = false;
        int ch;
        while ((ch = in_.get()) != std::char_traits<char>::eof()) {
            any = true;
            const char c = static_cast<char>(ch);
            if (in_quotes) {
                if (c == '"') {
                    if (in_.peek() == '"') {
                        in_.get();
                        field.push_back('"');
                    } else {
                        in_quotes = false;
                    }
                } else {
                    if (c == '\n') {
                        ++line_;
                    }
                    field.push_back(c);
                }
                continue;
            }
            if (c == '"') {
                if (!field.empty() || field_was_quoted) {
                    throw DataError("line " + std::to_string(rec.line) +
                                    ": unexpected quote inside unquoted field");
                }
                in_quotes = true;
                field_was_quoted = true;
            } else if (c == ',') {
                rec.fields.push_back(std::move(field));
                field.clear();
                field_was_quoted = false;
            } else if (c == '\r') {
                if (in_.peek() == '\n') {
                    in_.get();
                }
                ++line_;
                rec.fields.push_back(std::move(field));
                return rec;
            } else if (c == '\n') {
                ++line_;
                rec.fields.push_back(std::move(field));
                return rec;
            } else {
                if (field_was_quoted) {
                    throw DataError("line " + std::to_string(rec.line) +
                                    ": text after closing quote");
                }
                field.push_back(c);
            }
        }
        if (in_quotes) {
            throw DataError("line " + std::to_string(rec.line) + ": unterminated quoted field");
        }
        if (!any) {
            return std::nullopt;
        }
        ++line_;
        rec.fields.push_back(std::move(field));
        return rec;
    }

private:
    std::istream& in_;
    std::size_t line_ = 0;
};

inline std::string quote(std::string_view field) {
    const bool needs = field.find_first_of(",\"\r\n") != std::string_view::npos;
    if (!needs) {
        return std::string(field);
    }
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') {
            out += "\"\"";
        } else {
            out.push_back(c);
        }
    }
    out.push_back('"');
    return out;
}

inline void write_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i != 0) {
            out << ',';
        }
        out << quote(fields[i]);
    }
    out << '\n';
}

} // namespace clozefact::csv
