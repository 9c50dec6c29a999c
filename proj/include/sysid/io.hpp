#pragma once

#include <sysid/core.hpp>
#include <sysid/lds.hpp>
#include <sysid/markov.hpp>

#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace sysid::io {

using json = nlohmann::ordered_json;

inline std::string format_number(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// RFC 4180: quote fields holding a comma, quote or line break; double embedded quotes.
inline std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

class CsvWriter {
public:
    explicit CsvWriter(std::ostream& os) : os_(os) {}

    void row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) os_ << ',';
            os_ << csv_field(fields[i]);
        }
        os_ << "\r\n";
    }

private:
    std::ostream& os_;
};

/// Splits one RFC 4180 record; `text` may hold several lines, `pos` advances past the record.
inline std::vector<std::string> csv_record(const std::string& text, std::size_t& pos) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    while (pos < text.size()) {
        const char c = text[pos++];
        if (quoted) {
            if (c == '"') {
                if (pos < text.size() && text[pos] == '"') {
                    cur += '"';
                    ++pos;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && pos < text.size() && text[pos] == '\n') ++pos;
            break;
        } else {
            cur += c;
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out << content;
    if (!out) throw Error("write failed for '" + path.string() + "'");
}

inline double parse_number(const std::string& s, const std::string& where) {
    double v = 0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    while (b < e && *b == ' ') ++b;
    auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || ptr != e) throw Error(where + ": not a number: '" + s + "'");
    return v;
}

inline json matrix_to_json(const Matrix& M) {
    json rows = json::array();
    for (Index i = 0; i < M.rows(); ++i) {
        json r = json::array();
        for (Index j = 0; j < M.cols(); ++j) r.push_back(M(i, j));
        rows.push_back(std::move(r));
    }
    return rows;
}

/// Row-major nested arrays; `rows`/`cols` pin the shape of empty matrices.
inline Matrix matrix_from_json(const json& j, const std::string& what, Index rows = -1, Index cols = -1) {
    if (!j.is_array()) throw ConfigError(what + ": expected a nested array");
    const Index r = static_cast<Index>(j.size());
    if (r == 0) return Matrix::Zero(rows < 0 ? 0 : rows, cols < 0 ? 0 : cols);
    if (!j[0].is_array()) throw ConfigError(what + ": expected a nested array");
    const Index c = static_cast<Index>(j[0].size());
    Matrix M(r, c);
    for (Index i = 0; i < r; ++i) {
        const auto& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Index>(row.size()) != c)
            throw ConfigError(what + ": ragged rows");
        for (Index k = 0; k < c; ++k) {
            const auto& x = row[static_cast<std::size_t>(k)];
            if (!x.is_number()) throw ConfigError(what + ": non-numeric entry");
            M(i, k) = x.get<double>();
        }
    }
    if ((rows >= 0 && r != rows) || (cols >= 0 && c != cols))
        throw DimensionError(what + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) + ", got " +
                             detail::shape(M));
    return M;
}

inline json system_to_json(const SystemMatrices& sys) {
    json j;
    j["n"] = sys.n();
    j["m"] = sys.m();
    j["p"] = sys.p();
    j["A"] = matrix_to_json(sys.A);
    j["B"] = matrix_to_json(sys.B);
    j["C"] = matrix_to_json(sys.C);
    j["D"] = matrix_to_json(sys.D);
    return j;
}

inline SystemMatrices system_from_json(const json& j) {
    for (const char* key : {"A", "B", "C", "D"})
        if (!j.contains(key)) throw ConfigError(std::string("system: missing key '") + key + "'");
    const Matrix A = matrix_from_json(j["A"], "system.A");
    const Index n = A.rows();
    const Index m = j.contains("m") ? j["m"].get<Index>() : -1;
    const Index p = j.contains("p") ? j["p"].get<Index>() : -1;
    if (j.contains("n") && j["n"].get<Index>() != n) throw DimensionError("system: n does not match A");
    const Matrix B = matrix_from_json(j["B"], "system.B", n, p);
    const Matrix C = matrix_from_json(j["C"], "system.C", m, n);
    const Matrix D = matrix_from_json(j["D"], "system.D", C.rows(), B.cols());
    return SystemMatrices(A, B, C, D);
}

inline json markov_to_json(const MarkovEstimate& est) {
    json j;
    j["k"] = est.k;
    j["sample_count"] = est.sample_count;
    json blocks = json::array();
    for (const auto& b : est.blocks) blocks.push_back(matrix_to_json(b));
    j["blocks"] = std::move(blocks);
    return j;
}

inline std::string trajectory_csv(const Trajectory& tr) {
    std::ostringstream os;
    CsvWriter w(os);
    std::vector<std::string> head{"t"};
    for (Index i = 1; i <= tr.p(); ++i) head.push_back("u_" + std::to_string(i));
    for (Index i = 1; i <= tr.m(); ++i) head.push_back("y_" + std::to_string(i));
    w.row(head);
    for (Index t = 0; t <= tr.T; ++t) {
        std::vector<std::string> row{std::to_string(t)};
        for (Index i = 0; i < tr.p(); ++i) row.push_back(format_number(tr.u(i, t)));
        for (Index i = 0; i < tr.m(); ++i) row.push_back(format_number(tr.y(i, t)));
        w.row(row);
    }
    return os.str();
}

inline std::string hidden_csv(const Trajectory& tr) {
    if (!tr.hidden) throw PreconditionError("hidden_csv: trajectory has no hidden fields");
    const auto& h = *tr.hidden;
    std::ostringstream os;
    CsvWriter w(os);
    std::vector<std::string> head{"t"};
    for (Index i = 1; i <= h.x.rows(); ++i) head.push_back("x_" + std::to_string(i));
    for (Index i = 1; i <= h.w.rows(); ++i) head.push_back("w_" + std::to_string(i));
    for (Index i = 1; i <= h.z.rows(); ++i) head.push_back("z_" + std::to_string(i));
    w.row(head);
    for (Index t = 0; t <= tr.T; ++t) {
        std::vector<std::string> row{std::to_string(t)};
        for (Index i = 0; i < h.x.rows(); ++i) row.push_back(format_number(h.x(i, t)));
        for (Index i = 0; i < h.w.rows(); ++i) row.push_back(format_number(h.w(i, t)));
        for (Index i = 0; i < h.z.rows(); ++i) row.push_back(format_number(h.z(i, t)));
        w.row(row);
    }
    return os.str();
}

inline Trajectory trajectory_from_csv(const std::string& text, const std::string& source = "trajectory") {
    std::size_t pos = 0;
    const auto head = csv_record(text, pos);
    if (head.empty() || head[0] != "t") throw Error(source + ": line 1: header must start with 't'");
    Index p = 0, m = 0;
    for (std::size_t i = 1; i < head.size(); ++i) {
        const auto& h = head[i];
        const bool is_u = h.rfind("u_", 0) == 0, is_y = h.rfind("y_", 0) == 0;
        if (is_u && m == 0 && h == "u_" + std::to_string(p + 1)) {
            ++p;
        } else if (is_y && h == "y_" + std::to_string(m + 1)) {
            ++m;
        } else {
            throw Error(source + ": line 1: unexpected column '" + h + "'");
        }
    }
    if (p == 0 || m == 0) throw Error(source + ": line 1: need at least one u_ and one y_ column");
    std::vector<std::vector<double>> rows;
    Index line = 1;
    while (pos < text.size()) {
        ++line;
        const auto rec = csv_record(text, pos);
        if (rec.size() == 1 && rec[0].empty()) continue;
        const std::string where = source + ": line " + std::to_string(line);
        if (static_cast<Index>(rec.size()) != 1 + p + m) throw Error(where + ": wrong number of fields");
        if (parse_number(rec[0], where) != static_cast<double>(rows.size()))
            throw Error(where + ": time index out of sequence");
        std::vector<double> vals;
        for (std::size_t i = 1; i < rec.size(); ++i) vals.push_back(parse_number(rec[i], where));
        rows.push_back(std::move(vals));
    }
    if (rows.size() < 2) throw Error(source + ": trajectory needs at least two time steps");
    Trajectory tr;
    tr.T = static_cast<Index>(rows.size()) - 1;
    tr.u.resize(p, tr.T + 1);
    tr.y.resize(m, tr.T + 1);
    for (Index t = 0; t <= tr.T; ++t) {
        const auto& r = rows[static_cast<std::size_t>(t)];
        for (Index i = 0; i < p; ++i) tr.u(i, t) = r[static_cast<std::size_t>(i)];
        for (Index i = 0; i < m; ++i) tr.y(i, t) = r[static_cast<std::size_t>(p + i)];
    }
    return tr;
}

}  // namespace sysid::io
