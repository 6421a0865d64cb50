#include "vstat/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace vstat {

using nlohmann::json;

int ParsedToml::line_of(const std::string& path) const {
    auto it = lines.find(path);
    if (it != lines.end()) return it->second;
    // Fall back to the closest enclosing table.
    const auto dot = path.rfind('.');
    return dot == std::string::npos ? 0 : line_of(path.substr(0, dot));
}

// ---------------------------------------------------------------------------
// Reader

namespace {

bool bare_key_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'; }

class TomlReader {
public:
    explicit TomlReader(const std::string& text) : s_(text) { out_.data = json::object(); }

    ParsedToml run() {
        json* table = &out_.data;
        std::string prefix;
        for (;;) {
            skip_blank_lines();
            if (eof()) break;
            if (peek() == '[') {
                table = header(prefix);
            } else {
                key_value(*table, prefix);
            }
            end_of_line();
        }
        return std::move(out_);
    }

private:
    [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(line_, msg); }
    bool eof() const { return i_ >= s_.size(); }
    char peek() const { return eof() ? '\0' : s_[i_]; }
    char get() {
        const char c = s_[i_++];
        if (c == '\n') ++line_;
        return c;
    }
    void skip_ws() {
        while (!eof() && (peek() == ' ' || peek() == '\t')) ++i_;
    }
    void skip_comment() {
        if (peek() == '#')
            while (!eof() && peek() != '\n') ++i_;
    }
    void skip_blank_lines() {
        for (;;) {
            skip_ws();
            skip_comment();
            if (peek() == '\r') ++i_;
            if (peek() == '\n') {
                get();
                continue;
            }
            return;
        }
    }
    // Whitespace, comments and newlines inside arrays.
    void skip_ws_multiline() { skip_blank_lines(); }
    void end_of_line() {
        skip_ws();
        skip_comment();
        if (peek() == '\r') ++i_;
        if (eof()) return;
        if (peek() != '\n') fail(std::string("unexpected '") + peek() + "' after value");
        get();
    }

    std::string key_part() {
        skip_ws();
        if (peek() == '"') return basic_string();
        std::string k;
        while (!eof() && bare_key_char(peek())) k += s_[i_++];
        if (k.empty()) fail("expected a key");
        return k;
    }
    std::vector<std::string> dotted_key() {
        std::vector<std::string> parts{key_part()};
        skip_ws();
        while (peek() == '.') {
            ++i_;
            parts.push_back(key_part());
            skip_ws();
        }
        return parts;
    }

    json* header(std::string& prefix) {
        const int at = line_;
        ++i_;
        const bool array = peek() == '[';
        if (array) ++i_;
        const std::vector<std::string> parts = dotted_key();
        if (peek() != ']') fail("expected ']' to close the table header");
        ++i_;
        if (array) {
            if (peek() != ']') fail("expected ']]' to close the array-of-tables header");
            ++i_;
        }
        json* node = &out_.data;
        std::string path;
        for (size_t k = 0; k < parts.size(); ++k) {
            const std::string& p = parts[k];
            path += (path.empty() ? "" : ".") + p;
            const bool last = k + 1 == parts.size();
            if (!node->is_object()) fail("'" + path + "' is not a table");
            if (last && array) {
                json& arr = (*node)[p];
                if (arr.is_null()) arr = json::array();
                if (!arr.is_array()) fail("'" + path + "' is already defined as a non-array");
                arr.push_back(json::object());
                path += "[" + std::to_string(arr.size() - 1) + "]";
                node = &arr.back();
            } else {
                json& child = (*node)[p];
                if (child.is_null()) child = json::object();
                if (child.is_array() && !child.empty() && child.back().is_object()) {
                    path += "[" + std::to_string(child.size() - 1) + "]";
                    node = &child.back();
                } else if (child.is_object()) {
                    node = &child;
                } else {
                    fail("'" + path + "' is already defined as a value");
                }
                if (last) {
                    if (!defined_.insert(path).second) fail("table [" + path + "] defined twice");
                }
            }
        }
        out_.lines.emplace(path, at);
        prefix = path;
        return node;
    }

    void key_value(json& table, const std::string& prefix) {
        const int at = line_;
        const std::vector<std::string> parts = dotted_key();
        if (peek() != '=') fail("expected '=' after key");
        ++i_;
        skip_ws();
        json* node = &table;
        std::string path = prefix;
        for (size_t k = 0; k + 1 < parts.size(); ++k) {
            path += (path.empty() ? "" : ".") + parts[k];
            json& child = (*node)[parts[k]];
            if (child.is_null()) child = json::object();
            if (!child.is_object()) fail("'" + path + "' is not a table");
            node = &child;
        }
        path += (path.empty() ? "" : ".") + parts.back();
        if (node->contains(parts.back())) fail("key '" + path + "' defined twice");
        (*node)[parts.back()] = value(path);
        out_.lines.emplace(path, at);
    }

    json value(const std::string& path) {
        const char c = peek();
        if (c == '"') return basic_string();
        if (c == '[') return array(path);
        if (c == '{') return inline_table(path);
        if (s_.compare(i_, 4, "true") == 0 && !bare_key_char(s_.size() > i_ + 4 ? s_[i_ + 4] : ' ')) {
            i_ += 4;
            return true;
        }
        if (s_.compare(i_, 5, "false") == 0 && !bare_key_char(s_.size() > i_ + 5 ? s_[i_ + 5] : ' ')) {
            i_ += 5;
            return false;
        }
        return number();
    }

    json number() {
        const size_t start = i_;
        std::string tok;
        while (!eof() && (bare_key_char(peek()) || peek() == '.' || peek() == '+')) {
            if (peek() != '_') tok += peek();
            ++i_;
        }
        if (tok.empty()) fail("expected a value");
        bool is_float = false;
        size_t k = 0;
        if (tok[k] == '+' || tok[k] == '-') ++k;
        const size_t digits_start = k;
        while (k < tok.size() && std::isdigit(static_cast<unsigned char>(tok[k]))) ++k;
        if (k == digits_start) fail("invalid value '" + s_.substr(start, i_ - start) + "'");
        if (k < tok.size() && tok[k] == '.') {
            is_float = true;
            const size_t f = ++k;
            while (k < tok.size() && std::isdigit(static_cast<unsigned char>(tok[k]))) ++k;
            if (k == f) fail("invalid number '" + tok + "'");
        }
        if (k < tok.size() && (tok[k] == 'e' || tok[k] == 'E')) {
            is_float = true;
            ++k;
            if (k < tok.size() && (tok[k] == '+' || tok[k] == '-')) ++k;
            const size_t e = k;
            while (k < tok.size() && std::isdigit(static_cast<unsigned char>(tok[k]))) ++k;
            if (k == e) fail("invalid number '" + tok + "'");
        }
        if (k != tok.size()) fail("invalid value '" + tok + "'");
        try {
            if (is_float) {
                const double v = std::stod(tok);
                if (!std::isfinite(v)) fail("number out of range '" + tok + "'");
                return v;
            }
            return static_cast<std::int64_t>(std::stoll(tok));
        } catch (const std::out_of_range&) {
            fail("number out of range '" + tok + "'");
        }
    }

    std::string basic_string() {
        ++i_;
        std::string out;
        for (;;) {
            if (eof() || peek() == '\n') fail("unterminated string");
            const char c = s_[i_++];
            if (c == '"') return out;
            if (c != '\\') {
                out += c;
                continue;
            }
            if (eof()) fail("unterminated string");
            const char e = s_[i_++];
            switch (e) {
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case 'r': out += '\r'; break;
                default: fail(std::string("unsupported escape '\\") + e + "'");
            }
        }
    }

    json array(const std::string& path) {
        ++i_;
        json arr = json::array();
        for (;;) {
            skip_ws_multiline();
            if (eof()) fail("unterminated array");
            if (peek() == ']') {
                ++i_;
                return arr;
            }
            arr.push_back(value(path + "[" + std::to_string(arr.size()) + "]"));
            skip_ws_multiline();
            if (peek() == ',') {
                ++i_;
            } else if (peek() != ']') {
                fail("expected ',' or ']' in array");
            }
        }
    }

    json inline_table(const std::string& path) {
        ++i_;
        json t = json::object();
        skip_ws();
        if (peek() == '}') {
            ++i_;
            return t;
        }
        for (;;) {
            const std::vector<std::string> parts = dotted_key();
            if (parts.size() != 1) fail("dotted keys are not supported in inline tables");
            if (peek() != '=') fail("expected '=' in inline table");
            ++i_;
            skip_ws();
            if (t.contains(parts[0])) fail("key '" + parts[0] + "' defined twice");
            t[parts[0]] = value(path + "." + parts[0]);
            out_.lines.emplace(path + "." + parts[0], line_);
            skip_ws();
            if (peek() == ',') {
                ++i_;
                continue;
            }
            if (peek() == '}') {
                ++i_;
                return t;
            }
            fail("expected ',' or '}' in inline table");
        }
    }

    const std::string& s_;
    size_t i_ = 0;
    int line_ = 1;
    ParsedToml out_;
    std::set<std::string> defined_;
};

// ---------------------------------------------------------------------------
// Writer

bool table_array(const json& v) {
    if (!v.is_array() || v.empty()) return false;
    for (const auto& e : v) {
        if (!e.is_object()) return false;
    }
    return true;
}

std::string key_text(const std::string& k) {
    bool bare = !k.empty();
    for (char c : k) bare = bare && bare_key_char(c);
    return bare ? k : json(k).dump();
}

std::string value_text(const json& v) {
    if (v.is_string()) return json(v.get<std::string>()).dump();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
    if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
    if (v.is_number_float()) {
        char buf[64];
        const auto res = std::to_chars(buf, buf + sizeof buf, v.get<double>());
        std::string s(buf, res.ptr);
        if (s.find_first_of(".eE") == std::string::npos) s += ".0";
        return s;
    }
    if (v.is_array()) {
        std::string s = "[";
        for (size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + value_text(v[i]);
        return s + "]";
    }
    if (v.is_object()) {
        std::string s = "{";
        bool first = true;
        for (auto it = v.begin(); it != v.end(); ++it) {
            s += (first ? "" : ", ") + key_text(it.key()) + " = " + value_text(it.value());
            first = false;
        }
        return s + "}";
    }
    return "\"\"";
}

void emit(const json& table, const std::string& path, std::string& out) {
    for (auto it = table.begin(); it != table.end(); ++it) {
        if (!it->is_object() && !table_array(*it)) out += key_text(it.key()) + " = " + value_text(*it) + "\n";
    }
    for (auto it = table.begin(); it != table.end(); ++it) {
        if (!it->is_object()) continue;
        const std::string p = path.empty() ? key_text(it.key()) : path + "." + key_text(it.key());
        out += "\n[" + p + "]\n";
        emit(*it, p, out);
    }
    for (auto it = table.begin(); it != table.end(); ++it) {
        if (!table_array(*it)) continue;
        const std::string p = path.empty() ? key_text(it.key()) : path + "." + key_text(it.key());
        for (const auto& e : *it) {
            out += "\n[[" + p + "]]\n";
            emit(e, p, out);
        }
    }
}

}  // namespace

ParsedToml parse_toml(const std::string& text) { return TomlReader(text).run(); }

std::string to_toml(const json& data) {
    if (!data.is_object()) throw InvalidInput("to_toml needs a table");
    std::string out;
    emit(data, "", out);
    if (!out.empty() && out.front() == '\n') out.erase(0, 1);
    return out;
}

// ---------------------------------------------------------------------------
// Typed view

namespace {

struct View {
    const ParsedToml& src;

    [[noreturn]] void fail(const std::string& path, const std::string& msg) const {
        throw ConfigError(src.line_of(path), path + ": " + msg);
    }
    double number(const json& v, const std::string& path) const {
        if (!v.is_number()) fail(path, "expected a number");
        return v.get<double>();
    }
    std::int64_t integer(const json& v, const std::string& path) const {
        if (!v.is_number_integer()) fail(path, "expected an integer");
        return v.get<std::int64_t>();
    }
    std::string string(const json& v, const std::string& path) const {
        if (!v.is_string()) fail(path, "expected a string");
        return v.get<std::string>();
    }
    std::vector<double> numbers(const json& v, const std::string& path) const {
        if (v.is_number()) return {v.get<double>()};
        if (!v.is_array()) fail(path, "expected an array of numbers");
        std::vector<double> out;
        for (size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], path + "[" + std::to_string(i) + "]"));
        return out;
    }
    Vector coords(const json& v, int dim, const std::string& path) const {
        std::vector<double> c = numbers(v, path);
        if (c.size() == 1 && dim > 1) c.assign(static_cast<size_t>(dim), c[0]);
        if (static_cast<int>(c.size()) != dim) fail(path, "expected " + std::to_string(dim) + " coordinates");
        for (double x : c)
            if (!std::isfinite(x)) fail(path, "coordinates must be finite");
        return Eigen::Map<const Vector>(c.data(), dim);
    }
    void only(const json& table, const std::string& path, std::initializer_list<const char*> keys) const {
        if (!table.is_object()) fail(path, "expected a table");
        for (auto it = table.begin(); it != table.end(); ++it) {
            bool ok = false;
            for (const char* k : keys) ok = ok || it.key() == k;
            if (!ok) fail(path.empty() ? it.key() : path + "." + it.key(), "unknown key");
        }
    }
};

const json& section(const json& root, const char* name) {
    static const json empty = json::object();
    return root.contains(name) ? root.at(name) : empty;
}

}  // namespace

Density density_from_json(const json& j, int dim, const ParsedToml& src, const std::string& path) {
    const View v{src};
    v.only(j, path, {"kind", "loc", "kappa", "weights", "components", "res", "values"});
    if (!j.contains("kind")) v.fail(path, "missing 'kind'");
    const std::string kind = v.string(j.at("kind"), path + ".kind");
    try {
        if (kind == "uniform") return Density::uniform(dim);
        if (kind == "von_mises") {
            if (!j.contains("kappa")) v.fail(path, "von_mises needs 'kappa'");
            const Vector loc = j.contains("loc") ? v.coords(j.at("loc"), dim, path + ".loc") : Vector(Vector::Zero(dim));
            return Density::von_mises(loc, v.coords(j.at("kappa"), dim, path + ".kappa"));
        }
        if (kind == "mixture") {
            if (!j.contains("components") || !j.at("components").is_array() || j.at("components").empty()) {
                v.fail(path, "mixture needs a non-empty 'components' array");
            }
            const auto& comps = j.at("components");
            std::vector<double> w = j.contains("weights") ? v.numbers(j.at("weights"), path + ".weights")
                                                          : std::vector<double>(comps.size(), 1.0);
            std::vector<Density> ds;
            for (size_t i = 0; i < comps.size(); ++i) {
                ds.push_back(density_from_json(comps[i], dim, src, path + ".components[" + std::to_string(i) + "]"));
            }
            return Density::mixture(std::move(w), std::move(ds));
        }
        if (kind == "tabulated") {
            if (!j.contains("res") || !j.contains("values")) v.fail(path, "tabulated needs 'res' and 'values'");
            const auto res = v.integer(j.at("res"), path + ".res");
            return Density::tabulated(dim, static_cast<int>(res), v.numbers(j.at("values"), path + ".values"));
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const InvalidInput& e) {
        v.fail(path, e.what());
    }
    v.fail(path + ".kind", "unknown density kind '" + kind + "'");
}

RunConfig build_config(ParsedToml parsed, std::optional<std::uint64_t> seed_override,
                       std::optional<std::size_t> reps_override) {
    json& root = parsed.data;
    if (seed_override) root["experiment"]["seed"] = *seed_override;
    if (reps_override) root["experiment"]["R"] = *reps_override;

    const View v{parsed};
    v.only(root, "", {"manifold", "density", "kernel", "schedules", "experiment", "output"});
    RunConfig rc;

    const json& man = section(root, "manifold");
    v.only(man, "manifold", {"dim"});
    if (man.contains("dim")) {
        const auto dim = v.integer(man.at("dim"), "manifold.dim");
        if (dim < 1 || dim > 16) v.fail("manifold.dim", "must lie in [1, 16]");
        rc.dim = static_cast<int>(dim);
    }

    if (!root.contains("density")) v.fail("density", "missing [density] section");
    rc.density = density_from_json(root.at("density"), rc.dim, parsed, "density");

    const json& ker = section(root, "kernel");
    v.only(ker, "kernel", {"trunc_eps", "max_images"});
    if (ker.contains("trunc_eps")) rc.kernel.trunc_eps = v.number(ker.at("trunc_eps"), "kernel.trunc_eps");
    if (ker.contains("max_images")) rc.kernel.max_images = static_cast<int>(v.integer(ker.at("max_images"), "kernel.max_images"));
    try {
        rc.kernel.validate();
    } catch (const InvalidInput& e) {
        v.fail("kernel", e.what());
    }

    const json& sch = section(root, "schedules");
    v.only(sch, "schedules", {"t_list", "delta_list", "t_fractions"});
    rc.t_list = sch.contains("t_list") ? v.numbers(sch.at("t_list"), "schedules.t_list") : std::vector<double>{0.1};
    for (double t : rc.t_list)
        if (!(t >= 0.0)) v.fail("schedules.t_list", "times must be >= 0");

    const json& exp = section(root, "experiment");
    v.only(exp, "experiment",
           {"kind", "n_list", "R", "seed", "res", "audit_res", "audit_fraction", "workers", "probes", "grid_res", "base"});
    ExperimentConfig& ec = rc.experiment;
    ec.density = rc.density;
    ec.kernel = rc.kernel;
    ec.t_list = rc.t_list;
    if (exp.contains("kind")) {
        rc.experiment_kind = v.string(exp.at("kind"), "experiment.kind");
        if (rc.experiment_kind != "mean" && rc.experiment_kind != "variance" && rc.experiment_kind != "function") {
            v.fail("experiment.kind", "expected \"mean\", \"variance\" or \"function\"");
        }
    }
    if (exp.contains("n_list")) {
        ec.n_list.clear();
        for (double n : v.numbers(exp.at("n_list"), "experiment.n_list")) {
            if (!(n >= 1.0) || n != std::floor(n)) v.fail("experiment.n_list", "sample sizes must be positive integers");
            ec.n_list.push_back(static_cast<std::size_t>(n));
        }
    }
    if (exp.contains("R")) {
        const auto r = v.integer(exp.at("R"), "experiment.R");
        if (r < 1) v.fail("experiment.R", "must be positive");
        ec.R = static_cast<std::size_t>(r);
    }
    if (exp.contains("seed")) {
        const auto s = v.integer(exp.at("seed"), "experiment.seed");
        if (s < 0) v.fail("experiment.seed", "must be non-negative");
        ec.seed = static_cast<std::uint64_t>(s);
    }
    if (exp.contains("res")) ec.res = static_cast<int>(v.integer(exp.at("res"), "experiment.res"));
    if (exp.contains("audit_res")) ec.audit_res = static_cast<int>(v.integer(exp.at("audit_res"), "experiment.audit_res"));
    if (exp.contains("audit_fraction")) ec.audit_fraction = v.number(exp.at("audit_fraction"), "experiment.audit_fraction");
    if (exp.contains("workers")) {
        rc.workers = static_cast<int>(v.integer(exp.at("workers"), "experiment.workers"));
        if (rc.workers < 0) v.fail("experiment.workers", "must be >= 0");
    }
    if (exp.contains("grid_res")) {
        rc.grid_res = static_cast<int>(v.integer(exp.at("grid_res"), "experiment.grid_res"));
        if (rc.grid_res < 2) v.fail("experiment.grid_res", "must be at least 2");
    }
    if (exp.contains("base")) rc.base = Point(v.coords(exp.at("base"), rc.dim, "experiment.base"));
    if (exp.contains("probes")) {
        const json& p = exp.at("probes");
        if (!p.is_array()) v.fail("experiment.probes", "expected an array of points");
        for (size_t i = 0; i < p.size(); ++i) {
            ec.probes.emplace_back(v.coords(p[i], rc.dim, "experiment.probes[" + std::to_string(i) + "]"));
        }
    }
    if (ec.res < 16) v.fail("experiment.res", "must be at least 16");

    rc.jterm = JTermSchedule();
    rc.jterm.res = ec.res;
    const std::vector<double> deltas =
        sch.contains("delta_list") ? v.numbers(sch.at("delta_list"), "schedules.delta_list") : std::vector<double>{0.4, 0.2, 0.1};
    const std::vector<double> fr = sch.contains("t_fractions") ? v.numbers(sch.at("t_fractions"), "schedules.t_fractions")
                                                               : std::vector<double>{0.5, 0.25, 0.125};
    rc.jterm.deltas = deltas;
    for (double d : deltas) {
        std::vector<double> ts;
        for (double f : fr) ts.push_back(f * d * d);
        rc.jterm.times.push_back(ts);
    }
    try {
        rc.jterm.validate();
    } catch (const InvalidInput& e) {
        v.fail("schedules", e.what());
    }
    ec.jterm = rc.jterm;

    const json& outp = section(root, "output");
    v.only(outp, "output", {"dir", "format"});
    if (outp.contains("dir")) rc.out_dir = v.string(outp.at("dir"), "output.dir");
    if (outp.contains("format")) {
        rc.format = v.string(outp.at("format"), "output.format");
        if (rc.format != "csv" && rc.format != "json" && rc.format != "both") {
            v.fail("output.format", "expected \"csv\", \"json\" or \"both\"");
        }
    }
    rc.source = std::move(parsed);
    return rc;
}

std::string RunConfig::hash() const {
    json canon = source.data;
    canon.erase("output");
    if (canon.contains("experiment")) canon["experiment"].erase("workers");
    const std::string text = canon.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace vstat
