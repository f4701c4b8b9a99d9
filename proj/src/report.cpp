#include "romkit/pipeline.hpp"

#include "romkit/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace romkit {

using nlohmann::json;

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string short_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

/// Sequential colour ramp, dark blue to yellow.
std::string ramp(double t) {
    t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0);
    const double stops[5][3] = {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
    const double x = t * 4.0;
    const int i = std::min(3, static_cast<int>(x));
    const double f = x - i;
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(stops[i][0] + f * (stops[i + 1][0] - stops[i][0])),
                  static_cast<int>(stops[i][1] + f * (stops[i + 1][1] - stops[i][1])),
                  static_cast<int>(stops[i][2] + f * (stops[i + 1][2] - stops[i][2])));
    return buf;
}

std::pair<double, double> joint_range(const Vector& a, const Vector& b) {
    double lo = std::min(a.minCoeff(), b.minCoeff()), hi = std::max(a.maxCoeff(), b.maxCoeff());
    if (!(hi > lo)) hi = lo + 1.0;
    return {lo, hi};
}

}  // namespace

std::string report_to_json(const BenchReport& r) {
    json j;
    j["benchmark"] = r.benchmark;
    j["fingerprint"] = r.fingerprint;
    j["field"] = r.field;
    j["fom_median_seconds"] = opt(r.fom_median_seconds);
    j["fom_solves"] = r.fom_solves;
    j["test_parameters"] = r.test_parameters;
    j["rows"] = json::array();
    for (const ReportRow& row : r.rows) {
        j["rows"].push_back({{"method", row.method},
                             {"train_error", row.train_error},
                             {"train_error_max", row.train_error_max},
                             {"test_error", row.test_error},
                             {"test_error_max", row.test_error_max},
                             {"node_error", opt(row.node_error)},
                             {"offline_seconds", row.offline_seconds},
                             {"online_median_seconds", row.online_median_seconds},
                             {"online_evaluations", row.online_evaluations},
                             {"speedup", opt(row.speedup)}});
    }
    j["curves"] = json::array();
    for (const auto& [label, points] : r.curves) {
        json c{{"method", label}, {"points", json::array()}};
        for (const CurvePoint& p : points) c["points"].push_back({{"size", p.size}, {"test_error", p.test_error}, {"energy_error", opt(p.energy_error)}});
        j["curves"].push_back(std::move(c));
    }
    return j.dump(2) + "\n";
}

BenchReport report_from_json(const std::string& text) {
    BenchReport r;
    try {
        const json j = json::parse(text);
        r.benchmark = j.at("benchmark").get<std::string>();
        r.fingerprint = j.at("fingerprint").get<std::string>();
        r.field = j.at("field").get<std::string>();
        r.fom_median_seconds = opt_from(j, "fom_median_seconds");
        r.fom_solves = j.at("fom_solves").get<Index>();
        r.test_parameters = j.at("test_parameters").get<Index>();
        for (const json& row : j.at("rows")) {
            ReportRow x;
            x.method = row.at("method").get<std::string>();
            x.train_error = row.at("train_error").get<double>();
            x.train_error_max = row.at("train_error_max").get<double>();
            x.test_error = row.at("test_error").get<double>();
            x.test_error_max = row.at("test_error_max").get<double>();
            x.node_error = opt_from(row, "node_error");
            x.offline_seconds = row.at("offline_seconds").get<double>();
            x.online_median_seconds = row.at("online_median_seconds").get<double>();
            x.online_evaluations = row.at("online_evaluations").get<Index>();
            x.speedup = opt_from(row, "speedup");
            r.rows.push_back(std::move(x));
        }
        for (const json& c : j.at("curves")) {
            std::vector<CurvePoint> pts;
            for (const json& p : c.at("points")) pts.push_back({p.at("size").get<Index>(), p.at("test_error").get<double>(), opt_from(p, "energy_error")});
            r.curves.emplace_back(c.at("method").get<std::string>(), std::move(pts));
        }
    } catch (const json::exception& e) {
        throw IoError(std::string("report.json: ") + e.what());
    }
    return r;
}

namespace {

void require_rows(const BenchReport& r) {
    if (r.rows.empty() || r.test_parameters == 0) throw ConfigError("report: no test rows");
}

}  // namespace

std::string render_csv(const BenchReport& r) {
    require_rows(r);
    std::string out =
        "method,train_error,train_error_max,test_error,test_error_max,node_error,offline_seconds,online_median_seconds,"
        "online_evaluations,fom_median_seconds,fom_solves,speedup\n";
    for (const ReportRow& row : r.rows) {
        out += csv_field(row.method) + "," + num(row.train_error) + "," + num(row.train_error_max) + "," +
               num(row.test_error) + "," + num(row.test_error_max) + "," + (row.node_error ? num(*row.node_error) : "") +
               "," + num(row.offline_seconds) + "," + num(row.online_median_seconds) + "," +
               std::to_string(row.online_evaluations) + "," + (r.fom_median_seconds ? num(*r.fom_median_seconds) : "") +
               "," + std::to_string(r.fom_solves) + "," + (row.speedup ? num(*row.speedup) : "") + "\n";
    }
    return out;
}

std::string render_errors_csv(const BenchReport& r) {
    require_rows(r);
    std::string out = "method,train_error,train_error_max,test_error,test_error_max,test_energy_error\n";
    for (const ReportRow& row : r.rows)
        out += csv_field(row.method) + "," + num(row.train_error) + "," + num(row.train_error_max) + "," +
               num(row.test_error) + "," + num(row.test_error_max) + ",\n";
    for (const auto& [label, points] : r.curves)
        for (const CurvePoint& p : points)
            out += csv_field(label + "@" + std::to_string(p.size)) + ",,," + num(p.test_error) + ",," +
                   (p.energy_error ? num(*p.energy_error) : "") + "\n";
    return out;
}

std::string render_markdown(const BenchReport& r) {
    require_rows(r);
    std::string out = "# " + r.benchmark + "\n\n";
    out += "Fingerprint `" + r.fingerprint.substr(0, 16) + "`, field `" + r.field + "`, " +
           std::to_string(r.test_parameters) + " test parameter(s)";
    if (r.fom_median_seconds) out += ", FOM median " + short_num(*r.fom_median_seconds) + " s over " + std::to_string(r.fom_solves) + " solves";
    out += ".\n\n| method | train err | test err | speedup |\n|---|---|---|---|\n";
    for (const ReportRow& row : r.rows) {
        char sp[32] = "n/a";
        if (row.speedup) std::snprintf(sp, sizeof sp, "%.1fx", *row.speedup);
        out += "| " + row.method + " | " + short_num(row.train_error) + " | " + short_num(row.test_error) + " | " + sp + " |\n";
    }
    return out;
}

std::string render_curve_svg(const BenchReport& r) {
    const double W = 640, H = 420, L = 70, R = 160, T = 30, B = 50;
    Index nmax = 1;
    double lo = 1e300, hi = 0.0;
    for (const auto& [label, pts] : r.curves)
        for (const CurvePoint& p : pts) {
            nmax = std::max(nmax, p.size);
            for (double e : {p.test_error, p.energy_error.value_or(0.0)})
                if (e > 0.0) {
                    lo = std::min(lo, e);
                    hi = std::max(hi, e);
                }
        }
    if (!(hi > 0.0)) lo = 1e-16, hi = 1.0;
    double l0 = std::floor(std::log10(lo)), l1 = std::ceil(std::log10(hi));
    if (l1 <= l0) l1 = l0 + 1;
    auto px = [&](double n) { return L + (W - L - R) * (nmax > 1 ? (n - 1) / double(nmax - 1) : 0.5); };
    auto py = [&](double e) {
        const double le = std::log10(std::max(e, std::pow(10.0, l0)));
        return T + (H - T - B) * (1.0 - (le - l0) / (l1 - l0));
    };
    char buf[256];
    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof buf, "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" stroke=\"black\"/>\n", L, T, W - L - R, H - T - B);
    svg += buf;
    for (int e = static_cast<int>(l0); e <= static_cast<int>(l1); ++e) {
        const double y = py(std::pow(10.0, e));
        std::snprintf(buf, sizeof buf, "<line x1=\"%g\" x2=\"%g\" y1=\"%g\" y2=\"%g\" stroke=\"#ddd\"/><text x=\"%g\" y=\"%g\" text-anchor=\"end\">1e%d</text>\n",
                      L, W - R, y, y, L - 6, y + 4, e);
        svg += buf;
    }
    for (Index n = 1; n <= nmax; n += std::max<Index>(1, nmax / 10)) {
        std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">%ld</text>\n", px(double(n)), H - B + 16, static_cast<long>(n));
        svg += buf;
    }
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">reduced basis size</text>\n", L + (W - L - R) / 2, H - 12);
    svg += buf;
    std::snprintf(buf, sizeof buf, "<text x=\"16\" y=\"%g\" transform=\"rotate(-90 16 %g)\" text-anchor=\"middle\">mean relative test error</text>\n",
                  T + (H - T - B) / 2, T + (H - T - B) / 2);
    svg += buf;
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
    for (std::size_t c = 0; c < r.curves.size(); ++c) {
        const auto& [label, pts] = r.curves[c];
        std::string path, energy;
        for (const CurvePoint& p : pts) {
            std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", path.empty() ? "" : " ", px(double(p.size)), py(p.test_error));
            path += buf;
            if (p.energy_error) {
                std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", energy.empty() ? "" : " ", px(double(p.size)), py(*p.energy_error));
                energy += buf;
            }
        }
        std::snprintf(buf, sizeof buf, "<polyline fill=\"none\" stroke=\"%s\" stroke-width=\"2\" points=\"", colors[c % 5]);
        svg += buf + path + "\"/>\n";
        if (!energy.empty()) {
            std::snprintf(buf, sizeof buf, "<polyline fill=\"none\" stroke=\"%s\" stroke-width=\"1.5\" stroke-dasharray=\"5,4\" points=\"",
                          colors[c % 5]);
            svg += buf + energy + "\"/>\n";
        }
        std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" fill=\"%s\">", W - R + 8, T + 16 + 16.0 * double(c), colors[c % 5]);
        svg += buf + xml_escape(label) + "</text>\n";
    }
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\">solid: L2</text><text x=\"%g\" y=\"%g\">dashed: energy norm</text>\n",
                  W - R + 8, H - B - 20, W - R + 8, H - B - 4);
    return svg + buf + "</svg>\n";
}

std::string render_grid_pair_svg(const Vector& left, const Vector& right, Index n, const std::string& left_title,
                                 const std::string& right_title) {
    if (n <= 0 || left.size() != n * n || right.size() != n * n) throw ConfigError("render_grid_pair_svg: field size is not n*n");
    const auto [lo, hi] = joint_range(left, right);
    const double cell = std::max(1.0, 300.0 / double(n)), side = cell * double(n);
    char buf[200];
    std::snprintf(buf, sizeof buf, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" height=\"%g\" font-family=\"sans-serif\" font-size=\"12\" shape-rendering=\"crispEdges\">\n",
                  2 * side + 60, side + 60);
    std::string svg = buf;
    const Vector* fields[2] = {&left, &right};
    const std::string* titles[2] = {&left_title, &right_title};
    for (int f = 0; f < 2; ++f) {
        const double x0 = 20 + f * (side + 20);
        std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"20\">", x0);
        svg += buf + xml_escape(*titles[f]) + "</text>\n";
        for (Index j = 0; j < n; ++j)
            for (Index i = 0; i < n; ++i) {
                const double v = (*fields[f])(j * n + i);
                std::snprintf(buf, sizeof buf, "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"%s\"/>\n",
                              x0 + cell * double(i), 30 + cell * double(n - 1 - j), cell, cell, ramp((v - lo) / (hi - lo)).c_str());
                svg += buf;
            }
    }
    std::snprintf(buf, sizeof buf, "<text x=\"20\" y=\"%g\">range [%.3e, %.3e]</text>\n", side + 50, lo, hi);
    return svg + buf + "</svg>\n";
}

std::string render_mesh_pair_svg(const TriMesh& mesh, const Vector& left, const Vector& right,
                                 const std::string& left_title, const std::string& right_title) {
    const Index nv = mesh.vertices.cols();
    if (left.size() != nv || right.size() != nv) throw ConfigError("render_mesh_pair_svg: field size does not match the mesh");
    const auto [lo, hi] = joint_range(left, right);
    const double xmin = mesh.vertices.row(0).minCoeff(), xmax = mesh.vertices.row(0).maxCoeff();
    const double ymin = mesh.vertices.row(1).minCoeff(), ymax = mesh.vertices.row(1).maxCoeff();
    const double span = std::max({xmax - xmin, ymax - ymin, 1e-300}), side = 300.0, s = side / span;
    char buf[220];
    std::snprintf(buf, sizeof buf, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" height=\"%g\" font-family=\"sans-serif\" font-size=\"12\">\n",
                  2 * side + 60, side + 60);
    std::string svg = buf;
    const Vector* fields[2] = {&left, &right};
    const std::string* titles[2] = {&left_title, &right_title};
    for (int f = 0; f < 2; ++f) {
        const double x0 = 20 + f * (side + 20);
        std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"20\">", x0);
        svg += buf + xml_escape(*titles[f]) + "</text>\n";
        for (const auto& t : mesh.triangles) {
            const double v = ((*fields[f])(t[0]) + (*fields[f])(t[1]) + (*fields[f])(t[2])) / 3.0;
            std::string pts;
            for (Index k : t) {
                std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", pts.empty() ? "" : " ", x0 + s * (mesh.vertices(0, k) - xmin),
                              30 + side - s * (mesh.vertices(1, k) - ymin));
                pts += buf;
            }
            const std::string color = ramp((v - lo) / (hi - lo));
            svg += "<polygon points=\"" + pts + "\" fill=\"" + color + "\" stroke=\"" + color + "\" stroke-width=\"0.3\"/>\n";
        }
    }
    std::snprintf(buf, sizeof buf, "<text x=\"20\" y=\"%g\">range [%.3e, %.3e]</text>\n", side + 50, lo, hi);
    return svg + buf + "</svg>\n";
}

}  // namespace romkit
