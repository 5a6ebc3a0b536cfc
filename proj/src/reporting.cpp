#include "mfgtorus/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

namespace mfg {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

std::ofstream open_out(const fs::path& path) {
    fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open output file: " + path.string());
    return os;
}

}  // namespace

void write_field_csv(const fs::path& path, const CharacteristicField& field) {
    auto os = open_out(path);
    const std::size_t d = field.setup.mu.dim();
    os << "k,t,point_id,kind";
    for (std::size_t c = 0; c < d; ++c) os << ",sigma1_" << c;
    for (std::size_t c = 0; c < d; ++c) os << ",sigma2_" << c;
    os << "\n";
    for (int k = 0; k <= field.K(); ++k) {
        for (std::size_t pt = 0; pt < field.n_points(); ++pt) {
            os << k << "," << format_double(field.t(k)) << "," << pt << ","
               << (pt < field.n_particles() ? "particle" : "query");
            for (std::size_t c = 0; c < d; ++c)
                os << "," << format_double(field.sigma1[k][pt][c]);
            for (std::size_t c = 0; c < d; ++c)
                os << "," << format_double(field.sigma2[k][pt][c]);
            os << "\n";
        }
    }
}

void write_solution_csv(const fs::path& path, const MfgSolution& sol) {
    auto os = open_out(path);
    const std::size_t d = sol.lattice.d;
    os << "k,t,point_id,kind";
    for (std::size_t c = 0; c < d; ++c) os << ",sigma1_" << c;
    for (std::size_t c = 0; c < d; ++c) os << ",sigma2_" << c;
    os << ",U\n";
    for (int k = 0; k <= sol.field.K(); ++k) {
        for (std::size_t j = 0; j < sol.lattice.size(); ++j) {
            const std::size_t row = sol.field.query_index(j);
            os << k << "," << format_double(sol.field.t(k)) << "," << row << ",query";
            for (std::size_t c = 0; c < d; ++c)
                os << "," << format_double(sol.field.sigma1[k][row][c]);
            for (std::size_t c = 0; c < d; ++c)
                os << "," << format_double(sol.field.sigma2[k][row][c]);
            os << "," << format_double(sol.U[k][j]) << "\n";
        }
    }
}

void write_residuals_csv(const fs::path& path, const std::vector<ResidualRow>& rows) {
    auto os = open_out(path);
    os << "check_name,refinement_level,K,m,value\n";
    for (const auto& r : rows)
        os << r.check << "," << r.level << "," << r.K << "," << r.m << ","
           << format_double(r.value) << "\n";
}

void write_convergence_csv(const fs::path& path, const std::vector<ConvergenceRow>& rows) {
    auto os = open_out(path);
    os << "check,level,value,ratio_to_previous\n";
    for (const auto& r : rows) {
        os << r.check << "," << r.level << "," << format_double(r.value) << ",";
        if (r.ratio_to_previous > 0.0) os << format_double(r.ratio_to_previous);
        os << "\n";
    }
}

void write_svg_chart(const fs::path& path, const std::string& title,
                     const std::vector<double>& values) {
    auto os = open_out(path);
    const int width = 640, height = 480, margin = 60;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
       << height << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
       << title << "</text>\n";
    // axes
    os << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin
       << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
       << height - margin << "\" stroke=\"black\"/>\n";
    if (!values.empty()) {
        std::vector<double> logs(values.size());
        for (std::size_t i = 0; i < values.size(); ++i)
            logs[i] = std::log10(std::max(values[i], 1e-300));
        double lo = *std::min_element(logs.begin(), logs.end());
        double hi = *std::max_element(logs.begin(), logs.end());
        if (hi - lo < 1e-12) {
            lo -= 0.5;
            hi += 0.5;
        }
        auto xpos = [&](std::size_t i) {
            if (values.size() == 1) return static_cast<double>(width) / 2.0;
            return margin + (width - 2.0 * margin) * static_cast<double>(i) /
                                static_cast<double>(values.size() - 1);
        };
        auto ypos = [&](double lg) {
            return height - margin - (height - 2.0 * margin) * (lg - lo) / (hi - lo);
        };
        os << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < values.size(); ++i) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", xpos(i), ypos(logs[i]));
            os << buf;
        }
        os << "\"/>\n";
        for (std::size_t i = 0; i < values.size(); ++i) {
            char buf[160];
            std::snprintf(buf, sizeof(buf),
                          "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"steelblue\"/>\n",
                          xpos(i), ypos(logs[i]));
            os << buf;
            std::snprintf(buf, sizeof(buf),
                          "<text x=\"%.2f\" y=\"%d\" text-anchor=\"middle\" font-size=\"12\">%zu"
                          "</text>\n",
                          xpos(i), height - margin + 18, i);
            os << buf;
        }
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%d\" y=\"%.2f\" text-anchor=\"end\" font-size=\"12\">1e%.1f"
                      "</text>\n",
                      margin - 6, ypos(hi), hi);
        os << buf;
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%d\" y=\"%.2f\" text-anchor=\"end\" font-size=\"12\">1e%.1f"
                      "</text>\n",
                      margin - 6, ypos(lo), lo);
        os << buf;
    }
    os << "<text x=\"" << width / 2 << "\" y=\"" << height - 12
       << "\" text-anchor=\"middle\" font-size=\"12\">refinement level</text>\n";
    os << "</svg>\n";
}

void write_manifest(const fs::path& path, const Scenario& sc, const std::string& command,
                    const std::string& status, const std::map<std::string, CheckResult>& checks,
                    const ConvergenceTrace* trace,
                    const std::map<std::string, std::string>& extra) {
    json j;
    j["command"] = command;
    j["status"] = status;
    j["version"] = kVersion;
    j["seed"] = sc.seed;
    j["scenario"] = scenario_echo(sc);
    json jc = json::object();
    for (const auto& [name, res] : checks) {
        jc[name] = {{"value", format_double(res.value)},
                    {"tolerance", format_double(res.tolerance)},
                    {"pass", res.pass}};
    }
    j["checks"] = jc;
    if (trace) {
        j["solver"]["iterations"] = trace->iterations;
        j["solver"]["final_diff"] = format_double(trace->final_diff);
        json ratios = json::array();
        for (double r : trace->ratios) ratios.push_back(format_double(r));
        j["solver"]["ratios"] = ratios;
    }
    for (const auto& [k, v] : extra) j["extra"][k] = v;
    auto os = open_out(path);
    os << j.dump(2) << "\n";
}

void write_run_log(const fs::path& path, double wall_seconds) {
    auto os = open_out(path);
    os << "wall_seconds=" << format_double(wall_seconds) << "\n";
}

}  // namespace mfg
