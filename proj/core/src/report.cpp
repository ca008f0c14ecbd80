#include "lhb/report.hpp"

#include "lhb/errors.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace lhb {

namespace {

constexpr const char* kResultsHeader =
    "policy,rep,round,episode,strong_instant,strong_cum,regular_instant,regular_cum,err_l2,err_l1,excess_misclass";

std::string optional_cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string{}; }

std::string nan_cell(double v) { return std::isnan(v) ? std::string{} : format_double(v); }

template <class T>
T parse_number(const std::string& cell, std::size_t line, const char* column) {
    T value{};
    const char* end = cell.data() + cell.size();
    const auto [ptr, ec] = std::from_chars(cell.data(), end, value);
    if (cell.empty() || ec != std::errc{} || ptr != end) {
        throw IngestionError("results.csv line " + std::to_string(line) + ": bad value '" + cell + "' in " + column,
                             column, line);
    }
    return value;
}

std::optional<double> parse_optional(const std::string& cell, std::size_t line, const char* column) {
    if (cell.empty()) return std::nullopt;
    return parse_number<double>(cell, line, column);
}

// Mean and standard error (sample sd / sqrt(R)); summation in the given order.
std::pair<double, double> mean_se(const std::vector<double>& v) {
    if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    double sum = 0.0;
    for (double x : v) sum += x;
    const double mean = sum / static_cast<double>(v.size());
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()))};
}

std::vector<std::string> policy_order(const ResultTable& table) {
    std::vector<std::string> order;
    for (const auto& row : table.rows) {
        if (order.empty() || order.back() != row.policy) {
            if (std::find(order.begin(), order.end(), row.policy) == order.end()) order.push_back(row.policy);
        }
    }
    return order;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write '" + path.string() + "'");
    }
    out << content;
    out.flush();
    if (!out) {
        throw std::runtime_error("failed while writing '" + path.string() + "'");
    }
}

std::string fixed(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick_label(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

const char* colour(std::size_t i) {
    static constexpr const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                              "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
    return palette[i % (sizeof palette / sizeof *palette)];
}

struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

// A single line chart panel with its own axes, placed at (ox, oy).
void panel(std::ostringstream& svg, double ox, double oy, double w, double h, const std::string& title,
           const std::string& xlabel, const std::string& ylabel, const std::vector<Series>& series) {
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = 0.0, ymax = -std::numeric_limits<double>::infinity();
    for (const auto& s : series) {
        for (const auto& [x, y] : s.points) {
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    }
    if (!std::isfinite(xmin)) {
        xmin = 0.0;
        xmax = 1.0;
    }
    if (!(xmax > xmin)) xmax = xmin + 1.0;
    if (!(ymax > ymin)) ymax = ymin + 1.0;
    const double left = ox + 60, top = oy + 30, pw = w - 80, ph = h - 70;
    const auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
    const auto sy = [&](double y) { return top + ph - (y - ymin) / (ymax - ymin) * ph; };

    svg << "<text x=\"" << fixed(left + pw / 2) << "\" y=\"" << fixed(oy + 18)
        << "\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
    svg << "<rect x=\"" << fixed(left) << "\" y=\"" << fixed(top) << "\" width=\"" << fixed(pw) << "\" height=\""
        << fixed(ph) << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double yv = ymin + (ymax - ymin) * k / 4.0;
        const double xv = xmin + (xmax - xmin) * k / 4.0;
        svg << "<text x=\"" << fixed(left - 6) << "\" y=\"" << fixed(sy(yv) + 4)
            << "\" text-anchor=\"end\" font-size=\"10\">" << tick_label(yv) << "</text>\n";
        svg << "<text x=\"" << fixed(sx(xv)) << "\" y=\"" << fixed(top + ph + 14)
            << "\" text-anchor=\"middle\" font-size=\"10\">" << tick_label(xv) << "</text>\n";
    }
    svg << "<text x=\"" << fixed(left + pw / 2) << "\" y=\"" << fixed(top + ph + 32)
        << "\" text-anchor=\"middle\" font-size=\"11\">" << xlabel << "</text>\n";
    svg << "<text x=\"" << fixed(ox + 14) << "\" y=\"" << fixed(top + ph / 2) << "\" text-anchor=\"middle\" "
        << "font-size=\"11\" transform=\"rotate(-90 " << fixed(ox + 14) << " " << fixed(top + ph / 2) << ")\">"
        << ylabel << "</text>\n";
    for (std::size_t i = 0; i < series.size(); ++i) {
        svg << "<polyline fill=\"none\" stroke=\"" << colour(i) << "\" stroke-width=\"1.5\" points=\"";
        bool first = true;
        for (const auto& [x, y] : series[i].points) {
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            svg << (first ? "" : " ") << fixed(sx(x)) << "," << fixed(sy(y));
            first = false;
        }
        svg << "\"/>\n";
        const double ly = top + 14 + 14.0 * static_cast<double>(i);
        svg << "<line x1=\"" << fixed(left + pw - 130) << "\" y1=\"" << fixed(ly - 4) << "\" x2=\""
            << fixed(left + pw - 110) << "\" y2=\"" << fixed(ly - 4) << "\" stroke=\"" << colour(i)
            << "\" stroke-width=\"2\"/>\n";
        svg << "<text x=\"" << fixed(left + pw - 105) << "\" y=\"" << fixed(ly) << "\" font-size=\"10\">"
            << series[i].name << "</text>\n";
    }
}

std::string svg_document(double w, double h, const std::string& body) {
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(w) << "\" height=\"" << fixed(h)
        << "\" font-family=\"sans-serif\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << body << "</svg>\n";
    return out.str();
}

}  // namespace

std::string format_double(double value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    if (ec != std::errc{}) {
        throw std::runtime_error("cannot format floating-point value");
    }
    return {buf, ptr};
}

void write_results_csv(const ResultTable& table, std::ostream& out) {
    out << kResultsHeader << '\n';
    for (const auto& r : table.rows) {
        out << r.policy << ',' << r.rep << ',' << r.round << ',' << r.episode << ',' << format_double(r.strong_instant)
            << ',' << format_double(r.strong_cum) << ',' << format_double(r.regular_instant) << ','
            << format_double(r.regular_cum) << ',' << optional_cell(r.err_l2) << ',' << optional_cell(r.err_l1) << ','
            << optional_cell(r.excess_misclass) << '\n';
    }
}

ResultTable read_results_csv(std::istream& in) {
    ResultTable table;
    std::string line;
    if (!std::getline(in, line) || line != kResultsHeader) {
        throw IngestionError("results.csv: unexpected header");
    }
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            cells.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (cells.size() != 11) {
            throw IngestionError("results.csv line " + std::to_string(lineno) + ": expected 11 fields", {}, lineno);
        }
        ResultRow r;
        r.policy = cells[0];
        r.rep = parse_number<int>(cells[1], lineno, "rep");
        r.round = parse_number<std::uint64_t>(cells[2], lineno, "round");
        r.episode = parse_number<int>(cells[3], lineno, "episode");
        r.strong_instant = parse_number<double>(cells[4], lineno, "strong_instant");
        r.strong_cum = parse_number<double>(cells[5], lineno, "strong_cum");
        r.regular_instant = parse_number<double>(cells[6], lineno, "regular_instant");
        r.regular_cum = parse_number<double>(cells[7], lineno, "regular_cum");
        r.err_l2 = parse_optional(cells[8], lineno, "err_l2");
        r.err_l1 = parse_optional(cells[9], lineno, "err_l1");
        r.excess_misclass = parse_optional(cells[10], lineno, "excess_misclass");
        table.rows.push_back(std::move(r));
    }
    return table;
}

std::vector<SummaryRow> summarize(const ResultTable& table) {
    if (table.rows.empty()) {
        throw ArgumentError("cannot summarize an empty result table");
    }
    // policy -> round -> per-replication values in row order.
    std::map<std::string, std::map<std::uint64_t, std::pair<std::vector<double>, std::vector<double>>>> acc;
    for (const auto& r : table.rows) {
        auto& cell = acc[r.policy][r.round];
        const auto t = static_cast<double>(r.round);
        cell.first.push_back(r.strong_cum / t);
        cell.second.push_back(r.regular_cum / t);
    }
    std::vector<SummaryRow> out;
    for (const auto& policy : policy_order(table)) {
        for (const auto& [round, values] : acc[policy]) {
            const auto [sm, sse] = mean_se(values.first);
            const auto [rm, rse] = mean_se(values.second);
            out.push_back({policy, round, sm, sse, rm, rse});
        }
    }
    return out;
}

void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& out) {
    out << "policy,round,strong_avg_mean,strong_avg_se,regular_avg_mean,regular_avg_se\n";
    for (const auto& r : rows) {
        out << r.policy << ',' << r.round << ',' << format_double(r.strong_mean) << ',' << format_double(r.strong_se)
            << ',' << format_double(r.regular_mean) << ',' << format_double(r.regular_se) << '\n';
    }
}

std::vector<EpisodeRow> summarize_episodes(const ResultTable& table) {
    if (table.rows.empty()) {
        throw ArgumentError("cannot summarize an empty result table");
    }
    struct Acc {
        std::uint64_t first = std::numeric_limits<std::uint64_t>::max();
        std::uint64_t last = 0;
        // per replication: sums within the episode, count, running averages at its end
        std::map<int, std::array<double, 5>> per_rep;
        std::vector<double> err;
        std::vector<double> excess;
    };
    std::map<std::string, std::map<int, Acc>> acc;
    for (const auto& r : table.rows) {
        Acc& a = acc[r.policy][r.episode];
        a.first = std::min(a.first, r.round);
        a.last = std::max(a.last, r.round);
        auto& rep = a.per_rep[r.rep];
        rep[0] += r.strong_instant;
        rep[1] += r.regular_instant;
        rep[2] += 1.0;
        rep[3] = r.strong_cum / static_cast<double>(r.round);
        rep[4] = r.regular_cum / static_cast<double>(r.round);
        if (r.err_l2) a.err.push_back(*r.err_l2);
        if (r.excess_misclass) a.excess.push_back(*r.excess_misclass);
    }
    std::vector<EpisodeRow> out;
    for (const auto& policy : policy_order(table)) {
        for (const auto& [episode, a] : acc[policy]) {
            std::vector<double> s, g, se, ge;
            for (const auto& [rep, v] : a.per_rep) {
                s.push_back(v[0] / v[2]);
                g.push_back(v[1] / v[2]);
                se.push_back(v[3]);
                ge.push_back(v[4]);
            }
            EpisodeRow row;
            row.policy = policy;
            row.episode = episode;
            row.first_round = a.first;
            row.last_round = a.last;
            row.strong_mean = mean_se(s).first;
            row.regular_mean = mean_se(g).first;
            row.strong_avg_end = mean_se(se).first;
            row.regular_avg_end = mean_se(ge).first;
            std::tie(row.err_l2_mean, row.err_l2_se) = mean_se(a.err);
            row.excess_mean = mean_se(a.excess).first;
            out.push_back(row);
        }
    }
    return out;
}

void write_episodes_csv(const std::vector<EpisodeRow>& rows, std::ostream& out) {
    out << "policy,episode,first_round,last_round,strong_mean,regular_mean,strong_avg_end,regular_avg_end,"
           "err_l2_mean,err_l2_se,excess_misclass_mean\n";
    for (const auto& r : rows) {
        out << r.policy << ',' << r.episode << ',' << r.first_round << ',' << r.last_round << ','
            << format_double(r.strong_mean) << ',' << format_double(r.regular_mean) << ','
            << format_double(r.strong_avg_end) << ',' << format_double(r.regular_avg_end) << ','
            << nan_cell(r.err_l2_mean) << ',' << nan_cell(r.err_l2_se) << ',' << nan_cell(r.excess_mean) << '\n';
    }
}

void write_checksums_csv(const ResultTable& table, std::ostream& out) {
    out << "policy,rep,seed,stream_checksum,warnings\n";
    for (const auto& c : table.cells) {
        char hex[32];
        std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(c.checksum));
        out << c.policy << ',' << c.rep << ',' << c.seed << ',' << hex << ',' << c.warnings.size() << '\n';
    }
}

std::string regret_svg(const std::vector<SummaryRow>& summary) {
    std::vector<std::string> order;
    for (const auto& r : summary) {
        if (std::find(order.begin(), order.end(), r.policy) == order.end()) order.push_back(r.policy);
    }
    std::uint64_t max_round = 1;
    for (const auto& r : summary) max_round = std::max(max_round, r.round);
    // At most ~400 points per series keeps the file small.
    const std::uint64_t stride = std::max<std::uint64_t>(1, max_round / 400);

    std::vector<Series> strong, regular;
    for (const auto& name : order) {
        Series s{name, {}}, g{name, {}};
        for (const auto& r : summary) {
            if (r.policy != name) continue;
            if (r.round % stride != 0 && r.round != max_round && r.round != 1) continue;
            s.points.emplace_back(static_cast<double>(r.round), r.strong_mean);
            g.points.emplace_back(static_cast<double>(r.round), r.regular_mean);
        }
        strong.push_back(std::move(s));
        regular.push_back(std::move(g));
    }
    std::ostringstream body;
    panel(body, 0, 0, 520, 380, "Average strong regret", "round", "Reg*(t) / t", strong);
    panel(body, 520, 0, 520, 380, "Average regular regret", "round", "Reg~(t) / t", regular);
    return svg_document(1040, 380, body.str());
}

std::string error_svg(const std::vector<EpisodeRow>& episodes) {
    std::vector<Series> series;
    for (const auto& r : episodes) {
        if (std::isnan(r.err_l2_mean)) continue;
        auto it = std::find_if(series.begin(), series.end(), [&](const Series& s) { return s.name == r.policy; });
        if (it == series.end()) {
            series.push_back({r.policy, {}});
            it = std::prev(series.end());
        }
        it->points.emplace_back(static_cast<double>(r.first_round), r.err_l2_mean);
    }
    std::ostringstream body;
    panel(body, 0, 0, 560, 380, "Estimation error at episode starts", "round", "l2 error (label-swap min)", series);
    return svg_document(560, 380, body.str());
}

void emit_outputs(const ResultTable& table, const std::string& dir) {
    if (table.rows.empty()) {
        throw ArgumentError("emit_outputs: the result table is empty");
    }
    const std::filesystem::path root(dir);
    std::error_code ec;
    std::filesystem::create_directories(root, ec);
    if (ec) {
        throw std::runtime_error("cannot create output directory '" + dir + "': " + ec.message());
    }
    const auto summary = summarize(table);
    const auto episodes = summarize_episodes(table);

    std::ostringstream results, summary_csv, episodes_csv, checksums;
    write_results_csv(table, results);
    write_summary_csv(summary, summary_csv);
    write_episodes_csv(episodes, episodes_csv);
    write_checksums_csv(table, checksums);
    write_file(root / "results.csv", results.str());
    write_file(root / "summary.csv", summary_csv.str());
    write_file(root / "episodes.csv", episodes_csv.str());
    write_file(root / "checksums.csv", checksums.str());
    write_file(root / "regret.svg", regret_svg(summary));
    write_file(root / "error.svg", error_svg(episodes));
}

}  // namespace lhb
