#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cdsgd/cli.hpp"
#include "cdsgd/format.hpp"

namespace cdsgd::cli {

void write_metrics_csv(std::ostream& os, const std::vector<IterationRecord>& records) {
  os << kMetricsHeader << '\n';
  for (const auto& r : records) {
    os << r.iter << ',' << r.epoch << ',' << format_double(r.train_loss) << ','
       << format_double(r.grad_norm) << ',' << r.bytes_pushed << ',' << (r.compressed ? 1 : 0)
       << ',' << r.wall_micros << '\n';
  }
}

namespace {

template <class T>
T field(const std::string& cell, std::size_t lineno, const char* name) {
  T v{};
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) {
    throw ConfigError("metrics line " + std::to_string(lineno) + ": bad " + name + " '" + cell +
                      "'");
  }
  return v;
}

}  // namespace

std::vector<IterationRecord> parse_metrics_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kMetricsHeader) {
    throw ConfigError("metrics file does not start with '" + std::string(kMetricsHeader) + "'");
  }
  std::vector<IterationRecord> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) {
      throw ConfigError("metrics line " + std::to_string(lineno) + ": expected 7 columns");
    }
    IterationRecord r;
    r.iter = field<std::uint64_t>(cells[0], lineno, "iter");
    r.epoch = field<std::uint64_t>(cells[1], lineno, "epoch");
    r.train_loss = field<double>(cells[2], lineno, "loss");
    r.grad_norm = field<double>(cells[3], lineno, "grad_norm");
    r.bytes_pushed = field<std::uint64_t>(cells[4], lineno, "bytes");
    const auto c = field<int>(cells[5], lineno, "compressed");
    if (c != 0 && c != 1) {
      throw ConfigError("metrics line " + std::to_string(lineno) + ": compressed must be 0 or 1");
    }
    r.compressed = c == 1;
    r.wall_micros = field<std::uint64_t>(cells[6], lineno, "wall_micros");
    out.push_back(r);
  }
  return out;
}

std::vector<IterationRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  return parse_metrics_csv(in);
}

Curve loss_curve(const std::string& label, const std::vector<IterationRecord>& records) {
  Curve c{label, {}};
  for (const auto& r : records) c.points.emplace_back(static_cast<double>(r.iter), r.train_loss);
  return c;
}

namespace {

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

}  // namespace

std::string render_svg(const std::vector<Curve>& curves, const std::string& title,
                       const std::string& x_label, const std::string& y_label) {
  constexpr double W = 720, H = 440, L = 70, R = 160, T = 40, B = 50;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool any = false, all_positive = true;
  for (const auto& c : curves) {
    for (auto [x, y] : c.points) {
      if (!std::isfinite(y)) continue;
      if (!any) {
        x0 = x1 = x;
        y0 = y1 = y;
        any = true;
      }
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
      if (y <= 0) all_positive = false;
    }
  }
  const bool log_y = any && all_positive;
  auto ty = [&](double y) { return log_y ? std::log10(y) : y; };
  double ly0 = ty(y0), ly1 = ty(y1);
  if (ly1 - ly0 < 1e-12) {
    ly0 -= 0.5;
    ly1 += 0.5;
  }
  if (x1 - x0 < 1e-12) x1 = x0 + 1;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return T + (1.0 - (ty(y) - ly0) / (ly1 - ly0)) * (H - T - B); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << num(W / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
    << escape(title) << "</text>\n";
  s << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\""
    << H - T - B << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4.0;
    const double fy = ly0 + (ly1 - ly0) * i / 4.0;
    const double yv = log_y ? std::pow(10.0, fy) : fy;
    s << "<text x=\"" << num(px(fx)) << "\" y=\"" << num(H - B + 16)
      << "\" text-anchor=\"middle\">" << tick(fx) << "</text>\n";
    s << "<text x=\"" << num(L - 6) << "\" y=\"" << num(py(yv) + 4) << "\" text-anchor=\"end\">"
      << tick(yv) << "</text>\n";
  }
  s << "<text x=\"" << num(L + (W - L - R) / 2) << "\" y=\"" << num(H - 12)
    << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n";
  s << "<text x=\"16\" y=\"" << num(T + (H - T - B) / 2) << "\" text-anchor=\"middle\" "
    << "transform=\"rotate(-90 16 " << num(T + (H - T - B) / 2) << ")\">" << escape(y_label)
    << (log_y ? " (log)" : "") << "</text>\n";

  for (std::size_t i = 0; i < curves.size(); ++i) {
    const char* color = kPalette[i % std::size(kPalette)];
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (auto [x, y] : curves[i].points) {
      if (!std::isfinite(y) || (log_y && y <= 0)) continue;
      s << (first ? "" : " ") << num(px(x)) << ',' << num(py(y));
      first = false;
    }
    s << "\"/>\n";
    const double ly = T + 14 + 18.0 * static_cast<double>(i);
    s << "<line x1=\"" << num(W - R + 12) << "\" y1=\"" << num(ly - 4) << "\" x2=\""
      << num(W - R + 34) << "\" y2=\"" << num(ly - 4) << "\" stroke=\"" << color
      << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << num(W - R + 40) << "\" y=\"" << num(ly) << "\">"
      << escape(curves[i].label) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace cdsgd::cli
