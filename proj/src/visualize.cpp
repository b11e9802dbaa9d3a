#include "wmlab/visualize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>

#include "wmlab/errors.hpp"

namespace wmlab {
namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

// Number of code points; invalid bytes count as one each.
std::size_t display_length(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s)
    if ((c & 0xC0) != 0x80) ++n;
  return n;
}

struct PlacedToken {
  double x = 0, width = 0;
  std::size_t line = 0;
};

struct Layout {
  std::vector<PlacedToken> tokens;
  std::size_t lines = 0;
};

// Greedy fill with an estimated glyph advance of 0.6 * font size.
Layout lay_out(const VisualizationData& data, const VisualSettings& s) {
  const double advance = 0.6 * s.font.size;
  const double right = s.page_layout.width - s.page_layout.margin;
  Layout out;
  double x = s.page_layout.margin;
  std::size_t line = 0, on_line = 0;
  for (const auto& tok : data.decoded_tokens) {
    const double w = advance * static_cast<double>(display_length(tok));
    const bool full_width = on_line > 0 && x + w > right;
    const bool full_count = s.page_layout.max_tokens_per_line > 0 &&
                            on_line >= s.page_layout.max_tokens_per_line;
    if (full_width || full_count) {
      ++line;
      on_line = 0;
      x = s.page_layout.margin;
    }
    out.tokens.push_back({x, w, line});
    x += w + advance;
    ++on_line;
  }
  out.lines = data.decoded_tokens.empty() ? 0 : line + 1;
  return out;
}

enum class Mode { kDiscrete, kContinuous };

std::string render(const VisualizationData& data, const VisualSettings& s,
                   Mode mode) {
  s.validate();
  if (data.highlights.size() != data.decoded_tokens.size())
    throw DataError("visualization data: token and highlight counts differ");
  for (const auto& h : data.highlights) {
    if (mode == Mode::kDiscrete && std::holds_alternative<Continuous>(h))
      throw TypeMismatch("discrete visualizer given a continuous highlight");
    if (mode == Mode::kContinuous && std::holds_alternative<Discrete>(h))
      throw TypeMismatch("continuous visualizer given a discrete highlight");
    if (const auto* c = std::get_if<Continuous>(&h);
        c && !(c->value >= 0.0 && c->value <= 1.0))
      throw DataError("continuous highlight outside [0,1]");
  }

  const auto& lay = s.page_layout;
  const auto& cs = s.color_scheme;
  const Layout layout = lay_out(data, s);
  const double text_bottom = lay.margin + static_cast<double>(layout.lines) * lay.line_height;
  const double legend_h = s.legend.show ? 1.5 * lay.line_height : 0.0;
  const double height = text_bottom + legend_h + lay.margin;

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\""
    << fmt(lay.width) << "\" height=\"" << fmt(height) << "\" viewBox=\"0 0 "
    << fmt(lay.width) << ' ' << fmt(height) << "\">\n";
  if (mode == Mode::kContinuous && s.legend.show) {
    o << "<defs><linearGradient id=\"alignment\" x1=\"0\" x2=\"1\" y1=\"0\" y2=\"0\">"
      << "<stop offset=\"0\" stop-color=\"" << cs.light.hex() << "\"/>"
      << "<stop offset=\"1\" stop-color=\"" << cs.dark.hex() << "\"/>"
      << "</linearGradient></defs>\n";
  }
  o << "<rect class=\"background\" x=\"0\" y=\"0\" width=\"" << fmt(lay.width)
    << "\" height=\"" << fmt(height) << "\" fill=\"" << cs.background.hex() << "\"/>\n";
  o << "<g font-family=\"" << xml_escape(s.font.family) << "\" font-size=\""
    << fmt(s.font.size) << "\">\n";

  for (std::size_t i = 0; i < data.size(); ++i) {
    const PlacedToken& p = layout.tokens[i];
    const double top = lay.margin + static_cast<double>(p.line) * lay.line_height;
    const auto& h = data.highlights[i];
    std::optional<Rgb> fill;
    if (const auto* d = std::get_if<Discrete>(&h))
      fill = *d == Discrete::kGreen ? cs.green : cs.red;
    else if (const auto* c = std::get_if<Continuous>(&h))
      fill = interpolate(cs.light, cs.dark, c->value);
    if (fill) {
      o << "<rect class=\"tok\" x=\"" << fmt(p.x - 1.0) << "\" y=\"" << fmt(top + 2.0)
        << "\" width=\"" << fmt(p.width + 2.0) << "\" height=\""
        << fmt(lay.line_height - 4.0) << "\" fill=\"" << fill->hex() << "\"/>\n";
    }
    const Rgb ink = fill ? cs.text : cs.unscored_text;
    o << "<text x=\"" << fmt(p.x) << "\" y=\"" << fmt(top + 0.7 * lay.line_height)
      << "\" fill=\"" << ink.hex() << "\">" << xml_escape(data.decoded_tokens[i])
      << "</text>\n";
  }
  o << "</g>\n";

  if (s.legend.show) {
    const double y = text_bottom + 0.25 * lay.line_height;
    const double sw = lay.line_height - 8.0;
    const double text_y = y + 0.75 * sw;
    const double advance = 0.6 * s.font.size;
    o << "<g class=\"legend\" font-family=\"" << xml_escape(s.font.family)
      << "\" font-size=\"" << fmt(s.font.size) << "\">\n";
    if (mode == Mode::kDiscrete) {
      double x = lay.margin;
      for (const auto& [color, label] :
           {std::pair{cs.green, s.legend.green_label}, std::pair{cs.red, s.legend.red_label}}) {
        o << "<rect class=\"legend\" x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\""
          << fmt(sw) << "\" height=\"" << fmt(sw) << "\" fill=\"" << color.hex() << "\"/>\n";
        o << "<text x=\"" << fmt(x + sw + 6.0) << "\" y=\"" << fmt(text_y) << "\" fill=\""
          << cs.text.hex() << "\">" << xml_escape(label) << "</text>\n";
        x += sw + 6.0 + advance * static_cast<double>(display_length(label)) + 24.0;
      }
    } else {
      const double low_w = advance * static_cast<double>(display_length(s.legend.low_label));
      const double bar_x = lay.margin + low_w + 8.0;
      const double bar_w = 8.0 * sw;
      o << "<text x=\"" << fmt(lay.margin) << "\" y=\"" << fmt(text_y) << "\" fill=\""
        << cs.text.hex() << "\">" << xml_escape(s.legend.low_label) << "</text>\n";
      o << "<rect class=\"legend\" x=\"" << fmt(bar_x) << "\" y=\"" << fmt(y) << "\" width=\""
        << fmt(bar_w) << "\" height=\"" << fmt(sw) << "\" fill=\"url(#alignment)\"/>\n";
      o << "<text x=\"" << fmt(bar_x + bar_w + 8.0) << "\" y=\"" << fmt(text_y)
        << "\" fill=\"" << cs.text.hex() << "\">" << xml_escape(s.legend.high_label)
        << "</text>\n";
    }
    o << "</g>\n";
  }
  o << "</svg>\n";
  return o.str();
}

Rgb color_field(const nlohmann::json& obj, const std::string& key, Rgb fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_string()) throw ConfigError("color_scheme." + key, "expected a hex string");
  return Rgb::parse(it->get<std::string>(), "color_scheme." + key);
}

void reject_unknown(const nlohmann::json& obj, const std::string& prefix,
                    std::initializer_list<std::string_view> known) {
  if (!obj.is_object()) throw ConfigError(prefix, "expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError(prefix.empty() ? key : prefix + "." + key, "unknown key");
  }
}

template <typename T>
T field(const nlohmann::json& obj, const std::string& prefix, const std::string& key,
        T fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(prefix + "." + key, "wrong type");
  }
}

}  // namespace

Rgb Rgb::parse(std::string_view hex, const std::string& key) {
  auto bad = [&] { return ConfigError(key, "expected #RRGGBB, got \"" + std::string(hex) + "\""); };
  if (hex.size() != 7 || hex[0] != '#') throw bad();
  auto nibble = [&](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw bad();
  };
  auto byte = [&](std::size_t i) {
    return static_cast<std::uint8_t>(nibble(hex[i]) * 16 + nibble(hex[i + 1]));
  };
  return {byte(1), byte(3), byte(5)};
}

std::string Rgb::hex() const {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02X%02X%02X", r, g, b);
  return buf;
}

Rgb interpolate(Rgb light, Rgb dark, double t) {
  t = std::clamp(t, 0.0, 1.0);
  auto ch = [t](std::uint8_t a, std::uint8_t b) {
    const double v = a + (static_cast<double>(b) - a) * t;
    return static_cast<std::uint8_t>(std::floor(v + 0.5));
  };
  return {ch(light.r, dark.r), ch(light.g, dark.g), ch(light.b, dark.b)};
}

void VisualSettings::validate() const {
  if (!(font.size > 0)) throw ConfigError("font.size", "must be positive");
  if (font.family.empty()) throw ConfigError("font.family", "must not be empty");
  if (!(page_layout.width > 0)) throw ConfigError("page_layout.width", "must be positive");
  if (!(page_layout.margin >= 0) || 2 * page_layout.margin >= page_layout.width)
    throw ConfigError("page_layout.margin", "must be non-negative and leave room for text");
  if (!(page_layout.line_height > 4))
    throw ConfigError("page_layout.line_height", "must exceed 4");
}

VisualSettings VisualSettings::from_json(const nlohmann::json& j) {
  VisualSettings s;
  reject_unknown(j, "", {"color_scheme", "font", "page_layout", "legend"});
  if (auto it = j.find("color_scheme"); it != j.end()) {
    reject_unknown(*it, "color_scheme",
                   {"green", "red", "light", "dark", "text", "unscored_text", "background"});
    auto& c = s.color_scheme;
    c.green = color_field(*it, "green", c.green);
    c.red = color_field(*it, "red", c.red);
    c.light = color_field(*it, "light", c.light);
    c.dark = color_field(*it, "dark", c.dark);
    c.text = color_field(*it, "text", c.text);
    c.unscored_text = color_field(*it, "unscored_text", c.unscored_text);
    c.background = color_field(*it, "background", c.background);
  }
  if (auto it = j.find("font"); it != j.end()) {
    reject_unknown(*it, "font", {"family", "size"});
    s.font.family = field(*it, "font", "family", s.font.family);
    s.font.size = field(*it, "font", "size", s.font.size);
  }
  if (auto it = j.find("page_layout"); it != j.end()) {
    reject_unknown(*it, "page_layout", {"width", "margin", "line_height", "max_tokens_per_line"});
    auto& p = s.page_layout;
    p.width = field(*it, "page_layout", "width", p.width);
    p.margin = field(*it, "page_layout", "margin", p.margin);
    p.line_height = field(*it, "page_layout", "line_height", p.line_height);
    p.max_tokens_per_line =
        field(*it, "page_layout", "max_tokens_per_line", p.max_tokens_per_line);
  }
  if (auto it = j.find("legend"); it != j.end()) {
    reject_unknown(*it, "legend",
                   {"show", "green_label", "red_label", "low_label", "high_label"});
    auto& l = s.legend;
    l.show = field(*it, "legend", "show", l.show);
    l.green_label = field(*it, "legend", "green_label", l.green_label);
    l.red_label = field(*it, "legend", "red_label", l.red_label);
    l.low_label = field(*it, "legend", "low_label", l.low_label);
    l.high_label = field(*it, "legend", "high_label", l.high_label);
  }
  s.validate();
  return s;
}

std::string xml_escape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (c < 0x80) {
      switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        case '\'': out += "&apos;"; break;
        default:
          // Control characters are not representable in XML 1.0.
          if (c < 0x20 && c != '\t' && c != '\n' && c != '\r') out += '?';
          else out += static_cast<char>(c);
      }
      ++i;
      continue;
    }
    // Copy a well-formed UTF-8 sequence, replace anything else.
    std::size_t len = (c >= 0xF0 && c <= 0xF4) ? 4 : (c >= 0xE0) ? 3 : (c >= 0xC2 && c < 0xE0) ? 2 : 0;
    bool ok = len > 0 && i + len <= text.size();
    for (std::size_t k = 1; ok && k < len; ++k)
      ok = (static_cast<unsigned char>(text[i + k]) & 0xC0) == 0x80;
    if (ok) {
      out.append(text.substr(i, len));
      i += len;
    } else {
      out += '?';
      ++i;
    }
  }
  return out;
}

std::string visualize_discrete(const VisualizationData& data,
                               const VisualSettings& settings) {
  return render(data, settings, Mode::kDiscrete);
}

std::string visualize_continuous(const VisualizationData& data,
                                 const VisualSettings& settings) {
  return render(data, settings, Mode::kContinuous);
}

std::string wrap_html(std::string_view svg, std::string_view title) {
  std::string body(svg);
  if (body.rfind("<?xml", 0) == 0) body.erase(0, body.find('\n') + 1);
  std::string out = "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>";
  out += xml_escape(title);
  out += "</title>\n</head>\n<body>\n";
  out += body;
  out += "</body>\n</html>\n";
  return out;
}

}  // namespace wmlab
