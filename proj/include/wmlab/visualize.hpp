#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "json.hpp"
#include "wmlab/visualization_data.hpp"

namespace wmlab {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;

  // "#RRGGBB"; throws ConfigError(key) on anything else.
  static Rgb parse(std::string_view hex, const std::string& key = "color");
  std::string hex() const;

  bool operator==(const Rgb&) const = default;
};

// Per-channel linear sRGB blend, rounded half up. t is clamped to [0,1].
Rgb interpolate(Rgb light, Rgb dark, double t);

struct ColorScheme {
  Rgb green{0xA6, 0xE3, 0xA1};
  Rgb red{0xF4, 0xA7, 0xA7};
  Rgb light{0xFF, 0xF5, 0xEB};  // continuous value 0
  Rgb dark{0xD9, 0x48, 0x01};   // continuous value 1
  Rgb text{0x1A, 0x1A, 0x1A};
  Rgb unscored_text{0x8C, 0x8C, 0x8C};
  Rgb background{0xFF, 0xFF, 0xFF};
};

struct FontSettings {
  std::string family = "DejaVu Sans Mono, monospace";
  double size = 14.0;  // points, one point per SVG user unit
};

struct PageLayoutSettings {
  double width = 800.0;
  double margin = 20.0;
  double line_height = 26.0;
  std::size_t max_tokens_per_line = 0;  // 0 = limited by width only
};

struct LegendSettings {
  bool show = true;
  std::string green_label = "green token";
  std::string red_label = "red token";
  std::string low_label = "weak alignment";
  std::string high_label = "strong alignment";
};

struct VisualSettings {
  ColorScheme color_scheme;
  FontSettings font;
  PageLayoutSettings page_layout;
  LegendSettings legend;

  void validate() const;
  // Partial objects override defaults; unknown keys are a ConfigError.
  static VisualSettings from_json(const nlohmann::json& j);
};

std::string xml_escape(std::string_view text);

// Green/red token backgrounds. Throws TypeMismatch on Continuous values.
std::string visualize_discrete(const VisualizationData& data,
                               const VisualSettings& settings = {});

// Light-to-dark gradient fills. Throws TypeMismatch on Discrete values.
std::string visualize_continuous(const VisualizationData& data,
                                 const VisualSettings& settings = {});

// Single-file HTML page embedding the SVG.
std::string wrap_html(std::string_view svg, std::string_view title);

}  // namespace wmlab
