#pragma once

#include <string>
#include <variant>
#include <vector>

namespace wmlab {

enum class Discrete { kGreen, kRed };

// Alignment strength in [0,1]; larger is darker.
struct Continuous {
  double value = 0.0;
};

// Context warm-up or entropy-gated positions.
struct Unscored {};

using Highlight = std::variant<Discrete, Continuous, Unscored>;

struct VisualizationData {
  std::vector<std::string> decoded_tokens;
  std::vector<Highlight> highlights;

  std::size_t size() const { return decoded_tokens.size(); }
};

}  // namespace wmlab
