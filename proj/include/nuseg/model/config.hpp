#pragma once

#include <json.hpp>

#include <string>
#include <vector>

namespace nuseg {

enum class Normalization { kInstance, kBatch };

inline std::string to_string(Normalization n) {
  return n == Normalization::kInstance ? "instance" : "batch";
}

inline Normalization normalization_from_string(const std::string& s) {
  if (s == "instance") return Normalization::kInstance;
  if (s == "batch") return Normalization::kBatch;
  throw std::invalid_argument("unknown normalization '" + s + "' (expected instance|batch)");
}

/// One U-shaped block: nesting depth, channel triple, and the dilated
/// (resolution-preserving) variant switch.
struct RsuConfig {
  int depth = 2;
  int in_channels = 1;
  int mid_channels = 1;
  int out_channels = 1;
  bool dilated = false;
  std::vector<int> dilation_rates;  // one rate per level when dilated
  double negative_slope = 0.01;
};

/// Network description: six encoder levels (level 1 the dense-skip starting
/// unit, levels 2-5 residual-U stages, level 6 the dilated bottleneck) and
/// four decoder blocks. Spatial scales and channel chaining are derived by
/// validate_config.
struct ModelConfig {
  int num_classes = 1;
  std::vector<RsuConfig> stage_configs;
  std::vector<RsuConfig> decoder_configs;
  int downsample_factor = 2;
  Normalization normalization = Normalization::kInstance;
  int input_divisor = 32;

  // Derived by validate_config.
  std::vector<int> level_scale_divisors;  // per encoder level: 1,2,4,8,16,16
  std::vector<int> decoder_in_channels;
  int head_in_channels = 0;
};

inline constexpr int kEncoderLevels = 6;
inline constexpr int kDecoderBlocks = 4;

/// Checks every structural invariant and fills the derived fields. Reports
/// all violations at once rather than stopping at the first.
inline ModelConfig validate_config(ModelConfig cfg) {
  std::vector<std::string> problems;
  auto complain = [&](std::string msg) { problems.push_back(std::move(msg)); };

  if (cfg.num_classes < 1) complain("num_classes must be >= 1");
  if (cfg.downsample_factor != 2) complain("downsample factor is fixed at 2");
  if (cfg.input_divisor < 1) complain("input_divisor must be >= 1");

  if (static_cast<int>(cfg.stage_configs.size()) != kEncoderLevels)
    complain("encoder level count must be 6, got " + std::to_string(cfg.stage_configs.size()));
  if (static_cast<int>(cfg.decoder_configs.size()) != kDecoderBlocks)
    complain("decoder count must be 4, got " + std::to_string(cfg.decoder_configs.size()));

  auto check_block = [&](const RsuConfig& b, const std::string& where, bool want_dilated) {
    if (b.depth < 2) complain(where + ": depth must be >= 2");
    if (b.in_channels < 1 || b.mid_channels < 1 || b.out_channels < 1)
      complain(where + ": channel counts must be >= 1");
    if (b.negative_slope < 0) complain(where + ": negative_slope must be >= 0");
    if (b.dilated != want_dilated)
      complain(where + (want_dilated ? ": must be dilated" : ": must not be dilated"));
    if (b.dilated) {
      if (static_cast<int>(b.dilation_rates.size()) != b.depth) {
        complain(where + ": dilation_rates malformed: need exactly " + std::to_string(b.depth) +
                 " entries, got " + std::to_string(b.dilation_rates.size()));
      } else {
        if (b.dilation_rates.front() != 1)
          complain(where + ": dilation_rates malformed: first entry must be 1");
        for (size_t i = 1; i < b.dilation_rates.size(); ++i)
          if (b.dilation_rates[i] <= b.dilation_rates[i - 1]) {
            complain(where + ": dilation_rates malformed: must be strictly increasing");
            break;
          }
      }
    }
  };

  if (static_cast<int>(cfg.stage_configs.size()) == kEncoderLevels) {
    for (int i = 0; i < kEncoderLevels; ++i)
      check_block(cfg.stage_configs[i], "stages[" + std::to_string(i) + "]",
                  i == kEncoderLevels - 1);
    if (cfg.stage_configs[0].depth != 2)
      complain("stages[0]: the starting nested unit is two-level; depth must be 2");
    for (int i = 1; i < kEncoderLevels; ++i)
      if (cfg.stage_configs[i].in_channels != cfg.stage_configs[i - 1].out_channels)
        complain("inconsistent channel chaining: stages[" + std::to_string(i) + "].in=" +
                 std::to_string(cfg.stage_configs[i].in_channels) + " but stages[" +
                 std::to_string(i - 1) + "].out=" +
                 std::to_string(cfg.stage_configs[i - 1].out_channels));
  }

  if (static_cast<int>(cfg.decoder_configs.size()) == kDecoderBlocks &&
      static_cast<int>(cfg.stage_configs.size()) == kEncoderLevels) {
    // decoder[0] fuses the bottleneck with the level-5 skip (same scale);
    // each later block consumes the upsampled previous decoder plus the
    // next-shallower encoder skip.
    cfg.decoder_in_channels.assign(kDecoderBlocks, 0);
    for (int d = 0; d < kDecoderBlocks; ++d) {
      check_block(cfg.decoder_configs[d], "decoder[" + std::to_string(d) + "]", false);
      const int incoming = d == 0 ? cfg.stage_configs[5].out_channels
                                  : cfg.decoder_configs[d - 1].out_channels;
      const int skip = cfg.stage_configs[4 - d].out_channels;
      cfg.decoder_in_channels[d] = incoming + skip;
      if (cfg.decoder_configs[d].in_channels != cfg.decoder_in_channels[d])
        complain("inconsistent channel chaining: decoder[" + std::to_string(d) + "].in=" +
                 std::to_string(cfg.decoder_configs[d].in_channels) + " but skip+incoming=" +
                 std::to_string(cfg.decoder_in_channels[d]));
    }
    cfg.head_in_channels = cfg.decoder_configs[kDecoderBlocks - 1].out_channels;
  }

  if (!problems.empty()) {
    std::string msg = "invalid model config:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw std::invalid_argument(msg);
  }

  cfg.level_scale_divisors = {1, 2, 4, 8, 16, 16};
  return cfg;
}

// --- defaults -------------------------------------------------------------

/// Full-scale configuration. The paper fixes the macro structure but not the
/// channel schedule; these widths follow comparable nested-U designs.
inline ModelConfig default_model_config(int num_classes) {
  ModelConfig cfg;
  cfg.num_classes = num_classes;
  const int outs[kEncoderLevels] = {64, 128, 256, 512, 512, 512};
  const int depths[kEncoderLevels] = {2, 5, 4, 3, 2, 4};
  int in = 3;
  for (int i = 0; i < kEncoderLevels; ++i) {
    RsuConfig b;
    b.depth = depths[i];
    b.in_channels = in;
    b.mid_channels = outs[i] / 2;
    b.out_channels = outs[i];
    if (i == kEncoderLevels - 1) {
      b.dilated = true;
      b.dilation_rates = {1, 2, 4, 8};
    }
    cfg.stage_configs.push_back(b);
    in = outs[i];
  }
  const int dec_outs[kDecoderBlocks] = {256, 128, 64, 64};
  const int dec_depths[kDecoderBlocks] = {2, 3, 4, 5};
  int incoming = cfg.stage_configs[5].out_channels;
  for (int d = 0; d < kDecoderBlocks; ++d) {
    RsuConfig b;
    b.depth = dec_depths[d];
    b.in_channels = incoming + cfg.stage_configs[4 - d].out_channels;
    b.mid_channels = dec_outs[d] / 2;
    b.out_channels = dec_outs[d];
    cfg.decoder_configs.push_back(b);
    incoming = dec_outs[d];
  }
  return validate_config(cfg);
}

/// Reduced widths for desk-scale runs and CI; same macro structure.
inline ModelConfig tiny_model_config(int num_classes) {
  ModelConfig cfg;
  cfg.num_classes = num_classes;
  const int outs[kEncoderLevels] = {8, 12, 16, 16, 16, 16};
  const int mids[kEncoderLevels] = {4, 6, 8, 8, 8, 8};
  const int depths[kEncoderLevels] = {2, 5, 4, 3, 2, 4};
  int in = 3;
  for (int i = 0; i < kEncoderLevels; ++i) {
    RsuConfig b;
    b.depth = depths[i];
    b.in_channels = in;
    b.mid_channels = mids[i];
    b.out_channels = outs[i];
    if (i == kEncoderLevels - 1) {
      b.dilated = true;
      b.dilation_rates = {1, 2, 4, 8};
    }
    cfg.stage_configs.push_back(b);
    in = outs[i];
  }
  const int dec_outs[kDecoderBlocks] = {16, 16, 12, 8};
  const int dec_mids[kDecoderBlocks] = {8, 8, 6, 4};
  const int dec_depths[kDecoderBlocks] = {2, 3, 4, 5};
  int incoming = cfg.stage_configs[5].out_channels;
  for (int d = 0; d < kDecoderBlocks; ++d) {
    RsuConfig b;
    b.depth = dec_depths[d];
    b.in_channels = incoming + cfg.stage_configs[4 - d].out_channels;
    b.mid_channels = dec_mids[d];
    b.out_channels = dec_outs[d];
    cfg.decoder_configs.push_back(b);
    incoming = dec_outs[d];
  }
  return validate_config(cfg);
}

// --- JSON serialization ----------------------------------------------------

inline nlohmann::json rsu_config_to_json(const RsuConfig& b) {
  nlohmann::json j{{"depth", b.depth},
                   {"in", b.in_channels},
                   {"mid", b.mid_channels},
                   {"out", b.out_channels},
                   {"dilated", b.dilated},
                   {"negative_slope", b.negative_slope}};
  if (b.dilated) j["dilation_rates"] = b.dilation_rates;
  return j;
}

inline RsuConfig rsu_config_from_json(const nlohmann::json& j) {
  RsuConfig b;
  b.depth = j.at("depth").get<int>();
  b.in_channels = j.at("in").get<int>();
  b.mid_channels = j.at("mid").get<int>();
  b.out_channels = j.at("out").get<int>();
  b.dilated = j.value("dilated", false);
  if (j.contains("dilation_rates")) b.dilation_rates = j["dilation_rates"].get<std::vector<int>>();
  b.negative_slope = j.value("negative_slope", 0.01);
  return b;
}

inline nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& b : cfg.stage_configs) stages.push_back(rsu_config_to_json(b));
  nlohmann::json decoder = nlohmann::json::array();
  for (const auto& b : cfg.decoder_configs) decoder.push_back(rsu_config_to_json(b));
  return nlohmann::json{{"num_classes", cfg.num_classes},
                        {"stages", stages},
                        {"decoder", decoder},
                        {"normalization", to_string(cfg.normalization)},
                        {"input_divisor", cfg.input_divisor}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.num_classes = j.at("num_classes").get<int>();
  for (const auto& b : j.at("stages")) cfg.stage_configs.push_back(rsu_config_from_json(b));
  for (const auto& b : j.at("decoder")) cfg.decoder_configs.push_back(rsu_config_from_json(b));
  cfg.normalization = normalization_from_string(j.value("normalization", "instance"));
  cfg.input_divisor = j.value("input_divisor", 32);
  return validate_config(cfg);
}

}  // namespace nuseg
