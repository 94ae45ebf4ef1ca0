#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <string>
#include <vector>

#include "ccf/error.hpp"

namespace ccf {

/// Column layout of a CESAR1-style capture plant export.
struct PlantSchema {
  std::vector<std::string> input_columns;
  std::vector<std::string> emission_columns;
  std::vector<std::string> performance_columns;
  std::map<std::string, std::string> units;

  std::vector<std::string> output_columns() const {
    auto out = emission_columns;
    out.insert(out.end(), performance_columns.begin(), performance_columns.end());
    return out;
  }

  std::vector<std::string> all_columns() const {
    auto out = input_columns;
    auto outputs = output_columns();
    out.insert(out.end(), outputs.begin(), outputs.end());
    return out;
  }

  bool is_input(const std::string& name) const {
    return std::find(input_columns.begin(), input_columns.end(), name) != input_columns.end();
  }

  bool is_output(const std::string& name) const {
    auto outs = output_columns();
    return std::find(outs.begin(), outs.end(), name) != outs.end();
  }

  void validate() const {
    if (input_columns.size() != 8 || emission_columns.size() != 4 || performance_columns.size() != 4)
      throw Error(ErrorKind::Schema, "plant schema needs 8 input, 4 emission and 4 performance columns");
    auto all = all_columns();
    std::sort(all.begin(), all.end());
    if (std::adjacent_find(all.begin(), all.end()) != all.end())
      throw Error(ErrorKind::Schema, "plant schema column names must be unique");
  }
};

namespace columns {
inline constexpr const char* kFgInletFlow = "fg_inlet_flow";
inline constexpr const char* kFgInletTemp = "fg_inlet_temp";
inline constexpr const char* kLeanSolventFlow = "lean_solvent_flow";
inline constexpr const char* kLeanSolventTemp = "lean_solvent_temp";
inline constexpr const char* kUpperWwFlow = "upper_ww_flow";
inline constexpr const char* kUpperWwTemp = "upper_ww_inlet_temp";
inline constexpr const char* kLowerWwFlow = "lower_ww_flow";
inline constexpr const char* kLowerWwTemp = "lower_ww_inlet_temp";

inline constexpr const char* kAmpFtir = "amp_ftir";
inline constexpr const char* kAmpImrms = "amp_imrms";
inline constexpr const char* kPzFtir = "pz_ftir";
inline constexpr const char* kPzImrms = "pz_imrms";

inline constexpr const char* kCo2ProductFlow = "co2_product_flow";
inline constexpr const char* kAbsOutletTemp = "abs_outlet_temp_before_ww";
inline constexpr const char* kDepletedFgTemp = "depleted_fg_outlet_temp";
inline constexpr const char* kStripperBottomTemp = "rfcc_stripper_bottom_temp";
}  // namespace columns

inline const PlantSchema& cesar1_schema() {
  using namespace columns;
  static const PlantSchema schema{
      {kFgInletFlow, kFgInletTemp, kLeanSolventFlow, kLeanSolventTemp, kUpperWwFlow, kUpperWwTemp, kLowerWwFlow,
       kLowerWwTemp},
      {kAmpFtir, kAmpImrms, kPzFtir, kPzImrms},
      {kCo2ProductFlow, kAbsOutletTemp, kDepletedFgTemp, kStripperBottomTemp},
      {
          {kFgInletFlow, "Sm3/h"},
          {kFgInletTemp, "degC"},
          {kLeanSolventFlow, "kg/h"},
          {kLeanSolventTemp, "degC"},
          {kUpperWwFlow, "kg/h"},
          {kUpperWwTemp, "degC"},
          {kLowerWwFlow, "kg/h"},
          {kLowerWwTemp, "degC"},
          {kAmpFtir, "ppmv"},
          {kAmpImrms, "ppbv"},
          {kPzFtir, "ppmv"},
          {kPzImrms, "ppbv"},
          {kCo2ProductFlow, "kg/h"},
          {kAbsOutletTemp, "degC"},
          {kDepletedFgTemp, "degC"},
          {kStripperBottomTemp, "degC"},
      }};
  return schema;
}

}  // namespace ccf
