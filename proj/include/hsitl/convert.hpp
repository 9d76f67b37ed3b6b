#pragma once

#include <cstdint>
#include <string>

namespace hsitl {

/// Ingests flat CSV rows "y,x,band,value" (optional header) into an HSIC
/// cube. Zero dims mean "infer from the data" (max index + 1); explicit dims
/// reject out-of-range rows. Every cell must appear exactly once.
void convert_cube_csv(const std::string& csv_path, const std::string& out_path,
                      uint32_t height = 0, uint32_t width = 0, uint32_t bands = 0);

/// Ingests rows "y,x,label" into an HSIL label map; unlisted pixels stay 0
/// (unlabeled). Class ids must form a contiguous 1..C range.
void convert_labels_csv(const std::string& csv_path, const std::string& out_path,
                        uint32_t height = 0, uint32_t width = 0);

}  // namespace hsitl
