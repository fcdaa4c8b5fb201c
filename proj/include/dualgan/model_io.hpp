#pragma once

#include <string>

#include "dualgan/detectors.hpp"

namespace dualgan::data_io {

// Single-document JSON model format with a format_version and content checksum.
void save_model(const detectors::TrainedModel& model, const std::string& path);
detectors::TrainedModel load_model(const std::string& path);

std::string model_to_json(const detectors::TrainedModel& model);
detectors::TrainedModel model_from_json(const std::string& text);

std::string report_to_json(const detectors::FitReport& report, bool include_timings = false);
void save_report(const detectors::FitReport& report, const std::string& path,
                 bool include_timings = false);

}  // namespace dualgan::data_io
