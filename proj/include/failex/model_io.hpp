#pragma once

#include <filesystem>

#include <json.hpp>

#include "failex/network.hpp"

namespace failex {

inline constexpr int kModelFormatVersion = 1;

/// Versioned JSON: vocabulary, dimensions, representation parameters
/// (embeddings, query, key, theta, sigma_raw) and LSTM plus output head.
/// Matrices are row-major arrays of rows.
nlohmann::json model_to_json(const Model& model);

/// Throws ValidationError on a version or shape mismatch.
Model model_from_json(const nlohmann::json& doc);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

nlohmann::json metrics_to_json(const Metrics& metrics);

}  // namespace failex
