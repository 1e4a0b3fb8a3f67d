#pragma once

#include <filesystem>
#include <string>

#include "aptness/gateway.hpp"
#include "aptness/pipeline.hpp"

namespace aptness {

enum class PredictorKind { kPrompt, kEndpoint };

struct ServiceSettings {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string cors_origin = "*";
  std::filesystem::path journal;
};

// Everything the CLI and the service read from the INI config file. With no
// file every provider is the offline mock.
struct AppConfig {
  llm::ProviderConfig chat;
  llm::ProviderConfig embed;
  llm::ProviderConfig judge;
  llm::ProviderConfig strategy;
  double judge_temperature = 0.0;
  PredictorKind predictor = PredictorKind::kPrompt;
  pipeline::PipelineConfig pipeline;

  std::filesystem::path index_dir;
  std::filesystem::path catalog;  // empty: shipped catalog of pipeline.scheme
  std::filesystem::path data_dir;  // template/palette overrides
  ServiceSettings service;

  static AppConfig defaults();
  // Throws kConfig naming the section and key on bad values.
  static AppConfig load(const std::filesystem::path& path);
  static AppConfig parse(const std::string& ini_text);
  nlohmann::json to_json() const;  // no secrets: only env var names
};

}  // namespace aptness
