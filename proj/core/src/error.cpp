#include "aptness/error.hpp"

namespace aptness {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kPrecondition: return "precondition";
    case ErrorKind::kTransport: return "transport";
    case ErrorKind::kRequest: return "request";
    case ErrorKind::kReplay: return "replay";
    case ErrorKind::kProviderContract: return "provider_contract";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kData: return "data";
    case ErrorKind::kRange: return "range";
    case ErrorKind::kBuild: return "build";
    case ErrorKind::kCheckpoint: return "checkpoint";
    case ErrorKind::kManifest: return "manifest";
    case ErrorKind::kLoad: return "load";
    case ErrorKind::kQuery: return "query";
    case ErrorKind::kPrediction: return "prediction";
    case ErrorKind::kExport: return "export";
    case ErrorKind::kPipeline: return "pipeline";
    case ErrorKind::kJudge: return "judge";
    case ErrorKind::kAggregation: return "aggregation";
    case ErrorKind::kStatistics: return "statistics";
    case ErrorKind::kExtraction: return "extraction";
    case ErrorKind::kNotFound: return "not_found";
    case ErrorKind::kConflict: return "conflict";
    case ErrorKind::kBusy: return "busy";
  }
  return "unknown";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kManifest:
      return 2;
    case ErrorKind::kTransport:
    case ErrorKind::kRequest:
    case ErrorKind::kReplay:
    case ErrorKind::kProviderContract:
      return 3;
    default:
      return 4;
  }
}

}  // namespace aptness
