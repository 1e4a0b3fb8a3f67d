#pragma once

#include <array>
#include <string>
#include <vector>

// Method-level scores from the published comparison table, columns
// Emp, Coh, Inf, Iden, Comf, Sug. Rows: GEN, RAG, APTNESS for each backbone.
namespace testing_support::table1 {

struct Row {
  std::string method;
  std::array<double, 6> scores;
};

inline const std::vector<Row> kED = {
    {"llama2-gen", {5.56, 6.40, 4.76, 4.75, 4.89, 4.53}},
    {"llama2-rag", {6.08, 6.41, 4.22, 5.13, 5.51, 4.10}},
    {"llama2-aptness", {6.22, 6.46, 4.62, 5.20, 5.63, 4.39}},
    {"llama3-gen", {5.72, 6.62, 4.17, 4.69, 5.02, 3.87}},
    {"llama3-rag", {6.22, 6.51, 2.98, 5.02, 5.03, 2.13}},
    {"llama3-aptness", {6.28, 6.68, 3.37, 5.23, 5.23, 2.28}},
};

inline const std::vector<Row> kET = {
    {"llama2-gen", {6.06, 6.62, 5.48, 5.16, 5.98, 5.82}},
    {"llama2-rag", {6.45, 6.63, 5.15, 5.65, 6.40, 5.82}},
    {"llama2-aptness", {6.50, 6.51, 5.48, 5.72, 6.46, 6.03}},
    {"llama3-gen", {5.99, 6.72, 4.44, 5.10, 5.73, 4.97}},
    {"llama3-rag", {6.17, 6.34, 3.39, 5.25, 5.58, 3.60}},
    {"llama3-aptness", {6.44, 6.41, 3.98, 5.48, 5.93, 4.39}},
};

inline std::vector<double> column(const std::vector<Row>& rows, std::size_t c) {
  std::vector<double> out;
  for (const auto& r : rows) out.push_back(r.scores[c]);
  return out;
}

}  // namespace testing_support::table1
