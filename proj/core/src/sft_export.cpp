#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "aptness/data.hpp"
#include "aptness/error.hpp"
#include "aptness/strategy.hpp"
#include "aptness/text.hpp"

namespace aptness::strategy {

using nlohmann::json;

std::vector<LabeledSample> load_labeled_corpus(const std::filesystem::path& path) {
  std::vector<LabeledSample> samples;
  for (const auto& row : read_jsonl(path)) {
    const Dialogue dialogue = Dialogue::from_json(row);
    const auto& raw_utts = row.at("utterances");
    for (std::size_t i = 0; i < dialogue.size(); ++i) {
      if (dialogue.utterances()[i].role != Role::kListener || i == 0) continue;
      std::vector<std::string> labels;
      const auto& u = raw_utts[i];
      if (u.contains("strategy")) {
        if (u["strategy"].is_array()) {
          labels = u["strategy"].get<std::vector<std::string>>();
        } else if (u["strategy"].is_string()) {
          labels.push_back(u["strategy"].get<std::string>());
        }
      }
      for (auto& l : labels) {
        l = trim(l);
        const auto key = normalize_key(l);
        if (key == "others" || key == "other") l = std::string(kGreetings);
      }
      labels.erase(std::remove_if(labels.begin(), labels.end(),
                                  [](const std::string& l) { return l.empty(); }),
                   labels.end());
      if (labels.empty()) labels.push_back(std::string(kGreetings));
      samples.push_back({dialogue.first(i).with_id(dialogue.id() + "#" + std::to_string(i)),
                         std::move(labels)});
    }
  }
  return samples;
}

namespace {

void check_labels(const std::vector<LabeledSample>& samples, const StrategyCatalog& catalog) {
  std::set<std::string> offenders;
  for (const auto& s : samples) {
    for (const auto& l : s.labels) {
      if (!catalog.find(l)) offenders.insert(l);
    }
  }
  if (!offenders.empty()) {
    std::string list;
    for (const auto& o : offenders) list += (list.empty() ? "" : ", ") + o;
    throw Error(ErrorKind::kExport, "labels not in the " + std::string(to_string(catalog.scheme())) +
                                        " catalog: " + list);
  }
}

}  // namespace

std::vector<std::size_t> select_sft_samples(const std::vector<LabeledSample>& samples,
                                            const StrategyCatalog& catalog, const SftPlan& plan) {
  check_labels(samples, catalog);
  const std::size_t total = samples.size();
  std::vector<std::size_t> all(total);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (total <= plan.max_records) return all;

  // Group by primary (first) label, in catalog order.
  std::vector<std::vector<std::size_t>> groups(catalog.size());
  for (std::size_t i = 0; i < total; ++i) {
    groups[*catalog.find(samples[i].labels.front())].push_back(i);
  }

  std::vector<std::size_t> quota(groups.size(), 0);
  std::vector<bool> floored(groups.size(), false);
  std::size_t floor_taken = 0;
  std::size_t rest_count = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const std::size_t n = groups[g].size();
    if (n == 0) continue;
    // Proportional share below the floor: n * max / total < floor.
    if (n * plan.max_records < plan.rebalance_floor * total) {
      floored[g] = true;
      quota[g] = std::min(n, plan.rebalance_floor);
      floor_taken += quota[g];
    } else {
      rest_count += n;
    }
  }
  const std::size_t budget = plan.max_records > floor_taken ? plan.max_records - floor_taken : 0;

  if (rest_count > 0) {
    if (budget >= rest_count) {
      for (std::size_t g = 0; g < groups.size(); ++g) {
        if (!floored[g]) quota[g] = groups[g].size();
      }
    } else {
      // Largest-remainder apportionment of the budget; ties go to catalog order.
      std::vector<std::pair<std::size_t, std::size_t>> remainders;  // (remainder numerator, g)
      std::size_t assigned = 0;
      for (std::size_t g = 0; g < groups.size(); ++g) {
        if (floored[g] || groups[g].empty()) continue;
        const std::size_t num = budget * groups[g].size();
        quota[g] = num / rest_count;
        assigned += quota[g];
        remainders.emplace_back(num % rest_count, g);
      }
      std::stable_sort(remainders.begin(), remainders.end(),
                       [](const auto& a, const auto& b) { return a.first > b.first; });
      for (std::size_t r = 0; assigned < budget && r < remainders.size(); ++r) {
        const auto g = remainders[r].second;
        if (quota[g] < groups[g].size()) {
          ++quota[g];
          ++assigned;
        }
      }
    }
  }

  std::vector<std::size_t> chosen;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto pool = groups[g];
    if (quota[g] < pool.size()) {
      SplitMix64 rng(plan.seed ^ fnv1a64(catalog.entries()[g].name));
      for (std::size_t i = pool.size() - 1; i > 0; --i) {
        std::swap(pool[i], pool[rng.next_below(i + 1)]);
      }
      pool.resize(quota[g]);
    }
    chosen.insert(chosen.end(), pool.begin(), pool.end());
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

std::vector<SftRecord> export_sft(const std::vector<LabeledSample>& samples,
                                  const StrategyCatalog& catalog, const SftPlan& plan,
                                  const std::string& prompt_template) {
  const std::string tmpl =
      prompt_template.empty() ? data::load_template("strategy_sft") : prompt_template;
  std::vector<SftRecord> out;
  for (const auto idx : select_sft_samples(samples, catalog, plan)) {
    const auto& sample = samples[idx];
    std::string completion;
    for (const auto& l : sample.labels) {
      if (!completion.empty()) completion += "; ";
      completion += catalog.entries()[*catalog.find(l)].name;
    }
    out.push_back({build_strategy_prompt(sample.history, catalog, tmpl), std::move(completion)});
  }
  return out;
}

}  // namespace aptness::strategy
