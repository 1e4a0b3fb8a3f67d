// apt: command line front end for corpus building, indexing, strategy
// tooling, response generation, evaluation and the chat service.

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "aptness/apt_builder.hpp"
#include "aptness/config.hpp"
#include "aptness/error.hpp"
#include "aptness/eval.hpp"
#include "aptness/pipeline.hpp"
#include "aptness/retrieval.hpp"
#include "aptness/service.hpp"
#include "aptness/strategy.hpp"
#include "aptness/text.hpp"

namespace fs = std::filesystem;
using namespace aptness;
using nlohmann::json;

namespace {

struct Globals {
  std::string config_path;
  bool no_network = false;
  std::string fixtures;
  bool record = false;
  std::string log_level = "warn";
};

struct Context {
  AppConfig cfg;
  llm::GatewayOptions gateway;

  std::shared_ptr<llm::ChatProvider> chat() const {
    return llm::make_chat_provider(cfg.chat, gateway, "chat");
  }
  std::shared_ptr<llm::Embedder> embedder() const {
    return llm::make_embedder(cfg.embed, gateway, "embed");
  }
  std::shared_ptr<llm::ChatProvider> judge() const {
    return llm::make_chat_provider(cfg.judge, gateway, "judge");
  }
  std::shared_ptr<strategy::Predictor> predictor() const {
    std::shared_ptr<llm::ChatProvider> p = llm::make_chat_provider(cfg.strategy, gateway, "strategy");
    // The predictor keeps a reference; tie the provider's lifetime to it.
    struct Owning : strategy::Predictor {
      std::shared_ptr<llm::ChatProvider> provider;
      std::unique_ptr<strategy::Predictor> inner;
      std::string predict_raw(const Dialogue& h, const strategy::StrategyCatalog& c) override {
        return inner->predict_raw(h, c);
      }
    };
    auto owning = std::make_shared<Owning>();
    owning->provider = p;
    if (cfg.predictor == PredictorKind::kEndpoint) {
      owning->inner = std::make_unique<strategy::EndpointPredictor>(*p);
    } else {
      owning->inner = std::make_unique<strategy::PromptPredictor>(*p);
    }
    return owning;
  }
  strategy::StrategyCatalog catalog(Scheme scheme, const std::string& path_flag) const {
    if (!path_flag.empty()) return strategy::StrategyCatalog::load(path_flag);
    if (!cfg.catalog.empty()) return strategy::StrategyCatalog::load(cfg.catalog);
    return strategy::StrategyCatalog::shipped(scheme);
  }
};

Context make_context(const Globals& g) {
  Context ctx;
  ctx.cfg = g.config_path.empty() ? AppConfig::defaults() : AppConfig::load(g.config_path);
  ctx.gateway.no_network = g.no_network;
  ctx.gateway.fixtures_dir = g.fixtures;
  ctx.gateway.record = g.record;
  if (g.record && g.fixtures.empty()) {
    throw Error(ErrorKind::kConfig, "--record needs --fixtures <dir>");
  }
  llm::set_network_disabled(g.no_network);
  if (!ctx.cfg.data_dir.empty()) ::setenv("APTNESS_DATA_DIR", ctx.cfg.data_dir.c_str(), 1);
  return ctx;
}

Dialogue read_history(const fs::path& path) {
  const auto text = read_file(path);
  auto j = json::parse(text, nullptr, false);
  if (j.is_discarded()) {
    auto rows = read_jsonl(path);
    if (rows.empty()) throw Error(ErrorKind::kData, path.string() + " holds no dialogue");
    j = rows.front();
  }
  return Dialogue::from_json(j);
}

void print_json(const json& j) { std::cout << j.dump(2) << '\n'; }

// Optional CLI flags override the config's pipeline section.
struct PipelineFlags {
  std::string mode;
  std::optional<std::size_t> k;
  std::string scheme;
  std::string index;
  std::string catalog;

  void add_to(CLI::App* app) {
    app->add_option("--mode", mode, "gen | rag | aptness");
    app->add_option("-k", k, "retrieved examples per query");
    app->add_option("--scheme", scheme, "extes | esconv");
    app->add_option("--index", index, "index directory");
    app->add_option("--catalog", catalog, "strategy catalog JSON");
  }

  pipeline::PipelineConfig apply(pipeline::PipelineConfig c) const {
    try {
      if (!mode.empty()) c.mode = parse_mode(mode);
      if (!scheme.empty()) c.scheme = parse_scheme(scheme);
    } catch (const Error& e) {
      throw Error(ErrorKind::kConfig, e.what());
    }
    if (k) c.k = *k;
    c.validate();
    return c;
  }
};

// Owns everything a pipeline run borrows.
struct PipelineBundle {
  pipeline::PipelineConfig config;
  std::shared_ptr<llm::ChatProvider> chat;
  std::shared_ptr<llm::Embedder> embedder;
  std::shared_ptr<const retrieval::VectorIndex> index;
  std::unique_ptr<retrieval::IndexRetriever> retriever;
  std::optional<strategy::StrategyCatalog> catalog;
  std::shared_ptr<strategy::Predictor> predictor;
  prompt::PromptTemplates templates;

  pipeline::PipelineDeps deps() {
    pipeline::PipelineDeps d;
    d.chat = chat.get();
    d.retriever = retriever.get();
    d.catalog = catalog ? &*catalog : nullptr;
    d.predictor = predictor.get();
    d.templates = &templates;
    return d;
  }
};

std::unique_ptr<PipelineBundle> make_bundle(const Context& ctx, const PipelineFlags& flags) {
  auto b = std::make_unique<PipelineBundle>();
  b->config = flags.apply(ctx.cfg.pipeline);
  b->chat = ctx.chat();
  b->templates = prompt::PromptTemplates::load();
  if (b->config.mode != Mode::kGen) {
    const fs::path dir = flags.index.empty() ? ctx.cfg.index_dir : fs::path(flags.index);
    if (dir.empty()) throw Error(ErrorKind::kConfig, "mode needs --index <dir>");
    b->embedder = ctx.embedder();
    b->index = std::make_shared<retrieval::VectorIndex>(
        retrieval::VectorIndex::load(dir, b->embedder->model_id()));
    b->retriever = std::make_unique<retrieval::IndexRetriever>(*b->index, *b->embedder);
  }
  if (b->config.mode == Mode::kAptness) {
    b->catalog = ctx.catalog(b->config.scheme, flags.catalog);
    b->predictor = ctx.predictor();
  }
  return b;
}

int run(int argc, char** argv) {
  CLI::App app{"APTNESS empathetic response toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "INI config file")->check(CLI::ExistingFile);
  app.add_flag("--no-network", g.no_network, "refuse all network I/O");
  app.add_option("--fixtures", g.fixtures, "record/replay fixture directory");
  app.add_flag("--record", g.record, "record provider calls into --fixtures");
  app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off");

  std::function<void(const Context&)> action;
  auto bind = [&](CLI::App* sub, std::function<void(const Context&)> f) {
    sub->callback([&action, f] { action = f; });
  };

  // build ------------------------------------------------------------------
  auto* build = app.add_subcommand("build", "generate the APT database");
  std::string plan_path, db_out, palette_path;
  bool fresh = false;
  build->add_option("--plan", plan_path, "build plan JSON")->check(CLI::ExistingFile);
  build->add_option("--out", db_out, "database .jsonl")->required();
  build->add_option("--palette", palette_path, "emotion palette JSON");
  build->add_flag("--fresh", fresh, "discard an existing checkpoint");
  bind(build, [&](const Context& ctx) {
    auto plan = plan_path.empty() ? apt::BuildPlan{} : apt::BuildPlan::from_json(json::parse(read_file(plan_path)));
    auto palette = palette_path.empty() ? apt::EmotionPalette::shipped()
                                        : apt::EmotionPalette::load(palette_path);
    auto chat = ctx.chat();
    auto stats = apt::run_build(palette, plan, *chat, db_out, fresh);
    print_json(stats.to_json());
  });

  auto* stats = app.add_subcommand("stats", "count a database");
  std::string stats_db;
  stats->add_option("--db", stats_db)->required()->check(CLI::ExistingFile);
  bind(stats, [&](const Context&) { print_json(apt::compute_stats(stats_db).to_json()); });

  auto* extract = app.add_subcommand("extract", "list every Listener response with its history");
  std::string extract_db, extract_out;
  extract->add_option("--db", extract_db)->required()->check(CLI::ExistingFile);
  extract->add_option("--out", extract_out)->required();
  bind(extract, [&](const Context&) {
    std::vector<json> rows;
    for (const auto& e : apt::extract_responses(extract_db)) rows.push_back(e.to_json());
    write_jsonl(extract_out, rows);
    std::cout << rows.size() << " responses\n";
  });

  // index ------------------------------------------------------------------
  auto* index = app.add_subcommand("index", "embedding index");
  index->require_subcommand(1);
  auto* index_build = index->add_subcommand("build", "embed responses into an index");
  std::string responses_path, index_out;
  index_build->add_option("--responses", responses_path)->required()->check(CLI::ExistingFile);
  index_build->add_option("--out", index_out)->required();
  bind(index_build, [&](const Context& ctx) {
    auto embedder = ctx.embedder();
    auto idx = retrieval::VectorIndex::build(apt::read_responses(responses_path), *embedder,
                                             static_cast<std::size_t>(ctx.cfg.embed.embed_batch_size));
    idx.save(index_out);
    print_json(idx.manifest().to_json());
  });
  auto* index_query = index->add_subcommand("query", "top-k responses for a text");
  std::string query_index, query_text;
  std::size_t query_k = 2;
  index_query->add_option("--index", query_index)->required();
  index_query->add_option("--text", query_text)->required();
  index_query->add_option("-k", query_k);
  bind(index_query, [&](const Context& ctx) {
    auto embedder = ctx.embedder();
    auto idx = retrieval::VectorIndex::load(query_index, embedder->model_id());
    json out = json::array();
    for (const auto& r : idx.query(query_text, query_k, *embedder)) out.push_back(to_json(r));
    print_json(out);
  });

  // strategy ---------------------------------------------------------------
  auto* strat = app.add_subcommand("strategy", "strategy prediction and SFT export");
  strat->require_subcommand(1);
  auto* predict = strat->add_subcommand("predict", "predict strategies for a history");
  std::string predict_history, strat_scheme = "extes", strat_catalog;
  predict->add_option("--history", predict_history)->required()->check(CLI::ExistingFile);
  predict->add_option("--scheme", strat_scheme);
  predict->add_option("--catalog", strat_catalog);
  bind(predict, [&](const Context& ctx) {
    const auto catalog = ctx.catalog(parse_scheme(strat_scheme), strat_catalog);
    auto predictor = ctx.predictor();
    auto p = strategy::predict(read_history(predict_history), catalog, *predictor);
    json names = json::array();
    for (const auto& s : p.strategies) names.push_back(s.name);
    print_json({{"history_id", p.history_id},
                {"strategies", names},
                {"fallback", p.fallback},
                {"unknown_names", p.unknown_names}});
  });
  auto* sft = strat->add_subcommand("export-sft", "write the strategy fine-tuning set");
  std::string sft_corpus, sft_out, sft_scheme = "extes", sft_catalog;
  strategy::SftPlan sft_plan;
  sft->add_option("--corpus", sft_corpus, "labelled dialogue .jsonl")->required()->check(CLI::ExistingFile);
  sft->add_option("--out", sft_out)->required();
  sft->add_option("--scheme", sft_scheme);
  sft->add_option("--catalog", sft_catalog);
  sft->add_option("--max", sft_plan.max_records);
  sft->add_option("--floor", sft_plan.rebalance_floor);
  sft->add_option("--seed", sft_plan.seed);
  bind(sft, [&](const Context& ctx) {
    const auto catalog = ctx.catalog(parse_scheme(sft_scheme), sft_catalog);
    auto records = strategy::export_sft(strategy::load_labeled_corpus(sft_corpus), catalog, sft_plan);
    std::vector<json> rows;
    for (const auto& r : records) rows.push_back(r.to_json());
    write_jsonl(sft_out, rows);
    std::cout << rows.size() << " records\n";
  });

  // respond ----------------------------------------------------------------
  auto* respond = app.add_subcommand("respond", "generate one Listener response");
  std::string respond_history;
  bool respond_trace = false;
  PipelineFlags respond_flags;
  respond->add_option("--history", respond_history)->required()->check(CLI::ExistingFile);
  respond->add_flag("--trace", respond_trace, "include the final prompt");
  respond_flags.add_to(respond);
  bind(respond, [&](const Context& ctx) {
    auto bundle = make_bundle(ctx, respond_flags);
    pipeline::PipelineTrace trace;
    auto r = pipeline::run_pipeline(read_history(respond_history), bundle->config, bundle->deps(),
                                    &trace);
    auto j = to_json(r);
    if (respond_trace) j["trace"] = {{"draft_prompt", trace.draft_prompt},
                                     {"final_prompt", trace.final_prompt},
                                     {"fallback_reason", trace.fallback_reason}};
    print_json(j);
  });

  // eval -------------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "turn-based evaluation");
  ev->require_subcommand(1);
  auto* ev_run = ev->add_subcommand("run", "generate and judge every turn of a test set");
  std::string ev_testset, ev_out, ev_judge, ev_label;
  std::size_t ev_parallel = 4;
  PipelineFlags ev_flags;
  ev_run->add_option("--testset", ev_testset)->required()->check(CLI::ExistingFile);
  ev_run->add_option("--out", ev_out)->required();
  ev_run->add_option("--judge", ev_judge, "judge model id (overrides config)");
  ev_run->add_option("--label", ev_label, "method name in the report");
  ev_run->add_option("--parallel", ev_parallel, "turns in flight");
  ev_flags.add_to(ev_run);
  bind(ev_run, [&](const Context& base) {
    Context ctx = base;
    if (!ev_judge.empty()) ctx.cfg.judge.model_id = ev_judge;
    auto bundle = make_bundle(ctx, ev_flags);
    auto judge = ctx.judge();
    eval::EvalOptions opts;
    opts.method = ev_label;
    opts.max_in_flight = ev_parallel;
    opts.judge.temperature = ctx.cfg.judge_temperature;
    auto report = eval::run_eval(eval::read_dialogues(ev_testset), bundle->config, bundle->deps(),
                                 *judge, opts);
    write_file_atomic(ev_out, report.to_json().dump(2) + "\n");
    json sc = report.sc.to_json();
    print_json({{"method", report.method}, {"sc", sc}, {"completeness", report.completeness()},
                {"failures", report.failures.size()}});
  });
  auto* ev_corr = ev->add_subcommand("corr", "Pearson of each sub-metric with Empathy");
  std::vector<std::string> corr_reports;
  ev_corr->add_option("--reports", corr_reports)->required()->check(CLI::ExistingFile);
  bind(ev_corr, [&](const Context&) {
    std::vector<std::pair<std::string, eval::MetricVector>> rows;
    for (const auto& p : corr_reports) {
      auto r = eval::EvalReport::from_json(json::parse(read_file(p)));
      rows.emplace_back(r.method.empty() ? p : r.method, r.sc);
    }
    print_json(eval::correlation_table(rows).to_json());
  });
  auto* ev_extract = ev->add_subcommand("extract", "longest dialogues, cut to N turns");
  std::string ex_source, ex_out;
  std::size_t ex_count = 30, ex_turns = 4;
  ev_extract->add_option("--source", ex_source)->required()->check(CLI::ExistingFile);
  ev_extract->add_option("--count", ex_count);
  ev_extract->add_option("--turns", ex_turns);
  ev_extract->add_option("--out", ex_out, "output .jsonl (stdout if omitted)");
  bind(ev_extract, [&](const Context&) {
    auto set = eval::extract_testset(eval::read_dialogues(ex_source), ex_count, ex_turns);
    std::vector<json> rows;
    for (const auto& d : set) rows.push_back(d.to_json());
    if (ex_out.empty()) {
      for (const auto& r : rows) std::cout << r.dump() << '\n';
    } else {
      write_jsonl(ex_out, rows);
      std::cerr << set.size() << " dialogues, " << set.size() * ex_turns << " turns\n";
    }
  });

  // serve ------------------------------------------------------------------
  auto* serve = app.add_subcommand("serve", "HTTP chat service");
  std::string serve_host, serve_journal, serve_cors;
  std::optional<int> serve_port;
  PipelineFlags serve_flags;
  serve->add_option("--host", serve_host);
  serve->add_option("--port", serve_port);
  serve->add_option("--journal", serve_journal, "append-only session journal");
  serve->add_option("--cors-origin", serve_cors);
  serve->add_option("--index", serve_flags.index, "index directory (enables rag/aptness)");
  serve->add_option("--mode", serve_flags.mode, "default session mode");
  serve->add_option("--scheme", serve_flags.scheme, "default strategy scheme");
  serve->add_option("-k", serve_flags.k);
  bind(serve, [&](const Context& ctx) {
    service::Resources res;
    res.defaults = serve_flags.apply(ctx.cfg.pipeline);
    res.chat = ctx.chat();
    res.templates = std::make_shared<prompt::PromptTemplates>(prompt::PromptTemplates::load());
    const fs::path dir = serve_flags.index.empty() ? ctx.cfg.index_dir : fs::path(serve_flags.index);
    if (!dir.empty()) {
      res.embedder = ctx.embedder();
      res.index = std::make_shared<retrieval::VectorIndex>(
          retrieval::VectorIndex::load(dir, res.embedder->model_id()));
      for (auto scheme : {Scheme::kExTES, Scheme::kESConv}) {
        if (!ctx.cfg.catalog.empty()) {
          auto c = strategy::StrategyCatalog::load(ctx.cfg.catalog);
          if (c.scheme() != scheme) continue;
          res.catalogs[scheme] = std::make_shared<strategy::StrategyCatalog>(std::move(c));
        } else {
          res.catalogs[scheme] =
              std::make_shared<strategy::StrategyCatalog>(strategy::StrategyCatalog::shipped(scheme));
        }
      }
      res.predictor = ctx.predictor();
    }
    auto settings = ctx.cfg.service;
    if (!serve_host.empty()) settings.host = serve_host;
    if (serve_port) settings.port = *serve_port;
    if (!serve_cors.empty()) settings.cors_origin = serve_cors;
    if (!serve_journal.empty()) settings.journal = serve_journal;
    service::SessionManager sessions(std::move(res), settings.journal);
    service::HttpService http(sessions, settings, ctx.cfg.to_json());
    const int port = http.bind();
    std::cout << "listening on http://" << settings.host << ":" << port << std::endl;
    http.serve();
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  spdlog::set_default_logger(spdlog::stderr_color_mt("apt"));
  spdlog::set_level(spdlog::level::from_str(g.log_level));
  try {
    const auto ctx = make_context(g);
    action(ctx);
    return 0;
  } catch (const Error& e) {
    std::cerr << "apt: " << to_string(e.kind()) << " error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const json::exception& e) {
    std::cerr << "apt: parse error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "apt: " << e.what() << '\n';
    return 4;
  }
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
