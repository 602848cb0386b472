// Command-line driver wiring the pipeline end-to-end:
//   synth  — synthesize pseudo functions for a tool file into a corpus
//   plan   — answer a query against a corpus, emit plan/trajectory/export
//   eval   — score predictions against gold trajectories or signatures
//
// Exit codes: 0 success, 1 domain failure, 2 usage/environment error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>

#include "CLI11.hpp"

#include "toolplan/codesynth.hpp"
#include "toolplan/corpus.hpp"
#include "toolplan/evalkit.hpp"
#include "toolplan/llm.hpp"
#include "toolplan/llm_http.hpp"
#include "toolplan/model.hpp"
#include "toolplan/sandbox.hpp"
#include "toolplan/topgun.hpp"
#include "toolplan/trajectory.hpp"

namespace fs = std::filesystem;
using toolplan::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

struct GlobalOptions {
    std::string backend = "mock";
    std::string script_file;
    std::string interpreter;
    std::string base_url;
    std::string model = "gpt-4";
    std::size_t k = toolplan::kDefaultRetrievalK;
    int max_iters = toolplan::kDefaultMaxIters;
    long seed = 0;  // reserved for sampling backends; plumbing only
};

std::unique_ptr<toolplan::Backend> make_backend(GlobalOptions const & opts)
{
    if (opts.backend == "mock") {
        if (opts.script_file.empty())
            throw CLI::ValidationError("--script is required with the mock "
                                       "backend");
        return std::make_unique<toolplan::ScriptedBackend>(
            toolplan::ScriptedBackend::from_file(opts.script_file));
    }
    if (opts.backend == "http") {
        if (opts.base_url.empty())
            throw CLI::ValidationError("--base-url is required with the http "
                                       "backend");
        toolplan::HttpBackendConfig config;
        config.base_url = opts.base_url;
        config.model = opts.model;
        return std::make_unique<toolplan::HttpBackend>(config);
    }
    throw CLI::ValidationError("unknown backend: " + opts.backend);
}

toolplan::Sandbox make_sandbox(GlobalOptions const & opts)
{
    if (!opts.interpreter.empty())
        return toolplan::Sandbox(opts.interpreter);
    return toolplan::Sandbox();
}

void write_atomic(fs::path const & path, std::string const & content)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw std::runtime_error("cannot write " + tmp.string());
        out << content;
    }
    fs::rename(tmp, path);
}

json read_json_file(std::string const & path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json doc = json::parse(in, nullptr, /*allow_exceptions=*/false);
    if (doc.is_discarded())
        throw std::runtime_error("malformed JSON in " + path);
    return doc;
}

// ---------------------------------------------------------------------------

int run_synth(GlobalOptions const & opts, std::string const & tools_file,
              std::string const & corpus_dir, bool permissive)
{
    json doc = read_json_file(tools_file);
    if (!doc.is_array())
        throw std::runtime_error(tools_file + ": expected a list of tool "
                                 "descriptions");
    std::vector<toolplan::ToolDescription> tools;
    for (auto const & item : doc)
        tools.push_back(item.get<toolplan::ToolDescription>());

    auto backend = make_backend(opts);
    toolplan::Sandbox sandbox = make_sandbox(opts);
    toolplan::ToolCorpus corpus(permissive);

    bool all_verified = true;
    for (auto const & tool : tools) {
        auto result = toolplan::synthesize_signature(tool, *backend, sandbox,
                                                     opts.max_iters);
        all_verified = all_verified && result.pseudo.verified;
        std::printf("%-24s %-10s iterations=%d tokens=%ld\n",
                    tool.name.c_str(),
                    result.pseudo.verified ? "verified" : "unverified",
                    result.pseudo.iterations_used,
                    result.token_usage.total());
        if (result.pseudo.verified || permissive)
            corpus.add(tool, result.pseudo);

        json history;
        history["tool_name"] = tool.name;
        history["candidates"] = json::array();
        for (auto const & revision : result.revisions)
            history["candidates"].push_back(revision.source);
        history["verified"] = result.pseudo.verified;
        history["token_usage"] = result.token_usage;
        write_atomic(fs::path(corpus_dir) / (tool.name + ".history.json"),
                     history.dump(2) + "\n");
    }
    corpus.persist(corpus_dir);
    std::printf("corpus: %zu/%zu tools -> %s\n", corpus.size(), tools.size(),
                corpus_dir.c_str());
    return (all_verified || permissive) ? kExitOk : kExitDomain;
}

int run_plan(GlobalOptions const & opts, std::string const & query,
             std::string const & corpus_dir, std::string const & out_prefix,
             std::string const & method, bool allow_unverified, bool trace,
             bool permissive)
{
    toolplan::ToolCorpus corpus =
        toolplan::ToolCorpus::load(corpus_dir, permissive);
    auto backend = make_backend(opts);
    toolplan::Sandbox sandbox = make_sandbox(opts);

    auto result = toolplan::plan_query(query, corpus, *backend, sandbox,
                                       opts.k, opts.max_iters);
    toolplan::Plan const & plan = result.plan;
    std::printf("verified=%s iterations=%zu tokens: prompt=%ld "
                "completion=%ld calls=%ld\n",
                plan.verified ? "true" : "false", plan.revisions.size(),
                plan.token_usage.prompt_tokens,
                plan.token_usage.completion_tokens, plan.token_usage.calls);
    if (!plan.verified && !allow_unverified) {
        std::fprintf(stderr, "plan failed verification; last feedback: %s\n",
                     plan.revisions.empty()
                         ? "(none)"
                         : plan.revisions.back().feedback.message.c_str());
        return kExitDomain;
    }

    std::set<std::string> tool_names;
    for (auto const & hit : result.retrieved) tool_names.insert(hit.tool_name);
    toolplan::SolutionTrajectory trajectory =
        trace ? toolplan::trace_dynamic(plan.candidate_source, corpus, sandbox,
                                        {}, method)
              : toolplan::parse_static(plan.candidate_source, tool_names,
                                       method);

    write_atomic(out_prefix + ".plan.json", json(plan).dump(2) + "\n");
    write_atomic(out_prefix + ".trajectory.json",
                 json(trajectory).dump(2) + "\n");
    json record = toolplan::export_tooleval(query, trajectory, method);
    write_atomic(out_prefix + ".export.json", record.dump(2) + "\n");
    std::printf("steps=%zu -> %s.{plan,trajectory,export}.json\n",
                trajectory.steps.size(), out_prefix.c_str());
    return kExitOk;
}

int run_eval_trajectories(std::string const & predictions_dir,
                          std::string const & gold_file, bool as_json)
{
    auto gold = toolplan::load_gold_cases(gold_file);
    if (gold.empty())
        throw std::runtime_error(gold_file + ": no gold cases");

    std::vector<fs::path> files;
    for (auto const & entry : fs::directory_iterator(predictions_dir)) {
        auto name = entry.path().filename().string();
        if (name.size() > 16
            && name.substr(name.size() - 16) == ".trajectory.json")
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.size() != gold.size())
        throw std::runtime_error("prediction/gold count mismatch: "
                                 + std::to_string(files.size()) + " vs "
                                 + std::to_string(gold.size()));

    std::vector<std::pair<toolplan::SolutionTrajectory,
                          toolplan::SolutionTrajectory>>
        cases;
    for (std::size_t i = 0; i < files.size(); ++i) {
        auto predicted = read_json_file(files[i].string())
                             .get<toolplan::SolutionTrajectory>();
        cases.emplace_back(std::move(predicted), gold[i].trajectory);
    }
    double rate = toolplan::success_rate(cases);
    if (as_json) {
        json report = {{"cases", cases.size()}, {"success_rate", rate}};
        std::printf("%s\n", report.dump(2).c_str());
    } else {
        std::printf("cases         %zu\nsuccess_rate  %.2f\n", cases.size(),
                    rate);
    }
    return kExitOk;
}

int run_eval_signatures(std::string const & predictions_dir,
                        std::string const & gold_file, bool as_json)
{
    json gold = read_json_file(gold_file);
    if (!gold.is_array() || gold.empty())
        throw std::runtime_error(gold_file + ": expected a non-empty list of "
                                 "{name, source} references");

    std::vector<std::vector<std::string>> runs;
    std::vector<std::string> references;
    for (auto const & item : gold) {
        std::string name = item.at("name").get<std::string>();
        fs::path history_path =
            fs::path(predictions_dir) / (name + ".history.json");
        json history = read_json_file(history_path.string());
        std::vector<std::string> candidates;
        for (auto const & candidate : history.at("candidates"))
            candidates.push_back(candidate.get<std::string>());
        if (candidates.empty())
            throw std::runtime_error(history_path.string()
                                     + ": empty candidate history");
        runs.push_back(std::move(candidates));
        references.push_back(item.at("source").get<std::string>());
    }
    auto curve = toolplan::reflexion_curve(runs, references);
    if (as_json) {
        json report = {{"cases", runs.size()}, {"f1_by_iteration", curve},
                       {"final_f1", curve.back()}};
        std::printf("%s\n", report.dump(2).c_str());
    } else {
        std::printf("cases  %zu\n", runs.size());
        for (std::size_t i = 0; i < curve.size(); ++i)
            std::printf("f1@%zu   %.4f\n", i + 1, curve[i]);
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char ** argv)
{
    CLI::App app{"black-box tool planning pipeline"};
    app.require_subcommand(1);

    GlobalOptions opts;
    app.add_option("--backend", opts.backend, "completion backend")
        ->check(CLI::IsMember({"mock", "http"}))
        ->capture_default_str();
    app.add_option("--script", opts.script_file,
                   "scripted responses for the mock backend");
    app.add_option("--interpreter", opts.interpreter,
                   "sandbox interpreter executable");
    app.add_option("--base-url", opts.base_url, "http backend base URL");
    app.add_option("--model", opts.model, "http backend model name")
        ->capture_default_str();
    app.add_option("--k", opts.k, "retrieval depth")->capture_default_str();
    app.add_option("--max-iters", opts.max_iters, "reflexion budget")
        ->capture_default_str();
    app.add_option("--seed", opts.seed, "rng seed for sampling backends");

    auto * synth = app.add_subcommand(
        "synth", "synthesize pseudo functions into a corpus");
    std::string tools_file, corpus_dir;
    bool permissive = false;
    synth->add_option("tools_file", tools_file, "JSON list of tool descriptions")
        ->required();
    synth->add_option("corpus_dir", corpus_dir, "output corpus directory")
        ->required();
    synth->add_flag("--permissive", permissive,
                    "keep unverified tools and exit 0");

    auto * plan = app.add_subcommand("plan", "plan a query against a corpus");
    std::string query, plan_corpus_dir, out_prefix, method = "topgun";
    bool allow_unverified = false, trace = false, plan_permissive = false;
    plan->add_option("query", query, "natural-language query")->required();
    plan->add_option("corpus_dir", plan_corpus_dir, "corpus directory")
        ->required();
    plan->add_option("--out", out_prefix, "output file prefix")->required();
    plan->add_option("--method", method, "method label for the export record")
        ->capture_default_str();
    plan->add_flag("--allow-unverified", allow_unverified,
                   "export the last candidate even if unverified");
    plan->add_flag("--trace", trace,
                   "extract the trajectory by dynamic tracing");
    plan->add_flag("--permissive", plan_permissive,
                   "load corpora containing unverified tools");

    auto * eval = app.add_subcommand("eval", "score predictions against gold");
    std::string predictions_dir, gold_file, mode = "trajectories";
    bool eval_json = false;
    eval->add_option("predictions_dir", predictions_dir,
                     "directory of prediction files")
        ->required();
    eval->add_option("gold_file", gold_file, "gold reference file")->required();
    eval->add_option("--mode", mode, "what to score")
        ->check(CLI::IsMember({"trajectories", "signatures"}))
        ->capture_default_str();
    eval->add_flag("--json", eval_json, "emit the report as JSON");

    try {
        app.parse(argc, argv);
    } catch (CLI::ParseError const & e) {
        if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp"
            || e.get_name() == "CallForVersion")
            return app.exit(e);
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (synth->parsed())
            return run_synth(opts, tools_file, corpus_dir, permissive);
        if (plan->parsed())
            return run_plan(opts, query, plan_corpus_dir, out_prefix, method,
                            allow_unverified, trace, plan_permissive);
        if (eval->parsed()) {
            return mode == "trajectories"
                       ? run_eval_trajectories(predictions_dir, gold_file,
                                               eval_json)
                       : run_eval_signatures(predictions_dir, gold_file,
                                             eval_json);
        }
    } catch (CLI::ValidationError const & e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (std::exception const & e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDomain;
    }
    return kExitUsage;
}
