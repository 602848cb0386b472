#include "doctest.h"

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "toolplan/corpus.hpp"

using namespace toolplan;
namespace fs = std::filesystem;

namespace {

PseudoFunction verified_pseudo(std::string const & name)
{
    PseudoFunction p;
    p.tool_name = name;
    p.source = "def " + name + "():\n    return 'x'";
    p.dummy_return_repr = "'x'";
    p.verified = true;
    return p;
}

// alpha: "red apple", beta: "green apple pie", gamma: "blue sky"
ToolCorpus fruit_corpus()
{
    ToolCorpus corpus;
    corpus.add({"alpha", "red apple", {}, ""}, verified_pseudo("alpha"));
    corpus.add({"beta", "green apple pie", {}, ""}, verified_pseudo("beta"));
    corpus.add({"gamma", "blue sky", {}, ""}, verified_pseudo("gamma"));
    return corpus;
}

struct TempDir {
    fs::path path;
    TempDir()
    {
        path = fs::temp_directory_path()
               / ("toolplan-corpus-test-" + std::to_string(::getpid()) + "-"
                  + std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir()
    {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int & counter()
    {
        static int n = 0;
        return n;
    }
};

}  // namespace

TEST_CASE("lexical tokens: lowercase alphanumeric runs")
{
    CHECK(lexical_tokens("Get Weather-Report_42!")
          == std::vector<std::string>{"get", "weather", "report", "42"});
    CHECK(lexical_tokens("") == std::vector<std::string>{});
    CHECK(lexical_tokens("___") == std::vector<std::string>{});
}

TEST_CASE("bm25 scores match a hand-computed oracle")
{
    // Index contents (name tokens count twice):
    //   alpha: red 1, apple 1, alpha 2          -> length 4
    //   beta:  green 1, apple 1, pie 1, beta 2  -> length 5
    //   gamma: blue 1, sky 1, gamma 2           -> length 4
    // N = 3, average length = 13/3.
    auto corpus = fruit_corpus();
    auto hits = corpus.retrieve("apple", 3);
    REQUIRE(hits.size() == 3);

    double const k1 = 1.2, b = 0.75, avg = 13.0 / 3.0;
    double idf = std::log(1.0 + (3.0 - 2.0 + 0.5) / (2.0 + 0.5));
    auto bm25 = [&](double tf, double doc_len) {
        return idf * tf * (k1 + 1.0)
               / (tf + k1 * (1.0 - b + b * doc_len / avg));
    };
    // tf(apple) = 1 in both alpha and beta; alpha is shorter so ranks first
    CHECK(hits[0].tool_name == "alpha");
    CHECK(hits[0].score == doctest::Approx(bm25(1, 4)).epsilon(1e-12));
    CHECK(hits[1].tool_name == "beta");
    CHECK(hits[1].score == doctest::Approx(bm25(1, 5)).epsilon(1e-12));
    CHECK(hits[2].tool_name == "gamma");
    CHECK(hits[2].score == 0.0);
}

TEST_CASE("name tokens are weighted double")
{
    auto corpus = fruit_corpus();
    auto hits = corpus.retrieve("beta", 1);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].tool_name == "beta");

    double const k1 = 1.2, b = 0.75, avg = 13.0 / 3.0;
    double idf = std::log(1.0 + (3.0 - 1.0 + 0.5) / (1.0 + 0.5));
    double expected = idf * 2.0 * (k1 + 1.0)
                      / (2.0 + k1 * (1.0 - b + b * 5.0 / avg));
    CHECK(hits[0].score == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("retrieval edge cases")
{
    auto corpus = fruit_corpus();
    CHECK_THROWS_AS(corpus.retrieve("apple", 0), CorpusError);
    CHECK(corpus.retrieve("apple", 100).size() == 3);
    // no-overlap query: zero scores, name order
    auto hits = corpus.retrieve("zzz unknown terms", 3);
    REQUIRE(hits.size() == 3);
    CHECK(hits[0].tool_name == "alpha");
    CHECK(hits[1].tool_name == "beta");
    CHECK(hits[2].tool_name == "gamma");
    ToolCorpus empty;
    CHECK(empty.retrieve("apple", 3).empty());
}

TEST_CASE("strict corpora reject unverified and inconsistent entries")
{
    ToolCorpus corpus;
    PseudoFunction unverified = verified_pseudo("lookup");
    unverified.verified = false;
    CHECK_THROWS_AS(corpus.add({"lookup", "d", {}, ""}, unverified),
                    CorpusError);
    CHECK_THROWS_AS(
        corpus.add({"lookup", "d", {}, ""}, verified_pseudo("other")),
        CorpusError);
    corpus.add({"lookup", "d", {}, ""}, verified_pseudo("lookup"));
    CHECK_THROWS_AS(
        corpus.add({"lookup", "d", {}, ""}, verified_pseudo("lookup")),
        CorpusError);

    ToolCorpus permissive(true);
    permissive.add({"lookup", "d", {}, ""}, unverified);
    CHECK(permissive.size() == 1);
    CHECK_FALSE(permissive.at("lookup").pseudo.verified);
    CHECK_THROWS_AS(permissive.at("missing"), CorpusError);
}

TEST_CASE("persist and load round-trip")
{
    TempDir dir;
    auto corpus = fruit_corpus();
    corpus.persist(dir.path);
    CHECK(fs::exists(dir.path / "manifest.json"));
    CHECK(fs::exists(dir.path / "alpha.json"));

    auto loaded = ToolCorpus::load(dir.path);
    CHECK(loaded.size() == 3);
    CHECK(loaded.names() == corpus.names());
    for (auto const & name : corpus.names()) {
        CHECK(json(loaded.at(name).description)
              == json(corpus.at(name).description));
        CHECK(json(loaded.at(name).pseudo) == json(corpus.at(name).pseudo));
    }
    // rankings survive the round-trip
    auto before = corpus.retrieve("green apple", 3);
    auto after = loaded.retrieve("green apple", 3);
    REQUIRE(before.size() == after.size());
    for (std::size_t i = 0; i < before.size(); ++i) {
        CHECK(before[i].tool_name == after[i].tool_name);
        CHECK(before[i].score == after[i].score);
    }
}

TEST_CASE("load rejects missing or malformed stores")
{
    CHECK_THROWS_AS(ToolCorpus::load("/nonexistent/corpus"), CorpusError);
    TempDir dir;
    std::ofstream(dir.path / "manifest.json") << "{not json";
    CHECK_THROWS_AS(ToolCorpus::load(dir.path), CorpusError);
    std::ofstream(dir.path / "manifest.json", std::ios::trunc)
        << "{\"version\": 99, \"entries\": []}";
    CHECK_THROWS_AS(ToolCorpus::load(dir.path), CorpusError);
    std::ofstream(dir.path / "manifest.json", std::ios::trunc)
        << "{\"version\": 1, \"entries\": [\"ghost\"]}";
    CHECK_THROWS_AS(ToolCorpus::load(dir.path), CorpusError);
}

TEST_CASE("retrieval prefix property over randomized queries")
{
    auto corpus = fruit_corpus();
    std::mt19937 rng(23);
    std::vector<std::string> vocabulary = {"red",  "apple", "pie",  "sky",
                                           "blue", "alpha", "zzz",  "green",
                                           "beta", "gamma", "tool", "42"};
    for (int trial = 0; trial < 200; ++trial) {
        std::string query;
        std::size_t words = 1 + rng() % 4;
        for (std::size_t w = 0; w < words; ++w)
            query += vocabulary[rng() % vocabulary.size()] + " ";
        std::size_t k1 = 1 + rng() % 3;
        std::size_t k2 = k1 + rng() % 3;
        auto small = corpus.retrieve(query, k1);
        auto large = corpus.retrieve(query, k2);
        REQUIRE(small.size() <= large.size());
        for (std::size_t i = 0; i < small.size(); ++i) {
            CHECK(small[i].tool_name == large[i].tool_name);
            CHECK(small[i].score == large[i].score);
        }
    }
}

TEST_CASE("pseudo_sources follows hit order")
{
    auto corpus = fruit_corpus();
    auto hits = corpus.retrieve("apple", 2);
    auto sources = corpus.pseudo_sources(hits);
    REQUIRE(sources.size() == 2);
    CHECK(sources[0] == corpus.at(hits[0].tool_name).pseudo.source);
    CHECK(sources[1] == corpus.at(hits[1].tool_name).pseudo.source);
}
