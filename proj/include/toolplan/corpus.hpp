#pragma once

// Persistent store of verified pseudo functions with lexical top-k retrieval
// over tool descriptions. The scorer is a deterministic BM25 baseline
// (k1 = 1.2, b = 0.75) over lowercase word tokens, with name tokens counted
// twice; dense retrievers can implement the same contract.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "toolplan/model.hpp"

namespace toolplan {

struct CorpusError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CorpusEntry {
    ToolDescription description;
    PseudoFunction pseudo;
};

struct RetrievalHit {
    std::string tool_name;
    double score = 0.0;
};

inline std::vector<std::string> lexical_tokens(std::string_view text)
{
    std::vector<std::string> out;
    std::string current;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            current += static_cast<char>(
                std::tolower(static_cast<unsigned char>(c)));
        } else if (!current.empty()) {
            out.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) out.push_back(std::move(current));
    return out;
}

class ToolCorpus {
public:
    explicit ToolCorpus(bool permissive = false) : permissive_(permissive) {}

    bool permissive() const { return permissive_; }
    std::size_t size() const { return entries_.size(); }
    bool contains(std::string const & name) const
    {
        return entries_.count(name) != 0;
    }

    CorpusEntry const & at(std::string const & name) const
    {
        auto it = entries_.find(name);
        if (it == entries_.end())
            throw CorpusError("unknown tool: " + name);
        return it->second;
    }

    std::vector<std::string> names() const
    {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (auto const & [name, entry] : entries_) out.push_back(name);
        return out;
    }

    void add(ToolDescription description, PseudoFunction pseudo)
    {
        if (description.name != pseudo.tool_name)
            throw CorpusError("name mismatch: " + description.name + " vs "
                              + pseudo.tool_name);
        if (entries_.count(description.name))
            throw CorpusError("duplicate tool: " + description.name);
        if (!pseudo.verified && !permissive_)
            throw CorpusError("unverified pseudo function rejected in strict "
                              "mode: " + description.name);
        std::string name = description.name;
        entries_.emplace(std::move(name),
                         CorpusEntry{std::move(description), std::move(pseudo)});
        index_dirty_ = true;
    }

    // Top-k by BM25 score, descending; ties broken by ascending tool name.
    // Zero-scoring entries still rank, so a singleton corpus always answers.
    std::vector<RetrievalHit> retrieve(std::string const & query,
                                       std::size_t k) const
    {
        if (k == 0) throw CorpusError("k must be >= 1");
        if (entries_.empty()) return {};
        rebuild_index();

        std::vector<RetrievalHit> hits;
        hits.reserve(docs_.size());
        auto const query_tokens = lexical_tokens(query);
        double n_docs = static_cast<double>(docs_.size());
        for (auto const & doc : docs_) {
            double score = 0.0;
            for (auto const & term : query_tokens) {
                auto tf_it = doc.tf.find(term);
                if (tf_it == doc.tf.end()) continue;
                double tf = static_cast<double>(tf_it->second);
                double df = static_cast<double>(doc_freq_.at(term));
                double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
                double norm = tf * (kK1 + 1.0)
                              / (tf + kK1 * (1.0 - kB
                                             + kB * doc.length / avg_length_));
                score += idf * norm;
            }
            hits.push_back({doc.name, score});
        }
        std::sort(hits.begin(), hits.end(),
                  [](RetrievalHit const & a, RetrievalHit const & b) {
                      if (a.score != b.score) return a.score > b.score;
                      return a.tool_name < b.tool_name;
                  });
        if (hits.size() > k) hits.resize(k);
        return hits;
    }

    std::vector<std::string>
    pseudo_sources(std::vector<RetrievalHit> const & hits) const
    {
        std::vector<std::string> out;
        out.reserve(hits.size());
        for (auto const & hit : hits) out.push_back(at(hit.tool_name).pseudo.source);
        return out;
    }

    // On-disk layout: <dir>/manifest.json plus one JSON file per entry.
    void persist(std::filesystem::path const & dir) const
    {
        namespace fs = std::filesystem;
        fs::create_directories(dir);
        for (auto const & [name, entry] : entries_) {
            json doc = {{"description", entry.description},
                        {"pseudo", entry.pseudo}};
            write_atomic(dir / (name + ".json"), doc.dump(2) + "\n");
        }
        json manifest = {{"version", kFormatVersion},
                         {"entries", names()}};
        write_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
    }

    static ToolCorpus load(std::filesystem::path const & dir,
                           bool permissive = false)
    {
        namespace fs = std::filesystem;
        std::ifstream in(dir / "manifest.json");
        if (!in)
            throw CorpusError("cannot open manifest: "
                              + (dir / "manifest.json").string());
        json manifest = json::parse(in, nullptr, /*allow_exceptions=*/false);
        if (manifest.is_discarded() || !manifest.is_object())
            throw CorpusError("malformed manifest in " + dir.string());
        int version = manifest.value("version", -1);
        if (version != kFormatVersion)
            throw CorpusError("unsupported corpus version "
                              + std::to_string(version));
        ToolCorpus corpus(permissive);
        for (auto const & name : manifest.at("entries")) {
            auto path = dir / (name.get<std::string>() + ".json");
            std::ifstream entry_in(path);
            if (!entry_in)
                throw CorpusError("missing corpus entry: " + path.string());
            json doc = json::parse(entry_in, nullptr, false);
            if (doc.is_discarded())
                throw CorpusError("malformed corpus entry: " + path.string());
            try {
                corpus.add(doc.at("description").get<ToolDescription>(),
                           doc.at("pseudo").get<PseudoFunction>());
            } catch (json::exception const & e) {
                throw CorpusError("malformed corpus entry " + path.string()
                                  + ": " + e.what());
            }
        }
        return corpus;
    }

private:
    static constexpr int kFormatVersion = 1;
    static constexpr double kK1 = 1.2;
    static constexpr double kB = 0.75;

    struct Doc {
        std::string name;
        std::unordered_map<std::string, int> tf;
        int length = 0;
    };

    static void write_atomic(std::filesystem::path const & path,
                             std::string const & content)
    {
        auto tmp = path;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw CorpusError("cannot write " + tmp.string());
            out << content;
        }
        std::filesystem::rename(tmp, path);
    }

    void rebuild_index() const
    {
        if (!index_dirty_) return;
        docs_.clear();
        doc_freq_.clear();
        long total_length = 0;
        for (auto const & [name, entry] : entries_) {
            Doc doc;
            doc.name = name;
            auto add_token = [&doc](std::string const & tok, int count) {
                doc.tf[tok] += count;
                doc.length += count;
            };
            for (auto const & tok : lexical_tokens(entry.description.description))
                add_token(tok, 1);
            for (auto const & tok : lexical_tokens(name))
                add_token(tok, 2);  // name tokens weighted x2
            for (auto const & [term, tf] : doc.tf) doc_freq_[term] += 1;
            total_length += doc.length;
            docs_.push_back(std::move(doc));
        }
        avg_length_ = docs_.empty()
                          ? 1.0
                          : static_cast<double>(total_length) / docs_.size();
        if (avg_length_ <= 0) avg_length_ = 1.0;
        index_dirty_ = false;
    }

    bool permissive_ = false;
    std::map<std::string, CorpusEntry> entries_;
    mutable std::vector<Doc> docs_;
    mutable std::unordered_map<std::string, int> doc_freq_;
    mutable double avg_length_ = 1.0;
    mutable bool index_dirty_ = true;
};

}  // namespace toolplan
