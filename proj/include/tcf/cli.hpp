#pragma once

// Command-line front end. Each subcommand resolves a RunConfig from built-in
// defaults, then the JSON file given by --config, then explicit flags.
//
//   ingest  parse and validate inputs, cache them under <output>/cache
//   train   fit on the cached data; checkpoint, trace CSV, PPMI matrix
//   eval    score a checkpoint on the test split
//   sweep   lambda_S curve and sparsity curve CSVs
//   synth   write a synthetic dataset and a matching config
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include "tcf/checkpoint.hpp"
#include "tcf/common.hpp"
#include "tcf/corpus.hpp"
#include "tcf/evaluation.hpp"
#include "tcf/factor.hpp"
#include "tcf/ppmi.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace tcf::cli {

namespace fs = std::filesystem;

enum ExitCode : int { exit_ok = 0, exit_failure = 1, exit_usage = 2 };

struct RunConfig {
    std::string ratings;
    RatingFileFormat ratings_format = RatingFileFormat::whitespace;
    std::string clicks;
    std::string documents;
    BowScheme bow;
    std::string output_dir = "tcf-out";

    SplitMode mode = SplitMode::in_matrix;
    double test_fraction = 0.2;
    double validation_fraction = 0.08;

    /// sdae.layer_widths is filled in from `sdae_hidden` once the vocabulary is known.
    Hyperparams hyper;
    bool text = true;
    std::vector<Index> sdae_hidden{200};

    std::vector<double> lambda_s_grid{0.0, 0.01, 0.1, 1.0, 10.0, 100.0};
    /// Percent of the ratings kept.
    std::vector<double> sparsity_grid{10.0, 20.0, 50.0, 80.0};
    std::optional<std::pair<double, double>> clamp;
    bool clicks_from_all = false;

    std::uint64_t split_seed() const { return derive_seed(hyper.seed, 21); }
    std::uint64_t subsample_seed() const { return derive_seed(hyper.seed, 22); }
    fs::path cache_dir() const { return fs::path(output_dir) / "cache"; }
};

// ---------------------------------------------------------------------------
// Config <-> JSON

inline Json to_json(const RunConfig& c) {
    Json sdae{{"hidden", c.sdae_hidden},
              {"noise_rate", c.hyper.sdae.noise_rate},
              {"pretrain_epochs", c.hyper.sdae.pretrain_epochs},
              {"learning_rate", c.hyper.sdae.learning_rate},
              {"pretrain_learning_rate", c.hyper.sdae.pretrain_learning_rate},
              {"pretrain_batch_size", c.hyper.sdae.pretrain_batch_size}};
    const Hyperparams& h = c.hyper;
    Json model{{"latent_dim", h.latent_dim},   {"lambda_s", h.lambda_s},       {"lambda_theta", h.lambda_theta},
               {"lambda_beta", h.lambda_beta}, {"lambda_alpha", h.lambda_alpha}, {"lambda_x", h.lambda_x},
               {"lambda_w", h.lambda_w},       {"max_epochs", h.max_epochs},   {"patience", h.patience},
               {"init_stddev", h.init_stddev}, {"text", c.text},               {"sdae", sdae}};
    Json clamp = nullptr;
    if (c.clamp) clamp = Json::array({c.clamp->first, c.clamp->second});
    return Json{{"ratings", c.ratings},
                {"ratings_format", c.ratings_format == RatingFileFormat::whitespace ? "whitespace" : "double_colon"},
                {"clicks", c.clicks},
                {"documents", c.documents},
                {"vocab_size", c.bow.vocab_size},
                {"vocab_scoring", c.bow.scoring == VocabScoring::tfidf ? "tfidf" : "frequency"},
                {"output_dir", c.output_dir},
                {"mode", c.mode == SplitMode::in_matrix ? "in" : "out"},
                {"test_fraction", c.test_fraction},
                {"validation_fraction", c.validation_fraction},
                {"seed", h.seed},
                {"threads", h.threads},
                {"deterministic", h.deterministic},
                {"center", h.center},
                {"clicks_from_all", c.clicks_from_all},
                {"clamp", clamp},
                {"lambda_s_grid", c.lambda_s_grid},
                {"sparsity_grid", c.sparsity_grid},
                {"model", model}};
}

inline void apply_json(RunConfig& c, const Json& j) {
    using detail::read_key;
    detail::check_keys(j,
                       {"ratings", "ratings_format", "clicks", "documents", "vocab_size", "vocab_scoring", "output_dir",
                        "mode", "test_fraction", "validation_fraction", "seed", "threads", "deterministic", "center",
                        "clicks_from_all", "clamp", "lambda_s_grid", "sparsity_grid", "model"},
                       "config");
    const std::string w = "config";
    read_key(j, "ratings", c.ratings, w);
    read_key(j, "clicks", c.clicks, w);
    read_key(j, "documents", c.documents, w);
    read_key(j, "output_dir", c.output_dir, w);
    read_key(j, "vocab_size", c.bow.vocab_size, w);
    read_key(j, "test_fraction", c.test_fraction, w);
    read_key(j, "validation_fraction", c.validation_fraction, w);
    read_key(j, "seed", c.hyper.seed, w);
    read_key(j, "threads", c.hyper.threads, w);
    read_key(j, "deterministic", c.hyper.deterministic, w);
    read_key(j, "center", c.hyper.center, w);
    read_key(j, "clicks_from_all", c.clicks_from_all, w);
    read_key(j, "lambda_s_grid", c.lambda_s_grid, w);
    read_key(j, "sparsity_grid", c.sparsity_grid, w);
    std::string s;
    if (j.contains("ratings_format")) {
        read_key(j, "ratings_format", s, w);
        if (s == "whitespace") c.ratings_format = RatingFileFormat::whitespace;
        else if (s == "double_colon") c.ratings_format = RatingFileFormat::double_colon;
        else throw ConfigError("config: ratings_format must be whitespace or double_colon");
    }
    if (j.contains("vocab_scoring")) {
        read_key(j, "vocab_scoring", s, w);
        if (s == "tfidf") c.bow.scoring = VocabScoring::tfidf;
        else if (s == "frequency") c.bow.scoring = VocabScoring::frequency;
        else throw ConfigError("config: vocab_scoring must be tfidf or frequency");
    }
    if (j.contains("mode")) {
        read_key(j, "mode", s, w);
        c.mode = parse_split_mode(s);
    }
    if (j.contains("clamp")) {
        if (j.at("clamp").is_null()) {
            c.clamp.reset();
        } else {
            std::vector<double> v;
            read_key(j, "clamp", v, w);
            if (v.size() != 2) throw ConfigError("config: clamp must be [lo, hi] or null");
            c.clamp = std::make_pair(v[0], v[1]);
        }
    }
    if (j.contains("model")) {
        const Json& m = j.at("model");
        const std::string mw = "config.model";
        detail::check_keys(m,
                           {"latent_dim", "lambda_s", "lambda_theta", "lambda_beta", "lambda_alpha", "lambda_x",
                            "lambda_w", "max_epochs", "patience", "init_stddev", "text", "sdae"},
                           mw);
        Hyperparams& h = c.hyper;
        read_key(m, "latent_dim", h.latent_dim, mw);
        read_key(m, "lambda_s", h.lambda_s, mw);
        read_key(m, "lambda_theta", h.lambda_theta, mw);
        read_key(m, "lambda_beta", h.lambda_beta, mw);
        read_key(m, "lambda_alpha", h.lambda_alpha, mw);
        read_key(m, "lambda_x", h.lambda_x, mw);
        read_key(m, "lambda_w", h.lambda_w, mw);
        read_key(m, "max_epochs", h.max_epochs, mw);
        read_key(m, "patience", h.patience, mw);
        read_key(m, "init_stddev", h.init_stddev, mw);
        read_key(m, "text", c.text, mw);
        if (m.contains("sdae")) {
            const Json& sd = m.at("sdae");
            const std::string sw = mw + ".sdae";
            detail::check_keys(sd,
                               {"hidden", "noise_rate", "pretrain_epochs", "learning_rate", "pretrain_learning_rate",
                                "pretrain_batch_size"},
                               sw);
            read_key(sd, "hidden", c.sdae_hidden, sw);
            read_key(sd, "noise_rate", h.sdae.noise_rate, sw);
            read_key(sd, "pretrain_epochs", h.sdae.pretrain_epochs, sw);
            read_key(sd, "learning_rate", h.sdae.learning_rate, sw);
            read_key(sd, "pretrain_learning_rate", h.sdae.pretrain_learning_rate, sw);
            read_key(sd, "pretrain_batch_size", h.sdae.pretrain_batch_size, sw);
        }
    }
}

inline RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::exception& e) {
        throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
    RunConfig c;
    apply_json(c, j);
    return c;
}

/// 64-bit FNV-1a of `text`, as 16 hex digits.
inline std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Content hash of the resolved config. The output directory and thread
/// count do not affect results and are left out.
inline std::string run_fingerprint(const RunConfig& c) {
    Json j = to_json(c);
    j.erase("output_dir");
    j.erase("threads");
    return fnv1a_hex(j.dump());
}

/// Hash of the inputs to ingest only; stamps the cache.
inline std::string data_fingerprint(const RunConfig& c) {
    const Json j = to_json(c);
    Json d;
    for (const char* k : {"ratings", "ratings_format", "clicks", "documents", "vocab_size", "vocab_scoring"}) d[k] = j.at(k);
    return fnv1a_hex(d.dump());
}

inline void validate_config(const RunConfig& c) {
    if (c.ratings.empty()) throw ConfigError("no ratings file given (--ratings or \"ratings\" in the config)");
    for (const auto* p : {&c.ratings, &c.clicks, &c.documents})
        if (!p->empty() && !fs::exists(*p)) throw ConfigError("input file not found: " + *p);
    if (c.bow.vocab_size < 1) throw ConfigError("vocab_size must be positive");
    if (c.hyper.latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
    for (Index w : c.sdae_hidden)
        if (w < 1) throw ConfigError("sdae hidden widths must be positive");
    for (double p : c.sparsity_grid)
        if (!(p > 0.0 && p <= 100.0)) throw ConfigError("sparsity grid entries are percentages in (0, 100]");
    if (c.clamp && !(c.clamp->first <= c.clamp->second)) throw ConfigError("clamp: lo must not exceed hi");
}

// ---------------------------------------------------------------------------
// Inputs and the ingest cache

struct Inputs {
    RatingDataset ratings;
    std::optional<ClickDataset> clicks;
    DocTermMatrix docs;
    bool has_docs = false;
};

namespace detail {

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open input file: " + path);
    return in;
}

/// Prefixes parse and validation errors with the offending file.
template <class Fn>
auto with_path(const std::string& path, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const ParseError& e) {
        throw Error(path + ": " + e.what());
    } catch (const ValidationError& e) {
        throw Error(path + ": " + e.what());
    }
}

inline void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
    if (!out) throw Error("write failed: " + path.string());
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string cache_header(const std::string& fp) { return "# tcf-cache fingerprint=" + fp + "\n"; }

}  // namespace detail

/// Parses the raw input files named by the config.
inline Inputs read_inputs(const RunConfig& c) {
    validate_config(c);
    Inputs in;
    {
        auto f = detail::open_input(c.ratings);
        in.ratings = detail::with_path(c.ratings, [&] { return parse_ratings(f, c.ratings_format); });
    }
    if (!c.clicks.empty()) {
        auto f = detail::open_input(c.clicks);
        in.clicks = detail::with_path(c.clicks, [&] { return parse_clicks(f, in.ratings.users, in.ratings.items); });
        // Click-only users and items join the index space.
        in.ratings.n_users = in.ratings.users.size();
        in.ratings.n_items = in.ratings.items.size();
        in.clicks->n_users = in.ratings.n_users;
        in.clicks->n_items = in.ratings.n_items;
    }
    if (!c.documents.empty()) {
        auto f = detail::open_input(c.documents);
        in.docs = detail::with_path(c.documents, [&] { return parse_documents(f, in.ratings.items, c.bow); });
        in.has_docs = true;
    } else {
        in.docs = empty_documents(in.ratings.n_items);
    }
    return in;
}

inline void write_cache(const RunConfig& c, const Inputs& in) {
    const fs::path dir = c.cache_dir();
    fs::create_directories(dir);
    const std::string fp = data_fingerprint(c);
    const std::string header = detail::cache_header(fp);
    using tcf::detail::format_double;

    std::string users = header, items = header, ratings = header;
    for (const auto& id : in.ratings.users.ids()) users += id + '\n';
    for (const auto& id : in.ratings.items.ids()) items += id + '\n';
    for (const auto& r : in.ratings.entries)
        ratings += std::to_string(r.user) + ' ' + std::to_string(r.item) + ' ' + format_double(r.value) + '\n';
    detail::write_file(dir / "users.txt", users);
    detail::write_file(dir / "items.txt", items);
    detail::write_file(dir / "ratings.txt", ratings);

    Json manifest{{"fingerprint", fp},
                  {"n_users", in.ratings.n_users},
                  {"n_items", in.ratings.n_items},
                  {"n_ratings", in.ratings.size()},
                  {"n_clicks", in.clicks ? Json(in.clicks->entries.size()) : Json(nullptr)},
                  {"n_documents", nullptr},
                  {"vocab_size", 0}};
    if (in.clicks) {
        std::string clicks = header;
        for (const auto& k : in.clicks->entries) clicks += std::to_string(k.user) + ' ' + std::to_string(k.item) + '\n';
        detail::write_file(dir / "clicks.txt", clicks);
    }
    if (in.has_docs) {
        std::string vocab = header, docs = header;
        for (const auto& t : in.docs.vocab) vocab += t + '\n';
        std::size_t n_docs = 0;
        for (Index i = 0; i < in.docs.n_items; ++i) {
            if (!in.docs.has_text[static_cast<std::size_t>(i)]) continue;
            ++n_docs;
            docs += std::to_string(i);
            for (Index v = 0; v < in.docs.vocab_size(); ++v)
                if (in.docs.rows(i, v) != 0.0) docs += ' ' + std::to_string(v) + ':' + format_double(in.docs.rows(i, v));
            docs += '\n';
        }
        detail::write_file(dir / "vocab.txt", vocab);
        detail::write_file(dir / "documents.txt", docs);
        manifest["n_documents"] = n_docs;
        manifest["vocab_size"] = in.docs.vocab_size();
    }
    detail::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

namespace detail {

/// Lines of a cache file after its fingerprint header.
inline std::vector<std::string> cache_lines(const fs::path& path) {
    std::istringstream ss(read_file(path));
    std::vector<std::string> lines;
    std::string line;
    bool first = true;
    while (std::getline(ss, line)) {
        if (first) {
            first = false;
            if (line.rfind("# tcf-cache fingerprint=", 0) == 0) continue;
        }
        lines.push_back(line);
    }
    return lines;
}

[[noreturn]] inline void corrupt_cache(const fs::path& path, std::size_t line) {
    throw ValidationError("corrupt cache file " + path.string() + " at line " + std::to_string(line + 2));
}

}  // namespace detail

/// Loads what `ingest` cached; refuses a cache built from different inputs.
inline Inputs load_cache(const RunConfig& c) {
    const fs::path dir = c.cache_dir();
    if (!fs::exists(dir / "manifest.json"))
        throw ConfigError("no ingested data under " + dir.string() + "; run 'tcf ingest' first");
    Json manifest;
    try {
        manifest = Json::parse(detail::read_file(dir / "manifest.json"));
    } catch (const Json::exception&) {
        throw ValidationError("corrupt cache manifest in " + dir.string());
    }
    if (manifest.value("fingerprint", "") != data_fingerprint(c))
        throw ConfigError("the cache in " + dir.string() + " was built from different inputs; re-run 'tcf ingest'");

    Inputs in;
    in.ratings.users = IndexMap::from_ids(detail::cache_lines(dir / "users.txt"));
    in.ratings.items = IndexMap::from_ids(detail::cache_lines(dir / "items.txt"));
    in.ratings.n_users = in.ratings.users.size();
    in.ratings.n_items = in.ratings.items.size();
    const auto rating_lines = detail::cache_lines(dir / "ratings.txt");
    for (std::size_t k = 0; k < rating_lines.size(); ++k) {
        std::istringstream ls(rating_lines[k]);
        Rating r{};
        if (!(ls >> r.user >> r.item >> r.value)) detail::corrupt_cache(dir / "ratings.txt", k);
        in.ratings.entries.push_back(r);
    }
    in.ratings.validate(true);
    if (fs::exists(dir / "clicks.txt")) {
        ClickDataset clicks;
        clicks.n_users = in.ratings.n_users;
        clicks.n_items = in.ratings.n_items;
        const auto lines = detail::cache_lines(dir / "clicks.txt");
        for (std::size_t k = 0; k < lines.size(); ++k) {
            std::istringstream ls(lines[k]);
            Click ck{};
            if (!(ls >> ck.user >> ck.item)) detail::corrupt_cache(dir / "clicks.txt", k);
            clicks.entries.push_back(ck);
        }
        in.clicks = std::move(clicks);
    }
    if (fs::exists(dir / "documents.txt")) {
        in.has_docs = true;
        in.docs.n_items = in.ratings.n_items;
        in.docs.vocab = detail::cache_lines(dir / "vocab.txt");
        in.docs.rows = Matrix::Zero(in.docs.n_items, in.docs.vocab_size());
        in.docs.has_text.assign(static_cast<std::size_t>(in.docs.n_items), 0);
        const auto lines = detail::cache_lines(dir / "documents.txt");
        for (std::size_t k = 0; k < lines.size(); ++k) {
            std::istringstream ls(lines[k]);
            Index item = -1;
            if (!(ls >> item) || item < 0 || item >= in.docs.n_items) detail::corrupt_cache(dir / "documents.txt", k);
            in.docs.has_text[static_cast<std::size_t>(item)] = 1;
            std::string cell;
            while (ls >> cell) {
                const auto colon = cell.find(':');
                if (colon == std::string::npos) detail::corrupt_cache(dir / "documents.txt", k);
                const Index v = std::stoll(cell.substr(0, colon));
                if (v < 0 || v >= in.docs.vocab_size()) detail::corrupt_cache(dir / "documents.txt", k);
                in.docs.rows(item, v) = std::stod(cell.substr(colon + 1));
            }
        }
    } else {
        in.docs = empty_documents(in.ratings.n_items);
    }
    return in;
}

/// Hyperparameters with the network shape filled in for the loaded vocabulary.
inline Hyperparams resolve_hyper(const RunConfig& c, const Inputs& in) {
    Hyperparams h = c.hyper;
    if (c.text && in.has_docs) {
        std::vector<Index> hidden = c.sdae_hidden;
        hidden.push_back(h.latent_dim);
        const SdaeConfig shape = SdaeConfig::symmetric(in.docs.vocab_size(), hidden);
        h.sdae.layer_widths = shape.layer_widths;
    } else {
        h.sdae.layer_widths.clear();
    }
    h.validate();
    return h;
}

inline ExperimentSpec experiment_spec(const RunConfig& c) {
    ExperimentSpec s;
    s.mode = c.mode;
    s.test_fraction = c.test_fraction;
    s.validation_fraction = c.validation_fraction;
    s.split_seed = c.split_seed();
    s.subsample_seed = c.subsample_seed();
    s.clicks_from_all = c.clicks_from_all;
    s.eval.clamp = c.clamp;
    s.eval.threads = c.hyper.threads;
    return s;
}

inline ExperimentData experiment_data(const Inputs& in) {
    return ExperimentData{in.ratings, in.clicks ? &*in.clicks : nullptr, in.docs};
}

// ---------------------------------------------------------------------------
// Commands

inline int cmd_ingest(const RunConfig& c, std::ostream& log) {
    const Inputs in = read_inputs(c);
    write_cache(c, in);
    log << "ingest: " << in.ratings.n_users << " users, " << in.ratings.n_items << " items, " << in.ratings.size()
        << " ratings";
    if (in.clicks) log << ", " << in.clicks->entries.size() << " clicks";
    if (in.has_docs) {
        std::size_t n = 0;
        for (char t : in.docs.has_text) n += t ? 1 : 0;
        log << ", " << n << " documents over " << in.docs.vocab_size() << " terms";
    }
    log << " -> " << c.cache_dir().string() << '\n';
    return exit_ok;
}

inline int cmd_train(const RunConfig& c, bool dry_run, std::ostream& out, std::ostream& log) {
    const std::string fp = run_fingerprint(c);
    if (dry_run) {
        validate_config(c);
        const Inputs in = fs::exists(c.cache_dir() / "manifest.json") ? load_cache(c) : read_inputs(c);
        const Hyperparams h = resolve_hyper(c, in);
        out << to_json(c).dump(2) << '\n';
        out << "fingerprint=" << fp << '\n'
            << "run=" << h.label() << '\n'
            << "n_users=" << in.ratings.n_users << '\n'
            << "n_items=" << in.ratings.n_items << '\n'
            << "n_ratings=" << in.ratings.size() << '\n'
            << "latent_dim=" << h.latent_dim << '\n'
            << "vocab_size=" << (in.has_docs ? in.docs.vocab_size() : 0) << '\n'
            << "layer_widths=" << Json(h.sdae.layer_widths).dump() << '\n';
        return exit_ok;
    }

    const Inputs in = load_cache(c);
    const Hyperparams h = resolve_hyper(c, in);
    const ExperimentSpec spec = experiment_spec(c);
    const ExperimentData data = experiment_data(in);
    EvalSplit split = make_split(in.ratings, spec.mode, spec.test_fraction, spec.validation_fraction, spec.split_seed);
    const PpmiMatrix s = experiment_ppmi(experiment_clicks(data, split.train, spec.clicks_from_all), in.ratings.n_items,
                                         h.lambda_s != 0.0);
    const TrainingData td{split.train, split.validation, s, in.docs, split.mode};
    const TrainResult fit = train(td, h, [&](const EpochRecord& e) {
        log << "epoch " << e.epoch << " loss=" << e.loss << " validation_rmse=" << e.validation_rmse << '\n';
    });

    const fs::path dir = c.output_dir;
    fs::create_directories(dir);
    Checkpoint ck{fit.state, h, in.ratings.users.ids(), in.ratings.items.ids(), in.docs.vocab, c.mode, fit.trace.label,
                  fp};
    if (!h.text_enabled()) ck.vocab.clear();
    {
        std::ostringstream bytes;
        save_checkpoint(bytes, ck);
        detail::write_file(dir / "checkpoint.tcf", bytes.str());
    }
    std::ostringstream trace;
    write_trace_csv(trace, fit.trace, c.mode, h.lambda_s, fp);
    detail::write_file(dir / "trace.csv", trace.str());
    std::ostringstream ppmi;
    ppmi << "# fingerprint=" << fp << '\n';
    write_ppmi(ppmi, s);
    detail::write_file(dir / "ppmi.txt", ppmi.str());
    std::ostringstream summary;
    summary << "run=" << fit.trace.label << '\n'
            << "fingerprint=" << fp << '\n'
            << "mode=" << to_string(c.mode) << '\n'
            << "epochs=" << fit.trace.epochs.size() << '\n'
            << "best_epoch=" << fit.trace.best_epoch << '\n'
            << "best_validation_rmse=" << tcf::detail::format_double(fit.trace.best_validation_rmse) << '\n'
            << "n_train=" << split.train.size() << '\n'
            << "n_validation=" << split.validation.size() << '\n'
            << "n_test=" << split.test.size() << '\n'
            << "n_ppmi_pairs=" << s.n_pairs() << '\n';
    detail::write_file(dir / "train_report.txt", summary.str());
    log << "train: " << fit.trace.label << ", best epoch " << fit.trace.best_epoch << ", validation RMSE "
        << fit.trace.best_validation_rmse << " -> " << (dir / "checkpoint.tcf").string() << '\n';
    return exit_ok;
}

inline int cmd_eval(const RunConfig& c, const std::string& checkpoint_path, std::ostream& out, std::ostream& log) {
    const std::string fp = run_fingerprint(c);
    const Inputs in = load_cache(c);
    const fs::path path = checkpoint_path.empty() ? fs::path(c.output_dir) / "checkpoint.tcf" : fs::path(checkpoint_path);
    if (!fs::exists(path)) throw ConfigError("checkpoint not found: " + path.string());
    std::ifstream f(path, std::ios::binary);
    const Checkpoint ck = load_checkpoint(f);
    if (ck.user_ids != in.ratings.users.ids() || ck.item_ids != in.ratings.items.ids())
        throw ShapeError("checkpoint " + path.string() + " was trained on different users or items (" +
                         std::to_string(ck.user_ids.size()) + " x " + std::to_string(ck.item_ids.size()) +
                         ", data has " + std::to_string(in.ratings.n_users) + " x " +
                         std::to_string(in.ratings.n_items) + ")");
    if (c.mode == SplitMode::out_of_matrix && ck.vocab != in.docs.vocab)
        throw ShapeError("checkpoint vocabulary differs from the ingested documents");
    if (ck.mode != c.mode)
        log << "warning: checkpoint was trained with the " << to_string(ck.mode) << " split, evaluating "
            << to_string(c.mode) << '\n';

    const ExperimentSpec spec = experiment_spec(c);
    const EvalSplit split = make_split(in.ratings, spec.mode, spec.test_fraction, spec.validation_fraction, spec.split_seed);
    EvalReport report = evaluate(ck.state, split, in.docs, spec.eval);
    report.label = ck.label;
    report.lambda_s = ck.hyper.lambda_s;
    report.fingerprint = fp;

    const fs::path dir = c.output_dir;
    fs::create_directories(dir);
    std::ostringstream text, csv;
    write_report(text, report);
    write_report_csv(csv, report);
    const std::string stem = std::string("eval_") + to_string(c.mode);
    detail::write_file(dir / (stem + ".txt"), text.str());
    detail::write_file(dir / (stem + ".csv"), csv.str());
    out << text.str();
    return exit_ok;
}

inline int cmd_sweep(const RunConfig& c, std::ostream& log) {
    const std::string fp = run_fingerprint(c);
    const Inputs in = load_cache(c);
    const Hyperparams h = resolve_hyper(c, in);
    const ExperimentSpec spec = experiment_spec(c);
    const ExperimentData data = experiment_data(in);
    const fs::path dir = c.output_dir;
    fs::create_directories(dir);
    if (!c.lambda_s_grid.empty()) {
        const auto curve = sweep_lambda_s(data, spec, h, c.lambda_s_grid);
        std::ostringstream csv;
        write_sweep_csv(csv, curve, c.mode, fp);
        detail::write_file(dir / "sweep.csv", csv.str());
        for (const auto& p : curve)
            log << "lambda_s=" << p.lambda_s << " test_rmse=" << p.test_rmse << " (epoch " << p.best_epoch << ")\n";
    }
    if (!c.sparsity_grid.empty()) {
        std::vector<double> fractions;
        for (double p : c.sparsity_grid) fractions.push_back(p / 100.0);
        std::ostringstream csv;
        const auto curve = sparsity_curve(data, spec, h, fractions);
        write_sparsity_csv(csv, curve, c.mode, h.lambda_s, fp);
        // Reference rows for the same subsets without clicks or text.
        if (h.label() != "pmf-degenerate" && c.mode == SplitMode::in_matrix) {
            Hyperparams pmf = h;
            pmf.lambda_s = 0.0;
            pmf.sdae.layer_widths.clear();
            std::ostringstream more;
            write_sparsity_csv(more, sparsity_curve(data, spec, pmf, fractions), c.mode, 0.0, fp);
            const std::string rows = more.str();
            csv << rows.substr(rows.find('\n') + 1);
        }
        detail::write_file(dir / "sparsity.csv", csv.str());
        for (const auto& p : curve) log << p.dataset << " test_rmse=" << p.test_rmse << '\n';
    }
    return exit_ok;
}

struct SynthOptions {
    std::string output_dir = "tcf-synth";
    SyntheticConfig data;
    std::uint64_t seed = 1;
};

/// Writes ratings, clicks and documents from the synthetic generator, plus a
/// config.json that trains on them. Ratings are shifted to be positive.
inline int cmd_synth(const SynthOptions& o, std::ostream& log) {
    const SyntheticData d = generate_synthetic(o.data, o.seed);
    const fs::path dir = o.output_dir;
    fs::create_directories(dir);
    double lo = 0.0;
    for (const auto& r : d.ratings.entries) lo = std::min(lo, r.value);
    const double shift = lo <= 0.0 ? 1.0 - lo : 0.0;
    using tcf::detail::format_double;
    std::string ratings, clicks, docs;
    for (const auto& r : d.ratings.entries)
        ratings += d.ratings.users.id(r.user) + '\t' + d.ratings.items.id(r.item) + '\t' + format_double(r.value + shift) + '\n';
    for (const auto& k : d.clicks.entries)
        clicks += d.ratings.users.id(k.user) + '\t' + d.ratings.items.id(k.item) + '\n';
    for (Index i = 0; i < d.docs.n_items; ++i) {
        std::string line = d.ratings.items.id(i) + '\t';
        bool first = true;
        for (Index v = 0; v < d.doc_counts.cols(); ++v)
            for (int n = 0; n < static_cast<int>(d.doc_counts(i, v)); ++n) {
                if (!first) line += ' ';
                line += d.docs.vocab[static_cast<std::size_t>(v)];
                first = false;
            }
        docs += line + '\n';
    }
    detail::write_file(dir / "ratings.txt", ratings);
    detail::write_file(dir / "clicks.txt", clicks);
    detail::write_file(dir / "documents.txt", docs);

    RunConfig c;
    c.ratings = (dir / "ratings.txt").string();
    c.clicks = (dir / "clicks.txt").string();
    c.documents = (dir / "documents.txt").string();
    c.output_dir = (dir / "run").string();
    c.bow.vocab_size = o.data.vocab_size;
    c.hyper.latent_dim = o.data.latent_dim;
    c.sdae_hidden = {std::clamp<Index>(o.data.vocab_size / 2, 2 * o.data.latent_dim, 200)};
    c.hyper.center = true;
    c.hyper.seed = o.seed;
    detail::write_file(dir / "config.json", to_json(c).dump(2) + "\n");
    log << "synth: " << d.ratings.size() << " ratings (shifted by " << shift << "), " << d.clicks.entries.size()
        << " clicks, " << d.docs.n_items << " documents -> " << dir.string() << '\n';
    return exit_ok;
}

// ---------------------------------------------------------------------------
// Argument parsing

namespace detail {

inline std::vector<double> parse_list(const std::string& text, const char* what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError(std::string(what) + ": '" + item + "' is not a number");
        }
    }
    if (out.empty()) throw ConfigError(std::string(what) + ": empty list");
    return out;
}

struct Flags {
    std::string config, output, ratings, clicks, documents, mode, clamp, lambda_s_grid, sparsity_grid, checkpoint;
    std::uint64_t seed = 0;
    int threads = 1;
    bool deterministic = true;
    bool clicks_from_all = false;
    bool dry_run = false;
    double lambda_s = 0.0;
    std::vector<CLI::Option*> o_seed, o_threads, o_det, o_lambda;
};

inline bool given(const std::vector<CLI::Option*>& opts) {
    for (const auto* o : opts)
        if (o->count() > 0) return true;
    return false;
}

inline void add_common(CLI::App* sub, Flags& f) {
    sub->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--output", f.output, "output directory (overrides output_dir)");
    sub->add_option("--ratings", f.ratings, "ratings file: user item rating per line");
    sub->add_option("--clicks", f.clicks, "click log: user item per line");
    sub->add_option("--documents", f.documents, "item documents: item_id<TAB>text per line");
    f.o_seed.push_back(sub->add_option("--seed", f.seed, "random seed"));
    f.o_threads.push_back(sub->add_option("--threads", f.threads, "worker threads")->check(CLI::PositiveNumber));
    f.o_det.push_back(sub->add_flag("--deterministic,!--no-deterministic", f.deterministic,
                                    "fixed-order reductions for bit-exact reruns (default on)"));
    sub->add_option("--mode", f.mode, "split and predictor: in | out")->check(CLI::IsMember({"in", "out"}));
    sub->add_flag("--clicks-from-all", f.clicks_from_all, "binarize all ratings (not only training) into clicks");
    sub->add_option("--clamp", f.clamp, "clamp predictions to lo,hi");
}

inline RunConfig resolve(const Flags& f) {
    RunConfig c = f.config.empty() ? RunConfig{} : load_config_file(f.config);
    if (!f.output.empty()) c.output_dir = f.output;
    if (!f.ratings.empty()) c.ratings = f.ratings;
    if (!f.clicks.empty()) c.clicks = f.clicks;
    if (!f.documents.empty()) c.documents = f.documents;
    if (given(f.o_seed)) c.hyper.seed = f.seed;
    if (given(f.o_threads)) c.hyper.threads = f.threads;
    if (given(f.o_det)) c.hyper.deterministic = f.deterministic;
    if (!f.mode.empty()) c.mode = parse_split_mode(f.mode);
    if (f.clicks_from_all) c.clicks_from_all = true;
    if (!f.clamp.empty()) {
        const auto v = parse_list(f.clamp, "--clamp");
        if (v.size() != 2) throw ConfigError("--clamp expects lo,hi");
        c.clamp = std::make_pair(v[0], v[1]);
    }
    if (!f.lambda_s_grid.empty()) c.lambda_s_grid = parse_list(f.lambda_s_grid, "--lambda-s-grid");
    if (!f.sparsity_grid.empty()) c.sparsity_grid = parse_list(f.sparsity_grid, "--sparsity-grid");
    if (given(f.o_lambda)) c.hyper.lambda_s = f.lambda_s;
    return c;
}

}  // namespace detail

/// Entry point behind the `tcf` binary; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Text and click aware rating factorization"};
    app.require_subcommand(1);
    detail::Flags f;
    SynthOptions synth;

    auto* ingest = app.add_subcommand("ingest", "parse and validate inputs into the cache");
    detail::add_common(ingest, f);
    auto* trn = app.add_subcommand("train", "fit a model and write a checkpoint");
    detail::add_common(trn, f);
    trn->add_flag("--dry-run", f.dry_run, "print the resolved config and dimensions, write nothing");
    f.o_lambda.push_back(trn->add_option("--lambda-s", f.lambda_s, "weight of the click term"));
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    detail::add_common(ev, f);
    ev->add_option("--checkpoint", f.checkpoint, "checkpoint path (default <output>/checkpoint.tcf)");
    auto* sw = app.add_subcommand("sweep", "lambda_S and sparsity curves");
    detail::add_common(sw, f);
    sw->add_option("--lambda-s-grid", f.lambda_s_grid, "comma-separated lambda_S values");
    sw->add_option("--sparsity-grid", f.sparsity_grid, "comma-separated percentages of ratings kept");
    auto* sy = app.add_subcommand("synth", "write a synthetic dataset");
    sy->add_option("--output", synth.output_dir, "output directory");
    sy->add_option("--seed", synth.seed, "random seed");
    sy->add_option("--users", synth.data.n_users, "number of users");
    sy->add_option("--items", synth.data.n_items, "number of items");
    sy->add_option("--latent-dim", synth.data.latent_dim, "true latent dimension");
    sy->add_option("--vocab", synth.data.vocab_size, "vocabulary size");
    sy->add_option("--density", synth.data.density, "fraction of observed ratings");
    sy->add_option("--click-density", synth.data.click_density, "mean click probability");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_usage;
    }

    try {
        if (sy->parsed()) return cmd_synth(synth, err);
        const RunConfig c = detail::resolve(f);
        if (ingest->parsed()) return cmd_ingest(c, err);
        if (trn->parsed()) return cmd_train(c, f.dry_run, out, err);
        if (ev->parsed()) return cmd_eval(c, f.checkpoint, out, err);
        return cmd_sweep(c, err);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    } catch (const TrainingError& e) {
        err << "error: training diverged at epoch " << e.epoch() << ": " << e.what() << '\n';
        return exit_failure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_failure;
    }
}

}  // namespace tcf::cli
