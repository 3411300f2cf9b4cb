// drum: prepare / train / mine / eval / inductive-split / gradcheck
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <thread>

#include <CLI11.hpp>

#include "drum/checkpoint.hpp"
#include "drum/eval.hpp"
#include "drum/gradcheck.hpp"
#include "drum/kg.hpp"
#include "drum/model.hpp"
#include "drum/rules.hpp"
#include "drum/trainer.hpp"

namespace fs = std::filesystem;
using namespace drum;

namespace {

std::uint64_t fnv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot hash input file: " + path);
    std::uint64_t h = 1469598103934665603ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
        if (!in) break;
    }
    return h;
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::vector<std::pair<std::string, std::string>>& config,
                    const std::vector<std::string>& inputs) {
    fs::create_directories(out_dir);
    std::ofstream out(out_dir + "/manifest-" + command + ".txt", std::ios::binary);
    if (!out) throw IoError("cannot write manifest in " + out_dir);
    out << "command = " << command << "\n";
    for (const auto& [k, v] : config) out << k << " = " << v << "\n";
    for (const auto& path : inputs) {
        char hex[32];
        std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(fnv_file(path)));
        out << "input " << path << " fnv64=" << hex << "\n";
    }
}

struct DataPaths {
    std::string facts, train, valid, test;
};

// --dataset name resolves raw files under DRUM_DATA_DIR; prepared
// facts/train live in the run directory written by `prepare`.
std::string dataset_root(const std::string& dataset) {
    const char* env = std::getenv("DRUM_DATA_DIR");
    std::string root = env ? env : "data";
    return root + "/" + dataset;
}

struct ModelFlags {
    int T = 2;
    int L = 4;
    int hidden_dim = 128;
    int embed_dim = 128;
    double epsilon_log = 1e-10;
};

struct TrainFlags {
    double lr = 0.001;
    int batch_size = 64;
    int epochs = 10;
    double clip_norm = 5.0;
    int patience = 5;
    bool parallel_batch = false;
};

void add_model_flags(CLI::App* cmd, ModelFlags& m) {
    cmd->add_option("--T", m.T, "maximum rule length");
    cmd->add_option("--L", m.L, "rank (number of rank-1 terms)");
    cmd->add_option("--hidden-dim", m.hidden_dim, "recurrent hidden size");
    cmd->add_option("--embed-dim", m.embed_dim, "head embedding size");
    cmd->add_option("--epsilon-log", m.epsilon_log, "log guard epsilon");
}

struct LoadedSplits {
    kg::Vocabulary vocab;
    kg::TripleStore facts_raw, train_raw, valid_raw, test_raw;
    kg::TripleStore facts_aug, train_aug;
};

LoadedSplits load_splits(const DataPaths& p, bool need_test) {
    LoadedSplits s;
    auto facts = kg::load_triples(p.facts, s.vocab);
    auto train = kg::load_triples(p.train, s.vocab);
    s.facts_raw = std::move(facts.store);
    s.train_raw = std::move(train.store);
    if (!p.valid.empty()) s.valid_raw = kg::load_triples(p.valid, s.vocab).store;
    if (need_test) s.test_raw = kg::load_triples(p.test, s.vocab).store;
    int n = s.vocab.entity_count();
    for (kg::TripleStore* st : {&s.facts_raw, &s.train_raw, &s.valid_raw, &s.test_raw}) {
        st->entity_count = n;
        st->relation_count = s.vocab.relation_count();
    }
    s.facts_aug = kg::augment_relations(s.facts_raw, s.vocab);
    s.train_aug = kg::augment_relations(s.train_raw, s.vocab);
    for (kg::TripleStore* st : {&s.facts_raw, &s.train_raw, &s.valid_raw, &s.test_raw, &s.facts_aug, &s.train_aug})
        st->relation_count = s.vocab.relation_count();
    return s;
}

eval::FilterIndex build_filter(const LoadedSplits& s) {
    eval::FilterIndex filter;
    filter.add_store(s.facts_raw, s.vocab);
    filter.add_store(s.train_raw, s.vocab);
    if (!s.valid_raw.triples.empty()) filter.add_store(s.valid_raw, s.vocab);
    if (!s.test_raw.triples.empty()) filter.add_store(s.test_raw, s.vocab);
    filter.finalize();
    return filter;
}

int auto_threads(int flag) {
    if (flag > 0) return flag;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

std::string fmt(double v, const char* spec = "%.6f") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

int cmd_prepare(const std::string& train_path, double ratio, std::uint64_t seed, const std::string& out) {
    kg::Vocabulary vocab;
    auto loaded = kg::load_triples(train_path, vocab);
    if (loaded.duplicates_dropped)
        std::cout << "deduplicated " << loaded.duplicates_dropped << " repeated triple(s)\n";
    auto [facts, train] = kg::split_facts_train(loaded.store, ratio, seed);
    fs::create_directories(out);
    kg::save_triples(out + "/facts.txt", facts, vocab);
    kg::save_triples(out + "/train.txt", train, vocab);
    vocab.save(out + "/vocab.tsv");
    write_manifest(out, "prepare",
                   {{"train", train_path}, {"ratio", fmt(ratio, "%.3f")}, {"seed", std::to_string(seed)}},
                   {train_path});
    std::cout << "prepare: " << loaded.store.size() << " triples -> facts " << facts.size() << " / train "
              << train.size() << " (entities " << vocab.entity_count() << ", relations "
              << vocab.relation_count() << ")\n";
    return 0;
}

int cmd_train(const DataPaths& paths, const ModelFlags& mf, const TrainFlags& tf, std::uint64_t seed,
              int threads, const std::string& out) {
    LoadedSplits s = load_splits(paths, false);
    auto ops = kg::build_operator_slots(s.facts_aug, s.vocab);

    model::ModelConfig mc;
    mc.max_rule_length = mf.T;
    mc.rank = mf.L;
    mc.hidden_dim = mf.hidden_dim;
    mc.embed_dim = mf.embed_dim;
    mc.operator_count = static_cast<int>(ops.size());
    mc.epsilon_log = mf.epsilon_log;
    mc.seed = seed;
    model::DrumModel model(mc, 2 * s.vocab.original_relation_count());

    train::TrainConfig tc;
    tc.learning_rate = tf.lr;
    tc.batch_size = tf.batch_size;
    tc.max_epochs = tf.epochs;
    tc.clip_norm = tf.clip_norm;
    tc.patience = tf.patience;
    tc.seed = seed;
    tc.threads = tf.parallel_batch ? auto_threads(threads) : 1;

    train::ValidationFn validation;
    std::optional<eval::FilterIndex> val_filter;
    std::vector<kg::SparseAdjacency> val_ops;
    if (!s.valid_raw.triples.empty()) {
        eval::FilterIndex f;
        f.add_store(s.facts_raw, s.vocab);
        f.add_store(s.train_raw, s.vocab);
        f.add_store(s.valid_raw, s.vocab);
        f.finalize();
        val_filter = std::move(f);
        kg::TripleStore visible = s.facts_aug;
        for (const auto& t : s.train_aug.triples) visible.triples.push_back(t);
        val_ops = kg::build_operator_slots(visible, s.vocab);
        validation = [&](const model::DrumModel& m) {
            eval::Scorer scorer = [&](int x, int head) {
                return model::score_all_tails(m, head, val_ops, x);
            };
            eval::EvalOptions opt;
            opt.threads = auto_threads(threads);
            return eval::evaluate(scorer, s.valid_raw, s.vocab, *val_filter, opt).mrr;
        };
    }

    fs::create_directories(out);
    std::ofstream log(out + "/train_log.tsv", std::ios::binary);
    if (!log) throw IoError("cannot write " + out + "/train_log.tsv");
    train::EpochSink sink = [&](const train::EpochLog& e) {
        std::string val = e.val_mrr ? fmt(*e.val_mrr) : "-";
        log << e.epoch << '\t' << fmt(e.mean_loss) << '\t' << val << '\t' << fmt(e.seconds, "%.3f") << '\n';
        log.flush();
        std::cout << "epoch " << e.epoch << " loss " << fmt(e.mean_loss) << " val_mrr " << val << " ("
                  << fmt(e.seconds, "%.1f") << "s, " << e.queries << " queries)\n";
    };

    train::train(model, s.train_aug, ops, tc, validation, sink);
    model::save_checkpoint(out + "/checkpoint.bin", model, s.vocab.content_hash());
    s.vocab.save(out + "/vocab.tsv");

    std::vector<std::string> inputs{paths.facts, paths.train};
    if (!paths.valid.empty()) inputs.push_back(paths.valid);
    write_manifest(out, "train",
                   {{"T", std::to_string(mf.T)},
                    {"L", std::to_string(mf.L)},
                    {"hidden_dim", std::to_string(mf.hidden_dim)},
                    {"embed_dim", std::to_string(mf.embed_dim)},
                    {"lr", fmt(tf.lr)},
                    {"batch_size", std::to_string(tf.batch_size)},
                    {"epochs", std::to_string(tf.epochs)},
                    {"clip_norm", fmt(tf.clip_norm)},
                    {"patience", std::to_string(tf.patience)},
                    {"seed", std::to_string(seed)}},
                   inputs);
    std::cout << "checkpoint written to " << out << "/checkpoint.bin\n";
    return 0;
}

int cmd_mine(const std::string& checkpoint, const std::string& vocab_path, double min_conf,
             bool exhaustive, const std::string& out) {
    kg::Vocabulary vocab = kg::Vocabulary::load(vocab_path);
    if (!vocab.augmented()) {
        // vocab dumps from `prepare` predate augmentation
        vocab.augment();
    }
    model::DrumModel model = model::load_checkpoint(checkpoint, vocab.content_hash());
    rules::RuleList all;
    for (int head = 0; head < model.head_count(); ++head) {
        model::CoefficientTensor coeffs = model.coefficients(head);
        double threshold = min_conf > 0.0 ? min_conf : rules::default_min_confidence(coeffs);
        auto list = rules::extract_rules(coeffs, head, threshold, exhaustive);
        if (!list.empty()) all.by_head.emplace(head, std::move(list));
    }
    fs::create_directories(out);
    rules::save_rules(out + "/rules.txt", all, vocab);
    write_manifest(out, "mine",
                   {{"checkpoint", checkpoint}, {"min_conf", fmt(min_conf)},
                    {"rules", std::to_string(all.rule_count())}},
                   {checkpoint, vocab_path});
    std::cout << "mined " << all.rule_count() << " rules over " << all.by_head.size() << " heads -> " << out
              << "/rules.txt\n";
    return 0;
}

int cmd_eval(const DataPaths& paths, const std::string& checkpoint, const std::string& rules_path,
             bool tail_only, int threads, const std::string& out) {
    LoadedSplits s = load_splits(paths, true);
    if (s.test_raw.triples.empty()) throw std::invalid_argument("eval: empty test store");
    eval::FilterIndex filter = build_filter(s);

    // scoring operators see facts + train, never test edges
    kg::TripleStore visible = s.facts_aug;
    for (const auto& t : s.train_aug.triples) visible.triples.push_back(t);
    auto ops = kg::build_operator_slots(visible, s.vocab);

    eval::Scorer scorer;
    std::optional<model::DrumModel> model;
    std::optional<rules::RuleList> rule_list;
    if (!checkpoint.empty()) {
        model.emplace(model::load_checkpoint(checkpoint, s.vocab.content_hash()));
        scorer = [&](int x, int head) { return model::score_all_tails(*model, head, ops, x); };
    } else {
        rule_list.emplace(rules::load_rules(rules_path, s.vocab));
        eval::RuleScorer rs(*rule_list, ops, &std::cerr);
        scorer = [rs](int x, int head) { return rs(x, head); };
    }

    eval::EvalOptions opt;
    opt.tail_only = tail_only;
    opt.threads = auto_threads(threads);
    eval::Metrics m = eval::evaluate(scorer, s.test_raw, s.vocab, filter, opt);

    fs::create_directories(out);
    std::ofstream rec(out + "/metrics.txt", std::ios::binary);
    rec << m.record_line() << "\n";
    std::vector<std::string> inputs{paths.facts, paths.train, paths.test};
    if (!paths.valid.empty()) inputs.push_back(paths.valid);
    if (!checkpoint.empty()) inputs.push_back(checkpoint);
    if (!rules_path.empty()) inputs.push_back(rules_path);
    write_manifest(out, "eval",
                   {{"scorer", checkpoint.empty() ? "rules" : "model"},
                    {"tail_only", tail_only ? "1" : "0"}},
                   inputs);
    std::cout << m.record_line() << "\n";
    return 0;
}

int cmd_inductive_split(const std::string& train_path, const std::string& test_path,
                        const std::string& out) {
    kg::Vocabulary vocab;
    auto train = kg::load_triples(train_path, vocab).store;
    auto test = kg::load_triples(test_path, vocab).store;
    kg::TripleStore filtered = kg::make_inductive_split(train, test);

    std::set<int> train_ents, test_ents;
    for (const auto& t : filtered.triples) {
        train_ents.insert(t.s);
        train_ents.insert(t.o);
    }
    for (const auto& t : test.triples) {
        test_ents.insert(t.s);
        test_ents.insert(t.o);
    }
    std::size_t overlap = 0;
    for (int e : test_ents) overlap += train_ents.count(e);

    fs::create_directories(out);
    kg::save_triples(out + "/train_inductive.txt", filtered, vocab);
    std::ofstream rep(out + "/inductive_report.txt", std::ios::binary);
    rep << "train_triples_in " << train.size() << "\n"
        << "train_triples_kept " << filtered.size() << "\n"
        << "train_triples_removed " << (train.size() - filtered.size()) << "\n"
        << "test_entities " << test_ents.size() << "\n"
        << "entity_overlap " << overlap << "\n";
    write_manifest(out, "inductive-split", {{"train", train_path}, {"test", test_path}},
                   {train_path, test_path});
    if (overlap != 0) {
        std::cerr << "inductive-split: entity overlap remained (" << overlap << ")\n";
        return 1;
    }
    std::cout << "inductive-split: kept " << filtered.size() << "/" << train.size()
              << " training triples; entity sets disjoint\n";
    return 0;
}

int cmd_gradcheck(const ModelFlags& mf, std::uint64_t seed, double step, double tolerance) {
    // toy graph: 4 entities, r1 chain a->b->c plus r2 edges
    kg::Vocabulary vocab;
    kg::TripleStore store;
    auto add = [&](const std::string& s, const std::string& r, const std::string& o) {
        store.triples.push_back({vocab.entity(s), vocab.relation(r), vocab.entity(o)});
    };
    add("a", "r1", "b");
    add("b", "r2", "c");
    add("a", "r1", "d");
    add("d", "r2", "c");
    add("b", "r1", "d");
    store.entity_count = vocab.entity_count();
    store.relation_count = vocab.relation_count();
    kg::TripleStore aug = kg::augment_relations(store, vocab);
    auto ops = kg::build_operator_slots(aug, vocab);

    model::ModelConfig mc;
    mc.max_rule_length = mf.T;
    mc.rank = mf.L;
    mc.hidden_dim = std::min(mf.hidden_dim, 8);
    mc.embed_dim = std::min(mf.embed_dim, 8);
    mc.operator_count = static_cast<int>(ops.size());
    mc.seed = seed;
    model::DrumModel model(mc, 2 * vocab.original_relation_count());

    std::vector<std::pair<int, std::pair<int, int>>> queries = {
        {vocab.relation_id("r1").value(), {vocab.entity_id("a").value(), vocab.entity_id("b").value()}},
        {vocab.relation_id("r2").value(), {vocab.entity_id("b").value(), vocab.entity_id("c").value()}},
    };
    diff::LossNodeFn loss_fn = [&](diff::Tape& tape, diff::ParameterSet&) {
        diff::Node total{};
        bool first = true;
        for (auto& [head, xy] : queries) {
            auto coeffs = model.coefficient_nodes(tape, head);
            diff::Node score = model.score_nodes(tape, coeffs, ops, xy.first);
            diff::Node loss = model.query_loss_node(tape, score, xy.second);
            total = first ? loss : tape.add(total, loss);
            first = false;
        }
        return tape.scale_const(1.0 / static_cast<double>(queries.size()), total);
    };
    diff::GradCheckReport report = diff::grad_check(loss_fn, model.params(), step, tolerance);
    std::cout << report.to_string();
    return report.passed ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"drum: differentiable rule mining over knowledge graphs"};
    app.require_subcommand(1);

    std::string out = "run";
    std::uint64_t seed = 7;
    int threads = 0;
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--out", out, "output directory")->capture_default_str();
        cmd->add_option("--seed", seed, "seed for every random choice")->capture_default_str();
        cmd->add_option("--threads", threads, "worker threads (0 = machine parallelism)");
        cmd->set_config("--config", "", "flat key = value file; flags override");
    };

    ModelFlags mf;
    TrainFlags tf;
    DataPaths paths;
    std::string dataset, raw_train, checkpoint, rules_path, vocab_path;
    double ratio = 3.0, min_conf = 0.0, step = 1e-5, tolerance = 1e-4;
    bool tail_only = false, exhaustive = false;

    auto* prepare = app.add_subcommand("prepare", "split a raw training file into facts and train");
    add_common(prepare);
    prepare->add_option("--train", raw_train, "raw training triples (TSV)")->required();
    prepare->add_option("--ratio", ratio, "facts:train odds, 3 means 3:1")->capture_default_str();

    auto add_split_opts = [&](CLI::App* cmd, bool with_test) {
        cmd->add_option("--dataset", dataset, "dataset name under DRUM_DATA_DIR");
        cmd->add_option("--facts", paths.facts, "facts triples (TSV)");
        cmd->add_option("--train", paths.train, "training triples (TSV)");
        cmd->add_option("--valid", paths.valid, "validation triples (TSV)");
        if (with_test) cmd->add_option("--test", paths.test, "test triples (TSV)");
    };

    auto* train_cmd = app.add_subcommand("train", "train a model on a prepared facts/train split");
    add_common(train_cmd);
    add_split_opts(train_cmd, false);
    add_model_flags(train_cmd, mf);
    train_cmd->add_option("--lr", tf.lr, "learning rate")->capture_default_str();
    train_cmd->add_option("--batch-size", tf.batch_size, "queries per step")->capture_default_str();
    train_cmd->add_option("--epochs", tf.epochs, "training epochs")->capture_default_str();
    train_cmd->add_option("--clip-norm", tf.clip_norm, "global gradient norm clip")->capture_default_str();
    train_cmd->add_option("--patience", tf.patience, "early-stop patience (with --valid)")->capture_default_str();
    train_cmd->add_flag("--parallel-batch", tf.parallel_batch, "parallelize tapes inside a batch");

    auto* mine = app.add_subcommand("mine", "extract sorted rules from a checkpoint");
    add_common(mine);
    mine->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    mine->add_option("--vocab", vocab_path, "vocabulary dump from prepare/train")->required();
    mine->add_option("--min-conf", min_conf, "confidence threshold (0 = auto per head)");
    mine->add_flag("--exhaustive", exhaustive, "allow full enumeration with min-conf <= 0");

    auto* eval_cmd = app.add_subcommand("eval", "filtered-ranking link prediction metrics");
    add_common(eval_cmd);
    add_split_opts(eval_cmd, true);
    eval_cmd->add_option("--checkpoint", checkpoint, "score with a trained model");
    eval_cmd->add_option("--rules", rules_path, "score with a mined rule file");
    eval_cmd->add_flag("--tail-only", tail_only, "skip inverse-direction queries");

    auto* ind = app.add_subcommand("inductive-split", "drop training triples touching test entities");
    add_common(ind);
    ind->add_option("--train", raw_train, "training triples (TSV)")->required();
    ind->add_option("--test", paths.test, "test triples (TSV)")->required();

    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the full loss gradient");
    add_common(gc);
    add_model_flags(gc, mf);
    gc->add_option("--step", step, "central difference step")->capture_default_str();
    gc->add_option("--tolerance", tolerance, "max relative error")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2; // usage problems exit 2
    }

    try {
        if (!dataset.empty()) {
            std::string root = dataset_root(dataset);
            if (paths.facts.empty()) paths.facts = root + "/facts.txt";
            if (paths.train.empty()) paths.train = root + "/train.txt";
            if (paths.test.empty()) paths.test = root + "/test.txt";
            if (paths.valid.empty() && fs::exists(root + "/valid.txt")) paths.valid = root + "/valid.txt";
        }
        if (prepare->parsed()) return cmd_prepare(raw_train, ratio, seed, out);
        if (train_cmd->parsed()) {
            if (paths.facts.empty() || paths.train.empty())
                throw std::invalid_argument("train: need --dataset or --facts/--train");
            return cmd_train(paths, mf, tf, seed, threads, out);
        }
        if (mine->parsed()) return cmd_mine(checkpoint, vocab_path, min_conf, exhaustive, out);
        if (eval_cmd->parsed()) {
            if (checkpoint.empty() == rules_path.empty())
                throw std::invalid_argument("eval: pass exactly one of --checkpoint or --rules");
            if (paths.facts.empty() || paths.train.empty() || paths.test.empty())
                throw std::invalid_argument("eval: need --dataset or --facts/--train/--test");
            return cmd_eval(paths, checkpoint, rules_path, tail_only, threads, out);
        }
        if (ind->parsed()) return cmd_inductive_split(raw_train, paths.test, out);
        if (gc->parsed()) return cmd_gradcheck(mf, seed, step, tolerance);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
