// cargait: file-based pipeline driver (synth -> rank -> build-trainset -> train -> rerank -> eval).

#include "cargait/baseline.hpp"
#include "cargait/error.hpp"
#include "cargait/feature_store.hpp"
#include "cargait/global_ranking.hpp"
#include "cargait/inference.hpp"
#include "cargait/metrics.hpp"
#include "cargait/reranker.hpp"
#include "cargait/synth.hpp"
#include "cargait/training.hpp"
#include "cargait/trainset.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#ifndef CARGAIT_VERSION
#define CARGAIT_VERSION "0.0.0"
#endif

using namespace cargait;
using nlohmann::json;

namespace {

constexpr int exit_usage = 2;
constexpr int exit_internal = 1;

int exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::io: return 3;
    case ErrorKind::format: return 4;
    case ErrorKind::truncated: return 5;
    case ErrorKind::duplicate_id: return 6;
    case ErrorKind::non_finite: return 7;
    case ErrorKind::shape: return 8;
    case ErrorKind::invalid_argument: return 9;
    case ErrorKind::empty_input: return 10;
    case ErrorKind::missing_feature: return 11;
    case ErrorKind::label_range: return 12;
    }
    return exit_internal;
}

int report_error(std::string_view kind, const std::string& message, int code) {
    std::cerr << json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << '\n';
    return code;
}

/// Loaded feature files, deduplicated by path; the index points into them.
struct Features {
    std::list<FeatureSet> sets;
    std::vector<std::string> paths;
    FeatureIndex index;

    const FeatureSet& load(const std::string& path) {
        for (std::size_t i = 0; i < paths.size(); ++i) {
            if (paths[i] == path) {
                return *std::next(sets.begin(), static_cast<std::ptrdiff_t>(i));
            }
        }
        sets.push_back(load_feature_set(path));
        paths.push_back(path);
        index.add(sets.back());
        return sets.back();
    }
};

BatchShape parse_batch(const std::string& text) {
    BatchShape b;
    char x = 0;
    std::istringstream in(text);
    if (!(in >> b.probes >> x >> b.triplets_per_probe) || (x != 'x' && x != 'X') || !in.eof() || b.probes == 0 ||
        b.triplets_per_probe == 0) {
        fail(ErrorKind::invalid_argument, "--batch expects PROBESxTRIPLETS, e.g. 32x4 (got '" + text + "')");
    }
    return b;
}

std::pair<std::string, std::string> parse_pair(const std::string& text) {
    const auto comma = text.find(',');
    if (comma == std::string::npos || comma == 0 || comma + 1 == text.size()) {
        fail(ErrorKind::invalid_argument, "--pair expects SEQ_A,SEQ_B (got '" + text + "')");
    }
    return {text.substr(0, comma), text.substr(comma + 1)};
}

void write_json(const json& j, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        fail(ErrorKind::io, "cannot open '" + path + "' for writing");
    }
    out << j.dump(2) << '\n';
}

LogCallback progress_logger(bool quiet) {
    if (quiet) {
        return {};
    }
    return [](const TrainLogRow& r) {
        std::cerr << json{{"iteration", r.iteration},
                          {"train_loss", std::isfinite(r.train_loss) ? json(r.train_loss) : json(nullptr)},
                          {"val_loss", r.val_loss},
                          {"wall_time_ms", r.wall_time_ms}}
                         .dump()
                  << '\n';
    };
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cross-attention re-ranking of strip gait embeddings"};
    app.require_subcommand(1);
    std::size_t threads = 1;
    app.add_option("--threads", threads, "Worker threads (results do not depend on it)")
        ->check(CLI::PositiveNumber);
    app.set_version_flag("--version", std::string("cargait ") + CARGAIT_VERSION + " (features GFM1 v" +
                                          std::to_string(gfm_version) + ", reranker CGRK v" +
                                          std::to_string(container_version) + ", baseline CGBL v" +
                                          std::to_string(container_version) + ")");
    bool quiet = false;
    app.add_flag("--quiet", quiet, "Suppress progress output");

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic feature set");
    SynthSpec spec;
    std::uint64_t synth_seed = 0;
    std::string synth_out, synth_partition = "gallery";
    synth->add_option("--ids", spec.identities, "Identities")->capture_default_str();
    synth->add_option("--per-id", spec.per_identity, "Sequences per identity")->capture_default_str();
    synth->add_option("--strips", spec.s, "Strips per map")->capture_default_str();
    synth->add_option("--dim", spec.d, "Feature dimension")->capture_default_str();
    synth->add_option("--hardness", spec.hardness, "Confusion strength in [0, 1]")->capture_default_str();
    synth->add_option("--noise", spec.noise, "Per-element noise std")->capture_default_str();
    synth->add_option("--seed", synth_seed, "Seed")->capture_default_str();
    synth->add_option("--id-prefix", spec.id_prefix, "Identity id prefix")->capture_default_str();
    synth->add_option("--partition", synth_partition, "Partition tag (train, val, gallery, probe)")
        ->capture_default_str();
    synth->add_option("--out", synth_out, "Output GFM file")->required();

    // rank
    auto* rank = app.add_subcommand("rank", "Global ranking by strip distance");
    std::string rank_probes, rank_gallery_path, rank_out;
    std::size_t rank_k = 0;
    rank->add_option("--probes", rank_probes, "Probe GFM file")->required();
    rank->add_option("--gallery", rank_gallery_path, "Gallery GFM file")->required();
    rank->add_option("--k", rank_k, "List depth (0 = whole gallery)")->capture_default_str();
    rank->add_option("--out", rank_out, "Output ranked lists (JSON lines)")->required();

    // build-trainset
    auto* build = app.add_subcommand("build-trainset", "Split identities and build top-v candidate lists");
    std::string build_features, build_out_train, build_out_val;
    std::size_t build_v = 30;
    double val_split = 0.1;
    build->add_option("--features", build_features, "Training-partition GFM file")->required();
    build->add_option("--v", build_v, "Candidates per probe")->capture_default_str();
    build->add_option("--val-split", val_split, "Fraction of identities held out")->capture_default_str();
    build->add_option("--out-train", build_out_train, "Training set (JSON lines)")->required();
    build->add_option("--out-val", build_out_val, "Validation set (JSON lines)")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "Train the cross-attention re-ranker");
    TrainConfig tc;
    std::string train_set_path, val_set_path, train_out, train_log, train_batch = "32x4";
    std::vector<std::string> train_features;
    train_cmd->add_option("--trainset", train_set_path, "Training set")->required();
    train_cmd->add_option("--valset", val_set_path, "Validation set")->required();
    train_cmd->add_option("--features", train_features, "GFM file(s) holding every listed sequence")->required();
    train_cmd->add_option("--alpha", tc.loss.alpha, "Cross-entropy weight")->capture_default_str();
    train_cmd->add_option("--beta", tc.loss.beta, "Damping for correctly ranked triplets")->capture_default_str();
    train_cmd->add_option("--heads", tc.heads, "Attention heads")->capture_default_str();
    train_cmd->add_option("--hidden", tc.hidden, "Total attention width")->capture_default_str();
    train_cmd->add_option("--blocks", tc.blocks, "Attention blocks")->capture_default_str();
    train_cmd->add_option("--mlp-hidden", tc.mlp_hidden, "Classifier hidden width")->capture_default_str();
    train_cmd->add_flag("--pre-norm", tc.pre_norm, "Normalize attention inputs");
    train_cmd->add_option("--lr", tc.optimizer.lr, "Learning rate")->capture_default_str();
    train_cmd->add_option("--wd", tc.optimizer.weight_decay, "Weight decay")->capture_default_str();
    train_cmd->add_option("--batch", train_batch, "PROBESxTRIPLETS")->capture_default_str();
    train_cmd->add_option("--iters", tc.schedule.iterations, "Optimizer steps")->capture_default_str();
    train_cmd->add_option("--tval", tc.schedule.t_val, "Validation period")->capture_default_str();
    train_cmd->add_option("--val-triplets", tc.val_triplets, "Fixed validation sample size")->capture_default_str();
    train_cmd->add_option("--seed", tc.seed, "Seed")->capture_default_str();
    train_cmd->add_option("--out-checkpoint", train_out, "Best checkpoint path")->required();
    train_cmd->add_option("--log", train_log, "Training log CSV");

    // rerank
    auto* rerank_cmd = app.add_subcommand("rerank", "Re-rank the top-K of initial lists");
    std::string rr_checkpoint, rr_baseline, rr_probes, rr_gallery, rr_initial, rr_out;
    std::size_t rr_k = 10;
    auto* rr_ck = rerank_cmd->add_option("--checkpoint", rr_checkpoint, "Re-ranker checkpoint");
    auto* rr_bl = rerank_cmd->add_option("--baseline-checkpoint", rr_baseline, "Binary baseline checkpoint");
    rr_ck->excludes(rr_bl);
    rerank_cmd->add_option("--probes", rr_probes, "Probe GFM file")->required();
    rerank_cmd->add_option("--gallery", rr_gallery, "Gallery GFM file")->required();
    rerank_cmd->add_option("--initial", rr_initial, "Initial ranked lists")->required();
    rerank_cmd->add_option("--k", rr_k, "Re-ranking depth")->capture_default_str();
    rerank_cmd->add_option("--out", rr_out, "Output ranked lists (JSON lines)")->required();

    // train-baseline
    auto* tb = app.add_subcommand("train-baseline", "Train the binary pair-classifier baseline");
    BaselineTrainConfig bc;
    std::string tb_train, tb_val, tb_out, tb_log, tb_batch = "32x4";
    std::vector<std::string> tb_features;
    tb->add_option("--trainset", tb_train, "Training set")->required();
    tb->add_option("--valset", tb_val, "Validation set")->required();
    tb->add_option("--features", tb_features, "GFM file(s) holding every listed sequence")->required();
    tb->add_option("--hidden", bc.hidden, "MLP hidden width")->capture_default_str();
    tb->add_option("--lr", bc.optimizer.lr, "Learning rate")->capture_default_str();
    tb->add_option("--wd", bc.optimizer.weight_decay, "Weight decay")->capture_default_str();
    tb->add_option("--batch", tb_batch, "PROBESxTRIPLETS")->capture_default_str();
    tb->add_option("--neg-ratio", bc.negatives_per_positive, "Negatives per positive pair")->capture_default_str();
    tb->add_option("--iters", bc.schedule.iterations, "Optimizer steps")->capture_default_str();
    tb->add_option("--tval", bc.schedule.t_val, "Validation period")->capture_default_str();
    tb->add_option("--val-triplets", bc.val_triplets, "Fixed validation sample size")->capture_default_str();
    tb->add_option("--seed", bc.seed, "Seed")->capture_default_str();
    tb->add_option("--out-checkpoint", tb_out, "Best checkpoint path")->required();
    tb->add_option("--log", tb_log, "Training log CSV");

    // eval
    auto* eval = app.add_subcommand("eval", "Compute retrieval and verification metrics");
    std::string eval_lists, eval_out;
    std::vector<std::string> eval_manifests;
    std::vector<std::size_t> eval_ks{1, 5, 10};
    std::vector<double> eval_fprs{1e-2};
    EvalConfig ec;
    eval->add_option("--lists", eval_lists, "Ranked lists (JSON lines)")->required();
    eval->add_option("--manifest", eval_manifests, "Manifest file(s) with identity labels")->required();
    eval->add_option("--ks", eval_ks, "Rank-K cut-offs")->delimiter(',')->capture_default_str();
    eval->add_option("--fpr", eval_fprs, "Target FPRs")->delimiter(',')->capture_default_str();
    eval->add_option("--tpr-depth", ec.tpr_depth, "List depth pooled for TPR@FPR")->capture_default_str();
    eval->add_option("--ceiling-k", ec.ceiling_k, "Depth of the Rank-1 ceiling")->capture_default_str();
    eval->add_option("--out", eval_out, "MetricsReport JSON");

    // diag-strips
    auto* diag = app.add_subcommand("diag-strips", "Strip-by-strip cosine similarity of a pair");
    std::string diag_checkpoint, diag_pair, diag_out;
    std::vector<std::string> diag_features;
    diag->add_option("--features", diag_features, "GFM file(s) holding the pair")->required();
    diag->add_option("--checkpoint", diag_checkpoint, "Re-ranker checkpoint (absent: raw features)");
    diag->add_option("--pair", diag_pair, "SEQ_A,SEQ_B")->required();
    diag->add_option("--out", diag_out, "CSV matrix")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error("usage", e.what(), exit_usage);
    }

    try {
        if (*synth) {
            spec.partition = partition_from_string(synth_partition);
            const auto set = generate(spec, synth_seed);
            save_feature_set(set, synth_out);
            auto summary = to_json(describe(set, threads));
            summary["seed"] = synth_seed;
            std::cout << summary.dump() << '\n';
        } else if (*rank) {
            Features f;
            const auto& probes = f.load(rank_probes);
            const auto& gallery = f.load(rank_gallery_path);
            const std::size_t k = rank_k == 0 ? gallery.size() : rank_k;
            save_ranked_lists(rank_all(probes, gallery, k, threads), rank_out);
        } else if (*build) {
            const auto set = load_feature_set(build_features);
            const auto [train_part, val_part] = split_train_val(set, val_split);
            save_training_set(build_training_set(train_part, build_v, threads), build_out_train);
            save_training_set(build_training_set(val_part, build_v, threads), build_out_val);
            std::cout << json{{"train_sequences", train_part.size()}, {"val_sequences", val_part.size()}}.dump()
                      << '\n';
        } else if (*train_cmd) {
            tc.batch = parse_batch(train_batch);
            tc.threads = threads;
            Features f;
            for (const auto& path : train_features) {
                f.load(path);
            }
            const auto result = train(load_training_set(train_set_path), load_training_set(val_set_path), f.index, tc,
                                      progress_logger(quiet));
            save_checkpoint(result.weights, result.meta, train_out);
            if (!train_log.empty()) {
                save_train_log(result.log, train_log);
            }
            std::cout << json{{"best_iteration", result.meta.iteration}, {"val_loss", result.meta.val_loss}}.dump()
                      << '\n';
        } else if (*rerank_cmd) {
            if (rr_checkpoint.empty() == rr_baseline.empty()) {
                fail(ErrorKind::invalid_argument, "rerank needs exactly one of --checkpoint, --baseline-checkpoint");
            }
            Features f;
            f.load(rr_probes);
            f.load(rr_gallery);
            const auto initial = load_ranked_lists(rr_initial);
            const auto out = rr_checkpoint.empty()
                                 ? baseline_rerank_all(initial, rr_k, load_baseline_checkpoint(rr_baseline).weights,
                                                       f.index, threads)
                                 : rerank_all(initial, rr_k, load_checkpoint(rr_checkpoint).weights, f.index, threads);
            std::vector<json> extra;
            for (double ms : out.latency_ms) {
                extra.push_back({{"latency_ms", ms}});
            }
            save_ranked_lists(out.lists, rr_out, extra);
            const double total = std::accumulate(out.latency_ms.begin(), out.latency_ms.end(), 0.0);
            std::cout << json{{"probes", out.lists.size()},
                              {"pair_evaluations", out.pair_evaluations},
                              {"mean_latency_ms", out.lists.empty() ? 0.0 : total / out.lists.size()}}
                             .dump()
                      << '\n';
        } else if (*tb) {
            bc.batch = parse_batch(tb_batch);
            Features f;
            for (const auto& path : tb_features) {
                f.load(path);
            }
            const auto result = train_baseline(load_training_set(tb_train), load_training_set(tb_val), f.index, bc,
                                               progress_logger(quiet));
            save_baseline_checkpoint(result.weights, result.meta, tb_out);
            if (!tb_log.empty()) {
                save_train_log(result.log, tb_log);
            }
            std::cout << json{{"best_iteration", result.meta.iteration}, {"val_loss", result.meta.val_loss}}.dump()
                      << '\n';
        } else if (*eval) {
            IdentityTable identities;
            for (const auto& path : eval_manifests) {
                identities.merge(load_manifest_identities(path));
            }
            ec.ks = eval_ks;
            ec.fprs = eval_fprs;
            const auto report = to_json(evaluate(load_ranked_lists(eval_lists), identities, ec));
            if (!eval_out.empty()) {
                write_json(report, eval_out);
            }
            std::cout << report.dump() << '\n';
        } else if (*diag) {
            Features f;
            for (const auto& path : diag_features) {
                f.load(path);
            }
            const auto [a, b] = parse_pair(diag_pair);
            const auto& fa = f.index.at(a);
            const auto& fb = f.index.at(b);
            if (diag_checkpoint.empty()) {
                save_matrix_csv(strip_cosine_matrix(fa, fb), diag_out);
            } else {
                const auto pair = attended_pair<float>(fa, fb, load_checkpoint(diag_checkpoint).weights);
                save_matrix_csv(strip_cosine_matrix(pair.e_p, pair.e_c), diag_out);
            }
        }
    } catch (const Error& e) {
        return report_error(to_string(e.kind()), e.what(), exit_code(e.kind()));
    } catch (const std::exception& e) {
        return report_error("internal", e.what(), exit_internal);
    }
    return 0;
}
