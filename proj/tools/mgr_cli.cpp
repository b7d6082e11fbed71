// Experiment entry point: reproducible runs driven by one seed, a config
// file, and CSV artifacts in an output directory.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mgr/data.hpp"
#include "mgr/entropy.hpp"
#include "mgr/eval.hpp"
#include "mgr/game.hpp"
#include "mgr/grad_check.hpp"
#include "mgr/model.hpp"
#include "mgr/rng.hpp"
#include "mgr/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string timestamp() {
    auto now = std::chrono::system_clock::now();
    auto t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

json config_snapshot(const mgr::TrainConfig& c) {
    return json{{"n", c.n},
                {"eta", c.eta},
                {"lambda1", c.lambda1},
                {"lambda2", c.lambda2},
                {"s", c.s},
                {"tau", c.tau},
                {"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"seed", c.seed},
                {"early_stop_patience", c.early_stop_patience},
                {"share_encoder", c.share_encoder},
                {"embed_dim", c.embed_dim},
                {"hidden", c.hidden}};
}

// The manifest is written before any other artifact.
void write_manifest(const fs::path& out_dir, const std::string& command,
                    const std::string& config_path, std::uint64_t seed,
                    const json& resolved) {
    fs::create_directories(out_dir);
    json manifest{{"command", command},
                  {"config_path", config_path},
                  {"output_dir", out_dir.string()},
                  {"seed", seed},
                  {"timestamp", timestamp()},
                  {"config", resolved}};
    std::ofstream out(out_dir / "manifest.json");
    out << manifest.dump(2) << "\n";
    if (!out) throw std::runtime_error("cannot write manifest");
}

void write_rationale_dump(const fs::path& path, const mgr::DatasetSplit& split,
                          const mgr::InferenceResult& inference) {
    std::ofstream out(path);
    for (std::size_t i = 0; i < split.examples.size(); ++i) {
        std::size_t argmax = 0;
        const auto& p = inference.predictions[i];
        for (std::size_t c = 1; c < p.size(); ++c)
            if (p[c] > p[argmax]) argmax = c;
        out << i << '\t' << split.examples[i].label << '\t' << argmax << '\t';
        for (std::uint8_t m : inference.masks[i]) out << (m ? '1' : '0');
        out << '\n';
    }
    if (!out) throw std::runtime_error("cannot write rationale dump");
}

void write_eval_csv(const fs::path& path, const mgr::EvalReport& report) {
    std::ofstream out(path);
    out << "precision,recall,f1,sparsity_S,accuracy,annotated,total\n";
    out.precision(10);
    if (report.prf)
        out << report.prf->precision << "," << report.prf->recall << ","
            << report.prf->f1 << ",";
    else
        out << ",,,";  // no gold masks: P/R/F1 columns empty
    out << report.sparsity_S << "," << report.accuracy << ","
        << report.annotated_examples << "," << report.total_examples << "\n";
    if (!out) throw std::runtime_error("cannot write eval report");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-generator rationalization experiments"};
    app.require_subcommand(1);
    app.fallthrough();  // --config/--seed/--out may follow the subcommand

    std::string config_path, out_dir = "out";
    std::uint64_t seed = 0;
    bool seed_set = false;
    app.add_option("--config", config_path, "config file (key value per line)");
    app.add_option("--seed", seed, "master random seed")
        ->each([&](const std::string&) { seed_set = true; });
    app.add_option("--out", out_dir, "output directory");

    // config overrides shared by train-like commands
    std::vector<std::pair<std::string, std::string>> overrides;
    auto add_override = [&](CLI::App* cmd, const char* flag, const char* key) {
        cmd->add_option_function<std::string>(
            flag, [&overrides, key = std::string(key)](const std::string& v) {
                overrides.emplace_back(key, v);
            });
    };

    // --- synth-data
    auto* synth = app.add_subcommand("synth-data", "generate a synthetic corpus");
    mgr::SyntheticSpec spec;
    synth->add_option("--rho", spec.rho, "spurious-correlation probability");
    synth->add_option("--vocab", spec.vocab_size);
    synth->add_option("--train-size", spec.train_size);
    synth->add_option("--dev-size", spec.dev_size);
    synth->add_option("--test-size", spec.test_size);
    synth->add_option("--seq-len", spec.seq_len);
    synth->add_option("--causal-len", spec.causal_len);
    synth->add_option("--spurious-len", spec.spurious_len);
    synth->add_option("--causal-cues", spec.cues_per_class);
    synth->add_option("--spurious-cues", spec.spurious_cues_per_class);
    synth->add_flag("--spurious-first", spec.spurious_first);

    // --- train
    auto* train = app.add_subcommand("train", "train an MGR model");
    std::string train_path, dev_path;
    double train_rho = -1.0;
    train->add_option("--train", train_path, "training corpus (TSV)");
    train->add_option("--dev", dev_path, "development corpus (TSV)");
    train->add_option("--rho", train_rho,
                      "use a synthetic corpus with this rho instead of files");
    for (auto [flag, key] : {std::pair{"--n", "n"}, {"--eta", "eta"},
                             {"--lambda1", "lambda1"}, {"--lambda2", "lambda2"},
                             {"--sparsity-target", "s"}, {"--epochs", "epochs"},
                             {"--hidden", "hidden"}, {"--embed-dim", "embed_dim"}})
        add_override(train, flag, key);

    // --- evaluate
    auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint");
    std::string ckpt_path, data_path;
    evaluate->add_option("--checkpoint", ckpt_path)->required();
    evaluate->add_option("--data", data_path)->required();

    // --- skew-exp
    auto* skew = app.add_subcommand(
        "skew-exp", "skew-pretraining comparison between RNP and MGR");
    std::string skew_levels = "20";
    double skew_rho = 0.8;
    skew->add_option("--skew-epochs", skew_levels,
                     "comma-separated pretraining epoch counts");
    skew->add_option("--rho", skew_rho);
    for (auto [flag, key] : {std::pair{"--n", "n"}, {"--eta", "eta"},
                             {"--lambda1", "lambda1"}, {"--lambda2", "lambda2"},
                             {"--sparsity-target", "s"}, {"--epochs", "epochs"},
                             {"--hidden", "hidden"}, {"--embed-dim", "embed_dim"}})
        add_override(skew, flag, key);

    // --- game-sweep
    auto* game = app.add_subcommand("game-sweep",
                                    "exact vs Monte Carlo spurious probability");
    double pc = 0.67;
    std::size_t n_max = 9, trials = 1000000;
    game->add_option("--pc", pc, "causal-selection probability");
    game->add_option("--n-max", n_max, "largest (odd) generator count");
    game->add_option("--trials", trials);

    // --- entropy-check
    auto* entropy_cmd =
        app.add_subcommand("entropy-check", "joint-entropy bound sweep");
    std::size_t joint_count = 1000;
    entropy_cmd->add_option("--count", joint_count, "random joints to test");

    // --- grad-check
    auto* gradcheck =
        app.add_subcommand("grad-check", "gradient verification report");
    double grad_tol = 1e-4;
    gradcheck->add_option("--tolerance", grad_tol);

    CLI11_PARSE(app, argc, argv);

    try {
        mgr::TrainConfig config;
        if (!config_path.empty()) config = mgr::load_config(config_path);
        if (seed_set) config.seed = seed;
        for (auto& [key, value] : overrides)
            mgr::apply_config_entry(config, key, value);
        config.validate();
        const fs::path out(out_dir);

        if (*synth) {
            spec.seed = config.seed;
            write_manifest(out, "synth-data", config_path, config.seed,
                           json{{"rho", spec.rho},
                                {"vocab_size", spec.vocab_size},
                                {"seq_len", spec.seq_len},
                                {"causal_len", spec.causal_len},
                                {"spurious_len", spec.spurious_len},
                                {"spurious_first", spec.spurious_first},
                                {"train_size", spec.train_size},
                                {"dev_size", spec.dev_size},
                                {"test_size", spec.test_size}});
            auto corpus = mgr::generate_synthetic(spec);
            mgr::save_dataset(corpus.train, (out / "train.tsv").string());
            mgr::save_dataset(corpus.dev, (out / "dev.tsv").string());
            mgr::save_dataset(corpus.test, (out / "test.tsv").string());
        } else if (*train) {
            write_manifest(out, "train", config_path, config.seed,
                           config_snapshot(config));
            mgr::DatasetSplit train_split, dev_split;
            if (train_rho >= 0.0) {
                mgr::SyntheticSpec sspec;
                sspec.rho = train_rho;
                sspec.seed = config.seed;
                auto corpus = mgr::generate_synthetic(sspec);
                train_split = std::move(corpus.train);
                dev_split = std::move(corpus.dev);
            } else {
                if (train_path.empty() || dev_path.empty())
                    throw std::runtime_error("train: need --train/--dev or --rho");
                train_split = mgr::load_dataset(train_path);
                dev_split = mgr::load_dataset(dev_path, train_split.vocab);
            }
            mgr::ModelConfig mc;
            mc.vocab_size = train_split.vocab->size();
            mc.classes = train_split.vocab->class_count;
            mc.embed_dim = config.embed_dim;
            mc.hidden = config.hidden;
            mc.n_generators = config.n;
            mc.share_encoder = config.share_encoder;
            auto model = mgr::build_model(mc, config.seed);
            model.vocab = train_split.vocab;
            auto result = mgr::train_loop(std::move(model), train_split,
                                          dev_split, config);
            mgr::write_metric_log(result.log, config.n,
                                  (out / "metrics.csv").string());
            mgr::save_checkpoint(result.model, (out / "model.ckpt").string());
        } else if (*evaluate) {
            write_manifest(out, "evaluate", config_path, config.seed,
                           json{{"checkpoint", ckpt_path}, {"data", data_path}});
            auto model = mgr::load_checkpoint(ckpt_path);
            // encode with the training-time vocabulary when available
            auto split = mgr::load_dataset(data_path, model.vocab);
            auto report = mgr::evaluate_split(model, split);
            write_eval_csv(out / "eval_report.csv", report);
            write_rationale_dump(out / "rationales.tsv", split,
                                 mgr::infer_split(model, split));
        } else if (*skew) {
            write_manifest(out, "skew-exp", config_path, config.seed,
                           config_snapshot(config));
            mgr::SyntheticSpec sspec;
            sspec.rho = skew_rho;
            sspec.spurious_first = true;
            sspec.seed = config.seed;
            auto corpus = mgr::generate_synthetic(sspec);

            std::ofstream csv(out / "skew_comparison.csv");
            csv << "skew_epochs,method,accuracy,precision,recall,f1\n";
            csv.precision(6);
            std::stringstream levels(skew_levels);
            std::string level;
            while (std::getline(levels, level, ',')) {
                std::size_t k = std::stoul(level);
                for (std::size_t n : {std::size_t{1}, config.n}) {
                    mgr::TrainConfig run = config;
                    run.n = n;
                    mgr::ModelConfig mc;
                    mc.vocab_size = corpus.train.vocab->size();
                    mc.classes = 2;
                    mc.embed_dim = run.embed_dim;
                    mc.hidden = run.hidden;
                    mc.n_generators = n;
                    auto model = mgr::build_model(mc, run.seed);
                    mgr::skew_pretrain(model, corpus.train, run, k,
                                       sspec.spurious_len);
                    auto result = mgr::train_loop(std::move(model),
                                                  corpus.train, corpus.dev, run);
                    auto report =
                        mgr::evaluate_split(result.model, corpus.test);
                    csv << k << "," << (n == 1 ? "RNP" : "MGR") << ","
                        << report.accuracy << "," << report.prf->precision
                        << "," << report.prf->recall << "," << report.prf->f1
                        << "\n";
                }
            }
            if (!csv) throw std::runtime_error("cannot write skew comparison");
        } else if (*game) {
            write_manifest(out, "game-sweep", config_path, config.seed,
                           json{{"pc", pc}, {"n_max", n_max}, {"trials", trials}});
            std::ofstream csv(out / "game_sweep.csv");
            csv << "n,P_c,p_spurious_exact,p_spurious_mc,stderr\n";
            csv.precision(10);
            for (std::size_t n = 1; n <= n_max; n += 2) {
                auto mc = mgr::monte_carlo_spurious(
                    n, pc, trials, mgr::derive_seed(config.seed, "game", n));
                csv << n << "," << pc << "," << mgr::p_spurious(n, pc) << ","
                    << mc.estimate << "," << mc.std_error << "\n";
            }
            if (!csv) throw std::runtime_error("cannot write game sweep");
        } else if (*entropy_cmd) {
            write_manifest(out, "entropy-check", config_path, config.seed,
                           json{{"count", joint_count}});
            auto rng = mgr::substream(config.seed, "entropy-check");
            std::ofstream csv(out / "entropy_check.csv");
            csv << "tag,H_marginal_1,H_marginal_2,H_marginal_3,H_joint,"
                   "sum_marginals,lower_ok,upper_ok\n";
            csv.precision(10);
            std::size_t violations = 0;
            for (std::size_t trial = 0; trial < joint_count; ++trial) {
                std::uniform_int_distribution<std::size_t> nv(2, 3), sup(2, 8);
                std::size_t n = nv(rng);
                std::vector<std::size_t> sizes(n);
                std::size_t total = 1;
                for (auto& sz : sizes) total *= (sz = sup(rng));
                std::vector<double> probs(total);
                std::uniform_real_distribution<double> uni(0.0, 1.0);
                double sum = 0.0;
                for (double& p : probs) sum += (p = uni(rng));
                for (double& p : probs) p /= sum;
                // exact renormalization for the table invariant
                double acc = 0.0;
                for (std::size_t i = 0; i + 1 < probs.size(); ++i) acc += probs[i];
                probs.back() = 1.0 - acc;
                mgr::JointDistribution dist(sizes, probs);
                auto report = mgr::verify_theorem2(dist);
                if (!report.lower_ok || !report.upper_ok) ++violations;
                csv << "rand_" << trial << ",";
                for (std::size_t v = 0; v < 3; ++v) {
                    if (v < n) csv << mgr::entropy(dist, {v});
                    if (v < 2) csv << ",";
                }
                csv << "," << report.joint << "," << report.sum_marginals << ","
                    << report.lower_ok << "," << report.upper_ok << "\n";
            }
            if (!csv) throw std::runtime_error("cannot write entropy sweep");
            std::cout << "theorem-2 violations: " << violations << " / "
                      << joint_count << "\n";
            if (violations > 0) return 1;
        } else if (*gradcheck) {
            write_manifest(out, "grad-check", config_path, config.seed,
                           json{{"tolerance", grad_tol}});
            mgr::ModelConfig mc;
            mc.vocab_size = 24;
            mc.classes = 2;
            mc.embed_dim = 6;
            mc.hidden = 5;
            mc.n_generators = 2;
            auto model = mgr::build_model(mc, config.seed);
            mgr::DatasetSplit split;
            split.vocab = std::make_shared<mgr::Vocabulary>();
            split.vocab->class_count = 2;
            auto rng = mgr::substream(config.seed, "grad-check-data");
            std::uniform_int_distribution<std::size_t> tok(2, mc.vocab_size - 1);
            for (std::size_t e = 0; e < 3; ++e) {
                mgr::Example ex;
                ex.label = e % 2;
                for (std::size_t t = 0; t < 7; ++t)
                    ex.token_ids.push_back(tok(rng));
                split.examples.push_back(ex);
            }
            auto batch = mgr::encode_batch(split, {0, 1, 2});
            mgr::TrainConfig run = config;
            run.n = mc.n_generators;
            // Relaxed-path objective: the smooth surrogate behind the
            // straight-through estimator, checkable by finite differences.
            auto forward = [&]() {
                mgr::TensorPtr total;
                for (std::size_t i = 0; i < run.n; ++i) {
                    auto rng2 = mgr::substream(run.seed, "gc-sample", i);
                    auto probs = mgr::generator_forward(
                        model.generators[i], model.embedding, batch);
                    auto sample = mgr::sample_mask(
                        probs, run.tau, mgr::SampleMode::train, rng2);
                    auto pred = mgr::predictor_forward(
                        model.predictor, model.embedding, batch,
                        sample.relaxed);
                    auto term = mgr::add(
                        mgr::cross_entropy_rows(pred.logits, batch.labels),
                        mgr::omega_batch(sample.relaxed, batch.lengths,
                                         run.lambda1, run.lambda2, run.s));
                    total = total ? mgr::add(total, term) : term;
                }
                return total;
            };
            auto report =
                mgr::grad_check(model.named_params(), forward, grad_tol);
            auto text = mgr::format_report(report);
            std::ofstream rpt(out / "grad_check.txt");
            rpt << text;
            std::cout << text;
            if (!report.passed) return 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
