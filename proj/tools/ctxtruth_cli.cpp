// ctxtruth command-line interface.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxtruth/actdump.hpp"
#include "ctxtruth/contextgen.hpp"
#include "ctxtruth/geometry.hpp"
#include "ctxtruth/lens.hpp"
#include "ctxtruth/probes.hpp"
#include "ctxtruth/promptkit.hpp"
#include "ctxtruth/random.hpp"
#include "ctxtruth/report.hpp"
#include "ctxtruth/synthetic.hpp"

namespace fs = std::filesystem;
using namespace ctxtruth;

namespace {

struct Shared {
    std::vector<std::string> dumps;
    std::string unembed;
    std::string out;
    std::string format = "both";
    double alpha = 0.05;
    std::size_t bonferroni_n = 0;
    std::uint64_t seed = 0;
    std::string layers = "final";
    unsigned threads = 1;
    bool no_filter = false;
    std::string alternative = "greater";
    std::string magnitude = "squared";
};

void add_shared(CLI::App* cmd, Shared& s, bool needs_dump = true) {
    auto* d = cmd->add_option("--dump", s.dumps, "Activation dump, PATH or NAME=PATH (repeatable)");
    if (needs_dump) d->required();
    cmd->add_option("--unembed", s.unembed, "Unembedding bundle");
    cmd->add_option("--out", s.out, "Output directory");
    cmd->add_option("--format", s.format, "csv|json|both")->check(CLI::IsMember({"csv", "json", "both"}));
    cmd->add_option("--alpha", s.alpha, "Significance level")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--bonferroni-n", s.bonferroni_n, "Tests per single-quantity table (0 = count cells)");
    cmd->add_option("--seed", s.seed, "Seed for every randomized step");
    cmd->add_option("--layers", s.layers, "Comparison layers: final|all|N|A-B (1-based)");
    cmd->add_option("--threads", s.threads, "Worker threads")->check(CLI::PositiveNumber);
    cmd->add_flag("--no-filter", s.no_filter, "Keep statements that failed instruction following");
    cmd->add_option("--alternative", s.alternative, "greater|less|two-sided")
        ->check(CLI::IsMember({"greater", "less", "two-sided"}));
    cmd->add_option("--magnitude", s.magnitude, "squared|norm")->check(CLI::IsMember({"squared", "norm"}));
}

MagnitudeMode magnitude_mode(const Shared& s) {
    return s.magnitude == "norm" ? MagnitudeMode::Norm : MagnitudeMode::SquaredNorm;
}

RunConfig make_config(const Shared& s) {
    RunConfig c;
    for (const auto& d : s.dumps) c.dumps.push_back(parse_dump_ref(d));
    if (!s.unembed.empty()) c.unembedding = s.unembed;
    c.layers = parse_layers(s.layers);
    c.alpha = s.alpha;
    c.bonferroni_n = s.bonferroni_n;
    c.alternative = alternative_from_string(s.alternative);
    c.magnitude = magnitude_mode(s);
    c.seed = s.seed;
    c.filter_instruction = !s.no_filter;
    c.format = output_format_from_string(s.format);
    c.threads = s.threads;
    return c;
}

struct Loaded {
    DumpRef ref;
    ActivationSet set;
};

std::vector<Loaded> load_all(const Shared& s) {
    std::vector<Loaded> out;
    for (const auto& d : s.dumps) {
        Loaded l{parse_dump_ref(d), {}};
        l.set = read_dump(l.ref.path);
        if (!s.no_filter) l.set = filter_instruction_following(l.set);
        out.push_back(std::move(l));
    }
    return out;
}

fs::path out_dir(const Shared& s) {
    if (s.out.empty()) throw CLI::ValidationError("--out", "an output directory is required");
    return s.out;
}

void print_files(const std::vector<fs::path>& files) {
    for (const auto& f : files) std::cout << f.generic_string() << "\n";
}

ContextKind parse_context(const std::string& s) {
    if (s == "none") return ContextKind::None;
    if (s == "relevant") return ContextKind::Relevant;
    try {
        return to_context_kind(random_kind_from_string(s));
    } catch (const std::exception&) {
        return context_kind_from_string(s);
    }
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ctxtruth: context effects on truth-vector geometry"};
    app.set_version_flag("--version", std::string(version()));
    app.require_subcommand(1);

    // analyze
    Shared an;
    std::string an_what;
    std::string an_context = "relevant";
    auto* analyze = app.add_subcommand("analyze", "Per-layer theta or relative-magnitude curves");
    analyze->add_option("what", an_what, "theta|magnitude")->required()->check(CLI::IsMember({"theta", "magnitude"}));
    analyze->add_option("--context", an_context, "Context kind compared against no context");
    add_shared(analyze, an);

    // probe
    Shared pr;
    std::vector<std::string> pr_families;
    std::string pr_context = "none";
    double pr_ratio = 0.8;
    auto* probe = app.add_subcommand("probe", "Train truth probes per layer");
    probe->add_option("--family", pr_families, "mass_mean|logistic_regression|linear_svm|mlp (repeatable; default all)");
    probe->add_option("--context", pr_context, "Condition whose activations are probed");
    probe->add_option("--ratio", pr_ratio, "Train fraction of statements")->check(CLI::Range(0.0, 1.0));
    add_shared(probe, pr);

    // lens
    Shared ln;
    std::string ln_mode = "ratio", ln_side = "true", ln_norm, ln_context = "relevant";
    auto* lens = app.add_subcommand("lens", "Normalized choice-probability difference per layer");
    lens->add_option("--mode", ln_mode, "ratio|difference")->check(CLI::IsMember({"ratio", "difference"}));
    lens->add_option("--side", ln_side, "true|false|mean")->check(CLI::IsMember({"true", "false", "mean"}));
    lens->add_option("--norm", ln_norm, "Final normalization parameters (JSON)");
    lens->add_option("--context", ln_context, "Context kind");
    add_shared(lens, ln);

    // compare
    Shared cm;
    auto* compare = app.add_subcommand("compare", "Relevant vs random context tables");
    add_shared(compare, cm);

    // contextgen
    std::string cg_kind, cg_in, cg_lexicon, cg_corpus, cg_out, cg_stats;
    std::uint64_t cg_seed = 0;
    auto* contextgen = app.add_subcommand("contextgen", "Length-matched random contexts");
    contextgen->add_option("--kind", cg_kind, "char|word|salad|wiki|shuffle")
        ->check(CLI::IsMember({"char", "word", "salad", "wiki", "shuffle"}));
    contextgen->add_option("--in", cg_in, "Relevant contexts (JSONL)")->required();
    contextgen->add_option("--lexicon", cg_lexicon, "Word list, optionally tab-tagged");
    contextgen->add_option("--corpus", cg_corpus, "Plain-text corpus for wiki contexts");
    contextgen->add_option("--seed", cg_seed, "Seed");
    contextgen->add_option("--out", cg_out, "Output JSONL");
    contextgen->add_option("--stats", cg_stats, "Write length/Flesch statistics of input and output as JSON");

    // synth
    std::string sy_out, sy_unembed, sy_preset = "demo";
    std::size_t sy_k = 48, sy_l = 16, sy_d = 32, sy_vocab = 64;
    double sy_noise = -1.0;
    std::uint64_t sy_seed = 0;
    auto* synth = app.add_subcommand("synth", "Write a synthetic dump with planted geometry");
    synth->add_option("--out", sy_out, "Dump path")->required();
    synth->add_option("--unembed", sy_unembed, "Also write a synthetic unembedding bundle");
    synth->add_option("--preset", sy_preset, "demo|three-phase")->check(CLI::IsMember({"demo", "three-phase"}));
    synth->add_option("--statements", sy_k, "K")->check(CLI::PositiveNumber);
    synth->add_option("--layers", sy_l, "L")->check(CLI::Range(6, 100000));
    synth->add_option("--dim", sy_d, "d")->check(CLI::Range(2, 1 << 20));
    synth->add_option("--vocab", sy_vocab, "Unembedding vocabulary size")->check(CLI::Range(2, 1 << 24));
    synth->add_option("--noise", sy_noise, "Relative noise (default 0.05)");
    synth->add_option("--seed", sy_seed, "Seed");

    // report
    Shared rp;
    auto* report = app.add_subcommand("report", "Full pipeline: curves, phases, probes, lens, tables");
    add_shared(report, rp);

    // prompts
    std::string pq_in, pq_template, pq_out;
    std::uint64_t pq_seed = 0;
    auto* prompts = app.add_subcommand("prompts", "Build prompt quads from statements");
    prompts->add_option("--in", pq_in, "Statements (JSONL)")->required();
    prompts->add_option("--template", pq_template, "Prompt template file");
    prompts->add_option("--seed", pq_seed, "Seed for choice order");
    prompts->add_option("--out", pq_out, "Output JSONL")->required();

    // inspect
    std::string in_path;
    auto* inspect = app.add_subcommand("inspect", "Print a dump header");
    inspect->add_option("path", in_path, "Dump")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*analyze) {
            const RunConfig cfg = make_config(an);
            const Provenance base{cfg.to_json(), ""};
            const ContextKind ctx = parse_context(an_context);
            std::vector<Quantity> qs;
            if (an_what == "theta") {
                qs = {Quantity::ThetaDegrees};
            } else {
                qs = {Quantity::RmTcFc, Quantity::RmTcFnc, Quantity::RmTncFc};
            }
            for (const auto& l : load_all(an)) {
                GeometryOptions g{ctx, magnitude_mode(an), an.threads};
                Provenance prov = base;
                prov.dataset = l.ref.name;
                for (Quantity q : qs) {
                    const LayerCurve curve = layer_curve(l.set, q, g);
                    if (an.out.empty()) {
                        std::cout << "# " << l.ref.name << " " << to_string(q) << "\nlayer,mean,sem,n_valid,n_excluded\n";
                        for (const auto& p : curve.points) {
                            std::cout << p.layer << "," << format_optional(p.mean) << "," << format_optional(p.sem)
                                      << "," << p.n_valid << "," << p.n_excluded << "\n";
                        }
                        continue;
                    }
                    const fs::path dir = fs::path(an.out) / l.ref.name;
                    print_files(write_curve(curve, prov, dir / std::string(to_string(q)), cfg.format));
                    if (q == Quantity::ThetaDegrees) {
                        std::vector<std::pair<ContextKind, PhaseSegmentation>> ph;
                        ph.emplace_back(ctx, phase_segment(curve));
                        print_files(write_phases(ph, prov, dir / "phases"));
                    }
                }
            }
        } else if (*probe) {
            const RunConfig cfg = make_config(pr);
            const fs::path dir = out_dir(pr);
            std::vector<ProbeFamily> fams;
            for (const auto& f : pr_families) fams.push_back(probe_family_from_string(f));
            if (fams.empty()) fams.assign(std::begin(kProbeFamilies), std::end(kProbeFamilies));
            for (const auto& l : load_all(pr)) {
                for (ProbeFamily f : fams) {
                    ProbeOptions po;
                    po.context = parse_context(pr_context);
                    po.ratio = pr_ratio;
                    po.threads = pr.threads;
                    po.hyper.seed = pr.seed;
                    const ProbeReport rep = probe_report(l.set, f, pr.seed, po);
                    print_files(write_probe_report(rep, {cfg.to_json(), l.ref.name},
                                                   dir / l.ref.name / std::string(to_string(f)), cfg.format));
                }
            }
        } else if (*lens) {
            if (ln.unembed.empty()) throw CLI::ValidationError("--unembed", "lens needs an unembedding bundle");
            const RunConfig cfg = make_config(ln);
            const fs::path dir = out_dir(ln);
            const UnembeddingBundle bundle = read_unembedding(ln.unembed);
            LensOptions lo;
            lo.context = parse_context(ln_context);
            lo.mode = ln_mode == "ratio" ? LensMode::Ratio : LensMode::Difference;
            lo.side = ln_side == "true" ? LensSide::TrueSide : ln_side == "false" ? LensSide::FalseSide : LensSide::Mean;
            if (!ln_norm.empty()) lo.norm = load_norm_params(ln_norm);
            lo.threads = ln.threads;
            for (const auto& l : load_all(ln)) {
                const LensSummary s = lens_summary(l.set, bundle, lo, magnitude_mode(ln));
                print_files(write_lens(s, {cfg.to_json(), l.ref.name}, dir / l.ref.name / "lens", cfg.format));
            }
        } else if (*compare) {
            const RunConfig cfg = make_config(cm);
            const fs::path dir = out_dir(cm);
            const auto loaded = load_all(cm);
            std::vector<NamedSet> named;
            for (const auto& l : loaded) named.push_back({l.ref.name, &l.set});
            const ComparisonTables t =
                compare_tables(named, cfg.layers, cfg.alpha, cfg.bonferroni_n, cfg.alternative, cfg.magnitude);
            print_files(write_tables(t, {cfg.to_json(), ""}, dir, cfg.format));
        } else if (*contextgen) {
            if (cg_kind.empty()) throw CLI::ValidationError("--kind", "required");
            const auto originals = read_context_jsonl(cg_in);
            GeneratorInputs inputs;
            if (!cg_lexicon.empty()) {
                LexiconFile lex = load_lexicon(cg_lexicon);
                inputs.lexicon = std::move(lex.words);
                inputs.tagged = std::move(lex.tagged);
            }
            if (!cg_corpus.empty()) inputs.corpus_words = load_corpus_words(cg_corpus);
            const auto generated = generate_contexts(random_kind_from_string(cg_kind), originals, inputs, cg_seed);
            if (cg_out.empty()) {
                for (const auto& r : generated) {
                    nlohmann::json j = {{"statement_id", r.statement_id}, {"context", r.context}, {"kind", r.kind},
                                        {"word_count", r.word_count}};
                    std::cout << j.dump() << "\n";
                }
            } else {
                write_context_jsonl(generated, cg_out);
            }
            if (!cg_stats.empty()) {
                auto stats_json = [](const CorpusStats& s) {
                    return nlohmann::json{{"n_rows", s.n_rows}, {"mean_words", s.mean_words}, {"flesch", s.flesch}};
                };
                const nlohmann::json j = {{"version", version()},
                                          {"kind", cg_kind},
                                          {"seed", cg_seed},
                                          {"input", stats_json(corpus_stats(originals))},
                                          {"generated", stats_json(corpus_stats(generated))}};
                std::ofstream(cg_stats) << j.dump(2) << "\n";
            }
        } else if (*synth) {
            SyntheticSpec spec;
            if (sy_preset == "demo") {
                spec = demo_spec(sy_k, sy_l, sy_d);
            } else {
                spec.n_statements = sy_k;
                spec.n_layers = sy_l;
                spec.hidden_dim = sy_d;
                spec.theta_deg = three_phase_curve(sy_l, 90.0, 25.0, std::max<std::size_t>(1, sy_l * 8 / 30),
                                                   std::max<std::size_t>(2, sy_l * 16 / 30));
                spec.noise_rel = 0.05;
            }
            if (sy_noise >= 0.0) spec.noise_rel = sy_noise;
            write_dump(gen_synthetic(spec, sy_seed), sy_out);
            std::cout << sy_out << "\n";
            if (!sy_unembed.empty()) {
                write_unembedding(gen_synthetic_unembedding(sy_vocab, sy_d, mix_seed(sy_seed, 0x11)), sy_unembed);
                std::cout << sy_unembed << "\n";
            }
        } else if (*report) {
            const RunConfig cfg = make_config(rp);
            const ReportBundle b = run_pipeline(cfg, out_dir(rp));
            for (const auto& f : b.files) std::cout << (fs::path(rp.out) / f).generic_string() << "\n";
        } else if (*prompts) {
            const std::string tmpl = pq_template.empty() ? default_prompt_template() : read_file(pq_template);
            std::ofstream out(pq_out, std::ios::binary | std::ios::trunc);
            if (!out) throw std::runtime_error("cannot write " + pq_out);
            const auto rows = read_statement_jsonl(pq_in);
            for (std::size_t i = 0; i < rows.size(); ++i) {
                const auto& s = rows[i];
                const PromptQuad q = build_quad(s.statement_id, s.statement, s.choices, s.context, tmpl,
                                                mix_seed(pq_seed, i));
                out << quad_to_json(q, s) << "\n";
            }
        } else if (*inspect) {
            const ActivationSet set = read_dump(in_path);
            std::cout << nlohmann::json::parse(dump_header_json(set)).dump(2) << "\n";
        }
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
