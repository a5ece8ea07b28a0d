#include "ctxtruth/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ctxtruth/parallel.hpp"

#ifndef CTXTRUTH_VERSION
#define CTXTRUTH_VERSION "0.0.0"
#endif

namespace ctxtruth {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string context_slug(ContextKind k) {
    switch (k) {
        case ContextKind::None: return "none";
        case ContextKind::Relevant: return "relevant";
        case ContextKind::RandChar: return "char";
        case ContextKind::RandWord: return "word";
        case ContextKind::RandSalad: return "salad";
        case ContextKind::RandWiki: return "wiki";
        case ContextKind::RandShuffle: return "shuffle";
    }
    return "unknown";
}

std::size_t parse_size(std::string_view s, std::string_view what) {
    if (s.empty()) throw std::invalid_argument("empty " + std::string(what));
    std::size_t v = 0;
    for (char c : s) {
        if (c < '0' || c > '9') throw std::invalid_argument("bad " + std::string(what) + ": " + std::string(s));
        v = v * 10 + static_cast<std::size_t>(c - '0');
    }
    return v;
}

json provenance_json(const Provenance& prov) {
    json j = {{"software", "ctxtruth"}, {"version", version()}, {"config", prov.config}};
    if (!prov.dataset.empty()) j["dataset"] = prov.dataset;
    return j;
}

// CSV files open with '#' comment lines carrying the provenance.
std::string csv_preamble(const Provenance& prov) {
    std::string s = "# ctxtruth " + std::string(version()) + "\n";
    if (!prov.dataset.empty()) s += "# dataset " + prov.dataset + "\n";
    s += "# config " + prov.config.dump() + "\n";
    return s;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

fs::path with_ext(const fs::path& stem, const char* ext) {
    fs::path p = stem;
    p += ext;
    return p;
}

bool wants_csv(OutputFormat f) { return f != OutputFormat::Json; }
bool wants_json(OutputFormat f) { return f != OutputFormat::Csv; }

json optional_json(const std::optional<double>& x) { return x ? json(*x) : json(nullptr); }

json curve_points_json(const std::vector<CurvePoint>& points) {
    json arr = json::array();
    for (const auto& p : points) {
        arr.push_back({{"layer", p.layer},
                       {"mean", optional_json(p.mean)},
                       {"sem", optional_json(p.sem)},
                       {"n_valid", p.n_valid},
                       {"n_excluded", p.n_excluded}});
    }
    return arr;
}

json wilcoxon_json(const WilcoxonResult& w) {
    return {{"n_effective", w.n_effective},
            {"w_plus", w.w_plus},
            {"p_value", w.p_value},
            {"method", to_string(w.method)},
            {"alternative", to_string(w.alternative)}};
}

json comparison_json(const ComparisonResult& r) {
    return {{"mean_difference", r.mean_difference},
            {"n_pairs", r.n_pairs},
            {"significant_raw", r.significant_raw},
            {"significant_bonferroni", r.significant_bonferroni},
            {"wilcoxon", wilcoxon_json(r.wilcoxon)}};
}

// Runs fn, tagging any failure with the cell it belongs to.
template <class Fn>
auto in_cell(const std::string& dataset, const std::string& model, const std::string& what, Fn&& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        throw std::runtime_error("[model=" + model + " dataset=" + dataset + " " + what + "] " + e.what());
    }
}

StatementMatrix statement_matrix(const ActivationSet& set, ContextKind ctx, Quantity q, MagnitudeMode mode) {
    const TruthVectors tv(set, ctx);
    StatementMatrix m(set.n_layers);
    for (std::size_t l = 0; l < set.n_layers; ++l) m[l] = statement_values(tv, q, l, mode);
    return m;
}

}  // namespace

std::string_view version() { return CTXTRUTH_VERSION; }

DumpRef parse_dump_ref(std::string_view arg) {
    const auto eq = arg.find('=');
    DumpRef ref;
    if (eq != std::string_view::npos && eq > 0) {
        ref.name = std::string(arg.substr(0, eq));
        ref.path = std::string(arg.substr(eq + 1));
    } else {
        ref.path = std::string(arg);
        ref.name = ref.path.stem().string();
    }
    if (ref.path.empty()) throw std::invalid_argument("empty dump path in '" + std::string(arg) + "'");
    return ref;
}

std::vector<std::size_t> LayerSelection::resolve(std::size_t n_layers) const {
    if (n_layers == 0) throw std::invalid_argument("model has no layers");
    std::vector<std::size_t> out;
    switch (kind) {
        case Kind::Final: out.push_back(n_layers - 1); break;
        case Kind::All:
            for (std::size_t l = 0; l < n_layers; ++l) out.push_back(l);
            break;
        case Kind::Range:
            if (first < 1 || last < first || last > n_layers) {
                throw std::out_of_range("layer range " + to_string() + " outside 1-" + std::to_string(n_layers));
            }
            for (std::size_t l = first; l <= last; ++l) out.push_back(l - 1);
            break;
    }
    return out;
}

std::string LayerSelection::to_string() const {
    switch (kind) {
        case Kind::Final: return "final";
        case Kind::All: return "all";
        case Kind::Range:
            return first == last ? std::to_string(first) : std::to_string(first) + "-" + std::to_string(last);
    }
    return "?";
}

LayerSelection parse_layers(std::string_view s) {
    LayerSelection sel;
    if (s == "final") return sel;
    if (s == "all") {
        sel.kind = LayerSelection::Kind::All;
        return sel;
    }
    sel.kind = LayerSelection::Kind::Range;
    const auto dash = s.find('-');
    if (dash == std::string_view::npos) {
        sel.first = sel.last = parse_size(s, "layer");
    } else {
        sel.first = parse_size(s.substr(0, dash), "layer");
        sel.last = parse_size(s.substr(dash + 1), "layer");
    }
    if (sel.first < 1 || sel.last < sel.first) throw std::invalid_argument("bad layer range: " + std::string(s));
    return sel;
}

OutputFormat output_format_from_string(std::string_view s) {
    if (s == "csv") return OutputFormat::Csv;
    if (s == "json") return OutputFormat::Json;
    if (s == "both") return OutputFormat::Both;
    throw std::invalid_argument("unknown output format: " + std::string(s));
}

std::string_view to_string(OutputFormat f) {
    switch (f) {
        case OutputFormat::Csv: return "csv";
        case OutputFormat::Json: return "json";
        case OutputFormat::Both: return "both";
    }
    return "?";
}

json RunConfig::to_json() const {
    json dumps_j = json::array();
    for (const auto& d : dumps) dumps_j.push_back({{"name", d.name}, {"path", d.path.generic_string()}});
    json families = json::array();
    for (auto f : probe_families) families.push_back(to_string(f));
    return {
        {"dumps", dumps_j},
        {"unembedding", unembedding ? json(unembedding->generic_string()) : json(nullptr)},
        {"layers", layers.to_string()},
        {"alpha", alpha},
        {"bonferroni_n", bonferroni_n},
        {"alternative", to_string(alternative)},
        {"magnitude", magnitude == MagnitudeMode::SquaredNorm ? "squared_norm" : "norm"},
        {"seeds", {{"probe_split", seed}, {"probe_training", seed}}},
        {"probe_families", families},
        {"probe_context", context_slug(probe_context)},
        {"probe_split_ratio", ProbeOptions{}.ratio},
        {"filter_instruction_following", filter_instruction},
        {"lens", {{"mode", to_string(lens_mode)}, {"side", to_string(lens_side)}, {"eps_den", kLensDenominatorGuard}}},
        {"phase", {{"window", phase.window}, {"drop_deg", phase.drop_deg}, {"flat_deg", phase.flat_deg},
                   {"flat_run", phase.flat_run}}},
        {"wilcoxon", {{"zeros", "dropped"}, {"ties", "midrank"}, {"exact_max_n", kExactWilcoxonMaxN}}},
        {"format", to_string(format)},
    };
}

std::string format_number(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

std::string format_optional(const std::optional<double>& x) { return x ? format_number(*x) : std::string(); }

std::vector<fs::path> write_curve(const LayerCurve& curve, const Provenance& prov, const fs::path& stem,
                                  OutputFormat format) {
    std::vector<fs::path> written;
    if (wants_csv(format)) {
        std::string s = csv_preamble(prov);
        s += "# quantity " + std::string(to_string(curve.quantity)) + " context " + context_slug(curve.context) + "\n";
        s += "layer,mean,sem,n_valid,n_excluded\n";
        for (const auto& p : curve.points) {
            s += std::to_string(p.layer) + "," + format_optional(p.mean) + "," + format_optional(p.sem) + "," +
                 std::to_string(p.n_valid) + "," + std::to_string(p.n_excluded) + "\n";
        }
        written.push_back(with_ext(stem, ".csv"));
        write_text(written.back(), s);
    }
    if (wants_json(format)) {
        json j = provenance_json(prov);
        j["quantity"] = to_string(curve.quantity);
        j["context"] = context_slug(curve.context);
        j["points"] = curve_points_json(curve.points);
        written.push_back(with_ext(stem, ".json"));
        write_text(written.back(), j.dump(2) + "\n");
    }
    return written;
}

std::vector<fs::path> write_phases(const std::vector<std::pair<ContextKind, PhaseSegmentation>>& phases,
                                   const Provenance& prov, const fs::path& stem) {
    json j = provenance_json(prov);
    json arr = json::array();
    for (const auto& [kind, seg] : phases) {
        json e = {{"context", context_slug(kind)}, {"found", seg.found}, {"early_mean_deg", seg.early_mean}};
        if (seg.found) {
            e["phase2_start_layer"] = seg.p2_start;
            e["phase3_start_layer"] = seg.p3_start;
            e["phase3_from_argmin"] = seg.p3_from_argmin;
        }
        arr.push_back(std::move(e));
    }
    j["phases"] = std::move(arr);
    const fs::path path = with_ext(stem, ".json");
    write_text(path, j.dump(2) + "\n");
    return {path};
}

std::vector<fs::path> write_probe_report(const ProbeReport& report, const Provenance& prov, const fs::path& stem,
                                         OutputFormat format) {
    std::vector<fs::path> written;
    const std::string family(to_string(report.family));
    if (wants_csv(format)) {
        std::string s = csv_preamble(prov);
        s += "# context " + context_slug(report.context) + " split_ratio " + format_number(report.ratio) + " seed " +
             std::to_string(report.seed) + "\n";
        s += "layer,family,train_acc,test_acc,n_train,n_test\n";
        for (const auto& r : report.layers) {
            s += std::to_string(r.layer) + "," + family + "," + format_number(r.train_accuracy) + "," +
                 format_number(r.test_accuracy) + "," + std::to_string(r.n_train) + "," + std::to_string(r.n_test) +
                 "\n";
        }
        written.push_back(with_ext(stem, ".csv"));
        write_text(written.back(), s);
    }
    if (wants_json(format)) {
        json j = provenance_json(prov);
        j["family"] = family;
        j["context"] = context_slug(report.context);
        j["split_ratio"] = report.ratio;
        j["seed"] = report.seed;
        json rows = json::array();
        for (const auto& r : report.layers) {
            rows.push_back({{"layer", r.layer},
                            {"train_acc", r.train_accuracy},
                            {"test_acc", r.test_accuracy},
                            {"n_train", r.n_train},
                            {"n_test", r.n_test}});
        }
        j["layers"] = std::move(rows);
        written.push_back(with_ext(stem, ".json"));
        write_text(written.back(), j.dump(2) + "\n");
    }
    return written;
}

LensSummary lens_summary(const ActivationSet& set, const UnembeddingBundle& bundle, const LensOptions& options,
                         MagnitudeMode magnitude) {
    LensSummary s;
    s.curve = normalized_p(set, bundle, options);
    s.r_theta = try_correlate(s.curve, statement_matrix(set, options.context, Quantity::ThetaDegrees, magnitude));
    s.r_rm = try_correlate(s.curve, statement_matrix(set, options.context, Quantity::RmTcFc, magnitude));
    return s;
}

std::vector<fs::path> write_lens(const LensSummary& lens, const Provenance& prov, const fs::path& stem,
                                 OutputFormat format) {
    std::vector<fs::path> written;
    const auto& pts = lens.curve.points;
    if (wants_csv(format)) {
        std::string s = csv_preamble(prov);
        s += "# mode " + std::string(to_string(lens.curve.options.mode)) + " side " +
             std::string(to_string(lens.curve.options.side)) + " context " + context_slug(lens.curve.options.context) +
             "\n";
        s += "layer,mean_p,sem,n,excluded,r_theta,r_rm\n";
        for (std::size_t l = 0; l < pts.size(); ++l) {
            s += std::to_string(pts[l].layer) + "," + format_optional(pts[l].mean) + "," + format_optional(pts[l].sem) +
                 "," + std::to_string(pts[l].n_valid) + "," + std::to_string(pts[l].n_excluded) + "," +
                 format_optional(lens.r_theta[l]) + "," + format_optional(lens.r_rm[l]) + "\n";
        }
        written.push_back(with_ext(stem, ".csv"));
        write_text(written.back(), s);
    }
    if (wants_json(format)) {
        json j = provenance_json(prov);
        j["mode"] = to_string(lens.curve.options.mode);
        j["side"] = to_string(lens.curve.options.side);
        j["context"] = context_slug(lens.curve.options.context);
        j["points"] = curve_points_json(pts);
        json r_theta = json::array(), r_rm = json::array();
        for (std::size_t l = 0; l < pts.size(); ++l) {
            r_theta.push_back(optional_json(lens.r_theta[l]));
            r_rm.push_back(optional_json(lens.r_rm[l]));
        }
        j["r_theta"] = std::move(r_theta);
        j["r_rm"] = std::move(r_rm);
        written.push_back(with_ext(stem, ".json"));
        write_text(written.back(), j.dump(2) + "\n");
    }
    return written;
}

ComparisonTables compare_tables(const std::vector<NamedSet>& sets, const LayerSelection& layers, double alpha,
                                std::size_t bonferroni_n, Alternative alternative, MagnitudeMode magnitude) {
    ComparisonTables t;
    t.alpha = alpha;
    t.alternative = alternative;
    for (const auto& ns : sets) {
        for (std::size_t l : layers.resolve(ns.set->n_layers)) {
            for (ContextKind kind : kRandomKinds) {
                ComparisonCell c;
                c.dataset = ns.name;
                c.layer = l + 1;
                c.kind = kind;
                c.present = ns.set->has_context(kind);
                t.cells.push_back(std::move(c));
            }
        }
    }
    const std::size_t n_present = static_cast<std::size_t>(
        std::count_if(t.cells.begin(), t.cells.end(), [](const ComparisonCell& c) { return c.present; }));
    t.n_single = bonferroni_n != 0 ? bonferroni_n : std::max<std::size_t>(n_present, 1);
    t.n_combined = 2 * t.n_single;
    const double combined_threshold = bonferroni(alpha, t.n_combined);

    for (auto& c : t.cells) {
        if (!c.present) continue;
        const auto it = std::find_if(sets.begin(), sets.end(), [&](const NamedSet& s) { return s.name == c.dataset; });
        const ActivationSet& set = *it->set;
        CompareOptions opt;
        opt.layer = c.layer - 1;
        opt.alpha = alpha;
        opt.n_tests = t.n_single;
        opt.alternative = alternative;
        opt.magnitude = magnitude;
        const std::string where = "layer=" + std::to_string(c.layer) + " condition=" + context_slug(c.kind);
        c.theta = in_cell(c.dataset, set.model_name, where + " quantity=theta", [&] {
            return compare_conditions(set, Quantity::ThetaDegrees, ContextKind::Relevant, c.kind, opt);
        });
        c.rm = in_cell(c.dataset, set.model_name, where + " quantity=rm_tc_fc", [&] {
            return compare_conditions(set, Quantity::RmTcFc, ContextKind::Relevant, c.kind, opt);
        });
        c.label_raw = classify(c.theta.significant_raw, c.rm.significant_raw);
        c.label_bonferroni =
            classify(c.theta.wilcoxon.p_value < combined_threshold, c.rm.wilcoxon.p_value < combined_threshold);
    }
    return t;
}

std::string table_cell(const ComparisonResult& r, bool present, bool significant) {
    if (!present) return "absent";
    return format_number(r.mean_difference) + (significant ? "*" : "");
}

void check_label_consistency(const ComparisonTables& tables) {
    const double combined_threshold = bonferroni(tables.alpha, tables.n_combined);
    for (const auto& c : tables.cells) {
        if (!c.present) continue;
        const bool theta_marked = table_cell(c.theta, true, c.theta.significant_raw).ends_with('*');
        const bool rm_marked = table_cell(c.rm, true, c.rm.significant_raw).ends_with('*');
        if (classify(theta_marked, rm_marked) != c.label_raw ||
            classify(c.theta.wilcoxon.p_value < combined_threshold, c.rm.wilcoxon.p_value < combined_threshold) !=
                c.label_bonferroni) {
            throw std::logic_error("label table disagrees with theta/rm tables at dataset " + c.dataset + " layer " +
                                   std::to_string(c.layer) + " kind " + context_slug(c.kind));
        }
    }
}

std::vector<fs::path> write_tables(const ComparisonTables& tables, const Provenance& prov, const fs::path& dir,
                                   OutputFormat format) {
    check_label_consistency(tables);
    std::vector<fs::path> written;
    const double combined_threshold = bonferroni(tables.alpha, tables.n_combined);

    // Rows are (dataset, layer) in first-seen order; cells come grouped that way.
    std::vector<std::pair<std::size_t, std::size_t>> rows;  // [begin, end) into cells
    for (std::size_t i = 0; i < tables.cells.size();) {
        std::size_t j = i;
        while (j < tables.cells.size() && tables.cells[j].dataset == tables.cells[i].dataset &&
               tables.cells[j].layer == tables.cells[i].layer) {
            ++j;
        }
        rows.emplace_back(i, j);
        i = j;
    }

    auto emit = [&](const std::string& name, const std::string& note, auto&& cell_text) {
        std::string s = csv_preamble(prov);
        s += "# " + note + "\n";
        s += "dataset,layer";
        for (ContextKind k : kRandomKinds) s += "," + context_slug(k);
        s += "\n";
        for (const auto& [b, e] : rows) {
            s += tables.cells[b].dataset + "," + std::to_string(tables.cells[b].layer);
            for (ContextKind k : kRandomKinds) {
                std::string text = "absent";
                for (std::size_t i = b; i < e; ++i) {
                    if (tables.cells[i].kind == k) text = cell_text(tables.cells[i]);
                }
                s += "," + text;
            }
            s += "\n";
        }
        written.push_back(dir / (name + ".csv"));
        write_text(written.back(), s);
    };

    const std::string alt(to_string(tables.alternative));
    const std::string raw_note = "relevant minus random; * marks p < " + format_number(tables.alpha) +
                                 " (Wilcoxon signed-rank, " + alt + ")";
    const std::string bonf_note = "relevant minus random; * marks p < alpha/N with N=" +
                                  std::to_string(tables.n_single) + " (threshold " +
                                  format_number(bonferroni(tables.alpha, tables.n_single)) + ", " + alt + ")";
    const std::string label_raw_note = "label from theta and rm significance at p < " + format_number(tables.alpha);
    const std::string label_bonf_note = "label from theta and rm significance at alpha/N with N=" +
                                        std::to_string(tables.n_combined) + " (threshold " +
                                        format_number(combined_threshold) + ")";

    if (wants_csv(format)) {
        emit("theta", raw_note, [](const ComparisonCell& c) { return table_cell(c.theta, c.present, c.theta.significant_raw); });
        emit("theta_bonferroni", bonf_note,
             [](const ComparisonCell& c) { return table_cell(c.theta, c.present, c.theta.significant_bonferroni); });
        emit("rm", raw_note, [](const ComparisonCell& c) { return table_cell(c.rm, c.present, c.rm.significant_raw); });
        emit("rm_bonferroni", bonf_note,
             [](const ComparisonCell& c) { return table_cell(c.rm, c.present, c.rm.significant_bonferroni); });
        emit("labels", label_raw_note,
             [](const ComparisonCell& c) { return c.present ? std::string(to_string(c.label_raw)) : "absent"; });
        emit("labels_bonferroni", label_bonf_note, [](const ComparisonCell& c) {
            return c.present ? std::string(to_string(c.label_bonferroni)) : "absent";
        });
    }
    if (wants_json(format)) {
        json j = provenance_json(prov);
        j["alpha"] = tables.alpha;
        j["alternative"] = alt;
        j["bonferroni"] = {{"n_single", tables.n_single},
                           {"threshold_single", bonferroni(tables.alpha, tables.n_single)},
                           {"n_combined", tables.n_combined},
                           {"threshold_combined", combined_threshold}};
        json cells = json::array();
        for (const auto& c : tables.cells) {
            json e = {{"dataset", c.dataset}, {"layer", c.layer}, {"kind", context_slug(c.kind)}, {"present", c.present}};
            if (c.present) {
                e["theta"] = comparison_json(c.theta);
                e["rm"] = comparison_json(c.rm);
                e["label_raw"] = to_string(c.label_raw);
                e["label_bonferroni"] = to_string(c.label_bonferroni);
            }
            cells.push_back(std::move(e));
        }
        j["cells"] = std::move(cells);
        written.push_back(dir / "comparisons.json");
        write_text(written.back(), j.dump(2) + "\n");
    }
    return written;
}

ReportBundle run_pipeline(const RunConfig& config, const fs::path& out_dir) {
    if (config.dumps.empty()) throw std::invalid_argument("run_pipeline: no dumps given");
    for (std::size_t i = 0; i < config.dumps.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (config.dumps[i].name == config.dumps[j].name) {
                throw std::invalid_argument("duplicate dataset name: " + config.dumps[i].name);
            }
        }
    }
    const json cfg = config.to_json();
    ReportBundle bundle;
    auto record = [&](const std::vector<fs::path>& files) {
        for (const auto& f : files) bundle.files.push_back(fs::relative(f, out_dir));
    };

    std::optional<UnembeddingBundle> unembed;
    if (config.unembedding) unembed = read_unembedding(*config.unembedding);

    std::vector<ActivationSet> sets;
    sets.reserve(config.dumps.size());
    for (const auto& ref : config.dumps) {
        ActivationSet set = in_cell(ref.name, "?", "load", [&] { return read_dump(ref.path); });
        if (config.filter_instruction) set = filter_instruction_following(set);
        sets.push_back(std::move(set));
    }

    json rm_summary = json::array();
    for (std::size_t di = 0; di < sets.size(); ++di) {
        const ActivationSet& set = sets[di];
        const std::string& name = config.dumps[di].name;
        const Provenance prov{cfg, name};
        const fs::path dir = out_dir / name;

        std::vector<ContextKind> contexts;
        if (set.has_context(ContextKind::Relevant)) contexts.push_back(ContextKind::Relevant);
        for (ContextKind k : kRandomKinds)
            if (set.has_context(k)) contexts.push_back(k);

        std::vector<std::pair<ContextKind, PhaseSegmentation>> phases;
        for (ContextKind ctx : contexts) {
            GeometryOptions g;
            g.context = ctx;
            g.magnitude = config.magnitude;
            g.threads = config.threads;
            const std::string where = "condition=" + context_slug(ctx);
            for (Quantity q : {Quantity::ThetaDegrees, Quantity::RmTcFc, Quantity::RmTcFnc, Quantity::RmTncFc}) {
                const LayerCurve curve = in_cell(name, set.model_name, where, [&] { return layer_curve(set, q, g); });
                record(write_curve(curve, prov, dir / "curves" / (std::string(to_string(q)) + "_" + context_slug(ctx)),
                                   config.format));
                if (q == Quantity::ThetaDegrees) {
                    PhaseSegmentation seg;
                    if (set.n_layers >= 6) {
                        const bool complete = std::all_of(curve.points.begin(), curve.points.end(),
                                                          [](const CurvePoint& p) { return p.mean.has_value(); });
                        if (complete) seg = phase_segment(curve, config.phase);
                    }
                    seg.params = config.phase;
                    phases.emplace_back(ctx, seg);
                }
            }
        }
        record(write_phases(phases, prov, dir / "phases"));

        for (ProbeFamily family : config.probe_families) {
            ProbeOptions po;
            po.context = config.probe_context;
            po.threads = config.threads;
            po.hyper.seed = config.seed;
            const ProbeReport rep = in_cell(name, set.model_name,
                                            "probe=" + std::string(to_string(family)) + " condition=" +
                                                context_slug(config.probe_context),
                                            [&] { return probe_report(set, family, config.seed, po); });
            record(write_probe_report(rep, prov, dir / "probes" / std::string(to_string(family)), config.format));
        }

        if (unembed && set.has_context(ContextKind::Relevant)) {
            LensOptions lo;
            lo.mode = config.lens_mode;
            lo.side = config.lens_side;
            lo.threads = config.threads;
            const LensSummary ls = in_cell(name, set.model_name, "lens condition=relevant",
                                           [&] { return lens_summary(set, *unembed, lo, config.magnitude); });
            record(write_lens(ls, prov, dir / "lens", config.format));
        }

        if (set.has_context(ContextKind::Relevant)) {
            const TruthVectors tv(set, ContextKind::Relevant);
            for (std::size_t l : config.layers.resolve(set.n_layers)) {
                json row = {{"dataset", name}, {"layer", l + 1}};
                for (Quantity q : {Quantity::RmTcFc, Quantity::RmTcFnc, Quantity::RmTncFc}) {
                    const auto vals = statement_values(tv, q, l, config.magnitude);
                    const CurvePoint p = aggregate(l + 1, vals);
                    row[std::string(to_string(q))] = {{"mean", optional_json(p.mean)}, {"sem", optional_json(p.sem)},
                                                      {"n_valid", p.n_valid}};
                }
                rm_summary.push_back(std::move(row));
            }
        }
    }

    std::vector<NamedSet> named;
    for (std::size_t i = 0; i < sets.size(); ++i) {
        if (sets[i].has_context(ContextKind::Relevant)) named.push_back({config.dumps[i].name, &sets[i]});
    }
    const Provenance table_prov{cfg, ""};
    const fs::path tables_dir = out_dir / "tables";
    bundle.tables =
        compare_tables(named, config.layers, config.alpha, config.bonferroni_n, config.alternative, config.magnitude);
    record(write_tables(bundle.tables, table_prov, tables_dir, config.format));

    {
        std::string s = csv_preamble(table_prov);
        s += "# mean relative magnitudes under relevant context at the comparison layers\n";
        s += "dataset,layer,rm_tc_fc,rm_tc_fnc,rm_tnc_fc\n";
        for (const auto& row : rm_summary) {
            auto cell = [&](const char* key) {
                const auto& m = row[key]["mean"];
                return m.is_null() ? std::string() : format_number(m.get<double>());
            };
            s += row["dataset"].get<std::string>() + "," + std::to_string(row["layer"].get<std::size_t>()) + "," +
                 cell("rm_tc_fc") + "," + cell("rm_tc_fnc") + "," + cell("rm_tnc_fc") + "\n";
        }
        if (wants_csv(config.format)) {
            const fs::path p = tables_dir / "rm_variants.csv";
            write_text(p, s);
            record({p});
        }
        if (wants_json(config.format)) {
            json j = provenance_json(table_prov);
            j["rows"] = rm_summary;
            const fs::path p = tables_dir / "rm_variants.json";
            write_text(p, j.dump(2) + "\n");
            record({p});
        }
    }

    json manifest = provenance_json(table_prov);
    json files = json::array();
    for (const auto& f : bundle.files) files.push_back(f.generic_string());
    manifest["files"] = std::move(files);
    json shapes = json::array();
    for (std::size_t i = 0; i < sets.size(); ++i) {
        json conds = json::array();
        for (const auto& c : sets[i].conditions) conds.push_back(std::string(to_string(c.truth_side)) + "/" + context_slug(c.context_kind));
        shapes.push_back({{"dataset", config.dumps[i].name},
                          {"model_name", sets[i].model_name},
                          {"n_layers", sets[i].n_layers},
                          {"hidden_dim", sets[i].hidden_dim},
                          {"n_statements_analyzed", sets[i].n_statements()},
                          {"conditions", conds}});
    }
    manifest["datasets"] = std::move(shapes);
    write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
    bundle.files.push_back("manifest.json");
    return bundle;
}

}  // namespace ctxtruth
