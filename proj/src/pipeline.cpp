#include "tmflow/app/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numbers>
#include <set>
#include <thread>

#include "tmflow/error.hpp"
#include "tmflow/io.hpp"

namespace tmflow::app {

namespace {

json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json num_array(const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(num(x));
    return a;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
    const unsigned workers = std::min<unsigned>(worker_threads(), static_cast<unsigned>(std::max<std::size_t>(n, 1)));
    if (workers <= 1 || n <= 1) {
        for (std::size_t k = 0; k < n; ++k) body(k);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t k = w; k < n; k += workers) {
                try {
                    body(k);
                } catch (...) {
                    errors[k] = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

// Reads typed fields from one JSON object, collecting violations.
class Reader {
public:
    Reader(const json& j, std::string prefix, std::vector<std::string>& errs)
        : j_(j), prefix_(std::move(prefix)), errs_(errs) {
        if (!j_.is_object()) errs_.push_back(where() + "must be an object");
    }

    bool has(const std::string& key) {
        known_.insert(key);
        return j_.is_object() && j_.contains(key) && !j_.at(key).is_null();
    }

    void number(const std::string& key, double& out) {
        if (!has(key)) return;
        const json& v = j_.at(key);
        if (v.is_number()) out = v.get<double>();
        else if (v.is_string() && (v == "inf" || v == "infinity")) out = std::numeric_limits<double>::infinity();
        else errs_.push_back(where() + key + " must be a number");
    }

    template <typename Int>
    void integer(const std::string& key, Int& out) {
        if (!has(key)) return;
        const json& v = j_.at(key);
        if (v.is_number_integer() && (std::is_signed_v<Int> || v.get<long long>() >= 0)) out = v.get<Int>();
        else errs_.push_back(where() + key + " must be a" + (std::is_signed_v<Int> ? "n integer" : " nonnegative integer"));
    }

    void string(const std::string& key, std::string& out) {
        if (!has(key)) return;
        const json& v = j_.at(key);
        if (v.is_string()) out = v.get<std::string>();
        else errs_.push_back(where() + key + " must be a string");
    }

    void numbers(const std::string& key, std::vector<double>& out) {
        if (!has(key)) return;
        const json& v = j_.at(key);
        if (!v.is_array()) {
            errs_.push_back(where() + key + " must be an array of numbers");
            return;
        }
        out.clear();
        for (const auto& x : v) {
            if (!x.is_number()) {
                errs_.push_back(where() + key + " must contain only numbers");
                return;
            }
            out.push_back(x.get<double>());
        }
    }

    const json* object(const std::string& key) {
        if (!has(key)) return nullptr;
        return &j_.at(key);
    }

    void require(bool ok, const std::string& msg) {
        if (!ok) errs_.push_back(where() + msg);
    }

    void finish() {
        if (!j_.is_object()) return;
        for (const auto& [k, v] : j_.items())
            if (!known_.count(k)) errs_.push_back(where() + "unknown key '" + k + "'");
    }

private:
    std::string where() const { return prefix_.empty() ? "" : prefix_ + "."; }

    const json& j_;
    std::string prefix_;
    std::vector<std::string>& errs_;
    std::set<std::string> known_;
};

bool positive(double x) { return x > 0.0 && std::isfinite(x); }

void parse_torus(const json& j, TorusSetup& t, std::vector<std::string>& errs) {
    Reader r(j, "torus", errs);
    r.number("eta", t.flow.eta);
    r.number("dt", t.flow.dt);
    r.integer("N", t.flow.N);
    r.integer("target_dim", t.flow.target_dim);
    r.number("cfl_factor", t.flow.cfl_factor);
    r.number("max_time", t.flow.max_time);
    r.number("inj_floor", t.flow.inj_floor);
    r.integer("sample_every", t.flow.sample_every);
    r.string("preset", t.preset);
    r.number("amplitude", t.amplitude);
    r.string("grid_file", t.grid_file);
    if (const json* m = r.object("modulus")) {
        Reader rm(*m, "torus.modulus", errs);
        rm.number("a", t.modulus.a);
        rm.number("b", t.modulus.b);
        rm.require(positive(t.modulus.b), "b must be positive");
        rm.require(std::isfinite(t.modulus.a), "a must be finite");
        rm.finish();
    }
    r.require(t.flow.eta >= 0.0 && std::isfinite(t.flow.eta), "eta must be finite and nonnegative");
    r.require(t.flow.dt >= 0.0 && std::isfinite(t.flow.dt), "dt must be finite and nonnegative");
    r.require(t.flow.N >= 8, "N must be at least 8");
    r.require(t.flow.target_dim >= 1, "target_dim must be at least 1");
    r.require(t.flow.cfl_factor > 0.0 && t.flow.cfl_factor <= 0.25, "cfl_factor must lie in (0, 0.25]");
    r.require(positive(t.flow.max_time), "max_time must be positive and finite");
    r.require(positive(t.flow.inj_floor), "inj_floor must be positive");
    r.require(t.flow.sample_every >= 1, "sample_every must be at least 1");
    static const std::set<std::string> presets = {"constant", "wrap", "wrap-perturbed", "custom"};
    r.require(presets.count(t.preset) > 0, "preset must be one of constant, wrap, wrap-perturbed, custom");
    r.require(t.preset != "wrap-perturbed" || t.flow.target_dim >= 2, "wrap-perturbed needs target_dim >= 2");
    r.require(t.preset != "wrap" || t.flow.target_dim >= 1, "wrap needs target_dim >= 1");
    r.require(t.amplitude >= 0.0 && std::isfinite(t.amplitude), "amplitude must be finite and nonnegative");
    r.require(t.preset != "custom" || !t.grid_file.empty(), "custom preset needs grid_file");
    r.finish();
}

void parse_collar(const json& j, CollarConfig& c, std::vector<std::string>& errs) {
    Reader r(j, "collar", errs);
    r.number("ell0", c.ell0);
    r.number("T", c.T);
    r.number("delta", c.delta);
    r.number("ell_floor", c.ell_floor);
    r.number("cfl_factor", c.cfl_factor);
    r.number("dt", c.dt);
    r.number("max_time", c.max_time);
    r.integer("n_theta", c.n_theta);
    r.integer("target_dim", c.target_dim);
    r.integer("sample_every", c.sample_every);
    r.string("schedule", c.schedule);
    r.string("preset", c.preset);
    r.number("perturbation", c.perturbation);
    r.finish();
    try {
        validate(c);
    } catch (const ConfigError& e) {
        for (const auto& v : e.violations()) errs.push_back("collar." + v);
    }
}

void parse_ricci(const json& j, RicciSetup& s, std::vector<std::string>& errs) {
    Reader r(j, "ricci", errs);
    r.integer("punctures", s.punctures);
    r.number("cap", s.cap);
    r.integer("ntheta", s.ntheta);
    r.integer("nphi", s.nphi);
    r.number("cfl", s.run.cfl);
    r.integer("sample_every", s.run.sample_every);
    r.number("curvature_blowup", s.run.curvature_blowup);
    r.number("u_floor", s.run.u_floor);
    r.number("max_time", s.run.max_time);
    r.integer("max_steps", s.run.max_steps);
    r.require(s.punctures >= 3, "punctures must be at least 3");
    r.require(s.cap >= 20.0 && std::isfinite(s.cap), "cap must be finite and at least 20");
    r.require(s.ntheta >= 16, "ntheta must be at least 16");
    r.require(s.nphi >= 16, "nphi must be at least 16");
    r.require(s.run.cfl > 0.0 && s.run.cfl <= 0.5, "cfl must lie in (0, 0.5]");
    r.require(s.run.sample_every >= 1, "sample_every must be at least 1");
    r.require(positive(s.run.curvature_blowup), "curvature_blowup must be positive");
    r.require(positive(s.run.u_floor), "u_floor must be positive");
    r.require(s.run.max_time > 0.0, "max_time must be positive");
    r.require(s.run.max_steps >= 1, "max_steps must be at least 1");
    r.finish();
}

void parse_analysis(const json& j, AnalysisOptions& a, std::vector<std::string>& errs) {
    Reader r(j, "analysis", errs);
    r.number("eps0", a.eps0);
    r.numbers("ladder", a.ladder);
    r.integer("m", a.m);
    r.number("K", a.K);
    r.numbers("delta_ladder", a.delta_ladder);
    r.number("window_factor", a.extract.window_factor);
    r.number("tension_threshold", a.extract.tension_threshold);
    r.number("energy_floor", a.extract.energy_floor);
    r.number("misalign_factor", a.extract.misalign_factor);
    r.number("scale_cap", a.extract.scale_cap);
    r.number("osc_threshold", a.branch.osc_threshold);
    r.integer("lambda_trim", a.branch.lambda_trim);
    r.number("T", a.T);
    r.require(positive(a.eps0), "eps0 must be positive");
    r.require(!a.ladder.empty() && std::all_of(a.ladder.begin(), a.ladder.end(), positive),
              "ladder must be a nonempty list of positive radii");
    r.require(a.m >= 1, "m must be at least 1");
    r.require(positive(a.K), "K must be positive");
    r.require(std::all_of(a.delta_ladder.begin(), a.delta_ladder.end(), positive), "delta_ladder entries must be positive");
    r.require(positive(a.extract.window_factor), "window_factor must be positive");
    r.require(positive(a.extract.tension_threshold), "tension_threshold must be positive");
    r.require(a.extract.energy_floor >= 0.0, "energy_floor must be nonnegative");
    r.require(positive(a.extract.misalign_factor), "misalign_factor must be positive");
    r.require(positive(a.extract.scale_cap), "scale_cap must be positive");
    r.require(positive(a.branch.osc_threshold), "osc_threshold must be positive");
    r.require(a.branch.lambda_trim >= 1, "lambda_trim must be at least 1");
    r.finish();
    a.branch.extract = a.extract;
}

void parse_topology(const json& j, RunConfig& cfg, std::vector<std::string>& errs) {
    Reader r(j, "topology", errs);
    r.integer("genus", cfg.genus);
    r.integer("k", cfg.k);
    if (const json* comps = r.object("components")) {
        if (!comps->is_array()) {
            errs.push_back("topology.components must be an array");
        } else {
            cfg.components.clear();
            for (std::size_t i = 0; i < comps->size(); ++i) {
                SurfaceTopology st;
                Reader rc((*comps)[i], "topology.components[" + std::to_string(i) + "]", errs);
                rc.integer("genus", st.genus);
                rc.integer("punctures", st.punctures);
                rc.require(st.genus >= 0 && st.punctures >= 0, "genus and punctures must be nonnegative");
                rc.finish();
                cfg.components.push_back(st);
            }
        }
    }
    r.finish();
}

void check_topology(const RunConfig& cfg, std::vector<std::string>& errs) {
    try {
        make_degeneration(cfg.genus, cfg.k, cfg.components);
    } catch (const DomainError& e) {
        errs.push_back(std::string("topology: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// in-memory analysis

struct Frame {
    Snapshot snap;
    std::vector<double> node_energy;
    GridGeometry geo;
};

GridGeometry geometry_for(const Snapshot& s, CylinderDomain* dom_out) {
    if (s.cylinder) {
        const CylinderDomain dom = CylinderDomain::make(s.a, s.u.cols);
        if (dom.ns != s.u.rows) throw DomainError("cylinder snapshot rows do not match its half-length");
        if (dom_out) *dom_out = dom;
        return cylinder_geometry(dom);
    }
    if (s.u.rows != s.u.cols) throw DomainError("torus snapshot must be square");
    return torus_geometry(s.u.rows, TorusModulus{s.a, s.b});
}

double infer_singular_time(const FlowHistory& h, bool cylinder) {
    const auto& s = h.samples;
    if (cylinder && s.size() >= 2) {
        const double ell0 = s.front().b;
        for (auto it = s.rbegin(); it != s.rend(); ++it)
            if (it->b < ell0 * (1.0 - 1e-9) && it->t > 0.0) return it->t / (1.0 - it->b / ell0);
    }
    return s.back().t;
}

json candidate_json(const BubbleCandidate& c, const GridGeometry& geo) {
    json flags = json::array();
    for (const auto& f : c.flags) flags.push_back(f);
    return {{"accepted", c.accepted},
            {"reason", c.reason},
            {"flags", flags},
            {"row", c.row},
            {"col", c.col},
            {"x", num(static_cast<double>(c.col) * geo.hx)},
            {"y", num(geo.y0 + static_cast<double>(c.row) * geo.hy)},
            {"scale", num(c.scale)},
            {"band", c.band},
            {"window_energy", num(c.window_energy)},
            {"energy", num(c.energy)},
            {"tension", num(c.tension)},
            {"centroid_offset", num(c.centroid_offset)}};
}

json ledger_json(const EnergyLedger& L) {
    auto checks = [](const std::vector<LedgerCheck>& v) {
        json a = json::array();
        for (const auto& c : v)
            a.push_back({{"t", num(c.t)}, {"delta", num(c.delta)}, {"thin_energy", num(c.thin_energy)},
                         {"discrepancy", num(c.discrepancy)}});
        return a;
    };
    return {{"E_T", num(L.E_T)},
            {"E_thick", num(L.E_thick)},
            {"E_thin", num(L.E_thin)},
            {"thin_mask_energy", num(L.thin_mask_energy)},
            {"additivity_defect", num(L.additivity_defect)},
            {"delta_ladder", num_array(L.delta_ladder)},
            {"thick_by_delta", num_array(L.thick_by_delta)},
            {"checks_T_minus_t", checks(L.checks_T_minus_t)},
            {"checks_K", checks(L.checks_K)},
            {"K", num(L.K)},
            {"bubble_energies", num_array(L.bubble_energies)},
            {"bubble_total", num(L.bubble_total)}};
}

struct AnalysisResult {
    json report;
    std::string osc_csv;
    EnergyLedger ledger;
    std::vector<BubbleCandidate> accepted;
    GridGeometry geo;
};

AnalysisResult analyze_frames(const FlowHistory& history, std::vector<Snapshot> snaps, bool cylinder,
                              const AnalysisOptions& opt) {
    if (history.samples.empty()) throw DomainError("analysis needs a nonempty history");
    if (snaps.size() < 2) throw DomainError("analysis needs at least 2 snapshots");
    for (const auto& s : snaps) {
        if (s.cylinder != cylinder)
            throw DomainError(cylinder ? "snapshots are torus data but --collar was given"
                                       : "snapshots are cylinder data; pass --collar");
        if (s.u.rows != snaps.front().u.rows || s.u.cols != snaps.front().u.cols || s.u.dim != snaps.front().u.dim)
            throw DomainError("snapshots have inconsistent dimensions");
    }
    std::stable_sort(snaps.begin(), snaps.end(), [](const Snapshot& a, const Snapshot& b) { return a.time < b.time; });

    std::vector<Frame> frames(snaps.size());
    CylinderDomain dom;
    for (std::size_t k = 0; k < snaps.size(); ++k) {
        frames[k].snap = std::move(snaps[k]);
        frames[k].geo = geometry_for(frames[k].snap, cylinder ? &dom : nullptr);
    }
    parallel_for(frames.size(), [&](std::size_t k) {
        frames[k].node_energy = node_energies(frames[k].snap.u, frames[k].geo);
    });
    const Frame& fin = frames.back();
    const GridGeometry& geo = fin.geo;
    const double T = opt.T > 0.0 ? opt.T : infer_singular_time(history, cylinder);
    const double t_fin = fin.snap.time;

    AnalysisResult res;
    res.geo = geo;
    json& rep = res.report;
    rep["schema_version"] = kReportSchemaVersion;
    rep["kind"] = "analysis";
    rep["geometry"] = cylinder ? "cylinder" : "torus";
    rep["T"] = num(T);
    rep["final_time"] = num(t_fin);
    rep["snapshots"] = frames.size();

    // concentration points and their bubbles
    std::vector<std::vector<double>> ne;
    for (const auto& f : frames) ne.push_back(f.node_energy);
    const auto points = detect_concentration_points(ne, geo, opt.eps0, opt.ladder, opt.m);
    ExtractOptions ex = opt.extract;
    if (T > t_fin) ex.time_to_singularity = T - t_fin;
    json pts = json::array(), cands = json::array();
    std::vector<BubbleCandidate> candidates;
    const double r_max = *std::max_element(opt.ladder.begin(), opt.ladder.end());
    for (const auto& p : points) {
        pts.push_back({{"row", p.row}, {"col", p.col}, {"x", num(p.x)}, {"y", num(p.y)}, {"energy", num(p.energy)}});
        const double scale = estimate_scale(fin.node_energy, geo, p.row, p.col, r_max);
        candidates.push_back(extract_bubble(fin.snap.u, geo, p.row, p.col, scale, ex));
        cands.push_back(candidate_json(candidates.back(), geo));
    }
    rep["concentration_points"] = pts;
    rep["candidates"] = cands;

    // good times
    const GoodTimeSequence gts = select_good_times(history, T);
    rep["good_times"] = {{"indices", gts.indices},
                         {"times", num_array(gts.times)},
                         {"values", num_array(gts.values)},
                         {"tension_integral", num(gts.tension_integral)},
                         {"E0", num(gts.E0)},
                         {"integral_ok", gts.integral_ok}};

    // full bubble branch on the cylinder
    std::vector<double> bubble_energies;
    if (cylinder) {
        BranchOptions bo = opt.branch;
        bo.extract = ex;
        const BubbleBranchReport br = segment_bubble_branch(fin.snap.u, geo, bo);
        json segs = json::array(), bc = json::array();
        for (const auto& s : br.segments)
            segs.push_back({{"row_begin", s.row_begin}, {"row_end", s.row_end}, {"bubble_region", s.bubble_region},
                            {"energy", num(s.energy)}, {"max_osc", num(s.max_osc)}});
        for (const auto& c : br.candidates) {
            bc.push_back(candidate_json(c, geo));
            if (c.accepted) {
                bubble_energies.push_back(c.energy);
                res.accepted.push_back(c);
            }
        }
        rep["branch"] = {{"splits", num_array(br.splits)},
                         {"split_rows", br.split_rows},
                         {"segments", segs},
                         {"candidates", bc},
                         {"total_energy", num(br.total_energy)},
                         {"segment_energy_sum", num(br.segment_energy_sum)}};
        res.osc_csv = "s,osc\n";
        for (std::size_t i = 0; i < br.osc_profile.size(); ++i)
            res.osc_csv += format_double(br.s_values[i]) + ',' + format_double(br.osc_profile[i]) + '\n';
    } else {
        for (const auto& c : candidates)
            if (c.accepted) {
                bubble_energies.push_back(c.energy);
                res.accepted.push_back(c);
            }
        rep["branch"] = nullptr;
        res.osc_csv = "y,osc\n";
        for (std::size_t i = 0; i < fin.snap.u.rows; ++i)
            res.osc_csv += format_double(geo.y0 + geo.hy * static_cast<double>(i)) + ',' +
                           format_double(circle_oscillation(fin.snap.u, i)) + '\n';
    }

    // thick/thin ledger
    std::vector<double> ladder = opt.delta_ladder;
    if (ladder.empty()) ladder = cylinder ? std::vector<double>{0.8, 0.4, 0.2, 0.1} : std::vector<double>{0.4, 0.2, 0.1, 0.05};
    if (cylinder) {
        const double ell_fin = fin.snap.b;
        std::vector<double> kept;
        for (double d : ladder)
            if (d >= ell_fin * (1.0 - 1e-12)) kept.push_back(d);
        if (kept.empty()) kept.push_back(ell_fin);
        ladder = kept;
    }
    std::vector<LedgerSnapshot> ls;
    for (const auto& f : frames) {
        LedgerSnapshot s;
        s.t = f.snap.time;
        s.node_energy = f.node_energy;
        for (double x : f.node_energy) s.E += x;
        if (cylinder) {
            const double ell = f.snap.b;
            const CylinderDomain d = dom;
            s.thin_mask = [ell, d](double delta) {
                const double X = collar_half_length(ell, delta);
                std::vector<bool> m(d.ns * d.ntheta);
                for (std::size_t i = 0; i < d.ns; ++i)
                    for (std::size_t j = 0; j < d.ntheta; ++j) m[i * d.ntheta + j] = std::abs(d.s(i)) <= X;
                return m;
            };
        } else {
            const double inj = injectivity_radius(TorusModulus{f.snap.a, f.snap.b});
            const std::size_t n = f.node_energy.size();
            s.thin_mask = [inj, n](double delta) { return std::vector<bool>(n, inj < delta); };
        }
        ls.push_back(std::move(s));
    }
    res.ledger = energy_ledger(ls, T, ladder, opt.K, bubble_energies);
    rep["ledger"] = ledger_json(res.ledger);

    // fitted constants (diagnostics only)
    json fitted = json::object();
    if (!cylinder) {
        std::vector<CutoffFunction> cuts;
        for (const auto& p : points) cuts.push_back({p.x, p.y, 0.25});
        if (cuts.empty()) cuts.push_back({0.5, 0.5, 0.25});
        json drift = json::array(), gates = json::array();
        const std::size_t N = fin.snap.u.rows;
        for (const auto& c : cuts) {
            std::vector<double> t, E, Ephi;
            double dphi = 0.0;
            for (std::size_t k = 0; k < frames.size(); ++k) {
                const TorusModulus g{frames[k].snap.a, frames[k].snap.b};
                const auto w = cutoff_weights(N, g, c);
                t.push_back(frames[k].snap.time);
                E.push_back(ls[k].E);
                Ephi.push_back(cutoff_energy(frames[k].snap.u, g, w));
                dphi = std::max(dphi, cutoff_gradient_sup(N, g, c));
            }
            const DriftReport dr = cutoff_energy_drift(t, E, Ephi, dphi);
            drift.push_back({{"cx", num(c.cx)}, {"cy", num(c.cy)}, {"r", num(c.r)}, {"max_observed", num(dr.max_observed)},
                             {"C", num(dr.C)}, {"pairs", dr.pairs}, {"finite", dr.finite}});
            const auto gate =
                eps_regularity_gate(fin.snap.u, TorusModulus{fin.snap.a, fin.snap.b}, c.cx, c.cy, c.r, opt.eps0);
            gates.push_back({{"cx", num(c.cx)}, {"cy", num(c.cy)}, {"r", num(c.r)}, {"pass", gate.pass},
                             {"local_energy", num(gate.local_energy)}, {"lhs", num(gate.lhs)},
                             {"rhs_base", num(gate.rhs_base)}, {"C_fit", num(gate.C_fit)}});
        }
        fitted["cutoff_drift"] = drift;
        fitted["eps_regularity"] = gates;
        fitted["length_decay"] = nullptr;
    } else {
        std::vector<LengthSample> len;
        for (const auto& s : history.samples) len.push_back({s.t, s.b, s.E});
        try {
            const DecayFit df = geodesic_length_decay_fit(len, T, history.samples.back().E);
            fitted["length_decay"] = {{"C", num(df.C)}, {"vacuous", df.vacuous}, {"samples_used", df.samples_used}};
        } catch (const DomainError& e) {
            fitted["length_decay"] = {{"error", e.what()}};
        }
        fitted["cutoff_drift"] = nullptr;
        fitted["eps_regularity"] = nullptr;
    }
    rep["fitted_constants"] = fitted;
    return res;
}

// ---------------------------------------------------------------------------
// run artifacts

std::string snapshot_name(std::size_t k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "snap_%05zu.bin", k);
    return buf;
}

void clear_snapshots(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) return;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".bin") fs::remove(e.path());
}

struct TorusArtifacts {
    TorusRunResult result;
    std::vector<Snapshot> snaps;
    json report;
};

FlowState torus_initial(const RunConfig& cfg) {
    const TorusSetup& ts = cfg.torus;
    FlowState s;
    s.g = ts.modulus;
    const std::size_t N = ts.flow.N;
    if (ts.preset == "constant") s.u = make_constant_map(N, ts.flow.target_dim);
    else if (ts.preset == "wrap") s.u = make_wrap_map(N, ts.flow.target_dim);
    else if (ts.preset == "wrap-perturbed") s.u = make_wrap_perturbed(N, ts.flow.target_dim, ts.amplitude, cfg.seed);
    else {
        const Snapshot snap = read_snapshot(ts.grid_file);
        std::vector<std::string> errs;
        if (snap.cylinder) errs.push_back("torus.grid_file holds cylinder data");
        if (snap.u.rows != N || snap.u.cols != N) errs.push_back("torus.grid_file grid does not match N");
        if (snap.u.dim != static_cast<std::size_t>(ts.flow.target_dim) + 1)
            errs.push_back("torus.grid_file components do not match target_dim");
        if (!(snap.b > 0.0)) errs.push_back("torus.grid_file modulus must have b > 0");
        if (!errs.empty()) throw ConfigError(errs);
        s.u = snap.u;
        s.g = TorusModulus{snap.a, snap.b};
    }
    return s;
}

TorusArtifacts run_torus_artifacts(const RunConfig& cfg) {
    TorusArtifacts art;
    FlowConfig fc = cfg.torus.flow;
    fc.snapshot_every = cfg.snapshot_every;
    art.result = run_torus(torus_initial(cfg), fc);
    const auto& r = art.result;
    for (const auto& s : r.snapshots) art.snaps.push_back({false, s.g.a, s.g.b, s.t, s.u});
    json rep;
    rep["schema_version"] = kReportSchemaVersion;
    rep["kind"] = "run";
    rep["scenario"] = "torus";
    rep["status"] = r.status;
    rep["final_time"] = num(r.final_state.t);
    rep["samples"] = r.history.samples.size();
    rep["snapshots"] = r.snapshots.size();
    rep["E0"] = num(r.history.samples.front().E);
    rep["E_final"] = num(r.history.samples.back().E);
    rep["max_energy_increase"] = num(r.max_energy_increase);
    rep["max_norm_defect"] = num(r.max_norm_defect);
    rep["max_det_defect"] = num(r.max_det_defect);
    try {
        rep["energy_identity_residual"] = num(energy_identity_residual(r.history, fc.eta));
    } catch (const DomainError&) {
        rep["energy_identity_residual"] = nullptr;
    }
    const HorizontalReport hz = horizontal_diagnostics(r.history, fc.eta);
    rep["horizontal"] = {{"bound_holds", hz.bound_holds}, {"min_margin", num(hz.min_margin)}, {"K0", num(hz.K0)},
                         {"L0", num(hz.L.empty() ? 0.0 : hz.L.front())}};
    rep["collar"] = nullptr;
    art.report = rep;
    return art;
}

struct CollarArtifacts {
    CollarRunResult result;
    std::vector<Snapshot> snaps;
    json report;
};

CollarArtifacts run_collar_artifacts(const RunConfig& cfg) {
    CollarArtifacts art;
    CollarConfig cc = cfg.collar;
    cc.snapshot_every = cfg.snapshot_every;
    cc.seed = cfg.seed;
    art.result = run_collar(cc);
    const auto& r = art.result;
    for (const auto& s : r.snapshots) art.snaps.push_back({true, r.dom.X, s.ell, s.t, s.u});
    json margins = json::array();
    for (const auto& tr : r.tension_reports) margins.push_back(num(tr.margin));
    const ThinPartEnergy thin = thin_part_energy(r.final_state, r.dom, cc.delta);
    json rep;
    rep["schema_version"] = kReportSchemaVersion;
    rep["kind"] = "run";
    rep["scenario"] = "collar";
    rep["status"] = r.status;
    rep["final_time"] = num(r.final_state.t);
    rep["samples"] = r.history.samples.size();
    rep["snapshots"] = r.snapshots.size();
    rep["E0"] = num(r.history.samples.front().E);
    rep["E_final"] = num(r.history.samples.back().E);
    rep["max_energy_increase"] = nullptr;
    rep["max_norm_defect"] = num(r.final_state.u.max_norm_defect());
    rep["max_det_defect"] = nullptr;
    rep["energy_identity_residual"] = nullptr;
    rep["horizontal"] = nullptr;
    rep["collar"] = {{"X0", num(r.dom.X)},
                     {"ns", r.dom.ns},
                     {"ntheta", r.dom.ntheta},
                     {"final_ell", num(r.final_state.ell)},
                     {"min_tension_margin", num(r.min_tension_margin)},
                     {"tension_margins", margins},
                     {"max_gauge_defect", num(r.max_gauge_defect)},
                     {"boundary_rows_intact", r.boundary_rows_intact},
                     {"thin_part", {{"X", num(thin.X)}, {"flat", num(thin.flat)}, {"g_gauge", num(thin.g_gauge)}}}};
    art.report = rep;
    return art;
}

void write_run_files(const std::string& out, const FlowHistory& h, const std::vector<Snapshot>& snaps, const json& rep) {
    ensure_directory(out);
    const std::string sdir = out + "/snapshots";
    ensure_directory(sdir);
    clear_snapshots(sdir);
    write_text(out + "/history.csv", history_csv(h));
    for (std::size_t k = 0; k < snaps.size(); ++k) write_snapshot(sdir + "/" + snapshot_name(k), snaps[k]);
    write_text(out + "/report.json", rep.dump(2) + "\n");
}

struct RicciOutcome {
    CuspedInitial init;
    RicciRun run;
    RicciRunReport report;
    json j;
};

RicciOutcome ricci_outcome(const RicciSetup& setup) {
    RicciOutcome o;
    o.init = build_cusped_initial(setup.punctures, setup.cap, setup.ntheta, setup.nphi);
    o.run = run_ricci(o.init.metric, setup.run);
    o.report = extinction_report(o.run, setup.punctures);
    const auto& i = o.init;
    const auto& r = o.report;
    o.j = {{"schema_version", kReportSchemaVersion},
           {"kind", "ricci"},
           {"punctures", setup.punctures},
           {"cap", num(setup.cap)},
           {"grid", {{"ntheta", setup.ntheta}, {"nphi", setup.nphi}}},
           {"initial",
            {{"area", num(i.area)},
             {"exact_area", num(i.exact_area)},
             {"deficit_measured", num(i.deficit_measured)},
             {"deficit_analytic", num(i.deficit_analytic)},
             {"beta_mean", num(i.beta_mean)},
             {"curvature_residual", num(i.curvature_residual)}}},
           {"run",
            {{"status", o.run.status},
             {"steps", o.run.steps},
             {"samples", o.run.samples.size()},
             {"final_time", num(o.run.samples.back().t)},
             {"min_K_violation", num(o.run.min_K_violation)},
             {"gauss_bonnet_max_error", num(o.run.gauss_bonnet_max_error)}}},
           {"report",
            {{"area0", num(r.area0)},
             {"slope", num(r.slope)},
             {"slope_rel_error", num(r.slope_rel_error)},
             {"T_pred", num(r.T_pred)},
             {"T_ref", num(r.T_ref)},
             {"deficit", num(r.deficit)},
             {"deficit_rel", num(r.deficit_rel)},
             {"deviation_last", num(r.deviation_last)},
             {"last_quartile_max_increase", num(r.last_quartile_max_increase)},
             {"area_strictly_decreasing", r.area_strictly_decreasing}}}};
    return o;
}

}  // namespace

json run_unguarded(const RunConfig& cfg);

unsigned worker_threads() {
    if (const char* env = std::getenv("TMFLOW_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v >= 1) return static_cast<unsigned>(std::min(v, 256L));
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

RunConfig parse_run_config(const json& j) {
    RunConfig cfg;
    std::vector<std::string> errs;
    Reader r(j, "", errs);
    r.string("scenario", cfg.scenario);
    r.string("output_dir", cfg.output_dir);
    r.integer("seed", cfg.seed);
    r.integer("snapshot_every", cfg.snapshot_every);
    if (const json* t = r.object("torus")) parse_torus(*t, cfg.torus, errs);
    if (const json* c = r.object("collar")) parse_collar(*c, cfg.collar, errs);
    if (const json* q = r.object("ricci")) parse_ricci(*q, cfg.ricci, errs);
    if (const json* a = r.object("analysis")) parse_analysis(*a, cfg.analysis, errs);
    else cfg.analysis.branch.extract = cfg.analysis.extract;
    if (const json* t = r.object("topology")) parse_topology(*t, cfg, errs);
    r.require(cfg.scenario == "torus" || cfg.scenario == "collar" || cfg.scenario == "ricci",
              "scenario must be one of torus, collar, ricci");
    r.require(!cfg.output_dir.empty(), "output_dir must be nonempty");
    r.finish();
    check_topology(cfg, errs);
    if (!errs.empty()) throw ConfigError(errs);
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    json j;
    try {
        j = json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw ConfigError({std::string("config is not valid JSON: ") + e.what()});
    } catch (const IoError& e) {
        throw ConfigError({e.what()});
    }
    return parse_run_config(j);
}

json run_unguarded(const RunConfig& cfg) {
    if (cfg.scenario == "torus") {
        const auto art = run_torus_artifacts(cfg);
        write_run_files(cfg.output_dir, art.result.history, art.snaps, art.report);
        return art.report;
    }
    if (cfg.scenario == "collar") {
        const auto art = run_collar_artifacts(cfg);
        write_run_files(cfg.output_dir, art.result.history, art.snaps, art.report);
        return art.report;
    }
    return run_ricci_scenario(cfg.ricci, cfg.output_dir);
}

json run(const RunConfig& cfg) {
    try {
        return run_unguarded(cfg);
    } catch (const NumericalAbort& e) {
        json rep = {{"schema_version", kReportSchemaVersion}, {"kind", "run"},   {"scenario", cfg.scenario},
                    {"status", "aborted"},                    {"error", e.what()}};
        ensure_directory(cfg.output_dir);
        write_text(cfg.output_dir + "/report.json", rep.dump(2) + "\n");
        throw;
    }
}

json run_ricci_scenario(const RicciSetup& setup, const std::string& out_dir) {
    const RicciOutcome o = ricci_outcome(setup);
    ensure_directory(out_dir);
    write_text(out_dir + "/ricci.csv", ricci_csv(o.run));
    write_text(out_dir + "/ricci_report.json", o.j.dump(2) + "\n");
    return o.j;
}

json analyze(const std::string& history_path, const std::string& snapshot_dir, bool cylinder,
             const AnalysisOptions& opt, const std::string& out_dir) {
    const FlowHistory h = read_history_csv(history_path);
    std::vector<Snapshot> snaps;
    for (const auto& p : list_snapshots(snapshot_dir)) snaps.push_back(read_snapshot(p));
    AnalysisResult res = analyze_frames(h, std::move(snaps), cylinder, opt);
    ensure_directory(out_dir);
    write_text(out_dir + "/analysis.json", res.report.dump(2) + "\n");
    write_text(out_dir + "/osc_profile.csv", res.osc_csv);
    return res.report;
}

json pipeline(const RunConfig& cfg) {
    json rep;
    rep["schema_version"] = kReportSchemaVersion;
    rep["kind"] = "pipeline";
    rep["scenario"] = cfg.scenario;
    rep["events"] = json::array();
    rep["failed_stage"] = nullptr;
    rep["error"] = nullptr;
    rep["error_kind"] = nullptr;
    rep["reconstruction"] = nullptr;
    rep["energy_conservation"] = nullptr;
    std::string stage = "flow";
    auto finish = [&]() {
        ensure_directory(cfg.output_dir);
        write_text(cfg.output_dir + "/pipeline_report.json", rep.dump(2) + "\n");
        return rep;
    };
    try {
        if (cfg.scenario == "ricci") {
            stage = "continuation";
            const RicciOutcome o = ricci_outcome(cfg.ricci);
            ensure_directory(cfg.output_dir);
            write_text(cfg.output_dir + "/ricci.csv", ricci_csv(o.run));
            rep["events"].push_back({{"time", num(o.report.T_pred)},
                                     {"type", "extinction"},
                                     {"k", nullptr},
                                     {"punctures", cfg.ricci.punctures},
                                     {"ledger", nullptr},
                                     {"continuation", o.j},
                                     {"bubbles", json::array()}});
            rep["reconstruction"] = {
                {"components", json::array({{{"genus", 0}, {"punctures", cfg.ricci.punctures}, {"energy", nullptr},
                                             {"canonical_metric", "normalized Ricci flow limit (round)"}}})},
                {"glued_cylinders", 0},
                {"bubbles", json::array()}};
            return finish();
        }

        FlowHistory history;
        std::vector<Snapshot> snaps;
        std::string status;
        double t_stop = 0.0, T = -1.0;
        if (cfg.scenario == "torus") {
            auto art = run_torus_artifacts(cfg);
            write_run_files(cfg.output_dir, art.result.history, art.snaps, art.report);
            history = art.result.history;
            snaps = std::move(art.snaps);
            status = art.result.status;
            t_stop = art.result.final_state.t;
        } else {
            auto art = run_collar_artifacts(cfg);
            write_run_files(cfg.output_dir, art.result.history, art.snaps, art.report);
            history = art.result.history;
            snaps = std::move(art.snaps);
            status = art.result.status;
            t_stop = art.result.final_state.t;
            if (cfg.collar.schedule == "linear") T = cfg.collar.T;
        }

        stage = "analysis";
        AnalysisOptions opt = cfg.analysis;
        if (opt.T <= 0.0 && T > 0.0) opt.T = T;
        const bool cylinder = cfg.scenario == "collar";
        AnalysisResult an = analyze_frames(history, std::move(snaps), cylinder, opt);
        write_text(cfg.output_dir + "/analysis.json", an.report.dump(2) + "\n");
        write_text(cfg.output_dir + "/osc_profile.csv", an.osc_csv);

        json bubbles = json::array();
        double bubble_total = 0.0;
        for (const auto& c : an.accepted) {
            bubbles.push_back({{"energy", num(c.energy)},
                               {"scale", num(c.scale)},
                               {"x", num(static_cast<double>(c.col) * an.geo.hx)},
                               {"y", num(an.geo.y0 + static_cast<double>(c.row) * an.geo.hy)}});
            bubble_total += c.energy;
        }

        stage = "continuation";
        json event = {{"time", num(t_stop)}, {"ledger", ledger_json(an.ledger)}, {"bubbles", bubbles},
                      {"continuation", nullptr}, {"k", nullptr}, {"punctures", nullptr}};
        json components = json::array();
        int glued = 0;
        if (cylinder && status == "pinched") {
            event["type"] = "collar-pinch";
            const DegenerationModel dm = make_degeneration(cfg.genus, cfg.k, cfg.components);
            event["k"] = dm.k;
            event["punctures"] = dm.puncture_count;
            glued = dm.k;
            std::vector<std::size_t> spheres;
            for (std::size_t i = 0; i < dm.components.size(); ++i)
                if (dm.components[i].genus == 0 && dm.components[i].punctures >= 3) spheres.push_back(i);
            std::vector<json> cont(spheres.size());
            parallel_for(spheres.size(), [&](std::size_t q) {
                RicciSetup rs = cfg.ricci;
                rs.punctures = dm.components[spheres[q]].punctures;
                cont[q] = ricci_outcome(rs).j;
                cont[q]["component"] = spheres[q];
            });
            json cj = json::array();
            for (auto& c : cont) cj.push_back(std::move(c));
            event["continuation"] = {{"sphere_components", cj}};
            for (std::size_t i = 0; i < dm.components.size(); ++i) {
                const auto& c = dm.components[i];
                components.push_back({{"genus", c.genus},
                                      {"punctures", c.punctures},
                                      {"energy", nullptr},
                                      {"canonical_metric", c.genus == 0 ? "normalized Ricci flow limit (round)"
                                                                        : "complete hyperbolic"}});
            }
        } else if (!cylinder && status == "degenerate") {
            event["type"] = "collar-pinch";
            event["k"] = 1;
            event["punctures"] = 2;
            glued = 1;
            components.push_back({{"genus", 0}, {"punctures", 2}, {"energy", num(an.ledger.E_thick)},
                                  {"canonical_metric", "none (no hyperbolic structure with 2 punctures)"}});
        } else if (!an.accepted.empty()) {
            event["type"] = "bubbling";
        } else {
            event["type"] = "timeout";
        }
        if (event["type"] == "bubbling" || event["type"] == "timeout") {
            const double tl = history.samples.back().tension_l2;
            event["continuation"] = {{"converged", tl < 1e-6}, {"final_tension_l2", num(tl)}};
            components.push_back({{"genus", cylinder ? 0 : 1},
                                  {"punctures", 0},
                                  {"energy", num(an.ledger.E_thick)},
                                  {"canonical_metric", cylinder ? "collar" : "flat"}});
        }
        if (!components.empty() && components[0]["energy"].is_null()) components[0]["energy"] = num(an.ledger.E_thick);
        rep["events"].push_back(event);
        rep["reconstruction"] = {{"components", components}, {"glued_cylinders", glued}, {"bubbles", bubbles}};

        const double E0 = history.samples.front().E;
        const double accounted = an.ledger.E_thick + bubble_total;
        const double tol = 0.05 * bubble_total + 1e-9 * std::abs(E0);
        rep["energy_conservation"] = {{"E0", num(E0)},
                                      {"E_final", num(an.ledger.E_T)},
                                      {"component_energy", num(an.ledger.E_thick)},
                                      {"bubble_energy", num(bubble_total)},
                                      {"gap", num(E0 - accounted)},
                                      {"tolerance", num(tol)},
                                      {"holds", E0 >= accounted - tol}};
    } catch (const NumericalAbort& e) {
        rep["failed_stage"] = stage;
        rep["error"] = e.what();
        rep["error_kind"] = "numerical-abort";
    } catch (const DomainError& e) {
        rep["failed_stage"] = stage;
        rep["error"] = e.what();
        rep["error_kind"] = "domain";
    } catch (const std::exception& e) {
        rep["failed_stage"] = stage;
        rep["error"] = e.what();
        rep["error_kind"] = "other";
    }
    return finish();
}

}  // namespace tmflow::app
