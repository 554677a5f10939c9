// Python bindings for the main convq operations.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <span>
#include <string>
#include <vector>

#include "convq/coordination.hpp"
#include "convq/pipeline.hpp"
#include "convq/predict.hpp"
#include "convq/reliability.hpp"
#include "convq/stats.hpp"
#include "convq/synth.hpp"
#include "convq/turntaking.hpp"

namespace py = pybind11;
using namespace convq;

namespace {

std::span<const double> view(const std::vector<double>& v) { return {v.data(), v.size()}; }

Eigen::MatrixXd axes_matrix(const AccelRecording& r) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(r.size()), 3);
    for (int a = 0; a < 3; ++a) {
        for (std::size_t i = 0; i < r.size(); ++i) m(static_cast<Eigen::Index>(i), a) = r.axes[static_cast<std::size_t>(a)][i];
    }
    return m;
}

std::vector<std::span<const std::uint8_t>> spans_of(const std::vector<std::vector<std::uint8_t>>& rows) {
    std::vector<std::span<const std::uint8_t>> out;
    for (const auto& r : rows) out.emplace_back(r.data(), r.size());
    return out;
}

py::dict regression_dict(const RegressionResult& r) {
    py::dict d;
    d["model"] = r.model;
    d["predictors"] = r.predictors;
    d["intercept"] = r.intercept;
    d["beta"] = r.beta;
    d["p_value"] = r.p_value;
    d["p_adjusted"] = r.p_adjusted;
    d["significant"] = r.significant;
    d["lambda"] = r.lambda;
    return d;
}

py::dict study_dict(const StudyResult& s) {
    py::list ranked;
    for (const auto& c : s.ranked) {
        py::dict row;
        row["condition"] = c.name;
        row["auc_mean"] = c.auc_mean;
        row["auc_std"] = c.auc_std;
        std::vector<double> fold_auc;
        for (const auto& f : c.folds) fold_auc.push_back(f.auc);
        row["fold_auc"] = fold_auc;
        ranked.append(row);
    }
    py::dict d;
    d["name"] = s.name;
    d["ranked"] = ranked;
    return d;
}

}  // namespace

PYBIND11_MODULE(_convq, m) {
    m.doc() = "Perceived conversation quality features, statistics and classifiers";

    py::register_exception<Error>(m, "ConvqError", PyExc_ValueError);

    // Coordination
    m.def(
        "lagged_correlation",
        [](const std::vector<double>& a, const std::vector<double>& b, int max_lag) {
            const auto r = lagged_correlation(view(a), view(b), max_lag);
            return py::dict(py::arg("min") = r.min, py::arg("max") = r.max, py::arg("argmin") = r.argmin,
                            py::arg("argmax") = r.argmax);
        },
        py::arg("a"), py::arg("b"), py::arg("max_lag"),
        "Min/max correlation of a_t with b_{t+lag}; a positive argmax means b trails a.");
    m.def(
        "granger",
        [](const std::vector<double>& cause, const std::vector<double>& effect, int order) {
            return granger(view(cause), view(effect), order);
        },
        py::arg("cause"), py::arg("effect"), py::arg("order") = 2);
    m.def(
        "coherence",
        [](const std::vector<double>& a, const std::vector<double>& b, std::size_t seg_len) {
            const auto c = coherence(view(a), view(b), seg_len);
            return py::make_tuple(c.min, c.max);
        },
        py::arg("a"), py::arg("b"), py::arg("segment_length"));
    m.def(
        "mutual_information",
        [](const std::vector<double>& a, const std::vector<double>& b, int bins) {
            return histogram_mutual_information(view(a), view(b), bins);
        },
        py::arg("a"), py::arg("b"), py::arg("bins") = 8);
    m.def(
        "symmetric_convergence",
        [](const std::vector<double>& a, const std::vector<double>& b) { return symmetric_convergence(view(a), view(b)); },
        py::arg("a"), py::arg("b"));
    m.def(
        "global_convergence",
        [](const std::vector<double>& a, const std::vector<double>& b) { return global_convergence(view(a), view(b)); },
        py::arg("a"), py::arg("b"));

    // Turn taking
    m.def(
        "segment_turns",
        [](const std::vector<std::uint8_t>& status, double rate_hz, double gap_ms, double backchannel_max_s) {
            const auto seq = segment_turns("", std::span<const std::uint8_t>(status), rate_hz, 0,
                                           TurnConfig{gap_ms, backchannel_max_s});
            std::vector<std::tuple<SampleIndex, SampleIndex, bool>> out;
            for (const auto& t : seq.turns) out.emplace_back(t.start, t.end, t.backchannel);
            return out;
        },
        py::arg("status"), py::arg("rate_hz") = kDefaultSampleRateHz, py::arg("gap_ms") = 500.0,
        py::arg("backchannel_max_s") = 2.0, "Turns as (start, end_exclusive, is_backchannel).");
    m.def(
        "turn_features",
        [](const std::vector<std::vector<std::uint8_t>>& statuses, double rate_hz) {
            std::vector<ParticipantId> ids;
            for (std::size_t i = 0; i < statuses.size(); ++i) ids.push_back(std::to_string(i));
            const auto feats = compute_turn_features(ids, spans_of(statuses), rate_hz);
            py::list out;
            for (const auto& f : feats) {
                py::dict d;
                for (const auto& name : turn_feature_names()) d[py::str(name)] = turn_feature_value(f, name);
                d["d_speak"] = f.d_speak;
                d["n_success_intr"] = f.n_success_intr;
                d["n_unsuccess_intr"] = f.n_unsuccess_intr;
                d["n_backchannels"] = f.n_backchannels;
                out.append(d);
            }
            return out;
        },
        py::arg("statuses"), py::arg("rate_hz") = kDefaultSampleRateHz);

    // Reliability
    m.def(
        "qw_kappa",
        [](const std::vector<int>& r1, const std::vector<int>& r2, int categories) {
            return qw_kappa(std::span<const int>(r1), std::span<const int>(r2), categories);
        },
        py::arg("r1"), py::arg("r2"), py::arg("categories") = 5);
    m.def(
        "pcq_score",
        [](const std::vector<int>& ratings, const std::vector<bool>& negative) {
            return pcq_score(std::span<const int>(ratings), negative);
        },
        py::arg("ratings"), py::arg("negative"));

    // Statistics
    m.def(
        "quantile_regression",
        [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<std::string>& names, double tau,
           int bootstrap, std::uint64_t seed, int bonferroni_m) {
            QuantileOptions o;
            o.tau = tau;
            o.bootstrap = bootstrap;
            o.seed = seed;
            o.bonferroni_m = bonferroni_m;
            return regression_dict(quantile_regression(x, y, names, o));
        },
        py::arg("x"), py::arg("y"), py::arg("names"), py::arg("tau") = 0.5, py::arg("bootstrap") = 1000,
        py::arg("seed") = 20240101, py::arg("bonferroni_m") = 1);
    m.def(
        "lasso",
        [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<std::string>& names, int grid,
           int bootstrap, std::uint64_t seed, int bonferroni_m) {
            LassoOptions o;
            o.lambdas = lasso_lambda_grid(x, y, grid);
            o.bootstrap = bootstrap;
            o.seed = seed;
            o.bonferroni_m = bonferroni_m;
            return regression_dict(lasso(x, y, names, o));
        },
        py::arg("x"), py::arg("y"), py::arg("names"), py::arg("grid") = 30, py::arg("bootstrap") = 200,
        py::arg("seed") = 20240101, py::arg("bonferroni_m") = 1);
    m.def(
        "spearman",
        [](const std::vector<double>& x, const std::vector<double>& y) { return spearman(view(x), view(y)); },
        py::arg("x"), py::arg("y"), "(rho, two-sided p)");
    m.def(
        "bonferroni", [](const std::vector<double>& p, int m) { return bonferroni(view(p), m); }, py::arg("p"),
        py::arg("m"));

    // Prediction
    m.def(
        "smote",
        [](const Eigen::MatrixXd& x, const std::vector<int>& y, int k, std::uint64_t seed) {
            auto r = smote(x, y, k, seed);
            std::vector<std::tuple<std::size_t, std::size_t, double>> syn;
            for (const auto& s : r.synthetic) syn.emplace_back(s.source, s.neighbour, s.u);
            return py::make_tuple(r.x, r.y, syn);
        },
        py::arg("x"), py::arg("y"), py::arg("k") = 5, py::arg("seed") = 0,
        "(x, y, [(source, neighbour, u)]) with synthetic rows appended.");
    m.def(
        "auc", [](const std::vector<double>& scores, const std::vector<int>& y) { return auc(view(scores), y); },
        py::arg("scores"), py::arg("y"));
    m.def("stratified_folds", &stratified_folds, py::arg("y"), py::arg("folds") = 5, py::arg("seed") = 20240101);
    m.def(
        "cross_validate",
        [](const Eigen::MatrixXd& x, const std::vector<int>& y, int folds, std::uint64_t seed) {
            ClassifierConfig cfg;
            cfg.folds = folds;
            cfg.seed = seed;
            return study_dict(run_study("cv", {StudyCondition{"x", x}}, y, cfg));
        },
        py::arg("x"), py::arg("y"), py::arg("folds") = 5, py::arg("seed") = 20240101,
        "Nested cross-validated elastic-loss classifier on one feature matrix.");

    // Synthetic data
    m.def(
        "gen_coupled_pair",
        [](int lag, double coupling, double sigma, std::size_t n, std::uint64_t seed) {
            const auto [a, b] = gen_coupled_pair(lag, coupling, sigma, n, seed);
            return py::make_tuple(axes_matrix(a), axes_matrix(b));
        },
        py::arg("lag"), py::arg("coupling"), py::arg("sigma"), py::arg("n"), py::arg("seed"),
        "(leader, follower) as n x 3 arrays.");
    m.def(
        "synthesize",
        [](const std::string& scenario_json, const std::filesystem::path& out_dir) {
            const auto data = gen_mini_mingle(parse_scenario(scenario_json));
            write_mini_mingle(data, out_dir);
            return data.groups.size();
        },
        py::arg("scenario_json"), py::arg("out_dir"), "Writes a synthetic dataset; returns the group count.");

    // Pipeline
    py::class_<Pipeline>(m, "Pipeline")
        .def(py::init([](const std::filesystem::path& config) { return Pipeline(load_config(config)); }),
             py::arg("config"))
        .def("run", &Pipeline::run, py::call_guard<py::gil_scoped_release>())
        .def("predict", [](Pipeline& p, const std::string& study) { return study_dict(p.predict(study)); },
             py::arg("study"))
        .def("stats", [](Pipeline& p) {
            const auto report = p.stats();
            py::list rows;
            for (const auto& r : report.rows) {
                py::dict d;
                d["dependent"] = r.dependent;
                d["set"] = r.set;
                d["model"] = r.model;
                d["predictor"] = r.predictor;
                d["n"] = r.n;
                d["beta"] = r.beta;
                d["p"] = r.p;
                d["p_adjusted"] = r.p_adjusted;
                d["significant"] = r.significant;
                rows.append(d);
            }
            return rows;
        });
}
