// Python surface over the run layer: the same operations the CLI exposes,
// plus a built-in gradient self-check.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "protoshift/rng.hpp"
#include "protoshift/run.hpp"
#include "protoshift/tensor.hpp"

namespace py = pybind11;

namespace {

using namespace protoshift;

RunConfig config_from(const py::object& obj) {
    if (obj.is_none()) return parse_run_config("{}");
    if (py::isinstance<py::str>(obj)) return parse_run_config(obj.cast<std::string>());
    if (py::isinstance<py::dict>(obj)) {
        py::object dumps = py::module_::import("json").attr("dumps");
        return parse_run_config(dumps(obj).cast<std::string>());
    }
    throw ConfigError("config must be None, a JSON string, or a dict");
}

py::dict report_dict(const EvalReport& report) {
    py::dict d;
    d["n"] = report.n;
    d["mean"] = report.mean;
    d["ci95"] = report.ci95;
    d["accuracies"] = report.accuracies;
    return d;
}

} // namespace

PYBIND11_MODULE(_protoshift, m) {
    m.doc() = "Few-shot classification under data shift: graph-backed prototypes";
    m.attr("__version__") = "0.1.0";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    m.def(
        "synth",
        [](const std::string& preset, const std::string& out_dir,
           std::optional<std::uint64_t> seed) {
            std::ostringstream diag;
            run_synth(preset, seed, out_dir, diag);
            return diag.str();
        },
        py::arg("preset"), py::arg("out_dir"), py::arg("seed") = py::none(),
        "Write a synthetic shifted benchmark directory; returns the diagnostics line.");

    m.def(
        "train",
        [](const py::object& config) {
            RunConfig cfg = config_from(config);
            std::ostringstream diag;
            TrainRunOutputs out = run_train(cfg, diag);
            py::dict d;
            d["checkpoint"] = out.checkpoint.string();
            d["log"] = out.log.string();
            d["best_val_accuracy"] = out.best_val_accuracy;
            d["best_val_iteration"] = out.best_val_iteration;
            d["final_loss"] = out.final_loss;
            d["diagnostics"] = diag.str();
            return d;
        },
        py::arg("config") = py::none(),
        "Train on a benchmark; config is a dict/JSON string with the run schema.");

    m.def(
        "evaluate",
        [](const std::string& checkpoint, const std::string& data,
           const py::object& config) {
            RunConfig cfg = config_from(config);
            std::ostringstream diag;
            return report_dict(run_eval(checkpoint, data, cfg, diag));
        },
        py::arg("checkpoint"), py::arg("data"), py::arg("config") = py::none(),
        "Evaluate a checkpoint; returns {n, mean, ci95, accuracies}.");

    m.def(
        "sweep",
        [](const py::object& config, std::optional<std::vector<double>> grid) {
            RunConfig cfg = config_from(config);
            std::vector<double> g;
            if (grid) {
                g = *grid;
            } else {
                for (int i = 0; i <= 10; ++i) g.push_back(i / 10.0);
            }
            std::ostringstream diag;
            std::vector<SweepRow> rows = run_sweep(cfg, g, diag);
            py::list out;
            for (const SweepRow& row : rows) {
                py::dict d = report_dict(row.report);
                d["lambda"] = row.lambda;
                out.append(d);
            }
            return out;
        },
        py::arg("config") = py::none(), py::arg("grid") = py::none(),
        "Train and evaluate across a mixing-coefficient grid; returns one dict per point.");

    m.def(
        "ablate",
        [](const std::string& kind, const py::object& config) {
            RunConfig cfg = config_from(config);
            std::ostringstream diag;
            AblationResult result = run_ablate(cfg, ablation_from_name(kind), diag);
            py::dict d = report_dict(result.report);
            d["kind"] = ablation_name(result.kind);
            d["best_val_accuracy"] = result.trained.best_val_accuracy;
            return d;
        },
        py::arg("kind"), py::arg("config") = py::none(),
        "Train and evaluate one ablation arm ('rand' or 'fc').");

    m.def(
        "grad_self_check",
        [] {
            Rng rng(20260816);
            auto randm = [&](std::size_t r, std::size_t c) {
                std::vector<double> v(r * c);
                for (double& x : v) x = rng.normal();
                return Tensor({r, c}, std::move(v));
            };
            Tensor x = randm(6, 4);
            Tensor protos = randm(3, 5);
            Tensor w = randm(4, 5);
            std::vector<int> labels{0, 1, 2, 0, 1, 2};
            auto f = [&](Tape& tape, const Tensor& probe) {
                Tensor h = tape.leaky_relu(tape.matmul(x, probe), 0.2);
                Tensor d = tape.pairwise_sq_dist(h, protos);
                return tape.softmax_cross_entropy(tape.scale(d, -1.0), labels);
            };
            return grad_check(f, w, 1e-4);
        },
        "Max relative error of a composed-op gradient check (should be < 1e-4).");
}
