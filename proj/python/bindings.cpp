#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "acord/compression.hpp"
#include "acord/dataset.hpp"
#include "acord/energy.hpp"
#include "acord/experiment.hpp"
#include "acord/model.hpp"
#include "acord/planner.hpp"
#include "acord/runtime.hpp"

namespace py = pybind11;
using namespace acord;

namespace {

// Python side uses one sample per row; the core keeps one sample per column.
Eigen::MatrixXd columns(const Eigen::MatrixXd& rows) { return rows.transpose(); }

TrainBatch make_batch(const Eigen::MatrixXd& x, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(x.rows()) != labels.size()) throw Error("inputs and labels differ in length");
  return TrainBatch{columns(x), labels};
}

py::bytes to_bytes(const Bytes& b) { return py::bytes(reinterpret_cast<const char*>(b.data()), b.size()); }

Bytes from_bytes(const py::bytes& b) {
  const std::string s = b;
  return Bytes(s.begin(), s.end());
}

Eigen::MatrixXd trace_matrix(const Trace& t) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.size()), static_cast<Eigen::Index>(t.feature_count()));
  for (std::size_t p = 0; p < t.size(); ++p) {
    const auto f = t.features(p);
    for (std::size_t j = 0; j < f.size(); ++j) m(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(j)) = f[j];
  }
  return m;
}

}  // namespace

PYBIND11_MODULE(_acord, m) {
  m.doc() = "Event-driven, energy-budgeted continual-learning fault detection";

  py::register_exception<Error>(m, "AcordError", PyExc_RuntimeError);

  py::enum_<QuantLevel>(m, "QuantLevel").value("Q8", QuantLevel::k8).value("Q32", QuantLevel::k32);
  py::enum_<Policy>(m, "Policy")
      .value("ACORD", Policy::kAcord)
      .value("HAWK", Policy::kHawk)
      .value("PERIODIC", Policy::kPeriodic);
  py::enum_<Head>(m, "Head").value("AE", Head::kAutoencoder).value("MLP", Head::kClassifier);
  m.def("policy_from_string", &policy_from_string);

  // dataset
  py::class_<Trace>(m, "Trace")
      .def(py::init<std::size_t>(), py::arg("feature_count"))
      .def("push_back",
           [](Trace& t, std::size_t index, std::vector<double> features, int label) {
             t.push_back(index, features, label);
           })
      .def("__len__", &Trace::size)
      .def_property_readonly("feature_count", &Trace::feature_count)
      .def("features",
           [](const Trace& t, std::size_t pos) {
             if (pos >= t.size()) throw py::index_error("position out of range");
             const auto f = t.features(pos);
             return std::vector<double>(f.begin(), f.end());
           })
      .def("label", [](const Trace& t, std::size_t pos) {
        if (pos >= t.size()) throw py::index_error("position out of range");
        return t.label(pos);
      })
      .def("labels",
           [](const Trace& t) {
             std::vector<int> l(t.size());
             for (std::size_t p = 0; p < t.size(); ++p) l[p] = t.label(p);
             return l;
           })
      .def("to_numpy", &trace_matrix, "Samples as a (len, N) array")
      .def("fault_event_indices", &Trace::fault_event_indices)
      .def("fault_count", &Trace::fault_count)
      .def("slice", &Trace::slice)
      .def(py::self == py::self);

  py::class_<SynthConfig>(m, "SynthConfig")
      .def(py::init<>())
      .def_readwrite("feature_count", &SynthConfig::feature_count)
      .def_readwrite("length", &SynthConfig::length)
      .def_readwrite("fault_events", &SynthConfig::fault_events)
      .def_readwrite("coherence_length", &SynthConfig::coherence_length)
      .def_readwrite("noise_scale", &SynthConfig::noise_scale)
      .def_readwrite("latent_dim", &SynthConfig::latent_dim)
      .def_readwrite("drift", &SynthConfig::drift)
      .def_readwrite("fault_shift", &SynthConfig::fault_shift)
      .def_readwrite("precursor_fraction", &SynthConfig::precursor_fraction)
      .def_readwrite("fault_start_fraction", &SynthConfig::fault_start_fraction);

  m.def("synth_trace", &synth_trace, py::arg("config"), py::arg("seed"));
  m.def("load_trace", [](const std::filesystem::path& p) { return load_trace(p); }, py::arg("path"));
  m.def(
      "split_initial",
      [](const Trace& t, double fraction) { return split_initial(t, SplitSpec{fraction, true}); },
      py::arg("trace"), py::arg("train_fraction") = 0.1);

  // model
  py::class_<DenseModel>(m, "DenseModel")
      .def(py::init<Head, std::vector<int>>(), py::arg("head"), py::arg("dims"))
      .def_static("random", &DenseModel::random, py::arg("head"), py::arg("dims"), py::arg("seed"))
      .def_property_readonly("head", &DenseModel::head)
      .def_property_readonly("dims", &DenseModel::dims)
      .def_property_readonly("reference_error", &DenseModel::reference_error)
      .def("set_reference_error", &DenseModel::set_reference_error)
      .def_property_readonly("prune_fraction", [](const DenseModel& d) { return d.compression().prune_fraction; })
      .def_property_readonly("quant", [](const DenseModel& d) { return d.compression().quant; })
      .def("weight_count", &DenseModel::weight_count)
      .def("parameter_count", &DenseModel::parameter_count)
      .def("mac_count", &DenseModel::mac_count)
      .def("activation_count", &DenseModel::activation_count)
      .def("layers",
           [](const DenseModel& d) {
             std::vector<std::pair<Eigen::MatrixXd, Eigen::VectorXd>> out;
             for (const auto& l : d.layers()) out.emplace_back(l.weights, l.bias);
             return out;
           })
      .def("set_layer",
           [](DenseModel& d, std::size_t i, const Eigen::MatrixXd& w, const Eigen::VectorXd& b) {
             if (i >= d.layers().size()) throw py::index_error("layer out of range");
             auto& l = d.layers()[i];
             if (w.rows() != l.weights.rows() || w.cols() != l.weights.cols() || b.size() != l.bias.size()) {
               throw Error("layer shape mismatch");
             }
             l.weights = w;
             l.bias = b;
           })
      .def(py::self == py::self);

  m.def("forward", [](const DenseModel& d, std::vector<double> x) { return forward(d, x); });
  m.def(
      "forward_batch", [](const DenseModel& d, const Eigen::MatrixXd& x) { return Eigen::MatrixXd(forward_batch(d, columns(x)).transpose()); },
      "Rows in, rows out");
  m.def("fault_score", [](const DenseModel& d, std::vector<double> x) { return fault_score(d, x); });
  m.def("fault_scores", [](const DenseModel& d, const Eigen::MatrixXd& x) { return fault_scores(d, columns(x)); });
  m.def("classify", [](const DenseModel& d, std::vector<double> x, double tau) { return classify(d, x, tau); });
  m.def(
      "ae_loss",
      [](std::vector<double> x, std::vector<double> xh, int label, double lf, double ln) {
        return ae_loss(x, xh, label, LossWeights{lf, ln});
      },
      py::arg("x"), py::arg("reconstruction"), py::arg("label"), py::arg("lambda_fault") = -0.1,
      py::arg("lambda_normal") = 1.0);
  m.def(
      "batch_loss",
      [](const DenseModel& d, const Eigen::MatrixXd& x, const std::vector<int>& y, double lf, double ln) {
        return batch_loss(d, make_batch(x, y), LossWeights{lf, ln});
      },
      py::arg("model"), py::arg("inputs"), py::arg("labels"), py::arg("lambda_fault") = -0.1,
      py::arg("lambda_normal") = 1.0);
  m.def(
      "train",
      [](const DenseModel& d, const Eigen::MatrixXd& x, const std::vector<int>& y, int epochs, double lr,
         double lf, double ln) {
        TrainOptions o;
        o.epochs = epochs;
        o.learning_rate = lr;
        o.loss_weights = LossWeights{lf, ln};
        std::vector<double> losses;
        DenseModel out = train(d, make_batch(x, y), o, &losses);
        return py::make_tuple(out, losses);
      },
      py::arg("model"), py::arg("inputs"), py::arg("labels"), py::arg("epochs"), py::arg("learning_rate") = 0.1,
      py::arg("lambda_fault") = -0.1, py::arg("lambda_normal") = 1.0,
      "Returns (trained model, per-epoch losses)");
  m.def("epochs_for_window", &epochs_for_window);

  // compression
  m.def("prune", &prune, py::arg("model"), py::arg("fraction"));
  m.def("quantize", [](const DenseModel& d, QuantLevel q) { return quantize(d, q); });
  m.def("serialize", [](const DenseModel& d) { return to_bytes(serialize(d)); });
  m.def("deserialize", [](const py::bytes& b) { return deserialize(from_bytes(b)); });
  m.def("lossless_code", [](const py::bytes& b) { return to_bytes(lossless_code(from_bytes(b))); });
  m.def("lossless_decode", [](const py::bytes& b) { return to_bytes(lossless_decode(from_bytes(b))); });
  m.def("measure_dl_bits", &measure_dl_bits, py::arg("model"), py::arg("prune_fraction"), py::arg("quant"));

  py::class_<SizeModel>(m, "SizeModel")
      .def(py::init<>())
      .def_readwrite("slope", &SizeModel::slope)
      .def_readwrite("intercept", &SizeModel::intercept)
      .def_readwrite("residual_max", &SizeModel::residual_max)
      .def("predict", &SizeModel::predict);
  m.def("fit_size_model", [](const std::vector<std::pair<double, double>>& pts) { return fit_size_model(pts); });

  // energy
  py::class_<EnergyParams>(m, "EnergyParams")
      .def(py::init<>())
      .def_readwrite("tx_power_w", &EnergyParams::tx_power_w)
      .def_readwrite("rx_power_w", &EnergyParams::rx_power_w)
      .def_readwrite("inference_j_q8", &EnergyParams::inference_j_q8)
      .def_readwrite("inference_j_q32", &EnergyParams::inference_j_q32)
      .def_readwrite("budget_j", &EnergyParams::budget_j)
      .def_readwrite("reference_rate_bps", &EnergyParams::reference_rate_bps)
      .def_readwrite("reference_energy_j", &EnergyParams::reference_energy_j);
  m.def("comm_energy", &comm_energy, py::arg("t_ul_s"), py::arg("t_dl_s"), py::arg("params") = EnergyParams{});
  m.def("comp_energy", &comp_energy, py::arg("inferences"), py::arg("quant"), py::arg("params") = EnergyParams{});

  // planner
  py::class_<Plan>(m, "Plan")
      .def(py::init<>())
      .def_readwrite("prune_fraction", &Plan::prune_fraction)
      .def_readwrite("quant", &Plan::quant)
      .def_readwrite("window", &Plan::window)
      .def_readwrite("tau", &Plan::tau)
      .def("__repr__", [](const Plan& p) {
        return "Plan(P_L=" + format_number(p.prune_fraction) + ", Q_L=" + std::to_string(quant_bits(p.quant)) +
               ", W=" + std::to_string(p.window) + ", tau=" + format_number(p.tau) + ")";
      });
  py::class_<LinkEstimate>(m, "LinkEstimate")
      .def(py::init<>())
      .def_readwrite("uplink_bps", &LinkEstimate::uplink_bps)
      .def_readwrite("downlink_bps", &LinkEstimate::downlink_bps);
  py::class_<DownlinkSizeModels>(m, "DownlinkSizeModels")
      .def(py::init<>())
      .def_readwrite("q8", &DownlinkSizeModels::q8)
      .def_readwrite("q32", &DownlinkSizeModels::q32);
  py::class_<PlanInputs>(m, "PlanInputs")
      .def(py::init<>())
      .def_readwrite("budget_j", &PlanInputs::budget_j)
      .def_readwrite("compute_energy_estimate_j", &PlanInputs::compute_energy_estimate_j)
      .def_readwrite("reference_energy_j", &PlanInputs::reference_energy_j)
      .def_readwrite("reference_rate_bps", &PlanInputs::reference_rate_bps)
      .def_readwrite("estimate", &PlanInputs::estimate)
      .def_readwrite("downlink", &PlanInputs::downlink)
      .def_readwrite("uplink", &PlanInputs::uplink)
      .def_readwrite("max_window", &PlanInputs::max_window)
      .def_readwrite("pruning_threshold", &PlanInputs::pruning_threshold);
  m.def("plan_round", &plan_round, py::arg("inputs"), py::arg("tau") = 0.5);
  m.def("pruning_threshold", &pruning_threshold, py::arg("q32"), py::arg("q8"));
  m.def(
      "roc_threshold",
      [](const std::vector<double>& scores, const std::vector<int>& labels, double step) {
        if (scores.size() != labels.size()) throw Error("scores and labels differ in length");
        std::vector<ScoredLabel> s;
        for (std::size_t i = 0; i < scores.size(); ++i) s.push_back({scores[i], labels[i]});
        const ThresholdChoice c = roc_threshold(s, step);
        std::vector<std::tuple<double, double, double>> curve;
        for (const auto& p : c.curve) curve.emplace_back(p.tau, p.fpr, p.tpr);
        return py::make_tuple(c.tau, c.objective, curve);
      },
      py::arg("scores"), py::arg("labels"), py::arg("grid_step") = 0.1, "Returns (tau, objective, [(tau, fpr, tpr)])");

  // runtime and experiments
  py::class_<RoundReport>(m, "RoundReport")
      .def_readonly("round", &RoundReport::round)
      .def_readonly("model_quant", &RoundReport::model_quant)
      .def_readonly("plan", &RoundReport::plan)
      .def_readonly("uplinks", &RoundReport::uplinks)
      .def_readonly("bits_up", &RoundReport::bits_up)
      .def_readonly("bits_down", &RoundReport::bits_down)
      .def_readonly("t_ul_s", &RoundReport::t_ul_s)
      .def_readonly("t_dl_s", &RoundReport::t_dl_s)
      .def_readonly("inferences", &RoundReport::inferences)
      .def_readonly("detections", &RoundReport::detections)
      .def_readonly("true_positives", &RoundReport::true_positives)
      .def_readonly("false_positives", &RoundReport::false_positives)
      .def_readonly("fault_samples", &RoundReport::fault_samples)
      .def_readonly("e_comm_j", &RoundReport::e_comm_j)
      .def_readonly("e_comp_j", &RoundReport::e_comp_j)
      .def_readonly("e_total_j", &RoundReport::e_total_j)
      .def_readonly("recall", &RoundReport::recall)
      .def_readonly("model_updated", &RoundReport::model_updated);

  py::class_<RunResult>(m, "RunResult")
      .def_readonly("policy", &RunResult::policy)
      .def_readonly("rounds", &RunResult::rounds)
      .def_readonly("recall", &RunResult::recall)
      .def_readonly("updates", &RunResult::updates)
      .def_readonly("stopped", &RunResult::stopped)
      .def_property_readonly("e_total_j", [](const RunResult& r) { return r.ledger.total_j(); })
      .def_property_readonly("budget_j", [](const RunResult& r) { return r.ledger.budget_j(); })
      .def("predictions", [](const RunResult& r) {
        py::dict d;
        std::vector<std::size_t> pos;
        std::vector<int> truth, pred, inferred, round;
        for (const auto& p : r.predictions) {
          pos.push_back(p.position);
          truth.push_back(p.truth);
          pred.push_back(p.predicted);
          inferred.push_back(p.inferred);
          round.push_back(p.round);
        }
        d["position"] = py::array(py::cast(pos));
        d["truth"] = py::array(py::cast(truth));
        d["predicted"] = py::array(py::cast(pred));
        d["inferred"] = py::array(py::cast(inferred));
        d["round"] = py::array(py::cast(round));
        return d;
      });
  m.def("recall_from_reports", [](const std::vector<RoundReport>& r) { return recall(r); });

  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def(py::init<>())
      .def_static("keys", &ExperimentConfig::keys)
      .def("set", &ExperimentConfig::set, py::arg("key"), py::arg("value"))
      .def("validate", &ExperimentConfig::validate)
      .def_static("load", &load_config, py::arg("path"));

  py::class_<SeedContext>(m, "SeedContext")
      .def_readonly("seed", &SeedContext::seed)
      .def_property_readonly("train", [](const SeedContext& c) { return c.data.train; })
      .def_property_readonly("test", [](const SeedContext& c) { return c.data.test; })
      .def_property_readonly("validation", [](const SeedContext& c) { return c.data.validation; })
      .def_property_readonly("model", [](const SeedContext& c) { return c.initial.model; })
      .def_property_readonly("pruning_threshold", [](const SeedContext& c) { return c.sizes.pruning_threshold; })
      .def_property_readonly("downlink_q8", [](const SeedContext& c) { return c.sizes.downlink.q8; })
      .def_property_readonly("downlink_q32", [](const SeedContext& c) { return c.sizes.downlink.q32; })
      .def_property_readonly("uplink", [](const SeedContext& c) { return c.sizes.uplink; });

  m.def(
      "make_seed_context",
      [](const ExperimentConfig& c, Head head, std::uint64_t seed) {
        py::gil_scoped_release release;
        return make_seed_context(c, head, seed);
      },
      py::arg("config"), py::arg("head"), py::arg("seed"));
  m.def(
      "run",
      [](const ExperimentConfig& c, const SeedContext& ctx, Policy p, double e_th, double bw, double tau) {
        py::gil_scoped_release release;
        return run_with_context(c, ctx, p, e_th, bw, tau);
      },
      py::arg("config"), py::arg("context"), py::arg("policy"), py::arg("energy_threshold"), py::arg("bandwidth"),
      py::arg("tau"));
  m.def(
      "roc",
      [](const ExperimentConfig& c, const SeedContext& ctx) {
        RocResult r;
        {
          py::gil_scoped_release release;
          r = roc_dry_run(c, ctx);
        }
        std::vector<std::tuple<double, double, double>> curve;
        for (const auto& p : r.choice.curve) curve.emplace_back(p.tau, p.fpr, p.tpr);
        py::dict d;
        d["detector"] = r.detector;
        d["tau"] = r.choice.tau;
        d["auc"] = r.auc;
        d["no_positives"] = r.no_positives;
        d["curve"] = curve;
        return d;
      },
      py::arg("config"), py::arg("context"));

  m.def("cmd_calibrate_sizes", &cmd_calibrate_sizes, py::call_guard<py::gil_scoped_release>());
  m.def("cmd_roc", &cmd_roc, py::call_guard<py::gil_scoped_release>());
  m.def("cmd_run", &cmd_run, py::call_guard<py::gil_scoped_release>());
  m.def(
      "cmd_sweep", [](const ExperimentConfig& c, const std::string& axis) { return cmd_sweep(c, sweep_axis_from_string(axis)); },
      py::arg("config"), py::arg("axis"), py::call_guard<py::gil_scoped_release>());
}
