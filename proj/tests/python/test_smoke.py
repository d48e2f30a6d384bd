import numpy as np
import pytest

import acord


SMALL = dict(
    synth_features=8,
    synth_length=3000,
    synth_fault_events=3,
    ae_hidden=[12, 4, 12],
    mlp_hidden=[12, 4],
    initial_epochs=100,
    max_window=40,
    window_step=10,
    baseline_window=40,
)


@pytest.fixture(scope="module")
def context():
    cfg = acord.config(**SMALL)
    return cfg, acord.make_seed_context(cfg, acord.Head.AE, 1)


def test_synth_trace_shape():
    sc = acord.SynthConfig()
    sc.feature_count = 6
    sc.length = 500
    sc.fault_events = 2
    t = acord.synth_trace(sc, 3)
    x = t.to_numpy()
    assert x.shape == (500, 6)
    assert t.feature_count == 6
    assert sum(t.labels()) == t.fault_count() > 0
    assert t == acord.synth_trace(sc, 3)


def test_forward_matches_numpy():
    m = acord.DenseModel.random(acord.Head.MLP, [5, 7, 1], 4)
    (w1, b1), (w2, b2) = m.layers()
    x = np.linspace(-1, 1, 5)
    h = np.maximum(w1 @ x + b1, 0.0)
    z = w2 @ h + b2
    expect = 1.0 / (1.0 + np.exp(-z))
    assert acord.fault_score(m, list(x)) == pytest.approx(float(expect[0]), rel=1e-12)


def test_training_reduces_loss():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(40, 6))
    y = [0] * 40
    m = acord.DenseModel.random(acord.Head.AE, [6, 4, 6], 2)
    _, losses = acord.train(m, x, y, epochs=30, learning_rate=0.05)
    assert len(losses) == 30
    assert losses[-1] < losses[0]


def test_compression_round_trip():
    m = acord.DenseModel.random(acord.Head.AE, [10, 8, 10], 1)
    p = acord.quantize(acord.prune(m, 0.5), acord.QuantLevel.Q8)
    assert p.prune_fraction == 0.5
    assert p.quant == acord.QuantLevel.Q8
    assert acord.deserialize(acord.serialize(p)) == p
    blob = b"abc" * 100
    assert acord.lossless_decode(acord.lossless_code(blob)) == blob
    assert acord.measure_dl_bits(m, 0.5, acord.QuantLevel.Q8) < acord.measure_dl_bits(m, 0.0, acord.QuantLevel.Q32)


def test_energy_and_planner():
    assert acord.comm_energy(1.0, 1.0) == pytest.approx(1.12)
    assert acord.comp_energy(10, acord.QuantLevel.Q8) == pytest.approx(1.4e-5)
    tau, _, curve = acord.roc_threshold([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])
    assert 0.2 <= tau < 0.8
    assert len(curve) == 11


def test_config_errors():
    cfg = acord.ExperimentConfig()
    with pytest.raises(acord.AcordError, match="max_windw"):
        cfg.set("max_windw", "1")
    assert "energy_threshold" in acord.ExperimentConfig.keys()


def test_run_respects_budget(context):
    cfg, ctx = context
    assert 0.0 < ctx.pruning_threshold <= 1.0
    for policy in (acord.Policy.ACORD, acord.Policy.PERIODIC):
        r = acord.run(cfg, ctx, policy, energy_threshold=0.3, bandwidth=2.5e5, tau=0.5)
        assert r.e_total_j <= 0.3
        assert r.recall == acord.recall_from_reports(r.rounds)
        preds = r.predictions()
        assert len(preds["position"]) == len(ctx.test)
        assert set(np.unique(preds["predicted"])) <= {0, 1}


def test_run_is_deterministic(context):
    cfg, ctx = context
    a = acord.run(cfg, ctx, acord.Policy.HAWK, energy_threshold=1.0, bandwidth=1e6, tau=0.5)
    b = acord.run(cfg, ctx, acord.Policy.HAWK, energy_threshold=1.0, bandwidth=1e6, tau=0.5)
    assert a.e_total_j == b.e_total_j
    assert np.array_equal(a.predictions()["predicted"], b.predictions()["predicted"])


def test_roc_dry_run(context):
    cfg, ctx = context
    r = acord.roc(cfg, ctx)
    assert r["detector"] == "ae"
    assert 0.0 <= r["auc"] <= 1.0
    assert len(r["curve"]) == 11


def test_cmd_run_writes_csvs(tmp_path):
    cfg = acord.config(**SMALL, tau=0.5, energy_threshold=0.5, out=tmp_path)
    assert acord.cmd_run(cfg) == 0
    for name in ("rounds.csv", "ledger.csv", "predictions.csv", "metrics.csv"):
        assert (tmp_path / name).read_text().count("\n") >= 2
