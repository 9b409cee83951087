import numpy as np
import pytest
from hypothesis import given, strategies as st

from shefl.metrics import (CSV_HEADER, MetricRow, accuracy, convergence_rounds, curve_stats,
                           emit_plot_data, ensemble_predict, format_metrics_csv, read_metrics_csv,
                           summarize, write_metrics_csv)
from shefl.models import ModelSpec, predict


def _logreg_with_probs(p):
    """Logreg params on 1-d input x=1 whose softmax equals ``p``."""
    logits = np.log(p)
    return np.concatenate([np.zeros(len(p)), logits])


def test_hand_average_example():
    spec = ModelSpec("logreg", 1, 2)
    subs = [_logreg_with_probs([0.6, 0.4]), _logreg_with_probs([0.3, 0.7])]
    assert ensemble_predict(spec, subs, np.ones((1, 1))).tolist() == [1]


def test_single_and_repeated_models_match_argmax():
    spec = ModelSpec("mlp", 4, 3, (5, 5))
    rng = np.random.default_rng(0)
    w = rng.normal(size=spec.dim)
    x = rng.normal(size=(50, 4))
    expect = predict(spec, w, x)
    np.testing.assert_array_equal(ensemble_predict(spec, [w], x), expect)
    np.testing.assert_array_equal(ensemble_predict(spec, [w] * 5, x), expect)


def test_ensemble_tie_lowest_class():
    spec = ModelSpec("logreg", 1, 3)
    assert ensemble_predict(spec, [np.zeros(6)], np.ones((1, 1))).tolist() == [0]


def test_empty_ensemble():
    with pytest.raises(ValueError):
        ensemble_predict(ModelSpec("logreg", 1, 2), [], np.ones((1, 1)))


@pytest.mark.parametrize("pred, expect", [([1, 2, 3, 4], 1.0), ([0, 0, 0, 0], 0.0), ([1, 2, 3, 0], 0.75)])
def test_accuracy(pred, expect):
    assert accuracy(pred, [1, 2, 3, 4]) == expect


def test_accuracy_length_mismatch():
    with pytest.raises(ValueError):
        accuracy([1, 2], [1, 2, 3])


def test_convergence_rounds():
    series = [0.5, 0.7, 0.9, 0.91]
    assert convergence_rounds(series, 0.9) == 3
    assert convergence_rounds(series, 0.95) is None
    assert convergence_rounds([0.99, 0.2], 0.9) == 1
    with pytest.raises(ValueError):
        convergence_rounds([], 0.5)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.floats(0.01, 0.98), st.floats(0.001, 0.99))
def test_convergence_monotone_in_threshold(series, hi, frac):
    lo = hi * frac
    r_hi, r_lo = convergence_rounds(series, hi), convergence_rounds(series, lo)
    if r_hi is not None:
        assert r_lo is not None and r_lo <= r_hi


def _rows():
    return [
        MetricRow(1, "shefl", 0, 0.5, [0.4, 0.5], 100, 0.01, 0),
        MetricRow(2, "shefl", 0, 0.9, [0.8, 0.85], 100, 0.01, 0),
        MetricRow(1, "shefl", 1, 0.7, [0.6, 0.7], 100, 0.01, 0),
        MetricRow(2, "shefl", 1, 0.8, [0.8, 0.7], 100, 0.01, 0),
    ]


def test_csv_format():
    text = format_metrics_csv(_rows()[:1])
    assert text == ("round,algo,seed,test_acc,per_model_acc,uplink_bytes,lr,wall_ms\n"
                    "1,shefl,0,0.500000,0.400000;0.500000,100,0.010000,0\n")
    assert "\r" not in text


def test_csv_round_trip(tmp_path):
    write_metrics_csv(tmp_path / "m.csv", _rows())
    back = read_metrics_csv(tmp_path / "m.csv")
    assert back == _rows()


def test_csv_malformed(tmp_path):
    (tmp_path / "bad.csv").write_text(",".join(CSV_HEADER) + "\n1,shefl,0\n")
    with pytest.raises(ValueError):
        read_metrics_csv(tmp_path / "bad.csv")
    (tmp_path / "hdr.csv").write_text("a,b\n")
    with pytest.raises(ValueError):
        read_metrics_csv(tmp_path / "hdr.csv")


def test_metric_row_range():
    with pytest.raises(ValueError):
        MetricRow(1, "x", 0, 1.2)


def test_summary_stats_and_nc():
    (s,) = summarize(_rows(), threshold=0.85)
    assert s["runs"] == 2
    assert s["final_acc_mean"] == pytest.approx(0.85)
    assert s["final_acc_std"] == pytest.approx(0.05)
    assert s["best_acc_mean"] == pytest.approx(0.85)
    assert s["conv_rounds_mean"] == 2.0 and s["nc_count"] == 1
    (none,) = summarize(_rows(), threshold=0.95)
    assert none["conv_rounds_mean"] == "nc" and none["nc_count"] == 2


def test_plot_data_two_seeds(tmp_path):
    write_metrics_csv(tmp_path / "metrics.csv", _rows())
    (path,) = emit_plot_data(tmp_path / "metrics.csv", tmp_path)
    table = np.loadtxt(path)
    # round 1: (0.5, 0.7) -> 0.6 +- 0.1 ; round 2: (0.9, 0.8) -> 0.85 +- 0.05
    np.testing.assert_allclose(table, [[1, 0.6, 0.1], [2, 0.85, 0.05]], atol=1e-6)


def test_plot_data_single_seed_zero_std():
    table = curve_stats(_rows()[:2])["shefl"]
    assert np.all(table[:, 2] == 0)


def test_plot_data_identical_seeds():
    rows = _rows()[:2] + [MetricRow(r.round, r.algo, 7, r.test_acc) for r in _rows()[:2]]
    table = curve_stats(rows)["shefl"]
    np.testing.assert_array_equal(table[:, 1], [0.5, 0.9])
    assert np.all(table[:, 2] == 0)
