import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpa import forecast as fc
from gpa import ndtensor as nt
from gpa.curves import Curve, Scale
from gpa.errors import DomainError
from gpa.ndtensor import Tensor, TrainingError
from oracles import lstm_step

QUICK = fc.ForecastTrainConfig(epochs=2, lr=1e-3, batch_size=16, train_stride=6)


def normed_curves(seed, n=6, length=96):
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    out = []
    for i in range(n):
        x = 0.5 * np.sin(2 * np.pi * (t + rng.integers(48)) / 48) + rng.normal(0, 0.05, length)
        out.append(Curve(f"h{i}", np.clip(x, -1, 1), Scale.NORMALIZED))
    return out


class Oracle:
    """Stand-in model returning the true next block plus a constant."""

    def __init__(self, curves, offset=0.0):
        self.truth = {c.values[:24].tobytes(): c.values for c in curves}
        self.offset = offset

    def predict(self, blocks):
        out = []
        for seq in blocks:
            full = self.truth[seq[0].tobytes()]
            out.append(full[24 : 24 * (len(seq) + 1)].reshape(len(seq), 24))
        return np.array(out) + self.offset


def test_parameter_counts():
    assert fc.ForecasterArchitecture.preset("desk").n_params() == 2136
    assert fc.ForecasterArchitecture.preset("paper").n_params() == 15384
    m = fc.init_forecaster(fc.ForecasterArchitecture.preset("paper"), 0)
    assert sum(v.size for v in m.params.values()) == 15384


def test_truth_model_scores_zero_and_offset_scores_its_square():
    cs = normed_curves(0)
    assert fc.evaluate_forecaster(Oracle(cs), cs) == 0.0
    assert fc.evaluate_forecaster(Oracle(cs, 0.1), cs) == pytest.approx(0.01, rel=1e-12)


def test_evaluation_ignores_curve_order():
    cs = normed_curves(1)
    m = fc.init_forecaster(fc.ForecasterArchitecture(), 3)
    assert fc.evaluate_forecaster(m, cs) == fc.evaluate_forecaster(m, cs[::-1])


def test_unroll_matches_reference_cell():
    arch = fc.ForecasterArchitecture(hidden=5)
    m = fc.init_forecaster(arch, 2)
    p = m.params
    blocks = np.random.default_rng(0).uniform(-1, 1, size=(3, 4, 24))
    h = c = np.zeros((3, 5))
    expected = []
    for t in range(4):
        h, c = lstm_step(blocks[:, t], h, c, p["w_ih"], p["w_hh"], p["b_ih"], p["b_hh"])
        expected.append(np.tanh(h @ p["head.w"].T + p["head.b"]))
    np.testing.assert_allclose(m.predict(blocks), np.stack(expected, axis=1), rtol=1e-12, atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_output_stays_in_tanh_range(seed):
    m = fc.init_forecaster(fc.ForecasterArchitecture(hidden=4), seed)
    m.params["head.b"][:] = 50.0 * np.sign(m.params["head.b"])
    y = m.predict(np.random.default_rng(seed).normal(0, 10, size=(2, 3, 24)))
    assert np.all(np.abs(y) <= 1.0)


def test_loss_is_plain_mse_without_stat_weights():
    rng = np.random.default_rng(4)
    a, b = rng.normal(size=(3, 2, 24)), rng.normal(size=(3, 2, 24))
    plain = fc.forecast_loss(Tensor(a), b, (0, 0, 0, 0)).data
    assert plain == pytest.approx(np.mean((a - b) ** 2), rel=1e-12)
    assert fc.forecast_loss(Tensor(a), b, (1, 1, 1, 1)).data > plain
    assert fc.forecast_loss(Tensor(a), a, (1, 1, 1, 1)).data == 0.0


def test_stat_terms_use_per_block_central_moments():
    rng = np.random.default_rng(5)
    a, b = rng.normal(size=(2, 1, 24)), rng.normal(size=(2, 1, 24))

    def moment(x, k):
        mu = x.mean(axis=-1)
        return mu if k == 1 else np.mean((x - mu[..., None]) ** k, axis=-1)

    for k in range(1, 5):
        w = [0.0] * 4
        w[k - 1] = 2.0
        got = fc.forecast_loss(Tensor(a), b, w).data - np.mean((a - b) ** 2)
        assert got == pytest.approx(2.0 * np.mean(np.abs(moment(a, k) - moment(b, k))), rel=1e-10)


def test_training_sequences_slide_over_first_block():
    c = Curve("a", np.linspace(-1, 1, 96), Scale.NORMALIZED)
    seqs = fc.training_sequences([c], stride=1)
    # offsets 0..23 each yield (96 - 23) // 24 = 3 blocks
    assert seqs.shape == (24, 3, 24)
    np.testing.assert_array_equal(seqs[5].reshape(-1), c.values[5 : 5 + 72])
    assert fc.training_sequences([c], stride=8).shape == (3, 3, 24)
    with pytest.raises(DomainError):
        fc.training_sequences([Curve("a", np.zeros(40), Scale.NORMALIZED)])


def test_config_validation():
    with pytest.raises(DomainError):
        fc.ForecastTrainConfig(stat_loss_weights=(1, 1, float("nan"), 1))
    with pytest.raises(DomainError):
        fc.ForecastTrainConfig(stat_loss_weights=(1, 1, 1))
    with pytest.raises(DomainError):
        fc.train_forecaster([], QUICK)


def test_training_is_deterministic():
    cs = normed_curves(6)
    a = fc.train_forecaster(cs, QUICK)
    b = fc.train_forecaster(cs, QUICK)
    for k in a.params:
        np.testing.assert_array_equal(a.params[k], b.params[k])


@pytest.mark.parametrize("seed", range(5))
def test_held_out_error_falls_with_training(seed):
    train, held = normed_curves(seed, n=8), normed_curves(100 + seed, n=4)
    cfg = fc.ForecastTrainConfig(epochs=6, lr=1e-2, batch_size=16, train_stride=4, seed=seed)
    before = fc.evaluate_forecaster(fc.init_forecaster(fc.ForecasterArchitecture(), seed), held)
    after = fc.evaluate_forecaster(fc.train_forecaster(train, cfg), held)
    assert after < before


def test_lstm_score_of_identical_sets_is_exactly_zero():
    cs = normed_curves(7)
    assert fc.lstm_score(cs, cs, normed_curves(8), QUICK) == 0.0


def test_lstm_score_is_antisymmetric():
    a, b, test = normed_curves(9), normed_curves(10, n=4), normed_curves(11)
    assert fc.lstm_score(a, b, test, QUICK) == -fc.lstm_score(b, a, test, QUICK)


def test_nan_training_data_aborts_with_location():
    cs = normed_curves(12)
    bad = Curve("z", np.full(96, np.nan))
    with pytest.raises(TrainingError, match="epoch 0, batch"):
        fc.train_forecaster(cs + [bad], QUICK)


def test_forecast_csv(tmp_path):
    c = normed_curves(13, n=1)[0]
    m = fc.init_forecaster(fc.ForecasterArchitecture(), 0)
    path = tmp_path / "f.csv"
    fc.write_forecast_csv(path, m, c)
    rows = path.read_text().splitlines()
    assert rows[0] == "t,truth,prediction"
    assert len(rows) == 1 + 72
    t, truth, _ = rows[1].split(",")
    assert int(t) == 24 and float(truth) == c.values[24]


def test_float32_mode_runs():
    nt.set_default_dtype(np.float32)
    try:
        m = fc.train_forecaster(normed_curves(14), QUICK)
    finally:
        nt.set_default_dtype(np.float64)
    assert m.params["w_ih"].dtype == np.float32
