import numpy as np
import pytest

from boxcal.errors import TrainingDivergedError, UsageError
from boxcal.evaluate import regression_curve
from boxcal.records import validate_dataset, BoxElement, DetectionRecord
from boxcal.toytrain import (
    ToyModel,
    ToyTask,
    TrainConfig,
    loss_calib,
    loss_calib_grads,
    loss_reg,
    loss_reg_grads,
    loss_total,
    loss_total_grads,
    predict,
    predict_batch,
    train_toy,
)

from oracles import central_difference


class TestLossReg:
    def test_zero_at_perfect_unit_variance(self):
        assert loss_reg([1.0, -2.0], [1.0, -2.0], [1.0, 1.0]) == 0.0

    def test_unit_residuals_six_elements(self):
        y = np.ones(6)
        u = np.zeros(6)
        assert loss_reg(y, u, np.ones(6)) == pytest.approx(3.0)

    def test_rejects_bad_variance(self):
        with pytest.raises(UsageError):
            loss_reg([0.0], [0.0], [0.0])

    def test_minimized_at_squared_residual(self):
        y, u = np.array([0.7]), np.array([0.1])
        target = (y - u) ** 2
        best = loss_reg(y, u, target)
        for factor in (0.5, 0.8, 1.25, 2.0):
            assert loss_reg(y, u, target * factor) > best


class TestLossCalib:
    def test_zero_when_variance_matches(self):
        y = np.array([1.0, -0.5])
        u = np.array([0.2, 0.1])
        assert loss_calib(y, u, (y - u) ** 2) == 0.0

    def test_hand_value(self):
        assert loss_calib([1.0], [0.0], [4.0]) == pytest.approx(3.0)

    def test_l2_norm_option(self):
        y = np.zeros(2)
        u = np.zeros(2)
        var = np.array([3.0, 4.0])
        assert loss_calib(y, u, var, norm="l2") == pytest.approx(5.0)

    def test_total_combines(self):
        y, u, var = np.array([1.0]), np.array([0.0]), np.array([1.0])
        assert loss_total(y, u, var, lam=0.0) == loss_reg(y, u, var)
        assert loss_total(y, u, var, lam=1.0) == pytest.approx(
            loss_reg(y, u, var) + loss_calib(y, u, var)
        )
        with pytest.raises(UsageError):
            loss_total(y, u, var, lam=-0.1)


def _random_config(rng, dim):
    y = rng.normal(size=dim)
    u = rng.normal(size=dim)
    var = rng.uniform(0.3, 3.0, size=dim)
    # keep clear of the L1 kinks so finite differences are meaningful
    var = np.where(np.abs(var - (y - u) ** 2) < 1e-2, var + 0.05, var)
    return y, u, var


class TestGradients:
    @pytest.mark.parametrize("norm", ["l1", "l2"])
    def test_all_loss_gradients_match_central_differences(self, norm):
        rng = np.random.default_rng(123)
        for trial in range(100):
            dim = int(rng.integers(1, 7))
            y, u, var = _random_config(rng, dim)
            lam = float(rng.uniform(0.0, 1.0))
            for fn, grads in (
                (lambda yy, uu, vv: loss_reg(yy, uu, vv), loss_reg_grads(y, u, var)),
                (lambda yy, uu, vv: loss_calib(yy, uu, vv, norm),
                 loss_calib_grads(y, u, var, norm)),
                (lambda yy, uu, vv: loss_total(yy, uu, vv, lam, norm),
                 loss_total_grads(y, u, var, lam, norm)),
            ):
                du, dvar = grads
                for d in range(dim):
                    def fu(t, d=d):
                        u2 = u.copy(); u2[d] = t
                        return fn(y, u2, var)

                    def fv(t, d=d):
                        v2 = var.copy(); v2[d] = t
                        return fn(y, u, v2)

                    fd_u = central_difference(fu, u[d])
                    fd_v = central_difference(fv, var[d])
                    scale_u = max(abs(du[d]), 1.0)
                    scale_v = max(abs(dvar[d]), 1.0)
                    assert abs(fd_u - du[d]) / scale_u < 1e-4
                    assert abs(fd_v - dvar[d]) / scale_v < 1e-4


class TestPredict:
    def test_zero_weights_give_standard_marginal(self):
        model = ToyModel.zeros(4, 8, 2)
        out = predict(model, np.zeros(4))
        assert len(out) == 2
        for m in out:
            assert m.mean == 0.0
            assert m.variance == 1.0

    def test_deterministic(self):
        model = ToyModel.init(4, 16, 1, np.random.default_rng(0), 1.0)
        x = np.array([0.1, -0.5, 0.3, 0.9])
        assert predict(model, x) == predict(model, x)

    def test_dimension_mismatch(self):
        model = ToyModel.zeros(4, 8, 1)
        with pytest.raises(UsageError):
            predict(model, np.zeros(3))

    def test_predictions_feed_regression_curve(self):
        task = ToyTask(target_dim=6, seed=5)
        model = ToyModel.init(task.feature_dim, 16, 6, np.random.default_rng(1), 0.5)
        x, y, _ = task.sample(50, seed=2)
        records = []
        for i in range(50):
            records.append(DetectionRecord(
                id=f"t{i}", score=0.5, label=1,
                marginals=predict(model, x[i]),
                ground_truth=tuple(float(v) for v in y[i]),
            ))
        ds = validate_dataset(records)
        curve = regression_curve(ds, BoxElement.DY, levels=(0.25, 0.5, 0.75))
        assert curve.total_count == 50


class TestTrainToy:
    def test_bit_reproducible(self):
        cfg = TrainConfig(seed=4, epochs=8, pretrain_epochs=2, train_n=64, holdout_n=128)
        m1, t1 = train_toy(cfg)
        m2, t2 = train_toy(cfg)
        assert t1 == t2
        assert np.array_equal(m1.w1, m2.w1)
        assert np.array_equal(m1.w2, m2.w2)

    def test_trace_shape_and_epoch_numbering(self):
        cfg = TrainConfig(seed=1, epochs=5, pretrain_epochs=3, train_n=64, holdout_n=64)
        _, trace = train_toy(cfg)
        assert len(trace.entries) == 5
        assert [e.epoch for e in trace.entries] == [3, 4, 5, 6, 7]

    def test_divergence_detected(self):
        cfg = TrainConfig(seed=1, epochs=50, pretrain_epochs=0, train_n=64,
                          holdout_n=64, learning_rate=150.0)
        with pytest.raises(TrainingDivergedError):
            train_toy(cfg)

    def test_upturn_under_plain_likelihood_training(self):
        # Small train split, long training: held-out squared error stays at or
        # below its level from the start of probabilistic training while the
        # held-out calibration error climbs well off its minimum.
        cfg = TrainConfig(lam=0.0, seed=2)
        _, trace = train_toy(cfg)
        e = np.array([x.holdout_ece for x in trace.entries])
        l2 = np.array([x.holdout_l2 for x in trace.entries])
        imin = int(np.argmin(e))
        rise = float(np.max(e[imin:]) - e[imin])
        assert rise >= 0.02
        j = imin + int(np.flatnonzero(e[imin:] >= e[imin] + 0.02)[0])
        assert l2[j] < l2[0]

    def test_calibration_weight_lowers_final_ece_in_budget(self):
        finals = {}
        for lam in (0.0, 0.1):
            _, trace = train_toy(TrainConfig.budgeted(lam=lam, seed=11))
            finals[lam] = trace.entries[-1].holdout_ece
        assert finals[0.1] < finals[0.0]

    def test_learnable_variance_recovered(self):
        task = ToyTask(seed=3, sd_profile="affine", sd_base=0.5, sd_slope=0.3)
        cfg = TrainConfig(lam=0.1, seed=3, train_n=4000, epochs=500,
                          pretrain_epochs=40, learning_rate=0.01, hidden=48)
        model, _ = train_toy(cfg, task)
        x, _, true_var = task.sample(4000, seed=999)
        _, var = predict_batch(model, x)
        rel = np.abs(var - true_var) / true_var
        assert float(rel.mean()) < 0.15
