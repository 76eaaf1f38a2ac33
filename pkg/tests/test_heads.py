"""SD and EF head contracts."""

import numpy as np
import pytest

from echoformer.errors import DegenerateInputError
from echoformer.heads import (
    ef_regress,
    init_ef_head,
    init_sd_head,
    sd_classify,
    sd_regress,
)
from echoformer.numerics import Tensor, layer_norm, linear, reshape, sigmoid

D = 16


def _fused(rng, n=6):
    return Tensor(rng.normal(size=(n, D)))


class TestSDRegress:
    def test_zero_final_layer_gives_zero_signal(self):
        rng = np.random.default_rng(0)
        head = init_sd_head(D, "regression", rng)
        head.lin3.w.data[:] = 0.0
        head.lin3.b.data[:] = 0.0
        out = sd_regress(_fused(rng), head)
        np.testing.assert_array_equal(out.data, np.zeros(6))

    def test_output_length_and_range(self):
        rng = np.random.default_rng(1)
        head = init_sd_head(D, "regression", rng)
        out = sd_regress(_fused(rng, n=9), head).data
        assert out.shape == (9,)
        assert (np.abs(out) < 1.0).all()

    def test_frame_local_given_fused(self):
        rng = np.random.default_rng(2)
        head = init_sd_head(D, "regression", rng)
        fused = _fused(rng)
        base = sd_regress(fused, head).data
        bumped = fused.data.copy()
        bumped[3] += 1.0
        out = sd_regress(Tensor(bumped), head).data
        assert base[3] != out[3]
        keep = np.arange(6) != 3
        np.testing.assert_array_equal(base[keep], out[keep])


class TestSDClassify:
    def test_zero_logits_uniform(self):
        rng = np.random.default_rng(3)
        head = init_sd_head(D, "classification", rng)
        head.lin3.w.data[:] = 0.0
        head.lin3.b.data[:] = 0.0
        out = sd_classify(_fused(rng), head).data
        np.testing.assert_allclose(out, 1.0 / 3.0, atol=1e-12)

    def test_columns_are_distributions(self):
        rng = np.random.default_rng(4)
        head = init_sd_head(D, "classification", rng)
        out = sd_classify(_fused(rng, n=7), head).data
        assert out.shape == (3, 7)
        np.testing.assert_allclose(out.sum(axis=0), 1.0, atol=1e-6)
        assert (out >= 0).all()
        assert set(np.argmax(out, axis=0)) <= {0, 1, 2}


class TestEFRegress:
    def test_zero_scores_give_half(self):
        rng = np.random.default_rng(5)
        head = init_ef_head(D, rng)
        head.lin2.w.data[:] = 0.0
        head.lin2.b.data[:] = 0.0
        out = ef_regress(_fused(rng), np.ones(6, dtype=bool), head)
        assert float(out.data) == 0.5

    def test_constant_scores_pass_through_sigmoid(self):
        rng = np.random.default_rng(6)
        head = init_ef_head(D, rng)
        head.lin2.w.data[:] = 0.0
        head.lin2.b.data[:] = 0.7
        out = ef_regress(_fused(rng), np.ones(6, dtype=bool), head)
        assert float(out.data) == pytest.approx(1.0 / (1.0 + np.exp(-0.7)), abs=1e-12)

    def test_masked_frames_excluded(self):
        rng = np.random.default_rng(7)
        head = init_ef_head(D, rng)
        fused = _fused(rng)
        mask = np.array([True, True, True, True, False, False])
        base = float(ef_regress(fused, mask, head).data)
        bumped = fused.data.copy()
        bumped[4] += 5.0          # pre-zeroing disabled: rows carry content
        bumped[5] -= 3.0
        out = float(ef_regress(Tensor(bumped), mask, head).data)
        assert out == base

    def test_sigmoid_outside_mean(self):
        rng = np.random.default_rng(8)
        head = init_ef_head(D, rng)
        fused = _fused(rng, n=5)
        mask = np.ones(5, dtype=bool)
        got = float(ef_regress(fused, mask, head).data)
        x = layer_norm(linear(fused, head.lin1.w, head.lin1.b),
                       head.norm.gain, head.norm.bias)
        scores = reshape(linear(x, head.lin2.w, head.lin2.b), (5,)).data
        expect = float(sigmoid(Tensor(np.array(scores.mean()))).data)
        assert got == pytest.approx(expect, abs=1e-12)
        mean_of_sig = float(sigmoid(Tensor(scores)).data.mean())
        assert abs(got - mean_of_sig) > 1e-9      # the orders differ

    def test_permutation_invariant_over_live_frames(self):
        rng = np.random.default_rng(9)
        head = init_ef_head(D, rng)
        fused = _fused(rng)
        mask = np.ones(6, dtype=bool)
        base = float(ef_regress(fused, mask, head).data)
        perm = rng.permutation(6)
        out = float(ef_regress(Tensor(fused.data[perm]), mask, head).data)
        assert out == pytest.approx(base, abs=1e-12)

    def test_all_masked_rejected(self):
        rng = np.random.default_rng(10)
        head = init_ef_head(D, rng)
        with pytest.raises(DegenerateInputError):
            ef_regress(_fused(rng), np.zeros(6, dtype=bool), head)

    def test_open_interval(self):
        rng = np.random.default_rng(11)
        head = init_ef_head(D, rng)
        out = float(ef_regress(_fused(rng), np.ones(6, dtype=bool), head).data)
        assert 0.0 < out < 1.0
