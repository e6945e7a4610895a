import numpy as np
import pytest

from nestopt import (DeterministicOracle, NoiseModel, NoisyOracle,
                     finite_difference_reference, level_streams, sample_level)
from nestopt.oracles import OracleSample, _centered_draw


def _affine_oracle(A, B=None, c=None):
    A = np.asarray(A, dtype=float)
    B = None if B is None else np.asarray(B, dtype=float)
    c = np.zeros(A.shape[0]) if c is None else np.asarray(c, dtype=float)

    def value_jac(x, u):
        val = A @ x + c
        if B is not None:
            val = val + B @ u
        return val, A, B

    return DeterministicOracle(A.shape[0], 0 if B is None else B.shape[1], value_jac)


def test_deterministic_linear_exact_and_idempotent():
    A = np.array([[1.0, 2.0], [3.0, -1.0]])
    oracle = _affine_oracle(A)
    rng = np.random.default_rng(0)
    x = np.array([0.5, -2.0])
    s1 = sample_level(oracle, x, None, rng)
    s2 = sample_level(oracle, x, None, rng)
    assert np.array_equal(s1.value, A @ x)
    assert np.array_equal(s1.jac_x, A)
    assert np.array_equal(s1.value, s2.value) and np.array_equal(s1.jac_x, s2.jac_x)


def test_noisy_sample_unbiased():
    A = np.array([[1.0, 2.0], [3.0, -1.0]])
    B = np.array([[0.5], [2.0]])
    base = _affine_oracle(A, B)
    oracle = NoisyOracle(base, NoiseModel(value_sd=0.1, jac_sd=0.1))
    rng = level_streams(
        seed=123, n_levels=1)[0]
    x = np.array([0.3, -0.7])
    u = np.array([1.1])
    N = 100_000
    vsum = np.zeros(2)
    jxsum = np.zeros((2, 2))
    jusum = np.zeros((2, 1))
    for _ in range(N):
        s = oracle.sample(x, u, rng)
        vsum += s.value
        jxsum += s.jac_x
        jusum += s.jac_u
    margin = 4 * 0.1 / np.sqrt(N)  # 4 sigma / sqrt(N), flaky-test margin
    exact_v = A @ x + B @ u
    assert np.all(np.abs(vsum / N - exact_v) < margin)
    assert np.all(np.abs(jxsum / N - A) < margin)
    assert np.all(np.abs(jusum / N - B) < margin)


def test_bias_schedule_offsets():
    A = np.eye(2)
    base = _affine_oracle(A)
    oracle = NoisyOracle(base, NoiseModel(bias=lambda k: 1.0 / (k + 1)))
    rng = np.random.default_rng(0)
    x = np.array([1.0, 2.0])
    s0 = oracle.sample(x, None, rng, k=0)
    assert np.allclose(s0.value, x + 1.0)
    assert np.allclose(s0.jac_x, A + 1.0)
    s999 = oracle.sample(x, None, rng, k=999)
    assert np.allclose(s999.value, x + 1e-3)


def test_finite_difference_square():
    fd = finite_difference_reference(lambda x, u: np.array([x[0] ** 2]),
                                     np.array([3.0]), step=1e-5)
    assert abs(fd[0, 0] - 6.0) < 1e-9


def test_finite_difference_identity_in_u():
    fd = finite_difference_reference(lambda x, u: np.asarray(u),
                                     np.array([0.3, 0.4]), np.array([1.0, -2.0, 0.5]))
    assert np.allclose(fd[:, :2], 0.0, atol=1e-10)
    assert np.allclose(fd[:, 2:], np.eye(3), atol=1e-10)


def test_finite_difference_constant():
    fd = finite_difference_reference(lambda x, u: np.array([7.0, -1.0]),
                                     np.array([0.1, 0.2, 0.3]))
    assert np.allclose(fd, 0.0)


def test_level_streams_disjoint_and_replayable():
    s_a = level_streams(99, 3, replication=0)
    s_b = level_streams(99, 3, replication=0)
    draws_a = [g.standard_normal(4) for g in s_a]
    draws_b = [g.standard_normal(4) for g in s_b]
    for da, db in zip(draws_a, draws_b):
        assert np.array_equal(da, db)
    assert not np.array_equal(draws_a[0], draws_a[1])
    s_rep1 = level_streams(99, 3, replication=1)
    assert not np.array_equal(s_rep1[0].standard_normal(4), draws_a[0])


def test_level_stream_independent_of_deeper_consumption():
    # consuming level 3 differently must not change level 2's samples
    first = level_streams(7, 3)
    first[2].standard_normal(100)
    level2_a = first[1].standard_normal(8)
    second = level_streams(7, 3)
    second[2].standard_normal(3)   # permuted / different draw count
    second[2].random(11)
    level2_b = second[1].standard_normal(8)
    assert np.array_equal(level2_a, level2_b)


def test_level_streams_seed_range():
    with pytest.raises(ValueError):
        level_streams(-1, 2)
    with pytest.raises(ValueError):
        level_streams(2**64, 2)


@pytest.mark.parametrize("dist", ["gaussian", "uniform", "rademacher"])
def test_centered_draw_moments(dist):
    rng = np.random.default_rng(5)
    draws = _centered_draw(rng, 200_000, dist)
    assert abs(float(draws.mean())) < 0.02
    assert abs(float(draws.var()) - 1.0) < 0.02
    if dist == "rademacher":
        assert set(np.unique(draws)) == {-1.0, 1.0}


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(value_sd=-0.1)
    with pytest.raises(ValueError):
        NoiseModel(distribution="cauchy")


def test_sample_block_split_roundtrip():
    s = OracleSample(np.zeros(2), np.arange(6.0).reshape(2, 3),
                     np.arange(4.0).reshape(2, 2))
    assert np.array_equal(s.jac, np.hstack([s.jac_x, s.jac_u]))
    assert np.array_equal(s.jac[:, :3], s.jac_x)
    assert np.array_equal(s.jac[:, 3:], s.jac_u)
    bottom = OracleSample(np.zeros(2), np.arange(6.0).reshape(2, 3))
    assert np.array_equal(bottom.jac, bottom.jac_x)
