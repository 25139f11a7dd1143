"""Matrix square roots, transport factors, and moment distances."""

import numpy as np
import pytest

from conftest import random_psd
from wdrc.errors import DimMismatch, NotPSD
from wdrc.psdmath import (
    MomentPair,
    bures_sq,
    gelbrich_dist_sq,
    is_psd,
    psd_sqrt,
    symmetrize,
    trace_sqrt_product,
    transport_map,
)


def test_symmetrize_idempotent():
    rng = np.random.default_rng(0)
    m = rng.standard_normal((4, 4))
    s = symmetrize(m)
    assert np.array_equal(s, s.T)
    assert np.allclose(symmetrize(s), s)


def test_psd_sqrt_squares_back():
    rng = np.random.default_rng(1)
    for n in (1, 2, 5):
        a = random_psd(rng, n)
        root = psd_sqrt(a)
        assert np.allclose(root @ root, a, atol=1e-10)
        assert np.array_equal(root, root.T)


def test_psd_sqrt_handles_singular():
    a = np.diag([1.0, 0.0])
    root = psd_sqrt(a)
    assert np.allclose(root, np.diag([1.0, 0.0]))


def test_psd_sqrt_rejects_indefinite():
    with pytest.raises(NotPSD):
        psd_sqrt(np.diag([1.0, -0.5]))


def test_is_psd_tolerates_rounding_noise():
    a = np.eye(2) * 1.0
    a[0, 0] -= 1e-12
    assert is_psd(a - np.eye(2))


def trace_sqrt_reference(a: np.ndarray, b: np.ndarray) -> float:
    root = psd_sqrt(a)
    eigs = np.linalg.eigvalsh(symmetrize(root @ b @ root))
    return float(np.sqrt(np.clip(eigs, 0.0, None)).sum())


def test_trace_sqrt_product_matches_reference():
    rng = np.random.default_rng(2)
    for n in (1, 2, 3, 4):
        for _ in range(25):
            a, b = random_psd(rng, n), random_psd(rng, n)
            ref = trace_sqrt_reference(a, b)
            assert trace_sqrt_product(a, b) == pytest.approx(ref, rel=1e-9)


def test_trace_sqrt_product_symmetric_in_arguments():
    rng = np.random.default_rng(3)
    for _ in range(20):
        a, b = random_psd(rng, 2), random_psd(rng, 2)
        assert trace_sqrt_product(a, b) == pytest.approx(
            trace_sqrt_product(b, a), rel=1e-10
        )


def test_transport_map_pushes_forward():
    rng = np.random.default_rng(4)
    for n in (1, 2, 3):
        for _ in range(25):
            a = random_psd(rng, n, jitter=0.05)
            b = random_psd(rng, n)
            t = transport_map(a, b)
            assert np.allclose(t @ a @ t, b, atol=1e-8)
            assert np.array_equal(t, t.T)


def test_transport_map_identity_at_equal_args():
    rng = np.random.default_rng(5)
    a = random_psd(rng, 2, jitter=0.1)
    assert np.allclose(transport_map(a, a), np.eye(2), atol=1e-10)


def test_transport_map_requires_pd_source():
    with pytest.raises(NotPSD):
        transport_map(np.diag([1.0, 0.0]), np.eye(2))


def test_bures_sq_zero_iff_equal():
    rng = np.random.default_rng(6)
    a = random_psd(rng, 3)
    b = random_psd(rng, 3)
    assert bures_sq(a, a) == pytest.approx(0.0, abs=1e-10)
    assert bures_sq(a, b) > 0.0
    assert bures_sq(a, b) == pytest.approx(bures_sq(b, a), rel=1e-9)


def test_bures_sq_diagonal_closed_form():
    a = np.diag([0.25, 4.0])
    b = np.diag([1.0, 9.0])
    expected = (0.5 - 1.0) ** 2 + (2.0 - 3.0) ** 2
    assert bures_sq(a, b) == pytest.approx(expected, rel=1e-12)


def test_gelbrich_combines_mean_and_cov_terms():
    p = MomentPair(np.array([1.0, 0.0]), np.diag([1.0, 1.0]))
    q = MomentPair(np.array([0.0, 2.0]), np.diag([4.0, 1.0]))
    expected = 5.0 + (1.0 - 2.0) ** 2
    assert gelbrich_dist_sq(p, q) == pytest.approx(expected, rel=1e-12)


def test_moment_pair_validates_and_freezes():
    pair = MomentPair(np.zeros(2), np.array([[1.0, 0.1], [0.1, 1.0]]))
    assert not pair.mean.flags.writeable
    assert not pair.cov.flags.writeable
    assert pair.dim == 2
    with pytest.raises(DimMismatch):
        MomentPair(np.zeros(3), np.eye(2))
    with pytest.raises(NotPSD):
        MomentPair(np.zeros(2), np.diag([1.0, -1.0]))


def test_moment_pair_symmetrizes_cov():
    cov = np.array([[1.0, 0.3 + 1e-12], [0.3, 1.0]])
    pair = MomentPair(np.zeros(2), cov)
    assert np.array_equal(pair.cov, pair.cov.T)
