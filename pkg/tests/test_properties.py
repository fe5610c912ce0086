"""Property-based checks over random finite spaces and functions."""

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from homwave.dyadic import build_system
from homwave.fnorms import bmo_norm, llog_functional, llog_norm, lp_norm
from homwave.mra import build_splines
from homwave.paraproduct import paraproducts
from homwave.space import load_space
from homwave.wavelet import analyze, build_wavelets, synthesize

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@st.composite
def spaces(draw, lo=2, hi=12):
    n = draw(st.integers(lo, hi))
    coords = draw(
        arrays(float, (n, 2), elements=st.floats(-10, 10, allow_nan=False), unique=True).filter(
            lambda c: len({tuple(r) for r in np.round(c, 6)}) == len(c)
        )
    )
    weights = draw(arrays(float, n, elements=st.floats(0.1, 10)))
    pts = [{"id": f"q{i}", "weight": float(w), "coords": c.tolist()} for i, (c, w) in enumerate(zip(coords, weights))]
    return load_space({"schema": "space/v1", "metric": "euclidean", "points": pts})


def pipeline(S, delta=0.25):
    B = build_splines(build_system(S, delta))
    return B, build_wavelets(B)


settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@given(spaces())
def test_metric_axioms(S):
    d = S.dist
    assert np.all(np.diag(d) == 0) and np.array_equal(d, d.T)
    assert np.all(d[~np.eye(S.n, dtype=bool)] > 0)
    # d(x, z) <= d(x, y) + d(y, z) over every triple, indexed [x, y, z]
    assert np.all(d[:, None, :] <= d[:, :, None] + d[None, :, :] + 1e-9)


@given(spaces(), st.data())
def test_parseval_and_roundtrip(S, data):
    B, W = pipeline(S)
    f = data.draw(arrays(float, S.n, elements=finite))
    c = analyze(W, f)
    nf = float(np.dot(f * f, S.weight))
    assert abs(nf - c.energy()) <= 1e-9 * max(nf, 1e-300) + 1e-300
    assert np.abs(synthesize(W, c) - f).max() <= 1e-9 * max(np.abs(f).max(), 1e-300)


@given(spaces(), st.data())
def test_decomposition_identity(S, data):
    B, W = pipeline(S)
    f = data.draw(arrays(float, S.n, elements=finite))
    g = data.draw(arrays(float, S.n, elements=finite))
    r = paraproducts(B, W, f, g)
    assert r.residual <= 1e-10 * max(np.abs(f).max() * np.abs(g).max(), 1e-300)


@given(spaces(), st.data(), st.floats(-100, 100), st.integers(-4, 4))
def test_bmo_shift_and_scale(S, data, shift, e):
    g = data.draw(arrays(float, S.n, elements=st.floats(-100, 100)))
    b = bmo_norm(S, g).value
    assert abs(bmo_norm(S, g + shift).value - b) <= 1e-9 * (1 + abs(shift) + np.abs(g).max())
    # powers of two scale exactly
    assert bmo_norm(S, 2.0**e * g).value == 2.0**e * b


@given(spaces(lo=2, hi=8), st.data())
def test_llog_bounded_by_l1(S, data):
    f = data.draw(arrays(float, S.n, elements=finite))
    lam = llog_norm(S, f)
    assert lam <= lp_norm(S, f, 1)
    if lam > 0:
        assert 1 - 1e-6 <= llog_functional(S, f, lam) <= 1
