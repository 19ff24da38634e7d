import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import chebyshev

from gaussfield import _kernels_py, kernels

try:
    from gaussfield import _ckernels
except ImportError:  # pragma: no cover - extension not built
    _ckernels = None

IMPLS = [pytest.param(_kernels_py, id="python"),
         pytest.param(_ckernels, id="cython",
                      marks=pytest.mark.skipif(_ckernels is None, reason="extension not built"))]


@pytest.mark.parametrize("impl", IMPLS)
def test_cheb_eval_against_numpy(impl, rng):
    coef = rng.normal(size=(5, 9))
    x = rng.uniform(0, 6.0, 200)  # includes points past the table
    got = kernels.cheb_eval(coef, 1.1, x, impl=impl)
    idx = np.floor(x / 1.1).astype(int)
    want = np.zeros_like(x)
    for i in range(x.size):
        if idx[i] < 5:
            want[i] = chebyshev.chebval(2 * (x[i] - idx[i] * 1.1) / 1.1 - 1, coef[idx[i]])
    assert np.allclose(got, want, atol=1e-13)


@pytest.mark.parametrize("impl", IMPLS)
@pytest.mark.parametrize("odd", [False, True])
def test_trig_sum_against_numpy(impl, odd, rng):
    kappa, u, g = rng.normal(size=50) * 10, rng.uniform(0, 1, 30), rng.normal(size=30)
    fn = np.sin if odd else np.cos
    want = fn(np.outer(kappa, u)) @ g
    assert np.allclose(kernels.trig_sum(kappa, u, g, odd, impl=impl), want, atol=1e-12)


@pytest.mark.parametrize("impl", IMPLS)
def test_weighted_vdot(impl, rng):
    w = rng.uniform(size=100)
    a = rng.normal(size=100) + 1j * rng.normal(size=100)
    b = rng.normal(size=100) + 1j * rng.normal(size=100)
    assert kernels.weighted_vdot(w, a, b, impl=impl) == pytest.approx(np.sum(w * a.conj() * b), rel=1e-13)


@pytest.mark.skipif(_ckernels is None, reason="extension not built")
@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31), n=st.integers(1, 64), odd=st.booleans())
def test_backends_agree(seed, n, odd):
    rng = np.random.default_rng(seed)
    kappa, u, g = rng.normal(size=n) * 5, rng.uniform(0, 1, 17), rng.normal(size=17)
    a = kernels.trig_sum(kappa, u, g, odd, impl=_kernels_py)
    b = kernels.trig_sum(kappa, u, g, odd, impl=_ckernels)
    assert np.allclose(a, b, rtol=1e-13, atol=1e-13)
    coef = rng.normal(size=(3, 7))
    x = rng.uniform(0, 3.5, n)
    assert np.allclose(kernels.cheb_eval(coef, 1.0, x, impl=_kernels_py),
                       kernels.cheb_eval(coef, 1.0, x, impl=_ckernels), atol=1e-13)


def test_backend_name():
    assert kernels.BACKEND in ("python", "cython")
