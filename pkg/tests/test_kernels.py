import os

import pytest
from hypothesis import given
from hypothesis import strategies as st

from posesim import kernels
from posesim.kernels import _fallback

try:
    from posesim.kernels import _native
except ImportError:
    _native = None

needs_native = pytest.mark.skipif(_native is None, reason="compiled kernels not built")


def test_splitmix_reference_outputs():
    # published SplitMix64 outputs for seed 0
    rng = _fallback.SplitMix64(0)
    assert [rng.next() for _ in range(3)] == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "python")
    if os.environ.get("POSESIM_PURE") == "1":
        assert kernels.BACKEND == "python"
    elif _native is not None:
        assert kernels.BACKEND == "cython"


@needs_native
@given(st.integers(1, 60).flatmap(lambda n: st.tuples(
    st.just(n), st.integers(0, n), st.integers(1, n))), st.integers(0, 2000), st.integers(0, 2**64 - 1))
def test_crash_trials_backends_agree(nms, trials, seed):
    n, m, s = nms
    assert _native.crash_trials(n, m, s, trials, seed) == _fallback.crash_trials(n, m, s, trials, seed)


@needs_native
@given(st.lists(st.integers(-1000, 1000), max_size=200), st.integers(0, 2**64 - 1))
def test_quicksort_backends_agree(values, seed):
    assert _native.quicksort_steps(values, seed) == _fallback.quicksort_steps(values, seed)


@given(st.lists(st.integers(), max_size=100), st.integers(0, 2**32))
def test_quicksort_sorts(values, seed):
    out, comparisons = kernels.quicksort_steps(values, seed)
    assert out == sorted(values)
    assert comparisons <= len(values) * len(values)


def test_crash_trials_edges():
    assert kernels.crash_trials(10, 10, 3, 500, 1) == 500
    assert kernels.crash_trials(10, 0, 1, 500, 1) == 0
    assert kernels.crash_trials(10, 2, 3, 500, 1) == 0
    with pytest.raises(ValueError):
        kernels.crash_trials(5, 6, 1, 1, 0)


def test_quicksort_non_machine_values_use_fallback():
    assert kernels.quicksort_steps([1.5, 0.25, 2**70], 3)[0] == [0.25, 1.5, 2**70]
