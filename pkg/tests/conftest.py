"""Session fixtures: kernels, aux tables (disk-cached), mollified tables.

The aux tables are expensive to build (tens of seconds to minutes); they are
cached as CSV under tests/data and rebuilt only when missing, exercising the
save/load path either way.
"""

import os

import numpy as np
import pytest

from ibstokes import auxfun, contour as ct, dynamics as dyn, kernels

DATA = os.path.join(os.path.dirname(__file__), "data")


@pytest.fixture(scope="session")
def bump():
    return kernels.bump_profile()


@pytest.fixture(scope="session")
def two_scale():
    """(profile, certificate) of the vanishing-first-moment kernel."""
    return kernels.build_m1_zero_kernel(kernels.bump_profile(), 0.35)


def _cached_table(path, builder):
    if os.path.exists(path):
        return auxfun.load_table(path)
    os.makedirs(DATA, exist_ok=True)
    table = builder()
    auxfun.save_table(table, path)
    return table


@pytest.fixture(scope="session")
def bump_table(bump):
    return _cached_table(os.path.join(DATA, "bump_table.csv"),
                         lambda: auxfun.build_aux_table(bump))


@pytest.fixture(scope="session")
def two_scale_table(two_scale):
    profile, cert = two_scale
    return _cached_table(os.path.join(DATA, "two_scale_table.csv"),
                         lambda: auxfun.build_aux_table(profile, m1=cert.m1))


@pytest.fixture(scope="session")
def moll():
    """Memoized mollified-Stokeslet tables keyed by (label, eps)."""
    cache = {}

    def get(profile, eps):
        key = (profile.label, eps)
        if key not in cache:
            cache[key] = dyn.mollified_stokeslet(profile, eps)
        return cache[key]

    return get


@pytest.fixture(scope="session")
def perturbed_circle():
    return ct.make_test_contour("perturbed_circle", K=32)
