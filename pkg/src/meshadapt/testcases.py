"""The five analytic benchmark functions driving the adaptation studies.

Cases 1-2 live on the unit square, 3-5 on the unit cube.  All have steep
moving-front or shell features that reward anisotropic adaptation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class TestCase:
    id: int
    dim: int
    u: Callable[[np.ndarray], np.ndarray] = field(repr=False)


def _u1(p):
    x, y = p[..., 0], p[..., 1]
    return np.tanh(-30.0 * (y - 0.5 - 0.25 * np.sin(2.0 * np.pi * x)))


def _u2(p):
    x, y = p[..., 0], p[..., 1]
    return np.tanh(25.0 * y) - np.tanh(25.0 * (x - y - 0.5))


# shell centers of case 3 in the 4x-scaled coordinates
_SHELL_CENTERS = np.array(
    [
        (2.0, 2.0, 2.0),
        (2.5, 2.5, 2.5),
        (2.5, 1.5, 2.5),
        (1.5, 2.5, 2.5),
        (1.5, 1.5, 2.5),
        (2.5, 2.5, 1.5),
        (2.5, 1.5, 1.5),
        (1.5, 2.5, 1.5),
        (1.5, 1.5, 1.5),
    ]
)


def _u3(p):
    q = 4.0 * p[..., None, :] - _SHELL_CENTERS  # (..., 9, 3)
    r2 = np.square(q).sum(axis=-1)
    return np.tanh(30.0 * (r2 - 0.1875)).sum(axis=-1)


def _u4(p):
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    return np.tanh(-30.0 * (z - 0.5 - 0.25 * np.sin(2.0 * np.pi * x) * np.sin(np.pi * y)))


def _u5(p):
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    inner = np.tanh(-30.0 * (y - 0.5 - 0.25 * np.sin(2.0 * np.pi * x)))
    return np.tanh(-30.0 * (z - inner))


_CASES = {
    1: TestCase(1, 2, _u1),
    2: TestCase(2, 2, _u2),
    3: TestCase(3, 3, _u3),
    4: TestCase(4, 3, _u4),
    5: TestCase(5, 3, _u5),
}


def get_test_case(case_id: int) -> TestCase:
    try:
        return _CASES[case_id]
    except KeyError:
        raise ValueError(f"unknown test case id {case_id}; valid ids are 1..5") from None


def eval_test_function(case_id: int, point) -> float:
    """Value of test function ``case_id`` at a single point."""
    case = get_test_case(case_id)
    p = np.asarray(point, dtype=float)
    if p.shape != (case.dim,):
        raise ValueError(f"case {case_id} expects a point in R^{case.dim}")
    return float(case.u(p))
