"""Python bindings for the qns solvers.

Traces and verification reports are returned as plain dicts with the same
layout as the JSON files written by the ``qns`` command-line tool.
"""

import json

import numpy as np

from . import _core

__all__ = [
    "generate_problem",
    "krylov_grade",
    "krylov_minimizer",
    "cg_solve",
    "bfgs_solve",
    "memoryless_bfgs_solve",
    "run",
    "verify",
    "compare_traces",
]


def _arrays(H, c, x0):
    H = np.ascontiguousarray(H, dtype=float)
    c = np.ascontiguousarray(c, dtype=float)
    x0 = np.zeros_like(c) if x0 is None else np.ascontiguousarray(x0, dtype=float)
    return H, c, x0


def generate_problem(n, grade, seed=0, eigenvalues=None, condition=None, random_start=False):
    """Random SPD quadratic with Krylov grade ``grade``.

    Returns a dict with ``H``, ``c``, ``x0``, ``eigenvalues`` and ``active``.
    """
    if eigenvalues is not None:
        eigenvalues = [float(v) for v in eigenvalues]
    return _core.generate_problem(n, grade, seed, eigenvalues, condition, random_start)


def krylov_grade(H, c, x0=None):
    return _core.krylov_grade(*_arrays(H, c, x0))


def krylov_minimizer(H, c, k, x0=None):
    return _core.krylov_minimizer(*_arrays(H, c, x0), k)


def cg_solve(H, c, x0=None, tol=1e-9, max_iter=None):
    return json.loads(_core.cg_solve(*_arrays(H, c, x0), tol, max_iter))


def bfgs_solve(H, c, x0=None, tol=1e-9, max_iter=None):
    return json.loads(_core.qn_exact_ls_solve(*_arrays(H, c, x0), "bfgs", tol, max_iter))


def memoryless_bfgs_solve(H, c, x0=None, tol=1e-9, max_iter=None):
    return json.loads(_core.qn_exact_ls_solve(*_arrays(H, c, x0), "memoryless", tol, max_iter))


def run(H, c, x0=None, **options):
    """Subspace quasi-Newton run.

    Keyword options follow the method entries of a spec file: ``step``,
    ``sigma``, ``mode``, ``tol``, ``max_iter``, ``initial_sigma``, ``seed``.
    """
    return json.loads(_core.run(*_arrays(H, c, x0), json.dumps(options)))


def verify(trace, H, c, x0=None, check="theorem1"):
    """Check a trace; ``check`` is baseline, theorem1, corollary-unit or step-equivalence."""
    text = trace if isinstance(trace, str) else json.dumps(trace)
    H, c, x0 = _arrays(H, c, x0)
    return json.loads(_core.verify(check, text, H, c, x0))


def compare_traces(a, b):
    dump = lambda t: t if isinstance(t, str) else json.dumps(t)
    return _core.compare_traces(dump(a), dump(b))
