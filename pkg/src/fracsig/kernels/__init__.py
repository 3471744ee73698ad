"""Sweep kernel dispatch.

Two interchangeable backends implement one contract, psor_sweep: a compiled
red-black projected SOR sweep (built from _sweeps_cy.pyx at install time)
and a pure-numpy reference (_sweeps_np). The compiled kernel is preferred
when present; set FRACSIG_KERNEL=numpy or FRACSIG_KERNEL=cython to force a
backend, the latter failing loudly if the extension did not build.

Kernel contract: psor_sweep(u, cE, cW, cN, cS, diag, rhs, psi, pen, eps,
omega, mode) performs one in-place red-black SOR sweep over interior and
bottom-row nodes of the (nx+1, ny+1) arrays, leaving the Dirichlet frame
(i = 0, i = nx, j = ny) untouched, and returns the largest absolute nodal
update. mode 0 is plain SOR, mode 1 projects the bottom row onto u >= psi,
mode 2 replaces the bottom-row update with the root of the penalized scalar
equation diag*u - acc + pen*beta_eps(u - psi) = 0 found by bisection.
"""

import os

MODE_NONE = 0
MODE_PROJECTED = 1
MODE_PENALIZED = 2

_request = os.environ.get("FRACSIG_KERNEL", "auto").strip().lower() or "auto"
if _request not in ("auto", "cython", "numpy"):
    raise RuntimeError(
        f"FRACSIG_KERNEL must be 'auto', 'cython' or 'numpy', got {_request!r}"
    )

_impl = None
if _request in ("auto", "cython"):
    try:
        from . import _sweeps_cy as _impl
    except ImportError:
        if _request == "cython":
            raise
if _impl is None:
    from . import _sweeps_np as _impl

BACKEND = _impl.BACKEND
psor_sweep = _impl.psor_sweep


def available_backends() -> tuple[str, ...]:
    """Names of the backends importable in this environment."""
    names = ["numpy"]
    try:
        from . import _sweeps_cy  # noqa: F401
        names.insert(0, "cython")
    except ImportError:
        pass
    return tuple(names)


def get_backend(name: str):
    """Return the named backend module (for benchmarks and equality tests)."""
    if name == "numpy":
        from . import _sweeps_np
        return _sweeps_np
    if name == "cython":
        from . import _sweeps_cy
        return _sweeps_cy
    raise ValueError(f"unknown kernel backend {name!r}")
