"""Pure-numpy red-black projected SOR sweeps.

Reference implementation of the kernel contract in fracsig.kernels. The
red-black coloring makes every node of one color independent of the others,
so each half-sweep is a masked vectorized update; the arithmetic is written
to match the compiled kernel operation for operation (same association
order, no fused multiply-adds), so modes 0 and 1 agree bitwise across
backends and mode 2 agrees to rounding in exp.
"""

import numpy as np

BACKEND = "numpy"

_TINY = 2.2250738585072014e-308
_BISECT_ITERS = 64


def _beta(r: np.ndarray, eps: float) -> np.ndarray:
    # exact zero for r >= eps: the clamped argument underflows exp to 0.0
    d = np.minimum(r - eps, -_TINY)
    return -np.exp(eps / d)


def _bottom_sor(u, cE, cW, cN, diag, rhs, i0):
    acc = (
        rhs[i0, 0]
        + cE[i0, 0] * u[i0 + 1, 0]
        + cW[i0, 0] * u[i0 - 1, 0]
        + cN[i0, 0] * u[i0, 1]
    )
    return acc


def psor_sweep(u, cE, cW, cN, cS, diag, rhs, psi, pen, eps, omega, mode):
    """One red-black SOR sweep over interior and bottom-row nodes, in place.

    u, cE, cW, cN, cS, diag, rhs: (nx+1, ny+1) C-contiguous float64. The
    boundary frame (i = 0, i = nx, j = ny) is never touched. psi and pen are
    bottom-row arrays (nx+1,); pen = kappa * dual cell width, used only by
    mode 2. mode: 0 plain SOR, 1 projected (max with psi on the bottom row),
    2 penalized (monotone scalar solve per bottom node). Returns the largest
    absolute update.
    """
    nx1, ny1 = u.shape
    ii = np.arange(1, nx1 - 1)
    jj = np.arange(1, ny1 - 1)
    parity_int = (ii[:, None] + jj[None, :]) % 2
    change = 0.0
    for color in (0, 1):
        # interior nodes of this color
        mask = parity_int == color
        acc = (
            rhs[1:-1, 1:-1]
            + cE[1:-1, 1:-1] * u[2:, 1:-1]
            + cW[1:-1, 1:-1] * u[:-2, 1:-1]
            + cN[1:-1, 1:-1] * u[1:-1, 2:]
            + cS[1:-1, 1:-1] * u[1:-1, :-2]
        )
        unew = (1.0 - omega) * u[1:-1, 1:-1] + omega * acc / diag[1:-1, 1:-1]
        diff = np.abs(unew - u[1:-1, 1:-1])
        if np.any(mask):
            change = max(change, float(diff[mask].max()))
            block = u[1:-1, 1:-1]
            block[mask] = unew[mask]
        # bottom-row nodes of this color (no south neighbor)
        i0 = ii[ii % 2 == color]
        if i0.size == 0:
            continue
        acc = _bottom_sor(u, cE, cW, cN, diag, rhs, i0)
        d0 = diag[i0, 0]
        target = acc / d0
        if mode == 2:
            p0 = pen[i0]
            s0 = psi[i0]
            lo = target
            hi = np.maximum(target, s0 + eps)
            for _ in range(_BISECT_ITERS):
                mid = 0.5 * (lo + hi)
                g = d0 * mid - acc + p0 * _beta(mid - s0, eps)
                take = g <= 0.0
                lo = np.where(take, mid, lo)
                hi = np.where(take, hi, mid)
            target = 0.5 * (lo + hi)
        unew = (1.0 - omega) * u[i0, 0] + omega * target
        if mode == 1:
            unew = np.maximum(unew, psi[i0])
        diff = np.abs(unew - u[i0, 0])
        if diff.size:
            change = max(change, float(diff.max()))
        u[i0, 0] = unew
    return change
