"""Small dense BFGS minimizer with Armijo backtracking."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    nit: int
    converged: bool
    message: str
    history: list = field(default_factory=list)


def bfgs(
    fun_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    gtol: float = 1e-9,
    ftol: float = 1e-9,
    max_iter: int = 5000,
    c1: float = 1e-4,
    shrink: float = 0.5,
    max_backtracks: int = 60,
) -> OptimizeResult:
    """Minimize ``f``; ``fun_and_grad(x)`` returns ``(f(x), grad f(x))``.

    Stops when ``|grad| < gtol`` or two consecutive steps each lower f by less than ``ftol``.
    f may return ``inf`` outside its domain; the line search backs off from it.
    The accepted objective values are non-increasing by construction.
    """
    x = np.asarray(x0, dtype=float).copy()
    f, g = fun_and_grad(x)
    if not np.isfinite(f):
        raise ValueError("objective is not finite at the starting point")
    n = x.size
    h = np.eye(n)
    history = [f]
    small_steps = 0

    for it in range(1, max_iter + 1):
        if np.linalg.norm(g) < gtol:
            return OptimizeResult(x, f, g, it - 1, True, "gradient below tolerance", history)

        d = -h @ g
        slope = g @ d
        if slope >= 0:
            # inverse Hessian lost positive definiteness; restart along steepest descent
            h = np.eye(n)
            d = -g
            slope = -(g @ g)

        step = 1.0
        for _ in range(max_backtracks):
            x_new = x + step * d
            f_new, g_new = fun_and_grad(x_new)
            if np.isfinite(f_new) and f_new <= f + c1 * step * slope:
                break
            step *= shrink
        else:
            # no decrease possible; accept only if we are already at round-off level
            ok = bool(np.linalg.norm(g) < np.sqrt(gtol))
            return OptimizeResult(x, f, g, it - 1, ok, "line search made no progress", history)

        s = x_new - x
        y = g_new - g
        improvement = f - f_new
        x, f, g = x_new, f_new, g_new
        history.append(f)

        small_steps = small_steps + 1 if improvement < ftol else 0
        if small_steps >= 2:
            return OptimizeResult(x, f, g, it, True, "objective change below tolerance", history)

        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if it == 1:
                h = np.eye(n) * (sy / (y @ y))
            rho = 1.0 / sy
            hy = h @ y
            h = h - rho * (np.outer(s, hy) + np.outer(hy, s)) + (rho * rho * (y @ hy) + rho) * np.outer(s, s)

    return OptimizeResult(x, f, g, max_iter, False, "iteration limit reached", history)
