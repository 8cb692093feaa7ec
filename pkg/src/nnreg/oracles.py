"""Randomized checks of the quadratic-model closed forms against direct computation."""
from __future__ import annotations

import numpy as np

from .optim import (QuadraticModel, early_stopping_steps, l1_closed_form, l2_closed_form,
                    quadratic_gd_closed_form, quadratic_gd_trajectory)

ES_LEARNING_RATE = 0.01
ES_ALPHAS = (0.1, 1.0)
ES_MAX_EIGENVALUE = 0.1
ES_TOLERANCE = 0.05


def grid_argmin_1d(curvature, w_star, penalty, half_width=6.0, step=1e-7) -> float:
    """Brute-force minimizer of ``0.5 h (w - w*)^2 + penalty(w)``: coarse scan, then a fine one."""
    grid = np.linspace(w_star - half_width, w_star + half_width, 120001)
    best = grid[np.argmin(0.5 * curvature * (grid - w_star) ** 2 + penalty(grid))]
    fine = np.arange(best - 2e-4, best + 2e-4, step)
    return float(fine[np.argmin(0.5 * curvature * (fine - w_star) ** 2 + penalty(fine))])


def gd_residual(rng, n_models=20, max_dim=10) -> float:
    worst = 0.0
    for _ in range(n_models):
        d = int(rng.integers(1, max_dim + 1))
        model = QuadraticModel(rng.uniform(0.05, 5.0, d), rng.normal(size=d))
        lr = rng.uniform(0.1, 1.9) / model.eigenvalues.max()
        steps = int(rng.integers(0, 200))
        diff = quadratic_gd_trajectory(model, lr, steps) - quadratic_gd_closed_form(model, lr, steps)
        worst = max(worst, float(np.max(np.abs(diff))))
    return worst


def l1_residual(rng, n_cases=20) -> float:
    worst = 0.0
    for _ in range(n_cases):
        h, w_star, alpha = rng.uniform(0.2, 3.0), rng.uniform(-3, 3), rng.uniform(0, 2)
        found = grid_argmin_1d(h, w_star, lambda w: alpha * np.abs(w))
        exact = l1_closed_form(QuadraticModel([h], [w_star]), alpha)[0]
        worst = max(worst, float(abs(found - exact)))
    return worst


def early_stopping_gap(rng, alpha, n_models=20, max_dim=10, max_eigenvalue=ES_MAX_EIGENVALUE,
                       lr=ES_LEARNING_RATE) -> float:
    """Worst elementwise relative gap between stopped GD and the L2 minimizer."""
    steps = early_stopping_steps(lr, alpha)
    worst = 0.0
    for _ in range(n_models):
        d = int(rng.integers(1, max_dim + 1))
        lam = rng.uniform(0.0, max_eigenvalue, d)
        lam[lam == 0] = max_eigenvalue
        model = QuadraticModel(lam, rng.normal(size=d))
        stopped = quadratic_gd_trajectory(model, lr, steps)
        ridge = l2_closed_form(model, alpha)
        worst = max(worst, float(np.max(np.abs(stopped - ridge) / np.abs(ridge))))
    return worst


def run_quadratic_oracles(seed=0, n_models=20, max_dim=10) -> dict:
    rng = np.random.default_rng(seed)
    out = {"gd_residual": gd_residual(rng, n_models, max_dim),
           "l1_residual": l1_residual(rng, n_models)}
    for alpha in ES_ALPHAS:
        out[f"es_l2_rel_gap_alpha{alpha:g}"] = early_stopping_gap(rng, alpha, n_models, max_dim)
    return out
