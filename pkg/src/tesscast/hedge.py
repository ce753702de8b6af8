"""Online expert combination: classic multiplicative weights and its discounted variant.

The experts here are tessellation strategies; their per-instant mean
forecast errors drive the weight updates, and at every step the single
highest-weight expert is chosen.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

DEFAULT_GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))

WEIGHT_FLOOR = 1e-300


@dataclass(frozen=True)
class HedgeState:
    """Expert weights plus the incumbent choice used to break argmax ties."""

    weights: np.ndarray
    beta: float
    gamma: float
    incumbent: int

    @classmethod
    def initial(cls, n_experts: int, beta: float, gamma: float) -> "HedgeState":
        if n_experts < 1:
            raise ValueError("need at least one expert")
        if not (0.0 <= beta <= 1.0):
            raise ValueError(f"beta must lie in [0, 1], got {beta}")
        if not (0.0 <= gamma <= 1.0):
            raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
        return cls(np.full(n_experts, 1.0 / n_experts), float(beta), float(gamma), 0)


def step(state: HedgeState, raw_errors) -> tuple[int, HedgeState]:
    """
    One round: choose the argmax-weight expert, then update weights.

    Losses are the normalized raw errors l_i = e_i / sum(e); an all-zero
    error vector contributes zero loss to everyone. Weights follow
    w_i <- w_i^gamma * beta^l_i and are renormalized to sum 1, which never
    changes later argmax decisions. Ties keep the incumbent expert.
    """
    e = np.asarray(raw_errors, dtype=float)
    if e.shape != state.weights.shape:
        raise ValueError(f"expected {state.weights.size} errors, got {e.size}")
    if np.any(~np.isfinite(e)) or np.any(e < 0.0):
        raise ValueError("raw errors must be finite and nonnegative")

    w = state.weights
    top = w.max()
    if w[state.incumbent] == top:
        choice = state.incumbent
    else:
        choice = int(np.argmax(w))

    total = e.sum()
    losses = e / total if total > 0.0 else np.zeros_like(e)
    new_w = np.maximum(w ** state.gamma * state.beta ** losses, WEIGHT_FLOOR)
    new_w = new_w / new_w.sum()
    return choice, HedgeState(new_w, state.beta, state.gamma, choice)


@dataclass
class HedgeRun:
    """Full decision trace of a sequential run."""

    beta: float
    gamma: float
    choices: np.ndarray            # (T,) chosen expert per step
    errors: np.ndarray             # (T, n) raw expert errors
    losses: np.ndarray             # (T, n) normalized losses
    weights: np.ndarray            # (T, n) weights the choice was based on
    hybrid_errors: np.ndarray      # (T,) chosen expert's raw error

    @property
    def switch_count(self) -> int:
        return int(np.sum(self.choices[1:] != self.choices[:-1]))

    @property
    def cumulative_mean_error(self) -> float:
        return float(self.hybrid_errors.mean())


def run(error_streams, beta: float, gamma: float) -> HedgeRun:
    """
    Apply the combiner over aligned per-expert error streams.

    error_streams is (T, n) or a sequence of n equal-length series; the
    hybrid error at t is the chosen expert's raw error at t.
    """
    e = np.asarray(error_streams, dtype=float)
    if e.ndim != 2:
        raise ValueError("error streams must form a 2-D array (T, n_experts)")
    t_len, n = e.shape
    if t_len < 1:
        raise ValueError("need at least one time step")
    if np.any(~np.isfinite(e)) or np.any(e < 0.0):
        raise ValueError("raw errors must be finite and nonnegative")
    state = HedgeState.initial(n, beta, gamma)  # validates beta/gamma
    totals = e.sum(axis=1)
    losses = np.divide(e, totals[:, None], out=np.zeros_like(e), where=totals[:, None] > 0.0)
    choices = np.empty(t_len, dtype=int)
    weights = np.empty((t_len, n))
    hybrid = np.empty(t_len)
    # same update as step(), inlined without per-step validation
    w = state.weights.copy()
    incumbent = state.incumbent
    for t in range(t_len):
        weights[t] = w
        top = w.max()
        if w[incumbent] != top:
            incumbent = int(np.argmax(w))
        choices[t] = incumbent
        hybrid[t] = e[t, incumbent]
        w = np.maximum(w ** gamma * beta ** losses[t], WEIGHT_FLOOR)
        w /= w.sum()
    return HedgeRun(beta, gamma, choices, e.copy(), losses, weights, hybrid)


def tune(validation_streams, beta_grid=DEFAULT_GRID,
         gamma_grid=DEFAULT_GRID) -> tuple[float, float]:
    """
    Grid-search (beta, gamma) minimizing the hybrid's cumulative mean error
    on the validation streams. Ties break toward smaller gamma, then
    smaller beta.
    """
    e = np.asarray(validation_streams, dtype=float)
    if e.ndim != 2 or e.shape[0] < 1:
        raise ValueError("validation streams must form a nonempty (T, n) array")
    betas = sorted(float(b) for b in beta_grid)
    gammas = sorted(float(g) for g in gamma_grid)
    if not betas or not gammas:
        raise ValueError("parameter grids must be nonempty")
    best = None
    for gamma in gammas:
        for beta in betas:
            score = run(e, beta, gamma).cumulative_mean_error
            if best is None or score < best[0]:
                best = (score, beta, gamma)
    return best[1], best[2]


def write_trace_csv(result: HedgeRun, path: str) -> None:
    """Decision trace: t,chosen_expert,e_0,e_1,l_0,l_1,w_0,w_1 (columns grow with experts)."""
    n = result.errors.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = (["t", "chosen_expert"]
                  + [f"e_{i}" for i in range(n)]
                  + [f"l_{i}" for i in range(n)]
                  + [f"w_{i}" for i in range(n)])
        writer.writerow(header)
        for t in range(result.choices.size):
            row = [t, int(result.choices[t])]
            row += [format(v, ".10g") for v in result.errors[t]]
            row += [format(v, ".10g") for v in result.losses[t]]
            row += [format(v, ".10g") for v in result.weights[t]]
            writer.writerow(row)
