"""Inverse-geometric initial-timestep reweighting.

Discounted objectives weight early timesteps geometrically. Given a target
distribution over timesteps (usually uniform, i.e. what an undiscounted
empirical dataset represents), this module solves for an initial-timestep
distribution p0_tilde such that restarting at t0 ~ p0_tilde and adding a
horizon-truncated geometric offset reproduces the target:

    target(T) = sum_{t0 <= T} p0_tilde(t0) * Geom(T - t0 | horizon - t0)

The mixture matrix is lower-triangular with positive diagonal, so the
system solves by forward substitution. Negative solution entries (targets
that no restart distribution can realize) are clipped to zero and the
result renormalized, with the clipped mass and the composition residual
reported back to the caller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tabdice.data import Dataset, TimestepHist

__all__ = [
    "IgiWeights",
    "truncated_geometric",
    "solve_igi",
    "compose",
    "igi_initial_state_dist",
    "sample_initial_states",
    "save_igi_weights",
    "load_igi_weights",
]


@dataclass(frozen=True)
class IgiWeights:
    """Initial-timestep distribution plus solve diagnostics.

    clipped_mass is the total negative mass removed from the raw triangular
    solution (0 when the target was exactly realizable); residual is the L1
    error between the composed mixture and the target after any clipping.
    """

    probs: np.ndarray
    clipped_mass: float
    residual: float

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probs must be a nonempty vector")
        if np.any(p < 0.0) or abs(p.sum() - 1.0) > 1e-10:
            raise ValueError("probs must be a probability vector (tol 1e-10)")
        if self.clipped_mass < 0.0 or self.residual < 0.0:
            raise ValueError("diagnostics must be nonnegative")

    @property
    def horizon(self) -> int:
        return self.probs.size - 1


def _check_gamma(gamma: float) -> None:
    if not (0.0 <= gamma < 1.0):
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")


def _column_scale(gamma: float, horizon: int) -> np.ndarray:
    """Diagonal of the mixture matrix: (1 - gamma) / (1 - gamma^(horizon - t0 + 1)).

    The denominator is the truncated geometric normalizer, so every column of
    the implied matrix sums to exactly 1. At t0 = horizon the entry is 1.
    """
    n_left = horizon - np.arange(horizon + 1) + 1
    if gamma == 0.0:
        return np.ones(horizon + 1)
    return (1.0 - gamma) / (1.0 - gamma ** n_left.astype(np.float64))


def truncated_geometric(gamma: float, t0: int, horizon: int) -> np.ndarray:
    """Geometric offset distribution conditioned on staying within the horizon.

    Entry k (for k = 0..horizon - t0) equals
    (1 - gamma) gamma^k / sum_i (1 - gamma) gamma^i, normalized in closed form.
    """
    _check_gamma(gamma)
    if not (0 <= t0 <= horizon):
        raise ValueError(f"need 0 <= t0 <= horizon, got t0={t0}, horizon={horizon}")
    k = np.arange(horizon - t0 + 1, dtype=np.float64)
    if gamma == 0.0:
        out = np.zeros(k.size)
        out[0] = 1.0
        return out
    return (1.0 - gamma) * gamma**k / (1.0 - gamma ** (horizon - t0 + 1.0))


def solve_igi(target: TimestepHist, gamma: float) -> IgiWeights:
    """Invert the truncated-geometric mixture for an initial-timestep target.

    Forward substitution in O(horizon): with q(t0) = diag(t0) * p(t0), the
    off-diagonal inner product at row t is gamma * (previous inner + q(t-1)).
    """
    _check_gamma(gamma)
    horizon = target.horizon
    scale = _column_scale(gamma, horizon)
    raw = np.empty(horizon + 1)
    inner = 0.0  # sum_{t0 < t} q(t0) * gamma^(t - t0)
    q_prev = 0.0
    for t in range(horizon + 1):
        if t > 0:
            inner = gamma * (inner + q_prev)
        raw[t] = (target.probs[t] - inner) / scale[t]
        q_prev = scale[t] * raw[t]
    clipped_mass = float(-raw[raw < 0.0].sum()) + 0.0  # +0.0 avoids -0.0
    probs = np.maximum(raw, 0.0)
    probs = probs / probs.sum()
    composed = compose(IgiWeights(probs, 0.0, 0.0), gamma)
    residual = float(np.abs(composed.probs - target.probs).sum())
    return IgiWeights(probs, clipped_mass, residual)


def compose(weights: IgiWeights, gamma: float) -> TimestepHist:
    """Forward mixture: distribution of T = t0 + truncated-geometric offset."""
    _check_gamma(gamma)
    horizon = weights.horizon
    q = _column_scale(gamma, horizon) * weights.probs
    out = np.empty(horizon + 1)
    acc = 0.0
    for t in range(horizon + 1):
        acc = q[t] + gamma * acc
        out[t] = acc
    # columns each sum to 1, so drift here is pure rounding; renormalize it away
    return TimestepHist(out / out.sum())


def igi_initial_state_dist(dataset: Dataset, weights: IgiWeights) -> np.ndarray:
    """Map timestep weights onto states: p0_tilde(s) = sum_t w(t) Pr_D(s_t = s).

    Every timestep carrying weight must be observed in the dataset.
    """
    if weights.horizon > dataset.horizon:
        raise ValueError(
            f"weights cover timesteps up to {weights.horizon}, dataset only up to {dataset.horizon}"
        )
    state_counts = dataset.timestep_counts.sum(axis=2, dtype=np.float64)
    out = np.zeros(dataset.n_states)
    for t, w in enumerate(weights.probs):
        if w == 0.0:
            continue
        total = state_counts[t].sum()
        if total == 0.0:
            raise ValueError(f"timestep {t} carries weight {w} but has no observations")
        out += w * state_counts[t] / total
    return out


def sample_initial_states(
    dataset: Dataset, weights: IgiWeights, n: int, seed: int
) -> np.ndarray:
    """Draw initial states the way a sampler would: t0 from the weights, then a
    uniformly random timestep-t0 observation's state. Marginal over states is
    exactly igi_initial_state_dist."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    ts = rng.choice(weights.horizon + 1, size=n, p=weights.probs)
    state_counts = dataset.timestep_counts.sum(axis=2, dtype=np.float64)
    totals = state_counts.sum(axis=1)
    if np.any(totals[np.unique(ts)] == 0.0):
        raise ValueError("sampled a timestep with no observations")
    cdfs = np.cumsum(state_counts, axis=1) / totals[:, None]
    return (rng.random(n)[:, None] > cdfs[ts]).sum(axis=1)


def save_igi_weights(weights: IgiWeights, gamma: float, path: str) -> None:
    """CSV of t,prob rows with a comment header carrying the diagnostics."""
    with open(path, "w") as fh:
        fh.write(
            f"# tabdice-igi gamma={gamma:.17g} horizon={weights.horizon}"
            f" clipped_mass={weights.clipped_mass:.17g} residual={weights.residual:.17g}\n"
        )
        fh.write("t,prob\n")
        for t, p in enumerate(weights.probs):
            fh.write(f"{t},{p:.17g}\n")


def load_igi_weights(path: str) -> tuple[IgiWeights, float]:
    """Inverse of save_igi_weights; returns (weights, gamma)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("# tabdice-igi "):
        raise ValueError("missing '# tabdice-igi' header line")
    meta = dict(kv.split("=", 1) for kv in lines[0][len("# tabdice-igi "):].split())
    if len(lines) < 2 or lines[1] != "t,prob":
        raise ValueError("expected column line 't,prob'")
    probs = []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line:
            continue
        t_str, p_str = line.split(",")
        if int(t_str) != len(probs):
            raise ValueError(f"line {lineno}: timesteps must be consecutive from 0")
        probs.append(float(p_str))
    weights = IgiWeights(
        np.array(probs), float(meta["clipped_mass"]), float(meta["residual"])
    )
    return weights, float(meta["gamma"])
