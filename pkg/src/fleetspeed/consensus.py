"""The discrete-time recommendation dynamics.

One synchronous round, per vehicle i:

    s_i(k+1) = s_i(k) + eta * sum_{j in N_i} (s_j(k) - s_i(k)) - mu * F(k)

where F(k) is the fleet-wide gradient sum broadcast by the base station. The
neighbour term is the row of a row-stochastic averaging matrix; the feedback
term steers the consensus value onto the zero of the summed gradients. On the
consensus subspace the whole system collapses to the scalar iteration
h(y) = y - mu * sum_j f'_j(y), which is what the convergence analysis, the
gain bound and most of the tests work with.

The update is evaluated in neighbour-difference form deliberately: when all
entries are equal, each difference is exactly 0.0 in floating point, so
consensus-subspace trajectories match the scalar iteration bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cost_models import CostFunction, DerivativeBounds
from .comm_graph import NeighborGraph
from .errors import (
    DimensionMismatch,
    EmptyFleet,
    GainOutOfRange,
    NonConvergence,
    WeightOverflow,
)

DEFAULT_ETA = 0.001
DEFAULT_EPSILON_CONSENSUS = 0.1  # km/h, below driver-perceptible resolution
DEFAULT_HOLD_ROUNDS = 10
MU_SAFETY_FACTOR = 0.9  # default mu = 0.9 * upper bound


@dataclass(frozen=True)
class SpeedState:
    """Recommended speeds of the active fleet at a discrete round."""

    round_index: int
    ids: np.ndarray      # active vehicle ids, ascending
    speeds: np.ndarray   # km/h, aligned with ids

    def __post_init__(self):
        if self.round_index < 0:
            raise ValueError(f"round index must be non-negative, got {self.round_index}")
        if len(self.ids) != len(self.speeds):
            raise DimensionMismatch(
                f"{len(self.ids)} ids vs {len(self.speeds)} speeds"
            )

    @property
    def size(self) -> int:
        return len(self.speeds)

    def spread(self) -> float:
        if self.size == 0:
            return 0.0
        return float(self.speeds.max() - self.speeds.min())

    @staticmethod
    def uniform(round_index: int, n: int, speed: float) -> "SpeedState":
        return SpeedState(round_index, np.arange(n), np.full(n, float(speed)))


@dataclass(frozen=True)
class ConsensusParams:
    eta: float = DEFAULT_ETA
    mu: float | None = None          # None: derive 0.9 * upper bound at use
    v_lo: float = 5.0                # km/h, road-operator bounds
    v_hi: float = 130.0
    epsilon_consensus: float = DEFAULT_EPSILON_CONSENSUS
    hold_rounds: int = DEFAULT_HOLD_ROUNDS
    eta_mode: str = "fixed"          # "fixed" or "adaptive" (1/(|N_i|+1))

    def __post_init__(self):
        if self.eta <= 0.0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.mu is not None and self.mu <= 0.0:
            raise GainOutOfRange(f"mu must be positive, got {self.mu}")
        if not self.v_lo < self.v_hi:
            raise ValueError(f"need v_lo < v_hi, got [{self.v_lo}, {self.v_hi}]")
        if self.eta_mode not in ("fixed", "adaptive"):
            raise ValueError(f"eta_mode must be 'fixed' or 'adaptive', got {self.eta_mode!r}")

    def resolve_mu(self, bounds: list[DerivativeBounds]) -> float:
        """The gain to run with: the configured one, or 0.9x the fleet bound."""
        if self.mu is not None:
            return self.mu
        return MU_SAFETY_FACTOR * mu_upper_bound(bounds)

    def mu_within_bound(self, bounds: list[DerivativeBounds]) -> bool:
        mu = self.resolve_mu(bounds)
        return 0.0 < mu < mu_upper_bound(bounds)


def mu_upper_bound(bounds: list[DerivativeBounds]) -> float:
    """Admissible-gain ceiling 2 / sum_j d_max^(j)."""
    if not bounds:
        raise EmptyFleet("gain bound needs at least one vehicle's derivative bounds")
    total = 0.0
    for b in bounds:
        if b.d_max <= 0.0:
            raise ValueError(f"d_max must be positive, got {b.d_max}")
        total += b.d_max
    return 2.0 / total


@dataclass(frozen=True)
class ConsensusMatrix:
    """Row-stochastic averaging matrix for one round.

    Dense storage; the simulator never materialises these (it uses an O(n)
    equivalent), so instances only appear at API and test scale.
    """

    weights: np.ndarray  # (n, n), rows sum to 1

    ROW_SUM_TOL = 1e-12

    def __post_init__(self):
        w = self.weights
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise DimensionMismatch(f"matrix must be square, got shape {w.shape}")
        if (w < 0.0).any():
            raise ValueError("averaging weights must be non-negative")
        rows = w.sum(axis=1)
        if np.abs(rows - 1.0).max() > self.ROW_SUM_TOL:
            raise ValueError(f"rows must sum to 1, max deviation {np.abs(rows - 1.0).max():.3e}")

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    def matches_graph(self, graph: NeighborGraph) -> bool:
        """Zero pattern equals the neighbour sets plus the diagonal."""
        n = self.size
        for i in range(n):
            nz = set(np.nonzero(self.weights[i])[0].tolist()) - {i}
            if nz != set(graph.neighbors(i)):
                return False
        return True


def build_matrix(graph: NeighborGraph, eta: float, adaptive: bool = False) -> ConsensusMatrix:
    """Averaging matrix from a neighbour graph.

    Fixed mode: weight eta on each neighbour, 1 - eta*|N_i| on the diagonal.
    Adaptive mode: weight 1/(|N_i|+1) on each neighbour and on the diagonal.
    """
    n = graph.size
    w = np.zeros((n, n))
    for i in range(n):
        nbrs = graph.neighbors(i)
        if adaptive:
            share = 1.0 / (len(nbrs) + 1.0)
            for j in nbrs:
                w[i, j] = share
            w[i, i] = 1.0 - share * len(nbrs)
        else:
            if eta * len(nbrs) > 1.0:
                raise WeightOverflow(
                    f"eta*|N_{i}| = {eta * len(nbrs):.4f} > 1; "
                    f"reduce eta or use adaptive weighting"
                )
            for j in nbrs:
                w[i, j] = eta
            w[i, i] = 1.0 - eta * len(nbrs)
    return ConsensusMatrix(w)


def consensus_step(
    state: SpeedState,
    matrix: ConsensusMatrix,
    aggregate: float,
    mu: float,
    v_lo: float | None = None,
    v_hi: float | None = None,
) -> SpeedState:
    """One synchronous round given the broadcast gradient sum.

    Published speeds are clamped to the operator band when one is supplied;
    pass None bounds to study the unclamped system.
    """
    if matrix.size != state.size:
        raise DimensionMismatch(
            f"matrix is {matrix.size}x{matrix.size}, state has {state.size} vehicles"
        )
    s = state.speeds
    # Difference form of P s: exact zero neighbour term on the consensus span.
    diffs = s[None, :] - s[:, None]
    neighbor_term = (matrix.weights * diffs).sum(axis=1)
    s_next = s + neighbor_term - mu * aggregate
    if v_lo is not None or v_hi is not None:
        s_next = np.clip(s_next, v_lo, v_hi)
    return SpeedState(state.round_index + 1, state.ids, s_next)


def lure_step(y: float, costs: list[CostFunction], mu: float) -> float:
    """Scalar iteration h(y) = y - mu * sum_j f'_j(y)."""
    return y - mu * sum(c.derivative(y) for c in costs)


def run_lure_to_fixed_point(
    costs: list[CostFunction],
    mu: float,
    y0: float,
    tol: float = 1e-6,
    max_iter: int = 200_000,
    bounds: list[DerivativeBounds] | None = None,
) -> float:
    """Iterate the scalar system until |h(y) - y| < tol.

    The returned y satisfies |sum_j f'_j(y)| < tol/mu. When `bounds` are
    supplied the gain is checked against the admissible interval first;
    divergence (or exhausting `max_iter`) raises NonConvergence, which signals
    a violated gain precondition.

    The gradient sum is evaluated through the summed coefficient row (the
    derivative of a sum of Laurent curves is the Laurent derivative of the
    summed coefficients), which keeps long iterations cheap for big fleets.
    """
    if not costs:
        raise EmptyFleet("no cost curves")
    if mu <= 0.0:
        raise GainOutOfRange(f"mu must be positive, got {mu}")
    if bounds is not None and mu >= mu_upper_bound(bounds):
        raise GainOutOfRange(
            f"mu = {mu} is not below the admissible ceiling {mu_upper_bound(bounds):.6g}"
        )
    c = np.zeros(7)
    for curve in costs:
        c += curve.laurent()

    def gradient_sum(v: float) -> float:
        pole = -c[0] / (v * v) if c[0] != 0.0 else 0.0
        return pole + c[2] + v * (2.0 * c[3] + v * (3.0 * c[4] + v * (4.0 * c[5] + v * 5.0 * c[6])))

    y = float(y0)
    escape = 1e9 * max(1.0, abs(y0))
    for _ in range(max_iter):
        y_next = y - mu * gradient_sum(y)
        if abs(y_next - y) < tol:
            return y_next
        if not np.isfinite(y_next) or abs(y_next) > escape:
            raise NonConvergence(
                f"iteration diverged (reached {y_next!r}); gain too large for this fleet"
            )
        y = y_next
    raise NonConvergence(f"no fixed point within {max_iter} iterations at tol {tol}")


@dataclass(frozen=True)
class ConvergenceReport:
    converged: bool
    round_index: int | None  # round at which the hold window completed


def detect_consensus(history: list[SpeedState], params: ConsensusParams) -> ConvergenceReport:
    """First round at which spread and per-round movement stay below
    epsilon_consensus for hold_rounds consecutive rounds.

    The movement test needs identical membership between consecutive states;
    a membership change resets the streak.
    """
    if not history:
        raise ValueError("empty history")
    eps = params.epsilon_consensus
    streak = 0
    for k in range(len(history) - 1):
        cur, nxt = history[k], history[k + 1]
        same_fleet = cur.size == nxt.size and np.array_equal(cur.ids, nxt.ids)
        if same_fleet and cur.spread() < eps and _max_abs_delta(cur, nxt) < eps:
            streak += 1
            if streak >= params.hold_rounds:
                return ConvergenceReport(True, history[k + 1].round_index)
        else:
            streak = 0
    return ConvergenceReport(False, None)


def _max_abs_delta(a: SpeedState, b: SpeedState) -> float:
    if a.size == 0:
        return 0.0
    return float(np.abs(b.speeds - a.speeds).max())
