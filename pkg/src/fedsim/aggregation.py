"""Server-side parameter fusion.

Classical parameters are averaged within clusters weighted by sample
counts. Quantum angles are periodic, so they are averaged on the unit
circle (weighted vector sum, then atan2 back to an angle); the plain
weighted arithmetic mean exists only as the ablation/baseline path, where
angles that straddle the -pi/pi cut cancel catastrophically. The global
quantum update then treats the gap between the current parameters and the
aggregate as a pseudo-gradient for a server-side Adam step.

All reductions stack client arrays in ascending client-id order and reduce
with numpy's pairwise summation, so results never depend on arrival order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._angles import wrap_angle, wrap_angles
from .clustering import ClusterAssignment
from .errors import ParameterError, ProtocolError
from .model import ClassicalParams, ClientUpdate, QuantumParams

__all__ = [
    "AggregationWeights",
    "ServerOptimizerState",
    "wrap_angle",
    "wrap_angles",
    "cluster_weighted_average",
    "circular_mean",
    "aggregate_quantum",
    "arithmetic_mean_quantum",
    "fedadam_update",
]

DEGENERATE_RESULTANT = 1e-12


@dataclass
class AggregationWeights:
    """Client weights n_i / sum(n), non-negative and summing to one."""

    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 1 or len(self.weights) < 1:
            raise ParameterError("weights must be a non-empty vector")
        if np.any(self.weights < 0):
            raise ParameterError("weights must be non-negative")
        if abs(float(self.weights.sum()) - 1.0) > 1e-12:
            raise ParameterError("weights must sum to 1")

    @classmethod
    def from_counts(cls, counts) -> "AggregationWeights":
        c = np.asarray(counts, dtype=np.float64)
        total = c.sum()
        if total <= 0:
            raise ParameterError("total sample count must be positive")
        return cls(c / total)


@dataclass
class ServerOptimizerState:
    """Server Adam moments and step counter for the quantum parameters."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.m.shape != self.v.shape or self.m.ndim != 1:
            raise ParameterError("moment buffers must be vectors of equal length")
        if np.any(self.v < 0):
            raise ParameterError("second moments must be non-negative")
        if self.t < 0:
            raise ParameterError("step counter must be >= 0")

    @classmethod
    def zeros(cls, size: int) -> "ServerOptimizerState":
        return cls(np.zeros(size), np.zeros(size), 0)


def _sorted_updates(updates) -> list[ClientUpdate]:
    ups = sorted(updates, key=lambda u: u.client_id)
    if len(ups) == 0:
        raise ProtocolError("no client updates to aggregate")
    ids = [u.client_id for u in ups]
    if len(set(ids)) != len(ids):
        raise ProtocolError("duplicate client ids in updates")
    return ups


def cluster_weighted_average(updates, assignment: ClusterAssignment) -> dict[int, ClassicalParams]:
    """Sample-count weighted mean of classical parameters within each cluster.

    Position i of the assignment refers to the i-th update in ascending
    client-id order; every assigned client must have exactly one update.
    """
    ups = _sorted_updates(updates)
    if len(ups) != len(assignment.labels):
        raise ProtocolError(
            f"assignment covers {len(assignment.labels)} clients but {len(ups)} updates arrived"
        )
    f, h, q = ups[0].params.classical.dims
    out: dict[int, ClassicalParams] = {}
    for cluster in range(assignment.n_clusters):
        members = np.flatnonzero(assignment.labels == cluster)
        counts = np.array([ups[i].distribution.count for i in members], dtype=np.float64)
        weights = counts / counts.sum()
        flats = np.stack([ups[i].params.classical.flatten() for i in members])
        out[cluster] = ClassicalParams.from_flat((weights[:, None] * flats).sum(axis=0), f, h, q)
    return out


def circular_mean(angles, weights: AggregationWeights) -> tuple[float, float]:
    """Weighted mean direction of a set of angles, plus the resultant length.

    Angles are placed on the unit circle, their weighted vector sum is
    taken, and atan2 maps the sum back to (-pi, pi]. The resultant length
    lies in [0, 1]; values near zero mean the directions cancel and the
    mean is ill-defined, which callers must handle.
    """
    a = np.asarray(angles, dtype=np.float64)
    w = weights.weights
    if a.shape != w.shape:
        raise ParameterError("angles and weights must have equal length")
    # + 0.0 normalizes a possible -0.0 sum so atan2 lands on +pi, not -pi
    s = float(np.sum(w * np.sin(a))) + 0.0
    c = float(np.sum(w * np.cos(a))) + 0.0
    return math.atan2(s, c), math.hypot(s, c)


def aggregate_quantum(updates, fallback: QuantumParams) -> tuple[QuantumParams, list[int]]:
    """Per-dimension circular mean of the clients' quantum angles.

    Dimensions whose resultant length falls below DEGENERATE_RESULTANT keep
    the fallback (previous global) value; their indices are returned so the
    caller can record the degeneracy.
    """
    ups = _sorted_updates(updates)
    weights = AggregationWeights.from_counts([u.distribution.count for u in ups])
    mat = np.stack([u.params.quantum.angles for u in ups])
    out = np.empty(mat.shape[1])
    degenerate: list[int] = []
    for j in range(mat.shape[1]):
        angle, resultant = circular_mean(mat[:, j], weights)
        if resultant < DEGENERATE_RESULTANT:
            out[j] = fallback.angles[j]
            degenerate.append(j)
        else:
            out[j] = angle
    return QuantumParams(wrap_angles(out), fallback.n_qubits, fallback.n_layers), degenerate


def arithmetic_mean_quantum(updates) -> QuantumParams:
    """Weighted arithmetic mean of raw angles, wrapped afterwards.

    This ignores periodicity on purpose: it is the baseline aggregation and
    the ablation arm that demonstrates why the circular mean exists.
    """
    ups = _sorted_updates(updates)
    weights = AggregationWeights.from_counts([u.distribution.count for u in ups])
    mat = np.stack([u.params.quantum.angles for u in ups])
    mean = (weights.weights[:, None] * mat).sum(axis=0)
    proto = ups[0].params.quantum
    return QuantumParams(wrap_angles(mean), proto.n_qubits, proto.n_layers)


def fedadam_update(
    phi_t: QuantumParams,
    phi_bar: QuantumParams,
    state: ServerOptimizerState,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eta: float = 0.001,
    eps: float = 1e-8,
) -> tuple[QuantumParams, ServerOptimizerState]:
    """Server Adam step driven by the gap between current and aggregated angles.

    The pseudo-gradient is the raw elementwise difference g = phi_t -
    phi_bar (both operands are canonically wrapped, no geodesic trickery),
    followed by the usual momentum update, bias correction, and step. The
    result is wrapped back to (-pi, pi].
    """
    if phi_t.angles.shape != phi_bar.angles.shape or phi_t.angles.shape != state.m.shape:
        raise ParameterError("parameter and state dimensions must match")
    if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
        raise ParameterError("beta1 and beta2 must lie in [0, 1)")
    if eta <= 0 or eps <= 0:
        raise ParameterError("eta and eps must be > 0")
    g = phi_t.angles - phi_bar.angles
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * g
    v = beta2 * state.v + (1.0 - beta2) * g**2
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    new_angles = phi_t.angles - eta * m_hat / (np.sqrt(v_hat) + eps)
    next_params = QuantumParams(wrap_angles(new_angles), phi_t.n_qubits, phi_t.n_layers)
    return next_params, ServerOptimizerState(m, v, t)
