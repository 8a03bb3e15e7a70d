"""The hybrid client model and its local trainer.

A two-layer tanh MLP compresses F input features into Q values which are
angle-encoded into a Q-qubit statevector; L variational layers of RY
rotations plus a CNOT ring follow, and Pauli-Z expectations of the first C
qubits serve as class logits. Every gate here is real-valued, so the
statevector is kept in float64.

Gradients are exact: backprop through the dense layers and the two-point
shift rule through every rotation gate (two circuit evaluations per
parameter, the same recipe gradient hardware uses).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._angles import wrap_angles
from .data import ClientDataset, Dataset, ClassDistribution, class_distribution
from .errors import ParameterError

HALF_PI = 0.5 * math.pi


@dataclass
class ClassicalParams:
    """Dense-layer weights of the F -> H -> Q feature extractor."""

    w1: np.ndarray  # (H, F)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (Q, H)
    b2: np.ndarray  # (Q,)

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64)
        self.b2 = np.asarray(self.b2, dtype=np.float64)
        h, f = self.w1.shape
        q, h2 = self.w2.shape
        if h2 != h or self.b1.shape != (h,) or self.b2.shape != (q,):
            raise ParameterError("inconsistent layer shapes")
        for arr in (self.w1, self.b1, self.w2, self.b2):
            if not np.all(np.isfinite(arr)):
                raise ParameterError("parameters must be finite")

    @property
    def dims(self) -> tuple[int, int, int]:
        h, f = self.w1.shape
        return f, h, self.w2.shape[0]

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2.ravel(), self.b2])

    @classmethod
    def from_flat(cls, flat: np.ndarray, f: int, h: int, q: int) -> "ClassicalParams":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (f * h + h + h * q + q,):
            raise ParameterError("flat vector length does not match dimensions")
        o1 = f * h
        o2 = o1 + h
        o3 = o2 + h * q
        return cls(flat[:o1].reshape(h, f), flat[o1:o2], flat[o2:o3].reshape(q, h), flat[o3:])

    def copy(self) -> "ClassicalParams":
        return ClassicalParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())


@dataclass
class QuantumParams:
    """Variational rotation angles, layer-major: angles[l * Q + q].

    The canonical domain is (-pi, pi]; protocol boundaries (initialization,
    trained uploads, aggregated broadcasts) always wrap, while intermediate
    optimizer math may briefly leave the interval.
    """

    angles: np.ndarray
    n_qubits: int
    n_layers: int

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=np.float64)
        if self.angles.shape != (self.n_qubits * self.n_layers,):
            raise ParameterError("angle count must equal n_qubits * n_layers")
        if not np.all(np.isfinite(self.angles)):
            raise ParameterError("angles must be finite")

    def wrapped(self) -> "QuantumParams":
        return QuantumParams(wrap_angles(self.angles), self.n_qubits, self.n_layers)

    def copy(self) -> "QuantumParams":
        return QuantumParams(self.angles.copy(), self.n_qubits, self.n_layers)


@dataclass
class HybridParams:
    """Classical extractor plus quantum classifier, the unit clients train."""

    classical: ClassicalParams
    quantum: QuantumParams

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.classical.flatten(), self.quantum.angles])

    @classmethod
    def from_flat(cls, flat: np.ndarray, like: "HybridParams") -> "HybridParams":
        f, h, q = like.classical.dims
        n_classical = f * h + h + h * q + q
        classical = ClassicalParams.from_flat(flat[:n_classical], f, h, q)
        quantum = QuantumParams(flat[n_classical:].copy(), like.quantum.n_qubits, like.quantum.n_layers)
        return cls(classical, quantum)

    def copy(self) -> "HybridParams":
        return HybridParams(self.classical.copy(), self.quantum.copy())


@dataclass
class ClientUpdate:
    """What a client uploads after local training."""

    client_id: int
    params: HybridParams
    distribution: ClassDistribution
    train_loss: float


class MlpCache(NamedTuple):
    x: np.ndarray
    hidden: np.ndarray
    embedding: np.ndarray


def mlp_forward(classical: ClassicalParams, x: np.ndarray) -> tuple[np.ndarray, MlpCache]:
    """Embedding tanh(W2 tanh(W1 x + b1) + b2) plus the activations backprop needs."""
    x = np.asarray(x, dtype=np.float64)
    f, _, _ = classical.dims
    if x.shape != (f,):
        raise ParameterError(f"expected a length-{f} feature vector")
    hidden = np.tanh(classical.w1 @ x + classical.b1)
    embedding = np.tanh(classical.w2 @ hidden + classical.b2)
    return embedding, MlpCache(x, hidden, embedding)


def mlp_forward_batch(classical: ClassicalParams, xs: np.ndarray) -> np.ndarray:
    """Row-wise embeddings for a (n, F) feature matrix (inference path)."""
    hidden = np.tanh(xs @ classical.w1.T + classical.b1)
    return np.tanh(hidden @ classical.w2.T + classical.b2)


def mlp_backward(classical: ClassicalParams, cache: MlpCache, grad_embedding: np.ndarray) -> ClassicalParams:
    """Dense-layer gradients given dLoss/dEmbedding, as a ClassicalParams container."""
    d_pre2 = grad_embedding * (1.0 - cache.embedding**2)
    gw2 = np.outer(d_pre2, cache.hidden)
    d_hidden = classical.w2.T @ d_pre2
    d_pre1 = d_hidden * (1.0 - cache.hidden**2)
    gw1 = np.outer(d_pre1, cache.x)
    return ClassicalParams(gw1, d_pre1, gw2, d_pre2.copy())


def _apply_ry(state: np.ndarray, qubit: int, angle: float) -> None:
    """In-place RY rotation on one axis of the (2,)*Q state tensor."""
    c = math.cos(0.5 * angle)
    s = math.sin(0.5 * angle)
    view = np.moveaxis(state, qubit, 0)
    a0 = view[0].copy()
    a1 = view[1].copy()
    view[0] = c * a0 - s * a1
    view[1] = s * a0 + c * a1


def _apply_cnot(state: np.ndarray, control: int, target: int) -> None:
    """In-place CNOT: flip the target axis within the control=1 slice."""
    sl = [slice(None)] * state.ndim
    sl[control] = 1
    t_axis = target - 1 if target > control else target
    sub = state[tuple(sl)]
    state[tuple(sl)] = np.flip(sub, axis=t_axis).copy()


def _run_circuit(encoding_angles: np.ndarray, var_angles: np.ndarray, n_qubits: int, n_layers: int) -> np.ndarray:
    state = np.zeros((2,) * n_qubits, dtype=np.float64)
    state[(0,) * n_qubits] = 1.0
    for q in range(n_qubits):
        _apply_ry(state, q, encoding_angles[q])
    for layer in range(n_layers):
        base = layer * n_qubits
        for q in range(n_qubits):
            _apply_ry(state, q, var_angles[base + q])
        if n_qubits > 1:
            for q in range(n_qubits):
                _apply_cnot(state, q, (q + 1) % n_qubits)
    return state


def _z_expectations(state: np.ndarray) -> np.ndarray:
    probs = state**2
    n_qubits = state.ndim
    out = np.empty(n_qubits)
    for q in range(n_qubits):
        marginal = np.moveaxis(probs, q, 0).reshape(2, -1).sum(axis=1)
        out[q] = marginal[0] - marginal[1]
    return out


def statevector(embedding: np.ndarray, quantum: QuantumParams) -> np.ndarray:
    """Flat 2^Q statevector after encoding and all variational layers.

    Qubit 0 owns the most significant bit of the flat index. Exposed so the
    simulator can be checked against dense matrix products.
    """
    emb = np.asarray(embedding, dtype=np.float64)
    if emb.shape != (quantum.n_qubits,):
        raise ParameterError(f"expected a length-{quantum.n_qubits} embedding")
    state = _run_circuit(np.pi * emb, quantum.angles, quantum.n_qubits, quantum.n_layers)
    return state.reshape(-1)


def circuit_forward(embedding: np.ndarray, quantum: QuantumParams, n_classes: int | None = None) -> np.ndarray:
    """Class logits <Z_0> .. <Z_{C-1}> of the variational classifier.

    The embedding enters as per-qubit RY(pi * e_q) rotations of |0...0>,
    then each of the L layers applies per-qubit RY rotations followed by a
    CNOT ring q -> q+1 mod Q (skipped when Q = 1). Logits are Pauli-Z
    expectations, so each lies in [-1, 1].
    """
    q = quantum.n_qubits
    c = q if n_classes is None else n_classes
    if c > q:
        raise ParameterError(f"need n_classes <= {q} qubits")
    emb = np.asarray(embedding, dtype=np.float64)
    if emb.shape != (q,):
        raise ParameterError(f"expected a length-{q} embedding")
    state = _run_circuit(np.pi * emb, quantum.angles, q, quantum.n_layers)
    return _z_expectations(state)[:c]


def param_shift_grad(
    embedding: np.ndarray,
    quantum: QuantumParams,
    upstream: np.ndarray,
    n_classes: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact circuit gradients contracted with an upstream dLoss/dLogits.

    Every rotation angle theta obeys d<Z>/dtheta =
    (<Z>(theta + pi/2) - <Z>(theta - pi/2)) / 2, evaluated by re-running
    the circuit twice per parameter. The embedding gradient additionally
    carries the pi factor of the encoding map e -> RY(pi * e).
    """
    q = quantum.n_qubits
    c = q if n_classes is None else n_classes
    if c > q:
        raise ParameterError(f"need n_classes <= {q} qubits")
    emb = np.asarray(embedding, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (c,):
        raise ParameterError(f"expected a length-{c} upstream gradient")
    encoding = np.pi * emb
    var = quantum.angles

    def logits(enc_angles, var_angles):
        state = _run_circuit(enc_angles, var_angles, q, quantum.n_layers)
        return _z_expectations(state)[:c]

    grad_var = np.empty(len(var))
    shifted = var.copy()
    for k in range(len(var)):
        original = shifted[k]
        shifted[k] = original + HALF_PI
        plus = logits(encoding, shifted)
        shifted[k] = original - HALF_PI
        minus = logits(encoding, shifted)
        shifted[k] = original
        grad_var[k] = upstream @ (plus - minus) * 0.5

    grad_emb = np.empty(q)
    shifted = encoding.copy()
    for k in range(q):
        original = shifted[k]
        shifted[k] = original + HALF_PI
        plus = logits(shifted, var)
        shifted[k] = original - HALF_PI
        minus = logits(shifted, var)
        shifted[k] = original
        grad_emb[k] = np.pi * (upstream @ (plus - minus) * 0.5)
    return grad_var, grad_emb


def softmax_cross_entropy(logits: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    """Loss -log softmax(logits)[label] and its gradient w.r.t. the logits."""
    z = logits - logits.max()
    expz = np.exp(z)
    probs = expz / expz.sum()
    grad = probs.copy()
    grad[label] -= 1.0
    return -float(np.log(probs[label])), grad


def hybrid_loss_and_grads(
    features: np.ndarray,
    labels: np.ndarray,
    params: HybridParams,
    n_classes: int,
    prox_mu: float = 0.0,
    prox_anchor: HybridParams | None = None,
) -> tuple[float, ClassicalParams, np.ndarray]:
    """Batch-mean cross-entropy loss and exact gradients of the hybrid model.

    When prox_mu > 0 and an anchor is given, adds the proximal penalty
    (prox_mu / 2) * ||flatten(params) - flatten(anchor)||^2 over all
    parameters, classical and quantum alike. prox_mu = 0 skips the penalty
    entirely so the result is bit-identical with or without an anchor.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        raise ParameterError("batch must be non-empty")
    loss = 0.0
    grad_classical = np.zeros_like(params.classical.flatten())
    grad_quantum = np.zeros_like(params.quantum.angles)
    for x, y in zip(features, labels):
        emb, cache = mlp_forward(params.classical, x)
        logits = circuit_forward(emb, params.quantum, n_classes)
        sample_loss, upstream = softmax_cross_entropy(logits, int(y))
        gq, gemb = param_shift_grad(emb, params.quantum, upstream, n_classes)
        gc = mlp_backward(params.classical, cache, gemb)
        loss += sample_loss
        grad_classical += gc.flatten()
        grad_quantum += gq
    n = float(len(labels))
    loss /= n
    grad_classical /= n
    grad_quantum /= n
    if prox_mu > 0.0 and prox_anchor is not None:
        diff_c = params.classical.flatten() - prox_anchor.classical.flatten()
        diff_q = params.quantum.angles - prox_anchor.quantum.angles
        loss += 0.5 * prox_mu * (float(diff_c @ diff_c) + float(diff_q @ diff_q))
        grad_classical += prox_mu * diff_c
        grad_quantum += prox_mu * diff_q
    f, h, q = params.classical.dims
    return loss, ClassicalParams.from_flat(grad_classical, f, h, q), grad_quantum


@dataclass
class AdamState:
    """First/second moment buffers and step counter for local Adam."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_local_step(
    params: HybridParams,
    grads: np.ndarray,
    state: AdamState,
    lr: float = 0.001,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[HybridParams, AdamState]:
    """One bias-corrected Adam step over the flattened hybrid parameters."""
    flat = params.flatten()
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != flat.shape:
        raise ParameterError("gradient length does not match parameter count")
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grads
    v = beta2 * state.v + (1.0 - beta2) * grads**2
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    new_flat = flat - lr * m_hat / (np.sqrt(v_hat) + eps)
    return HybridParams.from_flat(new_flat, params), AdamState(m, v, t)


def epoch_batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled mini-batch index blocks covering 0..n-1 exactly once.

    The final block is kept even when shorter than batch_size, so every
    epoch touches every sample exactly once.
    """
    if batch_size < 1:
        raise ParameterError("batch_size must be >= 1")
    perm = rng.permutation(n)
    return [perm[start:start + batch_size] for start in range(0, n, batch_size)]


def local_train(
    client: ClientDataset,
    dataset: Dataset,
    init: HybridParams,
    epochs: int,
    batch_size: int,
    lr: float,
    prox_mu: float,
    seed: int,
) -> ClientUpdate:
    """Mini-batch Adam over the client's samples, from a fresh optimizer state.

    Sample order reshuffles every epoch from the seeded generator. When
    prox_mu > 0 the received model is the proximal anchor, which keeps the
    local objective from drifting far from the broadcast parameters. The
    returned update carries quantum angles wrapped to (-pi, pi], the
    client's class distribution, and the mean loss of the final epoch.
    """
    if epochs < 1:
        raise ParameterError("epochs must be >= 1")
    rng = np.random.default_rng(seed)
    params = init.copy()
    state = AdamState.zeros(len(init.flatten()))
    anchor = init if prox_mu > 0.0 else None
    xs = dataset.features[client.indices]
    ys = dataset.labels[client.indices]
    n = len(ys)
    last_epoch_loss = math.nan
    for _ in range(epochs):
        total = 0.0
        for batch in epoch_batches(n, batch_size, rng):
            loss, gc, gq = hybrid_loss_and_grads(
                xs[batch], ys[batch], params, dataset.n_classes, prox_mu, anchor
            )
            params, state = adam_local_step(params, np.concatenate([gc.flatten(), gq]), state, lr)
            total += loss * len(batch)
        last_epoch_loss = total / n
    trained = HybridParams(params.classical, params.quantum.wrapped())
    return ClientUpdate(client.client_id, trained, class_distribution(client, dataset), last_epoch_loss)


def init_params(features: int, hidden: int, qubits: int, layers: int, seed: int) -> HybridParams:
    """Seeded initialization: Glorot-uniform weights, zero biases, uniform angles.

    Angles land in (-pi, pi] by construction (pi minus a uniform [0, 2pi)
    draw), matching the canonical domain.
    """
    rng = np.random.default_rng(seed)
    lim1 = math.sqrt(6.0 / (features + hidden))
    lim2 = math.sqrt(6.0 / (hidden + qubits))
    classical = ClassicalParams(
        rng.uniform(-lim1, lim1, (hidden, features)),
        np.zeros(hidden),
        rng.uniform(-lim2, lim2, (qubits, hidden)),
        np.zeros(qubits),
    )
    angles = np.pi - rng.uniform(0.0, 2.0 * np.pi, qubits * layers)
    return HybridParams(classical, QuantumParams(angles, qubits, layers))
