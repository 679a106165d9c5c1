"""Stacked LSTM written as an explicit discrete-time state-space model.

Layer ``l`` carries a state ``x = [c; h]`` and is driven by ``u_tilde``: the
external input for the first layer and the freshly updated hidden state of
layer ``l - 1`` otherwise. A fully connected readout maps the last hidden
state to the output::

    f, i, o = sigmoid(W_j u_tilde + R_j h + b_j),  g = tanh(W_g u_tilde + R_g h + b_g)
    c+ = f * c + i * g
    h+ = o * tanh(c+)
    y  = W_y h+^(L) + b_y
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .numerics import DomainError, sigmoid

GATES = ("f", "i", "o", "g")
_GATE_INDEX = {g: k for k, g in enumerate(GATES)}


def _gate_slice(attr, gate):
    k = _GATE_INDEX[gate]
    return property(lambda self: getattr(self, attr)[k], doc=f"{attr}_{gate} view")


@dataclass(frozen=True)
class LayerParams:
    """Weights of one layer, stacked along a leading gate axis (f, i, o, g)."""

    W: np.ndarray  # (4, n_hu, n_in)
    R: np.ndarray  # (4, n_hu, n_hu)
    b: np.ndarray  # (4, n_hu)

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        R = np.asarray(self.R, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if W.ndim != 3 or W.shape[0] != 4:
            raise DomainError(f"W must have shape (4, n_hu, n_in), got {W.shape}")
        n = W.shape[1]
        if n == 0 or W.shape[2] == 0:
            raise DomainError("zero-sized layer")
        if R.shape != (4, n, n):
            raise DomainError(f"R must have shape (4, {n}, {n}), got {R.shape}")
        if b.shape != (4, n):
            raise DomainError(f"b must have shape (4, {n}), got {b.shape}")
        for name, a in (("W", W), ("R", R), ("b", b)):
            if not np.all(np.isfinite(a)):
                raise DomainError(f"layer {name} contains non-finite entries")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "b", b)

    @classmethod
    def from_gates(cls, **kw):
        """Build from ``W_f=..., R_f=..., b_f=...`` style keyword arrays."""
        W = np.stack([np.atleast_2d(np.asarray(kw[f"W_{g}"], float)) for g in GATES])
        R = np.stack([np.atleast_2d(np.asarray(kw[f"R_{g}"], float)) for g in GATES])
        b = np.stack([np.atleast_1d(np.asarray(kw[f"b_{g}"], float)) for g in GATES])
        return cls(W, R, b)

    @property
    def n_hidden(self):
        return self.W.shape[1]

    @property
    def n_in(self):
        return self.W.shape[2]

    W_f, W_i, W_o, W_g = (_gate_slice("W", g) for g in GATES)
    R_f, R_i, R_o, R_g = (_gate_slice("R", g) for g in GATES)
    b_f, b_i, b_o, b_g = (_gate_slice("b", g) for g in GATES)


@dataclass(frozen=True)
class ArchitectureSpec:
    n_u: int
    n_y: int
    hidden: tuple

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.n_u <= 0 or self.n_y <= 0 or not self.hidden or min(self.hidden) <= 0:
            raise DomainError(f"zero-sized layer in architecture {self}")

    @property
    def n_layers(self):
        return len(self.hidden)

    def layer_inputs(self):
        return (self.n_u,) + self.hidden[:-1]


@dataclass(frozen=True)
class NetworkParams:
    layers: tuple
    W_y: np.ndarray  # (n_y, n_hu^(L))
    b_y: np.ndarray  # (n_y,)

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise DomainError("network needs at least one layer")
        for l in range(1, len(layers)):
            if layers[l].n_in != layers[l - 1].n_hidden:
                raise DomainError(
                    f"layer {l + 1} expects {layers[l].n_in} inputs but layer {l} "
                    f"has {layers[l - 1].n_hidden} hidden units"
                )
        W_y = np.atleast_2d(np.asarray(self.W_y, dtype=np.float64))
        b_y = np.atleast_1d(np.asarray(self.b_y, dtype=np.float64))
        if W_y.shape[1] != layers[-1].n_hidden or b_y.shape != (W_y.shape[0],):
            raise DomainError(f"readout shapes {W_y.shape}, {b_y.shape} do not match")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "W_y", W_y)
        object.__setattr__(self, "b_y", b_y)

    @property
    def arch(self):
        return ArchitectureSpec(
            self.layers[0].n_in, self.W_y.shape[0], tuple(p.n_hidden for p in self.layers)
        )

    @property
    def n_u(self):
        return self.layers[0].n_in

    @property
    def n_y(self):
        return self.W_y.shape[0]

    def arrays(self):
        """All parameter arrays in canonical order."""
        out = []
        for p in self.layers:
            out.extend((p.W, p.R, p.b))
        out.extend((self.W_y, self.b_y))
        return out

    def flatten(self):
        return np.concatenate([a.ravel() for a in self.arrays()])

    def size(self):
        return sum(a.size for a in self.arrays())

    def with_flat(self, vec):
        """Same architecture, values taken from a flat vector."""
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.size(),):
            raise DomainError(f"flat vector has length {vec.size}, expected {self.size()}")
        pos = 0

        def take(shape):
            nonlocal pos
            k = int(np.prod(shape))
            out = vec[pos : pos + k].reshape(shape).copy()
            pos += k
            return out

        layers = [LayerParams(take(p.W.shape), take(p.R.shape), take(p.b.shape)) for p in self.layers]
        W_y = take(self.W_y.shape)
        b_y = take(self.b_y.shape)
        return NetworkParams(tuple(layers), W_y, b_y)

    def zeros_like(self):
        return self.with_flat(np.zeros(self.size()))


def param_count(arch):
    """Number of scalars: 4 n (n_in + n + 1) per layer plus n_y (n_L + 1)."""
    total = 0
    for n_in, n in zip(arch.layer_inputs(), arch.hidden):
        total += 4 * n * (n_in + n + 1)
    return total + arch.n_y * (arch.hidden[-1] + 1)


def zero_params(arch):
    layers = tuple(
        LayerParams(np.zeros((4, n, m)), np.zeros((4, n, n)), np.zeros((4, n)))
        for m, n in zip(arch.layer_inputs(), arch.hidden)
    )
    return NetworkParams(layers, np.zeros((arch.n_y, arch.hidden[-1])), np.zeros(arch.n_y))


def init_params(arch, rng_seed, gate_scale=1.0):
    """Uniform weights in [-r, r] with r = 1/sqrt(fan_in); zero biases.

    A gate unit's fan-in is ``n_in + n_hu`` (input plus recurrent
    connections); the readout's fan-in is ``n_hu^(L)``. ``gate_scale``
    shrinks the gate weight range to ``gate_scale * r``; values below 1
    start training closer to the stability region.
    """
    if not gate_scale > 0:
        raise DomainError("gate_scale must be positive")
    rng = np.random.default_rng(rng_seed)
    layers = []
    for m, n in zip(arch.layer_inputs(), arch.hidden):
        r = gate_scale / np.sqrt(m + n)
        W = rng.uniform(-r, r, size=(4, n, m))
        R = rng.uniform(-r, r, size=(4, n, n))
        layers.append(LayerParams(W, R, np.zeros((4, n))))
    r = 1.0 / np.sqrt(arch.hidden[-1])
    W_y = rng.uniform(-r, r, size=(arch.n_y, arch.hidden[-1]))
    return NetworkParams(tuple(layers), W_y, np.zeros(arch.n_y))


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LayerState:
    c: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=np.float64))
        h = np.atleast_1d(np.asarray(self.h, dtype=np.float64))
        if c.shape != h.shape or c.ndim != 1:
            raise DomainError(f"cell/hidden shapes differ: {c.shape} vs {h.shape}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "h", h)

    @property
    def x(self):
        return np.concatenate([self.c, self.h])


@dataclass(frozen=True)
class NetworkState:
    per_layer: tuple

    def __post_init__(self):
        object.__setattr__(self, "per_layer", tuple(self.per_layer))

    @property
    def x(self):
        return np.concatenate([s.x for s in self.per_layer])


def zero_state(params):
    """c_0 = 0, h_0 = 0 in every layer (the default initial state)."""
    return NetworkState(tuple(LayerState(np.zeros(p.n_hidden), np.zeros(p.n_hidden)) for p in params.layers))


def _check_state(params, state):
    if len(state.per_layer) != len(params.layers):
        raise DomainError(f"state has {len(state.per_layer)} layers, network has {len(params.layers)}")
    for l, (p, s) in enumerate(zip(params.layers, state.per_layer)):
        if s.c.shape != (p.n_hidden,):
            raise DomainError(f"layer {l + 1} state has size {s.c.size}, expected {p.n_hidden}")


# ---------------------------------------------------------------------------
# single steps (reference path, plain numpy)
# ---------------------------------------------------------------------------

class GateValues(NamedTuple):
    f: np.ndarray
    i: np.ndarray
    o: np.ndarray
    g: np.ndarray


def layer_step(p, s, u_tilde):
    """Advance one layer by one step; returns the new state and the gates."""
    u = np.atleast_1d(np.asarray(u_tilde, dtype=np.float64))
    if u.shape != (p.n_in,):
        raise DomainError(f"layer input has shape {u.shape}, expected ({p.n_in},)")
    if s.h.shape != (p.n_hidden,):
        raise DomainError(f"layer state has size {s.h.size}, expected {p.n_hidden}")
    if not np.all(np.isfinite(u)):
        raise DomainError("layer input contains non-finite entries")
    z = p.W @ u + p.R @ s.h + p.b
    gates = GateValues(sigmoid(z[0]), sigmoid(z[1]), sigmoid(z[2]), np.tanh(z[3]))
    c = gates.f * s.c + gates.i * gates.g
    h = gates.o * np.tanh(c)
    return LayerState(c, h), gates


def network_step(params, state, u):
    """One step of the whole network; returns the new state and the output."""
    _check_state(params, state)
    u_tilde = np.atleast_1d(np.asarray(u, dtype=np.float64))
    if u_tilde.shape != (params.n_u,):
        raise DomainError(f"input has shape {u_tilde.shape}, expected ({params.n_u},)")
    new = []
    for p, s in zip(params.layers, state.per_layer):
        s_next, _ = layer_step(p, s, u_tilde)
        new.append(s_next)
        u_tilde = s_next.h
    y = params.W_y @ u_tilde + params.b_y
    return NetworkState(tuple(new)), y


# ---------------------------------------------------------------------------
# sequences (kernel path)
# ---------------------------------------------------------------------------

@dataclass
class ForwardCache:
    """Everything a backward pass needs: per-layer inputs, states and gates."""

    inputs: list  # X^(l): (N, n_in^(l))
    C: list  # (N + 1, n)
    H: list  # (N + 1, n)
    G: list  # (N, 4, n)
    TC: list  # (N, n), tanh of the updated cell state
    outputs: np.ndarray  # (N, n_y)


def _input_array(inputs, n_u):
    X = getattr(inputs, "inputs", inputs)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None] if n_u == 1 else X[None, :]
    if X.ndim != 2 or X.shape[1] != n_u:
        raise DomainError(f"input sequence has {X.shape[-1]} channels, network expects {n_u}")
    return np.ascontiguousarray(X)


def forward(params, inputs, x0=None):
    """Free-run the network over an input sequence, caching intermediates."""
    X = _input_array(inputs, params.n_u)
    state = zero_state(params) if x0 is None else x0
    _check_state(params, state)
    cache = ForwardCache([], [], [], [], [], None)
    for p, s in zip(params.layers, state.per_layer):
        C, H, G, TC = _kernels.layer_forward(p.W, p.R, p.b, X, s.c, s.h)
        cache.inputs.append(X)
        cache.C.append(C)
        cache.H.append(H)
        cache.G.append(G)
        cache.TC.append(TC)
        X = np.ascontiguousarray(H[1:])
    cache.outputs = X @ params.W_y.T + params.b_y
    return cache


def simulate(params, x0, inputs):
    """Free-run simulation.

    Returns ``(outputs, trajectory)``: ``outputs[k]`` is the prediction made
    after feeding ``u_k`` and ``trajectory[k]`` the network state right after
    that step, so both have the sequence length.
    """
    cache = forward(params, inputs, x0)
    N = cache.outputs.shape[0]
    trajectory = [
        NetworkState(tuple(LayerState(C[k + 1], H[k + 1]) for C, H in zip(cache.C, cache.H)))
        for k in range(N)
    ]
    return cache.outputs, trajectory


def simulate_layer(p, x0, inputs):
    """Run a single layer; returns (C, H) of shape (N + 1, n) including x0."""
    X = _input_array(inputs, p.n_in)
    C, H, _, _ = _kernels.layer_forward(p.W, p.R, p.b, X, x0.c, x0.h)
    return C, H
