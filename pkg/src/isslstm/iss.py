"""Infinity-norm input-to-state stability analysis of LSTM layers.

For gate ``j`` in {f, i, o} the worst-case activation over the admissible
input box ``|u_tilde| <= u_max`` and hidden states in (-1, 1) is::

    sigma_bar_j = sigmoid( max_rows( |W_j| u_max + |R_j| 1 + |b_j| ) )

and a layer is ISS in the infinity norm when::

    rho_bar = sigma_bar_f + sigma_bar_i * ||R_g||_inf < 1.

The norms of ``[||c_k||, ||h_k||]`` then obey the 2-state linear recursion
with matrices ``A``, ``B_u``, ``B_b`` built by :func:`bound_matrices`, whose
infinity norm is exactly ``rho_bar``; iterating it gives the decay term
``beta`` and the gains ``gamma_u``, ``gamma_b``.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .numerics import DomainError, inf_norm_mat, matrix_two_norm, sigmoid

_SIGMOID_GATES = {"f": 0, "i": 1, "o": 2}


class UnstableLayerError(ValueError):
    """The ISS bound is undefined because rho_bar >= 1."""


@dataclass(frozen=True)
class GateBounds:
    sigma_f: float
    sigma_i: float
    sigma_o: float


@dataclass(frozen=True)
class IssLayerReport:
    bounds: GateBounds
    rg_inf_norm: float
    rg_two_norm: float
    condition_value: float
    margin: float
    iss2_value: float
    satisfied_inf: bool
    satisfied_2: bool


@dataclass(frozen=True)
class IssEnvelope:
    rho_bar: float
    A: np.ndarray  # (2, 2)
    Bu: np.ndarray  # (2,)
    Bb: np.ndarray  # (2,)
    Bu_inf: float
    Bb_inf: float
    bg_inf: float


@dataclass(frozen=True)
class IssReport:
    layers: tuple
    verdict: bool
    envelopes: tuple = ()  # IssEnvelope or None per layer

    def to_text(self):
        lines = [f"ISS-inf verdict: {'PASS' if self.verdict else 'FAIL'}"]
        for l, r in enumerate(self.layers, start=1):
            b = r.bounds
            lines.append(
                f"layer {l}: sigma_f={b.sigma_f:.6f} sigma_i={b.sigma_i:.6f} sigma_o={b.sigma_o:.6f} "
                f"|R_g|inf={r.rg_inf_norm:.6f} condition={r.condition_value:.6f} "
                f"margin={r.margin:+.6f} {'PASS' if r.satisfied_inf else 'FAIL'}"
            )
            lines.append(
                f"         iss2 value={r.iss2_value:.6f} ({'holds' if r.satisfied_2 else 'violated'})"
            )
            env = self.envelopes[l - 1] if self.envelopes else None
            if env is not None:
                lines.append(
                    f"         beta(x0,k)=x0*{env.rho_bar:.6f}^k  gamma_u(s)={env.Bu_inf / (1 - env.rho_bar):.6f}*s  "
                    f"gamma_b(s)={env.Bb_inf / (1 - env.rho_bar):.6f}*s  |b_g|inf={env.bg_inf:.6f}"
                )
        return "\n".join(lines) + "\n"

    def to_keyvalue(self):
        """Flat ``key = value`` lines; floats use ``repr`` so they round-trip."""
        out = [f"verdict = {str(self.verdict).lower()}", f"n_layers = {len(self.layers)}"]
        for l, r in enumerate(self.layers, start=1):
            p = f"layer{l}."
            out += [
                f"{p}sigma_f = {r.bounds.sigma_f!r}",
                f"{p}sigma_i = {r.bounds.sigma_i!r}",
                f"{p}sigma_o = {r.bounds.sigma_o!r}",
                f"{p}rg_inf_norm = {r.rg_inf_norm!r}",
                f"{p}rg_two_norm = {r.rg_two_norm!r}",
                f"{p}condition_value = {r.condition_value!r}",
                f"{p}margin = {r.margin!r}",
                f"{p}iss2_value = {r.iss2_value!r}",
                f"{p}satisfied_inf = {str(r.satisfied_inf).lower()}",
                f"{p}satisfied_2 = {str(r.satisfied_2).lower()}",
            ]
        return "\n".join(out) + "\n"

    @classmethod
    def from_keyvalue(cls, text):
        kv = {}
        for line in text.splitlines():
            if line.strip():
                k, v = line.split("=", 1)
                kv[k.strip()] = v.strip()
        layers = []
        for l in range(1, int(kv["n_layers"]) + 1):
            p = f"layer{l}."
            layers.append(
                IssLayerReport(
                    GateBounds(float(kv[p + "sigma_f"]), float(kv[p + "sigma_i"]), float(kv[p + "sigma_o"])),
                    float(kv[p + "rg_inf_norm"]),
                    float(kv[p + "rg_two_norm"]),
                    float(kv[p + "condition_value"]),
                    float(kv[p + "margin"]),
                    float(kv[p + "iss2_value"]),
                    kv[p + "satisfied_inf"] == "true",
                    kv[p + "satisfied_2"] == "true",
                )
            )
        return cls(tuple(layers), kv["verdict"] == "true")


def _check_umax(p, u_max):
    u = np.atleast_1d(np.asarray(u_max, dtype=np.float64))
    if u.shape != (p.n_in,):
        raise DomainError(f"u_max has shape {u.shape}, layer expects ({p.n_in},)")
    if np.any(u < 0) or not np.all(np.isfinite(u)):
        raise DomainError("u_max must be finite and nonnegative")
    return u


def gate_row_sums(p, gate, u_max, signed=False):
    """Row sums of the bracket ``[W_j u_max, R_j, b_j]`` in absolute value.

    With ``signed=False`` (default) the input column is ``|W_j| u_max``, the
    exact supremum of ``|W_j u|`` over the input box. ``signed=True`` uses
    ``|W_j u_max|`` instead; that value can be smaller than the true
    supremum when a row of ``W_j`` mixes signs and is kept only for
    comparison.
    """
    k = _SIGMOID_GATES[gate]
    u = _check_umax(p, u_max)
    W = p.W[k]
    col = np.abs(W @ u) if signed else np.abs(W) @ u
    return col + np.abs(p.R[k]).sum(axis=1) + np.abs(p.b[k])


def gate_bound(p, gate, u_max, signed=False):
    """Upper bound on every component of gate ``gate`` (one of f, i, o)."""
    return float(sigmoid(np.max(gate_row_sums(p, gate, u_max, signed))))


def gate_bounds(p, u_max, signed=False):
    return GateBounds(*(gate_bound(p, g, u_max, signed) for g in "fio"))


def layer_input_bounds(params, u_max):
    """Per-layer input bound: u_max for the first layer, ones afterwards."""
    first = np.atleast_1d(np.asarray(u_max, dtype=np.float64))
    return [first] + [np.ones(p.n_in) for p in params.layers[1:]]


def layer_condition(p, u_max):
    b = gate_bounds(p, u_max)
    rg_inf = inf_norm_mat(p.R_g)
    rg_two = matrix_two_norm(p.R_g)
    cond = b.sigma_f + b.sigma_i * rg_inf
    iss2 = b.sigma_f + b.sigma_o * b.sigma_i * rg_two
    return IssLayerReport(b, rg_inf, rg_two, cond, cond - 1.0, iss2, cond < 1.0, iss2 < 1.0)


def network_condition(params, u_max):
    """Cascade check: the network passes iff every layer passes."""
    reports = []
    envs = []
    for p, um in zip(params.layers, layer_input_bounds(params, u_max)):
        r = layer_condition(p, um)
        reports.append(r)
        envs.append(envelope(p, um) if r.satisfied_inf else None)
    return IssReport(tuple(reports), all(r.satisfied_inf for r in reports), tuple(envs))


def bound_matrices(p, u_max):
    """``A``, ``B_u``, ``B_b`` of the norm recursion; defined for any layer."""
    b = gate_bounds(p, u_max)
    rg = inf_norm_mat(p.R_g)
    wg = inf_norm_mat(p.W_g)
    sf, si, so = b.sigma_f, b.sigma_i, b.sigma_o
    A = np.array([[sf, si * rg], [so * sf, so * si * rg]])
    Bu = np.array([si * wg, so * si * wg])
    Bb = np.array([si, so * si])
    return A, Bu, Bb


def envelope(p, u_max):
    b = gate_bounds(p, u_max)
    rho = b.sigma_f + b.sigma_i * inf_norm_mat(p.R_g)
    if rho >= 1.0:
        raise UnstableLayerError(f"unstable layer: rho_bar = {rho:.6g} >= 1")
    A, Bu, Bb = bound_matrices(p, u_max)
    return IssEnvelope(
        rho, A, Bu, Bb, float(np.max(np.abs(Bu))), float(np.max(np.abs(Bb))), float(np.max(np.abs(p.b_g)))
    )


def beta_fn(env, x0_inf, k):
    return env.rho_bar**k * x0_inf


def _require_stable(env):
    if env.rho_bar >= 1.0:
        raise UnstableLayerError(f"unstable layer: rho_bar = {env.rho_bar:.6g} >= 1")


def gamma_u_fn(env, u_sup_inf):
    _require_stable(env)
    return env.Bu_inf * u_sup_inf / (1.0 - env.rho_bar)


def gamma_b_fn(env, bg_inf):
    _require_stable(env)
    return env.Bb_inf * bg_inf / (1.0 - env.rho_bar)


def iss_bound(env, x0_inf, k, u_sup_inf, bg_inf=None):
    """``beta + gamma_u + gamma_b``; ``bg_inf`` defaults to the layer's own."""
    bg = env.bg_inf if bg_inf is None else bg_inf
    return beta_fn(env, x0_inf, k) + gamma_u_fn(env, u_sup_inf) + gamma_b_fn(env, bg)


def _norm_inputs(u_norms, horizon):
    u = np.asarray(u_norms, dtype=np.float64)
    if u.ndim != 1 or u.size < horizon:
        raise DomainError(f"need {horizon} input norms, got shape {u.shape}")
    return np.ascontiguousarray(u[:horizon])


def bound_trajectory(u_norms, p, x0, horizon, u_max):
    """Elementwise envelope on ``[||c_k||_inf, ||h_k||_inf]`` for k = 0..horizon."""
    u = _norm_inputs(u_norms, horizon)
    A, Bu, Bb = bound_matrices(p, u_max)
    e0 = np.array([[np.max(np.abs(x0.c)), np.max(np.abs(x0.h))]])
    bg = float(np.max(np.abs(p.b_g)))
    return _kernels.envelope_recursion(A, Bu, Bb, bg, e0, u[None, :])[0]


def scalar_bound_trajectory(u_norms, p, x0, horizon, u_max):
    """Scalar bound ``s_k = rho_bar s_{k-1} + |B_u| |u| + |B_b| |b_g|`` on ``||x_k||_inf``."""
    u = _norm_inputs(u_norms, horizon)
    env = envelope(p, u_max)
    s = np.empty(horizon + 1)
    s[0] = max(np.max(np.abs(x0.c)), np.max(np.abs(x0.h)))
    drift = env.Bb_inf * env.bg_inf
    for k in range(horizon):
        s[k + 1] = env.rho_bar * s[k] + env.Bu_inf * u[k] + drift
    return s
