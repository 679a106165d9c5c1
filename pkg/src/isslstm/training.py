"""Penalized free-run training of stacked LSTMs.

The objective is the free-run MSE over the training sequences plus a hinge
on every layer's stability term::

    loss = mse + rho * sum_l max(stability_term_l + gamma_margin, 0)

Gradients are exact: full-sequence BPTT for the data term and the
argmax-row subgradient of the infinity norms for the penalty. Training is
full-batch Adam with an early-stopping rule that only stores parameters that
improve the validation MSE *and* satisfy the stability condition on every
layer.
"""

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .data import atomic_write_text
from .iss import layer_condition, layer_input_bounds, network_condition
from .lstm import NetworkParams, forward
from .numerics import DomainError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    rho: float
    gamma_margin: float
    eta: float
    kappa_max: int
    kappa_val: int
    p_val: int
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    clip_norm: Optional[float] = None
    iss_gate: bool = True

    def __post_init__(self):
        if self.rho < 0:
            raise DomainError("rho must be >= 0")
        if not 0.0 <= self.gamma_margin < 1.0:
            raise DomainError("gamma_margin must lie in [0, 1)")
        if self.eta <= 0:
            raise DomainError("eta must be > 0")
        if self.kappa_val <= 0 or self.kappa_max <= 0 or self.p_val <= 0:
            raise DomainError("kappa_max, kappa_val and p_val must be positive")
        if self.kappa_val > self.kappa_max:
            raise DomainError("kappa_val must not exceed kappa_max")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise DomainError("Adam betas must lie in (0, 1)")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise DomainError("clip_norm must be positive when set")


@dataclass(frozen=True)
class CheckRecord:
    iteration: int
    train_loss: float
    val_mse: float
    conditions: tuple
    stored: bool


@dataclass
class TrainOutcome:
    best_params: NetworkParams
    best_val_mse: float
    iterations_run: int
    stop_reason: str  # "patience" | "max_iterations"
    iss_verdict: bool
    history: list = field(default_factory=list)


class NoStableCheckpoint(RuntimeError):
    """Training never stored a checkpoint satisfying the stability condition."""

    def __init__(self, last_params, history, iterations_run, stop_reason):
        super().__init__(
            f"no stable checkpoint after {iterations_run} iterations ({stop_reason})"
        )
        self.last_params = last_params
        self.history = history
        self.iterations_run = iterations_run
        self.stop_reason = stop_reason


# ---------------------------------------------------------------------------
# objective
# ---------------------------------------------------------------------------

def _pairs(data):
    if not data:
        raise DomainError("empty dataset")
    out = []
    for s in data:
        if isinstance(s, tuple):
            u, y = s
        else:
            u, y = s.inputs, s.outputs
        out.append((np.asarray(u, dtype=np.float64), np.asarray(y, dtype=np.float64)))
    return out


def mse(params, data):
    """Mean over sequences of the per-step mean squared output-error norm."""
    total = 0.0
    pairs = _pairs(data)
    for u, y in pairs:
        err = forward(params, u).outputs - y
        total += np.sum(err * err) / len(y)
    return total / len(pairs)


def stability_term(params, u_max, layer):
    """Condition value minus one for ``layer`` (0-based); negative means stable."""
    bounds = layer_input_bounds(params, u_max)
    return layer_condition(params.layers[layer], bounds[layer]).margin


def penalty(params, cfg, u_max):
    if cfg.rho == 0.0:
        return 0.0
    total = 0.0
    for p, um in zip(params.layers, layer_input_bounds(params, u_max)):
        total += max(layer_condition(p, um).margin + cfg.gamma_margin, 0.0)
    return cfg.rho * total


def loss(params, data, cfg, u_max):
    return mse(params, data) + penalty(params, cfg, u_max)


def _sigma_bar_grad(p, k, u_max):
    """sigma_bar of sigmoid gate ``k`` and its subgradient w.r.t. (W, R, b)."""
    rows = np.abs(p.W[k]) @ u_max + np.abs(p.R[k]).sum(axis=1) + np.abs(p.b[k])
    r = int(np.argmax(rows))  # lowest index on ties
    s = 1.0 / (1.0 + np.exp(-rows[r]))
    ds = s * (1.0 - s)
    dW = np.zeros_like(p.W)
    dR = np.zeros_like(p.R)
    db = np.zeros_like(p.b)
    dW[k, r] = ds * np.sign(p.W[k, r]) * u_max
    dR[k, r] = ds * np.sign(p.R[k, r])
    db[k, r] = ds * np.sign(p.b[k, r])
    return s, dW, dR, db


def penalty_gradients(params, cfg, u_max):
    """Penalty value and its subgradient, one (dW, dR, db) triple per layer."""
    value = 0.0
    grads = []
    for p, um in zip(params.layers, layer_input_bounds(params, u_max)):
        dW = np.zeros_like(p.W)
        dR = np.zeros_like(p.R)
        db = np.zeros_like(p.b)
        if cfg.rho > 0.0:
            sf, dWf, dRf, dbf = _sigma_bar_grad(p, 0, um)
            si, dWi, dRi, dbi = _sigma_bar_grad(p, 1, um)
            rg_rows = np.abs(p.R[3]).sum(axis=1)
            rr = int(np.argmax(rg_rows))
            rg = rg_rows[rr]
            hinge = sf + si * rg - 1.0 + cfg.gamma_margin
            if hinge > 0.0:
                value += cfg.rho * hinge
                dW += cfg.rho * (dWf + rg * dWi)
                dR += cfg.rho * (dRf + rg * dRi)
                db += cfg.rho * (dbf + rg * dbi)
                dR[3, rr] += cfg.rho * si * np.sign(p.R[3, rr])
        grads.append((dW, dR, db))
    return value, grads


def _sequence_grads(params, u, y, weight):
    """Data-term loss and gradients for one sequence, scaled by ``weight``."""
    cache = forward(params, u)
    err = cache.outputs - y
    value = weight * np.sum(err * err)
    dY = 2.0 * weight * err
    HL = cache.H[-1][1:]
    dW_y = dY.T @ HL
    db_y = dY.sum(axis=0)
    dH = np.zeros_like(cache.H[-1])
    dH[1:] = dY @ params.W_y
    layer_grads = [None] * len(params.layers)
    for l in range(len(params.layers) - 1, -1, -1):
        p = params.layers[l]
        dW, dR, db, dX, _, _ = _kernels.layer_backward(
            p.W, p.R, cache.inputs[l], cache.C[l], cache.H[l], cache.G[l], cache.TC[l], dH
        )
        layer_grads[l] = (dW, dR, db)
        if l > 0:
            dH = np.zeros_like(cache.H[l - 1])
            dH[1:] = dX
    return value, layer_grads, dW_y, db_y


def loss_and_gradients(params, data, cfg, u_max):
    """Loss value and its gradient (as a ``NetworkParams``) by BPTT.

    Sequences are reduced in their given order so the sum is reproducible.
    """
    pairs = _pairs(data)
    E = len(pairs)
    acc = np.zeros(params.size())
    value = 0.0
    for u, y in pairs:
        v, layer_grads, dW_y, db_y = _sequence_grads(params, u, y, 1.0 / (E * len(y)))
        value += v
        flat = []
        for dW, dR, db in layer_grads:
            flat.extend((dW.ravel(), dR.ravel(), db.ravel()))
        flat.extend((dW_y.ravel(), db_y.ravel()))
        acc += np.concatenate(flat)
    pen, pen_grads = penalty_gradients(params, cfg, u_max)
    if pen > 0.0:
        flat = []
        for dW, dR, db in pen_grads:
            flat.extend((dW.ravel(), dR.ravel(), db.ravel()))
        flat.extend((np.zeros(params.W_y.size), np.zeros(params.b_y.size)))
        acc += np.concatenate(flat)
    return value + pen, params.with_flat(acc)


def bptt_gradients(params, data, cfg, u_max):
    return loss_and_gradients(params, data, cfg, u_max)[1]


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

@dataclass
class AdamMoments:
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, size):
        return cls(np.zeros(size), np.zeros(size))


def adam_step(params, grads, moments, iteration, cfg):
    """One bias-corrected Adam update; ``iteration`` counts from 1."""
    theta = params.flatten()
    g = grads.flatten()
    if g.shape != theta.shape or moments.m.shape != theta.shape:
        raise DomainError("parameter, gradient and moment shapes differ")
    if cfg.clip_norm is not None:
        norm = np.linalg.norm(g)
        if norm > cfg.clip_norm:
            g = g * (cfg.clip_norm / norm)
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    m = b1 * moments.m + (1.0 - b1) * g
    v = b2 * moments.v + (1.0 - b2) * g * g
    m_hat = m / (1.0 - b1**iteration)
    v_hat = v / (1.0 - b2**iteration)
    theta = theta - cfg.eta * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    return params.with_flat(theta), AdamMoments(m, v)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def train(params0, train_data, val_data, cfg, u_max):
    """Full-batch Adam with stability-gated early stopping.

    Every ``kappa_val`` iterations the validation MSE and the per-layer
    conditions are evaluated. Parameters are stored when the validation MSE
    strictly improves on the stored best and (with ``cfg.iss_gate``) every
    layer satisfies the condition. Patience follows plain early stopping:
    training stops after ``p_val`` consecutive checks in which the
    validation MSE does not beat the lowest value seen so far, stable or
    not, or at ``kappa_max`` iterations.
    """
    if not train_data or not val_data:
        raise DomainError("training and validation sets must be nonempty")
    params = params0
    moments = AdamMoments.zeros(params.size())
    best = None
    best_val = np.inf
    seen_val = np.inf
    stale = 0
    history = []
    stop_reason = "max_iterations"
    it = 0
    for it in range(1, cfg.kappa_max + 1):
        value, grads = loss_and_gradients(params, train_data, cfg, u_max)
        params, moments = adam_step(params, grads, moments, it, cfg)
        if it % cfg.kappa_val:
            continue
        val = mse(params, val_data)
        report = network_condition(params, u_max)
        stored = bool(val < best_val and (report.verdict or not cfg.iss_gate))
        if stored:
            best, best_val = params, val
        if val < seen_val:
            seen_val, stale = val, 0
        else:
            stale += 1
        history.append(
            CheckRecord(it, float(value), float(val), tuple(r.condition_value for r in report.layers), stored)
        )
        log.info(
            "it %d loss %.6g val %.6g cond %s%s",
            it, value, val, ",".join(f"{r.condition_value:.4f}" for r in report.layers),
            " *" if stored else "",
        )
        if stale >= cfg.p_val:
            stop_reason = "patience"
            break
    if best is None:
        raise NoStableCheckpoint(params, history, it, stop_reason)
    verdict = network_condition(best, u_max).verdict
    return TrainOutcome(best, float(best_val), it, stop_reason, verdict, history)


def format_history_csv(history, n_layers):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "train_loss", "val_mse"] + [f"cond_l{l + 1}" for l in range(n_layers)] + ["stored"])
    for r in history:
        w.writerow([r.iteration, repr(r.train_loss), repr(r.val_mse)] + [repr(c) for c in r.conditions] + [int(r.stored)])
    return buf.getvalue()


def write_history_csv(history, path, n_layers):
    atomic_write_text(path, format_history_csv(history, n_layers))


def max_relative_error(a, b, floor=1e-9):
    """Worst entry of ``|a - b| / max(|a|, |b|)``; entries with ``|a - b| <= floor`` count as exact."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    diff = np.abs(a - b)
    scale = np.maximum(np.abs(a), np.abs(b))
    rel = np.where(diff <= floor, 0.0, diff / np.where(scale > 0, scale, 1.0))
    return float(np.max(rel)) if rel.size else 0.0


def finite_difference_gradient(fn, params, step=1e-6):
    """Central differences of ``fn(params)`` over every flat parameter."""
    theta = params.flatten()
    out = np.empty_like(theta)
    for k in range(theta.size):
        old = theta[k]
        theta[k] = old + step
        fp = fn(params.with_flat(theta))
        theta[k] = old - step
        fm = fn(params.with_flat(theta))
        theta[k] = old
        out[k] = (fp - fm) / (2.0 * step)
    return out


def kink_distance(params, u_max):
    """Smallest gap to a non-smooth point of the penalty: argmax-row ties
    in the infinity norms and zero entries inside the argmax rows."""
    gaps = [np.inf]
    for p, um in zip(params.layers, layer_input_bounds(params, u_max)):
        for k, rows in (
            (0, np.abs(p.W[0]) @ um + np.abs(p.R[0]).sum(1) + np.abs(p.b[0])),
            (1, np.abs(p.W[1]) @ um + np.abs(p.R[1]).sum(1) + np.abs(p.b[1])),
            (3, np.abs(p.R[3]).sum(1)),
        ):
            order = np.sort(rows)
            if rows.size > 1:
                gaps.append(order[-1] - order[-2])
            r = int(np.argmax(rows))
            entries = [p.R[k, r]] if k == 3 else [p.W[k, r], p.R[k, r], p.b[k, r : r + 1]]
            gaps.append(float(np.min(np.abs(np.concatenate(entries)))))
    return float(min(gaps))


def hinge_distance(params, cfg, u_max):
    """Smallest |stability_term + gamma_margin| over layers."""
    return min(
        abs(layer_condition(p, um).margin + cfg.gamma_margin)
        for p, um in zip(params.layers, layer_input_bounds(params, u_max))
    )


def random_audit_problem(seed, hidden=(3, 4), n_u=2, n_y=2, length=10, n_seq=2, scale=0.5):
    """Random network and data for a gradient audit, drawn until the point is
    at least 1e-8 away from every kink of the penalty."""
    from .lstm import ArchitectureSpec, LayerParams

    rng = np.random.default_rng(seed)
    arch = ArchitectureSpec(n_u, n_y, tuple(hidden))
    u_max = np.ones(n_u)
    probe = TrainConfig(rho=0.05, gamma_margin=0.05, eta=1e-3, kappa_max=1, kappa_val=1, p_val=1)
    while True:
        layers = tuple(
            LayerParams(
                rng.normal(0, scale, (4, n, m)), rng.normal(0, scale, (4, n, n)), rng.normal(0, scale, (4, n))
            )
            for m, n in zip(arch.layer_inputs(), arch.hidden)
        )
        params = NetworkParams(layers, rng.normal(0, scale, (n_y, hidden[-1])), rng.normal(0, scale, n_y))
        if kink_distance(params, u_max) > 1e-8 and hinge_distance(params, probe, u_max) > 1e-8:
            break
    data = [(rng.uniform(-1, 1, (length, n_u)), rng.normal(0, 0.5, (length, n_y))) for _ in range(n_seq)]
    return params, data, u_max


def gradient_audit(seed=0, rhos=(0.0, 0.05), gamma_margin=0.05, step=1e-6, floor=1e-9):
    """Max relative error of BPTT against central differences per ``rho``."""
    params, data, u_max = random_audit_problem(seed)
    result = {}
    for rho in rhos:
        cfg = TrainConfig(rho=rho, gamma_margin=gamma_margin, eta=1e-3, kappa_max=1, kappa_val=1, p_val=1)
        _, grads = loss_and_gradients(params, data, cfg, u_max)
        fd = finite_difference_gradient(lambda q: loss(q, data, cfg, u_max), params, step)
        result[rho] = max_relative_error(grads.flatten(), fd, floor)
    return result
