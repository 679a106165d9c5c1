"""Lossless JSON checkpoints and flat YAML training configs.

Every float in a checkpoint is stored as a hex string (``float.hex``), so
a save/load round trip is bit-exact and the stability verdict can be
re-derived from the file alone.
"""

import json
import os
import time
from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np
import yaml

from .data import NormStats, atomic_write_text
from .iss import network_condition
from .lstm import ArchitectureSpec, LayerParams, NetworkParams
from .numerics import DomainError
from .training import TrainConfig

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Unreadable, corrupt or incompatible checkpoint."""


class ConfigError(ValueError):
    """Missing, unknown or ill-typed configuration keys."""


# ---------------------------------------------------------------------------
# run config
# ---------------------------------------------------------------------------

# Optional keys and their documented defaults (Adam constants only).
ADAM_DEFAULTS = {"adam_beta1": 0.9, "adam_beta2": 0.999, "adam_eps": 1e-8}
REQUIRED_KEYS = (
    "n_u", "n_y", "hidden", "rho", "gamma_margin", "eta", "kappa_max", "kappa_val", "p_val",
    "seed", "init_scale", "clip_norm", "iss_gate",
)


@dataclass(frozen=True)
class RunConfig:
    arch: ArchitectureSpec
    train: TrainConfig
    init_scale: float

    def to_dict(self):
        t = asdict(self.train)
        out = {"n_u": self.arch.n_u, "n_y": self.arch.n_y, "hidden": list(self.arch.hidden)}
        out.update({k: t[k] for k in ("rho", "gamma_margin", "eta", "kappa_max", "kappa_val", "p_val", "seed")})
        out["init_scale"] = self.init_scale
        out["clip_norm"] = t["clip_norm"]
        out["iss_gate"] = t["iss_gate"]
        out.update({k: t[k] for k in ADAM_DEFAULTS})
        return out


def config_from_dict(raw, source="config"):
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: expected a mapping of keys to values")
    unknown = set(raw) - set(REQUIRED_KEYS) - set(ADAM_DEFAULTS)
    if unknown:
        raise ConfigError(f"{source}: unknown key(s) {', '.join(sorted(unknown))}")
    missing = [k for k in REQUIRED_KEYS if k not in raw]
    if missing:
        raise ConfigError(f"{source}: missing key(s) {', '.join(missing)}")
    if not isinstance(raw["iss_gate"], bool):
        raise ConfigError(f"{source}: iss_gate must be true or false")

    def num(key, kind=float, value=None):
        v = raw[key] if value is None else value
        if isinstance(v, bool):
            raise ConfigError(f"{source}: {key} must be a number, got {v!r}")
        try:
            return kind(v)
        except (TypeError, ValueError):
            raise ConfigError(f"{source}: {key} must be a number, got {v!r}") from None

    hidden = raw["hidden"]
    if not isinstance(hidden, list):
        raise ConfigError(f"{source}: hidden must be a list of layer widths")
    try:
        arch = ArchitectureSpec(num("n_u", int), num("n_y", int), tuple(num("hidden", int, h) for h in hidden))
        clip = raw["clip_norm"]
        cfg = TrainConfig(
            rho=num("rho"), gamma_margin=num("gamma_margin"), eta=num("eta"),
            kappa_max=num("kappa_max", int), kappa_val=num("kappa_val", int), p_val=num("p_val", int),
            seed=num("seed", int), clip_norm=None if clip is None else num("clip_norm"), iss_gate=raw["iss_gate"],
            **{k: num(k, float, raw.get(k, v)) for k, v in ADAM_DEFAULTS.items()},
        )
    except DomainError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    scale = num("init_scale")
    if not scale > 0:
        raise ConfigError(f"{source}: init_scale must be positive")
    return RunConfig(arch, cfg, scale)


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(raw, str(path))


def dump_config(rc):
    return yaml.safe_dump(rc.to_dict(), sort_keys=False)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def _enc(a):
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "data": [float(v).hex() for v in a.ravel()]}


def _dec(obj, where):
    try:
        shape = tuple(int(s) for s in obj["shape"])
        flat = np.array([float.fromhex(v) for v in obj["data"]], dtype=np.float64)
        return flat.reshape(shape)
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"bad array at {where}: {exc}") from None


@dataclass
class Checkpoint:
    params: NetworkParams
    norm: Optional[NormStats]
    config: Optional[dict]
    u_max: np.ndarray
    provenance: dict

    @property
    def arch(self):
        return self.params.arch

    def iss_report(self):
        return network_condition(self.params, self.u_max)


def _timestamp():
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch and epoch.isdigit() else int(time.time())
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def make_checkpoint(params, norm=None, config=None, u_max=None, seed=None):
    u = np.ones(params.n_u) if u_max is None else np.asarray(u_max, dtype=np.float64)
    return Checkpoint(params, norm, config, u, {"seed": seed, "timestamp": _timestamp()})


def to_json(ck):
    p = ck.params
    report = ck.iss_report()
    doc = {
        "format_version": FORMAT_VERSION,
        "architecture": {"n_layers": p.arch.n_layers, "hidden": list(p.arch.hidden), "n_u": p.n_u, "n_y": p.n_y},
        "params": {
            "layers": [{"W": _enc(l.W), "R": _enc(l.R), "b": _enc(l.b)} for l in p.layers],
            "W_y": _enc(p.W_y),
            "b_y": _enc(p.b_y),
        },
        "u_max": _enc(ck.u_max),
        "norm": None if ck.norm is None else {f.name: _enc(getattr(ck.norm, f.name)) for f in fields(NormStats)},
        "config": ck.config,
        "iss": {
            "verdict": report.verdict,
            "condition_values": [r.condition_value for r in report.layers],
            "margins": [r.margin for r in report.layers],
        },
        "provenance": ck.provenance,
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def from_json(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise CheckpointError("top level must be an object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format_version {version!r} (expected {FORMAT_VERSION})")
    try:
        arch = doc["architecture"]
        pd = doc["params"]
        layers = tuple(
            LayerParams(_dec(l["W"], f"layer {i} W"), _dec(l["R"], f"layer {i} R"), _dec(l["b"], f"layer {i} b"))
            for i, l in enumerate(pd["layers"], start=1)
        )
        params = NetworkParams(layers, _dec(pd["W_y"], "W_y"), _dec(pd["b_y"], "b_y"))
        u_max = _dec(doc["u_max"], "u_max")
        nd = doc.get("norm")
        norm = None if nd is None else NormStats(**{f.name: _dec(nd[f.name], f"norm {f.name}") for f in fields(NormStats)})
        spec = ArchitectureSpec(int(arch["n_u"]), int(arch["n_y"]), tuple(int(h) for h in arch["hidden"]))
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from None
    if params.arch != spec or int(arch.get("n_layers", -1)) != spec.n_layers:
        raise CheckpointError("architecture block does not match the stored arrays")
    if u_max.shape != (spec.n_u,):
        raise CheckpointError("u_max length does not match n_u")
    return Checkpoint(params, norm, doc.get("config"), u_max, doc.get("provenance") or {})


def save_checkpoint(ck, path):
    atomic_write_text(path, to_json(ck))


def load_checkpoint(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except UnicodeDecodeError as exc:
        raise CheckpointError(f"{path}: {exc}") from None
    try:
        return from_json(text)
    except CheckpointError as exc:
        raise CheckpointError(f"{path}: {exc}") from None
