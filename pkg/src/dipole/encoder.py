"""Twin two-layer graph convolutional encoders.

Each node gets two embeddings from structurally identical towers with
independent weights: a polarized embedding meant to carry stance and an
invariant embedding meant to carry background attributes.  One tower
computes

    H = A_hat @ relu(A_hat @ X @ W1) @ W2

with A_hat the symmetrically normalized adjacency.  When the adjacency
is signed the two channels are propagated separately and concatenated
before the second weight matrix:

    H = [A+ @ relu(A+ @ X @ W1) , A- @ relu(A- @ X @ W1)] @ W2

so W2 has 2*d_h input rows in that case.

Gradients are computed in closed form (see ``backward``); ``grad_check``
verifies any loss-through-encoder pipeline against central finite
differences.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ValidationError

PARAM_NAMES = ("w1_po", "w2_po", "w1_in", "w2_in")


@dataclass
class EmbeddingPair:
    """Per-node polarized and invariant embeddings."""

    polarized: np.ndarray
    invariant: np.ndarray

    @property
    def full(self):
        """Concatenated view used by connect scoring and the classic index."""
        return np.hstack([self.polarized, self.invariant])


@dataclass
class EncoderParams:
    w1_po: np.ndarray
    w2_po: np.ndarray
    w1_in: np.ndarray
    w2_in: np.ndarray
    seed: int = 0
    signed: bool = False

    def as_dict(self):
        return {n: getattr(self, n) for n in PARAM_NAMES}

    def copy(self):
        return EncoderParams(*(getattr(self, n).copy() for n in PARAM_NAMES),
                             seed=self.seed, signed=self.signed)


def _xavier(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(d_x, d_h=64, d_po=32, d_in=32, seed=0, signed=False):
    """Xavier-uniform initialization; draw order is fixed so a seed pins
    every matrix."""
    for name, v in (("d_x", d_x), ("d_h", d_h), ("d_po", d_po), ("d_in", d_in)):
        if v <= 0:
            raise ConfigError(f"encoder dimension {name} must be positive, got {v}")
    rng = np.random.default_rng(seed)
    rows2 = 2 * d_h if signed else d_h
    return EncoderParams(
        w1_po=_xavier(rng, d_x, d_h),
        w2_po=_xavier(rng, rows2, d_po),
        w1_in=_xavier(rng, d_x, d_h),
        w2_in=_xavier(rng, rows2, d_in),
        seed=seed,
        signed=signed,
    )


def _forward_tower(adj, x, w1, w2):
    if adj.variant == "unsigned":
        p1 = adj.matrix @ x
        z1 = p1 @ w1
        a1 = np.maximum(z1, 0.0)
        p2 = adj.matrix @ a1
        h = p2 @ w2
        return h, {"p1": p1, "z1": z1, "p2": p2}
    p1p = adj.pos @ x
    p1n = adj.neg @ x
    z1p = p1p @ w1
    z1n = p1n @ w1
    a1p = np.maximum(z1p, 0.0)
    a1n = np.maximum(z1n, 0.0)
    p2 = np.hstack([adj.pos @ a1p, adj.neg @ a1n])
    h = p2 @ w2
    return h, {"p1p": p1p, "p1n": p1n, "z1p": z1p, "z1n": z1n, "p2": p2}


def _backward_tower(adj, cache, w1, w2, d_h_out, need_input_grad=False):
    if adj.variant == "unsigned":
        dw2 = cache["p2"].T @ d_h_out
        da1 = adj.matrix @ (d_h_out @ w2.T)
        dz1 = da1 * (cache["z1"] > 0)
        dw1 = cache["p1"].T @ dz1
        dx = adj.matrix @ (dz1 @ w1.T) if need_input_grad else None
        return dw1, dw2, dx
    dw2 = cache["p2"].T @ d_h_out
    dp2 = d_h_out @ w2.T
    half = dp2.shape[1] // 2
    da1p = adj.pos @ dp2[:, :half]
    da1n = adj.neg @ dp2[:, half:]
    dz1p = da1p * (cache["z1p"] > 0)
    dz1n = da1n * (cache["z1n"] > 0)
    dw1 = cache["p1p"].T @ dz1p + cache["p1n"].T @ dz1n
    dx = None
    if need_input_grad:
        dx = adj.pos @ (dz1p @ w1.T) + adj.neg @ (dz1n @ w1.T)
    return dw1, dw2, dx


def _check_dims(x, params):
    if x.shape[1] != params.w1_po.shape[0]:
        raise ValidationError(
            f"feature width {x.shape[1]} does not match encoder input "
            f"width {params.w1_po.shape[0]}")


def encode(adj, x, params):
    """Run both towers and return the embedding pair."""
    pair, _ = encode_with_cache(adj, x, params)
    return pair


def encode_with_cache(adj, x, params):
    _check_dims(x, params)
    if (adj.variant == "signed") != params.signed:
        raise ValidationError("adjacency variant does not match encoder parameters")
    h_po, cache_po = _forward_tower(adj, x, params.w1_po, params.w2_po)
    h_in, cache_in = _forward_tower(adj, x, params.w1_in, params.w2_in)
    return EmbeddingPair(h_po, h_in), {"po": cache_po, "in": cache_in}


def backward(adj, cache, params, d_po=None, d_in=None, need_input_grad=False):
    """Backpropagate loss gradients on the embeddings into the weights.

    d_po / d_in are dLoss/dH arrays for the two towers (None means the
    tower receives no gradient).  Returns a dict over PARAM_NAMES, plus
    key "x" for the input-feature gradient when requested.
    """
    grads = {}
    dx_total = None
    for tower, d_out in (("po", d_po), ("in", d_in)):
        w1 = getattr(params, f"w1_{tower}")
        w2 = getattr(params, f"w2_{tower}")
        if d_out is None:
            grads[f"w1_{tower}"] = np.zeros_like(w1)
            grads[f"w2_{tower}"] = np.zeros_like(w2)
            continue
        dw1, dw2, dx = _backward_tower(adj, cache[tower], w1, w2, d_out,
                                       need_input_grad=need_input_grad)
        grads[f"w1_{tower}"] = dw1
        grads[f"w2_{tower}"] = dw2
        if dx is not None:
            dx_total = dx if dx_total is None else dx_total + dx
    if need_input_grad:
        grads["x"] = dx_total if dx_total is not None else None
    return grads


@dataclass
class GradReport:
    max_rel_error: float
    per_param: dict


def grad_check(fn, params, step=1e-5):
    """Compare analytic gradients against central finite differences.

    ``fn(params) -> (value, grads)`` where grads maps parameter names to
    arrays shaped like the parameters.  Every entry of every gradient is
    checked; the relative error uses |a - b| / max(|a|, |b|, 1e-6).
    """
    _, grads = fn(params)
    report = {}
    worst = 0.0
    for name, g in grads.items():
        w = getattr(params, name)
        num = np.zeros_like(w)
        it = np.nditer(w, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = w[idx]
            w[idx] = orig + step
            up, _ = fn(params)
            w[idx] = orig - step
            down, _ = fn(params)
            w[idx] = orig
            num[idx] = (up - down) / (2.0 * step)
            it.iternext()
        denom = np.maximum(np.maximum(np.abs(g), np.abs(num)), 1e-6)
        err = float(np.max(np.abs(g - num) / denom)) if g.size else 0.0
        report[name] = err
        worst = max(worst, err)
    return GradReport(max_rel_error=worst, per_param=report)


MAGIC = b"DIPOLE-CKPT-1\n"


def save_params(params, path, kind="encoder", extra=None):
    """Serialize parameters: a magic line, one JSON header line, then the
    raw float64 little-endian bytes of each array in header order.  The
    byte stream is deterministic, so equal parameters give equal files."""
    arrays = [(n, getattr(params, n)) for n in PARAM_NAMES]
    header = {
        "kind": kind,
        "seed": int(params.seed),
        "signed": bool(params.signed),
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
    }
    if extra:
        header["extra"] = extra
    blob = json.dumps(header, sort_keys=True).encode() + b"\n"
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(blob)
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_params(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValidationError(f"{path}: not a parameter checkpoint")
        header = json.loads(fh.readline().decode())
        fields = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape))
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise ValidationError(f"{path}: truncated checkpoint")
            fields[spec["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
        if fh.read(1):
            raise ValidationError(f"{path}: trailing bytes in checkpoint")
    missing = [n for n in PARAM_NAMES if n not in fields]
    if missing:
        raise ValidationError(f"{path}: checkpoint missing arrays {missing}")
    return EncoderParams(**fields, seed=header["seed"], signed=header["signed"])


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()
