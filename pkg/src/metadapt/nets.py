"""Minimal dense network engine: ReLU MLPs, SGD with a spectral-norm bound,
and damped least-squares solves with coefficient clipping.

Everything is plain numpy on float64. Networks are treated as immutable
snapshots: training steps return new instances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Mlp:
    """Fully-connected ReLU network (linear final layer).

    weights[i] has shape (layer_dims[i+1], layer_dims[i]); biases[i] has
    shape (layer_dims[i+1],). spectral_bound=None disables normalization
    (used for the discriminator).
    """

    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    spectral_bound: float | None = 2.0
    meta: dict = field(default_factory=dict)

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]

    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def flat_params(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.weights + self.biases])

    def copy(self) -> "Mlp":
        return Mlp(
            list(self.layer_dims),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.spectral_bound,
            dict(self.meta),
        )


@dataclass
class Gradients:
    """Parameter gradients, shape-congruent with the Mlp they differentiate."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    loss: float = 0.0

    def max_abs(self) -> float:
        return max(
            [float(np.max(np.abs(a))) if a.size else 0.0 for a in self.weights + self.biases]
        )


@dataclass
class LsqProblem:
    """Damped least squares with norm clipping.

    phi: (n, d) design matrix of stacked feature rows; targets: (n,) or
    (n, m) with one column per output axis; the clip applies to the norm of
    the full stacked solution.
    """

    phi: np.ndarray
    targets: np.ndarray
    damping: float = 1e-6
    clip_gamma: float = 10.0


def mlp_init(layer_dims: list[int], spectral_bound: float | None = 2.0,
             seed: int | None = 0) -> Mlp:
    """He-uniform (fan-in) initialization, biases zero, then normalized."""
    if len(layer_dims) < 2:
        raise ValueError("need at least input and output dims")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for din, dout in zip(layer_dims[:-1], layer_dims[1:]):
        limit = np.sqrt(6.0 / din)
        weights.append(rng.uniform(-limit, limit, size=(dout, din)))
        biases.append(np.zeros(dout))
    net = Mlp(list(layer_dims), weights, biases, spectral_bound)
    return spectral_normalize(net)


def mlp_zero(layer_dims: list[int], spectral_bound: float | None = 2.0) -> Mlp:
    """All-zero network; forward() is identically zero for any input."""
    weights = [np.zeros((dout, din)) for din, dout in zip(layer_dims[:-1], layer_dims[1:])]
    biases = [np.zeros(dout) for dout in layer_dims[1:]]
    return Mlp(list(layer_dims), weights, biases, spectral_bound, {"zero_init": True})


def forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    """Affine + ReLU composition, final layer linear.

    x is (in_dim,) or (n, in_dim); output matches (out_dim,) or (n, out_dim).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != net.in_dim:
        raise ValueError(f"input dim {h.shape[1]} != expected {net.in_dim}")
    n_layers = len(net.weights)
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w.T + b
        if i < n_layers - 1:
            h = np.maximum(h, 0.0)
    return h[0] if single else h


def _forward_cached(net: Mlp, x: np.ndarray) -> list[np.ndarray]:
    """Returns layer inputs [x, h1, ..., h_{L-1}] (post-activation)."""
    acts = [x]
    h = x
    n_layers = len(net.weights)
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w.T + b
        if i < n_layers - 1:
            h = np.maximum(h, 0.0)
            acts.append(h)
    return acts


def backward(net: Mlp, x: np.ndarray, upstream: np.ndarray) -> Gradients:
    """Exact reverse-mode gradients of forward() contracted with `upstream`.

    upstream is dL/d(output), shape (out_dim,) or (n, out_dim); batch
    gradients are summed over samples. ReLU subgradient at 0 is 0.
    """
    grads, _ = backward_with_input(net, x, upstream)
    return grads


def backward_with_input(net: Mlp, x: np.ndarray,
                        upstream: np.ndarray) -> tuple[Gradients, np.ndarray]:
    """backward() that also returns dL/dx (needed by the adversarial path)."""
    x = np.asarray(x, dtype=float)
    upstream = np.asarray(upstream, dtype=float)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    ub = upstream[None, :] if upstream.ndim == 1 else upstream
    if xb.shape[1] != net.in_dim:
        raise ValueError(f"input dim {xb.shape[1]} != expected {net.in_dim}")
    if ub.shape != (xb.shape[0], net.out_dim):
        raise ValueError(f"upstream shape {ub.shape} != {(xb.shape[0], net.out_dim)}")

    acts = _forward_cached(net, xb)
    gw = [None] * len(net.weights)
    gb = [None] * len(net.biases)
    delta = ub
    for i in range(len(net.weights) - 1, -1, -1):
        gw[i] = delta.T @ acts[i]
        gb[i] = delta.sum(axis=0)
        delta = delta @ net.weights[i]
        if i > 0:
            # acts[i] is post-ReLU of layer i-1; strict > keeps ReLU'(0) = 0
            delta = delta * (acts[i] > 0.0)
    dx = delta[0] if single else delta
    return Gradients(gw, gb), dx


def grads_zero(net: Mlp) -> Gradients:
    return Gradients([np.zeros_like(w) for w in net.weights],
                     [np.zeros_like(b) for b in net.biases])


def grads_axpy(acc: Gradients, other: Gradients, scale: float = 1.0) -> Gradients:
    """acc += scale * other, in place on acc."""
    for a, o in zip(acc.weights, other.weights):
        a += scale * o
    for a, o in zip(acc.biases, other.biases):
        a += scale * o
    acc.loss += scale * other.loss
    return acc


def sgd_step(net: Mlp, grads: Gradients, lr: float, step_scale: float = 1.0) -> Mlp:
    """theta <- theta - (lr * step_scale) * grad, then spectral normalization.

    step_scale carries the proximal damping of a movement cost (see
    training.ssml_round); it is 1.0 for a plain step.
    """
    if lr < 0:
        raise ValueError("lr must be non-negative")
    for g in grads.weights + grads.biases:
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite gradient; step rejected")
    eff = lr * step_scale
    weights = [w - eff * g for w, g in zip(net.weights, grads.weights)]
    biases = [b - eff * g for b, g in zip(net.biases, grads.biases)]
    return spectral_normalize(Mlp(net.layer_dims, weights, biases, net.spectral_bound, net.meta))


def top_singular_value(w: np.ndarray, tol: float = 1e-12, max_iter: int = 1000) -> float:
    """Largest singular value by power iteration on W^T W.

    Deterministic all-ones start; runs at least 30 iterations, then stops
    once the estimate's relative change is below tol.
    """
    if w.size == 0:
        return 0.0
    v = np.ones(w.shape[1]) / np.sqrt(w.shape[1])
    sigma = 0.0
    for it in range(max_iter):
        u = w @ v
        nu = np.linalg.norm(u)
        if nu == 0.0:
            return 0.0
        u /= nu
        v = w.T @ u
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return 0.0
        v /= nv
        new_sigma = float(u @ (w @ v))
        if it >= 30 and abs(new_sigma - sigma) <= tol * max(1.0, new_sigma):
            return new_sigma
        sigma = new_sigma
    return sigma


def spectral_normalize(net: Mlp) -> Mlp:
    """Scale any layer whose top singular value exceeds the bound back onto it.

    Layers already inside the bound are passed through untouched (bitwise).
    """
    if net.spectral_bound is None:
        return net
    bound = float(net.spectral_bound)
    weights = []
    for w in net.weights:
        sigma = top_singular_value(w)
        weights.append(w * (bound / sigma) if sigma > bound else w)
    return Mlp(net.layer_dims, weights, list(net.biases), net.spectral_bound, net.meta)


def solve_lsq_clipped(prob: LsqProblem) -> np.ndarray:
    """argmin ||y - Phi a||^2 + damping ||a||^2 per target column, then rescale
    the stacked solution to norm clip_gamma if it exceeds it.

    Returns (d,) for a single target column or (d, m) for m columns. With
    damping = 0 a rank-deficient Phi is an error rather than a silent
    minimum-norm answer.
    """
    phi = np.asarray(prob.phi, dtype=float)
    y = np.asarray(prob.targets, dtype=float)
    if phi.ndim != 2 or phi.shape[0] < 1 or phi.shape[1] < 1:
        raise ValueError("design matrix must be (n, d) with n, d >= 1")
    if prob.damping < 0:
        raise ValueError("damping must be >= 0")
    single = y.ndim == 1
    yc = y[:, None] if single else y
    if yc.shape[0] != phi.shape[0]:
        raise ValueError("targets length does not match design matrix rows")

    n, d = phi.shape
    if prob.damping == 0.0:
        if np.linalg.matrix_rank(phi) < d:
            raise np.linalg.LinAlgError(
                "rank-deficient least squares with damping 0; "
                "set damping > 0 or provide independent rows"
            )
        a, *_ = np.linalg.lstsq(phi, yc, rcond=None)
    else:
        # augmented system keeps the ridge solve well conditioned
        aug = np.vstack([phi, np.sqrt(prob.damping) * np.eye(d)])
        yaug = np.vstack([yc, np.zeros((d, yc.shape[1]))])
        a, *_ = np.linalg.lstsq(aug, yaug, rcond=None)

    norm = float(np.linalg.norm(a))
    if norm > prob.clip_gamma:
        a = a * (prob.clip_gamma / norm)
    return a[:, 0] if single else a


# --- model persistence -----------------------------------------------------

MODEL_FORMAT = "mlp-text"
MODEL_VERSION = 1


class ModelFormatError(ValueError):
    pass


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_model(net: Mlp, path) -> None:
    """Versioned plain-text model file; floats carry 17 significant digits so
    a save/load round trip is exact for float64."""
    lines = [f"{MODEL_FORMAT} {MODEL_VERSION}"]
    lines.append("dims " + " ".join(str(d) for d in net.layer_dims))
    sb = "none" if net.spectral_bound is None else _fmt(net.spectral_bound)
    lines.append(f"spectral_bound {sb}")
    meta = " ".join(f"{k}={v}" for k, v in sorted(net.meta.items()))
    lines.append(f"meta {meta}".rstrip())
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        lines.append(f"W{i} {w.shape[0]} {w.shape[1]}")
        for row in w:
            lines.append(" ".join(_fmt(v) for v in row))
        lines.append(f"b{i} {b.shape[0]}")
        lines.append(" ".join(_fmt(v) for v in b))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_model(path) -> Mlp:
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f]
    if not lines or not lines[0].startswith(MODEL_FORMAT):
        raise ModelFormatError(f"{path}: not a {MODEL_FORMAT} file")
    version = lines[0].split()[1]
    if int(version) != MODEL_VERSION:
        raise ModelFormatError(f"{path}: unsupported version {version}")
    try:
        dims = [int(t) for t in lines[1].split()[1:]]
        sb_tok = lines[2].split()[1]
        spectral_bound = None if sb_tok == "none" else float(sb_tok)
        meta = {}
        for tok in lines[3].split()[1:]:
            k, _, v = tok.partition("=")
            meta[k] = v
        weights, biases = [], []
        i = 4
        for li in range(len(dims) - 1):
            head = lines[i].split()
            if head[0] != f"W{li}":
                raise ModelFormatError(f"{path}:{i + 1}: expected W{li} header")
            rows, cols = int(head[1]), int(head[2])
            w = np.array(
                [[float(v) for v in lines[i + 1 + r].split()] for r in range(rows)]
            )
            if w.shape != (rows, cols):
                raise ModelFormatError(f"{path}:{i + 2}: bad weight block shape")
            i += 1 + rows
            head = lines[i].split()
            if head[0] != f"b{li}":
                raise ModelFormatError(f"{path}:{i + 1}: expected b{li} header")
            b = np.array([float(v) for v in lines[i + 1].split()])
            if b.shape[0] != int(head[1]):
                raise ModelFormatError(f"{path}:{i + 2}: bad bias length")
            i += 2
            weights.append(w)
            biases.append(b)
    except (IndexError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"{path}: truncated or malformed model file: {exc}") from exc
    net = Mlp(dims, weights, biases, spectral_bound, meta)
    for w, din, dout in zip(net.weights, dims[:-1], dims[1:]):
        if w.shape != (dout, din):
            raise ModelFormatError(f"{path}: weight shapes inconsistent with dims")
    return net
