"""Trainable vector field v(y, t): an MLP over [y, time features].

The network is deliberately small and framework-free: parameters live in
one flat float64 vector with a layout map, the forward pass records the
activations it needs, and ``backward`` replays them in reverse for exact
gradients. Time enters as sinusoidal features sin/cos(2 pi f_j t) on a
fixed geometric frequency ladder; hidden layers use the SiLU gate
x * sigmoid(x).

Forward matmuls go through a compiled kernel with a fixed accumulation
order per row, so evaluating a batch gives bitwise the same answers as
evaluating its rows one by one (BLAS does not guarantee that).

Checkpoint format (little-endian): magic "LOOMVF01" | u64 header length |
UTF-8 JSON {"dim", "hidden", "n_freq"} | theta as float64.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .flow import CfmConfig, cfm_loss
from .jit import njit

CHECKPOINT_MAGIC = b"LOOMVF01"


@njit(cache=True)
def _mm(a, b):  # pragma: no cover - exercised via forward
    """Row-independent matmul: fixed k-order accumulation per output row."""
    rows, inner = a.shape
    cols = b.shape[1]
    out = np.zeros((rows, cols))
    for i in range(rows):
        for k in range(inner):
            aik = a[i, k]
            for j in range(cols):
                out[i, j] += aik * b[k, j]
    return out


def _silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


def _silu_grad(x: np.ndarray) -> np.ndarray:
    s = 1.0 / (1.0 + np.exp(-x))
    return s * (1.0 + x * (1.0 - s))


class VectorField:
    def __init__(
        self,
        dim: int,
        hidden: tuple[int, ...] = (128, 128, 128),
        n_freq: int = 16,
        theta: np.ndarray | None = None,
    ):
        self.dim = dim
        self.hidden = tuple(int(h) for h in hidden)
        self.n_freq = int(n_freq)
        self.freqs = np.geomspace(1.0, 32.0, self.n_freq)
        sizes = [dim + 2 * self.n_freq, *self.hidden, dim]
        # weights stored (fan_in, fan_out) so the forward matmul is a @ W + b
        self._shapes: list[tuple[tuple[int, int], tuple[int]]] = [
            ((sizes[i], sizes[i + 1]), (sizes[i + 1],)) for i in range(len(sizes) - 1)
        ]
        n_params = sum(w[0] * w[1] + b[0] for w, b in self._shapes)
        if theta is None:
            theta = np.zeros(n_params)
        elif theta.shape != (n_params,):
            raise ValueError(f"theta must have shape ({n_params},)")
        self.theta = np.asarray(theta, dtype=np.float64)
        self._tape = None

    @classmethod
    def initialized(
        cls,
        dim: int,
        hidden: tuple[int, ...] = (128, 128, 128),
        n_freq: int = 16,
        rng: np.random.Generator | None = None,
    ) -> "VectorField":
        """He-initialized weights, zero biases."""
        rng = rng or np.random.default_rng()
        field = cls(dim, hidden, n_freq)
        for idx in range(field.n_layers):
            w = field.weight(idx)
            w[:] = rng.standard_normal(w.shape) * np.sqrt(2.0 / w.shape[0])
        return field

    # -- parameter views ----------------------------------------------------

    @property
    def n_layers(self) -> int:
        return len(self._shapes)

    def _offsets(self, idx: int) -> tuple[int, int, int]:
        off = 0
        for i, (w, b) in enumerate(self._shapes):
            wn = w[0] * w[1]
            if i == idx:
                return off, off + wn, off + wn + b[0]
            off += wn + b[0]
        raise IndexError(idx)

    def weight(self, idx: int) -> np.ndarray:
        a, b, _ = self._offsets(idx)
        return self.theta[a:b].reshape(self._shapes[idx][0])

    def bias(self, idx: int) -> np.ndarray:
        _, b, c = self._offsets(idx)
        return self.theta[b:c]

    # -- forward / backward -------------------------------------------------

    def time_features(self, t: np.ndarray | float, batch: int) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        if t.ndim == 0:
            t = np.full(batch, float(t))
        ang = 2.0 * np.pi * t[:, None] * self.freqs[None, :]
        return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)

    def forward(
        self, y: np.ndarray, t: np.ndarray | float, record: bool = False
    ) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        squeeze = y.ndim == 1
        if squeeze:
            y = y[None, :]
        if not np.isfinite(y).all():
            raise ValueError("non-finite input state")
        a = np.concatenate([y, self.time_features(t, y.shape[0])], axis=1)
        acts = [a]
        pre = []
        for idx in range(self.n_layers):
            z = _mm(a, self.weight(idx)) + self.bias(idx)
            if idx < self.n_layers - 1:
                pre.append(z)
                a = _silu(z)
                acts.append(a)
            else:
                a = z
        self._tape = (acts, pre) if record else None
        return a[0] if squeeze else a

    def __call__(self, y: np.ndarray, t: np.ndarray | float) -> np.ndarray:
        return self.forward(y, t)

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        """Gradient of sum(upstream * output) w.r.t. the flat parameters."""
        if self._tape is None:
            raise RuntimeError("no recorded forward pass")
        acts, pre = self._tape
        g = np.asarray(upstream, dtype=np.float64)
        if g.ndim == 1:
            g = g[None, :]
        grads = np.zeros_like(self.theta)
        for idx in range(self.n_layers - 1, -1, -1):
            a_in = acts[idx]
            wa, wb, bc = self._offsets(idx)
            grads[wa:wb] = (a_in.T @ g).ravel()
            grads[wb:bc] = g.sum(axis=0)
            if idx > 0:
                g = (g @ self.weight(idx).T) * _silu_grad(pre[idx - 1])
        return grads

    # -- checkpoints ----------------------------------------------------------

    def save(self, path: str | Path) -> None:
        header = json.dumps(
            {"dim": self.dim, "hidden": list(self.hidden), "n_freq": self.n_freq}
        ).encode()
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<Q", len(header)))
            fh.write(header)
            fh.write(self.theta.astype("<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "VectorField":
        raw = Path(path).read_bytes()
        if raw[:8] != CHECKPOINT_MAGIC:
            raise ValueError("not a vector-field checkpoint")
        (hlen,) = struct.unpack_from("<Q", raw, 8)
        meta = json.loads(raw[16 : 16 + hlen].decode())
        theta = np.frombuffer(raw, dtype="<f8", offset=16 + hlen).copy()
        return cls(meta["dim"], tuple(meta["hidden"]), meta["n_freq"], theta)


# -- optimizer ---------------------------------------------------------------


@dataclass
class AdamState:
    step: int
    m: np.ndarray
    v: np.ndarray
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def create(cls, n_params: int, lr: float) -> "AdamState":
        return cls(0, np.zeros(n_params), np.zeros(n_params), lr)


def adam_step(
    state: AdamState, theta: np.ndarray, grads: np.ndarray
) -> np.ndarray:
    """One bias-corrected Adam update; mutates the moments, returns new theta."""
    if grads.shape != theta.shape or state.m.shape != theta.shape:
        raise ValueError("parameter/gradient shape mismatch")
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1**state.step)
    v_hat = state.v / (1.0 - state.beta2**state.step)
    return theta - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


# -- training loop -------------------------------------------------------------


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"non-finite loss {loss} at step {step}")
        self.step = step


@dataclass
class TrainConfig:
    iterations: int
    lr: float = 1e-3
    warmup: int = 100
    seed: int = 0
    cfm: CfmConfig = dc_field(default_factory=CfmConfig)
    ema_decay: float = 0.0  # 0 disables

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


@dataclass
class TrainingLog:
    loss: np.ndarray
    reassignments: np.ndarray
    local_ot_cost: np.ndarray
    ema_theta: np.ndarray | None = None

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write("iter,loss,reassignments,local_ot_cost\n")
            for i in range(self.loss.shape[0]):
                fh.write(
                    f"{i},{self.loss[i]!r},{int(self.reassignments[i])},"
                    f"{self.local_ot_cost[i]!r}\n"
                )


def train(field: VectorField, strategy, cfg: TrainConfig) -> TrainingLog:
    """Interleaved loop: coupled batch -> regression loss -> Adam update."""
    rng = np.random.default_rng(cfg.seed)
    opt = AdamState.create(field.theta.size, cfg.lr)
    losses = np.empty(cfg.iterations)
    reassigned = np.zeros(cfg.iterations, dtype=np.int64)
    local_cost = np.empty(cfg.iterations)
    ema = field.theta.copy() if cfg.ema_decay > 0 else None
    for it in range(cfg.iterations):
        batch = strategy.sample(rng)
        loss, grads = cfm_loss(field, batch, cfg.cfm, rng)
        if not np.isfinite(loss):
            raise TrainingDiverged(it, loss)
        opt.lr = cfg.lr * min(1.0, (it + 1) / max(1, cfg.warmup))
        field.theta = adam_step(opt, field.theta, grads)
        if ema is not None:
            ema = cfg.ema_decay * ema + (1.0 - cfg.ema_decay) * field.theta
        losses[it] = loss
        reassigned[it] = batch.reassignment_count
        local_cost[it] = batch.local_ot_cost
    return TrainingLog(losses, reassigned, local_cost, ema)
