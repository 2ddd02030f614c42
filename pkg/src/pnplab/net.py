"""Trainable vector-field network with hand-written exact gradients.

A small dense network maps (state grid, time, optional class id) to a
velocity grid of the same shape. Time enters through fixed sinusoidal
features; conditioning through a learned embedding table that reserves
its last row as the "null" id so unconditional passes share the model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, UsageError
from .grid import Grid, GridShape
from .rng import RngStream

def _sigmoid(a: np.ndarray) -> np.ndarray:
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


_ACTIVATIONS = {
    "tanh": (np.tanh, lambda a: 1.0 - np.tanh(a) ** 2),
    "relu": (lambda a: np.maximum(a, 0.0), lambda a: (a > 0.0).astype(np.float64)),
    "silu": (
        lambda a: a * _sigmoid(a),
        lambda a: _sigmoid(a) * (1.0 + a * (1.0 - _sigmoid(a))),
    ),
}


@dataclass(frozen=True)
class NetConfig:
    grid_shape: GridShape
    hidden: tuple[int, ...] = (64, 64)
    activation: str = "tanh"
    time_features: int = 4  # sin/cos pairs
    num_classes: int = 0  # 0 = unconditional, no embedding table
    cond_dim: int = 8  # embedding width when num_classes > 0
    time_gated_skip: bool = False  # adds gate(t) * z to the core output
    predict_head: bool = False  # core estimates the endpoint; u = (core - z)/(1 - t)

    # The head divides by max(1 - t, HEAD_FLOOR); training clips t below
    # 1 - delta anyway, so the floor only guards the t = 1 contract.
    HEAD_FLOOR = 0.005

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        if len(self.grid_shape) != 4 or any(s < 1 for s in self.grid_shape):
            raise ConfigurationError(f"bad grid shape {self.grid_shape}")
        if self.num_classes > 0 and self.cond_dim < 1:
            raise ConfigurationError("conditional net needs cond_dim >= 1")
        if self.time_gated_skip and self.time_features < 1:
            raise ConfigurationError("time-gated skip needs time features")

    @property
    def grid_dim(self) -> int:
        return int(np.prod(self.grid_shape))

    @property
    def time_dim(self) -> int:
        return 2 * self.time_features

    @property
    def cond_input_dim(self) -> int:
        return self.cond_dim if self.num_classes > 0 else 0

    @property
    def input_dim(self) -> int:
        return self.grid_dim + self.time_dim + self.cond_input_dim

    def layer_sizes(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden, self.grid_dim]
        return list(zip(dims[:-1], dims[1:]))

    def to_json(self) -> dict:
        return {
            "grid_shape": list(self.grid_shape),
            "hidden": list(self.hidden),
            "activation": self.activation,
            "time_features": self.time_features,
            "num_classes": self.num_classes,
            "cond_dim": self.cond_dim,
            "time_gated_skip": self.time_gated_skip,
            "predict_head": self.predict_head,
        }

    @classmethod
    def from_json(cls, d: dict) -> "NetConfig":
        return cls(
            grid_shape=tuple(d["grid_shape"]),
            hidden=tuple(d["hidden"]),
            activation=d["activation"],
            time_features=int(d["time_features"]),
            num_classes=int(d["num_classes"]),
            cond_dim=int(d["cond_dim"]),
            time_gated_skip=bool(d.get("time_gated_skip", False)),
            predict_head=bool(d.get("predict_head", False)),
        )


def time_features(t, n_pairs: int) -> np.ndarray:
    """Sinusoidal features of t: [sin(2^j 2pi t), cos(2^j 2pi t)] per pair."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if n_pairs == 0:
        return np.zeros((len(t), 0))
    freqs = 2.0 * np.pi * (2.0 ** np.arange(n_pairs))
    angles = t[:, None] * freqs[None, :]
    feats = np.empty((len(t), 2 * n_pairs))
    feats[:, 0::2] = np.sin(angles)
    feats[:, 1::2] = np.cos(angles)
    return feats


class VectorFieldNet:
    """Dense MLP over [flattened grid, time features, class embedding].

    With `time_gated_skip` the output adds gate(t) * z, a scalar gate read
    off the time features. Velocity fields carry a -z/(1-t)-like component
    at every noise level; for states much wider than the hidden layers the
    gate supplies that full-rank part so the MLP only fits the remainder.

    Parameter order (also the checkpoint layout): W1, b1, ..., Wk, bk,
    then the skip gate when enabled, then the embedding table when the
    net is conditional.
    """

    def __init__(self, config: NetConfig, params: list[np.ndarray]):
        self.config = config
        expected = self._expected_shapes(config)
        if len(params) != len(expected):
            raise ConfigurationError(
                f"expected {len(expected)} parameter arrays, got {len(params)}"
            )
        for arr, shape in zip(params, expected):
            if arr.shape != shape:
                raise ConfigurationError(f"parameter shape {arr.shape} != expected {shape}")
        self.params = [np.asarray(p, dtype=np.float64) for p in params]

    # -- construction -------------------------------------------------

    @staticmethod
    def _expected_shapes(config: NetConfig) -> list[tuple[int, ...]]:
        shapes: list[tuple[int, ...]] = []
        for fan_in, fan_out in config.layer_sizes():
            shapes.append((fan_in, fan_out))
            shapes.append((fan_out,))
        if config.time_gated_skip:
            shapes.append((config.time_dim,))
        if config.num_classes > 0:
            shapes.append((config.num_classes + 1, config.cond_dim))
        return shapes

    @classmethod
    def initialize(cls, config: NetConfig, rng: RngStream) -> "VectorFieldNet":
        params = []
        for i, (fan_in, fan_out) in enumerate(config.layer_sizes()):
            w = rng.child("w", i).normal((fan_in, fan_out)) / np.sqrt(fan_in)
            params.append(w)
            params.append(np.zeros(fan_out))
        if config.time_gated_skip:
            params.append(np.zeros(config.time_dim))  # gate starts closed
        if config.num_classes > 0:
            params.append(0.1 * rng.child("cond").normal((config.num_classes + 1, config.cond_dim)))
        return cls(config, params)

    @classmethod
    def zeros(cls, config: NetConfig) -> "VectorFieldNet":
        return cls(config, [np.zeros(s) for s in cls._expected_shapes(config)])

    @property
    def null_cond_id(self) -> int:
        if self.config.num_classes == 0:
            raise UsageError("unconditional net has no condition ids")
        return self.config.num_classes

    @property
    def weights(self) -> list[np.ndarray]:
        n_layers = len(self.config.layer_sizes())
        return self.params[0 : 2 * n_layers : 2]

    @property
    def skip_gate(self) -> np.ndarray | None:
        if not self.config.time_gated_skip:
            return None
        return self.params[2 * len(self.config.layer_sizes())]

    @property
    def cond_table(self) -> np.ndarray | None:
        return self.params[-1] if self.config.num_classes > 0 else None

    def copy(self) -> "VectorFieldNet":
        return VectorFieldNet(self.config, [p.copy() for p in self.params])

    def flatten_params(self) -> np.ndarray:
        return np.concatenate([p.reshape(-1) for p in self.params])

    @classmethod
    def from_flat(cls, config: NetConfig, flat: np.ndarray) -> "VectorFieldNet":
        shapes = cls._expected_shapes(config)
        total = sum(int(np.prod(s)) for s in shapes)
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != total:
            raise ConfigurationError(f"flat parameter vector has {flat.size} values, need {total}")
        params, off = [], 0
        for s in shapes:
            n = int(np.prod(s))
            params.append(flat[off : off + n].reshape(s).copy())
            off += n
        return cls(config, params)

    # -- forward / backward -------------------------------------------

    def _cond_rows(self, cond, batch: int) -> np.ndarray | None:
        if self.config.num_classes == 0:
            if cond is not None:
                raise ConfigurationError("condition id passed to an unconditional net")
            return None
        if cond is None:
            ids = np.full(batch, self.null_cond_id, dtype=np.int64)
        else:
            ids = np.broadcast_to(np.asarray(cond, dtype=np.int64), (batch,)).copy()
        if np.any(ids < 0) or np.any(ids > self.config.num_classes):
            raise ConfigurationError(
                f"condition ids must lie in [0, {self.config.num_classes}] (null id last)"
            )
        return ids

    def _assemble_input(self, z: np.ndarray, t, cond):
        cfg = self.config
        z = np.asarray(z, dtype=np.float64)
        if z.ndim >= 4 and z.shape[-4:] == cfg.grid_shape:
            flat = z.reshape(-1, cfg.grid_dim)
        elif z.shape[-1] == cfg.grid_dim:
            flat = z.reshape(-1, cfg.grid_dim)
        else:
            raise ConfigurationError(
                f"state of shape {z.shape} does not match net grid shape {cfg.grid_shape}"
            )
        batch = flat.shape[0]
        t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
        tf = time_features(t_arr, cfg.time_features)
        if len(t_arr) == 1 and batch > 1:
            tf = np.broadcast_to(tf, (batch, tf.shape[1]))
            t_arr = np.broadcast_to(t_arr, (batch,))
        if len(t_arr) != batch:
            raise UsageError(f"got {len(t_arr)} time values for batch of {batch}")
        cols = [flat, tf]
        ids = self._cond_rows(cond, batch)
        if ids is not None:
            cols.append(self.cond_table[ids])
        return np.concatenate(cols, axis=1), z.shape, ids, t_arr

    def _core(self, x: np.ndarray):
        act, _ = _ACTIVATIONS[self.config.activation]
        n_hidden = len(self.config.hidden)
        pre, post = [], [x]
        h = x
        for i in range(n_hidden + 1):
            w, b = self.params[2 * i], self.params[2 * i + 1]
            a = h @ w + b
            pre.append(a)
            h = act(a) if i < n_hidden else a
            post.append(h)
        if self.config.time_gated_skip:
            flat, temb = self._split_input(x)
            h = h + (temb @ self.skip_gate)[:, None] * flat
        return h, pre, post

    def _split_input(self, x: np.ndarray):
        cfg = self.config
        return x[:, : cfg.grid_dim], x[:, cfg.grid_dim : cfg.grid_dim + cfg.time_dim]

    def _head_scale(self, t_arr: np.ndarray) -> np.ndarray:
        return 1.0 / np.maximum(1.0 - t_arr, self.config.HEAD_FLOOR)

    def _forward(self, x: np.ndarray, t_arr: np.ndarray):
        core, pre, post = self._core(x)
        if self.config.predict_head:
            flat = x[:, : self.config.grid_dim]
            out = (core - flat) * self._head_scale(t_arr)[:, None]
        else:
            out = core
        return out, pre, post

    def forward(self, z: np.ndarray, t, cond=None) -> np.ndarray:
        """Field evaluation on a batch; output shape mirrors the input."""
        x, out_shape, _, t_arr = self._assemble_input(z, t, cond)
        out, _, _ = self._forward(x, t_arr)
        return out.reshape(out_shape)

    def evaluate(self, z: Grid, t: float, cond: int | None = None) -> Grid:
        """Single-grid field evaluation u(z, t[, cond])."""
        if not 0.0 <= float(t) <= 1.0:
            raise UsageError(f"time {t} outside [0, 1]")
        if z.shape != self.config.grid_shape:
            raise ConfigurationError(
                f"grid shape {z.shape} does not match net grid shape {self.config.grid_shape}"
            )
        out = self.forward(z.data[None], float(t), cond)
        return Grid(out[0])

    def loss_and_gradients(self, z_t, t, target, cond=None):
        """Mean squared field error over a batch and its exact gradients.

        loss = mean_b ||u(z_b, t_b, c_b) - v_b||^2 with the norm over all
        grid entries; gradients are returned in parameter order.
        """
        cfg = self.config
        x, _, ids, t_arr = self._assemble_input(z_t, t, cond)
        batch = x.shape[0]
        if batch == 0:
            raise UsageError("empty batch")
        v = np.asarray(target, dtype=np.float64).reshape(batch, cfg.grid_dim)

        out, pre, post = self._forward(x, t_arr)
        resid = out - v
        loss = float(np.sum(resid**2) / batch)

        _, dact = _ACTIVATIONS[cfg.activation]
        n_hidden = len(cfg.hidden)
        grads: list[np.ndarray | None] = [None] * len(self.params)
        g_out = 2.0 * resid / batch
        if cfg.predict_head:
            g_core = g_out * self._head_scale(t_arr)[:, None]
        else:
            g_core = g_out
        if cfg.time_gated_skip:
            flat, temb = self._split_input(x)
            grads[2 * (n_hidden + 1)] = temb.T @ (g_core * flat).sum(axis=1)
        g = g_core
        for i in range(n_hidden, -1, -1):
            grads[2 * i] = post[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.params[2 * i].T
            if i > 0:
                g = g * dact(pre[i - 1])
        if ids is not None:
            table_grad = np.zeros_like(self.cond_table)
            np.add.at(table_grad, ids, g[:, cfg.grid_dim + cfg.time_dim :])
            grads[-1] = table_grad
        return loss, grads  # type: ignore[return-value]


def evaluate_field(net: VectorFieldNet, z: Grid, t: float, cond: int | None = None) -> Grid:
    return net.evaluate(z, t, cond)
