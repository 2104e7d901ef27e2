"""The convolutional surrogate: architecture, parameters, forward and backward passes."""

from __future__ import annotations

import io
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ContractError
from .layers import (conv1d_backward, conv1d_forward, global_avg_pool, global_avg_pool_backward, maxpool1d,
                     maxpool1d_backward, relu)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class CnnArch:
    """conv -> conv -> maxpool(2) -> conv -> global average -> dense -> dense(1)."""

    window: int = 100
    n_inputs: int = 38
    filters: tuple[int, int, int] = (32, 64, 64)
    dense_units: int = 64
    kernel_size: int = 3

    def __post_init__(self):
        object.__setattr__(self, "filters", tuple(int(f) for f in self.filters))
        if len(self.filters) != 3 or min(self.filters) < 1:
            raise ContractError(f"need three positive filter counts, got {self.filters}")
        if self.kernel_size % 2 == 0 or self.kernel_size < 1:
            raise ContractError("kernel_size must be odd")
        if self.window < 2 or self.n_inputs < 1 or self.dense_units < 1:
            raise ContractError("window >= 2, n_inputs >= 1 and dense_units >= 1 required")

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        k, (f1, f2, f3), h = self.kernel_size, self.filters, self.dense_units
        return {
            "conv1_w": (k, self.n_inputs, f1), "conv1_b": (f1,),
            "conv2_w": (k, f1, f2), "conv2_b": (f2,),
            "conv3_w": (k, f2, f3), "conv3_b": (f3,),
            "dense_w": (f3, h), "dense_b": (h,),
            "out_w": (h, 1), "out_b": (1,),
        }

    def layer_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        f1, f2, f3 = self.filters
        half = self.window // 2
        return [("conv1", (self.window, f1)), ("conv2", (self.window, f2)), ("maxpool", (half, f2)),
                ("conv3", (half, f3)), ("global_avg_pool", (f3,)), ("dense", (self.dense_units,)),
                ("output", (1,))]

    @property
    def n_params(self) -> int:
        return int(sum(np.prod(s) for s in self.param_shapes().values()))


def init_params(arch: CnnArch, rng: np.random.Generator, zero_output: bool = False) -> dict[str, np.ndarray]:
    """Fan-in scaled uniform weights (limit sqrt(6 / fan_in)), zero biases."""
    params = {}
    for name, shape in arch.param_shapes().items():
        if name.endswith("_b"):
            params[name] = np.zeros(shape)
            continue
        fan_in = int(np.prod(shape[:-1]))
        limit = np.sqrt(6.0 / fan_in)
        params[name] = rng.uniform(-limit, limit, size=shape)
    if zero_output:
        params["out_w"][:] = 0.0
    return params


@dataclass
class CnnModel:
    arch: CnnArch
    params: dict[str, np.ndarray]
    opt_m: dict[str, np.ndarray] = field(default_factory=dict)
    opt_v: dict[str, np.ndarray] = field(default_factory=dict)
    opt_step: int = 0
    best_params: dict[str, np.ndarray] | None = None
    history: dict[str, list[float]] = field(default_factory=lambda: {"train_mse": [], "val_mse": []})
    best_epoch: int = -1
    metadata: dict[str, str] = field(default_factory=dict)

    @classmethod
    def create(cls, arch: CnnArch, seed: int = 42, zero_output: bool = False) -> "CnnModel":
        return cls(arch, init_params(arch, np.random.default_rng(seed), zero_output))

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3 or x.shape[1:] != (self.arch.window, self.arch.n_inputs):
            raise ContractError(f"expected batches of ({self.arch.window}, {self.arch.n_inputs}) windows, "
                                f"got {np.shape(x)}")
        return x


def _forward(params: dict, x: np.ndarray):
    z1, c1 = conv1d_forward(x, params["conv1_w"], params["conv1_b"])
    a1 = relu(z1)
    z2, c2 = conv1d_forward(a1, params["conv2_w"], params["conv2_b"])
    a2 = relu(z2)
    p2, first = maxpool1d(a2)
    z3, c3 = conv1d_forward(p2, params["conv3_w"], params["conv3_b"])
    a3 = relu(z3)
    g = global_avg_pool(a3)
    zh = g @ params["dense_w"] + params["dense_b"]
    h = relu(zh)
    y = h @ params["out_w"] + params["out_b"]
    cache = (c1, z1, c2, z2, first, a2.shape[1], c3, z3, g, zh, h)
    return y, cache


def forward(model: CnnModel, batch: np.ndarray, params: dict | None = None) -> np.ndarray:
    """Predictions (B, 1) in scaled-target units.  No state is touched."""
    x = model.check_input(batch)
    return _forward(model.params if params is None else params, x)[0]


def predict(model: CnnModel, x: np.ndarray, chunk: int = 256) -> np.ndarray:
    x = model.check_input(x)
    out = np.empty(x.shape[0])
    for s in range(0, x.shape[0], chunk):
        out[s:s + chunk] = _forward(model.params, x[s:s + chunk])[0][:, 0]
    return out


def backward(model: CnnModel, batch: np.ndarray, targets: np.ndarray, params: dict | None = None):
    """Loss and exact gradients of the batch-mean squared error.

    Returns ``(loss, grads)`` with ``grads`` keyed like the parameters.
    """
    p = model.params if params is None else params
    x = model.check_input(batch)
    y = np.asarray(targets, dtype=float).reshape(-1)
    if y.shape[0] != x.shape[0]:
        raise ContractError(f"{y.shape[0]} targets for {x.shape[0]} windows")
    pred, (c1, z1, c2, z2, first, t2, c3, z3, g, zh, h) = _forward(p, x)
    resid = pred[:, 0] - y
    loss = float(np.mean(resid ** 2))
    b = x.shape[0]
    dy = (2.0 / b) * resid[:, None]
    grads = {"out_w": h.T @ dy, "out_b": dy.sum(axis=0)}
    dh = (dy @ p["out_w"].T) * (zh > 0)
    grads["dense_w"] = g.T @ dh
    grads["dense_b"] = dh.sum(axis=0)
    dg = dh @ p["dense_w"].T
    da3 = global_avg_pool_backward(dg, z3.shape[1]) * (z3 > 0)
    dp2, grads["conv3_w"], grads["conv3_b"] = conv1d_backward(da3, c3, p["conv3_w"])
    da2 = maxpool1d_backward(dp2, first, t2) * (z2 > 0)
    da1, grads["conv2_w"], grads["conv2_b"] = conv1d_backward(da2, c2, p["conv2_w"])
    da1 = da1 * (z1 > 0)
    _, grads["conv1_w"], grads["conv1_b"] = conv1d_backward(da1, c1, p["conv1_w"], need_input_grad=False)
    return loss, grads


def save_model(model: CnnModel, path: str | os.PathLike) -> None:
    header = {"format": "cnn-model", "version": FORMAT_VERSION, "arch": asdict(model.arch),
              "history": model.history, "best_epoch": model.best_epoch, "opt_step": model.opt_step,
              "metadata": model.metadata}
    arrays = {f"param/{k}": v for k, v in model.params.items()}
    arrays.update({f"m/{k}": v for k, v in model.opt_m.items()})
    arrays.update({f"v/{k}": v for k, v in model.opt_v.items()})
    buf = io.BytesIO()
    np.savez(buf, header=np.array(json.dumps(header)), **arrays)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_model(path: str | os.PathLike) -> CnnModel:
    with np.load(path, allow_pickle=False) as z:
        try:
            header = json.loads(str(z["header"]))
        except KeyError:
            raise ContractError(f"{path}: missing architecture header") from None
        if header.get("format") != "cnn-model" or header.get("version") != FORMAT_VERSION:
            raise ContractError(f"{path}: not a version-{FORMAT_VERSION} cnn model file")
        arch = CnnArch(**header["arch"])
        groups = {"param": {}, "m": {}, "v": {}}
        for key in z.files:
            if "/" in key:
                g, name = key.split("/", 1)
                groups[g][name] = z[key].copy()
    shapes = arch.param_shapes()
    for name, shape in shapes.items():
        if groups["param"].get(name, np.empty(0)).shape != shape:
            raise ContractError(f"{path}: parameter {name} missing or mis-shaped")
    return CnnModel(arch, groups["param"], groups["m"], groups["v"], int(header["opt_step"]),
                    None, header["history"], int(header["best_epoch"]), dict(header.get("metadata", {})))
