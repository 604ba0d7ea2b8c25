"""The two length-regressor architectures.

``cnn`` (ArcLengthNet): conv1d(2 -> channels, kernel 3) -> flatten ->
fc1 (-> 10) -> ReLU -> fc2 (-> 1). ``lstm``: a 4-unit LSTM scanned over
the points, all hidden states concatenated, then the same fc1/ReLU/fc2
head. Both map a 2 x n_points curve to one scalar length; batches get a
leading axis.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from . import autodiff as ad
from . import container
from .autodiff import ParamStore, Tensor

__all__ = [
    "ModelKind",
    "LSTM_HIDDEN",
    "init_params",
    "forward",
    "forward_cnn",
    "forward_lstm",
    "predict",
    "expected_points",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_MAGIC = b"ACKP"
LSTM_HIDDEN = 4
HEAD_WIDTH = 10
KERNEL_SIZE = 3


class ModelKind(str, Enum):
    CNN = "cnn"
    LSTM = "lstm"

    def __str__(self):
        return self.value


def _uniform_fan_in(rng, shape, fan_in):
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(
    kind: ModelKind | str,
    seed: int,
    n_points: int = 200,
    conv_channels: int = 8,
) -> ParamStore:
    """Fresh parameters: weights uniform in +-sqrt(1/fan_in), biases zero."""
    kind = ModelKind(kind)
    rng = np.random.default_rng(seed % 2**64)
    store = ParamStore()
    if kind is ModelKind.CNN:
        c = conv_channels
        store.add("conv.kernel", _uniform_fan_in(rng, (c, 2, KERNEL_SIZE), 2 * KERNEL_SIZE))
        store.add("conv.bias", np.zeros(c), bias=True)
        flat = c * (n_points - KERNEL_SIZE + 1)
        store.add("fc1.weight", _uniform_fan_in(rng, (HEAD_WIDTH, flat), flat))
        store.add("fc1.bias", np.zeros(HEAD_WIDTH), bias=True)
        store.add("fc2.weight", _uniform_fan_in(rng, (1, HEAD_WIDTH), HEAD_WIDTH))
        store.add("fc2.bias", np.zeros(1), bias=True)
    else:
        h = LSTM_HIDDEN
        store.add("lstm.w_x", _uniform_fan_in(rng, (4 * h, 2), 2))
        store.add("lstm.w_h", _uniform_fan_in(rng, (4 * h, h), h))
        store.add("lstm.bias", np.zeros(4 * h), bias=True)
        flat = h * n_points
        store.add("fc1.weight", _uniform_fan_in(rng, (HEAD_WIDTH, flat), flat))
        store.add("fc1.bias", np.zeros(HEAD_WIDTH), bias=True)
        store.add("fc2.weight", _uniform_fan_in(rng, (1, HEAD_WIDTH), HEAD_WIDTH))
        store.add("fc2.bias", np.zeros(1), bias=True)
    return store


def expected_points(kind: ModelKind | str, params: ParamStore) -> int:
    """The curve length n_points a parameter set was built for."""
    kind = ModelKind(kind)
    flat = params["fc1.weight"].shape[1]
    if kind is ModelKind.CNN:
        channels = params["conv.kernel"].shape[0]
        return flat // channels + KERNEL_SIZE - 1
    return flat // LSTM_HIDDEN


def _check_input(kind, params, curves) -> tuple[np.ndarray, bool]:
    arr = np.asarray(curves, dtype=np.float64)
    batched = arr.ndim == 3
    if arr.ndim not in (2, 3) or arr.shape[-2] != 2:
        raise ValueError(f"curves must be (2, n) or (batch, 2, n), got {arr.shape}")
    n_expected = expected_points(kind, params)
    if arr.shape[-1] != n_expected:
        raise ValueError(
            f"model expects {n_expected} points per curve, got {arr.shape[-1]}"
        )
    return arr, batched


def _head(params: ParamStore, features: Tensor) -> Tensor:
    hidden = ad.relu(ad.affine(features, params["fc1.weight"], params["fc1.bias"]))
    return ad.affine(hidden, params["fc2.weight"], params["fc2.bias"])


def forward_cnn(params: ParamStore, curves) -> Tensor:
    """Scalar length prediction; (batch,) for batched input."""
    arr, batched = _check_input(ModelKind.CNN, params, curves)
    x = Tensor(arr)
    feat = ad.conv1d(x, params["conv.kernel"], params["conv.bias"])
    flat_len = feat.shape[-1] * feat.shape[-2]
    feat = ad.reshape(feat, (-1, flat_len) if batched else (flat_len,))
    out = _head(params, feat)
    return ad.reshape(out, (-1,)) if batched else ad.reshape(out, ())


def forward_lstm(params: ParamStore, curves) -> Tensor:
    arr, batched = _check_input(ModelKind.LSTM, params, curves)
    arr3 = arr if batched else arr[None]
    if not ad.grad_enabled():
        out = _forward_lstm_no_grad(params, arr3)
        return Tensor(out if batched else out.reshape(())[()])
    b, _, n = arr3.shape
    h = Tensor(np.zeros((b, LSTM_HIDDEN)))
    c = Tensor(np.zeros((b, LSTM_HIDDEN)))
    states = []
    w_x, w_h, bias = params["lstm.w_x"], params["lstm.w_h"], params["lstm.bias"]
    for t in range(n):
        x_t = Tensor(np.ascontiguousarray(arr3[:, :, t]))
        h, c = ad.lstm_cell(x_t, h, c, w_x, w_h, bias)
        states.append(h)
    feat = ad.concat(states, axis=1)
    out = _head(params, feat)
    return ad.reshape(out, (-1,)) if batched else ad.reshape(out, ())


def _forward_lstm_no_grad(params: ParamStore, arr3: np.ndarray) -> np.ndarray:
    """Forward-only scan without graph nodes; bitwise-identical to the
    node path (same op order per step)."""
    w_x = params["lstm.w_x"].data
    w_h = params["lstm.w_h"].data
    bias = params["lstm.bias"].data
    hid = LSTM_HIDDEN
    b, _, n = arr3.shape
    h = np.zeros((b, hid))
    c = np.zeros((b, hid))
    gx = np.ascontiguousarray(arr3.transpose(0, 2, 1)) @ w_x.T
    states = np.empty((b, n, hid))
    for t in range(n):
        z = gx[:, t] + h @ w_h.T + bias
        i = 1.0 / (1.0 + np.exp(-z[:, 0 * hid : 1 * hid]))
        f = 1.0 / (1.0 + np.exp(-z[:, 1 * hid : 2 * hid]))
        g = np.tanh(z[:, 2 * hid : 3 * hid])
        o = 1.0 / (1.0 + np.exp(-z[:, 3 * hid : 4 * hid]))
        c = f * c + i * g
        h = o * np.tanh(c)
        states[:, t] = h
    feat = states.reshape(b, n * hid)
    hidden = feat @ params["fc1.weight"].data.T + params["fc1.bias"].data
    hidden = np.where(hidden > 0, hidden, 0.0)
    out = hidden @ params["fc2.weight"].data.T + params["fc2.bias"].data
    return out.reshape(-1)


def forward(kind: ModelKind | str, params: ParamStore, curves) -> Tensor:
    kind = ModelKind(kind)
    if kind is ModelKind.CNN:
        return forward_cnn(params, curves)
    return forward_lstm(params, curves)


def predict(
    kind: ModelKind | str,
    params: ParamStore,
    curves,
    chunk: int = 2048,
) -> np.ndarray:
    """Forward-only batched prediction, chunked to bound memory."""
    arr = np.asarray(curves, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    out = np.empty(arr.shape[0])
    with ad.no_grad():
        for lo in range(0, arr.shape[0], chunk):
            part = arr[lo : lo + chunk]
            out[lo : lo + part.shape[0]] = forward(kind, params, part).data
    return out


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(
    path,
    kind: ModelKind | str,
    params: ParamStore,
    extra: dict | None = None,
) -> None:
    """Write parameters plus architecture metadata to one file."""
    kind = ModelKind(kind)
    manifest = [
        {"name": name, "shape": list(t.shape), "bias": params.is_bias(name)}
        for name, t in params.items()
    ]
    header = {
        "model": kind.value,
        "n_points": expected_points(kind, params),
        "tensors": manifest,
    }
    if kind is ModelKind.CNN:
        header["conv_channels"] = params["conv.kernel"].shape[0]
    header.update(extra or {})
    write = [t.data for _, t in params.items()]
    container.write_container(path, CHECKPOINT_MAGIC, header, write)


def load_checkpoint(path):
    """Read a checkpoint; returns (kind, params, header)."""

    def shapes(header):
        return [tuple(entry["shape"]) for entry in header["tensors"]]

    header, arrays = container.read_container(path, CHECKPOINT_MAGIC, shapes)
    kind = ModelKind(header["model"])
    store = ParamStore()
    for entry, arr in zip(header["tensors"], arrays):
        store.add(entry["name"], arr, bias=bool(entry["bias"]))
    return kind, store, header
