"""Small tanh feed-forward networks with hand-written reverse-mode gradients.

Parameters live in one flat float64 vector, laid out layer by layer with the
weight matrix (row-major, shape ``(fan_out, fan_in)``) followed by the bias.
Every routine accepts a single input vector or a batch of shape ``(n, d)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NonFiniteGradientError

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetSpec:
    input_dim: int
    hidden_sizes: tuple = (64, 64)
    output_dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        dims = (self.input_dim, *self.hidden_sizes, self.output_dim)
        if any(int(d) < 1 for d in dims):
            raise ValueError(f"all layer sizes must be positive, got {dims}")

    @property
    def layer_sizes(self) -> tuple:
        return (self.input_dim, *self.hidden_sizes, self.output_dim)

    @property
    def layer_shapes(self) -> list:
        sizes = self.layer_sizes
        return [(sizes[i + 1], sizes[i]) for i in range(len(sizes) - 1)]

    @property
    def param_count(self) -> int:
        return sum((fan_in + 1) * fan_out for fan_out, fan_in in self.layer_shapes)


def init_params(spec: NetSpec, rng: np.random.Generator, last_layer_scale: float = 1.0):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases."""
    chunks = []
    shapes = spec.layer_shapes
    for i, (fan_out, fan_in) in enumerate(shapes):
        bound = 1.0 / math.sqrt(fan_in)
        if i == len(shapes) - 1:
            bound *= last_layer_scale
        chunks.append(rng.uniform(-bound, bound, size=fan_out * fan_in + fan_out))
    return np.concatenate(chunks)


def unpack(spec: NetSpec, params: np.ndarray):
    """Views ``[(W, b), ...]`` into the flat parameter vector."""
    params = np.asarray(params)
    if params.shape != (spec.param_count,):
        raise ValueError(f"expected {spec.param_count} parameters, got shape {params.shape}")
    layers, pos = [], 0
    for fan_out, fan_in in spec.layer_shapes:
        w = params[pos : pos + fan_out * fan_in].reshape(fan_out, fan_in)
        pos += fan_out * fan_in
        b = params[pos : pos + fan_out]
        pos += fan_out
        layers.append((w, b))
    return layers


def _as_batch(spec: NetSpec, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ValueError(f"input must have trailing dimension {spec.input_dim}, got {x.shape}")
    return x, single


def _forward(layers, x):
    acts = [x]
    a = x
    for w, b in layers[:-1]:
        a = np.tanh(a @ w.T + b)
        acts.append(a)
    w, b = layers[-1]
    return acts, a @ w.T + b


def net_forward(spec: NetSpec, params, x):
    x, single = _as_batch(spec, x)
    _, out = _forward(unpack(spec, params), x)
    return out[0] if single else out


def net_gradients(spec: NetSpec, params, x, output_cotangent):
    """Vector-Jacobian products of the network output.

    Returns ``(param_grads, input_grads)``.  For a batch, parameter gradients
    are summed over samples and input gradients are per sample.
    """
    x, single = _as_batch(spec, x)
    cot = np.asarray(output_cotangent, dtype=np.float64)
    if single:
        cot = cot[None, :] if cot.ndim == 1 else cot
    if cot.shape != (x.shape[0], spec.output_dim):
        raise ValueError(f"cotangent shape {cot.shape} does not match output")
    layers = unpack(spec, params)
    acts, _ = _forward(layers, x)
    grads = np.empty(spec.param_count)
    delta = cot
    pos = spec.param_count
    for i in range(len(layers) - 1, -1, -1):
        w, b = layers[i]
        a_prev = acts[i]
        gw = delta.T @ a_prev
        gb = delta.sum(axis=0)
        pos -= gb.size
        grads[pos : pos + gb.size] = gb
        pos -= gw.size
        grads[pos : pos + gw.size] = gw.ravel()
        delta = delta @ w
        if i > 0:
            delta = delta * (1.0 - a_prev * a_prev)
    input_grads = delta[0] if single else delta
    return grads, input_grads


def forward_and_scalar_grads(spec: NetSpec, params, x):
    """Scalar-output network: outputs, per-sample parameter grads, input grads.

    Per-sample parameter gradients have shape ``(n, param_count)``.
    """
    if spec.output_dim != 1:
        raise ValueError("per-sample gradients need a scalar-output network")
    x, _ = _as_batch(spec, x)
    layers = unpack(spec, params)
    acts, out = _forward(layers, x)
    n = x.shape[0]
    grads = np.empty((n, spec.param_count))
    delta = np.ones((n, 1))
    pos = spec.param_count
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        a_prev = acts[i]
        fan_out, fan_in = w.shape
        pos -= fan_out
        grads[:, pos : pos + fan_out] = delta
        pos -= fan_out * fan_in
        grads[:, pos : pos + fan_out * fan_in] = (delta[:, :, None] * a_prev[:, None, :]).reshape(n, -1)
        delta = delta @ w
        if i > 0:
            delta = delta * (1.0 - a_prev * a_prev)
    return out[:, 0], grads, delta


def param_grad_jvp(spec: NetSpec, params, x, param_tangents=None, input_tangents=None, weights=None):
    """Directional derivative of the per-sample parameter gradient of a scalar net.

    For sample ``n`` with gradient ``g_n = dV(x_n; w)/dw`` this returns
    ``d/de g_n(w + e * P_n, x_n + e * U_n)`` where ``P_n`` and ``U_n`` are the
    rows of ``param_tangents`` and ``input_tangents`` (either may be omitted).
    With ``P_n = g_n`` this is a Hessian-vector product per sample; with
    ``U_n = dV/dx_n`` it is the mixed second derivative needed by input
    gradient penalties.  Shape ``(n, param_count)``, or ``(param_count,)``
    holding ``sum_n weights[n] * row_n`` when ``weights`` is given.
    """
    if spec.output_dim != 1:
        raise ValueError("param_grad_jvp needs a scalar-output network")
    x, _ = _as_batch(spec, x)
    n = x.shape[0]
    layers = unpack(spec, params)
    if param_tangents is None:
        tan_layers = [(None, None)] * len(layers)
    else:
        param_tangents = np.asarray(param_tangents, dtype=np.float64)
        tan_layers, pos = [], 0
        for fan_out, fan_in in spec.layer_shapes:
            tw = param_tangents[:, pos : pos + fan_out * fan_in].reshape(n, fan_out, fan_in)
            pos += fan_out * fan_in
            tb = param_tangents[:, pos : pos + fan_out]
            pos += fan_out
            tan_layers.append((tw, tb))
    u = np.zeros_like(x) if input_tangents is None else np.asarray(input_tangents, dtype=np.float64)

    # forward pass with tangents
    acts, dacts = [x], [u]
    a, da = x, u
    for (w, b), (tw, tb) in zip(layers[:-1], tan_layers[:-1]):
        z = a @ w.T + b
        dz = da @ w.T
        if tw is not None:
            dz = dz + np.einsum("noi,ni->no", tw, a) + tb
        a = np.tanh(z)
        da = (1.0 - a * a) * dz
        acts.append(a)
        dacts.append(da)

    # backward pass with tangents; the output cotangent is the constant 1
    weighted = weights is not None
    if weighted:
        wts = np.asarray(weights, dtype=np.float64).reshape(n, 1)
        out = np.empty(spec.param_count)
    else:
        out = np.empty((n, spec.param_count))
    delta = np.ones((n, 1))
    ddelta = np.zeros((n, 1))
    pos = spec.param_count
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        tw, _ = tan_layers[i]
        a_prev, da_prev = acts[i], dacts[i]
        fan_out, fan_in = w.shape
        pos -= fan_out
        if weighted:
            out[pos : pos + fan_out] = np.sum(wts * ddelta, axis=0)
            pos -= fan_out * fan_in
            dgw = (wts * ddelta).T @ a_prev + (wts * delta).T @ da_prev
            out[pos : pos + fan_out * fan_in] = dgw.ravel()
        else:
            out[:, pos : pos + fan_out] = ddelta
            pos -= fan_out * fan_in
            dgw = ddelta[:, :, None] * a_prev[:, None, :] + delta[:, :, None] * da_prev[:, None, :]
            out[:, pos : pos + fan_out * fan_in] = dgw.reshape(n, -1)
        if i > 0:
            back = delta @ w
            dback = ddelta @ w
            if tw is not None:
                dback = dback + np.einsum("no,noi->ni", delta, tw)
            deriv = 1.0 - a_prev * a_prev
            ddelta = dback * deriv - back * (2.0 * a_prev * da_prev)
            delta = back * deriv
    return out


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros(cls, n: int, learning_rate: float = 3e-4, **kw) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0, learning_rate, **kw)

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("Adam betas must lie in (0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


def adam_step(state: AdamState, params, grads, context: dict | None = None):
    """One bias-corrected Adam descent step; returns ``(new_state, new_params)``."""
    grads = np.asarray(grads, dtype=np.float64)
    params = np.asarray(params, dtype=np.float64)
    if grads.shape != params.shape or state.first_moment.shape != params.shape:
        raise ValueError("parameter, gradient and moment lengths differ")
    if not np.all(np.isfinite(grads)):
        raise NonFiniteGradientError(
            f"non-finite gradient ({int(np.sum(~np.isfinite(grads)))} entries)", **(context or {})
        )
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    new_state = AdamState(m, v, t, state.learning_rate, state.beta1, state.beta2, state.epsilon)
    return new_state, new_params


def max_relative_error(func: Callable[[np.ndarray], float], params, analytic, h: float = 1e-5):
    """Compare ``analytic`` against central differences of ``func`` at ``params``."""
    params = np.array(params, dtype=np.float64)
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.empty_like(params)
    for i in range(params.size):
        old = params[i]
        params[i] = old + h
        up = func(params)
        params[i] = old - h
        down = func(params)
        params[i] = old
        numeric[i] = (up - down) / (2.0 * h)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


def finite_diff_check(spec: NetSpec, params, x, loss_fn, analytic=None, h: float = 1e-5):
    """Max relative error between backprop and central differences.

    ``loss_fn(outputs)`` returns ``(loss, dloss_doutputs)``.  Pass ``analytic``
    to check an externally supplied gradient instead of the backprop one.
    """
    x = np.asarray(x, dtype=np.float64)
    if analytic is None:
        out = net_forward(spec, params, x)
        _, cot = loss_fn(out)
        analytic, _ = net_gradients(spec, params, x, cot)
    return max_relative_error(lambda p: loss_fn(net_forward(spec, p, x))[0], params, analytic, h)


# --- checkpoints -------------------------------------------------------------


@dataclass
class CheckpointRecord:
    role: str
    spec: NetSpec | None
    params: np.ndarray
    extra: dict = field(default_factory=dict)


def write_checkpoint(path, records: Sequence[CheckpointRecord]):
    """Each record: one JSON header line, then little-endian float64 parameters."""
    with open(path, "wb") as fh:
        for rec in records:
            params = np.ascontiguousarray(rec.params, dtype="<f8")
            header = {
                "format_version": CHECKPOINT_VERSION,
                "role": rec.role,
                "input_dim": rec.spec.input_dim if rec.spec else 0,
                "hidden_sizes": list(rec.spec.hidden_sizes) if rec.spec else [],
                "output_dim": rec.spec.output_dim if rec.spec else int(params.size),
                "param_count": int(params.size),
            }
            header.update(rec.extra)
            fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
            fh.write(params.tobytes())


def read_checkpoint(path) -> dict:
    records = {}
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0
    while pos < len(data):
        end = data.index(b"\n", pos)
        header = json.loads(data[pos:end])
        if header.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('format_version')}")
        n = int(header["param_count"])
        start = end + 1
        params = np.frombuffer(data[start : start + 8 * n], dtype="<f8").astype(np.float64)
        if params.size != n:
            raise ValueError("truncated checkpoint")
        pos = start + 8 * n
        spec = None
        if header["input_dim"] > 0:
            spec = NetSpec(header["input_dim"], tuple(header["hidden_sizes"]), header["output_dim"])
            if spec.param_count != n:
                raise ValueError(f"checkpoint role {header['role']!r}: parameter count mismatch")
        known = {"format_version", "role", "input_dim", "hidden_sizes", "output_dim", "param_count"}
        extra = {k: v for k, v in header.items() if k not in known}
        records[header["role"]] = CheckpointRecord(header["role"], spec, params, extra)
    return records

