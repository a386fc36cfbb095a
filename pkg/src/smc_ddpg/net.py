"""Small feedforward networks with analytic gradients.

The actor maps the error state to a two-unit layer ``(r, mu)`` and a fixed
output head ``u1 = -r - mu * sign(sigma)``. The critic has a state branch and
an action branch whose outputs are concatenated and fed to a trunk.

Parameters of a network live in a single float64 vector (see
:mod:`smc_ddpg.kernels` for the layout), so target blending and optimizer
steps are whole-vector operations.
"""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Tuple

import numpy as np

from . import kernels
from .kernels import ACTIVATION_CODES

SCHEMA_VERSION = 1


class NumericError(FloatingPointError):
    """A forward pass or update produced non-finite values."""


class SchemaError(ValueError):
    """A checkpoint does not match the expected network layout."""


@dataclass(frozen=True)
class LayerSpec:
    width: int
    activation: str = "relu"

    def __post_init__(self):
        if int(self.width) != self.width or self.width < 1:
            raise ValueError(f"layer width must be a positive integer, got {self.width!r}")
        if self.activation not in ACTIVATION_CODES:
            raise ValueError(f"unknown activation {self.activation!r}; expected one of {sorted(ACTIVATION_CODES)}")

    def as_list(self):
        return [int(self.width), self.activation]


def layers(*items) -> Tuple[LayerSpec, ...]:
    """``layers((64, "relu"), (64, "relu"))`` or ``layers(64, 64)`` for ReLU."""
    out = []
    for item in items:
        if isinstance(item, LayerSpec):
            out.append(item)
        elif isinstance(item, (tuple, list)):
            out.append(LayerSpec(int(item[0]), str(item[1])))
        else:
            out.append(LayerSpec(int(item)))
    return tuple(out)


class Stack:
    """Layout of one dense stack inside a flat parameter vector."""

    def __init__(self, n_in, layer_specs: Sequence[LayerSpec], offset=0):
        self.sizes = np.array([n_in] + [ls.width for ls in layer_specs], dtype=np.int64)
        self.acts = np.array([ACTIVATION_CODES[ls.activation] for ls in layer_specs], dtype=np.int64)
        self.offset = offset
        self.size = int(sum(a * b + b for a, b in zip(self.sizes[:-1], self.sizes[1:])))

    @property
    def n_out(self):
        return int(self.sizes[-1])

    def view(self, flat):
        return flat[self.offset:self.offset + self.size]

    def forward(self, flat, x):
        return kernels.mlp_forward(self.view(flat), self.sizes, self.acts, x)

    def backward(self, flat, x, hidden, d_out):
        return kernels.mlp_backward(self.view(flat), self.sizes, self.acts, x, hidden, d_out)

    def blocks(self, flat):
        """``[(W, b), ...]`` views into ``flat``."""
        out = []
        o = self.offset
        for a, b in zip(self.sizes[:-1], self.sizes[1:]):
            w = flat[o:o + a * b].reshape(a, b)
            o += a * b
            out.append((w, flat[o:o + b]))
            o += b
        return out

    def fan_ins(self):
        return [int(a) for a in self.sizes[:-1]]


@dataclass(frozen=True)
class ActorSpec:
    n_inputs: int = 2
    hidden: Tuple[LayerSpec, ...] = field(default_factory=lambda: layers(64, 64))
    mu_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "hidden", layers(*self.hidden))
        if self.n_inputs < 1:
            raise ValueError("actor needs at least one input")
        if not self.mu_scale >= 1.0:
            raise ValueError(f"mu_scale must be >= 1, got {self.mu_scale!r}")

    kind = "actor"

    def stacks(self):
        # last layer: two linear units (r, pre-activation of mu)
        return (Stack(self.n_inputs, self.hidden + (LayerSpec(2, "linear"),)),)

    def as_dict(self):
        return {"n_inputs": self.n_inputs, "hidden": [ls.as_list() for ls in self.hidden], "mu_scale": self.mu_scale}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["n_inputs"]), layers(*d["hidden"]), float(d.get("mu_scale", 1.0)))


@dataclass(frozen=True)
class CriticSpec:
    n_inputs: int = 2
    state_branch: Tuple[LayerSpec, ...] = field(default_factory=lambda: layers(64))
    action_branch: Tuple[LayerSpec, ...] = field(default_factory=lambda: layers(64))
    trunk: Tuple[LayerSpec, ...] = field(default_factory=lambda: layers(64))

    kind = "critic"

    def __post_init__(self):
        for name in ("state_branch", "action_branch", "trunk"):
            object.__setattr__(self, name, layers(*getattr(self, name)))
        if not self.state_branch or not self.action_branch:
            raise ValueError("critic branches need at least one layer each")

    def stacks(self):
        s = Stack(self.n_inputs, self.state_branch)
        a = Stack(1, self.action_branch, offset=s.size)
        t = Stack(s.n_out + a.n_out, self.trunk + (LayerSpec(1, "linear"),), offset=s.size + a.size)
        return s, a, t

    def as_dict(self):
        return {
            "n_inputs": self.n_inputs,
            "state_branch": [ls.as_list() for ls in self.state_branch],
            "action_branch": [ls.as_list() for ls in self.action_branch],
            "trunk": [ls.as_list() for ls in self.trunk],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["n_inputs"]), layers(*d["state_branch"]), layers(*d["action_branch"]), layers(*d["trunk"]))


class NetParams:
    """Flat parameter vector tagged with the spec that gives it shape."""

    def __init__(self, spec, flat):
        flat = np.ascontiguousarray(flat, dtype=np.float64)
        expected = sum(s.size for s in spec.stacks())
        if flat.shape != (expected,):
            raise SchemaError(f"{spec.kind} needs {expected} parameters, got shape {flat.shape}")
        self.spec = spec
        self.flat = flat

    def copy(self):
        return NetParams(self.spec, self.flat.copy())

    def with_flat(self, flat):
        return NetParams(self.spec, flat)

    def blocks(self):
        out = []
        for stack in self.spec.stacks():
            out.extend(stack.blocks(self.flat))
        return out

    def __eq__(self, other):
        return isinstance(other, NetParams) and self.spec == other.spec and np.array_equal(self.flat, other.flat)

    def __repr__(self):
        return f"NetParams({self.spec.kind}, {self.flat.size} parameters)"


def init_params(spec, seed) -> NetParams:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    flat = np.zeros(sum(s.size for s in spec.stacks()))
    params = NetParams(spec, flat)
    for stack in spec.stacks():
        for (w, _), fan_in in zip(stack.blocks(params.flat), stack.fan_ins()):
            bound = 1.0 / np.sqrt(fan_in)
            w[...] = rng.uniform(-bound, bound, size=w.shape)
    return params


def _check_finite(*arrays):
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NumericError("non-finite network activation")


def _batch(e):
    e = np.asarray(e, dtype=np.float64)
    return (e[None, :], True) if e.ndim == 1 else (e, False)


# -------------------------------------------------------------------- actor


def _actor_pass(params, e, sigma):
    spec = params.spec
    (stack,) = spec.stacks()
    hidden = stack.forward(params.flat, e)
    r = hidden[:, -2]
    th = np.tanh(hidden[:, -1])
    mu = spec.mu_scale * th
    sgn = np.sign(sigma)
    u1 = -r - mu * sgn
    _check_finite(r, mu, u1)
    return hidden, r, th, mu, sgn, u1


def actor_forward(params: NetParams, e, sigma):
    """Returns ``(r, mu, u1)``; scalars for a single state, arrays for a batch."""
    e, single = _batch(e)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64), (e.shape[0],))
    _, r, _, mu, _, u1 = _actor_pass(params, e, sigma)
    if single:
        return float(r[0]), float(mu[0]), float(u1[0])
    return r, mu, u1


def actor_backward(params: NetParams, e, sigma, d_u1):
    """Gradient of ``sum(d_u1 * u1)`` with respect to the actor parameters.

    ``sign(sigma)`` is treated as a constant.
    """
    e, _ = _batch(e)
    (stack,) = params.spec.stacks()
    hidden, r, th, mu, sgn, u1 = _actor_pass(params, e, sigma)
    d_out = np.empty((e.shape[0], 2))
    d_out[:, 0] = -d_u1
    d_out[:, 1] = -d_u1 * sgn * params.spec.mu_scale * (1.0 - th * th)
    grad, _ = stack.backward(params.flat, e, hidden, d_out)
    return grad


# ------------------------------------------------------------------- critic


def _critic_pass(params, e, u1):
    s_stack, a_stack, t_stack = params.spec.stacks()
    a_in = np.asarray(u1, dtype=np.float64).reshape(-1, 1)
    hs = s_stack.forward(params.flat, e)
    ha = a_stack.forward(params.flat, a_in)
    cat = np.concatenate((hs[:, -s_stack.n_out:], ha[:, -a_stack.n_out:]), axis=1)
    ht = t_stack.forward(params.flat, cat)
    q = ht[:, -1]
    _check_finite(q)
    return (a_in, hs, ha, cat, ht), q


def critic_forward(params: NetParams, e, u1):
    e, single = _batch(e)
    _, q = _critic_pass(params, e, np.broadcast_to(np.asarray(u1, dtype=np.float64), (e.shape[0],)))
    return float(q[0]) if single else q


def _critic_backward(params, e, cache, d_q):
    s_stack, a_stack, t_stack = params.spec.stacks()
    a_in, hs, ha, cat, ht = cache
    g_t, d_cat = t_stack.backward(params.flat, cat, ht, d_q.reshape(-1, 1))
    ns = s_stack.n_out
    g_s, _ = s_stack.backward(params.flat, e, hs, d_cat[:, :ns])
    g_a, d_a = a_stack.backward(params.flat, a_in, ha, d_cat[:, ns:])
    return np.concatenate((g_s, g_a, g_t)), d_a[:, 0]


def critic_gradients(params: NetParams, e, u1, y):
    """Mean squared TD error and its gradient: ``mean((Q(e, u1) - y)^2)``."""
    e, _ = _batch(e)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if e.shape[0] == 0:
        raise ValueError("empty batch")
    cache, q = _critic_pass(params, e, u1)
    resid = q - y
    loss = float(np.mean(resid * resid))
    grad, _ = _critic_backward(params, e, cache, 2.0 * resid / e.shape[0])
    return loss, grad


def critic_action_gradient(params: NetParams, e, u1):
    """``dQ/du1`` for every batch row, plus ``Q`` itself."""
    e, _ = _batch(e)
    cache, q = _critic_pass(params, e, u1)
    _, d_u1 = _critic_backward(params, e, cache, np.ones(e.shape[0]))
    return q, d_u1


def actor_gradients(actor: NetParams, critic: NetParams, e, sigma):
    """Gradient of ``mean(Q(e, u1(e, sigma)))`` with respect to the actor.

    Returns ``(mean_q, grad)``; ascend along ``grad`` to improve the policy.
    """
    e, _ = _batch(e)
    if e.shape[0] == 0:
        raise ValueError("empty batch")
    sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64), (e.shape[0],))
    _, _, u1 = actor_forward(actor, e, sigma)
    q, d_u1 = critic_action_gradient(critic, e, u1)
    grad = actor_backward(actor, e, sigma, d_u1 / e.shape[0])
    return float(np.mean(q)), grad


# ------------------------------------------------------------------ updates


def apply_update(params: NetParams, grad, lr, direction="descent") -> NetParams:
    if direction == "descent":
        step = -lr
    elif direction == "ascent":
        step = lr
    else:
        raise ValueError(f"direction must be 'descent' or 'ascent', got {direction!r}")
    new = params.flat + step * np.asarray(grad)
    _check_finite(new)
    return params.with_flat(new)


def soft_update(target: NetParams, source: NetParams, tau) -> NetParams:
    """``target <- tau * source + (1 - tau) * target``."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau!r}")
    if target.spec != source.spec:
        raise SchemaError("soft update between networks of different shape")
    return target.with_flat(tau * source.flat + (1.0 - tau) * target.flat)


class Adam:
    """Adaptive-moment step, an opt-in alternative to the plain update."""

    def __init__(self, size, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0

    def step(self, params: NetParams, grad, lr, direction="descent") -> NetParams:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return apply_update(params, m_hat / (np.sqrt(v_hat) + self.eps), lr, direction)


class PlainGradient:
    def step(self, params, grad, lr, direction="descent"):
        return apply_update(params, grad, lr, direction)


def make_optimizer(name, size):
    if name == "sgd":
        return PlainGradient()
    if name == "adam":
        return Adam(size)
    raise ValueError(f"unknown optimizer {name!r}")


# -------------------------------------------------------------- checkpoints


def _spec_from_document(kind, d):
    if kind == "actor":
        return ActorSpec.from_dict(d)
    if kind == "critic":
        return CriticSpec.from_dict(d)
    raise SchemaError(f"unknown network kind {kind!r}")


def to_document(params: NetParams):
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": params.spec.kind,
        "spec": params.spec.as_dict(),
        "layers": [{"W": w.tolist(), "b": b.tolist()} for w, b in params.blocks()],
    }


def from_document(doc, expected_spec=None) -> NetParams:
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"unsupported checkpoint schema_version {doc.get('schema_version')!r}")
    try:
        spec = _spec_from_document(doc["kind"], doc["spec"])
        layer_docs = doc["layers"]
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed checkpoint: {exc}") from exc
    if expected_spec is not None and spec != expected_spec:
        raise SchemaError(f"checkpoint spec {spec} does not match configured {expected_spec}")
    params = NetParams(spec, np.zeros(sum(s.size for s in spec.stacks())))
    blocks = params.blocks()
    if len(layer_docs) != len(blocks):
        raise SchemaError(f"checkpoint has {len(layer_docs)} layers, spec needs {len(blocks)}")
    for i, ((w, b), ld) in enumerate(zip(blocks, layer_docs)):
        w_in = np.asarray(ld["W"], dtype=np.float64)
        b_in = np.asarray(ld["b"], dtype=np.float64)
        if w_in.shape != w.shape or b_in.shape != b.shape:
            raise SchemaError(f"layer {i}: expected W{w.shape}/b{b.shape}, got W{w_in.shape}/b{b_in.shape}")
        w[...] = w_in
        b[...] = b_in
    if not np.all(np.isfinite(params.flat)):
        raise SchemaError("checkpoint contains non-finite parameters")
    return params


def save_checkpoint(params: NetParams, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_document(params)))
    return path


def load_checkpoint(path, expected_spec=None) -> NetParams:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not a JSON checkpoint ({exc})") from exc
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: checkpoint must be a JSON object")
    return from_document(doc, expected_spec)
