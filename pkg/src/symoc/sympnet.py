"""Symplectic networks: static G-layers and time-dependent shear layers.

The time-dependent network alternates two parameter shears on phase vectors
z = (x, p) in R^{2n}:

    low:  p <- p + K^T (a(t) * (K x + b))         (costate update)
    up:   x <- x + K^T (s(t) a(t) * (K p + b))    (state update)

where a(t) is a small scalar-input MLP per layer and s(t) = t(T - t) in the
boundary-value-preserving variant (s = 1 otherwise).  Each shear has unit
block-triangular Jacobian with a symmetric off-diagonal block, so the
composition is exactly symplectic for every t; with s(0) = s(T) = 0 the
state half passes through unchanged at both ends of the horizon.  There is
deliberately no elementwise nonlinearity in z: every map is affine in z,
which the trainer's interpolation identity relies on.

The earlier G-SympNet (static, with an activation) is kept for completeness;
it is not part of the training path.
"""

from dataclasses import dataclass, replace

import jax
import jax.numpy as jnp
import numpy as np

from . import _config  # noqa: F401

KIND_LOW = "low"
KIND_UP = "up"


@dataclass(frozen=True)
class PhasePoint:
    """State/costate pair; convenience wrapper over a flat 2n vector."""

    x: np.ndarray
    p: np.ndarray

    @classmethod
    def from_vec(cls, z):
        z = np.asarray(z)
        n = z.shape[-1] // 2
        return cls(x=z[..., :n], p=z[..., n:])

    @property
    def vec(self):
        return np.concatenate([np.asarray(self.x), np.asarray(self.p)], axis=-1)


def _as_vec(z):
    if isinstance(z, PhasePoint):
        return jnp.asarray(z.vec, dtype=float)
    return jnp.asarray(z, dtype=float)


# ---------------------------------------------------------------------------
# scalar-input time networks a(t): R -> R^width
# ---------------------------------------------------------------------------


def init_time_net(rng, width, sublayers=2, subwidth=16, final_scale=0.0):
    """MLP weights for a(t); final layer scaled (0 gives a == 0 identically)."""
    dims = [1] + [subwidth] * sublayers + [width]
    ws, bs = [], []
    for i, (din, dout) in enumerate(zip(dims[:-1], dims[1:])):
        w = rng.normal(size=(dout, din)) / np.sqrt(din)
        b = np.zeros(dout)
        if i == len(dims) - 2:
            w *= final_scale
            b = final_scale * rng.normal(size=dout)
        ws.append(w)
        bs.append(b)
    return {"w": ws, "b": bs}


def time_net_value(tparams, t):
    """a(t); first layer affine in t, tanh between hidden layers."""
    val = tparams["w"][0][:, 0] * t + tparams["b"][0]
    for w, b in zip(tparams["w"][1:], tparams["b"][1:]):
        val = w @ jnp.tanh(val) + b
    return val


def time_net_value_and_slope(tparams, t):
    """(a(t), a'(t)) by forward propagation of dual numbers."""
    val = tparams["w"][0][:, 0] * t + tparams["b"][0]
    dot = tparams["w"][0][:, 0]
    for w, b in zip(tparams["w"][1:], tparams["b"][1:]):
        tv = jnp.tanh(val)
        dot = w @ ((1.0 - tv * tv) * dot)
        val = w @ tv + b
    return val, dot


# ---------------------------------------------------------------------------
# time-dependent shear network
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TimeSympNet:
    """Alternating time-dependent shear layers on R^{2n}.

    ``kinds`` lists the layer kinds in application order; ``params`` is the
    matching list of {"k", "bias", "time"} parameter dicts (a jax pytree).
    """

    half_dim: int
    horizon: float
    kinds: tuple
    params: list
    boundary_preserving: bool = True

    def __post_init__(self):
        if len(self.kinds) != len(self.params):
            raise ValueError("one parameter set per layer required")
        for kind, layer in zip(self.kinds, self.params):
            if kind not in (KIND_LOW, KIND_UP):
                raise ValueError(f"unknown layer kind {kind!r}")
            k = layer["k"]  # shape check only: the leaf may be a jax tracer
            if k.ndim != 2 or k.shape[1] != self.half_dim:
                raise ValueError("layer matrix must be (width, half_dim)")

    @property
    def num_layers(self) -> int:
        return len(self.kinds)

    def with_params(self, params) -> "TimeSympNet":
        return replace(self, params=params)


def build_time_symp_net(
    half_dim,
    horizon,
    num_pairs=3,
    width=16,
    sublayers=2,
    subwidth=16,
    boundary_preserving=True,
    up_first=True,
    seed=0,
    time_scale=0.0,
) -> TimeSympNet:
    """Fresh network; with time_scale=0 it is exactly the identity map.

    K entries are N(0, 1/width); biases start at zero; the final layer of
    every a(t) net is scaled by ``time_scale`` (zero by default so training
    starts from the unmodified latent trajectory).
    """
    rng = np.random.default_rng(seed)
    pair = (KIND_UP, KIND_LOW) if up_first else (KIND_LOW, KIND_UP)
    kinds = pair * num_pairs
    params = []
    for _ in kinds:
        params.append(
            {
                "k": rng.normal(size=(width, half_dim)) / np.sqrt(width),
                "bias": np.zeros(width),
                "time": init_time_net(rng, width, sublayers, subwidth, final_scale=time_scale),
            }
        )
    return TimeSympNet(
        half_dim=half_dim,
        horizon=float(horizon),
        kinds=kinds,
        params=params,
        boundary_preserving=boundary_preserving,
    )


def _check_time(t, horizon):
    if isinstance(t, jax.core.Tracer):
        return
    tf = float(t)
    if tf < -1e-12 or tf > horizon + 1e-12:
        raise ValueError(f"time {tf} outside [0, {horizon}]")


def _apply_layers(kinds, params, boundary_preserving, horizon, n, z, t):
    x, p = z[:n], z[n:]
    scale = t * (horizon - t) if boundary_preserving else 1.0
    for kind, layer in zip(kinds, params):
        k, b = layer["k"], layer["bias"]
        a = time_net_value(layer["time"], t)
        if kind == KIND_LOW:
            p = p + k.T @ (a * (k @ x + b))
        else:
            x = x + k.T @ ((scale * a) * (k @ p + b))
    return jnp.concatenate([x, p])


def forward(net: TimeSympNet, z, t):
    """Apply the network at time t to a phase vector (x, p)."""
    _check_time(t, net.horizon)
    z = _as_vec(z)
    if z.shape != (2 * net.half_dim,):
        raise ValueError(f"phase vector must have length {2 * net.half_dim}")
    return _apply_layers(
        net.kinds, net.params, net.boundary_preserving, net.horizon, net.half_dim, z, t
    )


def tl_forward(net: TimeSympNet, z, t):
    """Forward pass of the plain (non-boundary-preserving) variant."""
    if net.boundary_preserving:
        raise ValueError("tl_forward expects a net built with boundary_preserving=False")
    return forward(net, z, t)


def bvp_forward(net: TimeSympNet, z, t):
    """Forward pass of the boundary-value-preserving variant."""
    if not net.boundary_preserving:
        raise ValueError("bvp_forward expects a boundary-preserving net")
    return forward(net, z, t)


def _jvp_layers(kinds, params, boundary_preserving, horizon, n, v, t):
    vx, vp = v[:n], v[n:]
    scale = t * (horizon - t) if boundary_preserving else 1.0
    for kind, layer in zip(kinds, params):
        k = layer["k"]
        a = time_net_value(layer["time"], t)
        if kind == KIND_LOW:
            vp = vp + k.T @ (a * (k @ vx))
        else:
            vx = vx + k.T @ ((scale * a) * (k @ vp))
    return jnp.concatenate([vx, vp])


def jacobian_vp(net: TimeSympNet, z, t, v):
    """Phase-space Jacobian times v, layer by layer.

    The layers are affine in z, so the product is independent of z; the
    argument is kept for interface symmetry with forward().
    """
    _check_time(t, net.horizon)
    del z
    v = jnp.asarray(v, dtype=float)
    if v.shape != (2 * net.half_dim,):
        raise ValueError(f"tangent vector must have length {2 * net.half_dim}")
    return _jvp_layers(
        net.kinds, net.params, net.boundary_preserving, net.horizon, net.half_dim, v, t
    )


def _time_derivative_layers(kinds, params, boundary_preserving, horizon, n, z, t):
    x, p = z[:n], z[n:]
    dx = jnp.zeros_like(x)
    dp = jnp.zeros_like(p)
    if boundary_preserving:
        scale = t * (horizon - t)
        dscale = horizon - 2.0 * t
    else:
        scale, dscale = 1.0, 0.0
    for kind, layer in zip(kinds, params):
        k, b = layer["k"], layer["bias"]
        a, adot = time_net_value_and_slope(layer["time"], t)
        if kind == KIND_LOW:
            # Jacobian of the layer applied to the incoming rate, plus the
            # explicit t-dependence at the current value
            dp = dp + k.T @ (a * (k @ dx)) + k.T @ (adot * (k @ x + b))
            p = p + k.T @ (a * (k @ x + b))
        else:
            c = scale * a
            cdot = dscale * a + scale * adot
            dx = dx + k.T @ (c * (k @ dp)) + k.T @ (cdot * (k @ p + b))
            x = x + k.T @ (c * (k @ p + b))
    return jnp.concatenate([dx, dp])


def time_derivative(net: TimeSympNet, z, t):
    """d/dt of forward(net, z, t) holding the input z fixed.

    Propagates the product rule through the layer stack: later layers see
    time-dependent inputs, so each contributes its Jacobian applied to the
    accumulated rate plus its own explicit t-derivative, with
    d/dt [t(T-t) a(t)] = (T-2t) a(t) + t(T-t) a'(t) on state updates.
    """
    _check_time(t, net.horizon)
    z = _as_vec(z)
    return _time_derivative_layers(
        net.kinds, net.params, net.boundary_preserving, net.horizon, net.half_dim, z, t
    )


def phase_jacobian(net: TimeSympNet, t):
    """Assembled 2n x 2n Jacobian (constant in z for these affine layers)."""
    _check_time(t, net.horizon)
    n = net.half_dim
    scale = t * (net.horizon - t) if net.boundary_preserving else 1.0
    jac = jnp.eye(2 * n)
    for kind, layer in zip(net.kinds, net.params):
        k = jnp.asarray(layer["k"])
        a = time_net_value(layer["time"], t)
        block = k.T @ (a[:, None] * k)
        step = jnp.eye(2 * n)
        if kind == KIND_LOW:
            step = step.at[n:, :n].set(block)
        else:
            step = step.at[:n, n:].set(scale * block)
        jac = step @ jac
    return jac


def jacobian_symplectic_defect(jac) -> float:
    """Max-norm of G^T J G - J for a phase-space Jacobian G."""
    jac = np.asarray(jac)
    n = jac.shape[0] // 2
    j = np.zeros((2 * n, 2 * n))
    j[:n, n:] = np.eye(n)
    j[n:, :n] = -np.eye(n)
    return float(np.max(np.abs(jac.T @ j @ jac - j)))


def symplecticity_defect(net: TimeSympNet, z, t) -> float:
    """Symplecticity defect of the net's Jacobian at (z, t)."""
    del z  # affine layers: the Jacobian is z-independent
    return jacobian_symplectic_defect(phase_jacobian(net, t))


def param_gradient(net: TimeSympNet, loss_fn):
    """Reverse-mode gradient of a scalar loss over all network parameters.

    ``loss_fn`` maps a parameter pytree (same structure as net.params) to a
    scalar; returns (loss value, gradient pytree).  Differentiation passes
    through jacobian_vp and time_derivative evaluations inside the loss,
    which involves second derivatives of the layer maps.
    """
    value, grads = jax.value_and_grad(loss_fn)(net.params)
    return float(value), grads


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(net: TimeSympNet, path):
    """Write named tensors (+ shape headers) to an npz file, bit-exact."""
    data = {
        "meta_half_dim": np.asarray(net.half_dim),
        "meta_horizon": np.asarray(net.horizon),
        "meta_boundary_preserving": np.asarray(int(net.boundary_preserving)),
        "meta_kinds": np.asarray(net.kinds),
    }
    for i, layer in enumerate(net.params):
        tag = f"layer{i:03d}"
        data[f"{tag}_k"] = np.asarray(layer["k"], dtype=np.float64)
        data[f"{tag}_bias"] = np.asarray(layer["bias"], dtype=np.float64)
        for j, (w, b) in enumerate(zip(layer["time"]["w"], layer["time"]["b"])):
            data[f"{tag}_tw{j}"] = np.asarray(w, dtype=np.float64)
            data[f"{tag}_tb{j}"] = np.asarray(b, dtype=np.float64)
    np.savez(path, **data)


def load_checkpoint(path) -> TimeSympNet:
    with np.load(path, allow_pickle=False) as data:
        kinds = tuple(str(k) for k in data["meta_kinds"])
        params = []
        for i in range(len(kinds)):
            tag = f"layer{i:03d}"
            ws, bs, j = [], [], 0
            while f"{tag}_tw{j}" in data:
                ws.append(data[f"{tag}_tw{j}"])
                bs.append(data[f"{tag}_tb{j}"])
                j += 1
            params.append(
                {"k": data[f"{tag}_k"], "bias": data[f"{tag}_bias"], "time": {"w": ws, "b": bs}}
            )
        return TimeSympNet(
            half_dim=int(data["meta_half_dim"]),
            horizon=float(data["meta_horizon"]),
            kinds=kinds,
            params=params,
            boundary_preserving=bool(int(data["meta_boundary_preserving"])),
        )


# ---------------------------------------------------------------------------
# G-SympNet (static, with activation)
# ---------------------------------------------------------------------------


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))

_ACTIVATIONS = {"sigmoid": _sigmoid, "tanh": np.tanh}


@dataclass(frozen=True, eq=False)
class GSympLayer:
    """One static shear with activation: kind 'up' updates p from x."""

    k: np.ndarray
    scale: np.ndarray
    bias: np.ndarray
    kind: str
    activation: str = "sigmoid"

    def __post_init__(self):
        k = np.atleast_2d(np.asarray(self.k, dtype=float))
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "scale", np.asarray(self.scale, dtype=float).reshape(-1))
        object.__setattr__(self, "bias", np.asarray(self.bias, dtype=float).reshape(-1))
        if self.kind not in (KIND_LOW, KIND_UP):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.scale.shape != (k.shape[0],) or self.bias.shape != (k.shape[0],):
            raise ValueError("scale/bias must match the layer width")

    def _bump(self, half):
        return self.k.T @ (self.scale * _ACTIVATIONS[self.activation](self.k @ half + self.bias))


def gsymp_forward(layers, z):
    """Static G-SympNet forward pass; 'up' updates p from x, 'low' x from p."""
    z = np.array(_as_vec(z), dtype=float)
    n = z.shape[0] // 2
    x, p = z[:n].copy(), z[n:].copy()
    for layer in layers:
        if layer.k.shape[1] != n:
            raise ValueError("layer shape disagrees with the phase dimension")
        if layer.kind == KIND_UP:
            p = p + layer._bump(x)
        else:
            x = x + layer._bump(p)
    return np.concatenate([x, p])


def gsymp_inverse(layers, z):
    """Exact inverse: layers reversed, shear contributions subtracted."""
    z = np.array(_as_vec(z), dtype=float)
    n = z.shape[0] // 2
    x, p = z[:n].copy(), z[n:].copy()
    for layer in reversed(layers):
        if layer.k.shape[1] != n:
            raise ValueError("layer shape disagrees with the phase dimension")
        if layer.kind == KIND_UP:
            p = p - layer._bump(x)
        else:
            x = x - layer._bump(p)
    return np.concatenate([x, p])
