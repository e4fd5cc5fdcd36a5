"""
Encoder / LSTM / decoder sequence model with hand-written reverse-mode gradients.

The model maps a window of ``m`` state vectors to ``m`` state vectors:

    standardize -> 3 dense encoder layers -> LSTM over the latent sequence
    -> linear projection back to the latent width -> 3 dense decoder layers
    -> de-standardize

All arithmetic is double precision numpy on batches of shape ``(B, m, D)``.
Parameters live in one flat vector; ``ParameterLayout`` records the name,
shape and offset of every block so gradients and checkpoints share the same
ordering.

Author: F. Herbrand
License: MIT
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import NumericalOverflowError

logger = logging.getLogger(__name__)

ACTIVATIONS = ("tanh", "identity")


@dataclass(frozen=True)
class Architecture:
    """
    Network sizes.

    Attributes
    ----------
    input_dim : int
        State dimension D
    window_length : int
        Rows per window m
    latent_dim : int
        Width of the encoder output and LSTM projection
    encoder_widths : tuple of int
        Hidden widths of the encoder; the decoder mirrors them
    lstm_hidden : int
        LSTM state size
    activation : str
        ``"tanh"`` or ``"identity"`` on hidden dense layers
    """

    input_dim: int
    window_length: int
    latent_dim: int
    encoder_widths: Tuple[int, ...] = (32, 16)
    lstm_hidden: int = 32
    activation: str = "tanh"

    def __post_init__(self) -> None:
        object.__setattr__(self, "encoder_widths", tuple(int(w) for w in self.encoder_widths))
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        sizes = (self.input_dim, self.window_length, self.latent_dim, self.lstm_hidden) + self.encoder_widths
        if min(sizes) < 1:
            raise ValueError(f"all network sizes must be >= 1, got {sizes}")
        if len(self.encoder_widths) != 2:
            raise ValueError("encoder_widths must list the two hidden widths of the 3-layer encoder")

    @property
    def encoder_sizes(self) -> Tuple[int, ...]:
        return (self.input_dim,) + self.encoder_widths + (self.latent_dim,)

    @property
    def decoder_sizes(self) -> Tuple[int, ...]:
        return (self.latent_dim,) + self.encoder_widths[::-1] + (self.input_dim,)


@dataclass(frozen=True)
class LayoutEntry:
    name: str
    shape: Tuple[int, ...]
    offset: int

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


@dataclass(frozen=True)
class ParameterLayout:
    """Ordered parameter blocks of a flat parameter vector."""

    entries: Tuple[LayoutEntry, ...]

    @classmethod
    def for_architecture(cls, arch: Architecture) -> "ParameterLayout":
        shapes: List[Tuple[str, Tuple[int, ...]]] = []
        enc = arch.encoder_sizes
        for k in range(3):
            shapes += [(f"encoder{k}.W", (enc[k], enc[k + 1])), (f"encoder{k}.b", (enc[k + 1],))]
        H, L = arch.lstm_hidden, arch.latent_dim
        shapes += [
            ("lstm.Wx", (L, 4 * H)),
            ("lstm.Wh", (H, 4 * H)),
            ("lstm.b", (4 * H,)),
            ("projection.W", (H, L)),
            ("projection.b", (L,)),
        ]
        dec = arch.decoder_sizes
        for k in range(3):
            shapes += [(f"decoder{k}.W", (dec[k], dec[k + 1])), (f"decoder{k}.b", (dec[k + 1],))]

        entries = []
        offset = 0
        for name, shape in shapes:
            entries.append(LayoutEntry(name, shape, offset))
            offset += int(np.prod(shape))
        return cls(tuple(entries))

    @property
    def n_params(self) -> int:
        last = self.entries[-1]
        return last.offset + last.size

    def unpack(self, flat: np.ndarray) -> Dict[str, np.ndarray]:
        """Views into ``flat`` keyed by block name."""
        if flat.shape != (self.n_params,):
            raise ValueError(f"parameter vector must have length {self.n_params}, got {flat.shape}")
        return {e.name: flat[e.offset : e.offset + e.size].reshape(e.shape) for e in self.entries}

    def pack(self, blocks: Dict[str, np.ndarray]) -> np.ndarray:
        flat = np.zeros(self.n_params)
        for e in self.entries:
            flat[e.offset : e.offset + e.size] = blocks[e.name].reshape(-1)
        return flat


@dataclass(frozen=True)
class AdamState:
    """First and second moment estimates plus hyperparameters of ADAM."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, n_params: int, lr: float = 1e-3, **kwargs) -> "AdamState":
        return cls(np.zeros(n_params), np.zeros(n_params), 0, lr, **kwargs)


def adam_step(params: np.ndarray, grad: np.ndarray, state: AdamState) -> Tuple[np.ndarray, AdamState]:
    """
    One bias-corrected ADAM update.

    Returns new arrays; ``params`` and ``state`` are left untouched.

    Examples
    --------
    >>> p, s = adam_step(np.array([0.0]), np.array([1.0]), AdamState.fresh(1))
    >>> round(float(p[0]), 8)
    -0.001
    """
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise ValueError(
            f"length mismatch: params {params.shape}, grad {grad.shape}, moments {state.m.shape}"
        )
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * (grad * grad)
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_params, replace(state, m=m, v=v, step=t)


@dataclass(frozen=True)
class AutoSdeModel:
    """
    Parameters, architecture, fixed standardization and optimizer state.

    ``input_mean`` and ``input_std`` are constants of the model, set when it
    is created and never trained.
    """

    architecture: Architecture
    params: np.ndarray
    input_mean: np.ndarray
    input_std: np.ndarray
    optimizer: AdamState
    init_seed: int = 0
    metadata: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        layout = ParameterLayout.for_architecture(self.architecture)
        params = np.asarray(self.params, dtype=np.float64)
        if params.shape != (layout.n_params,):
            raise ValueError(f"expected {layout.n_params} parameters, got {params.shape}")
        if not np.all(np.isfinite(params)):
            raise NumericalOverflowError("model parameters must be finite")
        mean = np.asarray(self.input_mean, dtype=np.float64).reshape(self.architecture.input_dim)
        std = np.asarray(self.input_std, dtype=np.float64).reshape(self.architecture.input_dim)
        if np.any(std <= 0):
            raise ValueError("standardization scales must be positive")
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "input_mean", mean)
        object.__setattr__(self, "input_std", std)

    @property
    def layout(self) -> ParameterLayout:
        return ParameterLayout.for_architecture(self.architecture)

    @property
    def n_params(self) -> int:
        return self.params.size


def init_model(
    architecture: Architecture,
    seed: int = 0,
    input_mean: Optional[np.ndarray] = None,
    input_std: Optional[np.ndarray] = None,
    lr: float = 1e-3,
) -> AutoSdeModel:
    """
    Glorot-uniform weights, zero biases and a +1 LSTM forget-gate bias.

    Parameters
    ----------
    architecture : Architecture
        Network sizes
    seed : int
        Initialization seed
    input_mean, input_std : ndarray, optional
        Per-coordinate standardization; identity when omitted
    lr : float
        ADAM learning rate
    """
    layout = ParameterLayout.for_architecture(architecture)
    rng = np.random.default_rng(seed)
    blocks: Dict[str, np.ndarray] = {}
    for entry in layout.entries:
        if len(entry.shape) == 2:
            fan_in, fan_out = entry.shape
            if entry.name.startswith("lstm."):
                fan_out //= 4
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            blocks[entry.name] = rng.uniform(-limit, limit, size=entry.shape)
        else:
            blocks[entry.name] = np.zeros(entry.shape)
    H = architecture.lstm_hidden
    blocks["lstm.b"][H : 2 * H] = 1.0

    D = architecture.input_dim
    mean = np.zeros(D) if input_mean is None else np.asarray(input_mean, dtype=np.float64)
    std = np.ones(D) if input_std is None else np.asarray(input_std, dtype=np.float64)
    return AutoSdeModel(
        architecture, layout.pack(blocks), mean, std, AdamState.fresh(layout.n_params, lr=lr), int(seed)
    )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _activate(x: np.ndarray, name: str) -> np.ndarray:
    return np.tanh(x) if name == "tanh" else x


def _activation_grad(activated: np.ndarray, name: str) -> np.ndarray:
    return 1.0 - activated**2 if name == "tanh" else np.ones_like(activated)


@dataclass
class ForwardTape:
    """Intermediates kept by ``forward`` for the backward pass."""

    encoder_acts: List[np.ndarray]
    lstm_cache: Dict[str, np.ndarray]
    hidden: np.ndarray
    decoder_acts: List[np.ndarray]
    batched: bool


def _dense_stack(
    x: np.ndarray, p: Dict[str, np.ndarray], prefix: str, activation: str
) -> List[np.ndarray]:
    acts = [x]
    for k in range(3):
        pre = acts[-1] @ p[f"{prefix}{k}.W"] + p[f"{prefix}{k}.b"]
        acts.append(_activate(pre, activation) if k < 2 else pre)
    return acts


def _lstm_forward(latent: np.ndarray, p: Dict[str, np.ndarray], H: int) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    B, m, _ = latent.shape
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    cache = {k: np.empty((m, B, H)) for k in ("i", "f", "o", "g", "c", "c_prev", "h_prev", "tanh_c")}
    hidden = np.empty((B, m, H))
    for t in range(m):
        gates = latent[:, t] @ p["lstm.Wx"] + h @ p["lstm.Wh"] + p["lstm.b"]
        i = _sigmoid(gates[:, :H])
        f = _sigmoid(gates[:, H : 2 * H])
        o = _sigmoid(gates[:, 2 * H : 3 * H])
        g = np.tanh(gates[:, 3 * H :])
        cache["c_prev"][t] = c
        cache["h_prev"][t] = h
        c = f * c + i * g
        tanh_c = np.tanh(c)
        h = o * tanh_c
        for key, value in (("i", i), ("f", f), ("o", o), ("g", g), ("c", c), ("tanh_c", tanh_c)):
            cache[key][t] = value
        hidden[:, t] = h
    return hidden, cache


def forward(model: AutoSdeModel, window: np.ndarray) -> Tuple[np.ndarray, ForwardTape]:
    """
    Run the model on one window ``(m, D)`` or a batch ``(B, m, D)``.

    Returns
    -------
    output : ndarray
        Same shape as ``window``; row ``j`` predicts the state ``l - 1`` steps
        after input row ``j``
    tape : ForwardTape
        Cached intermediates for ``backward``

    Raises
    ------
    ValueError
        Wrong window shape
    NumericalOverflowError
        Non-finite input or activations
    """
    arch = model.architecture
    window = np.asarray(window, dtype=np.float64)
    batched = window.ndim == 3
    if not batched:
        window = window[None]
    if window.ndim != 3 or window.shape[1:] != (arch.window_length, arch.input_dim):
        raise ValueError(
            f"window must have shape (m={arch.window_length}, D={arch.input_dim}) "
            f"optionally batched, got {window.shape}"
        )
    if not np.all(np.isfinite(window)):
        raise NumericalOverflowError("non-finite values in the input window")

    p = model.layout.unpack(model.params)
    with np.errstate(over="ignore", invalid="ignore"):
        standardized = (window - model.input_mean) / model.input_std
        encoder_acts = _dense_stack(standardized, p, "encoder", arch.activation)
        hidden, lstm_cache = _lstm_forward(encoder_acts[-1], p, arch.lstm_hidden)
        projected = hidden @ p["projection.W"] + p["projection.b"]
        decoder_acts = _dense_stack(projected, p, "decoder", arch.activation)
        output = decoder_acts[-1] * model.input_std + model.input_mean
    if not np.all(np.isfinite(output)):
        raise NumericalOverflowError("non-finite activations in forward pass")

    tape = ForwardTape(encoder_acts, lstm_cache, hidden, decoder_acts, batched)
    return (output if batched else output[0]), tape


def _dense_backward(
    acts: List[np.ndarray],
    d_out: np.ndarray,
    p: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    prefix: str,
    activation: str,
) -> np.ndarray:
    delta = d_out
    for k in reversed(range(3)):
        if k < 2:
            delta = delta * _activation_grad(acts[k + 1], activation)
        a_in = acts[k]
        grads[f"{prefix}{k}.W"] = a_in.reshape(-1, a_in.shape[-1]).T @ delta.reshape(-1, delta.shape[-1])
        grads[f"{prefix}{k}.b"] = delta.reshape(-1, delta.shape[-1]).sum(axis=0)
        delta = delta @ p[f"{prefix}{k}.W"].T
    return delta


def backward(model: AutoSdeModel, tape: ForwardTape, d_output: np.ndarray) -> np.ndarray:
    """Gradient of a scalar w.r.t. the flat parameters, given its gradient w.r.t. ``output``."""
    arch = model.architecture
    H = arch.lstm_hidden
    layout = model.layout
    p = layout.unpack(model.params)
    grads: Dict[str, np.ndarray] = {}

    d_output = np.asarray(d_output, dtype=np.float64)
    if not tape.batched:
        d_output = d_output[None]

    d_projected = _dense_backward(
        tape.decoder_acts, d_output * model.input_std, p, grads, "decoder", arch.activation
    )
    hidden = tape.hidden
    grads["projection.W"] = hidden.reshape(-1, H).T @ d_projected.reshape(-1, arch.latent_dim)
    grads["projection.b"] = d_projected.reshape(-1, arch.latent_dim).sum(axis=0)
    d_hidden = d_projected @ p["projection.W"].T

    cache = tape.lstm_cache
    latent = tape.encoder_acts[-1]
    B, m, _ = latent.shape
    d_latent = np.empty_like(latent)
    dWx = np.zeros_like(p["lstm.Wx"])
    dWh = np.zeros_like(p["lstm.Wh"])
    db = np.zeros_like(p["lstm.b"])
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in reversed(range(m)):
        i, f, o, g = cache["i"][t], cache["f"][t], cache["o"][t], cache["g"][t]
        tanh_c = cache["tanh_c"][t]
        dh = d_hidden[:, t] + dh_next
        do = dh * tanh_c
        dc = dh * o * (1.0 - tanh_c**2) + dc_next
        di = dc * g
        dg = dc * i
        df = dc * cache["c_prev"][t]
        dc_next = dc * f
        d_gates = np.concatenate(
            [di * i * (1.0 - i), df * f * (1.0 - f), do * o * (1.0 - o), dg * (1.0 - g**2)], axis=1
        )
        dWx += latent[:, t].T @ d_gates
        dWh += cache["h_prev"][t].T @ d_gates
        db += d_gates.sum(axis=0)
        d_latent[:, t] = d_gates @ p["lstm.Wx"].T
        dh_next = d_gates @ p["lstm.Wh"].T
    grads["lstm.Wx"], grads["lstm.Wh"], grads["lstm.b"] = dWx, dWh, db

    _dense_backward(tape.encoder_acts, d_latent, p, grads, "encoder", arch.activation)
    flat = layout.pack(grads)
    if not np.all(np.isfinite(flat)):
        raise NumericalOverflowError("non-finite gradient")
    return flat


def split_targets(window: np.ndarray, extension: np.ndarray, l: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Overlap and extension targets for a shift of ``l``.

    Output row ``j`` is aligned with input row ``j + l - 1``; rows
    ``0..m-l`` therefore overlap the observed window and the last ``l - 1``
    rows fall past it, where ``extension`` supplies the targets.
    """
    window = np.asarray(window, dtype=np.float64)
    return window[..., l - 1 :, :], np.asarray(extension, dtype=np.float64)


def _check_shift(m: int, l: int) -> None:
    if not 1 < l <= m:
        raise ValueError(f"shift l must satisfy 1 < l <= m={m}, got {l}")


def loss_terms(
    output: np.ndarray, target_overlap: np.ndarray, target_sde: np.ndarray, l: int
) -> Tuple[float, float]:
    """
    Reconstruction loss on the overlap and SDE loss on the extension rows.

    Each is a per-window mean square with normalizers ``1/((m-l+1)D)`` and
    ``1/((l-1)D)``, then averaged over the batch.
    """
    output = np.asarray(output, dtype=np.float64)
    target_overlap = np.asarray(target_overlap, dtype=np.float64)
    target_sde = np.asarray(target_sde, dtype=np.float64)
    if output.ndim == 2:
        output, target_overlap, target_sde = output[None], target_overlap[None], target_sde[None]
    m = output.shape[-2]
    _check_shift(m, l)
    n_overlap = m - l + 1
    if target_overlap.shape != output[:, :n_overlap].shape or target_sde.shape != output[:, n_overlap:].shape:
        raise ValueError(
            f"targets {target_overlap.shape} / {target_sde.shape} do not match the output split "
            f"{output[:, :n_overlap].shape} / {output[:, n_overlap:].shape}"
        )
    l_ae = float(np.mean((output[:, :n_overlap] - target_overlap) ** 2))
    l_sde = float(np.mean((output[:, n_overlap:] - target_sde) ** 2))
    return l_ae, l_sde


def loss_and_grad(
    model: AutoSdeModel,
    window: np.ndarray,
    target_overlap: np.ndarray,
    target_sde: np.ndarray,
    l: int,
) -> Tuple[float, np.ndarray]:
    """
    Total loss ``L_AE + L_SDE`` and its exact gradient.

    Parameters
    ----------
    model : AutoSdeModel
        Current model
    window : ndarray
        ``(m, D)`` or ``(B, m, D)`` input
    target_overlap : ndarray
        ``(m - l + 1, D)`` targets for the leading output rows
    target_sde : ndarray
        ``(l - 1, D)`` targets for the trailing output rows
    l : int
        Prediction shift, ``1 < l <= m``

    Returns
    -------
    loss : float
    grad : ndarray
        Same length as ``model.params``
    """
    output, tape = forward(model, window)
    batched = tape.batched
    out3 = output if batched else output[None]
    overlap3 = np.asarray(target_overlap, dtype=np.float64)
    sde3 = np.asarray(target_sde, dtype=np.float64)
    if not batched:
        overlap3, sde3 = overlap3[None], sde3[None]
    l_ae, l_sde = loss_terms(out3, overlap3, sde3, l)

    B, m, D = out3.shape
    n_overlap = m - l + 1
    d_out = np.empty_like(out3)
    d_out[:, :n_overlap] = 2.0 * (out3[:, :n_overlap] - overlap3) / (B * n_overlap * D)
    d_out[:, n_overlap:] = 2.0 * (out3[:, n_overlap:] - sde3) / (B * (l - 1) * D)
    grad = backward(model, tape, d_out if batched else d_out[0])
    return l_ae + l_sde, grad


def gradient_check(
    model: AutoSdeModel,
    window: np.ndarray,
    target_overlap: np.ndarray,
    target_sde: np.ndarray,
    l: int,
    h: float = 1e-6,
    n_check: int = 64,
    seed: int = 0,
) -> float:
    """
    Largest relative error between ``loss_and_grad`` and central differences.

    A random subset of ``n_check`` parameters is probed. The relative error of
    one component is ``|g - fd| / max(|g|, |fd|, atol)`` with
    ``atol = 1e-3 * max(1, |loss|)``, which keeps near-zero components from
    dominating through roundoff.
    """
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")
    loss, grad = loss_and_grad(model, window, target_overlap, target_sde, l)
    atol = 1e-3 * max(1.0, abs(loss))
    rng = np.random.default_rng(seed)
    indices = rng.choice(model.n_params, size=min(n_check, model.n_params), replace=False)

    def total(params: np.ndarray) -> float:
        output, _ = forward(replace(model, params=params), window)
        return sum(loss_terms(output, target_overlap, target_sde, l))

    worst = 0.0
    for idx in indices:
        plus = model.params.copy()
        minus = model.params.copy()
        plus[idx] += h
        minus[idx] -= h
        fd = (total(plus) - total(minus)) / (2.0 * h)
        err = abs(grad[idx] - fd) / max(abs(grad[idx]), abs(fd), atol)
        worst = max(worst, err)
    return worst


def predict(model: AutoSdeModel, windows: np.ndarray, batch_size: int = 4096) -> np.ndarray:
    """Forward pass over many windows in chunks, discarding tapes."""
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim == 2:
        return forward(model, windows)[0]
    outputs = [forward(model, windows[s : s + batch_size])[0] for s in range(0, windows.shape[0], batch_size)]
    return np.concatenate(outputs, axis=0)
