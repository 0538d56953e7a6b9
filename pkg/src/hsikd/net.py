"""Dense ReLU classifier with hand-derived backprop, Adam, and checkpoint IO.

The same architecture serves as teacher (phase 1, then frozen) and student
(phase 2, initialized from the teacher's weights). The output head always
spans the full class set so the teacher emits logits for incremental classes
it has never trained on. Parameters are float64; initialization is He-uniform
from a seeded PRNG, so identical seeds give bit-identical models.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, FormatError, UpdateError, ValidationError

CHECKPOINT_MAGIC = "hsikd-checkpoint-v1"


@dataclass
class MlpModel:
    layer_dims: list[int]
    weights: list[np.ndarray]  # per layer, shape (d_out, d_in)
    biases: list[np.ndarray]  # per layer, shape (d_out,)
    activation: str = "relu"
    init_seed: int | None = None

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def n_inputs(self) -> int:
        return self.layer_dims[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_dims[-1]


@dataclass
class ForwardCache:
    """Per-layer inputs and pre-activations saved by forward for backward."""

    inputs: list[np.ndarray]
    preacts: list[np.ndarray]
    batch_size: int


@dataclass
class GradientSet:
    d_weights: list[np.ndarray]
    d_biases: list[np.ndarray]


@dataclass
class AdamState:
    m_weights: list[np.ndarray]
    v_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_biases: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_model(layer_dims, seed: int) -> MlpModel:
    """He-uniform fan-in initialization; biases start at zero."""
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2:
        raise ValidationError("layer_dims needs at least input and output sizes")
    if any(d < 1 for d in dims):
        raise ValidationError("all layer dimensions must be positive")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / d_in)
        weights.append(rng.uniform(-limit, limit, size=(d_out, d_in)))
        biases.append(np.zeros(d_out))
    return MlpModel(layer_dims=dims, weights=weights, biases=biases, init_seed=seed)


def forward(model: MlpModel, batch) -> tuple[np.ndarray, ForwardCache]:
    """Row-wise forward pass. ReLU on hidden layers, identity on the output."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError("batch must be 2-D (samples, features)")
    if x.shape[1] != model.n_inputs:
        raise DimensionError(
            f"batch has {x.shape[1]} features, model expects {model.n_inputs}"
        )
    inputs, preacts = [], []
    a = x
    last = model.n_layers - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        inputs.append(a)
        z = a @ w.T + b
        preacts.append(z)
        a = z if i == last else np.maximum(z, 0.0)
    return a, ForwardCache(inputs=inputs, preacts=preacts, batch_size=x.shape[0])


def forward_logits(model: MlpModel, batch) -> np.ndarray:
    """Forward pass without keeping the cache (teacher/evaluation use)."""
    logits, _ = forward(model, batch)
    return logits


def backward(model: MlpModel, cache: ForwardCache, d_logits) -> GradientSet:
    """Exact parameter gradients of the loss whose logit-gradient is d_logits.

    The caller owns any 1/n batch scaling: gradients are summed over the rows
    exactly as supplied.
    """
    g = np.asarray(d_logits, dtype=np.float64)
    if len(cache.inputs) != model.n_layers:
        raise ValidationError("cache does not match model depth")
    if g.shape != (cache.batch_size, model.n_outputs):
        raise ValidationError(
            f"d_logits shape {g.shape} does not match cached batch "
            f"({cache.batch_size}, {model.n_outputs})"
        )
    d_weights = [None] * model.n_layers
    d_biases = [None] * model.n_layers
    dz = g
    for i in range(model.n_layers - 1, -1, -1):
        d_weights[i] = dz.T @ cache.inputs[i]
        d_biases[i] = dz.sum(axis=0)
        if i > 0:
            da = dz @ model.weights[i]
            dz = da * (cache.preacts[i - 1] > 0.0)
    return GradientSet(d_weights=d_weights, d_biases=d_biases)


def adam_init(model: MlpModel) -> AdamState:
    return AdamState(
        m_weights=[np.zeros_like(w) for w in model.weights],
        v_weights=[np.zeros_like(w) for w in model.weights],
        m_biases=[np.zeros_like(b) for b in model.biases],
        v_biases=[np.zeros_like(b) for b in model.biases],
    )


def adam_step(model: MlpModel, grads: GradientSet, state: AdamState, lr: float) -> None:
    """One in-place Adam update with bias correction."""
    if not (lr > 0):
        raise ValidationError("learning rate must be positive")
    if len(grads.d_weights) != model.n_layers:
        raise ValidationError("gradient set does not match model depth")
    for dw, db, w, b in zip(grads.d_weights, grads.d_biases, model.weights, model.biases):
        if dw.shape != w.shape or db.shape != b.shape:
            raise ValidationError("gradient shapes do not match parameters")
        if not (np.isfinite(dw).all() and np.isfinite(db).all()):
            raise UpdateError("non-finite gradient; step aborted")

    state.step += 1
    t = state.step
    b1, b2, eps = state.beta1, state.beta2, state.eps
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for i in range(model.n_layers):
        for g, m, v, theta in (
            (grads.d_weights[i], state.m_weights[i], state.v_weights[i], model.weights[i]),
            (grads.d_biases[i], state.m_biases[i], state.v_biases[i], model.biases[i]),
        ):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            theta -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def clone_params(src: MlpModel) -> MlpModel:
    """Deep copy; mutating either model never affects the other."""
    return MlpModel(
        layer_dims=list(src.layer_dims),
        weights=[w.copy() for w in src.weights],
        biases=[b.copy() for b in src.biases],
        activation=src.activation,
        init_seed=src.init_seed,
    )


def save_checkpoint(model: MlpModel, path, class_names) -> None:
    """Write a checkpoint: one JSON header line, then raw little-endian float64
    parameter blocks in layer order, weights before biases."""
    header = {
        "magic": CHECKPOINT_MAGIC,
        "layer_dims": list(model.layer_dims),
        "activation": model.activation,
        "seed": model.init_seed,
        "classes": list(class_names),
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header).encode("utf-8"))
        f.write(b"\n")
        for w, b in zip(model.weights, model.biases):
            f.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[MlpModel, list[str]]:
    """Bit-exact inverse of save_checkpoint."""
    with open(path, "rb") as f:
        header_line = f.readline()
        blob = f.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"unreadable checkpoint header: {e}") from e
    if header.get("magic") != CHECKPOINT_MAGIC:
        raise FormatError("not a model checkpoint (bad magic)")
    dims = [int(d) for d in header["layer_dims"]]
    expected = sum(
        8 * (d_out * d_in + d_out) for d_in, d_out in zip(dims[:-1], dims[1:])
    )
    if len(blob) != expected:
        raise FormatError(
            f"parameter block is {len(blob)} bytes, expected {expected}"
        )
    weights, biases = [], []
    offset = 0
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        nw = d_out * d_in * 8
        weights.append(
            np.frombuffer(blob, dtype="<f8", count=d_out * d_in, offset=offset)
            .reshape(d_out, d_in)
            .copy()
        )
        offset += nw
        biases.append(
            np.frombuffer(blob, dtype="<f8", count=d_out, offset=offset).copy()
        )
        offset += d_out * 8
    model = MlpModel(
        layer_dims=dims,
        weights=weights,
        biases=biases,
        activation=header.get("activation", "relu"),
        init_seed=header.get("seed"),
    )
    return model, [str(c) for c in header.get("classes", [])]
