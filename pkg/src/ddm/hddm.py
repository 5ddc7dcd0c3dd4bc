"""Deep tied-initialization autoencoder with per-class fine-tuning.

The network is a chain of 2M logistic layers: M encoder layers map the
input to a code, M decoder layers map the code back. Training minimizes,
over all frames of one class,

    J = sum_l ||x_l - xtilde_l||^2  +  wd * J_wd  +  sp * J_sp

where J_wd is the summed squared Frobenius norm of all weight matrices and
J_sp penalizes, for every hidden layer except the output, the KL
divergence between a small target activation rate and each unit's mean
activation over the batch. The reconstruction term sums over frames (no
1/batch factor); scale is absorbed by the learning rate.

Initialization copies greedily pre-trained GRBM layers into the encoder,
folds the pre-training standardization into the first layer's affine map,
and ties each decoder weight matrix to the transpose of its encoder
counterpart. Weights are tied at initialization only; fine-tuning updates
encoder and decoder parameters independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import container
from .errors import ConfigError, DataError, DimensionError, TrainingDiverged
from .grbm import PretrainResult
from .numeric import RngStream, sgd_step, sigmoid, sigmoid_prime_from_value

MODEL_MAGIC = b"DDMMDLv1"
RHO_BAR_EPS = 1e-7


@dataclass
class HddmParams:
    """Encoder/decoder weight and bias stacks.

    enc_w[i] has shape (n_{i+1}, n_i) for the size chain (n_0 ... n_M);
    the decoder mirrors the chain back down to n_0.
    """

    enc_w: list[np.ndarray]
    enc_b: list[np.ndarray]
    dec_w: list[np.ndarray]
    dec_b: list[np.ndarray]

    def __post_init__(self):
        m = len(self.enc_w)
        if m == 0 or len(self.enc_b) != m or len(self.dec_w) != m or len(self.dec_b) != m:
            raise DimensionError("encoder/decoder stacks must be non-empty and equally deep")
        sizes = self.layer_sizes
        for j, (w, b) in enumerate(zip(self.dec_w, self.dec_b)):
            want = (sizes[m - j - 1], sizes[m - j])
            if w.shape != want or b.shape != (want[0],):
                raise DimensionError(
                    f"decoder layer {j}: weight {w.shape} / bias {b.shape}, expected {want}"
                )

    @property
    def depth(self) -> int:
        return len(self.enc_w)

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        sizes = [self.enc_w[0].shape[1]]
        prev = sizes[0]
        for i, (w, b) in enumerate(zip(self.enc_w, self.enc_b)):
            if w.ndim != 2 or w.shape[1] != prev or b.shape != (w.shape[0],):
                raise DimensionError(
                    f"encoder layer {i}: weight {w.shape} / bias {b.shape} breaks the chain"
                )
            prev = w.shape[0]
            sizes.append(prev)
        return tuple(sizes)

    @property
    def input_dim(self) -> int:
        return self.enc_w[0].shape[1]

    def copy(self) -> "HddmParams":
        return HddmParams(
            [w.copy() for w in self.enc_w],
            [b.copy() for b in self.enc_b],
            [w.copy() for w in self.dec_w],
            [b.copy() for b in self.dec_b],
        )

    def _ordered(self):
        for i in range(self.depth):
            yield f"enc{i + 1}.W", self.enc_w[i]
            yield f"enc{i + 1}.b", self.enc_b[i]
        for j in range(self.depth):
            yield f"dec{j + 1}.W", self.dec_w[j]
            yield f"dec{j + 1}.b", self.dec_b[j]

    def to_flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for _, a in self._ordered()])

    def flat_blocks(self) -> list[tuple[str, int, int]]:
        blocks, offset = [], 0
        for name, a in self._ordered():
            blocks.append((name, offset, offset + a.size))
            offset += a.size
        return blocks

    @classmethod
    def from_flat(cls, flat: np.ndarray, layer_sizes) -> "HddmParams":
        sizes = [int(s) for s in layer_sizes]
        enc_w, enc_b, dec_w, dec_b = [], [], [], []
        pos = 0

        def take(shape):
            nonlocal pos
            n = int(np.prod(shape))
            arr = np.asarray(flat[pos : pos + n], dtype=np.float64).reshape(shape)
            pos += n
            return arr.copy()

        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            enc_w.append(take((n_out, n_in)))
            enc_b.append(take((n_out,)))
        rev = sizes[::-1]
        for n_in, n_out in zip(rev[:-1], rev[1:]):
            dec_w.append(take((n_out, n_in)))
            dec_b.append(take((n_out,)))
        if pos != len(flat):
            raise DimensionError(f"flat vector length {len(flat)} != expected {pos}")
        return cls(enc_w, enc_b, dec_w, dec_b)

    @classmethod
    def random(cls, layer_sizes, rng: RngStream, scale: float = 0.5) -> "HddmParams":
        """Small uniform random net; used for tests and raw (non-pretrained) runs."""
        sizes = [int(s) for s in layer_sizes]
        total = 0
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            total += n_out * n_in + n_out
        flat = rng.uniform(-scale, scale, size=2 * total)
        return cls.from_flat(flat, sizes)


@dataclass
class FineTuneConfig:
    """Per-class fine-tuning settings."""

    lr: float = 2e-3
    lr_decay: float = 0.6
    epochs: int = 20
    batch_videos: int = 10
    weight_decay: float = 0.01
    sparsity_weight: float = 0.5
    sparsity_target: float = 0.001

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if not 0 < self.lr_decay <= 1:
            raise ConfigError(f"lr decay must be in (0, 1], got {self.lr_decay}")
        for name in ("epochs", "batch_videos"):
            v = getattr(self, name)
            if not (isinstance(v, int) and v >= 1):
                raise ConfigError(f"{name} must be an integer >= 1, got {v!r}")
        if self.weight_decay < 0 or self.sparsity_weight < 0:
            raise ConfigError("regularization weights must be >= 0")
        if not 0 < self.sparsity_target < 1:
            raise ConfigError(
                f"sparsity target must be in (0, 1), got {self.sparsity_target}"
            )


@dataclass
class ClassModel:
    """Fine-tuned parameters for one class."""

    label: int
    params: HddmParams
    epochs_run: int = 0
    final_cost: float = float("nan")
    epoch_costs: list[float] = field(default_factory=list)


def _forward(batch: np.ndarray, p: HddmParams) -> list[np.ndarray]:
    """Activations [a_0 .. a_{2M}] for a (B, n_0) batch; a_0 is the input."""
    acts = [batch]
    a = batch
    for w, b in zip(p.enc_w, p.enc_b):
        a = sigmoid(a @ w.T + b)
        acts.append(a)
    for w, b in zip(p.dec_w, p.dec_b):
        a = sigmoid(a @ w.T + b)
        acts.append(a)
    return acts


def _as_batch(x: np.ndarray, dim: int, what: str) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise DimensionError(f"{what} has shape {np.shape(x)}, expected (*, {dim})")
    return arr, single


def encode(x: np.ndarray, p: HddmParams) -> tuple[np.ndarray, list[np.ndarray]]:
    """Code vector plus all encoder activations (input included)."""
    batch, single = _as_batch(x, p.input_dim, "input")
    acts = [batch]
    a = batch
    for w, b in zip(p.enc_w, p.enc_b):
        a = sigmoid(a @ w.T + b)
        acts.append(a)
    if single:
        acts = [v[0] for v in acts]
    return acts[-1], acts


def decode(h: np.ndarray, p: HddmParams) -> tuple[np.ndarray, list[np.ndarray]]:
    """Reconstruction plus all decoder activations (code included)."""
    code_dim = p.layer_sizes[-1]
    batch, single = _as_batch(h, code_dim, "code")
    acts = [batch]
    a = batch
    for w, b in zip(p.dec_w, p.dec_b):
        a = sigmoid(a @ w.T + b)
        acts.append(a)
    if single:
        acts = [v[0] for v in acts]
    return acts[-1], acts


def reconstruct(x: np.ndarray, model: "ClassModel | HddmParams") -> tuple[np.ndarray, float]:
    """decode(encode(x)) and the Euclidean reconstruction error."""
    p = model.params if isinstance(model, ClassModel) else model
    h, _ = encode(x, p)
    xt, _ = decode(h, p)
    return xt, float(np.linalg.norm(np.asarray(x, dtype=np.float64) - xt))


def _kl_terms(rho: float, rho_bar: np.ndarray) -> np.ndarray:
    return rho * np.log(rho / rho_bar) + (1.0 - rho) * np.log((1.0 - rho) / (1.0 - rho_bar))


def cost(
    batch: np.ndarray, p: HddmParams, cfg: FineTuneConfig
) -> tuple[float, float, float, float]:
    """Regularized cost and its components (J_reg, J_rec, J_wd, J_sp)."""
    batch, _ = _as_batch(batch, p.input_dim, "batch")
    if batch.shape[0] == 0:
        raise DataError("cost needs a non-empty batch")
    acts = _forward(batch, p)
    diff = acts[-1] - batch
    j_rec = float(np.sum(diff * diff))
    j_wd = float(sum(np.sum(w * w) for w in p.enc_w) + sum(np.sum(w * w) for w in p.dec_w))
    rho = cfg.sparsity_target
    j_sp = 0.0
    for a in acts[1:-1]:  # all hidden layers, output excluded
        rho_bar = np.clip(a.mean(axis=0), RHO_BAR_EPS, 1.0 - RHO_BAR_EPS)
        j_sp += float(np.sum(_kl_terms(rho, rho_bar)))
    j_reg = j_rec + cfg.weight_decay * j_wd + cfg.sparsity_weight * j_sp
    return j_reg, j_rec, j_wd, j_sp


def gradients(batch: np.ndarray, p: HddmParams, cfg: FineTuneConfig) -> np.ndarray:
    """Flat gradient of the regularized cost, packed like HddmParams.to_flat."""
    batch, _ = _as_batch(batch, p.input_dim, "batch")
    if batch.shape[0] == 0:
        raise DataError("gradients need a non-empty batch")
    m = p.depth
    weights = list(p.enc_w) + list(p.dec_w)
    acts = _forward(batch, p)
    n = batch.shape[0]
    rho = cfg.sparsity_target

    grads_w = [None] * (2 * m)
    grads_b = [None] * (2 * m)
    # downstream gradient wrt the activation of layer k (dJ/dA_k)
    g = 2.0 * (acts[-1] - batch)
    for k in range(2 * m, 0, -1):
        a_k = acts[k]
        if k < 2 * m:
            raw = a_k.mean(axis=0)
            rho_bar = np.clip(raw, RHO_BAR_EPS, 1.0 - RHO_BAR_EPS)
            interior = (raw > RHO_BAR_EPS) & (raw < 1.0 - RHO_BAR_EPS)
            kl_grad = np.where(
                interior, -rho / rho_bar + (1.0 - rho) / (1.0 - rho_bar), 0.0
            )
            g = g + cfg.sparsity_weight * kl_grad / n
        delta = g * sigmoid_prime_from_value(a_k)
        grads_w[k - 1] = delta.T @ acts[k - 1] + 2.0 * cfg.weight_decay * weights[k - 1]
        grads_b[k - 1] = delta.sum(axis=0)
        g = delta @ weights[k - 1]

    parts = []
    for i in range(m):
        parts.extend([grads_w[i].ravel(), grads_b[i].ravel()])
    for j in range(m):
        parts.extend([grads_w[m + j].ravel(), grads_b[m + j].ravel()])
    return np.concatenate(parts)


def init_from_pretraining(
    pretrained: "PretrainResult | list",
    input_mean: np.ndarray | None = None,
    input_std: np.ndarray | None = None,
) -> HddmParams:
    """Wire pre-trained GRBM layers into a tied autoencoder.

    Encoder layer i takes GRBM i's weights (transposed) and hidden biases;
    decoder layer M-i+1 is tied to the exact transpose of encoder layer i
    and takes GRBM i's visible biases. The standardization used during
    pre-training is folded into the first encoder layer's affine map and the
    last decoder bias, so the returned net consumes unstandardized inputs.
    """
    if isinstance(pretrained, PretrainResult):
        grbms = pretrained.grbms
        input_mean = pretrained.input_mean if input_mean is None else input_mean
        input_std = pretrained.input_std if input_std is None else input_std
    else:
        grbms = list(pretrained)
    if not grbms:
        raise DataError("need at least one pre-trained layer")
    for a, b in zip(grbms[:-1], grbms[1:]):
        if a.n_hidden != b.n_visible:
            raise DimensionError(
                f"GRBM chain mismatch: {a.weights.shape} feeds {b.weights.shape}"
            )
    n0 = grbms[0].n_visible
    mean = np.zeros(n0) if input_mean is None else np.asarray(input_mean, dtype=np.float64)
    std = np.ones(n0) if input_std is None else np.asarray(input_std, dtype=np.float64)
    if mean.shape != (n0,) or std.shape != (n0,):
        raise DimensionError("standardization stats do not match the input dimension")

    m = len(grbms)
    enc_w = [(grbms[0].weights / std[:, None]).T.copy()]
    enc_b = [grbms[0].hidden_bias - enc_w[0] @ mean]
    for g in grbms[1:]:
        enc_w.append(g.weights.T.copy())
        enc_b.append(g.hidden_bias.copy())
    dec_w, dec_b = [], []
    for j in range(m):
        src = m - 1 - j
        dec_w.append(enc_w[src].T.copy())
        if src == 0:
            dec_b.append(mean + std * grbms[0].visible_bias)
        else:
            dec_b.append(grbms[src].visible_bias.copy())
    return HddmParams(enc_w, enc_b, dec_w, dec_b)


def fine_tune(
    label: int,
    sequences,
    p0: HddmParams,
    cfg: FineTuneConfig,
    rng: RngStream,
) -> ClassModel:
    """Train a class-specific model on all frames of the class's sequences.

    SGD over video mini-batches (a batch contributes all frames of its
    videos); learning rate is multiplied by `lr_decay` after every epoch.
    """
    seqs = list(sequences)
    if not seqs:
        raise DataError(f"class {label}: no training sequences")
    frame_sets = [np.asarray(s.frames, dtype=np.float64) for s in seqs]
    for s, f in zip(seqs, frame_sets):
        if f.ndim != 2 or f.shape[1] != p0.input_dim:
            raise DimensionError(
                f"class {label}: sequence {s.video_id!r} frames {f.shape} "
                f"do not match model input dim {p0.input_dim}"
            )
    all_frames = np.concatenate(frame_sets, axis=0)
    sizes = p0.layer_sizes
    flat = p0.to_flat()
    blocks = p0.flat_blocks()
    lr = cfg.lr
    epoch_costs = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(frame_sets))
        for start in range(0, len(frame_sets), cfg.batch_videos):
            chosen = order[start : start + cfg.batch_videos]
            batch = np.concatenate([frame_sets[i] for i in chosen], axis=0)
            params = HddmParams.from_flat(flat, sizes)
            grad = gradients(batch, params, cfg)
            flat = sgd_step(flat, grad, lr, blocks=blocks)
        params = HddmParams.from_flat(flat, sizes)
        j_reg = cost(all_frames, params, cfg)[0]
        if not math.isfinite(j_reg):
            raise TrainingDiverged(
                f"class {label}: cost became non-finite at epoch {epoch}",
                last_params=HddmParams.from_flat(flat, sizes),
                epoch=epoch,
            )
        epoch_costs.append(j_reg)
        lr *= cfg.lr_decay
    return ClassModel(
        label=int(label),
        params=HddmParams.from_flat(flat, sizes),
        epochs_run=cfg.epochs,
        final_cost=epoch_costs[-1],
        epoch_costs=epoch_costs,
    )


# ---------------------------------------------------------------------------
# DDMMDLv1 model files


def write_model(
    path,
    models: list[ClassModel],
    config_echo: dict | None = None,
    seed: int | None = None,
    init_params: HddmParams | None = None,
) -> None:
    """Write class models (and optionally the shared initialization) to disk."""
    if not models and init_params is None:
        raise DataError("refusing to write a model file with neither classes nor init")
    ref = init_params if init_params is not None else models[0].params
    sizes = list(ref.layer_sizes)
    labels = [m.label for m in models]
    if len(set(labels)) != len(labels):
        raise DataError(f"duplicate class labels in model set: {sorted(labels)}")
    order = np.argsort(labels)
    models = [models[i] for i in order]
    for m in models:
        if list(m.params.layer_sizes) != sizes:
            raise DimensionError(
                f"class {m.label}: layer sizes {m.params.layer_sizes} != {tuple(sizes)}"
            )
    header = {
        "kind": "model",
        "layer_sizes": sizes,
        "depth": ref.depth,
        "class_labels": [m.label for m in models],
        "has_init": init_params is not None,
        "training": {
            str(m.label): {"epochs_run": m.epochs_run, "final_cost": m.final_cost}
            for m in models
        },
        "seed": seed,
        "config": config_echo or {},
    }
    arrays = []
    if init_params is not None:
        arrays.append(init_params.to_flat())
    arrays.extend(m.params.to_flat() for m in models)
    container.write_container(path, MODEL_MAGIC, header, arrays)


def read_model(path) -> tuple[list[ClassModel], HddmParams | None, dict]:
    """Read (class models, optional init params, header) from a model file."""
    header, payload = container.read_container(path, MODEL_MAGIC)
    if header.get("kind") != "model":
        raise DataError(f"{path}: expected a model file, got kind {header.get('kind')!r}")
    sizes = [int(s) for s in header["layer_sizes"]]
    per_model = 0
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        per_model += n_out * n_in + n_out
    per_model *= 2
    offset = 0
    init = None
    if header.get("has_init"):
        flat, offset = container.take_array(payload, offset, (per_model,))
        init = HddmParams.from_flat(flat, sizes)
    models = []
    for label in header["class_labels"]:
        flat, offset = container.take_array(payload, offset, (per_model,))
        meta = header.get("training", {}).get(str(label), {})
        models.append(
            ClassModel(
                label=int(label),
                params=HddmParams.from_flat(flat, sizes),
                epochs_run=int(meta.get("epochs_run", 0)),
                final_cost=float(meta.get("final_cost", float("nan"))),
            )
        )
    return models, init, header
