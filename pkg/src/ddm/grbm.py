"""Gaussian restricted Boltzmann machine with contrastive-divergence training.

Energy of a joint (v, h) configuration with real-valued visible units and
binary hidden units, shared visible standard deviation sigma:

    E(v, h) = sum_i (v_i - b_i)^2 / (2 sigma^2)
              - sum_j c_j h_j
              - sum_ij w_ij (v_i / sigma) h_j

Conditionals: p(h_j = 1 | v) = logistic(sum_i w_ij v_i + c_j) and
v_i | h ~ Normal(u_i, sigma^2) with u_i = b_i + sigma^2 sum_j w_ij h_j.
The model is trained with CD-k and per default sigma is fixed at 1 with
the inputs standardized, which makes the three expressions mutually
consistent as a Boltzmann model.

Greedy stacking trains one GRBM per encoder layer, feeding each layer the
deterministic hidden means of the previous one; sampling happens only
inside the negative phase of CD.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, DimensionError, NumericError
from .numeric import RngStream, sigmoid

STD_FLOOR = 1e-12


@dataclass
class GrbmParams:
    """One GRBM layer: weights (visible x hidden), biases, fixed sigma."""

    weights: np.ndarray
    visible_bias: np.ndarray
    hidden_bias: np.ndarray
    sigma: float = 1.0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.visible_bias = np.asarray(self.visible_bias, dtype=np.float64)
        self.hidden_bias = np.asarray(self.hidden_bias, dtype=np.float64)
        if self.weights.ndim != 2:
            raise DimensionError(f"weights must be 2-D, got shape {self.weights.shape}")
        v, h = self.weights.shape
        if self.visible_bias.shape != (v,) or self.hidden_bias.shape != (h,):
            raise DimensionError(
                f"bias shapes {self.visible_bias.shape}/{self.hidden_bias.shape} "
                f"inconsistent with weights {self.weights.shape}"
            )
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")

    @property
    def n_visible(self) -> int:
        return self.weights.shape[0]

    @property
    def n_hidden(self) -> int:
        return self.weights.shape[1]


@dataclass
class CdConfig:
    """Contrastive-divergence training settings."""

    lr: float = 1e-3
    epochs: int = 50
    batch_size: int = 32
    cd_steps: int = 1
    init_range: float = 0.005
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        for name in ("epochs", "batch_size", "cd_steps"):
            v = getattr(self, name)
            if not (isinstance(v, int) and v >= 1):
                raise ConfigError(f"{name} must be an integer >= 1, got {v!r}")
        if not self.init_range > 0:
            raise ConfigError(f"init range must be positive, got {self.init_range}")


@dataclass
class PretrainResult:
    """Greedy layer-wise pre-training output plus the input standardization."""

    grbms: list[GrbmParams]
    input_mean: np.ndarray
    input_std: np.ndarray
    epoch_errors: list[list[float]] = field(default_factory=list)


def _check_vh(v: np.ndarray, h: np.ndarray, p: GrbmParams) -> None:
    if v.shape[-1] != p.n_visible:
        raise DimensionError(f"visible length {v.shape[-1]} != {p.n_visible}")
    if h.shape[-1] != p.n_hidden:
        raise DimensionError(f"hidden length {h.shape[-1]} != {p.n_hidden}")


def energy(v: np.ndarray, h: np.ndarray, p: GrbmParams) -> float:
    """Joint energy of one (v, h) configuration."""
    v = np.asarray(v, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    _check_vh(v, h, p)
    quad = float(np.sum((v - p.visible_bias) ** 2) / (2.0 * p.sigma**2))
    return quad - float(p.hidden_bias @ h) - float((v / p.sigma) @ (p.weights @ h))


def prob_h_given_v(v: np.ndarray, p: GrbmParams) -> np.ndarray:
    """Bernoulli means of the hidden units; accepts a vector or a batch."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != p.n_visible:
        raise DimensionError(f"visible length {v.shape[-1]} != {p.n_visible}")
    return sigmoid(v @ p.weights + p.hidden_bias)


def mean_v_given_h(h: np.ndarray, p: GrbmParams) -> np.ndarray:
    """Gaussian means of the visible units; accepts a vector or a batch."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] != p.n_hidden:
        raise DimensionError(f"hidden length {h.shape[-1]} != {p.n_hidden}")
    return p.visible_bias + p.sigma**2 * (h @ p.weights.T)


def sample_h(means: np.ndarray, rng: RngStream) -> np.ndarray:
    return (rng.uniform(size=means.shape) < means).astype(np.float64)


def sample_v(h: np.ndarray, p: GrbmParams, rng: RngStream) -> np.ndarray:
    u = mean_v_given_h(h, p)
    return u + p.sigma * rng.normal(size=u.shape)


def reconstruction_error(batch: np.ndarray, p: GrbmParams) -> float:
    """Mean squared error of the deterministic mean-field reconstruction."""
    recon = mean_v_given_h(prob_h_given_v(batch, p), p)
    return float(np.mean((batch - recon) ** 2))


def cd_update(
    batch: np.ndarray,
    p: GrbmParams,
    cfg: CdConfig,
    rng: RngStream,
    where: str = "",
) -> tuple[GrbmParams, float]:
    """One CD-k gradient step on a batch of visible vectors.

    Returns the updated parameters and the batch's mean squared
    reconstruction error (computed before the update).
    """
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.shape[1] != p.n_visible:
        raise DimensionError(
            f"batch feature dim {batch.shape[1]} != visible dim {p.n_visible}"
        )
    n = batch.shape[0]
    h0 = prob_h_given_v(batch, p)
    hs = sample_h(h0, rng)
    v_neg = batch
    h_neg = h0
    for step in range(cfg.cd_steps):
        v_neg = sample_v(hs, p, rng)
        h_neg = prob_h_given_v(v_neg, p)
        if step < cfg.cd_steps - 1:
            hs = sample_h(h_neg, rng)

    pos_w = (batch / p.sigma).T @ h0 / n
    neg_w = (v_neg / p.sigma).T @ h_neg / n
    dw = cfg.lr * (pos_w - neg_w)
    db = cfg.lr * (batch.mean(axis=0) - v_neg.mean(axis=0)) / p.sigma**2
    dc = cfg.lr * (h0.mean(axis=0) - h_neg.mean(axis=0))

    err = float(np.mean((batch - mean_v_given_h(h0, p)) ** 2))
    new_w = p.weights + dw
    new_b = p.visible_bias + db
    new_c = p.hidden_bias + dc
    for name, arr in (("weights", new_w), ("visible bias", new_b), ("hidden bias", new_c)):
        if not np.all(np.isfinite(arr)):
            ctx = f" ({where})" if where else ""
            raise NumericError(f"non-finite CD update on {name}{ctx}")
    return GrbmParams(new_w, new_b, new_c, p.sigma), err


def init_params(n_visible: int, n_hidden: int, cfg: CdConfig, rng: RngStream) -> GrbmParams:
    """Fresh layer: weights uniform in +-init_range, biases zero, sigma 1."""
    w = rng.uniform(-cfg.init_range, cfg.init_range, size=(n_visible, n_hidden))
    return GrbmParams(w, np.zeros(n_visible), np.zeros(n_hidden), 1.0)


def train_grbm(
    data: np.ndarray,
    n_hidden: int,
    cfg: CdConfig,
    rng: RngStream,
) -> tuple[GrbmParams, list[float]]:
    """Mini-batch CD training of a single layer; returns per-epoch mean errors."""
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if data.shape[0] == 0:
        raise DataError("cannot train a GRBM on an empty data set")
    params = init_params(data.shape[1], n_hidden, cfg, rng)
    epoch_errors = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(data.shape[0])
        errs = []
        for start in range(0, data.shape[0], cfg.batch_size):
            batch = data[order[start : start + cfg.batch_size]]
            where = f"epoch {epoch}, batch {start // cfg.batch_size}"
            params, err = cd_update(batch, params, cfg, rng, where=where)
            errs.append(err)
        epoch_errors.append(float(np.mean(errs)))
    return params, epoch_errors


def standardize_stats(data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature mean and std over the pre-training subset.

    Features with (near-)zero variance get std 1 so they pass through
    unscaled instead of dividing by zero.
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    mean = data.mean(axis=0)
    std = data.std(axis=0)
    std = np.where(std < STD_FLOOR, 1.0, std)
    return mean, std


def pretrain_stack(data: np.ndarray, layer_sizes, cfg: CdConfig) -> PretrainResult:
    """Greedy layer-wise pre-training of an encoder chain.

    `layer_sizes` includes the input dimension first, e.g. (12, 8, 8, 6, 4)
    trains four GRBMs shaped 12x8, 8x8, 8x6, 6x4. The first layer sees the
    standardized data; each later layer sees the deterministic hidden means
    of its predecessor.
    """
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise ConfigError("layer sizes must include the input dim and >= 1 hidden layer")
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if data.shape[0] == 0:
        raise DataError("pre-training data is empty")
    if data.shape[1] != sizes[0]:
        raise DimensionError(
            f"data feature dim {data.shape[1]} != declared input dim {sizes[0]}"
        )
    mean, std = standardize_stats(data)
    current = (data - mean) / std
    rng = RngStream(cfg.seed)
    grbms: list[GrbmParams] = []
    errors: list[list[float]] = []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        if current.shape[1] != n_in:
            raise DimensionError(
                f"layer {i}: activation dim {current.shape[1]} != expected {n_in}"
            )
        params, errs = train_grbm(current, n_out, cfg, rng.child(i))
        grbms.append(params)
        errors.append(errs)
        current = prob_h_given_v(current, params)
    return PretrainResult(grbms=grbms, input_mean=mean, input_std=std, epoch_errors=errors)
