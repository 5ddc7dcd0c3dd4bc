"""Sparse cubic symmetric-pattern features.

A video is tiled into non-overlapping w x h x d cubic blocks. For every
block, signed differences between diametrically opposite neighbours are
collected on the block's three orthogonal central planes (the spatial xy
plane and the two spatiotemporal xt / yt planes). Concatenating the
per-block descriptors over the whole video gives the encoded vector, which
is then represented sparsely against a dictionary of encoded training
segments by solving an l1-penalized least-squares problem, and finally
reshaped into a short sequence of fixed-length frames.

Descriptor geometry
-------------------
On a plane with both sides >= 3, each interior pixel is a center with the
8-neighbour ring around it; ring positions are numbered counterclockwise
starting east:

    p1=(0,+1) p2=(-1,+1) p3=(-1,0) p4=(-1,-1) p5=(0,-1) p6=(+1,-1)
    p7=(+1,0) p8=(+1,+1)        (offsets as (row, col))

and the descriptor stores the four opposite-pair differences
(p1-p5, p2-p6, p3-p7, p4-p8). Planes too narrow for a full ring (one side
< 3) degrade to the single available opposite pair along the long axis, so
1 x 1 x d blocks still produce a purely temporal descriptor; planes with
both sides < 3 contribute nothing.

Concatenation order is fixed and documented: channel-major, then temporal
slab, then row-major block grid, then plane order (xy, xt, yt); within a
plane, centers row-major; within a center, pair order as above.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import container
from .errors import ConfigError, DataError, DimensionError, NumericError

FEATURE_MAGIC = b"SCSPFTv1"
RING_SIZE = 8
PLANES = ("xy", "xt", "yt")


@dataclass(frozen=True)
class BlockSpec:
    """Cubic block geometry: width x height x depth in (pixels, pixels, frames)."""

    w: int = 3
    h: int = 3
    d: int = 3

    def __post_init__(self):
        for name in ("w", "h", "d"):
            v = getattr(self, name)
            if not (isinstance(v, int) and v >= 1):
                raise ConfigError(f"block {name} must be an integer >= 1, got {v!r}")

    def __str__(self) -> str:
        return f"{self.w}x{self.h}x{self.d}"


@dataclass
class EncodedVideo:
    """Concatenated symmetric-variation descriptor of one video."""

    features: np.ndarray  # 1-D, length = channels * n_blocks * per_block_len
    grid: tuple[int, int, int]  # (temporal slabs, block rows, block cols)
    per_block_len: int
    channels: int
    spec: BlockSpec


@dataclass
class Dictionary:
    """Unit-norm encoded training segments, one per column."""

    atoms: np.ndarray  # (feature_dim, n_atoms)
    provenance: list[tuple[str, int]]  # (video id, segment index) per column
    segment_len: int
    spec: BlockSpec

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[1]


@dataclass
class ScspSequence:
    """Sparse code reshaped into a frame-like sequence."""

    frames: np.ndarray  # (length, frame_len)
    video_id: str = ""
    n_pad: int = 0

    @property
    def length(self) -> int:
        return self.frames.shape[0]

    @property
    def frame_len(self) -> int:
        return self.frames.shape[1]

    def flatten(self) -> np.ndarray:
        return self.frames.reshape(-1)


def check_video(video: np.ndarray) -> np.ndarray:
    """Validate a (T, H, W, C) pixel tensor with intensities in [0, 1]."""
    v = np.asarray(video, dtype=np.float64)
    if v.ndim == 3:
        v = v[..., np.newaxis]
    if v.ndim != 4:
        raise DimensionError(f"video must be (T, H, W, C), got shape {v.shape}")
    if v.shape[3] not in (1, 3):
        raise DataError(f"channel count must be 1 or 3, got {v.shape[3]}")
    if not np.all(np.isfinite(v)):
        raise NumericError("video contains non-finite pixels")
    if v.min() < 0.0 or v.max() > 1.0:
        raise DataError(
            f"pixels must lie in [0, 1], got range [{v.min():.4g}, {v.max():.4g}]"
        )
    return v


def _pairs_full(plane: np.ndarray) -> np.ndarray:
    # plane (..., r, c) with r, c >= 3; differences of the 4 opposite ring pairs
    e, w = plane[..., 1:-1, 2:], plane[..., 1:-1, :-2]
    ne, sw = plane[..., :-2, 2:], plane[..., 2:, :-2]
    n, s = plane[..., :-2, 1:-1], plane[..., 2:, 1:-1]
    nw, se = plane[..., :-2, :-2], plane[..., 2:, 2:]
    diffs = np.stack([e - w, ne - sw, n - s, nw - se], axis=-1)
    return diffs.reshape(plane.shape[:-2] + (-1,))


def plane_feature_len(rows: int, cols: int) -> int:
    """Descriptor length contributed by one plane of the given size."""
    if rows >= 3 and cols >= 3:
        return 4 * (rows - 2) * (cols - 2)
    if rows >= 3:
        return (rows - 2) * cols
    if cols >= 3:
        return rows * (cols - 2)
    return 0


def _plane_features(plane: np.ndarray) -> np.ndarray:
    rows, cols = plane.shape[-2:]
    if rows >= 3 and cols >= 3:
        return _pairs_full(plane)
    if rows >= 3:  # narrow plane: vertical opposite pair only (north - south)
        d = plane[..., :-2, :] - plane[..., 2:, :]
        return d.reshape(plane.shape[:-2] + (-1,))
    if cols >= 3:  # flat plane: horizontal opposite pair only (east - west)
        d = plane[..., :, 2:] - plane[..., :, :-2]
        return d.reshape(plane.shape[:-2] + (-1,))
    return np.zeros(plane.shape[:-2] + (0,), dtype=np.float64)


def per_block_feature_len(spec: BlockSpec) -> int:
    """Descriptor length of a single block under `spec` (all three planes)."""
    return (
        plane_feature_len(spec.h, spec.w)
        + plane_feature_len(spec.d, spec.w)
        + plane_feature_len(spec.d, spec.h)
    )


def feature_dim(shape: tuple[int, int, int, int], spec: BlockSpec) -> int:
    """Total encoded length for a (T, H, W, C) video: pure shape arithmetic."""
    t, h, w, c = shape
    return (t // spec.d) * (h // spec.h) * (w // spec.w) * per_block_feature_len(spec) * c


def decompose_blocks(volume: np.ndarray, spec: BlockSpec):
    """Tile one single-channel (T, H, W) volume into non-overlapping blocks.

    Returns (blocks, grid) where blocks has shape
    (slabs, rows, cols, d, h, w) and grid = (slabs, rows, cols). Trailing
    frames, rows, and columns that do not fill a whole block are dropped.
    """
    vol = np.asarray(volume, dtype=np.float64)
    if vol.ndim == 4:
        if vol.shape[3] != 1:
            raise DimensionError(
                "decompose_blocks takes one channel at a time; "
                f"got {vol.shape[3]} channels"
            )
        vol = vol[..., 0]
    if vol.ndim != 3:
        raise DimensionError(f"volume must be (T, H, W), got shape {vol.shape}")
    t, h, w = vol.shape
    slabs, rows, cols = t // spec.d, h // spec.h, w // spec.w
    if slabs < 1 or rows < 1 or cols < 1:
        raise DataError(
            f"video of shape {t}x{h}x{w} is smaller than one {spec} block"
        )
    trimmed = vol[: slabs * spec.d, : rows * spec.h, : cols * spec.w]
    blocks = trimmed.reshape(slabs, spec.d, rows, spec.h, cols, spec.w)
    blocks = blocks.transpose(0, 2, 4, 1, 3, 5)
    return np.ascontiguousarray(blocks), (slabs, rows, cols)


def symmetric_variation(block: np.ndarray, plane: str, ring_size: int = RING_SIZE) -> np.ndarray:
    """Opposite-pair differences on one central plane of a (d, h, w) block.

    Returns the per-center difference vectors concatenated row-major over
    the plane's centers.
    """
    if ring_size % 2 != 0:
        raise ConfigError(f"ring size must be even, got {ring_size}")
    if ring_size != RING_SIZE:
        raise ConfigError(f"only the {RING_SIZE}-neighbour ring is supported")
    b = np.asarray(block, dtype=np.float64)
    if b.ndim != 3:
        raise DimensionError(f"block must be (d, h, w), got shape {b.shape}")
    d, h, w = b.shape
    if plane == "xy":
        sl = b[d // 2, :, :]
    elif plane == "xt":
        sl = b[:, h // 2, :]
    elif plane == "yt":
        sl = b[:, :, w // 2]
    else:
        raise ConfigError(f"unknown plane {plane!r}, expected one of {PLANES}")
    return _plane_features(sl)


def _volume_features(vol: np.ndarray, spec: BlockSpec) -> np.ndarray:
    blocks, grid = decompose_blocks(vol, spec)
    planes = [
        blocks[..., spec.d // 2, :, :],
        blocks[..., :, spec.h // 2, :],
        blocks[..., :, :, spec.w // 2],
    ]
    per_block = np.concatenate([_plane_features(p) for p in planes], axis=-1)
    return per_block.reshape(-1), grid


def encode_video(video: np.ndarray, spec: BlockSpec) -> EncodedVideo:
    """Encode a whole (T, H, W, C) video, channels handled independently."""
    v = check_video(video)
    if per_block_feature_len(spec) == 0:
        raise DataError(
            f"block size {spec} produces an empty descriptor; "
            "at least one plane needs a side of length >= 3"
        )
    chunks = []
    grid = None
    for ch in range(v.shape[3]):
        feats, grid = _volume_features(v[..., ch], spec)
        chunks.append(feats)
    return EncodedVideo(
        features=np.concatenate(chunks),
        grid=grid,
        per_block_len=per_block_feature_len(spec),
        channels=v.shape[3],
        spec=spec,
    )


def encode_segments(video: np.ndarray, spec: BlockSpec, segment_len: int) -> list[np.ndarray]:
    """Encode each non-overlapping `segment_len`-frame slice of the video."""
    v = check_video(video)
    if segment_len < spec.d:
        raise ConfigError(
            f"segment length {segment_len} is shorter than block depth {spec.d}"
        )
    n_seg = v.shape[0] // segment_len
    return [
        encode_video(v[s * segment_len : (s + 1) * segment_len], spec).features
        for s in range(n_seg)
    ]


def dictionary_from_segments(
    segments_per_video, ids, spec: BlockSpec, segment_len: int
) -> Dictionary:
    """Stack pre-encoded segments as unit-norm dictionary columns."""
    cols, provenance = [], []
    dim = None
    for vid, segs in zip(ids, segments_per_video):
        if not segs:
            raise DataError(
                f"video {vid!r} has fewer than {segment_len} frames; "
                "no dictionary segment can be extracted"
            )
        for s, feats in enumerate(segs):
            if dim is None:
                dim = feats.shape[0]
            elif feats.shape[0] != dim:
                raise DataError(
                    f"video {vid!r} yields feature dimension {feats.shape[0]}, "
                    f"expected {dim}; corpus shapes are inconsistent"
                )
            norm = float(np.linalg.norm(feats))
            if norm == 0.0:
                raise DataError(
                    f"video {vid!r} segment {s} encodes to the zero vector "
                    "and cannot be normalized"
                )
            cols.append(feats / norm)
            provenance.append((str(vid), s))
    if not cols:
        raise DataError("cannot build a dictionary from an empty corpus")
    atoms = np.stack(cols, axis=1)
    return Dictionary(atoms=atoms, provenance=provenance, segment_len=segment_len, spec=spec)


def build_dictionary(videos, spec: BlockSpec, segment_len: int, ids=None) -> Dictionary:
    """Encode all corpus segments and stack them as unit-norm columns.

    `videos` is a sequence of (T, H, W, C) tensors; `ids` optionally names
    them for provenance (defaults to the position index).
    """
    videos = list(videos)
    if not videos:
        raise DataError("cannot build a dictionary from an empty corpus")
    if ids is None:
        ids = [str(i) for i in range(len(videos))]
    segments = [encode_segments(video, spec, segment_len) for video in videos]
    return dictionary_from_segments(segments, ids, spec, segment_len)


def lasso_objective(x: np.ndarray, dictionary: np.ndarray, lam: float, coef: np.ndarray) -> float:
    r = x - dictionary @ coef
    return 0.5 * float(r @ r) + lam * float(np.abs(coef).sum())


def kkt_violation(x: np.ndarray, dictionary: np.ndarray, lam: float, coef: np.ndarray) -> float:
    """Max violation of the lasso stationarity conditions at `coef`.

    Zero (up to solver tolerance) iff `coef` minimizes
    0.5 * ||x - D c||^2 + lam * ||c||_1.
    """
    g = dictionary.T @ (x - dictionary @ coef)
    active = coef != 0.0
    viol = 0.0
    if active.any():
        viol = float(np.max(np.abs(g[active] - lam * np.sign(coef[active]))))
    if (~active).any():
        viol = max(viol, float(np.max(np.maximum(np.abs(g[~active]) - lam, 0.0))))
    return viol


def _soft(z: float, t: float) -> float:
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def sparse_code(
    x: np.ndarray,
    dictionary: Dictionary | np.ndarray,
    lam: float,
    max_sweeps: int = 10_000,
    tol: float = 1e-8,
) -> np.ndarray:
    """Solve min_c 0.5 ||x - D c||^2 + lam ||c||_1 by coordinate descent.

    Cyclic coordinate updates with exact soft-thresholding; converged when
    the largest coefficient change in a full sweep drops below `tol`.
    """
    d = dictionary.atoms if isinstance(dictionary, Dictionary) else np.asarray(dictionary, float)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or d.ndim != 2:
        raise DimensionError("sparse_code expects a vector signal and a matrix dictionary")
    if x.shape[0] != d.shape[0]:
        raise DimensionError(
            f"signal length {x.shape[0]} does not match dictionary rows {d.shape[0]}"
        )
    if lam < 0:
        raise ConfigError(f"lasso penalty must be >= 0, got {lam}")
    n = d.shape[1]
    gram = d.T @ d
    corr = d.T @ x
    diag = np.diag(gram).copy()
    coef = np.zeros(n)
    gc = np.zeros(n)  # gram @ coef, maintained incrementally
    for _ in range(max_sweeps):
        biggest = 0.0
        for j in range(n):
            if diag[j] == 0.0:
                continue
            rho = corr[j] - gc[j] + diag[j] * coef[j]
            new = _soft(rho, lam) / diag[j]
            delta = new - coef[j]
            if delta != 0.0:
                gc += gram[:, j] * delta
                coef[j] = new
                biggest = max(biggest, abs(delta))
        if biggest < tol:
            return coef
    raise NumericError(
        f"sparse coding did not converge in {max_sweeps} sweeps; "
        f"final KKT violation {kkt_violation(x, d, lam, coef):.3e}"
    )


def reshape_to_sequence(coef: np.ndarray, length: int, video_id: str = "") -> ScspSequence:
    """Reshape a code vector into `length` equal frames, zero-padding the tail."""
    coef = np.asarray(coef, dtype=np.float64)
    if coef.ndim != 1:
        raise DimensionError(f"expected a 1-D code vector, got shape {coef.shape}")
    if length < 1:
        raise DataError(f"sequence length must be >= 1, got {length}")
    frame_len = max(1, math.ceil(coef.shape[0] / length))
    n_pad = length * frame_len - coef.shape[0]
    padded = np.concatenate([coef, np.zeros(n_pad)]) if n_pad else coef
    return ScspSequence(frames=padded.reshape(length, frame_len), video_id=video_id, n_pad=n_pad)


# ---------------------------------------------------------------------------
# SCSPFTv1 feature files


def write_sequence(
    path, seq: ScspSequence, config_echo: dict | None = None, kind: str = "scsp-sequence"
) -> None:
    header = {
        "kind": kind,
        "video_id": seq.video_id,
        "length": seq.length,
        "frame_len": seq.frame_len,
        "n_pad": seq.n_pad,
        "config": config_echo or {},
    }
    container.write_container(path, FEATURE_MAGIC, header, [seq.frames])


def read_sequence(path) -> ScspSequence:
    header, payload = container.read_container(path, FEATURE_MAGIC)
    if header.get("kind") not in ("scsp-sequence", "raw-sequence"):
        raise DataError(f"{path}: expected a sequence file, got {header.get('kind')!r}")
    shape = (header["length"], header["frame_len"])
    frames, _ = container.take_array(payload, 0, shape)
    return ScspSequence(frames=frames, video_id=header["video_id"], n_pad=header["n_pad"])


def write_dictionary(path, dictionary: Dictionary, config_echo: dict | None = None) -> None:
    header = {
        "kind": "scsp-dictionary",
        "rows": dictionary.atoms.shape[0],
        "cols": dictionary.atoms.shape[1],
        "segment_len": dictionary.segment_len,
        "block": [dictionary.spec.w, dictionary.spec.h, dictionary.spec.d],
        "provenance": [[vid, seg] for vid, seg in dictionary.provenance],
        "config": config_echo or {},
    }
    container.write_container(path, FEATURE_MAGIC, header, [dictionary.atoms])


def read_dictionary(path) -> Dictionary:
    header, payload = container.read_container(path, FEATURE_MAGIC)
    if header.get("kind") != "scsp-dictionary":
        raise DataError(f"{path}: expected a scsp-dictionary file, got {header.get('kind')!r}")
    atoms, _ = container.take_array(payload, 0, (header["rows"], header["cols"]))
    w, h, d = header["block"]
    return Dictionary(
        atoms=atoms,
        provenance=[(vid, int(seg)) for vid, seg in header["provenance"]],
        segment_len=int(header["segment_len"]),
        spec=BlockSpec(int(w), int(h), int(d)),
    )
