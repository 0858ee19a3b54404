"""Scalar multilayer perceptrons mapping particle counts to heads and back.

Networks are plain numpy: leaky-ReLU hidden layers, a linear output layer and
min-max normalisation of inputs and targets to [-1, 1]. Training is mini-batch
SGD on the normalised mean squared error with a seeded generator.
"""
import copy
import hashlib
import logging
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from drw_richards.errors import CheckpointError, ConfigurationError, ParameterError
from drw_richards.models import (
    AugmentConfig,
    CheckpointMetadata,
    MlpSpec,
    ParticleScale,
    TrainConfig,
)
from drw_richards.services.artifact_store import config_digest

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Normalization:
    """Affine map of [center - half_span, center + half_span] onto [-1, 1]."""
    center: float
    half_span: float

    @classmethod
    def from_data(cls, values: np.ndarray) -> "Normalization":
        lo, hi = float(np.min(values)), float(np.max(values))
        half = 0.5 * (hi - lo)
        return cls(center=0.5 * (hi + lo), half_span=half if half > 0 else 1.0)

    @classmethod
    def identity(cls) -> "Normalization":
        return cls(center=0.0, half_span=1.0)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.center) / self.half_span

    def invert(self, y: np.ndarray) -> np.ndarray:
        return y * self.half_span + self.center

    @property
    def bounds(self) -> Tuple[float, float]:
        return self.center - self.half_span, self.center + self.half_span


@dataclass
class MlpNetwork:
    """Weights ``W_k`` of shape (fan_in, fan_out), biases ``b_k`` of shape (fan_out,)."""
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    slope: float
    norm_in: Normalization = field(default_factory=Normalization.identity)
    norm_out: Normalization = field(default_factory=Normalization.identity)
    metadata: Optional[CheckpointMetadata] = None

    @property
    def layer_sizes(self) -> List[int]:
        return [self.weights[0].shape[0], *(w.shape[1] for w in self.weights)]

    def __call__(self, x):
        return mlp_forward(self, x)


@dataclass
class TrainResult:
    network: MlpNetwork
    history: List[float]
    validation_history: List[float]
    validation_mse: Optional[float]
    epochs_run: int
    diverged: bool = False


def init_network(spec: MlpSpec, rng: np.random.Generator,
                 norm_in: Optional[Normalization] = None,
                 norm_out: Optional[Normalization] = None) -> MlpNetwork:
    """He-initialised weights and zero biases."""
    sizes = spec.layer_sizes
    weights = [rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
               for fan_in, fan_out in zip(sizes[:-1], sizes[1:])]
    biases = [np.zeros(fan_out) for fan_out in sizes[1:]]
    return MlpNetwork(
        weights=weights,
        biases=biases,
        slope=spec.slope,
        norm_in=norm_in or Normalization.identity(),
        norm_out=norm_out or Normalization.identity(),
    )


def _activate(z: np.ndarray, slope: float) -> np.ndarray:
    return np.where(z > 0, z, slope * z)


def _forward_cache(net: MlpNetwork, xn: np.ndarray) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    activations, pre = [xn], []
    h = xn
    last = len(net.weights) - 1
    for k, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ W + b
        pre.append(z)
        h = z if k == last else _activate(z, net.slope)
        activations.append(h)
    return activations, pre


def mlp_forward(net: MlpNetwork, x):
    """Evaluate the network pointwise; output has the shape of ``x``."""
    x = np.asarray(x, dtype=float)
    xn = net.norm_in.apply(x.reshape(-1, 1))
    activations, _ = _forward_cache(net, xn)
    return net.norm_out.invert(activations[-1]).reshape(x.shape)


def loss_gradients(net: MlpNetwork, x: np.ndarray, y: np.ndarray):
    """Normalised MSE and its gradients with respect to every weight and bias."""
    xn = net.norm_in.apply(np.asarray(x, dtype=float).reshape(-1, 1))
    yn = net.norm_out.apply(np.asarray(y, dtype=float).reshape(-1, 1))
    activations, pre = _forward_cache(net, xn)
    residual = activations[-1] - yn
    loss = float(np.mean(residual ** 2))
    delta = 2.0 * residual / residual.shape[0]
    grad_w: List[np.ndarray] = [np.empty(0)] * len(net.weights)
    grad_b: List[np.ndarray] = [np.empty(0)] * len(net.biases)
    for k in range(len(net.weights) - 1, -1, -1):
        grad_w[k] = activations[k].T @ delta
        grad_b[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ net.weights[k].T) * np.where(pre[k - 1] > 0, 1.0, net.slope)
    return loss, grad_w, grad_b


def _normalized_mse(net: MlpNetwork, x: np.ndarray, y: np.ndarray) -> float:
    if x.size == 0:
        return float("nan")
    xn = net.norm_in.apply(x.reshape(-1, 1))
    yn = net.norm_out.apply(y.reshape(-1, 1))
    activations, _ = _forward_cache(net, xn)
    return float(np.mean((activations[-1] - yn) ** 2))


def _finite(net: MlpNetwork) -> bool:
    return all(np.all(np.isfinite(a)) for a in (*net.weights, *net.biases))


def split_indices(n_rows: int, fraction: float, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Seeded (train, validation) index split keeping at least one training row."""
    order = rng.permutation(n_rows)
    n_val = min(int(round(fraction * n_rows)), n_rows - 1)
    return np.sort(order[n_val:]), np.sort(order[:n_val])


def train(inputs: Sequence[float], targets: Sequence[float], spec: Optional[MlpSpec] = None,
          config: Optional[TrainConfig] = None, init: Optional[MlpNetwork] = None) -> TrainResult:
    """Fit a scalar network to (input, target) pairs.

    ``history`` holds the training-split loss before the first epoch and after each
    epoch. A non-finite loss stops training and restores the last finite weights.

    Raises:
        ParameterError: On empty, mismatched or non-finite data.
    """
    spec = spec or MlpSpec()
    config = config or TrainConfig()
    x = np.asarray(inputs, dtype=float).ravel()
    y = np.asarray(targets, dtype=float).ravel()
    if x.size == 0 or x.size != y.size:
        raise ParameterError(f"Training needs matching non-empty inputs and targets, got {x.size} and {y.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ParameterError("Training data contains non-finite values")

    rng = np.random.default_rng(config.seed)
    train_idx, val_idx = split_indices(x.size, config.validation_fraction, rng)
    x_train, y_train = x[train_idx], y[train_idx]
    x_val, y_val = x[val_idx], y[val_idx]
    if init is not None:
        net = copy.deepcopy(init)
        net.metadata = None
    else:
        net = init_network(spec, rng, Normalization.from_data(x_train), Normalization.from_data(y_train))

    history = [_normalized_mse(net, x_train, y_train)]
    val_history: List[float] = []
    diverged = False
    epochs_run = 0
    for epoch in range(1, config.epochs + 1):
        snapshot = copy.deepcopy((net.weights, net.biases))
        order = rng.permutation(x_train.size)
        for start in range(0, order.size, config.batch_size):
            batch = order[start:start + config.batch_size]
            _, grad_w, grad_b = loss_gradients(net, x_train[batch], y_train[batch])
            for k in range(len(net.weights)):
                net.weights[k] -= config.learning_rate * grad_w[k]
                net.biases[k] -= config.learning_rate * grad_b[k]
        loss = _normalized_mse(net, x_train, y_train)
        if not np.isfinite(loss) or not _finite(net):
            net.weights, net.biases = snapshot
            diverged = True
            logger.warning(f"Training diverged at epoch {epoch}; keeping weights from epoch {epoch - 1}")
            break
        history.append(loss)
        epochs_run = epoch
        if val_idx.size:
            val_history.append(_normalized_mse(net, x_val, y_val))
        if epoch % max(config.epochs // 10, 1) == 0:
            logger.debug(f"Epoch {epoch}/{config.epochs}: loss={loss:.4e}")

    validation_mse = float(np.mean((mlp_forward(net, x_val) - y_val) ** 2)) if val_idx.size else None
    logger.info(
        f"Trained {spec.layer_sizes if init is None else net.layer_sizes} network for {epochs_run} epochs: "
        f"loss {history[0]:.3e} -> {history[-1]:.3e}, validation MSE {validation_mse}"
    )
    return TrainResult(
        network=net,
        history=history,
        validation_history=val_history,
        validation_mse=validation_mse,
        epochs_run=epochs_run,
        diverged=diverged,
    )


# --- checkpoints ------------------------------------------------------------


def checkpoint_id(net: MlpNetwork) -> str:
    """Content hash of weights, biases, slope and normalisation."""
    h = hashlib.sha256()
    for array in (*net.weights, *net.biases):
        h.update(np.ascontiguousarray(array, dtype=float).tobytes())
    h.update(np.array([net.slope, net.norm_in.center, net.norm_in.half_span,
                       net.norm_out.center, net.norm_out.half_span]).tobytes())
    return h.hexdigest()[:16]


def describe(net: MlpNetwork, direction: str, scale: ParticleScale, train_config: Optional[TrainConfig] = None,
             epochs_run: int = 0, parent_id: Optional[str] = None,
             problem: Optional[str] = None) -> CheckpointMetadata:
    return CheckpointMetadata(
        format_version=CHECKPOINT_FORMAT_VERSION,
        checkpoint_id=checkpoint_id(net),
        parent_id=parent_id,
        direction=direction,
        layer_sizes=net.layer_sizes,
        slope=net.slope,
        particles_per_unit_head=scale.particles_per_unit_head,
        train_config_digest=config_digest(train_config) if train_config is not None else "",
        epochs_run=epochs_run,
        problem=problem,
    )


def save_checkpoint(net: MlpNetwork, path: Union[str, Path], metadata: Optional[CheckpointMetadata] = None) -> Path:
    """Write the network and its metadata to a single ``.npz`` container."""
    metadata = metadata or net.metadata
    if metadata is None:
        raise CheckpointError("Checkpoint metadata is required")
    path = Path(path)
    arrays = {f"W{k}": w for k, w in enumerate(net.weights)}
    arrays.update({f"b{k}": b for k, b in enumerate(net.biases)})
    arrays["norm_in"] = np.array([net.norm_in.center, net.norm_in.half_span])
    arrays["norm_out"] = np.array([net.norm_out.center, net.norm_out.half_span])
    arrays["metadata"] = np.array(metadata.model_dump_json())
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as handle:
            np.savez(handle, **arrays)
    except OSError as e:
        raise CheckpointError(f"Cannot write checkpoint {path}: {e}") from e
    net.metadata = metadata
    logger.info(f"Saved {metadata.direction} checkpoint {metadata.checkpoint_id} to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> MlpNetwork:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Raises:
        CheckpointError: If the file is missing, truncated, of another format
            version, or inconsistent with its own metadata.
    """
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as data:
            metadata = CheckpointMetadata.model_validate_json(str(data["metadata"]))
            if metadata.format_version != CHECKPOINT_FORMAT_VERSION:
                raise CheckpointError(
                    f"Checkpoint {path} has format version {metadata.format_version}, "
                    f"expected {CHECKPOINT_FORMAT_VERSION}"
                )
            n_layers = len(metadata.layer_sizes) - 1
            weights = [np.array(data[f"W{k}"], dtype=float) for k in range(n_layers)]
            biases = [np.array(data[f"b{k}"], dtype=float) for k in range(n_layers)]
            norm_in = Normalization(*(float(v) for v in data["norm_in"]))
            norm_out = Normalization(*(float(v) for v in data["norm_out"]))
    except CheckpointError:
        raise
    except (OSError, ValueError, KeyError, EOFError, zipfile.BadZipFile, ValidationError) as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e

    for k, (w, b) in enumerate(zip(weights, biases)):
        expected = (metadata.layer_sizes[k], metadata.layer_sizes[k + 1])
        if w.shape != expected or b.shape != (expected[1],):
            raise CheckpointError(f"Checkpoint {path} layer {k} has shape {w.shape}, expected {expected}")
    net = MlpNetwork(weights=weights, biases=biases, slope=metadata.slope,
                     norm_in=norm_in, norm_out=norm_out, metadata=metadata)
    if checkpoint_id(net) != metadata.checkpoint_id:
        raise CheckpointError(f"Checkpoint {path} content does not match its id {metadata.checkpoint_id}")
    return net


def retrain(parent: Union[str, Path, MlpNetwork], inputs: Sequence[float], targets: Sequence[float],
            config: Optional[TrainConfig] = None, scale: Optional[ParticleScale] = None) -> TrainResult:
    """Continue training a saved network; the result's metadata names the parent.

    The parent's normalisation is kept so the finetuned network stays
    interchangeable with it.
    """
    net = load_checkpoint(parent) if isinstance(parent, (str, Path)) else parent
    if net.metadata is None:
        raise CheckpointError("Retraining needs a network with checkpoint metadata")
    parent_meta = net.metadata
    config = config or TrainConfig()
    spec = MlpSpec(hidden_layers=net.layer_sizes[1:-1], slope=net.slope)
    result = train(inputs, targets, spec, config, init=net)
    scale = scale or ParticleScale(particles_per_unit_head=parent_meta.particles_per_unit_head)
    result.network.metadata = describe(
        result.network, parent_meta.direction, scale, config,
        epochs_run=result.epochs_run, parent_id=parent_meta.checkpoint_id, problem=parent_meta.problem,
    )
    return result


# --- datasets ---------------------------------------------------------------


def copies_for_target(n_rows: int, n_sigmas: int, target_rows: int) -> List[int]:
    """Noisy rows per sigma so that originals plus noisy rows total ``target_rows``."""
    if target_rows < n_rows:
        raise ParameterError(f"target_rows {target_rows} is below the {n_rows} original rows")
    if n_sigmas < 1:
        raise ParameterError("At least one sigma is required")
    extra = target_rows - n_rows
    base, remainder = divmod(extra, n_sigmas)
    return [base + (1 if q < remainder else 0) for q in range(n_sigmas)]


def augment(frame: pd.DataFrame, config: Optional[AugmentConfig] = None,
            scale: Optional[ParticleScale] = None) -> pd.DataFrame:
    """Append Gaussian-perturbed copies of (psi, n_particles) rows.

    Heads receive N(0, sigma^2) and counts N(0, (sigma * scale)^2), drawn
    independently. Originals are kept first with ``augmented_sigma = 0``.
    """
    config = config or AugmentConfig()
    scale = scale or ParticleScale()
    rng = np.random.default_rng(config.seed)
    base = frame.copy()
    base["augmented_sigma"] = 0.0
    n = len(base)
    if config.target_rows is not None:
        counts = copies_for_target(n, len(config.sigma_list), config.target_rows)
        picks = [np.resize(rng.permutation(n), count) if n else np.empty(0, dtype=int) for count in counts]
    else:
        picks = [np.tile(np.arange(n), config.copies_per_sigma) for _ in config.sigma_list]

    parts = [base]
    for sigma, rows in zip(config.sigma_list, picks):
        if rows.size == 0:
            continue
        noisy = base.iloc[rows].copy()
        noisy["psi"] = noisy["psi"].to_numpy() + rng.normal(0.0, sigma, size=rows.size)
        noisy["n_particles"] = noisy["n_particles"].to_numpy() + rng.normal(
            0.0, sigma * scale.particles_per_unit_head, size=rows.size
        )
        noisy["augmented_sigma"] = sigma
        parts.append(noisy)
    out = pd.concat(parts, ignore_index=True)
    logger.info(f"Augmented {n} rows to {len(out)} rows over sigmas {config.sigma_list}")
    return out


def training_rows(frame: pd.DataFrame, include_nonconverged: bool = False) -> pd.DataFrame:
    """Rows usable for training; flagged rows are dropped unless requested.

    Raises:
        ConfigurationError: If required columns are missing or no rows remain.
    """
    missing = [c for c in ("psi", "n_particles") if c not in frame.columns]
    if missing:
        raise ConfigurationError(f"Dataset is missing columns {missing}")
    rows = frame
    if not include_nonconverged and "converged_flag" in frame.columns:
        rows = frame[frame["converged_flag"].astype(bool)]
    if rows.empty:
        raise ConfigurationError("No converged reference rows available for training")
    return rows


def train_maps(frame: pd.DataFrame, spec: Optional[MlpSpec] = None, config: Optional[TrainConfig] = None,
               scale: Optional[ParticleScale] = None, include_nonconverged: bool = False,
               problem: Optional[str] = None) -> Tuple[TrainResult, TrainResult]:
    """Train the forward (n -> psi) and inverse (psi -> n) networks on one dataset."""
    spec = spec or MlpSpec()
    config = config or TrainConfig()
    scale = scale or ParticleScale()
    rows = training_rows(frame, include_nonconverged)
    psi = rows["psi"].to_numpy(dtype=float)
    n = rows["n_particles"].to_numpy(dtype=float)
    results = []
    for direction, x, y in (("forward", n, psi), ("inverse", psi, n)):
        logger.info(f"Training {direction} map on {len(rows)} rows")
        result = train(x, y, spec, config)
        result.network.metadata = describe(result.network, direction, scale, config,
                                           epochs_run=result.epochs_run, problem=problem)
        results.append(result)
    return results[0], results[1]


def retrain_maps(parents: Tuple[Union[str, Path, MlpNetwork], Union[str, Path, MlpNetwork]],
                 frame: pd.DataFrame, config: Optional[TrainConfig] = None,
                 scale: Optional[ParticleScale] = None,
                 include_nonconverged: bool = False) -> Tuple[TrainResult, TrainResult]:
    """Finetune a (forward, inverse) pair on a new dataset, keeping each parent's normalisation."""
    rows = training_rows(frame, include_nonconverged)
    psi = rows["psi"].to_numpy(dtype=float)
    n = rows["n_particles"].to_numpy(dtype=float)
    forward_parent, inverse_parent = parents
    logger.info(f"Retraining forward and inverse maps on {len(rows)} rows")
    return (retrain(forward_parent, n, psi, config, scale),
            retrain(inverse_parent, psi, n, config, scale))


class NeuralParticleMap:
    """Trained head/particle maps used in place of the proportional ones.

    Raises:
        ConfigurationError: If the networks point the wrong way or were trained
            for another particle scale.
    """

    def __init__(self, forward_net: MlpNetwork, inverse_net: MlpNetwork, scale: ParticleScale):
        for net, direction in ((forward_net, "forward"), (inverse_net, "inverse")):
            meta = net.metadata
            if meta is None:
                continue
            if meta.direction != direction:
                raise ConfigurationError(f"Expected a {direction} network, got {meta.direction}")
            if not np.isclose(meta.particles_per_unit_head, scale.particles_per_unit_head, rtol=1e-12):
                raise ConfigurationError(
                    f"{direction} network was trained for {meta.particles_per_unit_head} particles per unit head, "
                    f"run uses {scale.particles_per_unit_head}"
                )
        self.forward_net = forward_net
        self.inverse_net = inverse_net
        self.scale = scale

    @classmethod
    def from_checkpoints(cls, forward_path: Union[str, Path], inverse_path: Union[str, Path],
                         scale: ParticleScale) -> "NeuralParticleMap":
        return cls(load_checkpoint(forward_path), load_checkpoint(inverse_path), scale)

    def forward(self, n: np.ndarray) -> np.ndarray:
        return mlp_forward(self.forward_net, n)

    def inverse(self, psi: np.ndarray) -> np.ndarray:
        return mlp_forward(self.inverse_net, psi)

    def slope(self, psi: np.ndarray) -> np.ndarray:
        """Central-difference dn/dpsi of the inverse network, heads clipped to its trained range."""
        lo, hi = self.inverse_net.norm_in.bounds
        h = 1e-3 * (hi - lo)
        psi = np.clip(np.asarray(psi, dtype=float), lo, hi)
        return (self.inverse(psi + h) - self.inverse(psi - h)) / (2.0 * h)

    def count_out_of_range(self, psi: np.ndarray) -> int:
        lo, hi = self.inverse_net.norm_in.bounds
        psi = np.asarray(psi, dtype=float)
        return int(np.count_nonzero((psi < lo) | (psi > hi)))

    def near_inverse_error(self, psi: np.ndarray) -> float:
        """Median of |f(f^-1(psi)) - psi| / |psi| over nonzero heads."""
        psi = np.asarray(psi, dtype=float)
        psi = psi[psi != 0]
        if psi.size == 0:
            return 0.0
        return float(np.median(np.abs(self.forward(self.inverse(psi)) - psi) / np.abs(psi)))
