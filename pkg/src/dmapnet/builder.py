"""Layerwise construction of explicit maps from a deep kernel network.

Each unit's gram over the anchor set is eigendecomposed; the projection
``U = V * diag(1/sqrt(lam))`` turns similarity vectors against the anchors
into coordinates whose inner products reproduce the unit's kernel on the
anchor set, up to the discarded eigenvalue mass.  Construction walks the
layers bottom-up: maps of one layer feed, concatenated and weighted, the
gram of the next.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dkn import DknArchitecture, EXP, IDENTITY, activation_apply, dkn_forward_grams
from .errors import (BuildError, ConfigError, DegenerateGramError, InputError,
                     NumericRangeError)
from .kernels import GramMatrix, gram_matrix
from .model import DmnModel, DmnUnit, forward_batch

# exp overflows float64 a little above this argument
EXP_ARG_LIMIT = 700.0

DEFAULT_CLIP_RATIO = 1e-10


@dataclass(frozen=True)
class AnchorSet:
    """The fixed samples every map is expanded over."""

    samples: np.ndarray
    ids: tuple = ()

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 2:
            raise InputError("anchor samples must form a 2-D array")
        if samples.shape[0] < 2:
            raise InputError("at least two anchor samples are required")
        if not np.isfinite(samples).all():
            raise InputError("anchor samples must be finite")
        ids = tuple(self.ids) if self.ids else tuple(range(samples.shape[0]))
        object.__setattr__(self, "ids", ids)
        if len(ids) != samples.shape[0]:
            raise InputError("anchor ids must match the sample count")
        if len(set(ids)) != len(ids):
            raise InputError("anchor ids must be unique")

    @property
    def count(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class ClipReport:
    """How much spectrum an eigendecomposition kept and dropped."""

    retained: int
    discarded: int
    discarded_max_abs: float
    discarded_abs_sum: float


@dataclass(frozen=True)
class EigenFactor:
    """Retained eigenvectors and eigenvalues of a gram, plus the clip report.

    Eigenvalues are sorted descending; exact ties keep their original
    eigensolver order so repeated runs produce identical factors.
    """

    vectors: np.ndarray
    values: np.ndarray
    clip_report: ClipReport

    def projection(self) -> np.ndarray:
        """The map projection ``V * diag(1/sqrt(lam))``."""
        return self.vectors / np.sqrt(self.values)[None, :]


def eigen_projection(gram, clip_ratio: float = DEFAULT_CLIP_RATIO) -> EigenFactor:
    """Eigendecompose a symmetric gram, discarding the unusable spectrum.

    Eigenvalues at or below ``clip_ratio`` times the largest one (negative
    ones included) are dropped.  Raises DegenerateGramError when nothing
    survives.
    """
    if isinstance(gram, GramMatrix):
        values = gram.values
    else:
        values = np.asarray(gram, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise InputError("eigen_projection expects a square matrix")
    if not np.isfinite(values).all():
        raise InputError("gram contains non-finite entries")
    asym = float(np.max(np.abs(values - values.T))) if values.size else 0.0
    if asym > 1e-8:
        raise InputError(f"gram must be symmetric; max asymmetry {asym:.3e}")
    if not clip_ratio >= 0:
        raise ConfigError("clip_ratio must be >= 0")
    sym = (values + values.T) / 2.0
    lam, vec = np.linalg.eigh(sym)
    lam_max = float(lam[-1])
    if not lam_max > 0:
        raise DegenerateGramError(
            "gram has no positive eigenvalues; nothing to retain"
        )
    threshold = clip_ratio * lam_max
    keep = lam > threshold
    if not keep.any():
        raise DegenerateGramError(
            "every eigenvalue fell at or below the clip threshold"
        )
    dropped = lam[~keep]
    report = ClipReport(
        retained=int(keep.sum()),
        discarded=int(dropped.size),
        discarded_max_abs=float(np.max(np.abs(dropped))) if dropped.size else 0.0,
        discarded_abs_sum=float(np.sum(np.abs(dropped))) if dropped.size else 0.0,
    )
    kept_lam = lam[keep]
    kept_vec = vec[:, keep]
    order = np.argsort(-kept_lam, kind="stable")
    return EigenFactor(vectors=kept_vec[:, order], values=kept_lam[order],
                       clip_report=report)


def concat_maps(lower_maps, weights_row) -> np.ndarray:
    """Stack lower-unit maps side by side, each scaled by sqrt(weight).

    Inner products of the stacked rows equal the weighted sum of the lower
    units' inner products.  Zero weights keep their (zeroed) block so the
    concatenated width is stable.
    """
    weights_row = np.asarray(weights_row, dtype=np.float64)
    if weights_row.ndim != 1 or len(lower_maps) != weights_row.shape[0]:
        raise ConfigError(
            f"{weights_row.shape} weights for {len(lower_maps)} lower maps"
        )
    if weights_row.size and np.min(weights_row) < 0:
        raise ConfigError("mixing weights must be nonnegative")
    rows = {np.asarray(m).shape[0] for m in lower_maps}
    if len(rows) > 1:
        raise InputError("lower maps must agree on the number of rows")
    parts = [np.sqrt(w) * np.asarray(m, dtype=np.float64)
             for w, m in zip(weights_row, lower_maps)]
    return np.hstack(parts)


def build_input_layer(specs, anchors: AnchorSet,
                      clip_ratio: float = DEFAULT_CLIP_RATIO,
                      n_jobs: int = 1) -> list:
    """Explicit maps for each base kernel over the anchor set.

    Each unit stores the projection from the eigendecomposition of its gram
    and, as its anchors, its own map of the anchor samples (gram times
    projection), whose row inner products reproduce the gram.
    """
    units = []
    for q, spec in enumerate(specs):
        K = gram_matrix(spec, anchors.samples, n_jobs=n_jobs).values
        K = (K + K.T) / 2.0
        try:
            factor = eigen_projection(K, clip_ratio)
        except DegenerateGramError as err:
            raise BuildError(f"layer 1, unit {q + 1}: {err}") from err
        U = factor.projection()
        units.append(DmnUnit(activation=IDENTITY, anchors=K @ U, projection=U,
                             kernel=spec, clip_report=factor.clip_report))
    return units


def build_dmn(arch: DknArchitecture, anchors: AnchorSet,
              clip_ratio: float = DEFAULT_CLIP_RATIO, n_jobs: int = 1,
              log=None) -> DmnModel:
    """Construct the full explicit-map model for a network architecture.

    ``log`` is an optional callable receiving one text line per unit with
    the retained width and discarded eigenvalue mass.
    """
    import copy as _copy

    def emit(layer, unit, report):
        if log is not None:
            log(f"layer {layer} unit {unit}: retained {report.retained}, "
                f"discarded {report.discarded} "
                f"(max |eig| {report.discarded_max_abs:.3e})")

    input_units = build_input_layer(arch.input_kernels, anchors, clip_ratio,
                                    n_jobs=n_jobs)
    for q, unit in enumerate(input_units):
        emit(1, q + 1, unit.clip_report)
    unit_layers = [input_units]
    lower_outputs = [unit.anchors for unit in input_units]
    for li, layer_spec in enumerate(arch.layers):
        layer_no = li + 2
        units = []
        outputs = []
        for p in range(layer_spec.width):
            A = concat_maps(lower_outputs, layer_spec.weights[p])
            pre = A @ A.T
            pre = (pre + pre.T) / 2.0
            if layer_spec.activation == EXP and np.max(np.abs(pre)) > EXP_ARG_LIMIT:
                raise NumericRangeError(
                    f"layer {layer_no}, unit {p + 1}: exp argument exceeds "
                    f"{EXP_ARG_LIMIT:g}"
                )
            G = activation_apply(layer_spec.activation, pre)
            try:
                factor = eigen_projection(G, clip_ratio)
            except DegenerateGramError as err:
                raise BuildError(f"layer {layer_no}, unit {p + 1}: {err}") from err
            U = factor.projection()
            unit = DmnUnit(activation=layer_spec.activation, anchors=A,
                           projection=U, clip_report=factor.clip_report)
            emit(layer_no, p + 1, factor.clip_report)
            units.append(unit)
            outputs.append(G @ U)
        unit_layers.append(units)
        lower_outputs = outputs
    return DmnModel(layers=unit_layers, arch=_copy.deepcopy(arch),
                    anchor_samples=anchors.samples.copy(),
                    anchor_ids=anchors.ids)


def reconstruction_errors(model: DmnModel, n_jobs: int = 1) -> list:
    """Relative spectral error between each unit's map gram and its network
    kernel gram, both over the model's anchor samples.

    Returns a list of layers, each a list of per-unit errors.  Freshly built
    models reproduce every unit's gram up to the clipped eigenvalue mass.
    """
    S = model.anchor_samples
    ids = model.anchor_ids
    input_grams = [
        gram_matrix(unit.kernel, S, n_jobs=n_jobs, row_ids=ids, col_ids=ids)
        for unit in model.layers[0]
    ]
    reference = dkn_forward_grams(model.arch, input_grams)
    _, trace = forward_batch(model, S)
    errors = []
    for l, units in enumerate(model.layers):
        layer_errors = []
        for p in range(len(units)):
            K = reference[l][p].values
            phi = trace.out[l][p]
            Khat = phi @ phi.T
            denom = float(np.linalg.norm(K, 2))
            if denom == 0.0:
                raise DegenerateGramError(
                    f"layer {l + 1}, unit {p + 1}: reference gram is zero"
                )
            layer_errors.append(float(np.linalg.norm(Khat - K, 2)) / denom)
        errors.append(layer_errors)
    return errors
