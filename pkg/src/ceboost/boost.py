"""Online regime-switch detection and sparse residual boosting.

The driver scans contiguous batches with the current model.  When the
thresholded single-batch causation entropy matrix is nonzero, aggregation
starts; once the aggregated pattern is unchanged for D consecutive batches
the residual coefficients are fit by least squares on all batches from the
detection batch through stabilization and added to the model.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .basis import BasisLibrary
from .centropy import AggregationState, BinaryCEM, ThresholdPolicy, compute_cem, threshold
from .timeseries import forward_difference

__all__ = [
    "Model",
    "ResidualModel",
    "DetectorConfig",
    "DetectionReport",
    "residual_dynamics",
    "detect",
    "fit_residual",
    "run_online",
    "save_model",
    "load_model",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Model:
    """Coefficient matrix over a basis library: dynamics estimate xi @ Phi.

    ``equations`` lists the state components whose derivatives the rows
    model; for fully observed systems it is simply 0..p-1.  Coefficients may
    sit outside the library's candidate masks (the masks restrict which
    functions are *examined* for causation, while a known starting model may
    legitimately carry terms that are never candidates).
    """

    library: BasisLibrary
    xi: np.ndarray
    equations: tuple = ()

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=np.float64)
        eqs = self.equations or tuple(range(self.library.n_equations))
        if xi.shape != (len(eqs), self.library.n_functions):
            raise ValueError(
                f"xi must be ({len(eqs)}, {self.library.n_functions}), got {xi.shape}"
            )
        if not np.all(np.isfinite(xi)):
            raise ValueError("model coefficients must be finite")
        xi.setflags(write=False)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "equations", tuple(eqs))

    @property
    def n_equations(self):
        return len(self.equations)

    def predict_derivative(self, states):
        """(M, n_equations) model dynamics at the given states."""
        return self.library.evaluate(states) @ self.xi.T

    def add_residual(self, residual):
        return Model(library=self.library, xi=self.xi + residual.xi_r,
                     equations=self.equations)

    def coefficient(self, equation_row, function_name):
        return float(self.xi[equation_row, self.library.index_of(function_name)])


@dataclass(frozen=True)
class ResidualModel:
    """Sparse correction fitted on the stable pattern's support."""

    xi_r: np.ndarray
    support: BinaryCEM

    def __post_init__(self):
        xi = np.asarray(self.xi_r, dtype=np.float64)
        if not np.all(np.isfinite(xi)):
            raise ValueError("residual coefficients must be finite")
        if np.any((xi != 0.0) & ~self.support.pattern):
            raise ValueError("residual coefficients outside the support pattern")
        xi.setflags(write=False)
        object.__setattr__(self, "xi_r", xi)


@dataclass(frozen=True)
class DetectorConfig:
    """Knobs of the online detector."""

    batch_length: float
    policy: ThresholdPolicy = field(default_factory=ThresholdPolicy)
    D: int = 4
    max_batches: int = 0
    include_detection_batch: bool = True
    add_constant_to_fit: bool = True
    augmenter: object = None

    def __post_init__(self):
        if self.D < 1:
            raise ValueError("stability span D must be >= 1")


@dataclass(frozen=True)
class DetectionReport:
    """Outcome of one detected switch (or an incomplete tail detection)."""

    switch_detected: bool
    detection_batch: int
    detection_time: float
    stabilization_batch: int
    stabilization_time: float
    k_star: int
    pattern_first_batch: int
    pattern: BinaryCEM
    residual: ResidualModel | None
    model: Model
    complete: bool
    aggregated_cem: np.ndarray | None = None
    row_first_stable: dict = field(default_factory=dict)

    def pattern_entries(self, library):
        names = library.names()
        return [(i, names[n]) for i, n in self.pattern.entries()]

    def to_dict(self, library):
        res = {}
        if self.residual is not None:
            for i, n in zip(*np.nonzero(self.residual.xi_r)):
                res.setdefault(str(i), {})[library.names()[n]] = float(
                    self.residual.xi_r[i, n]
                )
        return {
            "schema": "ceboost/report-v1",
            "switch_detected": self.switch_detected,
            "complete": self.complete,
            "detection_batch": self.detection_batch,
            "detection_time": self.detection_time,
            "stabilization_batch": self.stabilization_batch,
            "stabilization_time": self.stabilization_time,
            "k_star": self.k_star,
            "pattern_first_batch": self.pattern_first_batch,
            "pattern": [[int(i), library.names()[n]] for i, n in self.pattern.entries()],
            "residual_coefficients": res,
            "row_first_stable": {str(k): v for k, v in self.row_first_stable.items()},
        }


def residual_dynamics(batch, model):
    """Forward-difference derivative minus the model dynamics.

    Row m pairs the difference over [t_m, t_{m+1}) with the state at t_m,
    for the modeled equations only.
    """
    if batch.p != model.library.p:
        raise ValueError(f"batch has {batch.p} components, library expects {model.library.p}")
    deriv = forward_difference(batch).values[:, list(model.equations)]
    pred = model.predict_derivative(batch.values[:-1])
    return deriv - pred


def _batch_cem(batch, model):
    res = residual_dynamics(batch, model)
    phi = model.library.evaluate(batch.values[:-1])
    return compute_cem(res, phi, model.library.row_masks, batch_index=batch.index)


def detect(batch, model, config):
    """True iff the thresholded single-batch CEM has any active entry."""
    cem = _batch_cem(batch, model)
    pattern = threshold(cem, config.policy, model.library.row_masks, detect=True)
    return pattern.any(), cem


def _augmented(batch, config):
    return config.augmenter(batch) if config.augmenter is not None else batch


def fit_residual(batches, model, pattern, add_constant=True):
    """Row-wise ordinary least squares on the pattern's support.

    Pools the residual/state pairs of all given batches.  When the library
    has a constant function, every active row's support is extended with it:
    a mean shift in the residual carries no causation entropy (a constant has
    zero variance) yet must be absorbed by the fit, and leaving it out would
    bias the other coefficients.
    """
    if not pattern.any():
        raise ValueError("empty pattern: nothing to fit")
    lib = model.library
    res_blocks, phi_blocks = [], []
    for b in batches:
        res_blocks.append(residual_dynamics(b, model))
        phi_blocks.append(lib.evaluate(b.values[:-1]))
    res = np.vstack(res_blocks)
    phi = np.vstack(phi_blocks)
    support = np.array(pattern.pattern, dtype=bool)
    const = lib.constant_index()
    if add_constant and const is not None:
        support[support.any(axis=1), const] = True
    max_support = int(support.sum(axis=1).max())
    if res.shape[0] < max_support + 1:
        raise ValueError("not enough samples for the largest row support")
    xi_r = np.zeros_like(model.xi)
    for i in range(support.shape[0]):
        cols = np.flatnonzero(support[i])
        if cols.size == 0:
            continue
        design = phi[:, cols]
        coef, _, rank, _ = np.linalg.lstsq(design, res[:, i], rcond=None)
        if rank < cols.size:
            names = [lib.names()[c] for c in cols]
            raise np.linalg.LinAlgError(
                f"rank-deficient design for equation row {i} (columns {names})"
            )
        xi_r[i, cols] = coef
    return ResidualModel(xi_r=xi_r, support=BinaryCEM(pattern=support))


def run_online(stream, model, config):
    """Scan a batch stream, boosting the model after each stabilized switch.

    Returns the list of detection reports; the final model is the ``model``
    attribute of the last report (or the input model if no switch occurred).
    """
    reports = []
    agg = None
    fit_batches = []
    detection_batch = None
    for raw_batch in stream:
        if config.max_batches and raw_batch.index > config.max_batches:
            break
        batch = _augmented(raw_batch, config)
        if agg is None:
            fired, cem = detect(batch, model, config)
            if not fired:
                continue
            detection_batch = batch
            agg = AggregationState(policy=config.policy,
                                   masks=model.library.row_masks, D=config.D)
            if config.include_detection_batch:
                stable = agg.update(cem)
                fit_batches = [batch]
            else:
                stable = None
                fit_batches = []
            log.info("switch detected at batch %d (t=%g)", batch.index, batch.t_start)
        else:
            cem = _batch_cem(batch, model)
            stable = agg.update(cem)
            fit_batches.append(batch)
        if stable is None:
            continue
        if not stable.any():
            log.warning(
                "aggregated pattern stabilized empty after batch %d; "
                "treating the detection as a false alarm", batch.index,
            )
            agg = None
            fit_batches = []
            continue
        residual = fit_residual(fit_batches, model, stable,
                                add_constant=config.add_constant_to_fit)
        model = model.add_residual(residual)
        reports.append(DetectionReport(
            switch_detected=True,
            detection_batch=detection_batch.index,
            detection_time=detection_batch.t_start,
            stabilization_batch=batch.index,
            stabilization_time=batch.t_end,
            k_star=agg.K,
            pattern_first_batch=detection_batch.index + agg.k_first - 1,
            pattern=residual.support,
            residual=residual,
            model=model,
            complete=True,
            aggregated_cem=agg.aggregated().values,
            row_first_stable=dict(agg.row_first_stable),
        ))
        agg = None
        fit_batches = []
    if agg is not None:
        log.warning("stream exhausted during aggregation (detection batch %d)",
                    detection_batch.index)
        reports.append(DetectionReport(
            switch_detected=True,
            detection_batch=detection_batch.index,
            detection_time=detection_batch.t_start,
            stabilization_batch=0,
            stabilization_time=float("nan"),
            k_star=agg.K,
            pattern_first_batch=0,
            pattern=agg.last_pattern if agg.last_pattern is not None
            else BinaryCEM(np.zeros_like(model.library.row_masks)),
            residual=None,
            model=model,
            complete=False,
            aggregated_cem=agg.aggregated().values if agg.K else None,
        ))
    return reports


def save_model(model, path):
    lib_doc = {
        "p": model.library.p,
        "state_names": list(model.library.state_names),
        "functions": [
            {"name": f.name, "exponents": [[i, e] for i, e in f.exponents]}
            for f in model.library.functions
        ],
        "row_masks": model.library.row_masks.astype(int).tolist(),
    }
    coeffs = {}
    names = model.library.names()
    for i in range(model.n_equations):
        row = {names[n]: model.xi[i, n] for n in np.flatnonzero(model.xi[i])}
        coeffs[str(model.equations[i])] = row
    doc = {
        "schema": "ceboost/model-v1",
        "library": lib_doc,
        "equations": list(model.equations),
        "coefficients": coeffs,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_model(path):
    from .basis import BasisFunction

    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema") != "ceboost/model-v1":
        raise ValueError(f"unrecognized model schema in {path}")
    lib_doc = doc["library"]
    fns = tuple(
        BasisFunction(exponents=tuple((int(i), int(e)) for i, e in f["exponents"]),
                      name=f["name"])
        for f in lib_doc["functions"]
    )
    library = BasisLibrary(functions=fns, p=int(lib_doc["p"]),
                           row_masks=np.array(lib_doc["row_masks"], dtype=bool),
                           state_names=tuple(lib_doc["state_names"]))
    equations = tuple(doc["equations"])
    xi = np.zeros((len(equations), library.n_functions))
    for row_key, row in doc["coefficients"].items():
        i = list(map(str, equations)).index(row_key)
        for name, value in row.items():
            xi[i, library.index_of(name)] = value
    return Model(library=library, xi=xi, equations=equations)
