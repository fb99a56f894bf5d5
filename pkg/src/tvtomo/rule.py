"""Error-free choice of the regularization weight from one noisy data set.

For a template f the significance score is s_lambda(f) = lambda*TV(f)/sigma(f),
where sigma(f) is estimated by translating f over the grid: for each view the
inner products of the translated projections with the data vary mostly with the
noise, and the per-view sample variances add up to sigma^2. The chosen weight
is the smallest lambda for which s_lambda(f_d) >= s_min(f_d) for every ball
template f_d in the test family, which closes to

    lambda* = max_d sigma_d * max(s_min_d, 0) / TV(f_d).

s_min_d has a detection part sqrt(2)*inv_erfc(mu*d^3/|Omega|) and a bias part
-a*||T f_d||^2 / (sigma_d * max|f_d|) tied to the analysis threshold a.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ValidationError
from .grid import BallSpec, ProjectionStack, Volume, rasterize_ball
from .projector import ForwardModel, apply, backproject_single
from .special import erfc, inv_erfc
from .tv import tv_norm

__all__ = [
    "LineMinInputs",
    "line_minimizer",
    "SigmaEstimate",
    "estimate_sigma",
    "compute_s_lambda",
    "SminConfig",
    "compute_smin",
    "RuleRow",
    "ParamChoiceReport",
    "choose_lambda",
    "feature_significance",
    "DEFAULT_DIAMETERS",
]

DEFAULT_DIAMETERS = (2.0, 3.0, 4.0, 6.0, 8.0, 12.0)


@dataclass(frozen=True)
class LineMinInputs:
    """Scalars of the one-dimensional problem min_t 0.5*||t*Tf - g||^2 + r*|t|."""

    tf_g: float
    tf_norm_sq: float
    r: float

    def __post_init__(self):
        for name in ("tf_g", "tf_norm_sq", "r"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValidationError(f"{name} must be finite, got {v}")
        if self.tf_norm_sq < 0:
            raise ValidationError(f"tf_norm_sq must be >= 0, got {self.tf_norm_sq}")
        if self.r < 0:
            raise ValidationError(f"r must be >= 0, got {self.r}")


def line_minimizer(inp: LineMinInputs) -> float:
    """Exact minimizer: soft threshold of tf_g at r, scaled by 1/tf_norm_sq."""
    if inp.tf_norm_sq == 0.0:
        if inp.r == 0.0:
            raise ValidationError(
                "line minimizer is not unique: tf_norm_sq and r are both zero"
            )
        if abs(inp.tf_g) <= inp.r:
            return 0.0
        raise ValidationError(
            "inconsistent inputs: tf_norm_sq is zero but |tf_g| exceeds r, "
            "the objective is unbounded below"
        )
    if inp.tf_g > inp.r:
        return (inp.tf_g - inp.r) / inp.tf_norm_sq
    if inp.tf_g < -inp.r:
        return (inp.tf_g + inp.r) / inp.tf_norm_sq
    return 0.0


@dataclass(frozen=True)
class SigmaEstimate:
    sigma: float
    per_view_variances: np.ndarray
    offsets: np.ndarray
    seed: int

    @property
    def num_translations(self) -> int:
        return self.offsets.shape[0]


def _admissible_offset_grid(f: Volume):
    """Per-axis inclusive offset ranges keeping supp(f) inside the grid."""
    support = np.nonzero(f.data)
    if support[0].size == 0:
        raise ValidationError("sigma estimation needs a template with nonempty support")
    los, counts = [], []
    for ax in range(3):
        i0 = int(support[ax].min())
        i1 = int(support[ax].max())
        n = f.dims[ax]
        lo = -i0
        cnt = n - (i1 - i0 + 1) + 1
        los.append(lo)
        counts.append(cnt)
    return support, los, counts


def estimate_sigma(
    f: Volume,
    data: ProjectionStack,
    model: ForwardModel,
    l: int = 100,
    seed: int = 0,
) -> SigmaEstimate:
    """Translation-based noise scale of the data as seen by template f.

    Draws ``l`` distinct grid translations of f uniformly at random, forms the
    per-view inner products with the data through per-view backprojections,
    and returns sqrt of the summed per-view sample variances (ddof=1).
    """
    if l < 2:
        raise ValidationError(f"need at least 2 translations, got {l}")
    if f.dims != model.vol_dims or f.voxel_size != model.voxel_size:
        raise ValidationError("template grid does not match the forward model")
    if data.geometry != model.geometry:
        raise ValidationError("data geometry does not match the forward model")

    support, los, counts = _admissible_offset_grid(f)
    total = counts[0] * counts[1] * counts[2]
    if total < l:
        raise CapacityError(
            f"only {total} admissible translations for this support, need {l}; "
            "use a smaller template or fewer translations"
        )
    rng = np.random.default_rng(seed)
    picks = np.sort(rng.choice(total, size=l, replace=False))
    ox = los[0] + picks % counts[0]
    rest = picks // counts[0]
    oy = los[1] + rest % counts[1]
    oz = los[2] + rest // counts[1]
    offsets = np.stack([ox, oy, oz], axis=1).astype(np.int64)

    xs, ys, zs = (s.astype(np.int64) for s in support)
    vals = f.data[support]
    m = model.num_views
    inner = np.empty((l, m))
    # One view at a time: a single-view backprojection plus shifted gathers is
    # exactly <T_j (translated f), g_j>_Y by the adjoint identity.
    for j in range(m):
        b = backproject_single(model, data.images[j], j)
        gathered = b[
            xs[None, :] + ox[:, None],
            ys[None, :] + oy[:, None],
            zs[None, :] + oz[:, None],
        ]
        inner[:, j] = f.voxel_volume * (gathered @ vals)
    per_view = np.var(inner, axis=0, ddof=1)
    sigma = float(np.sqrt(per_view.sum()))
    return SigmaEstimate(sigma=sigma, per_view_variances=per_view,
                         offsets=offsets, seed=seed)


def _sigma_value(sigma) -> float:
    return float(getattr(sigma, "sigma", sigma))


def compute_s_lambda(f: Volume, lam: float, sigma) -> float:
    """Significance score lambda * TV(f) / sigma(f)."""
    if lam < 0:
        raise ValidationError(f"lambda must be >= 0, got {lam}")
    sig = _sigma_value(sigma)
    if not sig > 0:
        raise ValidationError(f"sigma must be positive, got {sig}")
    return lam * tv_norm(f.data, 0.0) / sig


@dataclass(frozen=True)
class SminConfig:
    """Knobs of the score floor: analysis threshold a and false-alarm weight mu."""

    a: float
    mu: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.a) or self.a < 0:
            raise ValidationError(f"a must be >= 0, got {self.a}")
        if not math.isfinite(self.mu) or self.mu <= 0:
            raise ValidationError(f"mu must be positive, got {self.mu}")


def _smin_parts(tf_norm_sq: float, sigma: float, max_abs: float, d: float,
                omega: float, cfg: SminConfig) -> tuple[float, float]:
    """(detection term, bias coefficient); s_min = detect - a * bias."""
    y = cfg.mu * d**3 / omega
    if y >= 2.0:
        raise ValidationError(
            f"mu*d^3/|Omega| = {y} is outside the inv_erfc domain; "
            "diameter too large for this grid"
        )
    detect = math.sqrt(2.0) * inv_erfc(y)
    bias = tf_norm_sq / (sigma * max_abs)
    return detect, bias


def compute_smin(f_d: Volume, d: float, model: ForwardModel, sigma, cfg: SminConfig) -> float:
    """Score floor for a template of diameter d on this model and noise scale."""
    if d <= 0:
        raise ValidationError(f"diameter must be positive, got {d}")
    sig = _sigma_value(sigma)
    if not sig > 0:
        raise ValidationError(f"sigma must be positive, got {sig}")
    max_abs = float(np.max(np.abs(f_d.data)))
    if max_abs == 0:
        raise ValidationError("template must be nonzero")
    p = apply(model, f_d)
    tf_norm_sq = model.pixel_area * float(np.sum(p.images**2))
    omega = f_d.num_voxels * f_d.voxel_volume
    detect, bias = _smin_parts(tf_norm_sq, sig, max_abs, d, omega, cfg)
    return detect - cfg.a * bias


@dataclass(frozen=True)
class RuleRow:
    diameter: float
    tv: float
    sigma: float
    tf_norm_sq: float
    s_min: float
    lam: float
    # a-independent pieces, kept so the lambda(a) curve is cheap to re-evaluate
    detect_term: float
    bias_term: float


@dataclass(frozen=True)
class ParamChoiceReport:
    rows: list[RuleRow]
    selected_lambda: float
    binding_diameter: float | None
    rule_imposes_no_regularization: bool
    a: float
    mu: float
    num_translations: int
    seed: int

    def lambda_for_threshold(self, a: float) -> float:
        """Selected weight if the analysis threshold had been a instead."""
        if a < 0:
            raise ValidationError(f"a must be >= 0, got {a}")
        best = 0.0
        for row in self.rows:
            smin = row.detect_term - a * row.bias_term
            best = max(best, row.sigma * max(smin, 0.0) / row.tv)
        return best


def _centered_ball(d: float, model: ForwardModel) -> Volume:
    dims = model.vol_dims
    vs = model.voxel_size
    origin = model.vol_origin
    center = tuple(origin[ax] + vs * ((dims[ax] - 1) // 2) for ax in range(3))
    return rasterize_ball(BallSpec(center=center, diameter=float(d), value=1.0),
                          dims, vs, origin)


def choose_lambda(
    data: ProjectionStack,
    model: ForwardModel,
    diameters=DEFAULT_DIAMETERS,
    cfg: SminConfig = SminConfig(a=0.5),
    l: int = 100,
    seed: int = 0,
) -> ParamChoiceReport:
    """Smallest lambda whose score meets the floor for every ball template.

    Templates are unit-value balls centered on the grid. Each diameter gets
    its own translation draw (seed + index). If every floor is non-positive
    the rule imposes nothing: lambda = 0 with a warning.
    """
    diameters = tuple(float(d) for d in diameters)
    if not diameters:
        raise ValidationError("need at least one template diameter")
    if any(d <= 0 for d in diameters):
        raise ValidationError(f"diameters must be positive, got {diameters}")
    if data.geometry != model.geometry:
        raise ValidationError("data geometry does not match the forward model")

    omega = (model.vol_dims[0] * model.vol_dims[1] * model.vol_dims[2]) * model.voxel_volume
    rows = []
    for i, d in enumerate(diameters):
        f_d = _centered_ball(d, model)
        if not np.any(f_d.data):
            raise ValidationError(f"template ball of diameter {d} covers no voxel")
        tv_d = tv_norm(f_d.data, 0.0)
        est = estimate_sigma(f_d, data, model, l=l, seed=seed + i)
        if not est.sigma > 0:
            raise ValidationError(
                f"degenerate noise estimate (sigma = {est.sigma}) for diameter {d}"
            )
        p = apply(model, f_d)
        tf_norm_sq = model.pixel_area * float(np.sum(p.images**2))
        detect, bias = _smin_parts(tf_norm_sq, est.sigma, 1.0, d, omega, cfg)
        smin = detect - cfg.a * bias
        lam_d = est.sigma * max(smin, 0.0) / tv_d
        rows.append(RuleRow(diameter=d, tv=tv_d, sigma=est.sigma,
                            tf_norm_sq=tf_norm_sq, s_min=smin, lam=lam_d,
                            detect_term=detect, bias_term=bias))

    best = max(rows, key=lambda r: r.lam)
    no_constraint = all(r.s_min <= 0 for r in rows)
    if no_constraint:
        warnings.warn(
            "every template floor is non-positive: the rule imposes no "
            "regularization (lambda = 0)",
            RuntimeWarning,
        )
        selected, binding = 0.0, None
    else:
        selected, binding = best.lam, best.diameter
    return ParamChoiceReport(
        rows=rows,
        selected_lambda=selected,
        binding_diameter=binding,
        rule_imposes_no_regularization=no_constraint,
        a=cfg.a,
        mu=cfg.mu,
        num_translations=l,
        seed=seed,
    )


def feature_significance(
    f: Volume,
    lam: float,
    data: ProjectionStack,
    model: ForwardModel,
    l: int = 100,
    seed: int = 0,
) -> tuple[float, float]:
    """Score of a candidate feature and its Gaussian tail probability."""
    est = estimate_sigma(f, data, model, l=l, seed=seed)
    if not est.sigma > 0:
        raise ValidationError(f"degenerate noise estimate: sigma = {est.sigma}")
    s = compute_s_lambda(f, lam, est)
    return s, erfc(s / math.sqrt(2.0))
