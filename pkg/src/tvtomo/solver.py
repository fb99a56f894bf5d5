"""TV-regularized least-squares reconstruction by 2-D subspace descent.

Each outer iteration minimizes the objective over the plane spanned by the
negative gradient u and the previous step w = f_k - f_{k-1}. The restriction
of the smoothed TV term to that plane is available in closed form from six
precomputed quadratic fields, so the inner problem is solved by a damped
Newton method at the cost of a few array passes, with no extra projections.
A one-dimensional line search along u runs first; the 2-D stage continues
from its result, so an accepted step is never worse than a gradient step.

Projections of the iterates are tracked incrementally: T(f + a*u + b*w)
reuses T u and T w, one forward projection per iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ValidationError
from .grid import ProjectionStack, Volume
from .projector import ForwardModel, adjoint, apply
from .tv import TvConfig, forward_diffs, interface_mask, padded, pair_quad, tv_norm_gradient, tv_value

__all__ = ["SolverConfig", "SolveResult", "objective", "solve"]


@dataclass(frozen=True)
class SolverConfig:
    tv: TvConfig = field(default_factory=TvConfig)
    max_iters: int = 500
    rel_change_tol: float = 1e-5
    inner_newton_iters: int = 10
    nonneg: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValidationError(f"max_iters must be >= 1, got {self.max_iters}")
        if not (self.rel_change_tol >= 0):
            raise ValidationError(
                f"rel_change_tol must be >= 0, got {self.rel_change_tol}"
            )
        if self.inner_newton_iters < 1:
            raise ValidationError(
                f"inner_newton_iters must be >= 1, got {self.inner_newton_iters}"
            )


@dataclass
class SolveResult:
    reconstruction: Volume
    objective_trace: np.ndarray
    iterations_used: int
    converged: bool
    # value after the 1-D stage and after the 2-D stage, per iteration
    line_search_values: np.ndarray
    subspace_values: np.ndarray


def objective(f: Volume, g: ProjectionStack, model: ForwardModel, cfg: TvConfig) -> float:
    """lam * TV_beta(f) + 0.5 * ||Tf - g||_Y^2."""
    p = apply(model, f)
    resid = p.images - g.images
    return tv_value(f, cfg) + 0.5 * model.pixel_area * float(np.sum(resid * resid))


class _PlaneModel:
    """Objective restricted to f + a*u + b*w, exact up to rounding."""

    def __init__(self, lam, beta, off_count, q_fields, data_coeffs, pixel_area):
        self.lam = lam
        self.beta = beta
        self.off = off_count
        (self.q_ff, self.q_fu, self.q_fw,
         self.q_uu, self.q_uw, self.q_ww) = q_fields
        (self.c_rr, self.c_ru, self.c_rw,
         self.c_uu, self.c_uw, self.c_ww) = data_coeffs
        self.ap = pixel_area

    def _q(self, a, b):
        q = self.q_ff + (2 * a) * self.q_fu + (a * a) * self.q_uu
        if self.q_fw is not None:
            q += (2 * b) * self.q_fw + (2 * a * b) * self.q_uw + (b * b) * self.q_ww
        return q

    def _data_value(self, a, b):
        v = self.c_rr + 2 * a * self.c_ru + a * a * self.c_uu
        v += 2 * b * self.c_rw + 2 * a * b * self.c_uw + b * b * self.c_ww
        return 0.5 * self.ap * v

    def value(self, a, b):
        val = self._data_value(a, b)
        if self.lam > 0:
            t = np.sqrt(self.beta * self.beta + self._q(a, b))
            val += self.lam * (float(t.sum()) - self.beta * self.off)
        return val

    def value_grad_hess(self, a, b):
        da = self.ap * (self.c_ru + a * self.c_uu + b * self.c_uw)
        db = self.ap * (self.c_rw + a * self.c_uw + b * self.c_ww)
        haa = self.ap * self.c_uu
        hab = self.ap * self.c_uw
        hbb = self.ap * self.c_ww
        val = self._data_value(a, b)
        if self.lam > 0:
            t = np.sqrt(self.beta * self.beta + self._q(a, b))
            inv_t = 1.0 / t
            qa = self.q_fu + a * self.q_uu
            if self.q_fw is not None:
                qa = qa + b * self.q_uw
                qb = self.q_fw + a * self.q_uw + b * self.q_ww
            else:
                qb = None
            val += self.lam * (float(t.sum()) - self.beta * self.off)
            wa = qa * inv_t
            da += self.lam * float(wa.sum())
            haa += self.lam * float(np.sum((self.q_uu - wa * qa * inv_t) * inv_t))
            if qb is not None:
                wb = qb * inv_t
                db += self.lam * float(wb.sum())
                hbb += self.lam * float(np.sum((self.q_ww - wb * qb * inv_t) * inv_t))
                hab += self.lam * float(np.sum((self.q_uw - wa * qb * inv_t) * inv_t))
        return val, (da, db), (haa, hab, hbb)


def _newton_descend(plane: _PlaneModel, a, b, two_dim, max_iters, iteration):
    """Damped Newton from (a, b); returns the best point and value seen."""
    val = plane.value(a, b)
    if not math.isfinite(val):
        raise NumericalError("objective is not finite", iteration=iteration)
    for _ in range(max_iters):
        cur, (da, db), (haa, hab, hbb) = plane.value_grad_hess(a, b)
        if not two_dim:
            db, hab, hbb = 0.0, 0.0, 1.0
        gnorm = math.hypot(da, db)
        scale = max(abs(cur), 1.0)
        if gnorm <= 1e-14 * scale:
            break
        # The restricted objective is convex; a tiny ridge covers the
        # semidefinite corner cases (e.g. directions projecting to zero).
        ridge = 1e-12 * max(haa, hbb, 1e-300)
        haa += ridge
        hbb += ridge
        det = haa * hbb - hab * hab
        if det <= 0 or haa <= 0:
            sa, sb = -da, -db
            denom = haa * sa * sa + 2 * hab * sa * sb + hbb * sb * sb
            step = 1.0 if denom <= 0 else min(1.0, gnorm * gnorm / denom)
            sa *= step
            sb *= step
        else:
            sa = -(hbb * da - hab * db) / det
            sb = -(haa * db - hab * da) / det
        if not two_dim:
            sb = 0.0
        slope = da * sa + db * sb
        if slope >= 0:
            break
        tau = 1.0
        moved = False
        while tau > 1e-14:
            cand = plane.value(a + tau * sa, b + tau * sb)
            if math.isfinite(cand) and cand <= cur + 1e-4 * tau * slope:
                a += tau * sa
                b += tau * sb
                val = cand
                moved = True
                break
            tau *= 0.5
        if not moved:
            break
        if cur - val <= 1e-15 * scale:
            break
    return a, b, val


def solve(g: ProjectionStack, model: ForwardModel, cfg: SolverConfig) -> SolveResult:
    """Minimize the TV-regularized data fit from a zero start.

    Steps are accepted only if the objective does not increase, so the trace
    is non-increasing. Converged means the relative objective change stayed
    below ``rel_change_tol`` for 10 consecutive iterations.
    """
    if g.geometry != model.geometry:
        raise ValidationError("data geometry does not match the forward model")
    lam = cfg.tv.lam
    beta = cfg.tv.beta
    if lam > 0 and not beta > 0:
        raise ValidationError("solver needs a smoothed TV term: beta must be positive")
    dims = model.vol_dims
    ap = model.pixel_area
    vv = model.voxel_volume

    use_tv = lam > 0
    if use_tv:
        mask = interface_mask(dims)
        off_count = mask.size - int(mask.sum())
    else:
        off_count = 0

    f = np.zeros(dims)
    dpf = forward_diffs(padded(f)) if use_tv else None
    r = -g.images.copy()
    w = dpw = tw = None

    def tv_part(q_ff):
        t = np.sqrt(beta * beta + q_ff)
        return lam * (float(t.sum()) - beta * off_count)

    phi = 0.5 * ap * float(np.sum(r * r))
    if use_tv:
        phi += tv_part(pair_quad(dpf, dpf))
    trace = [phi]
    ls_vals, ss_vals = [], []

    converged = False
    streak = 0
    iterations = 0
    for k in range(cfg.max_iters):
        grad = vv * adjoint(model, ProjectionStack(model.geometry, r)).data
        if use_tv:
            grad += lam * tv_norm_gradient(f, beta)
        if not np.all(np.isfinite(grad)):
            raise NumericalError("gradient is not finite", iteration=k)
        u = -grad
        if not u.any() and w is None:
            converged = True
            break
        tu = apply(model, Volume(u, model.voxel_size, model.vol_origin)).images

        if use_tv:
            dpu = forward_diffs(padded(u))
            q_ff = pair_quad(dpf, dpf)
            q_fu = pair_quad(dpf, dpu)
            q_uu = pair_quad(dpu, dpu)
            if w is not None:
                q_fw = pair_quad(dpf, dpw)
                q_uw = pair_quad(dpu, dpw)
                q_ww = pair_quad(dpw, dpw)
            else:
                q_fw = q_uw = q_ww = None
        else:
            dpu = None
            q_ff = q_fu = q_uu = q_fw = q_uw = q_ww = None

        c_rr = float(np.sum(r * r))
        c_ru = float(np.sum(r * tu))
        c_uu = float(np.sum(tu * tu))
        if w is not None:
            c_rw = float(np.sum(r * tw))
            c_uw = float(np.sum(tu * tw))
            c_ww = float(np.sum(tw * tw))
        else:
            c_rw = c_uw = c_ww = 0.0

        plane = _PlaneModel(
            lam if use_tv else 0.0, beta, off_count,
            (q_ff, q_fu, q_fw, q_uu, q_uw, q_ww),
            (c_rr, c_ru, c_rw, c_uu, c_uw, c_ww), ap,
        )
        a1, _, phi_1d = _newton_descend(plane, 0.0, 0.0, False,
                                        cfg.inner_newton_iters, k)
        if w is not None:
            a2, b2, phi_2d = _newton_descend(plane, a1, 0.0, True,
                                             cfg.inner_newton_iters, k)
        else:
            a2, b2, phi_2d = a1, 0.0, phi_1d
        ls_vals.append(phi_1d)
        ss_vals.append(phi_2d)

        if not math.isfinite(phi_2d):
            raise NumericalError("inner step produced a non-finite value", iteration=k)
        if phi_2d > phi or (a2 == 0.0 and b2 == 0.0):
            phi_new = phi
        else:
            step = a2 * u if w is None else a2 * u + b2 * w
            tstep = a2 * tu if w is None else a2 * tu + b2 * tw
            f_new = f + step
            if cfg.nonneg and np.any(f_new < 0):
                f_clip, p_clip, phi_new = _clipped_step(
                    f, u, w, a2, b2, g, model, cfg.tv, phi, k
                )
                if phi_new < phi:
                    step = f_clip - f
                    r_new = p_clip - g.images
                    w, tw = step, r_new - r
                    f, r = f_clip, r_new
                    if use_tv:
                        dpf = forward_diffs(padded(f))
                        dpw = forward_diffs(padded(step))
            else:
                phi_new = phi_2d
                f = f_new
                r = r + tstep
                if use_tv:
                    dstep = a2 * dpu if dpw is None else a2 * dpu + b2 * dpw
                    dpf = dpf + dstep
                    dpw = dstep
                w, tw = step, tstep

        iterations = k + 1
        trace.append(phi_new)
        rel = (phi - phi_new) / max(abs(phi), 1e-300)
        phi = phi_new
        streak = streak + 1 if rel < cfg.rel_change_tol else 0
        if streak >= 10:
            converged = True
            break

    return SolveResult(
        reconstruction=Volume(f, model.voxel_size, model.vol_origin),
        objective_trace=np.asarray(trace),
        iterations_used=iterations,
        converged=converged,
        line_search_values=np.asarray(ls_vals),
        subspace_values=np.asarray(ss_vals),
    )


def _clipped_step(f, u, w, a, b, g, model, tv_cfg, phi, iteration):
    """Backtrack (a, b) until the clipped step does not increase the objective.

    Used only with the nonnegativity constraint; evaluates the objective
    exactly on the clipped candidate, so acceptance stays monotone. Returns
    the candidate, its projection, and its objective value.
    """
    for _ in range(30):
        step = a * u if w is None else a * u + b * w
        cand = np.maximum(f + step, 0.0)
        vol = Volume(cand, model.voxel_size, model.vol_origin)
        p = apply(model, vol).images
        resid = p - g.images
        val = tv_value(vol, tv_cfg) + 0.5 * model.pixel_area * float(np.sum(resid * resid))
        if not math.isfinite(val):
            raise NumericalError("objective is not finite after clipping",
                                 iteration=iteration)
        if val <= phi:
            return cand, p, val
        a *= 0.5
        b *= 0.5
    return f, None, phi
