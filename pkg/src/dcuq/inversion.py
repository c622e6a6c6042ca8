"""Data-consistent inversion: posterior ratio, diagnostics and rejection sampling.

The posterior density is ``prior(l) * r(Q(l))`` with
``r(q) = observed(q) / pushforward(q)``. Everything here works on the prior
sample set of a :class:`~dcuq.pushforward.PushForwardEstimate`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import EmptyPosteriorError, IncompatibleEstimateError, PredictabilityError

DENSITY_FLOOR = 1e-14
OBSERVED_FLOOR = 1e-10
PREDICTABILITY_THRESHOLD = 0.05
RATIO_CAP = 1e6


@dataclass(frozen=True)
class PredictabilityReport:
    ok: bool
    integral: float
    max_ratio: float
    threshold: float
    ratio_cap: float
    reason: str = ""


@dataclass(frozen=True)
class DiagnosticsReport:
    integral_I: float
    kl_prior_post: float
    pf_post_mean: float
    pf_post_var: float
    accepted_count: int
    predictability_ok: bool
    threshold: float


@dataclass(eq=False)
class PosteriorEstimate:
    pushforward: object
    observed: object
    r_values: np.ndarray
    accepted: np.ndarray
    diagnostics: DiagnosticsReport


def _ratio(pushforward, observed):
    q = pushforward.qoi_values.reshape(-1, 1)
    num = observed.pdf(q)
    den = pushforward.density_at_samples
    return num, den


def posterior_ratio(pushforward, observed):
    """``r_i = observed(q_i) / pushforward_kde(q_i)`` at every prior sample."""
    num, den = _ratio(pushforward, observed)
    bad = (den < DENSITY_FLOOR) & (num > OBSERVED_FLOOR)
    if np.any(bad):
        i = int(np.argmax(bad))
        q = float(pushforward.qoi_values[i])
        raise PredictabilityError(
            f"push-forward density {den[i]:.3g} below floor where observed density is {num[i]:.3g} (q={q:.6g})",
            q=q,
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(num > 0, num / np.maximum(den, DENSITY_FLOOR), 0.0)
    return r


def check_predictability(pushforward, observed, threshold=PREDICTABILITY_THRESHOLD,
                         ratio_cap=RATIO_CAP, r_values=None):
    """Report whether the Monte Carlo integral of the posterior is within ``threshold`` of 1."""
    if r_values is None:
        try:
            r_values = posterior_ratio(pushforward, observed)
        except PredictabilityError as exc:
            return PredictabilityReport(False, float("nan"), float("inf"), threshold, ratio_cap, str(exc))
    integral = float(np.mean(r_values))
    rmax = float(np.max(r_values))
    reasons = []
    if abs(integral - 1.0) > threshold:
        reasons.append(f"|I - 1| = {abs(integral - 1.0):.4g} exceeds {threshold}")
    if rmax > ratio_cap:
        reasons.append(f"max ratio {rmax:.4g} exceeds cap {ratio_cap}")
    return PredictabilityReport(not reasons, integral, rmax, threshold, ratio_cap, "; ".join(reasons))


def rejection_sample(r_values, seed):
    """Indices accepted by comparing stream-``(1,)`` uniforms with ``r_i / max r``."""
    r = np.asarray(r_values, dtype=float)
    rmax = r.max() if r.size else 0.0
    if not rmax > 0:
        raise EmptyPosteriorError("all ratio values are zero; nothing can be accepted")
    u = rng.uniforms(seed, rng.REJECTION_TAG, 0, r.size)
    return np.nonzero(u <= r / rmax)[0]


def kl_estimate(r_values):
    r = np.asarray(r_values, dtype=float)
    pos = r > 0
    terms = np.zeros_like(r)
    terms[pos] = r[pos] * np.log(r[pos])
    return float(np.mean(terms))


def diagnostics(posterior, threshold=PREDICTABILITY_THRESHOLD, ratio_cap=RATIO_CAP):
    r = posterior.r_values
    q = posterior.pushforward.qoi_values[posterior.accepted]
    report = check_predictability(posterior.pushforward, posterior.observed, threshold,
                                  ratio_cap, r_values=r)
    return DiagnosticsReport(
        integral_I=float(np.mean(r)),
        kl_prior_post=kl_estimate(r),
        pf_post_mean=float(np.mean(q)) if q.size else float("nan"),
        pf_post_var=float(np.var(q, ddof=1)) if q.size > 1 else float("nan"),
        accepted_count=int(q.size),
        predictability_ok=report.ok,
        threshold=threshold,
    )


def solve_inverse(pushforward, observed, seed=None, threshold=PREDICTABILITY_THRESHOLD,
                  ratio_cap=RATIO_CAP):
    """Ratio, accepted samples and diagnostics for one push-forward.

    Does not raise on a failed predictability check; inspect
    ``result.diagnostics.predictability_ok``.
    """
    r = posterior_ratio(pushforward, observed)
    seed = pushforward.seed if seed is None else seed
    accepted = rejection_sample(r, seed)
    post = PosteriorEstimate(pushforward, observed, r, accepted, None)
    post.diagnostics = diagnostics(post, threshold, ratio_cap)
    return post


def l1_posterior_error(reference, approx):
    """``(1/M) sum_i |r(Q(l_i)) - r_n(Q_n(l_i))|`` over the shared prior samples."""
    a, b = reference.pushforward, approx.pushforward
    if a.seed != b.seed or a.sample_count != b.sample_count:
        raise IncompatibleEstimateError("posterior estimates use different prior sample sets")
    return float(np.mean(np.abs(reference.r_values - approx.r_values)))
