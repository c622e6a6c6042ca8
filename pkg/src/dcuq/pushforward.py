"""Forward UQ: push a prior through a (possibly approximate) model and fit a KDE."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import time

import numpy as np

from . import rng
from .densities import SILVERMAN, fit_kde, sample
from .errors import DivergenceError, IncompatibleEstimateError, InvalidArgumentError
from .models import Fidelity
from .sparsegrid import _EVAL_CHUNK


@dataclass(eq=False)
class PushForwardEstimate:
    prior_samples: np.ndarray
    qoi_values: np.ndarray
    kde: object
    model_tag: str
    seed: int
    sample_count: int

    @cached_property
    def density_at_samples(self):
        """KDE evaluated at its own centers (the push-forward at Q_n(lambda_i))."""
        return self.kde.pdf(self.qoi_values.reshape(-1, 1))


_BLOCK = _EVAL_CHUNK


def evaluate_model(model, samples, fidelity, workers=1, chunk=None):
    """Evaluate ``model`` on each row; results are keyed by row so order of work is irrelevant."""
    fid = Fidelity.parse(fidelity)
    if fid.level is not None:
        # build once before any fan-out
        model.surrogate_for(fid)
    n = samples.shape[0]
    if workers <= 1 and chunk is None:
        parts = [(0, n)]
    else:
        size = chunk or -(-n // workers)
        # block boundaries on a fixed grid so each row sees the same arithmetic
        size = -(-size // _BLOCK) * _BLOCK
        parts = [(a, min(a + size, n)) for a in range(0, n, size)]
    out = np.empty(n)
    failed = []

    def run(part):
        a, b = part
        try:
            out[a:b] = model.evaluate(samples[a:b], fid)
        except DivergenceError as exc:
            failed.extend(a + i for i in exc.indices)
            if not exc.indices:
                failed.append(a)

    if workers <= 1:
        for p in parts:
            run(p)
    else:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(run, parts))
    if failed or not np.all(np.isfinite(out)):
        bad = sorted(set(failed) | set(np.nonzero(~np.isfinite(out))[0].tolist()))
        raise DivergenceError(
            f"model {model.name} diverged on {len(bad)} samples (first indices {bad[:10]})",
            indices=bad,
        )
    return out


def push_forward(prior, model, M, seed, bandwidth_rule=SILVERMAN, fidelity=None,
                 samples=None, qoi_values=None, workers=1):
    """Sample the prior, evaluate the model and fit the push-forward KDE.

    ``samples`` (and optionally precomputed ``qoi_values``) may be passed to
    reuse one sample set across fidelities; they must be the draw from
    ``(prior, M, seed)``.
    """
    if prior.dim != model.dim:
        raise InvalidArgumentError(
            f"prior dimension {prior.dim} does not match model dimension {model.dim}"
        )
    if samples is None:
        samples = sample(prior, M, seed)
    if samples.shape != (M, model.dim):
        raise InvalidArgumentError("sample array does not match (M, dim)")
    fid = Fidelity.parse(fidelity)
    if qoi_values is None:
        qoi_values = evaluate_model(model, samples, fid, workers)
    kde = fit_kde(qoi_values, bandwidth_rule, workers)
    return PushForwardEstimate(samples, np.asarray(qoi_values, dtype=float), kde, fid.tag(),
                               int(seed), int(M))


def _check_compatible(a, b):
    if a.seed != b.seed or a.sample_count != b.sample_count:
        raise IncompatibleEstimateError(
            f"estimates use different sample sets (seed {a.seed}/{b.seed}, M {a.sample_count}/{b.sample_count})"
        )


def linf_pf_error(reference, approx, mode="own"):
    """Sample-max estimate of the push-forward L-infinity error.

    ``mode="own"`` compares each KDE at its own QoI values,
    ``max_i |pi_ref(Q(l_i)) - pi_n(Q_n(l_i))|``; ``mode="ref"`` evaluates the
    approximate KDE at the reference QoI values instead.
    """
    _check_compatible(reference, approx)
    ref_vals = reference.density_at_samples
    if mode == "own":
        other = approx.density_at_samples
    elif mode == "ref":
        if approx is reference:
            other = ref_vals
        else:
            other = approx.kde.pdf(reference.qoi_values.reshape(-1, 1))
    else:
        raise InvalidArgumentError(f"unknown error mode {mode!r}")
    return float(np.max(np.abs(ref_vals - other)))


@dataclass
class ConvergenceRecord:
    fidelity: str
    M: int
    err_linf_ref: float
    err_linf_own: float
    seed: int
    wall_seconds: float
    kde_bandwidth: float
    err_l1_post: float = None
    diagnostics: object = None
    extra: dict = field(default_factory=dict)


def kde_sweep(reference, model, fidelity, sample_sizes, repetitions, seed,
              bandwidth_rule=SILVERMAN, workers=1, clock=time.perf_counter):
    """Average own-mode L-infinity error for KDEs built from random subsets.

    Subset ``(rep, M)`` is the ``M`` reference-sample indices with the smallest
    uniforms in stream ``(2, rep, M)``, so each row is reproducible alone.
    """
    qoi = evaluate_model(model, reference.prior_samples, fidelity, workers)
    ref_vals = reference.density_at_samples
    total = reference.sample_count
    records = []
    for m in sample_sizes:
        if m > total:
            raise InvalidArgumentError(f"sub-sample size {m} exceeds reference size {total}")
        start = clock()
        own, at_ref, bws = [], [], []
        for rep in range(repetitions):
            u = rng.uniforms(seed, (rng.SUBSAMPLE_TAG, rep, int(m)), 0, total)
            idx = np.sort(np.argsort(u, kind="stable")[:m])
            kde = fit_kde(qoi[idx], bandwidth_rule, workers)
            own.append(np.max(np.abs(ref_vals[idx] - kde.pdf(qoi[idx].reshape(-1, 1)))))
            at_ref.append(np.max(np.abs(ref_vals[idx] - kde.pdf(reference.qoi_values[idx].reshape(-1, 1)))))
            bws.append(kde.bandwidth)
        records.append(ConvergenceRecord(
            Fidelity.parse(fidelity).tag(), int(m), float(np.mean(at_ref)), float(np.mean(own)),
            int(seed), clock() - start, float(np.mean(bws)),
            extra={"repetitions": repetitions},
        ))
    return records


def forward_convergence_study(config, clock=time.perf_counter):
    """One record per fidelity in ``config.fidelities`` against the model's reference.

    ``config`` needs ``prior``, ``model``, ``M``, ``seed``, ``fidelities``,
    ``bandwidth_rule`` and ``workers`` attributes (see :class:`dcuq.harness.StudyConfig`).
    """
    fids = [Fidelity.parse(f) for f in config.fidelities]
    if not fids:
        return []
    samples = sample(config.prior, config.M, config.seed)
    ref_q = config.model.reference(samples)
    reference = push_forward(config.prior, config.model, config.M, config.seed,
                             config.bandwidth_rule, "exact", samples, ref_q, config.workers)
    records = []
    for fid in fids:
        start = clock()
        est = push_forward(config.prior, config.model, config.M, config.seed,
                           config.bandwidth_rule, fid, samples, workers=config.workers)
        records.append(ConvergenceRecord(
            fid.tag(), config.M, linf_pf_error(reference, est, "ref"),
            linf_pf_error(reference, est, "own"), config.seed, clock() - start,
            est.kde.bandwidth,
        ))
    return records
