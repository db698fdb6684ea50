"""Bootstrap particle filter for the growth rate and the phase grid search."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .cir import TransitionLaw
from .errors import InvalidParamsError, NumericalError, WeightCollapseError
from .model import (TWO_PI, GrowthPath, ModelParams, Signal, complete_log_likelihood,
                    integrate_rate, wrap_phase)
from .streams import kernel_state, parallel_map, substream


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """Final particle trajectories with their normalized weights.

    ``xi`` and ``g`` are ``n_p x (n+1)``; ``weights`` are the normalized
    observation weights at the last step, before the final resampling.
    ``ancestry[i, j]`` is the index (among the propagated particles of step
    ``i``) of the particle that occupies slot ``j`` after resampling.
    """

    xi: np.ndarray
    g: np.ndarray
    weights: np.ndarray
    ancestry: np.ndarray
    ess: np.ndarray
    weight_sums: np.ndarray
    owner: np.ndarray
    selected: int
    rule: str = "trapezoid"
    step_evidence: np.ndarray = None

    @property
    def log_evidence(self):
        """Estimated log density of ``y_1..y_n`` given ``y_0`` (sum of per-step log mean weights)."""
        return float(np.sum(self.step_evidence))

    @property
    def n_particles(self):
        return self.weights.size

    def path(self, j=None):
        """Trajectory ``j``; default is the index drawn from the final weights."""
        j = self.selected if j is None else j
        return GrowthPath(self.xi[j], self.g[j])

    def mean_path(self):
        """Weighted mean trajectory (diagnostic only)."""
        return GrowthPath(self.weights @ self.xi, self.weights @ self.g)


@dataclass(frozen=True, eq=False)
class GridResult:
    b_star: float
    path: GrowthPath
    loglik_per_candidate: np.ndarray
    candidates: np.ndarray
    half_width: float
    ess: np.ndarray = field(default=None)
    failures: tuple = ()

    @property
    def index(self):
        return int(np.argmax(self.loglik_per_candidate))


def _law_arrays(params, n_p):
    law = TransitionLaw.from_params(params)
    return (np.full(1, law.nu), np.full(1, law.c), np.full(1, law.rho))


def run_filter(signal: Signal, A, B, b, sigma2, xi0, nu, c, rho, seed, rule="trapezoid",
               systematic=False, keep_trajectories=True):
    """Low-level driver shared by the main filter and the initialization pass.

    ``xi0``, ``nu``, ``c``, ``rho`` are per-particle arrays (length n_p) or
    length-1 arrays broadcast to all particles.
    """
    if not sigma2 > 0 or not math.isfinite(sigma2):
        raise InvalidParamsError("sigma2 must be positive and finite")
    xi0 = np.ascontiguousarray(xi0, dtype=float)
    n_p = xi0.size
    nu, c, rho = (np.ascontiguousarray(np.broadcast_to(v, (n_p,)), dtype=float)
                  for v in (nu, c, rho))
    if not (np.all(nu > 0) and np.all(c > 0) and np.all((rho > 0) & (rho < 1))):
        raise InvalidParamsError("transition law needs nu > 0, c > 0 and rho in (0, 1)")
    n1 = signal.y.size
    xi_out = np.empty((n1, n_p))
    anc_out = np.empty((n1, n_p), dtype=np.int64)
    ess = np.empty(n1)
    wsum = np.empty(n1)
    lz = np.empty(n1)
    w_final = np.empty(n_p)
    owner = np.empty(n_p, dtype=np.int64)
    state = kernel_state(seed)
    status = K.particle_filter(np.ascontiguousarray(signal.y), signal.delta, float(A), float(B),
                               float(b), float(sigma2), xi0, nu, c, rho, state,
                               rule == "trapezoid", bool(systematic), xi_out, anc_out, ess, wsum,
                               lz, w_final, owner)
    if status >= 0:
        raise WeightCollapseError(int(status))
    selected = int(K.choose_index(state, w_final))
    if keep_trajectories:
        xi_paths = K.trace_all(xi_out, anc_out)
        g_paths = np.vstack([integrate_rate(row, signal.delta, rule) for row in xi_paths]) \
            if n_p else np.empty((0, n1))
    else:
        sel = K.trace_lineage(xi_out, anc_out, selected)
        xi_paths = sel[None, :]
        g_paths = integrate_rate(sel, signal.delta, rule)[None, :]
    return ParticleEnsemble(xi=xi_paths, g=g_paths, weights=w_final, ancestry=anc_out.T.copy().T,
                            ess=ess, weight_sums=wsum, owner=owner,
                            selected=selected if keep_trajectories else 0, rule=rule,
                            step_evidence=lz), owner[selected]


def smc_filter(signal: Signal, params: ModelParams, n_p: int, rng, rule="trapezoid",
               systematic=False, keep_trajectories=True) -> ParticleEnsemble:
    """Filter the latent rate given fixed parameters.

    Particles start at ``xi_0 = a`` with uniform weights, move by exact draws
    from the transition law, are weighted by the Gaussian observation
    density and multinomially resampled at every step.

    ``rng`` is a seed (int or ``SeedSequence``) or a ``Generator``.
    """
    if n_p < 2:
        raise InvalidParamsError("need at least two particles")
    nu, c, rho = _law_arrays(params, n_p)
    ens, _ = run_filter(signal, params.A, params.B, params.b, params.sigma2,
                        np.full(n_p, params.a), nu, c, rho, rng, rule, systematic,
                        keep_trajectories)
    return ens


def grid_half_width(m, m0):
    return math.pi if m <= m0 else math.pi * (m - m0) ** -0.8


def phase_candidates(b, w, G):
    if G < 2:
        raise InvalidParamsError("grid needs G >= 2 candidates")
    j = np.arange(G)
    return wrap_phase(b - w + j * (2.0 * w / (G - 1)))


GRID_SCORES = ("complete", "evidence")


def smc_plus(signal: Signal, params: ModelParams, m: int, m0: int, G: int = 20,
             n_p: int = 1500, rng=0, rule="trapezoid", systematic=False,
             threads=1, score="complete") -> GridResult:
    """Joint search over phase offset and latent path.

    One filter per phase candidate; each candidate's path is drawn from its
    final weights. Candidates are ranked by the complete log-likelihood of
    that path, or with ``score="evidence"`` by the filter's log evidence.
    Ties go to the lowest candidate index. Candidate ``j`` always uses
    substream ``j`` of ``rng``, so results do not depend on ``threads``.
    """
    if score not in GRID_SCORES:
        raise InvalidParamsError(f"unknown grid score {score!r}")
    w = grid_half_width(m, m0)
    cands = phase_candidates(params.b, w, G)

    def run(j):
        p = params.replace(b=float(cands[j]))
        try:
            ens = smc_filter(signal, p, n_p, substream(rng, j), rule, systematic,
                             keep_trajectories=False)
        except WeightCollapseError as exc:
            return j, None, -np.inf, exc
        path = ens.path()
        value = ens.log_evidence if score == "evidence" else complete_log_likelihood(signal, path, p)
        return j, path, value, ens.ess

    results = parallel_map(run, range(G), threads)
    ll = np.array([r[2] for r in results], dtype=float)
    failures = tuple(r[0] for r in results if r[1] is None)
    if len(failures) == G:
        raise NumericalError(f"particle filter collapsed for all {G} phase candidates")
    best = int(np.argmax(ll))  # first maximum wins ties
    return GridResult(b_star=float(cands[best]), path=results[best][1],
                      loglik_per_candidate=ll, candidates=cands, half_width=w,
                      ess=results[best][3], failures=failures)
