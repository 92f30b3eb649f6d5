"""Marginal and MAP evaluation metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bp import log_score
from .core import ZERO_LOG, FactorGraph
from .exact import ExactResult

Q_CLAMP = 1e-12


@dataclass
class Metrics:
    kl: float | None
    rmse: float | None
    uai_score: float | None
    per_instance: list[dict] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"kl": self.kl, "rmse": self.rmse, "uai_score": self.uai_score}


def kl_divergence(p, q, clamp: float = Q_CLAMP) -> float:
    """KL(p || q) with ``0 ln 0 = 0`` and ``q`` clamped from below."""
    p = np.asarray(p, dtype=np.float64)
    q = np.maximum(np.asarray(q, dtype=np.float64), clamp)
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / q[nz])))


def hits_zero_potential(g: FactorGraph, x, zero_log: float = ZERO_LOG) -> bool:
    """True if ``x`` selects a potential entry that stands for probability zero."""
    for scope, pot in zip(g.scopes, g.log_potentials):
        if pot[tuple(x[i] for i in scope)] <= zero_log + 1e-9:
            return True
    return False


def uai_ratio(g: FactorGraph, true_score: float, x_hat) -> float:
    """Relative log-score gap of an estimated MAP assignment (inf for impossible states)."""
    if hits_zero_potential(g, x_hat):
        return math.inf
    est = log_score(g, x_hat)
    gap = abs(true_score - est)
    if true_score == 0:
        return 0.0 if gap == 0 else math.inf
    return gap / abs(true_score)


def compute_metrics(graphs: Sequence[FactorGraph], labels: Sequence[ExactResult],
                    marginals: Sequence[Sequence[np.ndarray]] | None = None,
                    map_estimates: Sequence[Sequence[int]] | None = None) -> Metrics:
    """KL(truth || estimate) averaged over variables and instances, RMSE over all
    marginal entries, and the mean UAI ratio of the MAP estimates."""
    n = len(graphs)
    if len(labels) != n or (marginals is not None and len(marginals) != n) or (
            map_estimates is not None and len(map_estimates) != n):
        raise ValueError("graphs, labels and estimates must be aligned")
    per = [{"index": k} for k in range(n)]
    kl = rmse = uai = None
    if marginals is not None:
        kls, sq, count = [], 0.0, 0
        for k, (lab, est) in enumerate(zip(labels, marginals)):
            if len(est) != len(lab.marginals):
                raise ValueError(f"instance {k}: wrong number of marginal vectors")
            inst_kl = [kl_divergence(p, q) for p, q in zip(lab.marginals, est)]
            inst_sq = sum(float(np.sum((np.asarray(p) - np.asarray(q)) ** 2)) for p, q in zip(lab.marginals, est))
            inst_n = sum(len(p) for p in lab.marginals)
            per[k]["kl"] = float(np.mean(inst_kl)) if inst_kl else 0.0
            per[k]["rmse"] = math.sqrt(inst_sq / inst_n) if inst_n else 0.0
            kls.extend(inst_kl)
            sq += inst_sq
            count += inst_n
        kl = float(np.mean(kls)) if kls else 0.0
        rmse = math.sqrt(sq / count) if count else 0.0
    if map_estimates is not None:
        ratios = []
        for k, (g, lab, x) in enumerate(zip(graphs, labels, map_estimates)):
            r = uai_ratio(g, lab.map_log_score, x)
            per[k]["uai_score"] = r
            ratios.append(r)
        uai = float(np.mean(ratios)) if ratios else 0.0
    return Metrics(kl, rmse, uai, per)
