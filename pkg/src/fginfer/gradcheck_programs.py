"""Seeded finite-difference checks of the full training losses."""
from __future__ import annotations

import numpy as np

from .exact import enumerate_exact
from .generators import DatasetSpec, generate, random_graph
from .layout import Layout
from .nn.gradcheck import gradcheck


def _graphs(seed: int, n: int = 2, max_card: int = 3):
    rng = np.random.default_rng(seed)
    return [random_graph(rng, n_vars=5, n_factors=5, max_card=max_card) for _ in range(n)]


def fenbp_marginal(seed: int, iterations: int = 5):
    from .fenbp import FeNbpConfig, FeNbpModel, _flat_targets, marginal_loss

    graphs = _graphs(seed)
    lay = Layout(graphs)
    targets = _flat_targets(lay, [enumerate_exact(g).marginals for g in graphs])
    model = FeNbpModel(FeNbpConfig(iterations=iterations, hidden=8), init="random", seed=seed)
    return gradcheck(lambda p: marginal_loss(model, lay, targets), model.params, seed=seed, return_details=True)


def fenbp_uai(seed: int, iterations: int = 5):
    from .fenbp import FeNbpConfig, FeNbpModel, uai_loss

    graphs = _graphs(seed)
    lay = Layout(graphs)
    scores = np.array([enumerate_exact(g).map_log_score for g in graphs])
    model = FeNbpModel(FeNbpConfig(iterations=iterations, mode="max", hidden=8), init="random", seed=seed)
    return gradcheck(lambda p: uai_loss(model, lay, scores), model.params, seed=seed, return_details=True)


def fegnn_marginal(seed: int, layers: int = 3):
    from .fegnn import FeGnnConfig, FeGnnModel, marginal_loss

    items = generate(DatasetSpec("asym", 2, 2, seed))
    graphs = [g for g, _ in items]
    lay = Layout(graphs)
    targets = np.concatenate([np.stack(lab.marginals) for _, lab in items])
    model = FeGnnModel(FeGnnConfig(layers=layers, mlp_hidden=8), init="random", seed=seed)
    return gradcheck(lambda p: marginal_loss(model, lay, targets), model.params, seed=seed, return_details=True)


PROGRAMS = {"fenbp": fenbp_marginal, "fenbp-map": fenbp_uai, "fegnn": fegnn_marginal}
