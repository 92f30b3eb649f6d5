"""Flat index layout of one or more factor graphs for vectorised message passing.

Every scalar taking part in message passing gets a slot in a flat array:

* variable-state entries ``(i, x)``
* message entries ``(edge, x)`` shared by both message directions
* factor entries (one per cell of each potential table)
* pair entries ``(factor cell, scope position)`` linking a factor cell to
  the message entry of the variable state it selects.

Reductions over these index sets go through :class:`Segments`, which sorts
once and uses ``reduceat`` so results do not depend on call order.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import FactorGraph


class Segments:
    """Reduction of a flat array into ``n`` groups given a group id per element."""

    def __init__(self, ids: np.ndarray, n: int):
        ids = np.asarray(ids, dtype=np.int64)
        self.ids = ids
        self.n = int(n)
        self.order = np.argsort(ids, kind="stable")
        counts = np.bincount(ids, minlength=self.n)
        self.counts = counts
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        self.nonempty = np.flatnonzero(counts > 0)
        self.starts = starts[self.nonempty]
        self.all_nonempty = self.nonempty.size == self.n

    def _scatter(self, vals, x, fill):
        if self.all_nonempty:
            return vals
        out = np.full((self.n,) + x.shape[1:], fill, dtype=np.float64)
        out[self.nonempty] = vals
        return out

    def sum(self, x: np.ndarray) -> np.ndarray:
        if x.shape[0] == 0:
            return np.zeros((self.n,) + x.shape[1:])
        vals = np.add.reduceat(x[self.order], self.starts, axis=0)
        return self._scatter(vals, x, 0.0)

    def max(self, x: np.ndarray) -> np.ndarray:
        if x.shape[0] == 0:
            return np.full((self.n,) + x.shape[1:], -np.inf)
        vals = np.maximum.reduceat(x[self.order], self.starts, axis=0)
        return self._scatter(vals, x, -np.inf)

    def argmax(self, x: np.ndarray) -> np.ndarray:
        """Element index of the first (lowest original index) maximum per group.

        Only defined for 1-d ``x`` and groups that are all non-empty.
        """
        m = self.max(x)
        hit = x == m[self.ids]
        idx = np.where(hit, np.arange(x.shape[0]), x.shape[0])
        first = np.full(self.n, x.shape[0], dtype=np.int64)
        np.minimum.at(first, self.ids, idx)
        return first

    def logsumexp(self, x: np.ndarray) -> np.ndarray:
        m = self.max(x)
        m = np.where(np.isfinite(m), m, 0.0)
        s = self.sum(np.exp(x - m[self.ids]))
        with np.errstate(divide="ignore"):
            return m + np.log(s)


class Layout:
    """Flat indexing for a batch of factor graphs (disjoint union)."""

    def __init__(self, graphs: Sequence[FactorGraph]):
        graphs = list(graphs)
        if not graphs:
            raise ValueError("layout needs at least one graph")
        self.graphs = graphs
        self.n_graphs = len(graphs)

        var_card, var_graph = [], []
        factor_graph, factor_size = [], []
        edge_factor, edge_var, edge_pos = [], [], []
        psi = []
        pe_fe, pe_edge, pe_state = [], [], []
        var_base = factor_base = edge_base = fe_base = 0
        for gi, g in enumerate(graphs):
            var_card.extend(g.cardinalities)
            var_graph.extend([gi] * g.num_vars)
            for a, (scope, pot) in enumerate(zip(g.scopes, g.log_potentials)):
                factor_graph.append(gi)
                factor_size.append(pot.size)
                edges_here = []
                for k, i in enumerate(scope):
                    edges_here.append(edge_base)
                    edge_factor.append(factor_base + a)
                    edge_var.append(var_base + i)
                    edge_pos.append(k)
                    edge_base += 1
                psi.append(pot.ravel())
                states = np.indices(pot.shape).reshape(len(scope), -1)
                n_cells = pot.size
                cells = fe_base + np.arange(n_cells)
                for k in range(len(scope)):
                    pe_fe.append(cells)
                    pe_edge.append(np.full(n_cells, edges_here[k]))
                    pe_state.append(states[k])
                fe_base += n_cells
            var_base += g.num_vars
            factor_base += g.num_factors

        self.var_card = np.asarray(var_card, dtype=np.int64)
        self.var_graph = np.asarray(var_graph, dtype=np.int64)
        self.n_vars = self.var_card.size
        self.var_offset = np.concatenate([[0], np.cumsum(self.var_card)[:-1]]).astype(np.int64)
        self.n_vs = int(self.var_card.sum())
        self.vs_var = np.repeat(np.arange(self.n_vars), self.var_card)
        self.vs_state = np.arange(self.n_vs) - self.var_offset[self.vs_var]
        self.vs_graph = self.var_graph[self.vs_var]

        self.factor_graph = np.asarray(factor_graph, dtype=np.int64)
        self.n_factors = self.factor_graph.size

        self.edge_factor = np.asarray(edge_factor, dtype=np.int64)
        self.edge_var = np.asarray(edge_var, dtype=np.int64)
        self.edge_pos = np.asarray(edge_pos, dtype=np.int64)
        self.n_edges = self.edge_factor.size
        edge_card = self.var_card[self.edge_var]
        self.edge_offset = np.concatenate([[0], np.cumsum(edge_card)[:-1]]).astype(np.int64)
        self.n_me = int(edge_card.sum())
        self.me_edge = np.repeat(np.arange(self.n_edges), edge_card)
        self.me_state = np.arange(self.n_me) - self.edge_offset[self.me_edge]
        self.me_vs = self.var_offset[self.edge_var[self.me_edge]] + self.me_state
        self.me_graph = self.var_graph[self.edge_var[self.me_edge]]

        self.psi = np.concatenate(psi)
        self.n_fe = self.psi.size
        self.fe_factor = np.repeat(np.arange(self.n_factors), factor_size)
        pe_edge = np.concatenate(pe_edge)
        self.pe_fe = np.concatenate(pe_fe).astype(np.int64)
        self.pe_me = self.edge_offset[pe_edge] + np.concatenate(pe_state)

        self.by_vs = Segments(self.me_vs, self.n_vs)  # message entries -> variable states
        self.by_edge = Segments(self.me_edge, self.n_edges)  # message entries -> edges
        self.by_var = Segments(self.vs_var, self.n_vars)  # variable states -> variables
        self.by_factor = Segments(self.fe_factor, self.n_factors)  # factor cells -> factors
        self.by_cell = Segments(self.pe_fe, self.n_fe)  # pair entries -> factor cells
        self.by_me = Segments(self.pe_me, self.n_me)  # pair entries -> message entries
        self.edges_by_var = Segments(self.edge_var, self.n_vars)
        self.vars_by_graph = Segments(self.var_graph, self.n_graphs)
        self.vs_by_graph = Segments(self.vs_graph, self.n_graphs)
        self.me_by_graph = Segments(self.me_graph, self.n_graphs)
        self.fe_graph = self.factor_graph[self.fe_factor]
        self.fe_by_graph = Segments(self.fe_graph, self.n_graphs)
        self.pe_vs = self.me_vs[self.pe_me]
        self.by_pair_vs = Segments(self.pe_vs, self.n_vs)  # pair entries -> variable states

        g_nv = np.array([g.num_vars for g in graphs])
        g_nf = np.array([g.num_factors for g in graphs])
        self.graph_var_base = np.concatenate([[0], np.cumsum(g_nv)[:-1]])
        self.graph_factor_base = np.concatenate([[0], np.cumsum(g_nf)[:-1]])

    def uniform_cardinality(self) -> int | None:
        c = np.unique(self.var_card)
        return int(c[0]) if c.size == 1 else None

    def split_vs(self, x: np.ndarray) -> list[list[np.ndarray]]:
        """Per graph, per variable vectors from a flat variable-state array."""
        out = []
        for gi, g in enumerate(self.graphs):
            base = self.graph_var_base[gi]
            vecs = []
            for i in range(g.num_vars):
                off = self.var_offset[base + i]
                vecs.append(np.array(x[off:off + g.cardinalities[i]]))
            out.append(vecs)
        return out

    def split_fe(self, x: np.ndarray) -> list[list[np.ndarray]]:
        """Per graph, per factor tensors from a flat factor-cell array."""
        out = []
        pos = 0
        for g in self.graphs:
            tensors = []
            for pot in g.log_potentials:
                tensors.append(np.array(x[pos:pos + pot.size]).reshape(pot.shape))
                pos += pot.size
            out.append(tensors)
        return out
