"""scikit-learn style front ends: fit on a graph, then solve / transform / read results."""
import numpy as np
from sklearn.base import BaseEstimator

from .chain import ChainPreconditioner, solve_with
from .config import DEFAULT
from .congest import Network, Simulator
from .flow import FlowNetwork, max_flow, max_flow_tracked
from .minor import MinorDistribution
from .schur import approx_sc, schur_on_terminals
from .sketch import oracle_solver
from .validation import check_fitted, check_graph, check_rhs, check_terminals, resolve_seed
from .errors import InvalidParams


def _simulator(g, md, track, word_budget):
    if not track:
        return None, md
    net = Network.from_graph(g, word_budget)
    return Simulator(net), md if md is not None else MinorDistribution.identity(net)


class LaplacianSolver(BaseEstimator):
    """Builds the preconditioner once in fit; solve/predict answers L x = b."""

    def __init__(self, eps=1e-8, seed=None, k=None, d=None, track_rounds=False, word_budget=1):
        self.eps = eps
        self.seed = seed
        self.k = k
        self.d = d
        self.track_rounds = track_rounds
        self.word_budget = word_budget

    def fit(self, graph, md=None):
        if not 0 < self.eps < 1:
            raise InvalidParams("eps must lie in (0, 1)")
        g = check_graph(graph)
        self.graph_ = g
        self.sim_, md = _simulator(g, md, self.track_rounds, self.word_budget)
        self.preconditioner_ = ChainPreconditioner(g, md, seed=resolve_seed(self.seed),
                                                   sim=self.sim_, k=self.k, d=self.d)
        self.n_features_in_ = g.n
        return self

    def solve(self, b):
        check_fitted(self, "preconditioner_")
        b = check_rhs(b, self.graph_.n)
        x, self.solve_info_ = solve_with(self.preconditioner_, b, self.eps)
        return x

    def predict(self, b):
        return self.solve(b)

    @property
    def rounds_(self):
        check_fitted(self, "preconditioner_")
        return None if self.sim_ is None else self.sim_.stats.rounds


class MinorSchurSparsifier(BaseEstimator):
    """Sparse minor H whose Schur complement onto the terminals approximates the input's."""

    def __init__(self, eps=0.5, terminals=None, seed=None, solver=None, track_rounds=False,
                 word_budget=1):
        self.eps = eps
        self.terminals = terminals
        self.seed = seed
        self.solver = solver
        self.track_rounds = track_rounds
        self.word_budget = word_budget

    def fit(self, graph, md=None):
        if not 0 < self.eps < 1:
            raise InvalidParams("eps must lie in (0, 1)")
        g = check_graph(graph)
        if self.terminals is None:
            raise InvalidParams("terminals must be given")
        T = check_terminals(self.terminals, g.n)
        self.sim_, md = _simulator(g, md, self.track_rounds, self.word_budget)
        solver = self.solver if self.solver is not None else oracle_solver()
        H, md_H, T_H, info = approx_sc(g, md, T, self.eps, solver, seed=resolve_seed(self.seed),
                                       sim=self.sim_, cfg=DEFAULT)
        self.terminals_ = T
        self.H_, self.md_, self.T_H_, self.info_ = H, md_H, np.asarray(T_H), info
        return self

    def transform(self, graph=None):
        """(H, T_H): the sparse minor and where each sorted terminal landed in it."""
        check_fitted(self, "H_")
        return self.H_, self.T_H_

    def fit_transform(self, graph, y=None, md=None):
        return self.fit(graph, md).transform()

    def schur_complement(self):
        check_fitted(self, "H_")
        return schur_on_terminals(self.H_, self.T_H_)


class MaxFlow(BaseEstimator):
    """Exact integral maximum s-t flow; value_, flow_ and rounds_ after fit."""

    def __init__(self, solver=None, seed=None, track_rounds=False, F=None):
        self.solver = solver
        self.seed = seed
        self.track_rounds = track_rounds
        self.F = F

    def fit(self, network, s, t):
        if not isinstance(network, FlowNetwork):
            raise InvalidParams("network must be a FlowNetwork")
        if self.track_rounds:
            res = max_flow_tracked(network, int(s), int(t), F=self.F, solver=self.solver)
        else:
            res = max_flow(network, int(s), int(t), F=self.F, solver=self.solver)
        self.result_ = res
        self.value_, self.flow_, self.rounds_ = res.value, res.flow, res.rounds
        self.info_ = res.info
        return self
