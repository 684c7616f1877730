"""Input checks shared by the estimators and the command line."""
import os

import numpy as np
import scipy.sparse as sp
from sklearn.utils.validation import check_is_fitted

from .errors import InvalidParams, NotMeanZero
from .graph import WeightedGraph, from_laplacian

SEED_ENV = "LAPCON_SEED"


def resolve_seed(seed=None):
    """Explicit seed, else LAPCON_SEED, else 0."""
    if seed is not None:
        return int(seed)
    env = os.environ.get(SEED_ENV)
    if env is None or env.strip() == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise InvalidParams(f"{SEED_ENV}={env!r} is not an integer")


def check_graph(graph):
    """Accept a WeightedGraph, a square Laplacian matrix, or (n, edge rows)."""
    if isinstance(graph, WeightedGraph):
        return graph
    if sp.issparse(graph) or isinstance(graph, np.ndarray):
        A = sp.csr_matrix(graph)
        if A.shape[0] != A.shape[1]:
            raise InvalidParams("Laplacian must be square")
        return from_laplacian(A)
    if isinstance(graph, tuple) and len(graph) == 2:
        return WeightedGraph.from_edges(int(graph[0]), graph[1])
    raise InvalidParams(f"cannot interpret {type(graph).__name__} as a graph")


def check_rhs(b, n, tol=1e-8):
    """Float copy of b (vector or n x k block) with mean-zero columns."""
    b = np.array(b, dtype=float)
    if b.ndim not in (1, 2) or b.shape[0] != n:
        raise InvalidParams(f"right-hand side must have {n} rows, got shape {b.shape}")
    if not np.all(np.isfinite(b)):
        raise InvalidParams("right-hand side has non-finite entries")
    if np.any(np.abs(b.sum(axis=0)) > tol * np.maximum(np.abs(b).sum(axis=0), 1.0)):
        raise NotMeanZero("right-hand side is not orthogonal to the all-ones vector")
    return b


def check_terminals(T, n):
    T = np.unique(np.asarray(list(T), dtype=np.int64))
    if len(T) and (T.min() < 0 or T.max() >= n):
        raise InvalidParams("terminal out of range")
    return T


def check_fitted(est, attrs):
    check_is_fitted(est, attrs)
