"""Tunable constants. Defaults are the values the algorithms are specified with."""
from dataclasses import dataclass, field, replace


@dataclass(frozen=True)
class Config:
    # sketches
    c_jl: float = 24.0            # JL rows: ceil(c_jl * delta^-2 * log n)
    c_cauchy: float = 8.0         # Cauchy rows: ceil(c_cauchy * log n)
    c_partitions: float = 3.0     # random bipartitions: max(min_partitions, ceil(c_partitions * log n)), rounded up to a power of two
    min_partitions: int = 16
    sketch_accuracy: float = 1e-9

    # sparsification
    c_size_floor: float = 4.0     # floor = c * n * log^3 n / eps^2

    # approximate Schur complement / steady edges
    c_outer: float = 10.0         # C in the size guard and delta = eps / (C log^2 m)
    c_local: float = 1.0
    steady_alpha_scale: float = 1000.0   # alpha = delta / (scale * c_local * log^2 m)
    p_clamp: tuple = (1 / 8, 7 / 8)
    split_delta: float = 0.01     # leverage accuracy fed to split

    # elimination
    dd_alpha: float = 4.0
    c_walks: float = 8.0          # walks per edge: ceil(c_walks * eps^-2 * log n)
    c_gamma: float = 1.0          # gamma = 1000 * c * alpha * eps^-2 * log^6 n
    dd_retry_cap: int = 50

    # chain / solve
    chain_c: float = 4.0          # chain accuracy condition eps <= 1/(chain_c log n)
    base_size: int = 32
    max_depth: int = 30
    chain_eps: float = 0.5        # accuracy of the elimination/SC stages inside the preconditioner
    chain_d: int = 0              # 0 means use parameters_default
    chain_k: int = 0
    oracle_cutoff: int = 400

    # flow
    c_eta: float = 0.0
    ipm_alpha: float = 0.5

    # ultrasparsifier sampling: p_e = min(1, c_stretch * log n * stretch_e / k)
    c_stretch: float = 1.0

    extra: dict = field(default_factory=dict)

    def with_(self, **kw):
        return replace(self, **kw)


DEFAULT = Config()
