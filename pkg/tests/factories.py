"""Random exact instances built directly from the defining conditions."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from tnconv import exact_core as ec
from tnconv.tn_algebra import TNConfig, TPrimeNConfig


def rat(rng: np.random.Generator, span: int = 6, den: int = 5) -> Fraction:
    return Fraction(int(rng.integers(-span, span + 1)), int(rng.integers(1, den + 1)))


def rat_vec(rng: np.random.Generator, n: int, nonzero: bool = True) -> list[Fraction]:
    while True:
        v = [rat(rng) for _ in range(n)]
        if not nonzero or any(x != 0 for x in v):
            return v


def rat_k(rng: np.random.Generator, N: int) -> list[Fraction]:
    return [1 + Fraction(int(rng.integers(1, 12)), int(rng.integers(1, 6))) for _ in range(N)]


def perp(n: list[Fraction]) -> list[Fraction]:
    return [-n[1], n[0]]


def _balanced_rank_one(rng: np.random.Generator, dirs: list[list[Fraction]], rows: int) -> list[list[list[Fraction]]]:
    """Rank-one v_i⊗d_i summing to zero; the last two are solved for (d_{N−1}, d_N independent)."""
    N = len(dirs)
    vs = [rat_vec(rng, rows) for _ in range(N - 2)]
    S = ec.mat_sum([ec.outer(v, d) for v, d in zip(vs, dirs)], like=ec.zeros(rows, 2))
    B = [[dirs[-2][0], dirs[-1][0]], [dirs[-2][1], dirs[-1][1]]]  # columns d_{N−1}, d_N
    # −S = [v_{N−1} v_N] Bᵀ  ⇒  [v_{N−1} v_N] = −S B⁻ᵀ
    V = ec.scale(-1, ec.matmul(S, ec.inverse(ec.transpose(B))))
    vs += [[r[0] for r in V], [r[1] for r in V]]
    return [ec.outer(v, d) for v, d in zip(vs, dirs)]


def random_directions(rng: np.random.Generator, N: int) -> list[list[Fraction]]:
    while True:
        dirs = [rat_vec(rng, 2) for _ in range(N)]
        ok_last = dirs[-2][0] * dirs[-1][1] - dirs[-2][1] * dirs[-1][0] != 0
        ok_consecutive = all(
            dirs[i][0] * dirs[(i + 1) % N][1] - dirs[i][1] * dirs[(i + 1) % N][0] != 0 for i in range(N)
        )
        if ok_last and ok_consecutive:
            return dirs


def random_tn(rng: np.random.Generator, N: int = 5) -> TNConfig:
    """Exact 2×2 T_N witness with nonzero rank-one C_i summing to zero."""
    while True:
        dirs = random_directions(rng, N)
        C = _balanced_rank_one(rng, dirs, 2)
        if all(any(v != 0 for r in c for v in r) for c in C):
            cfg = TNConfig(P=[rat_vec(rng, 2, False), rat_vec(rng, 2, False)], C=C, k=rat_k(rng, N))
            from tnconv.tn_algebra import assemble

            Xs = assemble(cfg)
            if all(Xs[i] != Xs[j] for i in range(N) for j in range(i + 1, N)):
                return cfg


def random_tprime(rng: np.random.Generator, N: int = 5) -> TPrimeNConfig:
    """Exact T'_N: C_i = u_i⊗n_i, D_i = v_i⊗n_i^⊥, E_i = w_i⊗n_i^⊥, all block sums zero."""
    while True:
        dirs = random_directions(rng, N)
        perps = [perp(d) for d in dirs]
        C = _balanced_rank_one(rng, dirs, 2)
        D = _balanced_rank_one(rng, perps, 2)
        E = _balanced_rank_one(rng, perps, 2)
        if all(any(v != 0 for r in c for v in r) for c in C):
            base = TNConfig(P=[rat_vec(rng, 2, False), rat_vec(rng, 2, False)], C=C, k=rat_k(rng, N))
            return TPrimeNConfig(
                base=base,
                Q=[rat_vec(rng, 2, False), rat_vec(rng, 2, False)],
                R=[rat_vec(rng, 2, False), rat_vec(rng, 2, False)],
                D=D,
                E=E,
                n_dir=dirs,
            )
