"""Conditional tails for the 'almost implication' {q <= eps} => {m <= C eps^beta}.

Per path, with f_s = v^T F(s) (F(s) = J^Y_{0<-s}[V_1..V_d](Y_s)):

    q1 = sup_r |int_0^r f dJ^X_{s<-0}| = sup_r |v^T H(r)|,
    q2 = sup_r |int_0^t f dD_r X_s|     = sup_r |v^T K_r(t)|,
    m  = sup_s |f_s|.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class ConditionalTail:
    quantity_id: str
    epsilons: np.ndarray
    n_condition: np.ndarray
    n_exceed: np.ndarray
    probabilities: np.ndarray  # P(m > eps^beta | q <= eps), nan when the condition is empty
    beta: float
    degenerate: bool = False
    note: str = ""

    def rows(self):
        for i, e in enumerate(self.epsilons):
            yield {
                "eps": float(e),
                "n_condition": int(self.n_condition[i]),
                "n_exceed": int(self.n_exceed[i]),
                "p_conditional": float(self.probabilities[i]),
            }


def probe_quantities(DY, v, t_index=None):
    """(q1, q2, m) for each path from a factored Malliavin field of Y."""
    v = np.asarray(v, dtype=float)
    n = DY.n
    t = n if t_index is None else t_index
    F, H = DY.meta["F"], DY.meta["H"]
    f = np.einsum("a,...sai->...si", v, F)
    m = np.abs(f).max(axis=(-2, -1))
    q1 = np.abs(np.einsum("a,...raj->...rj", v, H[..., : t + 1, :, :])).max(axis=(-2, -1))
    rs = np.arange(t + 1)
    K = DY.reduced(np.full_like(rs, t), rs)
    q2 = np.abs(np.einsum("a,...raj->...rj", v, K)).max(axis=(-2, -1))
    return q1, q2, m


def conditional_tail(q, m, eps_grid, beta=0.25, quantity_id="q", degenerate=False):
    q = np.asarray(q, dtype=float).ravel()
    m = np.asarray(m, dtype=float).ravel()
    eps = np.sort(np.asarray(eps_grid, dtype=float))[::-1]
    nc = np.array([(q <= e).sum() for e in eps])
    ne = np.array([((q <= e) & (m > e**beta)).sum() for e in eps])
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(nc > 0, ne / np.maximum(nc, 1), np.nan)
    note = "constant coefficient: the flow carries no martingale part" if degenerate else ""
    return ConditionalTail(quantity_id, eps, nc, ne, p, beta, degenerate, note)


def jacobian_nondegeneracy_probe(q1, q2, m, eps_grid, beta=0.25, degenerate=False):
    """Pair of conditional tails, for q1 and q2."""
    return (
        conditional_tail(q1, m, eps_grid, beta, "q1_flow_integral", degenerate),
        conditional_tail(q2, m, eps_grid, beta, "q2_malliavin_integral", degenerate),
    )
