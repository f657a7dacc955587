"""Exact optimal transport between discrete Levy measures with a reservoir at 0.

The problem: move the mass of ``mu`` onto ``nu`` at cost |x - y|^p per unit,
where the origin acts as an infinite reservoir that can absorb or emit any
amount of mass (paying only the movement cost |x|^p to reach it).  Marginals
are only prescribed away from the origin, so the two measures may have
different total masses.

The solver reduces this to a balanced transportation problem by appending a
virtual reservoir atom of mass |nu| to the mu side and one of mass |mu| to
the nu side, with costs c(x, 0) = |x|^p, c(0, y) = |y|^p and c(0, 0) = 0, and
runs a primal transportation simplex on the complete bipartite graph.  Tree
potentials give exact dual potentials normalised to vanish at the reservoir.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from .measures import DiscreteMeasure, _check_p, _pow

__all__ = [
    "CostSpec",
    "TransportPlan",
    "DualPotentials",
    "SolveReport",
    "PlanViolation",
    "solve",
    "distance",
    "verify_plan",
    "k_support_check",
    "dual_value",
    "brute_force_unit",
]

# Reduced costs below -PIVOT_TOL * cost_scale trigger a pivot; anything above
# is treated as optimal.  Keeps the duality gap at rounding level.
PIVOT_TOL = 1e-12


@dataclass(frozen=True)
class CostSpec:
    """Movement cost |x - y|^p together with the implied reservoir costs."""

    p: float = 2.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "p", _check_p(self.p))

    def pair_matrix(self, mu: DiscreteMeasure, nu: DiscreteMeasure) -> np.ndarray:
        """Dense |x_i - y_j|^p over the atom grids."""
        if mu.n_atoms == 0 or nu.n_atoms == 0:
            return np.zeros((mu.n_atoms, nu.n_atoms))
        if self.p == 2.0:
            return cdist(mu.positions, nu.positions, "sqeuclidean")
        d = cdist(mu.positions, nu.positions, "euclidean")
        return _pow(d, self.p)

    def reservoir_cost(self, mu: DiscreteMeasure) -> np.ndarray:
        """Per-atom cost |z|^p of moving to (or from) the reservoir."""
        return _pow(mu.radii, self.p)

    def tilde(self, x: np.ndarray, y: np.ndarray) -> float:
        """min(|x-y|^p, |x|^p + |y|^p): the effective cost once the reservoir helps."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        direct = float(_pow(np.linalg.norm(x - y), self.p))
        through = float(_pow(np.linalg.norm(x), self.p) + _pow(np.linalg.norm(y), self.p))
        return min(direct, through)


@dataclass(frozen=True)
class TransportPlan:
    """An admissible coupling: direct atom-to-atom arcs plus reservoir flows.

    ``direct_rows/direct_cols/direct_vals`` store the sparse nonnegative
    coupling gamma_{ij}; ``to_reservoir[i]`` is the mass of mu-atom i absorbed
    at the origin and ``from_reservoir[j]`` the mass emitted to nu-atom j.
    Reservoir-to-reservoir mass is not tracked.
    """

    n_mu: int
    n_nu: int
    direct_rows: np.ndarray
    direct_cols: np.ndarray
    direct_vals: np.ndarray
    to_reservoir: np.ndarray
    from_reservoir: np.ndarray

    @classmethod
    def empty(cls) -> "TransportPlan":
        z = np.zeros(0)
        zi = np.zeros(0, dtype=int)
        return cls(0, 0, zi, zi, z, z, z)

    def mu_marginal(self) -> np.ndarray:
        out = np.array(self.to_reservoir, dtype=float, copy=True)
        np.add.at(out, self.direct_rows, self.direct_vals)
        return out

    def nu_marginal(self) -> np.ndarray:
        out = np.array(self.from_reservoir, dtype=float, copy=True)
        np.add.at(out, self.direct_cols, self.direct_vals)
        return out

    def direct_dense(self) -> np.ndarray:
        out = np.zeros((self.n_mu, self.n_nu))
        out[self.direct_rows, self.direct_cols] = self.direct_vals
        return out

    def to_dict(self) -> dict:
        return {
            "direct": [
                [int(i), int(j), float(v)]
                for i, j, v in zip(self.direct_rows, self.direct_cols, self.direct_vals)
            ],
            "to_reservoir": [float(v) for v in self.to_reservoir],
            "from_reservoir": [float(v) for v in self.from_reservoir],
        }


@dataclass(frozen=True)
class DualPotentials:
    """Per-atom potentials (phi, psi) vanishing at the reservoir.

    Feasibility means phi_i + psi_j <= |x_i - y_j|^p for every atom pair and,
    against the reservoir, phi_i <= |x_i|^p and psi_j <= |y_j|^p (these are the
    pair constraints with the partner at the origin, where both potentials are
    pinned to zero).
    """

    phi: np.ndarray
    psi: np.ndarray
    p: float

    def violations(self, mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = 1e-9) -> list[str]:
        cost = CostSpec(self.p)
        out: list[str] = []
        res_mu = cost.reservoir_cost(mu)
        res_nu = cost.reservoir_cost(nu)
        for i in np.nonzero(self.phi > res_mu + tol)[0]:
            out.append(f"phi[{i}] = {self.phi[i]!r} exceeds |x|^p = {res_mu[i]!r}")
        for j in np.nonzero(self.psi > res_nu + tol)[0]:
            out.append(f"psi[{j}] = {self.psi[j]!r} exceeds |y|^p = {res_nu[j]!r}")
        if mu.n_atoms and nu.n_atoms:
            slack = cost.pair_matrix(mu, nu) - self.phi[:, None] - self.psi[None, :]
            bad = np.argwhere(slack < -tol)
            for i, j in bad:
                out.append(
                    f"phi[{i}] + psi[{j}] exceeds |x-y|^p by {float(-slack[i, j])!r}"
                )
        return out

    def to_dict(self) -> dict:
        return {
            "phi": [float(v) for v in self.phi],
            "psi": [float(v) for v in self.psi],
            "p": self.p,
        }


@dataclass(frozen=True)
class SolveReport:
    """Outcome of one exact solve: optimal cost, plan, duals and the gap."""

    value: float
    plan: TransportPlan
    duals: DualPotentials
    iterations: int
    gap: float

    @property
    def distance(self) -> float:
        return self.value ** (1.0 / self.duals.p)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "distance": self.distance,
            "gap": self.gap,
            "iterations": self.iterations,
            "plan": self.plan.to_dict(),
            "duals": self.duals.to_dict(),
        }


@dataclass(frozen=True)
class PlanViolation:
    """One broken marginal or positivity constraint, by atom index."""

    side: str  # "mu" | "nu" | "negativity"
    index: int
    error: float

    def __str__(self) -> str:
        return f"{self.side}[{self.index}]: off by {self.error!r}"


# ---------------------------------------------------------------------------
# Transportation simplex on the balanced reservoir reduction
# ---------------------------------------------------------------------------

class _Simplex:
    """Primal transportation simplex specialised to the reservoir reduction.

    Sources are rows of ``cost`` (the last row is the virtual reservoir
    source), sinks are columns (last column virtual).  The initial spanning
    tree routes everything through the reservoir, mirroring the always
    feasible plan that projects both measures onto the origin.

    The spanning tree is kept as a preorder sequence (``order``/``pos``) with
    subtree sizes, so each pivot moves contiguous array segments and applies
    dual updates as vectorised slice operations.  Entering arcs come first
    from a sparse nearest-neighbour warm-start pool, then from full-matrix
    candidate pools that are re-priced wholesale between pivots; termination
    is certified by a full scan against freshly recomputed tree potentials.
    """

    def __init__(
        self,
        cost: np.ndarray,
        supply: np.ndarray,
        demand: np.ndarray,
        points_mu: Optional[np.ndarray] = None,
        points_nu: Optional[np.ndarray] = None,
    ):
        self.cost = cost
        self.supply = supply
        self.demand = demand
        self.points_mu = points_mu
        self.points_nu = points_nu
        self.m, self.n = cost.shape
        self.N = self.m + self.n  # node ids: sources 0..m-1, sinks m..m+n-1
        self.root = self.m - 1  # virtual source
        self.vsink = self.N - 1  # virtual sink
        scale = float(cost.max()) if cost.size else 1.0
        self.tol = PIVOT_TOL * max(1.0, scale)
        self.iterations = 0

        self.u = np.zeros(self.m)
        self.v = np.zeros(self.n)

        # Initial tree: root (virtual source) feeds every sink directly; real
        # sources hang off the virtual sink.  Flows satisfy the marginals.
        # parent/flow/size are plain lists: the pivot loops touch them one
        # scalar at a time.
        m, n = self.m, self.n
        parent = np.full(self.N, -1, dtype=np.int64)
        flow = np.zeros(self.N)  # flow on the arc node -> parent
        sinks = np.arange(m, self.N)
        parent[sinks] = self.root
        flow[m : self.N - 1] = demand[: n - 1]
        flow[self.vsink] = 0.0
        parent[: m - 1] = self.vsink
        flow[: m - 1] = supply[: m - 1]
        self.parent = parent.tolist()
        self.flow = flow.tolist()
        self.v[:] = cost[m - 1, :]
        self.u[: m - 1] = cost[: m - 1, n - 1] - self.v[n - 1]
        self.u[self.root] = 0.0

        # Preorder: root, real sinks, then the virtual sink with all real
        # sources below it.
        self.order = np.concatenate(
            [[self.root], sinks[:-1], [self.vsink], np.arange(m - 1)]
        ).astype(np.int64)
        self.pos = np.empty(self.N, dtype=np.int64)
        self.pos[self.order] = np.arange(self.N)
        size = np.ones(self.N, dtype=np.int64)
        size[self.root] = self.N
        size[self.vsink] = m
        self.size = size.tolist()

        # Candidate pool capacity for major/minor pricing.
        self.refill_size = int(min(self.cost.size, max(4096, 16 * self.N)))
        self._scan_buf = np.empty_like(self.cost)
        self._arange = np.arange(self.N, dtype=np.int64)

    # -- tree mechanics ----------------------------------------------------

    def _is_ancestor(self, a: int, b: int) -> bool:
        pa = self.pos[a]
        return pa <= self.pos[b] < pa + self.size[a]

    def _arc_of(self, node: int) -> tuple[int, int]:
        par = int(self.parent[node])
        if node < self.m:  # source node, parent is a sink
            return node, par - self.m
        return par, node - self.m

    def _pivot(self, i: int, j: int) -> None:
        s_node, t_node = i, self.m + j
        delta = float(self.cost[i, j] - self.u[i] - self.v[j])

        # Climb from each endpoint to the lowest common ancestor.
        up_s: list[int] = []
        node = s_node
        while not self._is_ancestor(node, t_node):
            up_s.append(node)
            node = int(self.parent[node])
        lca = node
        up_t: list[int] = []
        node = t_node
        while node != lca:
            up_t.append(node)
            node = int(self.parent[node])

        # Pushing mass along the entering arc drains alternating tree arcs,
        # starting with the arc immediately above each endpoint.
        theta = math.inf
        for chain in (up_s, up_t):
            for k in range(0, len(chain), 2):
                f = float(self.flow[chain[k]])
                if f < theta:
                    theta = f
        leave_node = -1
        best_arc: Optional[tuple[int, int]] = None
        for chain in (up_s, up_t):
            for k in range(0, len(chain), 2):
                node = chain[k]
                if float(self.flow[node]) == theta:
                    arc = self._arc_of(node)
                    if best_arc is None or arc < best_arc:
                        best_arc = arc
                        leave_node = node
        assert leave_node >= 0

        # Apply the flow change around the cycle.
        for chain in (up_s, up_t):
            sign = -1.0
            for node in chain:
                self.flow[node] += sign * theta
                sign = -sign

        # The leaving arc splits off the subtree rooted at it; the entering
        # arc re-roots that subtree at its inside endpoint.
        if leave_node in up_s:
            e_sub, e_root = s_node, t_node
        else:
            e_sub, e_root = t_node, s_node

        chain_nodes: list[int] = []
        node = e_sub
        while True:
            chain_nodes.append(node)
            if node == leave_node:
                break
            node = int(self.parent[node])
        self._rehang(chain_nodes, e_root, theta)

        # Dual update: every potential in the detached subtree shifts by the
        # entering arc's reduced cost (sign split between sources and sinks).
        # When the detached side is the larger one, shift the complement the
        # other way instead; reduced costs only see the difference.
        a = int(self.pos[e_sub])
        sz = int(self.size[e_sub])
        du = delta if e_sub < self.m else -delta
        if 2 * sz <= self.N:
            seg = self.order[a : a + sz]
            src = seg[seg < self.m]
            snk = seg[seg >= self.m] - self.m
            self.u[src] += du
            self.v[snk] -= du
        else:
            seg = np.concatenate((self.order[:a], self.order[a + sz :]))
            src = seg[seg < self.m]
            snk = seg[seg >= self.m] - self.m
            self.u[src] -= du
            self.v[snk] += du
        self.iterations += 1

    def _rehang(self, chain: list[int], e_root: int, theta: float) -> None:
        """Re-root the detached subtree at chain[0] and attach it under e_root.

        ``chain`` runs from the new subtree root up to the node whose parent
        arc is leaving.  Re-rooting reverses the chain; the new preorder is
        assembled from contiguous slices of the old one in a single splice.
        """
        order, pos, size, parent, flow = self.order, self.pos, self.size, self.parent, self.flow
        k = len(chain) - 1
        starts = [int(pos[c]) for c in chain]
        old_sz = [int(size[c]) for c in chain]
        ends = [starts[t] + old_sz[t] for t in range(k + 1)]
        a, b = starts[k], ends[k]
        total = b - a

        if k == 0:
            seg = order[a:b].copy()
        else:
            pieces = [order[starts[0] : ends[0]]]
            for t in range(1, k + 1):
                pieces.append(order[starts[t] : starts[t - 1]])
                pieces.append(order[ends[t - 1] : ends[t]])
            seg = np.concatenate(pieces)

        # Chain bookkeeping: the arc between chain[t-1] and chain[t] now
        # hangs at chain[t]; its flow was stored at chain[t-1].
        carried = [float(flow[c]) for c in chain]
        old_parent = int(parent[chain[k]])
        parent[chain[0]] = e_root
        flow[chain[0]] = theta
        size[chain[0]] = total
        for t in range(1, k + 1):
            parent[chain[t]] = chain[t - 1]
            flow[chain[t]] = carried[t - 1]
            size[chain[t]] = total - old_sz[t - 1]

        node = old_parent
        while node != -1:
            size[node] -= total
            node = int(parent[node])
        node = e_root
        while node != -1:
            size[node] += total
            node = int(parent[node])

        p = int(pos[e_root])
        if p >= b:
            order[a : p + 1 - total] = order[b : p + 1].copy()
            order[p + 1 - total : p + 1] = seg
            lo, hi = a, p + 1
        else:  # p + 1 <= a (e_root cannot sit inside the detached segment)
            order[p + 1 + total : b] = order[p + 1 : a].copy()
            order[p + 1 : p + 1 + total] = seg
            lo, hi = p + 1, b
        pos[order[lo:hi]] = self._arange[lo:hi]

    # -- pricing -----------------------------------------------------------

    def _refill(self) -> np.ndarray:
        """One full scan; the most negative arcs as a candidate pool.

        The pool is sorted by (reduced cost, flat index), so ties resolve to
        the lexicographically smallest (i, j).
        """
        take = self.refill_size
        red = self._scan_buf
        np.subtract(self.cost, self.u[:, None], out=red)
        np.subtract(red, self.v[None, :], out=red)
        flat = red.ravel()
        idx = np.flatnonzero(flat < -self.tol).astype(np.int64)
        if idx.size == 0:
            return idx
        vals = flat[idx]
        if idx.size > take:
            part = np.argpartition(vals, take - 1)[:take]
            idx = idx[part]
            vals = vals[part]
        sel = np.lexsort((idx, vals))
        return idx[sel]

    def _bland_arc(self) -> Optional[tuple[int, int]]:
        """First arc in lexicographic (i, j) order with negative reduced cost."""
        for i in range(self.m):
            red = self.cost[i] - self.u[i] - self.v
            js = np.nonzero(red < -self.tol)[0]
            if js.size:
                return i, int(js[0])
        return None

    # -- driver ------------------------------------------------------------

    def _drain_pool(self, pool: np.ndarray, batch: int, deadline: int) -> None:
        """Pivot on pool arcs until none of them price negative.

        The pool is re-priced wholesale between batches: arcs flip in and out
        of eligibility as the duals move, so nothing is discarded early.
        """
        n = self.n
        pool_rows = pool // n
        pool_cols = pool - pool_rows * n
        while True:
            if self.iterations > deadline:
                return
            red = self.cost[pool_rows, pool_cols] - self.u[pool_rows] - self.v[pool_cols]
            alive = np.nonzero(red < -self.tol)[0]
            if alive.size == 0:
                return
            if alive.size * 8 < pool.size:
                # Almost everything priced out; shrink the pool so the
                # wholesale re-pricing stays cheap.  Dropped arcs are caught
                # by the next full refill if they come back.
                pool = pool[alive]
                pool_rows = pool_rows[alive]
                pool_cols = pool_cols[alive]
                red = red[alive]
                alive = np.arange(pool.size)
            if alive.size > batch:
                take = alive[np.argpartition(red[alive], batch - 1)[:batch]]
            else:
                take = alive
            sel = take[np.lexsort((pool[take], red[take]))]
            for flat in pool[sel].tolist():
                i, j = flat // n, flat % n
                if self.cost[i, j] - self.u[i] - self.v[j] < -self.tol:
                    self._pivot(i, j)

    def _neighbor_arcs(self) -> Optional[np.ndarray]:
        """Flat indices of a sparse warm-start arc set: mutual nearest
        neighbours between the two real atom clouds plus all reservoir arcs."""
        m_real, n_real = self.m - 1, self.n - 1
        if m_real * n_real <= 65536 or self.points_mu is None or self.points_nu is None:
            return None
        from scipy.spatial import cKDTree

        k = min(32, n_real)
        tree_nu = cKDTree(self.points_nu)
        _, nbr = tree_nu.query(self.points_mu, k=k)
        nbr = np.asarray(nbr, dtype=np.int64).reshape(m_real, -1)
        rows = np.repeat(np.arange(m_real, dtype=np.int64), nbr.shape[1])
        arcs_fwd = rows * self.n + nbr.reshape(-1)
        k2 = min(32, m_real)
        tree_mu = cKDTree(self.points_mu)
        _, nbr2 = tree_mu.query(self.points_nu, k=k2)
        nbr2 = np.asarray(nbr2, dtype=np.int64).reshape(n_real, -1)
        cols = np.repeat(np.arange(n_real, dtype=np.int64), nbr2.shape[1])
        arcs_bwd = nbr2.reshape(-1) * self.n + cols
        res_row = np.int64(m_real) * self.n + np.arange(self.n, dtype=np.int64)
        res_col = np.arange(m_real, dtype=np.int64) * self.n + (self.n - 1)
        return np.unique(np.concatenate([arcs_fwd, arcs_bwd, res_row, res_col]))

    def run(self) -> None:
        bland_after = 500 * self.N + 100_000
        hard_cap = 10_000_000
        batch = 128

        # Phase 1: drive the basis close to optimal on a sparse arc set where
        # re-pricing is nearly free.
        warm = self._neighbor_arcs()
        if warm is not None:
            self._drain_pool(warm, batch, bland_after)

        # Phase 2: full pricing until a complete scan certifies optimality.
        while True:
            if self.iterations > hard_cap:
                raise RuntimeError("transportation simplex exceeded the pivot cap")
            if self.iterations > bland_after:
                arc = self._bland_arc()
                if arc is None:
                    break
                self._pivot(*arc)
                continue
            # Incremental dual updates accumulate rounding over many pivots;
            # refresh them before scanning and certifying optimality.
            self._restore_potentials()
            pool = self._refill()
            if pool.size == 0:
                break
            self._drain_pool(pool, batch, bland_after)

        self._restore_flows()
        self._restore_potentials()

    def _restore_flows(self) -> None:
        """Recompute basic flows exactly from the supplies along the final tree."""
        residual = np.concatenate([self.supply, self.demand]).tolist()
        parent = self.parent
        flow = self.flow
        root = self.root
        for node in self.order.tolist()[::-1]:
            if node == root:
                continue
            f = residual[node]
            flow[node] = f
            residual[parent[node]] -= f
        worst = min(flow)
        if worst < 0.0:
            if worst < -1e-9 * max(1.0, float(self.supply.sum())):
                raise RuntimeError(f"negative basic flow {worst} after restoration")
            for node, f in enumerate(flow):
                if f < 0.0:
                    flow[node] = 0.0

    def _restore_potentials(self) -> None:
        self.u[self.root] = 0.0
        m = self.m
        cost = self.cost
        parent = self.parent
        u, v = self.u, self.v
        for node in self.order.tolist()[1:]:
            par = parent[node]
            if node < m:
                j = par - m
                u[node] = cost[node, j] - v[j]
            else:
                j = node - m
                v[j] = cost[par, j] - u[par]


# ---------------------------------------------------------------------------
# Public solver API
# ---------------------------------------------------------------------------

def _forced_reservoir_report(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostSpec) -> SolveReport:
    """Closed-form solve when at least one side is empty: all mass meets the reservoir."""
    res_mu = cost.reservoir_cost(mu)
    res_nu = cost.reservoir_cost(nu)
    plan = TransportPlan(
        n_mu=mu.n_atoms,
        n_nu=nu.n_atoms,
        direct_rows=np.zeros(0, dtype=int),
        direct_cols=np.zeros(0, dtype=int),
        direct_vals=np.zeros(0),
        to_reservoir=np.array(mu.weights, dtype=float, copy=True),
        from_reservoir=np.array(nu.weights, dtype=float, copy=True),
    )
    value = math.fsum((mu.weights * res_mu).tolist()) + math.fsum((nu.weights * res_nu).tolist())
    duals = DualPotentials(phi=res_mu.copy(), psi=res_nu.copy(), p=cost.p)
    dual = math.fsum((mu.weights * duals.phi).tolist()) + math.fsum((nu.weights * duals.psi).tolist())
    return SolveReport(value=value, plan=plan, duals=duals, iterations=0, gap=abs(value - dual))


def solve(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostSpec) -> SolveReport:
    """Exact minimiser of the reservoir transport LP between two measures.

    Returns the optimal cost, an optimal vertex plan, optimal dual potentials
    satisfying complementary slackness, the pivot count, and the primal-dual
    gap (which certifies optimality to rounding accuracy).
    """
    if mu.dim != nu.dim:
        raise ValueError("measures must share the ambient dimension")
    m, n = mu.n_atoms, nu.n_atoms
    if m == 0 or n == 0:
        return _forced_reservoir_report(mu, nu, cost)

    res_mu = cost.reservoir_cost(mu)
    res_nu = cost.reservoir_cost(nu)
    C = np.zeros((m + 1, n + 1))
    C[:m, :n] = cost.pair_matrix(mu, nu)
    C[:m, n] = res_mu
    C[m, :n] = res_nu
    C[m, n] = 0.0

    mass_mu = mu.total_mass()
    mass_nu = nu.total_mass()
    supply = np.concatenate([mu.weights, [mass_nu]])
    demand = np.concatenate([nu.weights, [mass_mu]])

    sx = _Simplex(C, supply, demand, points_mu=mu.positions, points_nu=nu.positions)
    sx.run()

    direct_r: list[int] = []
    direct_c: list[int] = []
    direct_v: list[float] = []
    to_res = np.zeros(m)
    from_res = np.zeros(n)
    for node in range(sx.N):
        if node == sx.root:
            continue
        f = float(sx.flow[node])
        if f <= 0.0:
            continue
        i, j = sx._arc_of(node)
        if i < m and j < n:
            direct_r.append(i)
            direct_c.append(j)
            direct_v.append(f)
        elif i < m:  # j == n: into the reservoir
            to_res[i] += f
        elif j < n:  # i == m: out of the reservoir
            from_res[j] += f
        # i == m and j == n: reservoir self-loop, dropped by convention

    plan = TransportPlan(
        n_mu=m,
        n_nu=n,
        direct_rows=np.array(direct_r, dtype=int),
        direct_cols=np.array(direct_c, dtype=int),
        direct_vals=np.array(direct_v, dtype=float),
        to_reservoir=to_res,
        from_reservoir=from_res,
    )

    # Shift tree potentials so both reservoir nodes sit exactly at zero; the
    # result is feasible and optimal for the reservoir LP.
    phi = sx.u[:m] + sx.v[n]
    psi = sx.v[:n] + sx.u[m]
    duals = DualPotentials(phi=phi, psi=psi, p=cost.p)

    terms = [C[i, j] * f for i, j, f in zip(direct_r, direct_c, direct_v)]
    terms.extend((to_res * res_mu).tolist())
    terms.extend((from_res * res_nu).tolist())
    value = math.fsum(terms)
    dual = math.fsum((mu.weights * phi).tolist()) + math.fsum((nu.weights * psi).tolist())
    return SolveReport(value=value, plan=plan, duals=duals, iterations=sx.iterations, gap=abs(value - dual))


def distance(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float) -> float:
    """The transport metric: p-th root of the optimal cost."""
    return solve(mu, nu, CostSpec(p)).distance


def verify_plan(
    plan: TransportPlan,
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    tol: float = 1e-12,
) -> list[PlanViolation]:
    """Check the marginal identities that make a plan admissible.

    Empty list iff every mu row sum and nu column sum matches the atom weight
    within ``tol`` (absolute) and no flow is negative.
    """
    out: list[PlanViolation] = []
    if plan.n_mu != mu.n_atoms or plan.n_nu != nu.n_atoms:
        raise ValueError("plan shape does not match the measures")
    for arr in (plan.direct_vals, plan.to_reservoir, plan.from_reservoir):
        for k in np.nonzero(np.asarray(arr) < -tol)[0]:
            out.append(PlanViolation("negativity", int(k), float(arr[k])))
    row = plan.mu_marginal()
    col = plan.nu_marginal()
    for i in np.nonzero(np.abs(row - mu.weights) > tol)[0]:
        out.append(PlanViolation("mu", int(i), float(row[i] - mu.weights[i])))
    for j in np.nonzero(np.abs(col - nu.weights) > tol)[0]:
        out.append(PlanViolation("nu", int(j), float(col[j] - nu.weights[j])))
    return out


def k_support_check(
    plan: TransportPlan,
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    p: float,
    tol: float = 1e-9,
    mass_tol: float = 1e-12,
) -> list[tuple[int, int, float]]:
    """Arcs of the plan that leave the cheap set {|x-y|^p <= |x|^p + |y|^p}.

    Optimal plans never charge such arcs (rerouting through the reservoir
    would be strictly cheaper), so the list is empty for solver output.
    Returns (i, j, excess) triples for arcs with mass above ``mass_tol``.
    """
    cost = CostSpec(p)
    out: list[tuple[int, int, float]] = []
    if plan.direct_vals.size == 0:
        return out
    res_mu = cost.reservoir_cost(mu)
    res_nu = cost.reservoir_cost(nu)
    for i, j, v in zip(plan.direct_rows, plan.direct_cols, plan.direct_vals):
        if v <= mass_tol:
            continue
        direct = float(_pow(np.linalg.norm(mu.positions[i] - nu.positions[j]), p))
        through = float(res_mu[i] + res_nu[j])
        if direct > through + tol:
            out.append((int(i), int(j), direct - through))
    return out


def dual_value(duals: DualPotentials, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Dual objective of a feasible potential pair; rejects infeasible input.

    The value never exceeds the primal optimum, with equality for solver duals.
    """
    bad = duals.violations(mu, nu)
    if bad:
        raise ValueError("infeasible dual potentials: " + bad[0])
    return math.fsum((mu.weights * duals.phi).tolist()) + math.fsum(
        (nu.weights * duals.psi).tolist()
    )


def brute_force_unit(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float) -> float:
    """Exhaustive oracle for unit-weight instances with at most 6 atoms per side.

    Enumerates every injective partial matching between the two atom sets;
    unmatched atoms trade with the reservoir.  Vertices of the transportation
    polytope are integral for unit supplies, so this minimum equals the LP
    optimum.
    """
    p = _check_p(p)
    if mu.dim != nu.dim:
        raise ValueError("measures must share the ambient dimension")
    m, n = mu.n_atoms, nu.n_atoms
    if m > 6 or n > 6:
        raise ValueError("brute force oracle accepts at most 6 atoms per side")
    for w in itertools.chain(mu.weights, nu.weights):
        if abs(w - 1.0) > 1e-12:
            raise ValueError("brute force oracle requires unit atom weights")

    cost = CostSpec(p)
    res_mu = cost.reservoir_cost(mu)
    res_nu = cost.reservoir_cost(nu)
    pair = cost.pair_matrix(mu, nu)
    base = math.fsum(res_mu.tolist()) + math.fsum(res_nu.tolist())

    best = base
    for k in range(1, min(m, n) + 1):
        for rows in itertools.combinations(range(m), k):
            row_gain = sum(res_mu[i] for i in rows)
            for cols in itertools.permutations(range(n), k):
                direct = sum(pair[i, j] for i, j in zip(rows, cols))
                col_gain = sum(res_nu[j] for j in cols)
                cand = base - row_gain - col_gain + direct
                if cand < best:
                    best = cand
    return best
