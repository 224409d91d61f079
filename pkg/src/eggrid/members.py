"""Member distribution: propagation through cladding functions and the
evenness optimization (normalized squared differences, per family)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .patchlayout import FAMILY_SIDES, PatchError


class MemberError(PatchError):
    pass


@dataclass
class Boundary:
    """One family-transverse boundary (shared boundaries stored once)."""
    key: int
    length: float
    weight: float = 1.0
    coords: np.ndarray = None
    fixed: dict = field(default_factory=dict)  # index -> value


@dataclass
class PatchChain:
    """Ordered patches of one family; link k maps boundary k -> k+1."""
    family: str
    patches: list                  # patch ids in order
    boundaries: list               # boundary keys, len = len(patches) + 1
    claddings: list                # cladding function per link
    flips: list                    # (flip_in, flip_out) per link
    ring: bool = False


@dataclass
class MemberSet:
    family: str
    boundaries: list               # Boundary records
    chains: list                   # PatchChain records
    source: int                    # boundary key holding the free variables

    def coords_of(self, key):
        for b in self.boundaries:
            if b.key == key:
                return b.coords
        raise MemberError(f"unknown boundary {key}")


def _apply_link(phi, flip_in, flip_out, u, forward=True):
    u = float(u)
    if forward:
        x = 1.0 - u if flip_in else u
        y = phi(x)
        return 1.0 - y if flip_out else y
    x = 1.0 - u if flip_out else u
    y = phi.inverse(x)
    return 1.0 - y if flip_in else y


def propagate_member(u_start, chain: PatchChain, start: int = 0):
    """Coordinates on every boundary of the chain; truncation flagged when
    a value leaves (0,1)."""
    n = len(chain.boundaries)
    out = [None] * n
    out[start] = float(u_start)
    truncated = False
    u = float(u_start)
    for k in range(start, n - 1):
        u = _apply_link(chain.claddings[k], *chain.flips[k], u, forward=True)
        if not (0.0 <= u <= 1.0):
            truncated = True
            u = min(1.0, max(0.0, u))
        out[k + 1] = u
    u = float(u_start)
    for k in range(start - 1, -1, -1):
        u = _apply_link(chain.claddings[k], *chain.flips[k], u, forward=False)
        if not (0.0 <= u <= 1.0):
            truncated = True
            u = min(1.0, max(0.0, u))
        out[k] = u
    return out, truncated


# -------------------------------------------------------------------------
# Chain construction from a patch network


def build_chains(network, claddings, family: str, lengths=None):
    """Chains of patches whose family-transverse boundaries are shared.

    claddings: dict patch id -> cladding function of the family.
    lengths: optional dict (patch, side) -> boundary length.
    """
    sa, sb = FAMILY_SIDES[family]
    # map (patch, side) -> (neighbor patch, neighbor side, flip)
    link = {}
    for (i, si), (j, sj), flip in network.shared:
        link[(i, si)] = (j, sj, flip)
        link[(j, sj)] = (i, si, flip)

    def boundary_key(i, s):
        # shared boundaries collapse onto the lower (patch, side) pair
        other = link.get((i, s))
        if other is not None and (other[0], other[1]) < (i, s):
            return (other[0], other[1])
        return (i, s)

    chains = []
    used = set()
    ids = range(len(network.patches))
    starts = [i for i in ids
              if (link.get((i, sa)) is None
                  or link.get((i, sa))[1] != sb)]
    for i0 in list(starts) + list(ids):
        if i0 in used:
            continue
        patches, bkeys, phis, flips = [], [boundary_key(i0, sa)], [], []
        i = i0
        flip_in = False
        ring = False
        while True:
            used.add(i)
            patches.append(i)
            phis.append(claddings[i])
            nxt = link.get((i, sb))
            flip_out = False
            bkeys.append(boundary_key(i, sb))
            if nxt is not None and nxt[1] == sa and nxt[0] not in used:
                flips.append((flip_in, nxt[2]))
                flip_in = nxt[2]
                i = nxt[0]
                continue
            if nxt is not None and nxt[1] == sa and nxt[0] == i0:
                ring = True
            flips.append((flip_in, flip_out))
            break
        chains.append(PatchChain(family, patches, bkeys, phis, flips, ring))
    return chains


def _boundary_records(network, mesh, chains, family, weights=None):
    sa, sb = FAMILY_SIDES[family]
    weights = weights or {}
    recs = {}
    for ch in chains:
        for k, key in enumerate(ch.boundaries):
            if key in recs:
                continue
            pid, side = key
            length = network.patches[pid].params[side].length
            recs[key] = Boundary(key, float(length),
                                 float(weights.get(key, 1.0)))
    return recs


# -------------------------------------------------------------------------
# Objective and optimizer


def objective_eval(member_set: MemberSet, weights=None) -> float:
    """Eq.-(3) value: sum_i w_i * sum_j ((u_j - u_{j-1}) / l_i)^2."""
    total = 0.0
    for b in member_set.boundaries:
        w = b.weight if weights is None else weights.get(b.key, b.weight)
        d = np.diff(b.coords) / b.length
        total += w * float(d @ d)
    return total


def _project_monotone(x, eps):
    """Project onto {eps <= x_1 < ... < x_k <= 1 - eps} (isotonic + clip)."""
    x = np.asarray(x, dtype=float).copy()
    # pool-adjacent-violators on x - j*eps gives strictly increasing output
    shift = x - eps * np.arange(len(x))
    n = len(shift)
    vals = list(shift)
    wts = [1.0] * n
    idx = []
    for v in range(n):
        vals_v, w_v = vals[v], wts[v]
        # compact into blocks
        idx.append((vals_v, w_v))
        while len(idx) > 1 and idx[-2][0] > idx[-1][0]:
            v1, w1 = idx.pop()
            v0, w0 = idx.pop()
            idx.append(((v0 * w0 + v1 * w1) / (w0 + w1), w0 + w1))
    out = []
    for v, w in idx:
        out.extend([v] * int(round(w)))
    x = np.array(out) + eps * np.arange(n)
    return np.clip(x, eps, 1.0 - eps * (n - np.arange(n)))


def distribute_members(network, mesh, claddings, family: str, count: int,
                       weights=None, fixed=None, max_iter=500, tol=1e-10):
    """Optimize member coordinates of one family (Eq. 3).

    claddings: dict patch id -> cladding function; count: number of interior
    members per boundary; fixed: dict boundary key -> list of frozen
    coordinate values (T-junction members).
    """
    if count < 1:
        raise MemberError("need at least one interior member")
    chains = build_chains(network, claddings, family)
    recs = _boundary_records(network, mesh, chains, family, weights)
    chains.sort(key=lambda ch: (-len(ch.patches), ch.patches[0]))
    main = chains[0]
    source = main.boundaries[0]

    # frozen coordinates: back-propagate fixed members to the source
    frozen = {}
    fixed = fixed or {}
    for key, values in fixed.items():
        for ch in chains:
            if key in ch.boundaries:
                k = ch.boundaries.index(key)
                for val in values:
                    out, _ = propagate_member(val, ch, start=k)
                    if ch is main:
                        frozen[float(out[0])] = True
                break
        else:
            raise MemberError(f"fixed member on unknown boundary {key}")

    m = count
    x0 = np.linspace(0, 1, m + 2)[1:-1]
    fixed_src = sorted(frozen)
    if fixed_src:
        if len(fixed_src) > m:
            raise MemberError("more fixed members than requested count")
        # nearest free slots become frozen at the fixed values
        x0 = list(x0)
        taken = []
        for val in fixed_src:
            j = int(np.argmin([abs(x - val) if j not in taken else math.inf
                               for j, x in enumerate(x0)]))
            x0[j] = val
            taken.append(j)
        order = np.argsort(x0)
        x0 = np.asarray(x0)[order]
        taken = [int(np.where(order == t)[0][0]) for t in taken]
        if np.any(np.diff(x0) <= 0):
            raise MemberError("fixed members clash with the ordering")
        free_mask = np.ones(m, dtype=bool)
        free_mask[taken] = False
    else:
        x0 = np.asarray(x0)
        free_mask = np.ones(m, dtype=bool)

    eps = min(1e-4, 0.25 / (m + 1))

    def full_coords(x):
        coords = {}
        for ch in chains:
            if ch is main:
                vals = x
            else:
                # secondary chains start from propagated or equidistant slots
                shared = [k for k, key in enumerate(ch.boundaries)
                          if key in coords]
                if shared:
                    k0 = shared[0]
                    base = coords[ch.boundaries[k0]]
                    vals = None
                    per = [propagate_member(u, ch, start=k0)[0] for u in base]
                    for k, key in enumerate(ch.boundaries):
                        coords.setdefault(key, np.array([p[k] for p in per]))
                    continue
                vals = x
            per = [propagate_member(u, ch, start=0)[0] for u in vals]
            for k, key in enumerate(ch.boundaries):
                coords.setdefault(key, np.array([p[k] for p in per]))
        return coords

    def assemble(x):
        coords = full_coords(x)
        for key, b in recs.items():
            inner = np.asarray(coords[key], dtype=float)
            b.coords = np.concatenate([[0.0], inner, [1.0]])
        return MemberSet(family, list(recs.values()), chains, source)

    def fval(x):
        return objective_eval(assemble(x))

    x = x0.copy()
    f = fval(x)
    h = 1e-6
    for _ in range(max_iter):
        g = np.zeros(m)
        for j in range(m):
            if not free_mask[j]:
                continue
            xp = x.copy()
            xp[j] = min(1 - eps, x[j] + h)
            g[j] = (fval(xp) - f) / (xp[j] - x[j])
        gn = np.linalg.norm(g)
        if gn < 1e-14:
            break
        step = 0.1 / max(gn, 1e-12)
        improved = False
        for _ in range(30):
            xn = x - step * g
            xn[~free_mask] = x[~free_mask]
            xn = _project_monotone(xn, eps)
            xn[~free_mask] = x[~free_mask]
            if np.any(np.diff(xn) <= 0):
                step *= 0.5
                continue
            fn = fval(xn)
            if fn < f:
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        rel = (f - fn) / max(abs(f), 1e-300)
        x, f = xn, fn
        if rel < tol:
            break
    return assemble(x)


def naive_members(network, mesh, claddings, family: str, count: int,
                  weights=None):
    """Equidistant members on the source boundary, simply propagated."""
    chains = build_chains(network, claddings, family)
    recs = _boundary_records(network, mesh, chains, family, weights)
    chains.sort(key=lambda ch: (-len(ch.patches), ch.patches[0]))
    main = chains[0]
    x = np.linspace(0, 1, count + 2)[1:-1]
    coords = {}
    for ch in chains:
        per = [propagate_member(u, ch, start=0)[0] for u in x]
        for k, key in enumerate(ch.boundaries):
            coords.setdefault(key, np.array([p[k] for p in per]))
    for key, b in recs.items():
        inner = np.asarray(coords[key], dtype=float)
        b.coords = np.concatenate([[0.0], inner, [1.0]])
    return MemberSet(family, list(recs.values()), chains, main.boundaries[0])
