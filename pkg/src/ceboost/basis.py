"""Candidate function libraries: polynomial dictionaries and localized masks.

A library is an ordered list of monomial basis functions over the state
vector together with one boolean mask per modeled equation.  The mask lists
which functions are *examined* as causal candidates for that equation; the
global library stays shared so duplicate products across equations are
stored once.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BasisFunction",
    "BasisLibrary",
    "build_polynomial_library",
    "build_localized_library",
    "l96_stencil",
    "save_library",
    "load_library",
]


@dataclass(frozen=True)
class BasisFunction:
    """A monomial (or the constant) over the state components.

    ``exponents`` maps state index -> positive integer power.  The constant
    has an empty map.  The display name is derived from the state names and
    uniquely determined by the exponents.
    """

    exponents: tuple  # sorted tuple of (state_index, power)
    name: str

    @property
    def degree(self):
        return sum(p for _, p in self.exponents)

    @property
    def kind(self):
        return "constant" if not self.exponents else "monomial"

    def evaluate(self, states):
        """Column of values for an (M, p) state matrix."""
        out = np.ones(states.shape[0])
        for idx, power in self.exponents:
            out = out * states[:, idx] ** power
        return out


def _default_names(p):
    return tuple(f"x{i + 1}" for i in range(p))


def _make_name(exponents, state_names):
    if not exponents:
        return "1"
    parts = []
    for idx, power in exponents:
        parts.append(state_names[idx] if power == 1 else f"{state_names[idx]}^{power}")
    return "*".join(parts)


def _make_function(index_multiset, state_names):
    """Build a BasisFunction from an iterable of state indices (with repeats)."""
    counts = {}
    for i in index_multiset:
        counts[i] = counts.get(i, 0) + 1
    exps = tuple(sorted(counts.items()))
    return BasisFunction(exponents=exps, name=_make_name(exps, state_names))


def _sort_key(fn):
    # Degree first; within a degree, products of distinct states come before
    # repeated powers (max multiplicity ascending), then index order.  This
    # yields x, y, z, xy, xz, yz, x^2, y^2, z^2 for p=3, degree 2.
    if not fn.exponents:
        return (0, 0, ())
    flat = tuple(sorted(itertools.chain.from_iterable([i] * p for i, p in fn.exponents)))
    max_mult = max(p for _, p in fn.exponents)
    return (fn.degree, max_mult, flat)


@dataclass(frozen=True)
class BasisLibrary:
    """Ordered basis functions plus one candidate mask per modeled equation.

    ``row_masks`` has shape (n_equations, N).  For fully observed systems
    there is one equation per state component.
    """

    functions: tuple
    p: int
    row_masks: np.ndarray
    state_names: tuple = ()

    def __post_init__(self):
        names = [f.name for f in self.functions]
        if len(set(names)) != len(names):
            raise ValueError("duplicate basis function names")
        masks = np.asarray(self.row_masks, dtype=bool)
        if masks.ndim != 2 or masks.shape[1] != len(self.functions):
            raise ValueError("row_masks must be (n_equations, N)")
        if not masks.any(axis=1).all():
            raise ValueError("every row mask must select at least one function")
        for f in self.functions:
            for idx, _ in f.exponents:
                if idx >= self.p:
                    raise ValueError(f"function {f.name} references state {idx} >= p={self.p}")
        masks.setflags(write=False)
        object.__setattr__(self, "row_masks", masks)
        if not self.state_names:
            object.__setattr__(self, "state_names", _default_names(self.p))

    @property
    def n_functions(self):
        return len(self.functions)

    @property
    def n_equations(self):
        return self.row_masks.shape[0]

    def names(self):
        return tuple(f.name for f in self.functions)

    def index_of(self, name):
        for i, f in enumerate(self.functions):
            if f.name == name:
                return i
        raise KeyError(name)

    def constant_index(self):
        """Position of the constant function, or None."""
        for i, f in enumerate(self.functions):
            if not f.exponents:
                return i
        return None

    def evaluate(self, states):
        """(M, N) matrix with entry (m, n) = function n at state row m."""
        states = np.asarray(states, dtype=np.float64)
        if states.ndim != 2 or states.shape[1] != self.p:
            raise ValueError(f"states must be (M, {self.p}), got {states.shape}")
        out = np.empty((states.shape[0], self.n_functions))
        for n, f in enumerate(self.functions):
            out[:, n] = f.evaluate(states)
        return out


def build_polynomial_library(p, max_degree, include_constant=False, state_names=None,
                             n_equations=None):
    """All monomials of total degree 1..max_degree (plus optional constant).

    Ordering is degree-then-lexicographic with distinct-state products ahead
    of repeated powers within a degree; all row masks are full.
    """
    if p < 1 or max_degree < 1:
        raise ValueError("p and max_degree must be >= 1")
    state_names = tuple(state_names) if state_names else _default_names(p)
    fns = []
    if include_constant:
        fns.append(BasisFunction(exponents=(), name="1"))
    for degree in range(1, max_degree + 1):
        for combo in itertools.combinations_with_replacement(range(p), degree):
            fns.append(_make_function(combo, state_names))
    fns.sort(key=_sort_key)
    n_eq = n_equations if n_equations is not None else p
    masks = np.ones((n_eq, len(fns)), dtype=bool)
    return BasisLibrary(functions=tuple(fns), p=p, row_masks=masks,
                        state_names=state_names)


@dataclass(frozen=True)
class LocalStencil:
    """Per-equation candidate pattern for a periodic lattice of states.

    ``linear`` lists offsets a giving candidates x_{j+a}; ``pairs`` lists
    offset pairs (a, b) giving products x_{j+a} * x_{j+b} (a == b gives a
    square).  Offsets wrap around modulo p.
    """

    linear: tuple = (0,)
    pairs: tuple = ((0, 0), (0, -1), (0, 1), (0, -2), (0, 2))
    include_constant: bool = True

    def span(self):
        offs = set(self.linear)
        for a, b in self.pairs:
            offs.update((a, b))
        return max(abs(o) for o in offs)


def l96_stencil(extended=True, include_constant=True):
    """Nearest-neighbour interaction stencil for a cyclic lattice.

    The base pattern examines x_j, x_j^2 and the products of x_j with its
    neighbours up to distance two.  ``extended`` adds the two advection
    products x_{j+1}x_{j-1} and x_{j-1}x_{j-2}, which do not contain x_j but
    are required for the lattice model's own dynamics to be in each row's
    candidate set.
    """
    pairs = [(0, 0), (0, -1), (0, 1), (0, -2), (0, 2)]
    if extended:
        pairs += [(-1, 1), (-2, -1)]
    return LocalStencil(linear=(0,), pairs=tuple(pairs),
                        include_constant=include_constant)


def build_localized_library(p, stencil=None, include_constant=None, state_names=None):
    """Union over rows of per-row stencil candidates, stored once globally.

    Row j's mask selects exactly the stencil applied at site j (offsets wrap
    modulo p), plus the constant when enabled.
    """
    stencil = stencil if stencil is not None else l96_stencil()
    if include_constant is not None:
        stencil = LocalStencil(linear=stencil.linear, pairs=stencil.pairs,
                               include_constant=include_constant)
    if p < 2 * stencil.span() + 1:
        raise ValueError(
            f"p={p} smaller than stencil span {stencil.span()} needs wraparound overlap"
        )
    state_names = tuple(state_names) if state_names else _default_names(p)
    per_row = []
    seen = {}
    fns = []
    if stencil.include_constant:
        const = BasisFunction(exponents=(), name="1")
        seen[const.exponents] = const
        fns.append(const)
    for j in range(p):
        row = []
        if stencil.include_constant:
            row.append(seen[()])
        for a in stencil.linear:
            f = _make_function([(j + a) % p], state_names)
            row.append(seen.setdefault(f.exponents, f))
        for a, b in stencil.pairs:
            f = _make_function([(j + a) % p, (j + b) % p], state_names)
            row.append(seen.setdefault(f.exponents, f))
        per_row.append(row)
    fns = sorted(seen.values(), key=_sort_key)
    order = {f.exponents: i for i, f in enumerate(fns)}
    masks = np.zeros((p, len(fns)), dtype=bool)
    for j, row in enumerate(per_row):
        for f in row:
            masks[j, order[f.exponents]] = True
    return BasisLibrary(functions=tuple(fns), p=p, row_masks=masks,
                        state_names=state_names)


def save_library(library, path):
    doc = {
        "schema": "ceboost/library-v1",
        "p": library.p,
        "state_names": list(library.state_names),
        "functions": [
            {"name": f.name, "exponents": [[i, e] for i, e in f.exponents]}
            for f in library.functions
        ],
        "row_masks": library.row_masks.astype(int).tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_library(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema") != "ceboost/library-v1":
        raise ValueError(f"unrecognized library schema in {path}")
    fns = tuple(
        BasisFunction(exponents=tuple((int(i), int(e)) for i, e in f["exponents"]),
                      name=f["name"])
        for f in doc["functions"]
    )
    return BasisLibrary(functions=fns, p=int(doc["p"]),
                        row_masks=np.array(doc["row_masks"], dtype=bool),
                        state_names=tuple(doc["state_names"]))
