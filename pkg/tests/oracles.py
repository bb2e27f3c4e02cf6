"""Independent reference implementations shared by the test modules."""

import itertools
import math

import numpy as np

from seqpg.agents import choice_probability
from seqpg.dataset import DatasetRow
from seqpg.game import Treatment, enumerate_cells
from seqpg.sfem import candidate_types


def random_rows(t, n_subjects, n_cells, seed):
    """Hand-built rows: each subject answers a few random reachable cells."""
    rng = np.random.default_rng(seed)
    tr = Treatment(t)
    rows = []
    for sid in range(1, n_subjects + 1):
        for rnd in range(1, n_cells + 1):
            pos = int(rng.integers(1, 5))
            cells = enumerate_cells(tr, pos)
            c = cells[int(rng.integers(len(cells)))]
            rows.append(DatasetRow(tr, "S", sid, "?", rnd, 1, pos, c.condition,
                                   int(rng.integers(2)), 1))
    return rows


def simplex_grid(k, step=0.01):
    m = round(1 / step)
    pts = [c for c in itertools.combinations(range(m + k - 1), k - 1)]
    out = np.empty((len(pts), k))
    for i, c in enumerate(pts):
        bars = (-1,) + c + (m + k - 1,)
        out[i] = [(bars[j + 1] - bars[j] - 1) for j in range(k)]
    return out / m


def grid_optimum(rows, t):
    """Exhaustive search over beta and shares at step 0.01, likelihood built cell by cell."""
    types = candidate_types(t)
    subjects = sorted({r.subject_id for r in rows})
    shares = simplex_grid(len(types))
    best = -math.inf
    for beta in np.arange(0.51, 1.0, 0.01):
        P = np.ones((len(subjects), len(types)))
        for r in rows:
            i = subjects.index(r.subject_id)
            for k, kind in enumerate(types):
                p = choice_probability(kind, r.cell, float(beta))
                P[i, k] *= p if r.choice else 1 - p
        with np.errstate(divide="ignore"):
            ll = np.log(shares @ P.T).sum(axis=1)
        best = max(best, float(ll.max()))
    return best
