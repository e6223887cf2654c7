"""Exact linear algebra over the rationals.

Backs the exact mode: when a form or field is built from integers (or
Fractions), kernels, ranks, solvability and inertia are decided without
any floating-point tolerance.  Elimination is fraction-free (Bareiss) on
integer-scaled rows, so all intermediate values are exact Python ints.
"""

from __future__ import annotations

from fractions import Fraction

Matrix = list[list[Fraction]]


def to_fraction_matrix(rows) -> Matrix:
    """Convert a nested sequence of ints/Fractions/floats-with-integral-value."""
    out = []
    for row in rows:
        out.append([_to_fraction(x) for x in row])
    return out


def _to_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int,)):
        return Fraction(x)
    if isinstance(x, float):
        if not x.is_integer():
            raise ValueError(f"non-integral float {x!r} has no exact representation here")
        return Fraction(int(x))
    # numpy integer types land here
    return Fraction(int(x))


def is_exact_array(arr) -> bool:
    """True when every entry of the (nested) array is integral."""
    import numpy as np

    a = np.asarray(arr)
    if a.size == 0:
        return True
    if np.issubdtype(a.dtype, np.integer):
        return True
    if np.issubdtype(a.dtype, np.floating):
        return bool(np.all(np.isfinite(a)) and np.all(a == np.floor(a)))
    return False


def _integer_rows(m: Matrix) -> list[list[int]]:
    rows = []
    for row in m:
        lcm = 1
        for x in row:
            d = x.denominator
            lcm = lcm * d // _gcd(lcm, d)
        rows.append([int(x * lcm) for x in row])
    return rows


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return abs(a)


def row_echelon(m: Matrix) -> tuple[list[list[int]], list[int]]:
    """Fraction-free (Bareiss) echelon form.

    Returns the echelon rows (integers) and the list of pivot column indices.
    """
    rows = _integer_rows(m)
    nrows = len(rows)
    ncols = len(rows[0]) if nrows else 0
    pivots: list[int] = []
    prev = 1
    r = 0
    for col in range(ncols):
        piv = next((i for i in range(r, nrows) if rows[i][col] != 0), None)
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        for i in range(r + 1, nrows):
            for c in range(ncols):
                if c == col:
                    continue
                rows[i][c] = (rows[i][c] * rows[r][col] - rows[i][col] * rows[r][c]) // prev
            rows[i][col] = 0
        prev = rows[r][col]
        pivots.append(col)
        r += 1
        if r == nrows:
            break
    return rows, pivots


def rank(m: Matrix) -> int:
    _, pivots = row_echelon(m)
    return len(pivots)


def kernel(m: Matrix) -> list[list[Fraction]]:
    """Exact kernel basis of an m x n rational matrix (list of n-vectors)."""
    if not m:
        return []
    ncols = len(m[0])
    rows, pivots = row_echelon(m)
    r = len(pivots)
    free_cols = [c for c in range(ncols) if c not in pivots]
    basis = []
    for fc in free_cols:
        vec = [Fraction(0)] * ncols
        vec[fc] = Fraction(1)
        # back-substitute through the echelon rows, bottom pivot first
        for i in range(r - 1, -1, -1):
            pc = pivots[i]
            s = sum(Fraction(rows[i][c]) * vec[c] for c in range(pc + 1, ncols))
            vec[pc] = -s / Fraction(rows[i][pc])
        basis.append(vec)
    return basis


def solve(m: Matrix, rhs: list[Fraction]) -> list[Fraction] | None:
    """One exact solution of m x = rhs, or None when the system is inconsistent."""
    if not m:
        return [] if all(b == 0 for b in rhs) else None
    ncols = len(m[0])
    aug = [list(row) + [b] for row, b in zip(m, rhs)]
    rows, pivots = row_echelon(aug)
    # inconsistent iff some pivot sits in the RHS column
    if ncols in pivots:
        return None
    x = [Fraction(0)] * ncols
    for i in range(len(pivots) - 1, -1, -1):
        pc = pivots[i]
        s = sum(Fraction(rows[i][c]) * x[c] for c in range(pc + 1, ncols))
        x[pc] = (Fraction(rows[i][ncols]) - s) / Fraction(rows[i][pc])
    return x


def in_span(m: Matrix, rhs: list[Fraction]) -> bool:
    """Exact test: is rhs a linear combination of the columns of m?"""
    return solve(m, rhs) is not None


def inertia(sym: Matrix) -> tuple[int, int, int]:
    """Exact (positive, negative, zero) eigenvalue counts of a symmetric
    rational matrix, by congruence reduction (Sylvester's law)."""
    a = [row[:] for row in sym]
    n = len(a)
    for i in range(n):
        for j in range(n):
            if a[i][j] != a[j][i]:
                raise ValueError("inertia requires a symmetric matrix")
    p = q = r = 0
    idx = list(range(n))
    while idx:
        # find a nonzero diagonal pivot
        piv = next((i for i in idx if a[i][i] != 0), None)
        if piv is None:
            # all diagonal entries zero; look for an off-diagonal entry
            pair = None
            for i in idx:
                for j in idx:
                    if j > i and a[i][j] != 0:
                        pair = (i, j)
                        break
                if pair:
                    break
            if pair is None:
                r += len(idx)
                break
            i, j = pair
            # congruence e_i -> e_i + e_j turns a_ii into 2 a_ij != 0
            for k in range(n):
                a[i][k] = a[i][k] + a[j][k]
            for k in range(n):
                a[k][i] = a[k][i] + a[k][j]
            piv = i
        d = a[piv][piv]
        if d > 0:
            p += 1
        else:
            q += 1
        idx.remove(piv)
        for i in idx:
            ci = a[i][piv]
            if ci == 0:
                continue
            f = ci / d
            for j in idx:
                a[i][j] = a[i][j] - f * a[piv][j]
            a[i][piv] = Fraction(0)
        for j in idx:
            a[piv][j] = Fraction(0)
            a[j][piv] = Fraction(0)
    return p, q, r
