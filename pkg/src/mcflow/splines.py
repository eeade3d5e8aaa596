"""Tensor-product B-spline spaces on the unit square.

Univariate spaces use an open uniform knot vector on [0, 1] with degree p,
N elements and interior smoothness C^l (interior knot multiplicity p - l),
giving dimension N*(p - l) + l + 1.  Tensor spaces combine two univariate
factors; basis indices are flattened row-major, (j1, j2) -> j1*nv + j2.

The quasi-interpolant realizes dual functionals by local least squares:
the functional for basis b_j is the j-th coefficient of the L2 projection
of the argument onto the span of all basis functions overlapping supp(b_j),
integrated with a per-element Gauss rule that is exact for the products
involved.  This makes the functionals exactly dual to the basis, so the
operator is a projector onto the space and reproduces polynomials up to
degree p.
"""

from __future__ import annotations

import numpy as np


def gauss_rule(n: int):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _basis_derivatives(knots, degree, x, spans, nderiv):
    """All nonzero basis functions and derivatives at each point.

    Returns an array of shape (npts, nderiv + 1, degree + 1); row k holds
    the k-th derivatives of the degree + 1 basis functions active on the
    span of each point, in index order span - degree .. span.
    """
    p = degree
    x = np.asarray(x, dtype=float)
    npts = x.shape[0]
    n = min(nderiv, p)

    ndu = np.empty((npts, p + 1, p + 1))
    ndu[:, 0, 0] = 1.0
    left = np.empty((npts, p + 1))
    right = np.empty((npts, p + 1))
    for j in range(1, p + 1):
        left[:, j] = x - knots[spans + 1 - j]
        right[:, j] = knots[spans + j] - x
        saved = np.zeros(npts)
        for r in range(j):
            # lower triangle: knot differences
            ndu[:, j, r] = right[:, r + 1] + left[:, j - r]
            temp = ndu[:, r, j - 1] / ndu[:, j, r]
            # upper triangle: basis values
            ndu[:, r, j] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        ndu[:, j, j] = saved

    ders = np.zeros((npts, nderiv + 1, p + 1))
    ders[:, 0, :] = ndu[:, :, p]

    a = np.empty((npts, 2, p + 1))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[:, 0, :] = 0.0
        a[:, 1, :] = 0.0
        a[:, 0, 0] = 1.0
        for k in range(1, n + 1):
            d = np.zeros(npts)
            rk = r - k
            pk = p - k
            if r >= k:
                a[:, s2, 0] = a[:, s1, 0] / ndu[:, pk + 1, rk]
                d = a[:, s2, 0] * ndu[:, rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[:, s2, j] = (a[:, s1, j] - a[:, s1, j - 1]) / ndu[:, pk + 1, rk + j]
                d = d + a[:, s2, j] * ndu[:, rk + j, pk]
            if r <= pk:
                a[:, s2, k] = -a[:, s1, k - 1] / ndu[:, pk + 1, r]
                d = d + a[:, s2, k] * ndu[:, r, pk]
            ders[:, k, r] = d
            s1, s2 = s2, s1

    fac = float(p)
    for k in range(1, n + 1):
        ders[:, k, :] *= fac
        fac *= p - k
    return ders


class UnivariateSpline:
    """B-spline space of one variable on [0, 1] with an open knot vector."""

    def __init__(self, degree: int, smoothness: int, num_elements: int):
        if degree < 2:
            raise ValueError(f"degree must be >= 2, got {degree}")
        if not 0 <= smoothness <= degree - 1:
            raise ValueError(
                f"smoothness must satisfy 0 <= l <= p-1, got l={smoothness}, p={degree}"
            )
        if num_elements < 1:
            raise ValueError(f"num_elements must be >= 1, got {num_elements}")
        self.degree = degree
        self.smoothness = smoothness
        self.num_elements = num_elements
        self.mesh_size = 1.0 / num_elements

        mult = degree - smoothness
        breaks = np.linspace(0.0, 1.0, num_elements + 1)
        interior = np.repeat(breaks[1:-1], mult)
        self.knots = np.concatenate(
            [np.zeros(degree + 1), interior, np.ones(degree + 1)]
        )
        self.dim = len(self.knots) - degree - 1
        assert self.dim == num_elements * mult + smoothness + 1

    def __repr__(self):
        return (
            f"UnivariateSpline(degree={self.degree}, smoothness={self.smoothness}, "
            f"num_elements={self.num_elements}, dim={self.dim})"
        )

    def find_span(self, x):
        """Knot span index for each point (spans clamp at the right end)."""
        x = np.asarray(x, dtype=float)
        span = np.searchsorted(self.knots, x, side="right") - 1
        return np.clip(span, self.degree, self.dim - 1)

    def eval_basis(self, x, nderiv: int = 0):
        """Nonzero basis values/derivatives at points in [0, 1].

        Returns (first, ders): `first[i]` is the index of the first active
        basis function at x[i], `ders[i, k, a]` the k-th derivative of
        basis `first[i] + a`.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x < 0.0) or np.any(x > 1.0):
            raise ValueError("evaluation points must lie in [0, 1]")
        spans = self.find_span(x)
        ders = _basis_derivatives(self.knots, self.degree, x, spans, nderiv)
        return spans - self.degree, ders

    def element_span(self, e: int):
        """Knot span index of element e."""
        mid = (e + 0.5) * self.mesh_size
        return int(self.find_span(np.array([mid]))[0])

    def element_tables(self, n_quad: int, nderiv: int = 1):
        """Per-element Gauss tabulation.

        Returns (points, weights, first, values) with points (N, nq) in
        global coordinates, weights (nq,) scaled to the element length,
        first (N,) the first active basis index per element, and values
        (N, nq, nderiv + 1, p + 1).
        """
        xq, wq = gauss_rule(n_quad)
        h = self.mesh_size
        offsets = np.arange(self.num_elements)[:, None] * h
        points = offsets + xq[None, :] * h
        weights = wq * h
        flat = points.ravel()
        spans = self.find_span(flat)
        ders = _basis_derivatives(self.knots, self.degree, flat, spans, nderiv)
        values = ders.reshape(self.num_elements, n_quad, nderiv + 1, self.degree + 1)
        first = (spans - self.degree).reshape(self.num_elements, n_quad)[:, 0]
        # sanity: one span per element
        assert np.all(
            (spans - self.degree).reshape(self.num_elements, n_quad)
            == first[:, None]
        )
        return points, weights, first, values

    def greville_points(self):
        """Knot averages, one per basis function."""
        p = self.degree
        return np.array(
            [self.knots[j + 1 : j + p + 1].mean() for j in range(self.dim)]
        )


class TensorSplineSpace:
    """Tensor product of two univariate spline spaces on the unit square."""

    def __init__(self, u_space: UnivariateSpline, v_space: UnivariateSpline):
        self.u = u_space
        self.v = v_space
        self.shape = (u_space.dim, v_space.dim)
        self.dim = u_space.dim * v_space.dim

        nu, nv = self.shape
        mask = np.zeros((nu, nv), dtype=bool)
        mask[0, :] = mask[-1, :] = True
        mask[:, 0] = mask[:, -1] = True
        self.boundary_mask = mask.ravel()
        self.boundary_indices = np.nonzero(self.boundary_mask)[0]
        self.interior_indices = np.nonzero(~self.boundary_mask)[0]

    def __repr__(self):
        return f"TensorSplineSpace(shape={self.shape}, dim={self.dim})"

    @property
    def degree(self):
        return (self.u.degree, self.v.degree)

    def flat_index(self, j1, j2):
        return np.asarray(j1) * self.v.dim + np.asarray(j2)

    def pair_index(self, j):
        j = np.asarray(j)
        return j // self.v.dim, j % self.v.dim

    def eval_basis(self, point, deriv_order: int = 0):
        """Active basis data at a single parametric point.

        Returns (indices, values) for deriv_order 0, plus gradients
        (nloc, 2) for order >= 1 and Hessians (nloc, 2, 2) for order 2.
        """
        u, v = float(point[0]), float(point[1])
        if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0):
            raise ValueError(f"point {(u, v)} outside the unit square")
        fu, du = self.u.eval_basis(np.array([u]), deriv_order)
        fv, dv = self.v.eval_basis(np.array([v]), deriv_order)
        pu, pv = self.u.degree, self.v.degree
        ju = fu[0] + np.arange(pu + 1)
        jv = fv[0] + np.arange(pv + 1)
        indices = (ju[:, None] * self.v.dim + jv[None, :]).ravel()
        values = np.outer(du[0, 0], dv[0, 0]).ravel()
        out = [indices, values]
        if deriv_order >= 1:
            grads = np.empty((len(indices), 2))
            grads[:, 0] = np.outer(du[0, 1], dv[0, 0]).ravel()
            grads[:, 1] = np.outer(du[0, 0], dv[0, 1]).ravel()
            out.append(grads)
        if deriv_order >= 2:
            hess = np.empty((len(indices), 2, 2))
            hess[:, 0, 0] = np.outer(du[0, 2], dv[0, 0]).ravel()
            hess[:, 0, 1] = np.outer(du[0, 1], dv[0, 1]).ravel()
            hess[:, 1, 0] = hess[:, 0, 1]
            hess[:, 1, 1] = np.outer(du[0, 0], dv[0, 2]).ravel()
            out.append(hess)
        return tuple(out)


def build_space(degree: int, smoothness: int, num_elements: int) -> TensorSplineSpace:
    """Tensor spline space with equal factors in both directions."""
    return TensorSplineSpace(
        UnivariateSpline(degree, smoothness, num_elements),
        UnivariateSpline(degree, smoothness, num_elements),
    )


class ParametricMesh:
    """Uniform N x N quadrature mesh on the unit square."""

    def __init__(self, num_elements: int, n_quad: int):
        if num_elements < 1:
            raise ValueError("num_elements must be >= 1")
        if n_quad < 1:
            raise ValueError("n_quad must be >= 1")
        self.num_elements = num_elements
        self.n_quad = n_quad
        self.mesh_size = 1.0 / num_elements

        xq, wq = gauss_rule(n_quad)
        h = self.mesh_size
        self.points_1d = np.arange(num_elements)[:, None] * h + xq[None, :] * h
        self.weights_1d = wq * h
        # per-element 2D weights (same on every element)
        self.weights_2d = np.outer(self.weights_1d, self.weights_1d).ravel()

    @property
    def num_elements_2d(self):
        return self.num_elements ** 2

    def element_points(self, eu: int, ev: int):
        """Quadrature points of element (eu, ev) as an (nq^2, 2) array."""
        pu = self.points_1d[eu]
        pv = self.points_1d[ev]
        U, V = np.meshgrid(pu, pv, indexing="ij")
        return np.column_stack([U.ravel(), V.ravel()])

    def all_points(self):
        """All quadrature points, elements in row-major order, (Ne*nq^2, 2)."""
        n = self.num_elements
        blocks = [
            self.element_points(eu, ev) for eu in range(n) for ev in range(n)
        ]
        return np.vstack(blocks)


class QuasiInterpolant:
    """Coefficient functionals dual to the tensor-product basis.

    Each univariate functional is realized as a weighted sum of point
    values on the global per-element Gauss grid; rows of `wu`/`wv` hold
    the weights (zero outside the support of the corresponding basis
    function).  Tensor functionals are products of univariate ones.
    """

    def __init__(self, space: TensorSplineSpace, n_quad: int):
        self.space = space
        self.n_quad = n_quad
        self.wu, self.points_u = _dual_weights(space.u, n_quad)
        self.wv, self.points_v = _dual_weights(space.v, n_quad)
        U, V = np.meshgrid(self.points_u, self.points_v, indexing="ij")
        self.grid_points = np.column_stack([U.ravel(), V.ravel()])

    def apply_to_values(self, values):
        """Coefficients from values sampled at `grid_points`.

        `values` has shape (npts,) or (npts, D); returns (dim,) or (dim, D).
        """
        values = np.asarray(values, dtype=float)
        mu, mv = len(self.points_u), len(self.points_v)
        scalar = values.ndim == 1
        grid = values.reshape(mu, mv, -1)
        coeffs = np.einsum("aq,qrd,br->abd", self.wu, grid, self.wv)
        coeffs = coeffs.reshape(self.space.dim, -1)
        return coeffs[:, 0] if scalar else coeffs

    def __call__(self, f, zero_boundary: bool = False):
        """Apply to a callable f(points (npts, 2)) -> (npts,) or (npts, D)."""
        coeffs = self.apply_to_values(np.asarray(f(self.grid_points), dtype=float))
        if zero_boundary:
            coeffs = coeffs.copy()
            coeffs[self.space.boundary_indices] = 0.0
        return coeffs

    def functional_support(self, j: int):
        """Points and weights realizing the functional of flat index j."""
        j1, j2 = self.space.pair_index(j)
        iu = np.nonzero(self.wu[int(j1)])[0]
        iv = np.nonzero(self.wv[int(j2)])[0]
        pts = np.column_stack(
            [
                np.repeat(self.points_u[iu], len(iv)),
                np.tile(self.points_v[iv], len(iu)),
            ]
        )
        wts = np.outer(self.wu[int(j1), iu], self.wv[int(j2), iv]).ravel()
        return pts, wts


def _dual_weights(uspace: UnivariateSpline, n_quad: int):
    """Univariate dual functional weights on the per-element Gauss grid.

    Row j of the returned matrix W satisfies sum_q W[j, q] * f(x_q) =
    (local L2 projection of f onto the active basis over supp(b_j))_j,
    which is exactly dual: W @ B(x)^T = identity for basis values B.
    """
    p = uspace.degree
    N = uspace.num_elements
    points, weights, first, values = uspace.element_tables(n_quad, nderiv=0)
    vals = values[:, :, 0, :]  # (N, nq, p+1)

    W = np.zeros((uspace.dim, N * n_quad))
    for j in range(uspace.dim):
        elems = np.nonzero((first <= j) & (j <= first + p))[0]
        active = np.unique(
            np.concatenate([first[e] + np.arange(p + 1) for e in elems])
        )
        na = len(active)
        pos = {g: a for a, g in enumerate(active)}
        gram = np.zeros((na, na))
        rhs_rows = np.zeros((na, N * n_quad))
        for e in elems:
            cols = e * n_quad + np.arange(n_quad)
            loc = [pos[first[e] + a] for a in range(p + 1)]
            be = vals[e]  # (nq, p+1)
            wbe = weights[:, None] * be
            gram_e = be.T @ wbe
            for a, ga in enumerate(loc):
                for b, gb in enumerate(loc):
                    gram[ga, gb] += gram_e[a, b]
                rhs_rows[ga, cols] += wbe[:, a]
        sol = np.linalg.solve(gram, rhs_rows)
        W[j] = sol[pos[j]]
    return W, points.ravel()


def build_quasi_interpolant(space: TensorSplineSpace, n_quad: int | None = None):
    """Quasi-interpolant with the standard (p + 2)-point functional rule."""
    if n_quad is None:
        n_quad = max(space.u.degree, space.v.degree) + 2
    return QuasiInterpolant(space, n_quad)


def apply_quasi_interpolant(Q: QuasiInterpolant, f, zero_boundary: bool = False):
    """Coefficients of Q(f); see QuasiInterpolant.__call__."""
    return Q(f, zero_boundary=zero_boundary)


# Edge conventions for the boundary of the unit square: the running
# coordinate s in [0, 1] traverses each edge, the other coordinate is
# fixed.  Edge 0: v=0, 1: u=1, 2: v=1, 3: u=0.
EDGE_FIXED_COORD = (1, 0, 1, 0)
EDGE_FIXED_VALUE = (0.0, 1.0, 1.0, 0.0)
# outward normal of the parametric domain along each edge
EDGE_OUTWARD = ((0.0, -1.0), (1.0, 0.0), (0.0, 1.0), (-1.0, 0.0))


def edge_points(edge: int, s):
    """Map edge parameters to points of the unit square."""
    s = np.asarray(s, dtype=float)
    pts = np.empty(s.shape + (2,))
    fixed = EDGE_FIXED_COORD[edge]
    pts[..., fixed] = EDGE_FIXED_VALUE[edge]
    pts[..., 1 - fixed] = s
    return pts


class BoundaryTraceSpace:
    """Traces of a tensor spline space on the four edges of the square.

    With open knot vectors only the first/last basis function of the
    fixed direction is nonzero on an edge, so each edge trace is the
    running-direction univariate space; `edge_flat_indices[k]` maps edge
    k's trace DOFs to flat tensor indices.  `rows` numbers the distinct
    boundary control points (corners shared), giving the multiplier /
    trace DOF set of size 4n - 4 for equal factors of dimension n.
    """

    def __init__(self, space: TensorSplineSpace):
        self.space = space
        nu, nv = space.shape
        ju = np.arange(nu)
        jv = np.arange(nv)
        self.edge_spaces = (space.u, space.v, space.u, space.v)
        self.edge_flat_indices = (
            space.flat_index(ju, 0),
            space.flat_index(nu - 1, jv),
            space.flat_index(ju, nv - 1),
            space.flat_index(0, jv),
        )
        self.num_rows = len(space.boundary_indices)
        self._row_of_flat = np.full(space.dim, -1, dtype=int)
        self._row_of_flat[space.boundary_indices] = np.arange(self.num_rows)

    def row_of_flat(self, flat):
        """Boundary row index of boundary flat indices."""
        rows = self._row_of_flat[np.asarray(flat)]
        assert np.all(rows >= 0)
        return rows

    def edge_rows(self, edge: int):
        return self.row_of_flat(self.edge_flat_indices[edge])


def boundary_trace_space(space: TensorSplineSpace) -> BoundaryTraceSpace:
    return BoundaryTraceSpace(space)
