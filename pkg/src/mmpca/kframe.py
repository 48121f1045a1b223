"""k-frames parametrized by Givens rotation angles.

A k-frame is a p x k matrix with orthonormal columns. Any k-frame can be
written as a product of ``m = p*k - k*(k+1)/2`` plane rotations applied to
the first k columns of the identity.

Angles are stored in a p x k array ``xi`` whose strictly lower-triangular
part holds the angle for the rotation in the plane of coordinates (b, a),
a > b. Entries on or above the diagonal are ignored.

Factor order is fixed throughout the package: with b = 0..k-1 as the outer
index and a = b+1..p-1 as the inner one, the ordered list of factors is
R_1, R_2, ..., R_m and

    V(xi) = R_1 R_2 ... R_m I_pk.

The forward map therefore starts from I_pk and applies R_m first. The
inverse undoes the factors left to right by Givens annihilation, and the
gradient sweep walks the same order with the adjoint.
"""
import numpy as np
from numba import njit

__all__ = [
    "n_angles",
    "angle_indices",
    "angles_to_vector",
    "vector_to_angles",
    "givens_matrix",
    "givens_derivative",
    "build_kframe",
    "frame_from_vector",
    "frame_vjp",
    "factor_split",
    "orthogonal_complement",
    "invert_kframe",
    "wrap_angles",
    "KFrameError",
]


class KFrameError(ValueError):
    """Raised when a matrix cannot be represented as a k-frame."""


def n_angles(p, k):
    """Number of free angles of a p-dimensional k-frame."""
    if k < 1 or p < k:
        raise ValueError(f"need 1 <= k <= p, got p={p}, k={k}")
    return p * k - k * (k + 1) // 2


def angle_indices(p, k):
    """Row and column indices of the stored angles in canonical order."""
    n_angles(p, k)
    rows, cols = [], []
    for b in range(k):
        for a in range(b + 1, p):
            rows.append(a)
            cols.append(b)
    return np.array(rows, dtype=np.intp), np.array(cols, dtype=np.intp)


def angles_to_vector(xi):
    xi = np.asarray(xi, dtype=float)
    rows, cols = angle_indices(*xi.shape)
    return xi[rows, cols].copy()


def vector_to_angles(theta, p, k):
    theta = np.asarray(theta, dtype=float)
    rows, cols = angle_indices(p, k)
    if theta.shape != (len(rows),):
        raise ValueError(f"expected {len(rows)} angles, got shape {theta.shape}")
    xi = np.zeros((p, k))
    xi[rows, cols] = theta
    return xi


def wrap_angles(xi):
    """Angles mapped to (-pi, pi], for display only."""
    xi = np.asarray(xi, dtype=float)
    out = np.pi - np.mod(np.pi - xi, 2 * np.pi)
    return out


def givens_matrix(theta, a, b, p):
    """Dense p x p rotation in the plane (b, a), b < a (0-based)."""
    if not 0 <= b < a < p:
        raise IndexError(f"need 0 <= b < a < p, got a={a}, b={b}, p={p}")
    R = np.eye(p)
    c, s = np.cos(theta), np.sin(theta)
    R[b, b] = c
    R[b, a] = -s
    R[a, b] = s
    R[a, a] = c
    return R


def givens_derivative(theta, a, b, p):
    """Derivative of :func:`givens_matrix` with respect to ``theta``.

    Only the four entries in rows/columns {a, b} are nonzero.
    """
    if not 0 <= b < a < p:
        raise IndexError(f"need 0 <= b < a < p, got a={a}, b={b}, p={p}")
    dR = np.zeros((p, p))
    c, s = np.cos(theta), np.sin(theta)
    dR[b, b] = -s
    dR[b, a] = -c
    dR[a, b] = c
    dR[a, a] = -s
    return dR


@njit(cache=True)
def _forward(theta, p, k):
    V = np.zeros((p, k))
    for j in range(k):
        V[j, j] = 1.0
    t = theta.shape[0] - 1
    for b in range(k - 1, -1, -1):
        for a in range(p - 1, b, -1):
            c = np.cos(theta[t])
            s = np.sin(theta[t])
            # rows b..a of V are the only ones touched; columns < b are still zero
            for j in range(b, k):
                vb = V[b, j]
                va = V[a, j]
                V[b, j] = c * vb - s * va
                V[a, j] = s * vb + c * va
            t -= 1
    return V


@njit(cache=True)
def _vjp(theta, V, G):
    p, k = V.shape
    S = V.copy()
    A = G.copy()
    out = np.zeros(theta.shape[0])
    t = 0
    for b in range(k):
        for a in range(b + 1, p):
            c = np.cos(theta[t])
            s = np.sin(theta[t])
            acc = 0.0
            for j in range(k):
                # S <- R^T S recovers the suffix-applied frame
                sb = S[b, j]
                sa = S[a, j]
                nb = c * sb + s * sa
                na = -s * sb + c * sa
                S[b, j] = nb
                S[a, j] = na
                gb = A[b, j]
                ga = A[a, j]
                acc += gb * (-s * nb - c * na) + ga * (c * nb - s * na)
                A[b, j] = c * gb + s * ga
                A[a, j] = -s * gb + c * ga
            out[t] = acc
            t += 1
    return out


def frame_from_vector(theta, p, k):
    """Forward map from a flat canonical-order angle vector."""
    theta = np.ascontiguousarray(theta, dtype=float)
    if theta.shape != (n_angles(p, k),):
        raise ValueError(f"expected {n_angles(p, k)} angles, got shape {theta.shape}")
    return _forward(theta, p, k)


def build_kframe(xi):
    """Return V(xi), the p x k frame given by the angle array ``xi``.

    Each rotation is applied as a two-row update; no p x p matrix is formed.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.ndim != 2:
        raise ValueError("xi must be a p x k array")
    p, k = xi.shape
    theta = angles_to_vector(xi)
    if not np.all(np.isfinite(theta)):
        raise ValueError("angles must be finite")
    return _forward(theta, p, k)


def frame_vjp(theta, V, G):
    """Gradient of ``<G, V(theta)>`` with respect to every angle.

    ``V`` must be the frame produced by ``theta``. One sweep over the factor
    order gives all m partial derivatives in O(m k) work.
    """
    theta = np.ascontiguousarray(theta, dtype=float)
    return _vjp(theta, np.ascontiguousarray(V, dtype=float), np.ascontiguousarray(G, dtype=float))


def factor_split(xi, a, b):
    """Dense (A, R, B) with ``A @ R @ B == V(xi)`` around the factor (a, b).

    ``A`` is the product of the factors preceding R_ab, ``B`` the factors
    following it applied to I_pk. Intended for checking and small problems.
    """
    xi = np.asarray(xi, dtype=float)
    p, k = xi.shape
    if not (0 <= b < k and b < a < p):
        raise IndexError(f"({a}, {b}) is not a stored angle of a {p}x{k} frame")
    rows, cols = angle_indices(p, k)
    pos = int(np.flatnonzero((rows == a) & (cols == b))[0])
    A = np.eye(p)
    for r, c in zip(rows[:pos], cols[:pos]):
        A = A @ givens_matrix(xi[r, c], r, c, p)
    B = np.eye(p)[:, :k]
    for r, c in zip(rows[pos + 1:][::-1], cols[pos + 1:][::-1]):
        B = givens_matrix(xi[r, c], r, c, p) @ B
    return A, givens_matrix(xi[a, b], a, b, p), B


def orthogonal_complement(V):
    """Orthonormal basis of the complement of span(V), shape p x (p-k)."""
    V = np.asarray(V, dtype=float)
    p, k = V.shape
    Q, _ = np.linalg.qr(V, mode="complete")
    C = Q[:, k:]
    # one refinement pass against V keeps [V | C] orthogonal to machine precision
    C = C - V @ (V.T @ C)
    C, _ = np.linalg.qr(C)
    return C


def _rotation_angles(U, k):
    """Angles of the first k column blocks of the square matrix U.

    Sub-diagonal entries are annihilated in canonical factor order; the
    angles of later columns are never needed for a k-frame.
    """
    W = np.array(U, dtype=float)
    p = W.shape[0]
    xi = np.zeros((p, k))
    for b in range(k):
        for a in range(b + 1, p):
            theta = np.arctan2(W[a, b], W[b, b])
            c, s = np.cos(theta), np.sin(theta)
            wb = W[b].copy()
            wa = W[a].copy()
            W[b] = c * wb + s * wa
            W[a] = -s * wb + c * wa
            xi[a, b] = theta
    return xi


def invert_kframe(V, atol=1e-8):
    """Angles ``xi`` with ``build_kframe(xi) == V`` within ``atol``.

    The frame is completed to a square orthogonal matrix with its
    orthogonal complement, and the complement with its last column negated,
    and the candidate whose angles reproduce ``V`` is returned.

    Raises
    ------
    KFrameError
        If neither candidate reproduces ``V``. For k == p this happens when
        det(V) = -1, since such a matrix is not a rotation.
    """
    V = np.asarray(V, dtype=float)
    if V.ndim != 2:
        raise ValueError("V must be a p x k matrix")
    p, k = V.shape
    n_angles(p, k)
    gram_err = np.max(np.abs(V.T @ V - np.eye(k)))
    if gram_err > 1e-6:
        raise KFrameError(f"columns are not orthonormal (max |V'V - I| = {gram_err:.2e})")
    C = orthogonal_complement(V)
    candidates = [C]
    if C.shape[1] > 0:
        C_neg = C.copy()
        C_neg[:, -1] = -C_neg[:, -1]
        candidates.append(C_neg)
    best_err = np.inf
    for comp in candidates:
        xi = _rotation_angles(np.hstack([V, comp]), k)
        err = np.max(np.abs(build_kframe(xi) - V))
        if err <= atol:
            return xi
        best_err = min(best_err, err)
    raise KFrameError(f"no candidate reproduces the frame (best error {best_err:.2e})")
