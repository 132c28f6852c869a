"""Reverse-mode differentiation over a recorded computation tape.

The primitive set is the closure of the solver layer maps and the squared
error loss: matvec, rmatvec (transpose matvec), add, sub, scale, prox_l1,
sq_norm, dot, clip_inf.  Primitives accept a mix of :class:`Node` objects
and plain numpy arrays / floats; constants are kept out of the graph, so
gradients are only ever tracked for values registered with
:meth:`Tape.leaf`.

Vector primitives also accept column-stacked batches (shape ``(n, b)``):
each column is an independent sample, and ``sq_norm`` / ``dot`` reduce over
every entry.  This makes a mini-batch loss a single scalar node whose
leaf gradients are the per-column gradients.

A tape is single-writer while recording.  ``backward`` and ``replay`` are
read-only and deterministic: identical tapes produce bit-identical values
and gradients.
"""

from __future__ import annotations

import numpy as np

from .linalg import soft_threshold

__all__ = [
    "GradResult",
    "Node",
    "ShapeMismatchError",
    "Tape",
    "add",
    "clip_inf",
    "dot",
    "grad_check",
    "matvec",
    "prox_l1",
    "rmatvec",
    "scale",
    "sq_norm",
    "sub",
]


class ShapeMismatchError(ValueError):
    """Incompatible operand shapes for a tape primitive."""


def _shape(v):
    return v.shape if isinstance(v, np.ndarray) else ()


def _mismatch(op: str, *operands) -> ShapeMismatchError:
    shapes = ", ".join(str(_shape(v)) for v in operands)
    return ShapeMismatchError(f"{op}: incompatible operand shapes {shapes}")


# ---------------------------------------------------------------------------
# forward kernels (shared verbatim by eager evaluation, recording and replay)
# ---------------------------------------------------------------------------

def _k_matvec(a, v):
    if a.ndim != 2 or v.ndim not in (1, 2) or a.shape[1] != v.shape[0]:
        raise _mismatch("matvec", a, v)
    return a @ v


def _k_rmatvec(a, v):
    if a.ndim != 2 or v.ndim not in (1, 2) or a.shape[0] != v.shape[0]:
        raise _mismatch("rmatvec", a, v)
    return a.T @ v


def _k_add(a, b):
    return _add_like(a, b, np.add)


def _k_sub(a, b):
    return _add_like(a, b, np.subtract)


def _add_like(a, b, ufunc):
    sa, sb = _shape(a), _shape(b)
    if sa == sb:
        return ufunc(a, b)
    # broadcast a shared (n,) vector against (n, b) columns
    if len(sa) == 1 and len(sb) == 2 and sa[0] == sb[0]:
        return ufunc(a[:, None], b)
    if len(sa) == 2 and len(sb) == 1 and sa[0] == sb[0]:
        return ufunc(a, b[:, None])
    raise _mismatch(ufunc.__name__, a, b)


def _k_scale(c, v):
    if _shape(c) != ():
        raise _mismatch("scale", c, v)
    return c * v


def _k_prox_l1(u, tau):
    if _shape(tau) != ():
        raise _mismatch("prox_l1", u, tau)
    if tau < 0:
        raise ValueError(f"prox_l1 threshold must be non-negative, got {tau}")
    return soft_threshold(u, tau)


def _k_sq_norm(v):
    r = v.ravel()
    return float(np.dot(r, r))


def _k_dot(a, b):
    if _shape(a) != _shape(b):
        raise _mismatch("dot", a, b)
    return float(np.dot(a.ravel(), b.ravel()))


def _k_clip_inf(v, eps):
    if _shape(eps) != ():
        raise _mismatch("clip_inf", v, eps)
    if eps < 0:
        raise ValueError(f"clip_inf threshold must be non-negative, got {eps}")
    return np.clip(v, -eps, eps)


_KERNELS = {
    "matvec": _k_matvec,
    "rmatvec": _k_rmatvec,
    "add": _k_add,
    "sub": _k_sub,
    "scale": _k_scale,
    "prox_l1": _k_prox_l1,
    "sq_norm": _k_sq_norm,
    "dot": _k_dot,
    "clip_inf": _k_clip_inf,
}


class Node:
    """One recorded value: a leaf or the result of a primitive op."""

    __slots__ = ("tape", "index", "op", "args", "value")

    def __init__(self, tape, index, op, args, value):
        self.tape = tape
        self.index = index
        self.op = op          # "leaf" or a primitive name
        self.args = args      # tuple of Node | ndarray | float
        self.value = value

    def __repr__(self):
        return f"Node({self.index}, {self.op}, shape={_shape(self.value)})"


class GradResult(dict):
    """Maps each leaf Node to its gradient (same shape as the leaf)."""


class Tape:
    """Append-only record of a forward computation.

    Nodes are topologically ordered by construction; replaying the tape
    recomputes every recorded value bit-exactly.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self.leaves: list[Node] = []

    def __len__(self):
        return len(self.nodes)

    def leaf(self, value) -> Node:
        """Register a differentiable input (vector, matrix, or scalar)."""
        if isinstance(value, (int, float)):
            value = float(value)
        else:
            value = np.asarray(value, dtype=np.float64)
        node = Node(self, len(self.nodes), "leaf", (), value)
        self.nodes.append(node)
        self.leaves.append(node)
        return node

    def record(self, op: str, *args) -> Node:
        """Compute ``op`` on the given arguments and append the result.

        Arguments may be Nodes of this tape or plain constants.  The
        forward value is computed immediately and cached on the node.
        """
        kernel = _KERNELS[op]
        vals = []
        for arg in args:
            if isinstance(arg, Node):
                if arg.tape is not self:
                    raise ValueError(f"{op}: argument belongs to a different tape")
                vals.append(arg.value)
            else:
                vals.append(arg)
        value = kernel(*vals)
        node = Node(self, len(self.nodes), op, args, value)
        self.nodes.append(node)
        return node

    # -- reverse sweep ------------------------------------------------------

    def backward(self, output: Node) -> GradResult:
        """Exact reverse-mode gradients of a scalar ``output`` at all leaves.

        The soft-threshold backward uses the factor 1{|u| > tau} (zero at
        the kink), and d/dtau is -sign(u) on the active set.  Gradients of
        untouched leaves are exact zeros of the leaf shape.
        """
        if output.tape is not self:
            raise ValueError("output node belongs to a different tape")
        if _shape(output.value) != ():
            raise ValueError(
                f"backward requires a scalar output node, got shape {_shape(output.value)}"
            )
        grads: list = [None] * len(self.nodes)
        grads[output.index] = 1.0
        for node in reversed(self.nodes):
            g = grads[node.index]
            if g is None or node.op == "leaf":
                continue
            _BACKWARD[node.op](node, g, grads)
        result = GradResult()
        for leaf in self.leaves:
            g = grads[leaf.index]
            if g is None:
                g = 0.0 if isinstance(leaf.value, float) else np.zeros_like(leaf.value)
            result[leaf] = g
        return result

    # -- replay -------------------------------------------------------------

    def replay(self, overrides: dict | None = None) -> list:
        """Recompute every node value in order; returns the value list.

        ``overrides`` maps leaf nodes to replacement values.  Cached values
        on the tape are left untouched, so a replay never perturbs later
        backward passes.
        """
        values: list = [None] * len(self.nodes)
        for node in self.nodes:
            if node.op == "leaf":
                if overrides is not None and node in overrides:
                    v = overrides[node]
                    values[node.index] = (
                        float(v) if isinstance(node.value, float) else np.asarray(v, dtype=np.float64)
                    )
                else:
                    values[node.index] = node.value
                continue
            vals = [
                values[a.index] if isinstance(a, Node) else a for a in node.args
            ]
            values[node.index] = _KERNELS[node.op](*vals)
        return values


# ---------------------------------------------------------------------------
# backward rules
# ---------------------------------------------------------------------------

def _acc(grads, arg, val):
    if not isinstance(arg, Node):
        return
    i = arg.index
    grads[i] = val if grads[i] is None else grads[i] + val


def _unbroadcast(parent_val, g):
    # adjoint of broadcasting a (n,) parent across (n, b) columns
    if _shape(parent_val) != _shape(g) and getattr(g, "ndim", 0) == 2:
        return g.sum(axis=1)
    return g


def _bw_matvec(node, g, grads):
    a, v = node.args
    a_val = a.value if isinstance(a, Node) else a
    v_val = v.value if isinstance(v, Node) else v
    if isinstance(v, Node):
        _acc(grads, v, a_val.T @ g)
    if isinstance(a, Node):
        _acc(grads, a, np.outer(g, v_val) if g.ndim == 1 else g @ v_val.T)


def _bw_rmatvec(node, g, grads):
    a, v = node.args
    a_val = a.value if isinstance(a, Node) else a
    v_val = v.value if isinstance(v, Node) else v
    if isinstance(v, Node):
        _acc(grads, v, a_val @ g)
    if isinstance(a, Node):
        _acc(grads, a, np.outer(v_val, g) if g.ndim == 1 else v_val @ g.T)


def _bw_add(node, g, grads):
    a, b = node.args
    if isinstance(a, Node):
        _acc(grads, a, _unbroadcast(a.value, g))
    if isinstance(b, Node):
        _acc(grads, b, _unbroadcast(b.value, g))


def _bw_sub(node, g, grads):
    a, b = node.args
    if isinstance(a, Node):
        _acc(grads, a, _unbroadcast(a.value, g))
    if isinstance(b, Node):
        _acc(grads, b, _unbroadcast(b.value, -g))


def _bw_scale(node, g, grads):
    c, v = node.args
    c_val = c.value if isinstance(c, Node) else c
    v_val = v.value if isinstance(v, Node) else v
    if isinstance(v, Node):
        _acc(grads, v, c_val * g)
    if isinstance(c, Node):
        _acc(grads, c, float(np.sum(g * v_val)))


def _bw_prox_l1(node, g, grads):
    u, tau = node.args
    u_val = u.value if isinstance(u, Node) else u
    tau_val = tau.value if isinstance(tau, Node) else tau
    active = np.abs(u_val) > tau_val
    if isinstance(u, Node):
        _acc(grads, u, g * active)
    if isinstance(tau, Node):
        _acc(grads, tau, float(-np.sum(np.sign(u_val) * g * active)))


def _bw_sq_norm(node, g, grads):
    (v,) = node.args
    if isinstance(v, Node):
        _acc(grads, v, (2.0 * g) * v.value)


def _bw_dot(node, g, grads):
    a, b = node.args
    a_val = a.value if isinstance(a, Node) else a
    b_val = b.value if isinstance(b, Node) else b
    if isinstance(a, Node):
        _acc(grads, a, g * b_val)
    if isinstance(b, Node):
        _acc(grads, b, g * a_val)


def _bw_clip_inf(node, g, grads):
    v, eps = node.args
    v_val = v.value if isinstance(v, Node) else v
    eps_val = eps.value if isinstance(eps, Node) else eps
    if isinstance(v, Node):
        # flat outside the band; 0 at the boundary, matching the prox kink rule
        _acc(grads, v, g * (np.abs(v_val) < eps_val))


_BACKWARD = {
    "matvec": _bw_matvec,
    "rmatvec": _bw_rmatvec,
    "add": _bw_add,
    "sub": _bw_sub,
    "scale": _bw_scale,
    "prox_l1": _bw_prox_l1,
    "sq_norm": _bw_sq_norm,
    "dot": _bw_dot,
    "clip_inf": _bw_clip_inf,
}


# ---------------------------------------------------------------------------
# dispatching primitives: Node arguments record, plain arguments evaluate
# ---------------------------------------------------------------------------

def _apply(op, *args):
    tape = None
    for arg in args:
        if isinstance(arg, Node):
            tape = arg.tape
            break
    if tape is None:
        return _KERNELS[op](*args)
    return tape.record(op, *args)


def matvec(a, v):
    """Matrix-vector product A v (columns of a 2-D v are independent)."""
    return _apply("matvec", a, v)


def rmatvec(a, v):
    """Transposed matrix-vector product A^T v."""
    return _apply("rmatvec", a, v)


def add(a, b):
    return _apply("add", a, b)


def sub(a, b):
    return _apply("sub", a, b)


def scale(c, v):
    """Scalar times vector/matrix/scalar."""
    return _apply("scale", c, v)


def prox_l1(u, tau):
    """Soft threshold; differentiable in both the input and the threshold."""
    return _apply("prox_l1", u, tau)


def sq_norm(v):
    """Sum of squared entries (reduces batches to one scalar)."""
    return _apply("sq_norm", v)


def dot(a, b):
    return _apply("dot", a, b)


def clip_inf(v, eps):
    return _apply("clip_inf", v, eps)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def grad_check(tape: Tape, output: Node, leaf: Node, h: float = 1e-6) -> float:
    """Max relative error of backward() against central finite differences.

    Perturbs each coordinate of ``leaf`` by ``+-h`` via tape replay and
    compares the two-sided difference quotient against the reverse-mode
    gradient.  Falls back to absolute error when both magnitudes are below
    1e-8.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    analytic = tape.backward(output)[leaf]
    out_ix = output.index

    def replay_at(value):
        return tape.replay(overrides={leaf: value})[out_ix]

    base = leaf.value
    if isinstance(base, float):
        numeric = (replay_at(base + h) - replay_at(base - h)) / (2.0 * h)
        return _rel_err(float(analytic), numeric)
    worst = 0.0
    flat = base.ravel()
    for i in range(flat.size):
        bumped = base.copy().ravel()
        bumped[i] = flat[i] + h
        f_plus = replay_at(bumped.reshape(base.shape))
        bumped[i] = flat[i] - h
        f_minus = replay_at(bumped.reshape(base.shape))
        numeric = (f_plus - f_minus) / (2.0 * h)
        worst = max(worst, _rel_err(float(analytic.ravel()[i]), numeric))
    return worst


def _rel_err(a: float, b: float) -> float:
    diff = abs(a - b)
    denom = max(abs(a), abs(b))
    if denom < 1e-8:
        return diff
    return diff / denom
