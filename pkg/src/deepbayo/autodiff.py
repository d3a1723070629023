"""Reverse-mode automatic differentiation with second-order forward jets.

The graph is a flat tape of nodes created in evaluation order. Values are
numpy float64 arrays so a single node can carry a whole batch of evaluation
points at once; a plain Python number is stored as a 0-d array and behaves
exactly like a scalar node. Second-order directional derivatives are
propagated forward as `Jet2` triples whose components are themselves tape
nodes, so `backward` on any jet component yields parameter gradients of
first- and second-order input derivatives (forward-over-reverse).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DomainError",
    "GradCheckReport",
    "GradientVector",
    "Jet2",
    "Node",
    "Parameter",
    "Tape",
    "backward",
    "grad_check",
    "jet_eval",
    "laplacian",
]


class DomainError(ValueError):
    """Raised when an elementary op is applied outside its domain."""


def _as_value(x):
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Parameter:
    """A named trainable array. Owns the persistent value across graphs."""

    __slots__ = ("name", "value")

    def __init__(self, name, value):
        self.name = name
        self.value = _as_value(value).copy()

    @property
    def size(self):
        return self.value.size

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


class Node:
    """One vertex of the computation graph.

    `parents` holds the (at most few) direct inputs, `_vjp` maps the
    node's adjoint to adjoint contributions for each parent. Nodes that
    cannot reach a trainable parameter carry `requires_grad = False` and
    are skipped by the backward sweep.
    """

    __slots__ = ("tape", "idx", "value", "op", "parents", "_vjp",
                 "requires_grad", "adjoint")

    # keep numpy from broadcasting over Node objects; use reflected ops
    __array_ufunc__ = None

    def __init__(self, tape, value, op, parents, vjp, requires_grad):
        self.tape = tape
        self.idx = len(tape.nodes)
        self.value = value
        self.op = op
        self.parents = parents
        self._vjp = vjp
        self.requires_grad = requires_grad
        self.adjoint = None
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node(op={self.op}, value={self.value})"

    # operator sugar; raw numbers / arrays are treated as constants,
    # mixed Node/Jet2 expressions defer to the jet's reflected operator
    def __add__(self, other):
        if isinstance(other, Jet2):
            return NotImplemented
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Jet2):
            return NotImplemented
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if isinstance(other, Jet2):
            return NotImplemented
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet2):
            return NotImplemented
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, k):
        return pow_int(self, k)


class Tape:
    """Owns one computation graph; one tape per loss evaluation."""

    def __init__(self):
        self.nodes = []
        self._watched = {}  # id(Parameter) -> (Parameter, Node)

    def constant(self, value):
        return Node(self, _as_value(value), "const", (), None, False)

    def input(self, value):
        """A differentiable leaf that is not a trainable parameter."""
        return Node(self, _as_value(value), "input", (), None, True)

    def watch(self, param):
        """Bind a Parameter into this graph (memoized per tape)."""
        key = id(param)
        hit = self._watched.get(key)
        if hit is not None:
            return hit[1]
        node = Node(self, param.value, "param", (), None, True)
        self._watched[key] = (param, node)
        return node

    @property
    def watched(self):
        return [p for p, _ in self._watched.values()]


def _lift(x, other):
    """Return (value, node_or_none) for an operand that may be a constant."""
    if isinstance(x, Node):
        return x.value, x
    return _as_value(x), None


def _binary(op, a, b, out, vjp_a, vjp_b):
    av, an = _lift(a, b)
    bv, bn = _lift(b, a)
    tape = an.tape if an is not None else bn.tape
    parents = []
    vjps = []
    rg = False
    if an is not None and an.requires_grad:
        parents.append(an)
        vjps.append(vjp_a)
        rg = True
    if bn is not None and bn.requires_grad:
        parents.append(bn)
        vjps.append(vjp_b)
        rg = True
    if not rg:
        return Node(tape, out, op, (), None, False)

    def _vjp(adj):
        return [(p, _unbroadcast(f(adj), p.value.shape))
                for p, f in zip(parents, vjps)]

    return Node(tape, out, op, tuple(parents), _vjp, True)


def _unary(op, a, out, dfdx):
    if not a.requires_grad:
        return Node(a.tape, out, op, (), None, False)

    def _vjp(adj):
        return [(a, _unbroadcast(adj * dfdx, a.value.shape))]

    return Node(a.tape, out, op, (a,), _vjp, True)


def add(a, b):
    av, _ = _lift(a, b)
    bv, _ = _lift(b, a)
    return _binary("add", a, b, av + bv, lambda g: g, lambda g: g)


def sub(a, b):
    av, _ = _lift(a, b)
    bv, _ = _lift(b, a)
    return _binary("sub", a, b, av - bv, lambda g: g, lambda g: -g)


def mul(a, b):
    av, _ = _lift(a, b)
    bv, _ = _lift(b, a)
    return _binary("mul", a, b, av * bv, lambda g: g * bv, lambda g: g * av)


def div(a, b):
    av, _ = _lift(a, b)
    bv, _ = _lift(b, a)
    if np.any(bv == 0.0):
        raise DomainError("division by zero")
    return _binary("div", a, b, av / bv,
                   lambda g: g / bv,
                   lambda g: -g * av / (bv * bv))


def neg(a):
    return _unary("neg", a, -a.value, -1.0)


def pow_int(a, k):
    if not isinstance(k, (int, np.integer)):
        raise DomainError(f"pow exponent must be an integer, got {k!r}")
    k = int(k)
    if k < 0 and np.any(a.value == 0.0):
        raise DomainError("negative integer power of zero")
    out = a.value ** k
    return _unary("pow", a, out, k * a.value ** (k - 1) if k != 0 else 0.0)


def square(a):
    return _unary("square", a, a.value * a.value, 2.0 * a.value)


def exp(a):
    out = np.exp(a.value)
    return _unary("exp", a, out, out)


def log(a):
    if np.any(a.value <= 0.0):
        raise DomainError("log of non-positive value")
    return _unary("log", a, np.log(a.value), 1.0 / a.value)


def sin(a):
    return _unary("sin", a, np.sin(a.value), np.cos(a.value))


def cos(a):
    return _unary("cos", a, np.cos(a.value), -np.sin(a.value))


def tanh(a):
    out = np.tanh(a.value)
    return _unary("tanh", a, out, 1.0 - out * out)


def absolute(a):
    # subgradient 0 at the kink; only used for the log-variance penalty
    return _unary("abs", a, np.abs(a.value), np.sign(a.value))


def matmul(a, b):
    """Matrix product of two nodes (or node and constant array)."""
    av, an = _lift(a, b)
    bv, bn = _lift(b, a)
    out = av @ bv
    return _binary("matmul", a, b, out,
                   lambda g: g @ bv.swapaxes(-1, -2),
                   lambda g: av.swapaxes(-1, -2) @ g)


def mean(a, axis=None):
    out = a.value.mean(axis=axis)
    n = a.value.size if axis is None else a.value.shape[axis]
    if not a.requires_grad:
        return Node(a.tape, _as_value(out), "mean", (), None, False)

    def _vjp(adj):
        g = np.asarray(adj, dtype=np.float64)
        if axis is not None:
            g = np.expand_dims(g, axis)
        return [(a, np.broadcast_to(g, a.value.shape) / n)]

    return Node(a.tape, _as_value(out), "mean", (a,), _vjp, True)


def total(a, axis=None):
    out = a.value.sum(axis=axis)
    if not a.requires_grad:
        return Node(a.tape, _as_value(out), "sum", (), None, False)

    def _vjp(adj):
        g = np.asarray(adj, dtype=np.float64)
        if axis is not None:
            g = np.expand_dims(g, axis)
        return [(a, np.broadcast_to(g, a.value.shape).copy())]

    return Node(a.tape, _as_value(out), "sum", (a,), _vjp, True)


def colstack(cols):
    """Stack 1-d nodes of equal length into an (n, d) node."""
    values = [c.value for c in cols]
    out = np.column_stack(values)
    tape = cols[0].tape
    parents = [c for c in cols if c.requires_grad]
    if not parents:
        return Node(tape, out, "colstack", (), None, False)

    def _vjp(adj):
        return [(c, adj[:, j]) for j, c in enumerate(cols) if c.requires_grad]

    return Node(tape, out, "colstack", tuple(parents), _vjp, True)


def jet_colstack(jets):
    """Stack per-coordinate jets into one (n, d) jet."""
    return Jet2(colstack([j.v for j in jets]),
                colstack([j.d for j in jets]),
                colstack([j.dd for j in jets]))


def narrow(a, axis, start, length):
    """Contiguous slice along one axis."""
    sl = [slice(None)] * a.value.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)
    out = a.value[sl]
    if not a.requires_grad:
        return Node(a.tape, out, "narrow", (), None, False)

    def _vjp(adj):
        g = np.zeros_like(a.value)
        g[sl] = adj
        return [(a, g)]

    return Node(a.tape, out, "narrow", (a,), _vjp, True)


class GradientVector:
    """Partial derivatives of one scalar root, keyed by Parameter."""

    def __init__(self, grads):
        self._grads = grads  # dict id(Parameter) -> (Parameter, ndarray)

    def of(self, param):
        return self._grads[id(param)][1]

    def params(self):
        return [p for p, _ in self._grads.values()]

    def items(self):
        return [(p, g) for p, g in self._grads.values()]

    @property
    def n_entries(self):
        return sum(g.size for _, g in self._grads.values())

    def scale(self, c):
        return GradientVector({k: (p, g * c) for k, (p, g) in self._grads.items()})


def backward(root):
    """Reverse sweep from a scalar root; returns watched-parameter grads."""
    if root.value.size != 1:
        raise ValueError(f"backward root must be scalar, got shape {root.shape}")
    tape = root.tape
    root.adjoint = np.ones_like(root.value)
    for node in reversed(tape.nodes[: root.idx + 1]):
        adj = node.adjoint
        if adj is None or node._vjp is None:
            continue
        for parent, g in node._vjp(adj):
            # adjoints are never mutated in place, so views may alias freely
            parent.adjoint = g if parent.adjoint is None else parent.adjoint + g
    grads = {}
    for key, (param, node) in tape._watched.items():
        g = node.adjoint
        if g is None:
            g = np.zeros_like(param.value)
        grads[key] = (param, np.asarray(g, dtype=np.float64))
    return GradientVector(grads)


# ---------------------------------------------------------------------------
# second-order forward jets
# ---------------------------------------------------------------------------

def _jlift(x):
    """Treat a Node or raw number as a direction-constant jet component."""
    if isinstance(x, Jet2):
        return x
    return Jet2(x, 0.0, 0.0)


@dataclass
class Jet2:
    """Directional second-order Taylor triple (value, d/ds, d2/ds2).

    Components may be Nodes (graph-recorded, differentiable w.r.t. model
    parameters) or plain values when no parameter is involved.
    """

    v: object
    d: object
    dd: object

    __array_ufunc__ = None

    def _chain(self, fv, d1, d2):
        # g(u): d = g'(u) u', dd = g''(u) u'^2 + g'(u) u''
        return Jet2(fv, d1 * self.d, d2 * self.d * self.d + d1 * self.dd)

    def __add__(self, other):
        o = _jlift(other)
        return Jet2(self.v + o.v, self.d + o.d, self.dd + o.dd)

    __radd__ = __add__

    def __sub__(self, other):
        o = _jlift(other)
        return Jet2(self.v - o.v, self.d - o.d, self.dd - o.dd)

    def __rsub__(self, other):
        o = _jlift(other)
        return Jet2(o.v - self.v, o.d - self.d, o.dd - self.dd)

    def __mul__(self, other):
        o = _jlift(other)
        return Jet2(self.v * o.v,
                    self.d * o.v + self.v * o.d,
                    self.dd * o.v + 2.0 * (self.d * o.d) + self.v * o.dd)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = _jlift(other)
        return self * o.reciprocal()

    def __rtruediv__(self, other):
        return _jlift(other) * self.reciprocal()

    def __neg__(self):
        return Jet2(-self.v, -self.d, -self.dd)

    def __pow__(self, k):
        if not isinstance(k, (int, np.integer)):
            raise DomainError("jet pow exponent must be an integer")
        k = int(k)
        if k == 0:
            return Jet2(self.v ** 0, 0.0 * self.d, 0.0 * self.dd)
        if k == 1:
            return self
        p = _jpow
        return self._chain(p(self.v, k), k * p(self.v, k - 1),
                           k * (k - 1) * p(self.v, k - 2))

    def reciprocal(self):
        inv = 1.0 / self.v
        return self._chain(inv, -inv * inv, 2.0 * inv * inv * inv)

    def exp(self):
        e = _apply1(exp, np.exp, self.v)
        return self._chain(e, e, e)

    def log(self):
        inv = 1.0 / self.v
        return self._chain(_apply1(log, np.log, self.v), inv, -inv * inv)

    def sin(self):
        s = _apply1(sin, np.sin, self.v)
        c = _apply1(cos, np.cos, self.v)
        return self._chain(s, c, -s)

    def cos(self):
        s = _apply1(sin, np.sin, self.v)
        c = _apply1(cos, np.cos, self.v)
        return self._chain(c, -s, -c)

    def tanh(self):
        t = _apply1(tanh, np.tanh, self.v)
        sech2 = 1.0 - t * t
        return self._chain(t, sech2, -2.0 * t * sech2)

    def square(self):
        return Jet2(_apply1(square, np.square, self.v),
                    2.0 * (self.v * self.d),
                    2.0 * (self.d * self.d) + 2.0 * (self.v * self.dd))

    def matmul(self, w):
        # linear map: jets pass through componentwise
        return Jet2(matmul(self.v, w), matmul(self.d, w), matmul(self.dd, w))


def _jpow(x, k):
    if k == 0:
        return np.ones_like(x.value) if isinstance(x, Node) else _as_value(x) ** 0
    return pow_int(x, k) if isinstance(x, Node) else _as_value(x) ** k


def _apply1(node_fn, np_fn, x):
    return node_fn(x) if isinstance(x, Node) else np_fn(_as_value(x))


# generic elementwise functions usable on Node, Jet2, or plain arrays
def _generic(node_fn, np_fn, method):
    def fn(x):
        if isinstance(x, Jet2):
            return getattr(x, method)()
        if isinstance(x, Node):
            return node_fn(x)
        return np_fn(_as_value(x))

    fn.__name__ = f"g_{method}"
    return fn


g_exp = _generic(exp, np.exp, "exp")
g_log = _generic(log, np.log, "log")
g_sin = _generic(sin, np.sin, "sin")
g_cos = _generic(cos, np.cos, "cos")
g_tanh = _generic(tanh, np.tanh, "tanh")
g_square = _generic(square, np.square, "square")


def jet_eval(f, point, direction, tape=None):
    """Evaluate f with second-order jets seeded along `direction`.

    `f` receives a list of per-coordinate jets and must be built from the
    supported elementary operations. Returns a Jet2 whose components are
    (f(x), grad f . dir, dir^T Hf dir).
    """
    direction = _as_value(direction)
    nrm = float(np.sqrt(np.sum(direction * direction)))
    if nrm == 0.0:
        raise DomainError("jet direction must be nonzero")
    if abs(nrm - 1.0) > 1e-8:
        raise DomainError(f"jet direction must have unit norm, got {nrm}")
    point = _as_value(point)
    coords_1d = point.ndim == 1
    pts = point[None, :] if coords_1d else point
    tape = tape or Tape()
    jets = []
    for i in range(pts.shape[1]):
        v = tape.input(pts[:, i])
        jets.append(Jet2(v, tape.constant(np.full(pts.shape[0], direction[i])),
                         tape.constant(np.zeros(pts.shape[0]))))
    return f(jets)


def laplacian(f, point, tape=None):
    """Sum of second directional derivatives along the coordinate axes."""
    point = _as_value(point)
    d = point.shape[-1]
    if d not in (1, 2, 3):
        raise DomainError(f"laplacian supports 1-3 coordinates, got {d}")
    tape = tape or Tape()
    out = None
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        dd = jet_eval(f, point, e, tape=tape).dd
        out = dd if out is None else out + dd
    return out


# ---------------------------------------------------------------------------
# finite-difference verification
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    failures: list = field(default_factory=list)
    tol: float = 0.0

    @property
    def passed(self):
        return self.max_rel_error < self.tol


def _rel_err(a, b):
    scale = max(abs(a), abs(b), 1e-8)
    return abs(a - b) / scale


def grad_check(f, params, step=1e-4, tol=1e-5):
    """Compare backward() gradients against central finite differences.

    `f` is a callable(tape) -> scalar Node that watches `params` on the
    given tape. Every scalar entry of every parameter is perturbed.
    """
    if step <= 0:
        raise ValueError("grad_check step must be positive")
    tape = Tape()
    root = f(tape)
    grads = backward(root)
    max_err = 0.0
    failures = []
    for p in params:
        g = grads.of(p)
        flat = p.value.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = float(f(Tape()).value)
            flat[i] = keep - step
            lo = float(f(Tape()).value)
            flat[i] = keep
            fd = (up - lo) / (2.0 * step)
            err = _rel_err(float(gflat[i]), fd)
            if err > max_err:
                max_err = err
            if err > tol:
                failures.append((p.name, i, float(gflat[i]), fd, err))
    return GradCheckReport(max_rel_error=max_err, failures=failures, tol=tol)
