"""RBF-kernel support vector machine trained with SMO.

Binary problems use Platt's SMO with an error cache: the outer loop
alternates full sweeps and sweeps over non-bound multipliers, the second
index is chosen by the ``|E1 - E2|`` heuristic and otherwise by scanning
from a seeded random starting point. Multiclass is one-vs-rest.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EPS_ALPHA = 1e-8


class DegenerateLabelError(ValueError):
    pass


def rbf_kernel(x, z, gamma: float) -> float:
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.shape != z.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {z.shape}")
    if not gamma > 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    d = x - z
    return float(np.exp(-gamma * np.dot(d, d)))


def rbf_matrix(x, z, gamma: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    # explicit differences keep the kernel translation invariant to rounding level
    out = np.empty((len(x), len(z)))
    for start in range(0, len(x), 256):
        diff = x[start:start + 256, None, :] - z[None, :, :]
        out[start:start + 256] = np.exp(-gamma * np.einsum("ijk,ijk->ij", diff, diff))
    return out


def scale_gamma(x) -> float:
    """``1 / (D * Var(X))`` over all entries; 1/D when the data has zero variance."""
    x = np.asarray(x, dtype=np.float64)
    var = x.var()
    return 1.0 / (x.shape[1] * var) if var > 0 else 1.0 / x.shape[1]


@dataclass
class BinarySVM:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i
    bias: float
    gamma: float
    C: float
    alphas: np.ndarray = field(repr=False)  # full alpha vector over training rows
    support_index: np.ndarray = field(repr=False)

    def decision_function(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.support_vectors.shape[1]:
            raise ValueError(f"expected {self.support_vectors.shape[1]} features, got {x.shape[1]}")
        if len(self.dual_coef) == 0:
            return np.full(len(x), self.bias)
        return rbf_matrix(x, self.support_vectors, self.gamma) @ self.dual_coef + self.bias


class _SMO:
    def __init__(self, K, y, C, tol, rng):
        self.K, self.y, self.C, self.tol, self.rng = K, y, C, tol, rng
        self.n = len(y)
        self.alpha = np.zeros(self.n)
        self.b = 0.0
        # error cache E_i = f(x_i) - y_i with f = 0 at alpha = 0
        self.E = -y.astype(np.float64)

    def take_step(self, i1, i2) -> bool:
        if i1 == i2:
            return False
        y, K, C, alpha = self.y, self.K, self.C, self.alpha
        a1, a2 = alpha[i1], alpha[i2]
        y1, y2 = y[i1], y[i2]
        E1, E2 = self.E[i1], self.E[i2]
        s = y1 * y2
        if y1 != y2:
            L, H = max(0.0, a2 - a1), min(C, C + a2 - a1)
        else:
            L, H = max(0.0, a2 + a1 - C), min(C, a2 + a1)
        if L >= H:
            return False
        k11, k12, k22 = K[i1, i1], K[i1, i2], K[i2, i2]
        eta = k11 + k22 - 2 * k12
        if eta > 0:
            a2_new = min(H, max(L, a2 + y2 * (E1 - E2) / eta))
        else:
            # objective is linear along the constraint line: evaluate at both ends
            f1 = y1 * (E1 - self.b) - a1 * k11 - s * a2 * k12
            f2 = y2 * (E2 - self.b) - s * a1 * k12 - a2 * k22
            L1 = a1 + s * (a2 - L)
            H1 = a1 + s * (a2 - H)
            lobj = L1 * f1 + L * f2 + 0.5 * L1 ** 2 * k11 + 0.5 * L ** 2 * k22 + s * L * L1 * k12
            hobj = H1 * f1 + H * f2 + 0.5 * H1 ** 2 * k11 + 0.5 * H ** 2 * k22 + s * H * H1 * k12
            if lobj < hobj - 1e-12:
                a2_new = L
            elif lobj > hobj + 1e-12:
                a2_new = H
            else:
                a2_new = a2
        if a2_new < EPS_ALPHA:
            a2_new = 0.0
        elif a2_new > C - EPS_ALPHA:
            a2_new = C
        if abs(a2_new - a2) < 1e-12 * (a2_new + a2 + 1e-12):
            return False
        a1_new = a1 + s * (a2 - a2_new)
        if a1_new < EPS_ALPHA:
            a2_new += s * a1_new
            a1_new = 0.0
        elif a1_new > C - EPS_ALPHA:
            a2_new += s * (a1_new - C)
            a1_new = C

        b1 = self.b - E1 - y1 * (a1_new - a1) * k11 - y2 * (a2_new - a2) * k12
        b2 = self.b - E2 - y1 * (a1_new - a1) * k12 - y2 * (a2_new - a2) * k22
        if 0 < a1_new < C:
            b_new = b1
        elif 0 < a2_new < C:
            b_new = b2
        else:
            b_new = 0.5 * (b1 + b2)

        self.E += (y1 * (a1_new - a1) * K[i1] + y2 * (a2_new - a2) * K[i2] + (b_new - self.b))
        alpha[i1], alpha[i2] = a1_new, a2_new
        self.b = b_new
        return True

    def examine(self, i2) -> bool:
        y2, a2 = self.y[i2], self.alpha[i2]
        r2 = self.E[i2] * y2
        if not ((r2 < -self.tol and a2 < self.C) or (r2 > self.tol and a2 > 0)):
            return False
        non_bound = np.flatnonzero((self.alpha > 0) & (self.alpha < self.C))
        if len(non_bound) > 1:
            i1 = int(non_bound[np.argmax(np.abs(self.E[non_bound] - self.E[i2]))])
            if self.take_step(i1, i2):
                return True
        if len(non_bound):
            start = int(self.rng.integers(len(non_bound)))
            for i1 in np.roll(non_bound, -start):
                if self.take_step(int(i1), i2):
                    return True
        start = int(self.rng.integers(self.n))
        for i1 in np.roll(np.arange(self.n), -start):
            if self.take_step(int(i1), i2):
                return True
        return False

    def run(self, max_sweeps: int):
        examine_all = True
        sweeps = 0
        while sweeps < max_sweeps:
            sweeps += 1
            if examine_all:
                changed = sum(self.examine(i) for i in range(self.n))
            else:
                nb = np.flatnonzero((self.alpha > 0) & (self.alpha < self.C))
                changed = sum(self.examine(int(i)) for i in nb)
            if examine_all:
                if changed == 0:
                    break
                examine_all = False
            elif changed == 0:
                examine_all = True
        return sweeps


def svm_train_binary(x, y, C: float = 1.0, gamma: float | None = None,
                     tol: float = 1e-3, seed: int = 0, max_sweeps: int | None = None) -> BinarySVM:
    """Train on labels in {-1, +1}. ``gamma=None`` uses the 1/(D Var X) convention."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.ndim != 2 or len(x) != len(y):
        raise ValueError("x must be n x D with one label per row")
    if len(y) < 2:
        raise DegenerateLabelError("need at least 2 training rows")
    if not set(np.unique(y)) <= {-1.0, 1.0}:
        raise ValueError("binary labels must be -1 or +1")
    if len(np.unique(y)) < 2:
        raise DegenerateLabelError("both classes must be present")
    if gamma is None:
        gamma = scale_gamma(x)
    K = rbf_matrix(x, x, gamma)
    smo = _SMO(K, y, float(C), tol, np.random.default_rng(seed))
    smo.run(max_sweeps or 10 * len(y))
    sv = np.flatnonzero(smo.alpha > 0)
    return BinarySVM(x[sv].copy(), smo.alpha[sv] * y[sv], float(smo.b), float(gamma), float(C),
                     smo.alpha.copy(), sv)


def kkt_residuals(model: BinarySVM, x, y) -> np.ndarray:
    """Per-row violation of the KKT conditions (0 when satisfied)."""
    y = np.asarray(y, dtype=np.float64)
    margin = y * model.decision_function(x)
    a = model.alphas
    res = np.zeros(len(y))
    lower = a <= 0
    upper = a >= model.C
    mid = ~lower & ~upper
    res[lower] = np.maximum(0.0, 1.0 - margin[lower])
    res[upper] = np.maximum(0.0, margin[upper] - 1.0)
    res[mid] = np.abs(margin[mid] - 1.0)
    return res


@dataclass
class SVMModel:
    classes: np.ndarray
    binaries: list[BinarySVM]
    n_features: int

    def decision_function(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {x.shape[1]}")
        return np.column_stack([m.decision_function(x) for m in self.binaries])

    def predict(self, x) -> np.ndarray:
        return svm_predict(self, x)


def svm_train_multiclass(x, y, C: float = 1.0, gamma: float | None = None,
                         tol: float = 1e-3, seed: int = 0) -> SVMModel:
    """One-vs-rest over the classes present in ``y``; two classes train a single model."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y).reshape(-1)
    classes = np.unique(y)
    if len(classes) < 2:
        raise DegenerateLabelError(f"need at least 2 classes, found {classes.tolist()}")
    if gamma is None:
        gamma = scale_gamma(x)
    if len(classes) == 2:
        yb = np.where(y == classes[1], 1.0, -1.0)
        return SVMModel(classes, [svm_train_binary(x, yb, C, gamma, tol, seed)], x.shape[1])
    binaries = [svm_train_binary(x, np.where(y == c, 1.0, -1.0), C, gamma, tol, seed)
                for c in classes]
    return SVMModel(classes, binaries, x.shape[1])


def svm_predict(model, x) -> np.ndarray:
    if isinstance(model, BinarySVM):
        return np.where(model.decision_function(x) >= 0, 1, -1)
    scores = model.decision_function(x)
    if len(model.binaries) == 1:
        return model.classes[(scores[:, 0] >= 0).astype(int)]
    # argmax returns the first maximum, i.e. the lowest class index on ties
    return model.classes[np.argmax(scores, axis=1)]
