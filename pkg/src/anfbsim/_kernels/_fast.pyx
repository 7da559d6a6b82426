# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of ``_pure.py``. Same operations, same order, same results."""
from libc.math cimport exp
from libc.stdlib cimport malloc, free

from anfbsim.errors import CoverageError, DimensionError


cpdef double logistic(double z):
    cdef double e
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


cdef double _dot_bias(object w, double b, object x) except? -1.0e308:
    cdef Py_ssize_t n = len(w), i
    cdef double acc = 0.0
    if len(x) != n:
        raise DimensionError(f"feature vector has {len(x)} components, model expects {n}")
    for i in range(n):
        acc = acc + <double>w[i] * <double>x[i]
    return acc + b


def logit_score(w, double b, x):
    return logistic(_dot_bias(w, b, x))


def logit_sgd(w, double b, x, double y, double lr, double l2=0.0):
    cdef double p = logistic(_dot_bias(w, b, x))
    cdef double step = lr * (p - y)
    cdef double decay = lr * l2
    cdef Py_ssize_t i, n = len(w)
    cdef double wi
    out = [0.0] * n
    for i in range(n):
        wi = <double>w[i]
        out[i] = wi - step * <double>x[i] - decay * wi
    return out, b - step


def logit_sgd_pass(w, double b, xs, ys, double lr, double l2=0.0):
    w = list(w)
    for x, y in zip(xs, ys):
        w, b = logit_sgd(w, b, x, y, lr, l2)
    return w, b


cdef inline double _tri(double z, double a, double b, double c) nogil:
    if z < b:
        if a == b:
            return 1.0
        if z <= a:
            return 0.0
        return (z - a) / (b - a)
    if z > b:
        if b == c:
            return 1.0
        if z >= c:
            return 0.0
        return (c - z) / (c - b)
    return 1.0


def triangular(double z, double a, double b, double c):
    return _tri(z, a, b, c)


cdef class RuleKernel:
    cdef public Py_ssize_t n_vars, n_labels, n_rules
    cdef double *_mf
    cdef int *_ante
    cdef double *_mu
    cdef double *_beta

    def __cinit__(self, mf_params, Py_ssize_t n_vars, Py_ssize_t n_labels, antecedents):
        self._mf = NULL
        self._ante = NULL
        self._mu = NULL
        self._beta = NULL

    def __init__(self, mf_params, Py_ssize_t n_vars, Py_ssize_t n_labels, antecedents):
        cdef Py_ssize_t i
        if len(mf_params) != n_vars * n_labels * 3:
            raise ValueError("mf_params has wrong length")
        if n_vars <= 0 or len(antecedents) % n_vars:
            raise ValueError("antecedents has wrong length")
        self.n_vars = n_vars
        self.n_labels = n_labels
        self.n_rules = len(antecedents) // n_vars
        self._mf = <double *> malloc(len(mf_params) * sizeof(double))
        self._ante = <int *> malloc(len(antecedents) * sizeof(int))
        self._mu = <double *> malloc(n_vars * n_labels * sizeof(double))
        self._beta = <double *> malloc((self.n_rules + 1) * sizeof(double))
        if not self._mf or not self._ante or not self._mu or not self._beta:
            raise MemoryError()
        for i in range(len(mf_params)):
            self._mf[i] = float(mf_params[i])
        for i in range(len(antecedents)):
            self._ante[i] = int(antecedents[i])

    def __dealloc__(self):
        free(self._mf)
        free(self._ante)
        free(self._mu)
        free(self._beta)

    cdef int _fill(self, z) except -1:
        cdef Py_ssize_t v, lab, j, k
        cdef double zv, beta
        cdef int a
        if len(z) != self.n_vars:
            raise DimensionError(f"expected {self.n_vars} fuzzy inputs, got {len(z)}")
        for v in range(self.n_vars):
            zv = z[v]
            for lab in range(self.n_labels):
                j = v * self.n_labels + lab
                self._mu[j] = _tri(zv, self._mf[3 * j], self._mf[3 * j + 1], self._mf[3 * j + 2])
        for k in range(self.n_rules):
            beta = 1.0
            for v in range(self.n_vars):
                a = self._ante[k * self.n_vars + v]
                if a >= 0:
                    beta = beta * self._mu[v * self.n_labels + a]
            self._beta[k] = beta
        return 0

    def memberships(self, z):
        self._fill(z)
        return [self._mu[j] for j in range(self.n_vars * self.n_labels)]

    def firing(self, z):
        self._fill(z)
        return [self._beta[k] for k in range(self.n_rules)]

    cdef double _score(self, z, weights) except? -1.0:
        cdef Py_ssize_t k
        cdef double num = 0.0, den = 0.0
        if len(weights) != self.n_rules:
            raise DimensionError(f"expected {self.n_rules} rule weights, got {len(weights)}")
        self._fill(z)
        for k in range(self.n_rules):
            num = num + <double>weights[k] * self._beta[k]
            den = den + self._beta[k]
        if den <= 0.0:
            raise CoverageError(f"no rule fires for inputs {list(z)}")
        self._beta[self.n_rules] = den
        return num / den

    def score(self, z, weights):
        cdef double r = self._score(z, weights)
        return r, [self._beta[k] for k in range(self.n_rules)]

    def adapt(self, z, weights, double target, double lr):
        cdef double r_f = self._score(z, weights)
        cdef double den = 0.0, err, w
        cdef Py_ssize_t k
        for k in range(self.n_rules):
            den = den + self._beta[k]
        err = r_f - target
        out = [0.0] * self.n_rules
        for k in range(self.n_rules):
            w = <double>weights[k] - lr * err * (self._beta[k] / den)
            if w < 0.0:
                w = 0.0
            elif w > 1.0:
                w = 1.0
            out[k] = w
        return out, r_f
