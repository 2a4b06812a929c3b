"""Exact symbolic engine for the one-dimensional Weyl algebra.

Elements are kept in normal order (every ``x`` to the left of every ``p``)
with coefficients in the ring of Laurent polynomials over the Gaussian
rationals: exponents of ``t`` and ``hbar`` are non-negative, parameter
exponents may be any integer.  Equality is exact and decidable, so a
conservation identity certified here is a theorem about the inputs, not a
numerical statement.

The commutation convention is ``[x, p] = i*hbar``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb, factorial
from typing import Callable, Iterable, Mapping, Sequence

from . import expr as ex
from .expr import GaussianRational, GR_ONE, GR_ZERO, GR_I

# scalar monomial: sorted ((name, exponent), ...) with zero exponents dropped
Mono = tuple


class WeylError(ValueError):
    """Invalid Weyl-algebra operation."""


class NotWeylLowerable(WeylError):
    """Expression cannot be represented as a normal-ordered x/p polynomial."""


class DuplicateRateError(WeylError):
    pass


class ZeroRateError(WeylError):
    pass


def _mono_raw(pairs: Iterable) -> Mono:
    merged: dict[str, int] = {}
    for name, exponent in pairs:
        merged[name] = merged.get(name, 0) + exponent
    return tuple(sorted((n, k) for n, k in merged.items() if k))


def _mono(pairs: Iterable) -> Mono:
    out = _mono_raw(pairs)
    for name, k in out:
        if name in ("t", "hbar") and k < 0:
            raise WeylError(f"negative exponent of {name} in scalar coefficient")
    return out


def _mono_mul(a: Mono, b: Mono) -> Mono:
    return _mono(tuple(a) + tuple(b))


class ScalarPoly:
    """Exact Laurent polynomial in t, hbar and named parameters."""

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[Mono, GaussianRational] | None = None):
        clean: dict[Mono, GaussianRational] = {}
        if terms:
            for mono, coeff in terms.items():
                if not isinstance(coeff, GaussianRational):
                    coeff = GaussianRational(coeff)
                if not coeff.is_zero:
                    clean[_mono(mono)] = clean.get(_mono(mono), GR_ZERO) + coeff
        self.terms = {m: c for m, c in clean.items() if not c.is_zero}

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls) -> "ScalarPoly":
        return cls()

    @classmethod
    def const(cls, value) -> "ScalarPoly":
        if not isinstance(value, GaussianRational):
            value = GaussianRational(value)
        return cls({(): value})

    @classmethod
    def var(cls, name: str, exponent: int = 1) -> "ScalarPoly":
        return cls({((name, exponent),): GR_ONE})

    # -- ring structure ----------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScalarPoly):
            return NotImplemented
        return self.terms == other.terms

    def __hash__(self):
        return hash(tuple(sorted(self.terms.items())))

    def __add__(self, other: "ScalarPoly") -> "ScalarPoly":
        out = dict(self.terms)
        for mono, coeff in other.terms.items():
            acc = out.get(mono, GR_ZERO) + coeff
            if acc.is_zero:
                out.pop(mono, None)
            else:
                out[mono] = acc
        result = ScalarPoly.__new__(ScalarPoly)
        result.terms = out
        return result

    def __sub__(self, other: "ScalarPoly") -> "ScalarPoly":
        return self + (-other)

    def __neg__(self) -> "ScalarPoly":
        result = ScalarPoly.__new__(ScalarPoly)
        result.terms = {m: -c for m, c in self.terms.items()}
        return result

    def __mul__(self, other) -> "ScalarPoly":
        if isinstance(other, (int, Fraction, GaussianRational)):
            other = ScalarPoly.const(other)
        if not isinstance(other, ScalarPoly):
            return NotImplemented
        out: dict[Mono, GaussianRational] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                mono = _mono_mul(m1, m2)
                acc = out.get(mono, GR_ZERO) + c1 * c2
                if acc.is_zero:
                    out.pop(mono, None)
                else:
                    out[mono] = acc
        result = ScalarPoly.__new__(ScalarPoly)
        result.terms = out
        return result

    __rmul__ = __mul__

    def conjugate(self) -> "ScalarPoly":
        result = ScalarPoly.__new__(ScalarPoly)
        result.terms = {m: c.conjugate() for m, c in self.terms.items()}
        return result

    def diff_t(self) -> "ScalarPoly":
        out: dict[Mono, GaussianRational] = {}
        for mono, coeff in self.terms.items():
            k = dict(mono).get("t", 0)
            if not k:
                continue
            lowered = _mono_mul(mono, (("t", -1),))
            acc = out.get(lowered, GR_ZERO) + coeff * k
            if acc.is_zero:
                out.pop(lowered, None)
            else:
                out[lowered] = acc
        result = ScalarPoly.__new__(ScalarPoly)
        result.terms = out
        return result

    def divide_mono(self, mono: Mono, coeff: GaussianRational) -> "ScalarPoly":
        """Exact division by ``coeff * mono`` (raises if t/hbar go negative)."""
        if coeff.is_zero:
            raise WeylError("division by zero coefficient")
        inv_mono = _mono_raw((name, -k) for name, k in _mono_raw(mono))
        inv_coeff = coeff.inverse()
        out = {}
        for m, c in self.terms.items():
            out[_mono_mul(m, inv_mono)] = c * inv_coeff
        result = ScalarPoly.__new__(ScalarPoly)
        result.terms = out
        return result

    def evaluate(self, *, t: float, hbar: float, params: Mapping[str, float]) -> complex:
        total = 0j
        values = {"t": t, "hbar": hbar, **params}
        for mono, coeff in self.terms.items():
            term = complex(coeff)
            for name, k in mono:
                try:
                    term *= values[name] ** k
                except KeyError:
                    raise WeylError(f"no value for parameter {name!r}") from None
            total += term
        return total

    # -- conversion --------------------------------------------------------

    def to_expr(self) -> ex.Expr:
        return ex.canonical(ex.Sum(tuple(
            _term_to_expr(coeff, mono, 0, 0)
            for mono, coeff in sorted(self.terms.items())
        )) if self.terms else ex.ZERO)

    def __str__(self) -> str:
        return ex.to_text(self.to_expr())

    def __repr__(self) -> str:
        return f"ScalarPoly({self})"


def _var_to_expr(name: str, exponent: int) -> ex.Expr:
    if name == "t":
        base: ex.Expr = ex.T
    elif name == "hbar":
        base = ex.HBAR
    else:
        base = ex.Param(name)
    return base if exponent == 1 else ex.Power(base, exponent)


def _term_to_expr(coeff: GaussianRational, mono: Mono, a: int, b: int) -> ex.Expr:
    nums: list[ex.Expr] = [ex.Const(coeff)]
    dens: list[ex.Expr] = []
    for name, k in mono:
        if name in ("t", "hbar") or k > 0:
            nums.append(_var_to_expr(name, k))
        else:
            dens.append(_var_to_expr(name, -k))
    if a:
        nums.append(_var_to_expr_op("x", a))
    if b:
        nums.append(_var_to_expr_op("p", b))
    num: ex.Expr = nums[0] if len(nums) == 1 else ex.Product(tuple(nums))
    if not dens:
        return num
    den: ex.Expr = dens[0] if len(dens) == 1 else ex.Product(tuple(dens))
    return ex.Quotient(num, den)


def _var_to_expr_op(name: str, exponent: int) -> ex.Expr:
    base = ex.OperatorSymbol(name)
    return base if exponent == 1 else ex.Power(base, exponent)


_SP_I = ScalarPoly.const(GR_I)
_SP_HBAR = ScalarPoly.var("hbar")
_SP_I_HBAR = _SP_I * _SP_HBAR


class OperatorPoly:
    """Normal-ordered element of the Weyl algebra.

    ``terms`` maps the word ``x^a p^b`` (the key ``(a, b)``) to its
    :class:`ScalarPoly` coefficient.  Zero coefficients are never stored.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[tuple, ScalarPoly] | None = None):
        clean: dict[tuple, ScalarPoly] = {}
        if terms:
            for (a, b), coeff in terms.items():
                if a < 0 or b < 0:
                    raise WeylError("negative operator exponent")
                if coeff:
                    existing = clean.get((a, b))
                    coeff = existing + coeff if existing else coeff
                    if coeff:
                        clean[(a, b)] = coeff
                    else:
                        clean.pop((a, b), None)
        self.terms = clean

    @classmethod
    def zero(cls) -> "OperatorPoly":
        return cls()

    @classmethod
    def from_scalar(cls, scalar: ScalarPoly) -> "OperatorPoly":
        return cls({(0, 0): scalar})

    @classmethod
    def const(cls, value) -> "OperatorPoly":
        return cls.from_scalar(ScalarPoly.const(value))

    @classmethod
    def x(cls) -> "OperatorPoly":
        return cls({(1, 0): ScalarPoly.const(1)})

    @classmethod
    def p(cls) -> "OperatorPoly":
        return cls({(0, 1): ScalarPoly.const(1)})

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __eq__(self, other) -> bool:
        if not isinstance(other, OperatorPoly):
            return NotImplemented
        return self.terms == other.terms

    def __add__(self, other: "OperatorPoly") -> "OperatorPoly":
        out = dict(self.terms)
        for key, coeff in other.terms.items():
            acc = out.get(key)
            acc = coeff if acc is None else acc + coeff
            if acc:
                out[key] = acc
            else:
                out.pop(key, None)
        result = OperatorPoly.__new__(OperatorPoly)
        result.terms = out
        return result

    def __sub__(self, other: "OperatorPoly") -> "OperatorPoly":
        return self + (-other)

    def __neg__(self) -> "OperatorPoly":
        result = OperatorPoly.__new__(OperatorPoly)
        result.terms = {k: -c for k, c in self.terms.items()}
        return result

    def scale(self, scalar) -> "OperatorPoly":
        if isinstance(scalar, (int, Fraction, GaussianRational)):
            scalar = ScalarPoly.const(scalar)
        result = OperatorPoly.__new__(OperatorPoly)
        result.terms = {}
        for key, coeff in self.terms.items():
            acc = coeff * scalar
            if acc:
                result.terms[key] = acc
        return result

    def __mul__(self, other) -> "OperatorPoly":
        if isinstance(other, (int, Fraction, GaussianRational, ScalarPoly)):
            return self.scale(other)
        if not isinstance(other, OperatorPoly):
            return NotImplemented
        out: dict[tuple, ScalarPoly] = {}
        for (a1, b1), c1 in self.terms.items():
            for (a2, b2), c2 in other.terms.items():
                base = c1 * c2
                # p^b1 x^a2 = sum_k (-i hbar)^k k! C(b1,k) C(a2,k) x^(a2-k) p^(b1-k)
                for k in range(min(b1, a2) + 1):
                    if k:
                        swap = ScalarPoly(
                            {(("hbar", k),): (-GR_I) ** k * (factorial(k) * comb(b1, k) * comb(a2, k))}
                        )
                        coeff = base * swap
                    else:
                        coeff = base
                    key = (a1 + a2 - k, b1 + b2 - k)
                    acc = out.get(key)
                    acc = coeff if acc is None else acc + coeff
                    if acc:
                        out[key] = acc
                    else:
                        out.pop(key, None)
        result = OperatorPoly.__new__(OperatorPoly)
        result.terms = out
        return result

    def __rmul__(self, other):
        if isinstance(other, (int, Fraction, GaussianRational, ScalarPoly)):
            return self.scale(other)
        return NotImplemented

    def diff_t(self) -> "OperatorPoly":
        result = OperatorPoly.__new__(OperatorPoly)
        result.terms = {}
        for key, coeff in self.terms.items():
            d = coeff.diff_t()
            if d:
                result.terms[key] = d
        return result

    def adjoint(self) -> "OperatorPoly":
        """Hermitian adjoint: reverse each word, conjugate each coefficient."""
        out = OperatorPoly.zero()
        for (a, b), coeff in self.terms.items():
            # (x^a p^b)^dagger = p^b x^a, re-normal-ordered
            reordered = {}
            for k in range(min(a, b) + 1):
                swap = ScalarPoly(
                    {(("hbar", k),): (-GR_I) ** k * (factorial(k) * comb(b, k) * comb(a, k))}
                )
                reordered[(a - k, b - k)] = coeff.conjugate() * swap
            out = out + OperatorPoly(reordered)
        return out

    def evaluate(
        self,
        *,
        t: float,
        hbar: float,
        params: Mapping[str, float],
        x_matrix,
        p_matrix,
    ):
        """Materialize in a matrix representation of x and p."""
        import numpy as np

        dim = x_matrix.shape[0]
        out = np.zeros((dim, dim), dtype=complex)
        eye = np.eye(dim, dtype=complex)
        xpows = {0: eye}
        ppows = {0: eye}
        for (a, b), coeff in self.terms.items():
            if a not in xpows:
                xpows[a] = np.linalg.matrix_power(x_matrix, a)
            if b not in ppows:
                ppows[b] = np.linalg.matrix_power(p_matrix, b)
            out += coeff.evaluate(t=t, hbar=hbar, params=params) * (xpows[a] @ ppows[b])
        return out

    def to_expr(self) -> ex.Expr:
        if not self.terms:
            return ex.ZERO
        pieces = []
        for (a, b), coeff in sorted(self.terms.items()):
            for mono, value in sorted(coeff.terms.items()):
                pieces.append(_term_to_expr(value, mono, a, b))
        return ex.canonical(ex.Sum(tuple(pieces)))

    def __str__(self) -> str:
        return ex.to_text(self.to_expr())

    def __repr__(self) -> str:
        return f"OperatorPoly({self})"


# ---------------------------------------------------------------------------
# Lowering from the expression language
# ---------------------------------------------------------------------------


def lower(e: ex.Expr) -> OperatorPoly:
    """Rewrite an x/p expression into normal-ordered form, exactly.

    Raises :class:`NotWeylLowerable` for spin leaves, sin/cos/exp
    coefficients, or denominators that are not parameter monomials.
    """
    e = ex.canonical(e)
    leaves = ex.operator_symbols(e)
    if not leaves <= {"x", "p"}:
        spin = ", ".join(sorted(leaves - {"x", "p"}))
        raise NotWeylLowerable(f"spin operator leaves present: {spin}")
    return _lower(e)


def _lower(e: ex.Expr) -> OperatorPoly:
    if isinstance(e, ex.Const):
        return OperatorPoly.const(e.value)
    if isinstance(e, ex.Param):
        return OperatorPoly.from_scalar(ScalarPoly.var(e.name))
    if isinstance(e, ex.TimeVar):
        return OperatorPoly.from_scalar(ScalarPoly.var("t"))
    if isinstance(e, ex.HbarVar):
        return OperatorPoly.from_scalar(_SP_HBAR)
    if isinstance(e, ex.OperatorSymbol):
        return OperatorPoly.x() if e.name == "x" else OperatorPoly.p()
    if isinstance(e, ex.Sum):
        out = OperatorPoly.zero()
        for term in e.terms:
            out = out + _lower(term)
        return out
    if isinstance(e, ex.Product):
        out = OperatorPoly.const(1)
        for factor in e.factors:
            out = out * _lower(factor)
        return out
    if isinstance(e, ex.Power):
        if e.exponent < 0:
            # canonical guarantees the base is a parameter symbol
            return OperatorPoly.from_scalar(ScalarPoly.var(e.base.name, e.exponent))
        out = OperatorPoly.const(1)
        base = _lower(e.base)
        for _ in range(e.exponent):
            out = out * base
        return out
    if isinstance(e, ex.Quotient):
        numerator = _lower(e.numerator)
        denominator = _lower(e.denominator)
        if set(denominator.terms) - {(0, 0)}:
            raise NotWeylLowerable("operator symbols in a denominator")
        scalar = denominator.terms.get((0, 0), ScalarPoly.zero())
        if len(scalar.terms) != 1:
            raise NotWeylLowerable("denominator is not a single monomial")
        (mono, coeff), = scalar.terms.items()
        if any(name in ("t", "hbar") for name, _ in mono):
            raise NotWeylLowerable("t or hbar in a denominator")
        result = OperatorPoly.__new__(OperatorPoly)
        result.terms = {
            key: value.divide_mono(mono, coeff) for key, value in numerator.terms.items()
        }
        return result
    if isinstance(e, ex.FuncApp):
        raise NotWeylLowerable(f"transcendental coefficient {e.func}(...)")
    raise NotWeylLowerable(f"cannot lower {e!r}")


# ---------------------------------------------------------------------------
# Algebraic operations
# ---------------------------------------------------------------------------


def mul(a: OperatorPoly, b: OperatorPoly) -> OperatorPoly:
    """Normal-ordered product."""
    return a * b


def commutator(a: OperatorPoly, b: OperatorPoly) -> OperatorPoly:
    return a * b - b * a


def adjoint(a: OperatorPoly) -> OperatorPoly:
    return a.adjoint()


def is_hermitian(a: OperatorPoly) -> bool:
    return a.adjoint() == a


def conservation_residual(a: OperatorPoly, h: OperatorPoly) -> OperatorPoly:
    """i*hbar*dA/dt + [A, H]; identically zero iff A is conserved under H."""
    return a.diff_t().scale(_SP_I_HBAR) + commutator(a, h)


def ad_tower(a: OperatorPoly, y: OperatorPoly, n: int) -> list[OperatorPoly]:
    """[y, [a,y], [a,[a,y]], ...] with n+1 entries."""
    if n < 1:
        raise WeylError("tower depth must be at least 1")
    tower = [y]
    for _ in range(n):
        tower.append(commutator(a, tower[-1]))
    return tower


def _i_over_hbar(a: OperatorPoly) -> OperatorPoly:
    # (i/hbar) * a; exact because every commutator carries a factor of hbar
    result = OperatorPoly.__new__(OperatorPoly)
    result.terms = {}
    for key, coeff in a.terms.items():
        scaled = coeff.divide_mono((("hbar", 1),), GR_ONE) * GR_I
        if scaled:
            result.terms[key] = scaled
    return result


def conjugate_truncated(a: OperatorPoly, y: OperatorPoly, order: int) -> list[OperatorPoly]:
    """Coefficients C_n of s^n in exp(i s a/hbar) y exp(-i s a/hbar).

    C_0 = y and C_n = (i/hbar)^n ad_a^n(y) / n!, computed exactly via the
    recursion C_n = (i/hbar)[a, C_(n-1)] / n.
    """
    if order < 0:
        raise WeylError("order must be non-negative")
    coeffs = [y]
    for n in range(1, order + 1):
        step = _i_over_hbar(commutator(a, coeffs[-1]))
        coeffs.append(step.scale(Fraction(1, n)))
    return coeffs


@dataclass(frozen=True)
class AnsatzFailure:
    label: str
    witness: OperatorPoly

    def __str__(self) -> str:
        return f"{self.label}: {self.witness}"


@dataclass(frozen=True)
class AnsatzVerdict:
    passed: bool
    failures: tuple

    def __bool__(self) -> bool:
        return self.passed


def verify_exponential_ansatz(
    a: OperatorPoly,
    y: OperatorPoly,
    ansatz: Sequence[tuple],
) -> AnsatzVerdict:
    """Certify the closed form  U_s^-1 y U_s = y + sum_k (e^(r_k s) - 1) b_k.

    ``ansatz`` is a sequence of ``(rate, b)`` pairs with exact nonzero,
    pairwise-distinct rates.  PASS requires both exact identities
    (i/hbar)[a, b_k] = r_k b_k  and  (i/hbar)[a, y] = sum_k r_k b_k, which by
    uniqueness of solutions of dF/ds = (i/hbar)[a, F], F(0) = y, certify the
    closed form for every s.
    """
    rates: list[GaussianRational] = []
    parts: list[OperatorPoly] = []
    for rate, b in ansatz:
        if not isinstance(rate, GaussianRational):
            rate = GaussianRational(rate)
        if rate.is_zero:
            raise ZeroRateError("ansatz rates must be nonzero")
        if rate in rates:
            raise DuplicateRateError(f"duplicate rate {rate}")
        rates.append(rate)
        parts.append(b)
    failures = []
    for rate, b in zip(rates, parts):
        witness = _i_over_hbar(commutator(a, b)) - b.scale(rate)
        if witness:
            failures.append(AnsatzFailure(f"(i/hbar)[a, b] != {rate} * b", witness))
    total = OperatorPoly.zero()
    for rate, b in zip(rates, parts):
        total = total + b.scale(rate)
    witness = _i_over_hbar(commutator(a, y)) - total
    if witness:
        failures.append(AnsatzFailure("(i/hbar)[a, y] != sum of rate * b", witness))
    return AnsatzVerdict(passed=not failures, failures=tuple(failures))


@dataclass(frozen=True)
class GalileanVerdict:
    passed: bool
    x_witness: OperatorPoly
    p_witness: OperatorPoly


def galilean_generator_constraints(
    a: OperatorPoly, mass_param: str = "m"
) -> GalileanVerdict:
    """Check that ``a`` generates Galilean boosts, exactly.

    The boost action U_s^-1 x U_s = x - s*t, U_s^-1 p U_s = p - s*mass
    is equivalent (via the conjugation series, with [x, p] = i*hbar) to
    (i/hbar)[a, x] = -t and (i/hbar)[a, p] = -mass, i.e. [a, x] = i*hbar*t
    and [a, p] = i*hbar*mass.  Any a = mass*x - p*t + f(t) passes, for
    arbitrary scalar f.
    """
    i_hbar = GR_I * _SP_HBAR
    target_x = OperatorPoly.from_scalar(i_hbar * ScalarPoly.var("t"))
    target_p = OperatorPoly.from_scalar(i_hbar * ScalarPoly.var(mass_param))
    wx = commutator(a, OperatorPoly.x()) - target_x
    wp = commutator(a, OperatorPoly.p()) - target_p
    return GalileanVerdict(passed=wx.is_zero and wp.is_zero, x_witness=wx, p_witness=wp)
