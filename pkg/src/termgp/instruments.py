"""Instrument quotes and their translation into linear curve constraints.

Each supported instrument contributes one linear relation between its quote
and the values of the curve under construction at its cash-flow dates:

* fixed-coupon bond price against default-free zero-coupon prices,
* overnight-indexed-swap par rate against discount factors,
* fixed-vs-floating swap par rate against forward rates (given an exogenous
  discount curve),
* credit-default-swap spread against survival probabilities, discretised on
  the common quarterly premium grid.

``assemble_system`` stacks the rows of a homogeneous quote set into a
:class:`MarketFitSystem`.  Quotes and exogenous discount inputs are read
from small CSV files; all rates are decimals (0.02 means 2%) and all
schedules use exact year fractions (no calendar conventions).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (EmptyInput, InconsistentGrid, InvalidSpec,
                     MissingCurvePoint, MissingDiscount, QuoteParseError)
from .gp import MarketFitSystem

KINDS = ("bond", "ois", "irs", "cds")

_MATCH_TOL = 1e-9


@dataclass(frozen=True)
class Quote:
    """One market quote: kind, maturity (years) and quoted level.

    ``rate`` is the price for bonds (percentage of nominal, decimal) and the
    par rate or spread otherwise.  ``frequency`` is the number of fixed-leg
    or premium payments per year.
    """

    kind: str
    maturity: float
    rate: float
    coupon: float = 0.0
    recovery: float = 0.0
    frequency: int = 1
    bid: float | None = None
    ask: float | None = None

    def __post_init__(self):
        kind = self.kind.strip().lower()
        if kind not in KINDS:
            raise InvalidSpec(f"unknown instrument kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if not self.maturity > 0:
            raise InvalidSpec("maturity must be positive")
        if self.frequency not in (1, 2, 4, 12):
            raise InvalidSpec("frequency must be one of 1, 2, 4, 12")
        if not (0.0 <= self.recovery < 1.0):
            raise InvalidSpec("recovery must lie in [0, 1)")
        if (self.bid is None) != (self.ask is None):
            raise InvalidSpec("bid and ask must be given together")
        if self.bid is not None and not (self.bid <= self.rate <= self.ask):
            raise InvalidSpec("quote must lie inside [bid, ask]")

    def schedule(self) -> "Schedule":
        return Schedule.regular(self.maturity, self.frequency)


@dataclass(frozen=True)
class Schedule:
    """Strictly increasing payment horizons with their year fractions."""

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        if t.shape[0] == 0:
            raise EmptyInput("schedule must contain at least one payment")
        if np.any(np.diff(t) <= 0) or t[0] <= 0:
            raise InvalidSpec("payment times must be strictly increasing and positive")
        object.__setattr__(self, "times", t)

    @classmethod
    def regular(cls, maturity: float, frequency: int) -> "Schedule":
        n = maturity * frequency
        n_round = round(n)
        if abs(n - n_round) > 1e-9 or n_round < 1:
            raise InconsistentGrid(
                f"maturity {maturity} is not a whole number of periods at "
                f"frequency {frequency}")
        return cls(np.arange(1, n_round + 1) / frequency)

    @property
    def year_fractions(self) -> np.ndarray:
        return np.diff(np.concatenate([[0.0], self.times]))


@dataclass(frozen=True)
class DiscountInput:
    """Exogenous zero rates by tenor, linearly interpolated (flat outside)."""

    tenors: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.tenors, dtype=float).reshape(-1)
        r = np.asarray(self.rates, dtype=float).reshape(-1)
        if t.shape[0] == 0:
            raise EmptyInput("discount input must contain at least one tenor")
        if t.shape != r.shape:
            raise InvalidSpec("tenors and rates must have equal length")
        if np.any(np.diff(t) <= 0):
            raise InvalidSpec("tenors must be strictly increasing")
        if not np.all(np.isfinite(r)):
            raise InvalidSpec("rates must be finite")
        object.__setattr__(self, "tenors", t)
        object.__setattr__(self, "rates", r)

    def zero_rate(self, tau) -> np.ndarray:
        return np.interp(np.asarray(tau, dtype=float), self.tenors, self.rates)

    def discount(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        return np.exp(-self.zero_rate(tau) * tau)


def interp_discount(inputs: DiscountInput, tau) -> np.ndarray:
    """Discount factor exp(-r(tau) tau) from interpolated zero rates."""
    return inputs.discount(tau)


# ---------------------------------------------------------------------------
# constraint rows
# ---------------------------------------------------------------------------

def _indices_on_grid(times: np.ndarray, X: np.ndarray, what: str) -> np.ndarray:
    idx = np.empty(times.shape[0], dtype=int)
    for k, t in enumerate(times):
        hits = np.flatnonzero(np.abs(X - t) <= _MATCH_TOL * max(1.0, abs(t)))
        if hits.shape[0] == 0:
            raise MissingCurvePoint(f"{what} date {t} is not a curve point")
        idx[k] = hits[0]
    return idx


def bond_row(quote: Quote, X) -> tuple:
    """Coupon-bond price row over zero-coupon prices at the curve points."""
    X = np.asarray(X, dtype=float).reshape(-1)
    sched = quote.schedule()
    idx = _indices_on_grid(sched.times, X, "coupon")
    row = np.zeros(X.shape[0])
    np.add.at(row, idx, quote.coupon * sched.year_fractions)
    row[idx[-1]] += 1.0
    return row, quote.rate


def ois_row(quote: Quote, X) -> tuple:
    """Swap par-rate row over discount factors: fixed leg plus final flow."""
    X = np.asarray(X, dtype=float).reshape(-1)
    sched = quote.schedule()
    idx = _indices_on_grid(sched.times, X, "fixed-leg")
    row = np.zeros(X.shape[0])
    np.add.at(row, idx, quote.rate * sched.year_fractions)
    row[idx[-1]] += 1.0
    return row, 1.0


def irs_forward_row(quote: Quote, discount: DiscountInput, X,
                    float_frequency: int = 2) -> tuple:
    """Swap par-rate row over forward rates, given an exogenous discount curve.

    Unknowns are the forwards fixing over each floating period; the fixed
    leg, discounted off the exogenous curve, forms the right-hand side.
    """
    if discount is None:
        raise MissingDiscount("an exogenous discount curve is required for irs")
    X = np.asarray(X, dtype=float).reshape(-1)
    fixed = quote.schedule()
    floating = Schedule.regular(quote.maturity, float_frequency)
    idx = _indices_on_grid(floating.times, X, "floating-leg")
    row = np.zeros(X.shape[0])
    np.add.at(row, idx,
              discount.discount(floating.times) * floating.year_fractions)
    rhs = quote.rate * float(
        np.sum(fixed.year_fractions * discount.discount(fixed.times)))
    return row, rhs


def cds_rows(quote: Quote, discount: DiscountInput, X) -> tuple:
    """Protection-premium balance row over survival probabilities.

    The protection-leg integral is discretised on the premium grid; the
    right-hand side is the loss-given-default ``1 - R``.
    """
    if discount is None:
        raise MissingDiscount("an exogenous discount curve is required for cds")
    if quote.frequency != 4:
        raise InconsistentGrid("cds premium payments are quarterly")
    X = np.asarray(X, dtype=float).reshape(-1)
    sched = quote.schedule()
    idx = _indices_on_grid(sched.times, X, "premium")
    S = quote.rate
    R = quote.recovery
    d = sched.year_fractions
    p_now = discount.discount(sched.times)
    p_prev = discount.discount(np.concatenate([[0.0], sched.times[:-1]]))
    row = np.zeros(X.shape[0])
    p = sched.times.shape[0]
    for k in range(p - 1):
        row[idx[k]] += S * d[k] * p_now[k] + (1.0 - R) * (p_prev[k] - p_now[k])
    row[idx[-1]] += S * d[-1] * p_now[-1] + (1.0 - R) * p_prev[-1]
    return row, 1.0 - R


def cds_system(quotes, discount: DiscountInput, X) -> MarketFitSystem:
    """Survival-probability system for one issuer's CDS quotes at one date.

    All quotes must share the quarterly premium grid and the recovery rate;
    ``X`` is that common grid (the unknown curve points).
    """
    quotes = list(quotes)
    if not quotes:
        raise EmptyInput("no cds quotes")
    recov = {q.recovery for q in quotes}
    if len(recov) != 1:
        raise InconsistentGrid("all cds quotes must share one recovery rate")
    return assemble_system(quotes, X, discount=discount)


def _noise_from_bidask(quotes) -> np.ndarray | None:
    if not any(q.bid is not None for q in quotes):
        return None
    if not all(q.bid is not None for q in quotes):
        raise InvalidSpec("bid/ask must be present on all quotes or none")
    var = np.array([(q.ask - q.rate) ** 2 for q in quotes])
    return np.diag(var)


def assemble_system(quotes, X, discount: DiscountInput | None = None,
                    with_noise: bool = False,
                    float_frequency: int = 2) -> MarketFitSystem:
    """Stack quote rows of one instrument kind into a market-fit system.

    Duplicate maturities make the stacked matrix rank deficient and are
    rejected at construction.  ``with_noise`` attaches a diagonal noise
    covariance built from squared ask-mid differences.
    """
    quotes = list(quotes)
    if not quotes:
        raise EmptyInput("no quotes")
    kinds = {q.kind for q in quotes}
    if len(kinds) != 1:
        raise InvalidSpec(f"mixed instrument kinds in one system: {sorted(kinds)}")
    kind = kinds.pop()
    X = np.asarray(X, dtype=float).reshape(-1)
    rows, rhs = [], []
    for q in quotes:
        if kind == "bond":
            row, r = bond_row(q, X)
        elif kind == "ois":
            row, r = ois_row(q, X)
        elif kind == "irs":
            row, r = irs_forward_row(q, discount, X, float_frequency)
        else:
            row, r = cds_rows(q, discount, X)
        rows.append(row)
        rhs.append(r)
    sigma = _noise_from_bidask(quotes) if with_noise else None
    labels = tuple(f"{kind}:{q.maturity:g}" for q in quotes)
    return MarketFitSystem(np.vstack(rows), np.array(rhs), X, sigma, labels)


def reprice(quote: Quote, curve_values: np.ndarray, X,
            discount: DiscountInput | None = None,
            float_frequency: int = 2) -> float:
    """Evaluate the quote's pricing relation on given curve values.

    Returns the model quote implied by ``curve_values`` at the points ``X``;
    used for round-trip checks of assembled systems.
    """
    X = np.asarray(X, dtype=float).reshape(-1)
    v = np.asarray(curve_values, dtype=float).reshape(-1)
    sched = quote.schedule()
    if quote.kind == "bond":
        idx = _indices_on_grid(sched.times, X, "coupon")
        return float(quote.coupon * np.sum(sched.year_fractions * v[idx])
                     + v[idx[-1]])
    if quote.kind == "ois":
        idx = _indices_on_grid(sched.times, X, "fixed-leg")
        annuity = float(np.sum(sched.year_fractions * v[idx]))
        return (1.0 - v[idx[-1]]) / annuity
    if quote.kind == "irs":
        floating = Schedule.regular(quote.maturity, float_frequency)
        idx = _indices_on_grid(floating.times, X, "floating-leg")
        flt = float(np.sum(discount.discount(floating.times)
                           * floating.year_fractions * v[idx]))
        ann = float(np.sum(sched.year_fractions
                           * discount.discount(sched.times)))
        return flt / ann
    # cds: solve the balance relation for the spread
    idx = _indices_on_grid(sched.times, X, "premium")
    R = quote.recovery
    d = sched.year_fractions
    p_now = discount.discount(sched.times)
    p_prev = discount.discount(np.concatenate([[0.0], sched.times[:-1]]))
    q = v[idx]
    protection = float(np.sum((p_prev[:-1] - p_now[:-1]) * q[:-1])
                       + p_prev[-1] * q[-1])
    premium = float(np.sum(d * p_now * q))
    return (1.0 - R) * (1.0 - protection) / premium


# ---------------------------------------------------------------------------
# grids and CSV ingestion
# ---------------------------------------------------------------------------

def annual_grid(max_maturity: float) -> np.ndarray:
    """Integer-year curve points 1, 2, ..., max_maturity."""
    return np.arange(1, int(round(max_maturity)) + 1, dtype=float)


def quarterly_grid(max_maturity: float) -> np.ndarray:
    """Quarterly curve points 0.25, 0.5, ..., max_maturity."""
    return np.arange(1, int(round(4 * max_maturity)) + 1, dtype=float) / 4.0


QUOTE_HEADER = ["kind", "maturity_years", "quote", "coupon", "recovery",
                "frequency", "bid", "ask"]
DISCOUNT_HEADER = ["tenor_years", "rate"]


def _parse_float(text: str, default=None):
    text = text.strip()
    if not text:
        return default
    return float(text)


def read_quotes_csv(path) -> list:
    """Parse a quote CSV (one file per quotation date) into Quote objects."""
    path = Path(path)
    quotes = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInput(f"{path} is empty") from None
        if [h.strip().lower() for h in header] != QUOTE_HEADER:
            raise QuoteParseError(1, f"expected header {','.join(QUOTE_HEADER)}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != len(QUOTE_HEADER):
                raise QuoteParseError(lineno, f"expected {len(QUOTE_HEADER)} "
                                              f"fields, got {len(rec)}")
            try:
                quotes.append(Quote(
                    kind=rec[0],
                    maturity=float(rec[1]),
                    rate=float(rec[2]),
                    coupon=_parse_float(rec[3], 0.0),
                    recovery=_parse_float(rec[4], 0.0),
                    frequency=int(_parse_float(rec[5], 1.0)),
                    bid=_parse_float(rec[6]),
                    ask=_parse_float(rec[7]),
                ))
            except (ValueError, InvalidSpec) as exc:
                raise QuoteParseError(lineno, str(exc)) from exc
    if not quotes:
        raise EmptyInput(f"{path} contains no quotes")
    return quotes


def read_discount_csv(path) -> DiscountInput:
    """Parse a discount-input CSV of tenor/zero-rate pairs."""
    path = Path(path)
    tenors, rates = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInput(f"{path} is empty") from None
        if [h.strip().lower() for h in header] != DISCOUNT_HEADER:
            raise QuoteParseError(1, f"expected header {','.join(DISCOUNT_HEADER)}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != 2:
                raise QuoteParseError(lineno, "expected 2 fields")
            try:
                tenors.append(float(rec[0]))
                rates.append(float(rec[1]))
            except ValueError as exc:
                raise QuoteParseError(lineno, str(exc)) from exc
    return DiscountInput(np.array(tenors), np.array(rates))


def write_quotes_csv(path, quotes) -> None:
    """Write quotes in the canonical CSV layout."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(QUOTE_HEADER)
        for q in quotes:
            writer.writerow([
                q.kind, f"{q.maturity:g}", f"{q.rate:.12g}",
                f"{q.coupon:.12g}" if q.coupon else "",
                f"{q.recovery:.12g}" if q.recovery else "",
                q.frequency,
                f"{q.bid:.12g}" if q.bid is not None else "",
                f"{q.ask:.12g}" if q.ask is not None else "",
            ])


def write_discount_csv(path, discount: DiscountInput) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DISCOUNT_HEADER)
        for t, r in zip(discount.tenors, discount.rates):
            writer.writerow([f"{t:g}", f"{r:.12g}"])
