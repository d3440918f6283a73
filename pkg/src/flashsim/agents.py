"""Trader agent behaviours: zero-intelligence order placement calibrated by
type-specific timescales, inventory caps and reaction rules, plus the
distressed sellers that liquidate fund positions with market orders.

Agents wake on Poisson schedules, observe their single asset's book and
submit orders directly; the engine routes the resulting fills. All
randomness comes from each agent's own stream so trials replay exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .orderbook import BUY, CONTINUOUS, SELL, STEPS_PER_MINUTE, LimitOrderBook

#: Small traders may quote up to a thousand ticks away from the same-side
#: best, far enough from prevailing prices to act as stub quotes.
SMALL_TRADER_SPREAD = 1000

FUNDAMENTAL_TOXIC_TICKS = 70
MARKET_MAKER_TOXIC_TICKS = 24

#: fundamental traders ignore toxic-flow withdrawal once the price is this
#: far through their private valuation: far-from-fundamental prices are
#: exactly what value traders react to
DEEP_VALUE_DISCOUNT = 0.05
#: ... but only once the collapse pauses: price change over the last ten
#: seconds must stay inside this band. A lone seller pauses between orders;
#: a collective fire sale never does, and cuts through the value floor.
DEEP_VALUE_CALM_TICKS = 20
DEEP_VALUE_CALM_STEPS = 200


class Stream:
    """Per-agent random stream with pooled draws (scalar numpy calls are too
    slow for the hot loop)."""

    __slots__ = ("rng", "_u", "_ui", "_e", "_ei", "_g", "_gi")
    POOL = 256

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self._u: list[float] = []
        self._e: list[float] = []
        self._g: list[float] = []
        self._ui = self._ei = self._gi = 0

    def uniform(self) -> float:
        i = self._ui
        if i == len(self._u):
            self._u = self.rng.random(self.POOL).tolist()
            i = 0
        self._ui = i + 1
        return self._u[i]

    def exponential(self) -> float:
        i = self._ei
        if i == len(self._e):
            self._e = self.rng.standard_exponential(self.POOL).tolist()
            i = 0
        self._ei = i + 1
        return self._e[i]

    def gauss(self) -> float:
        i = self._gi
        if i == len(self._g):
            self._g = self.rng.standard_normal(self.POOL).tolist()
            i = 0
        self._gi = i + 1
        return self._g[i]

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive."""
        return lo + int(self.uniform() * (hi - lo + 1))


def poisson_gap(mean_steps: float, stream: Stream) -> int:
    """Exponential wake-up gap with the given mean, at least one step."""
    gap = int(round(stream.exponential() * mean_steps))
    return gap if gap >= 1 else 1


# ---------------------------------------------------------------------------
# decision kernels


def hft_buy_probability(q_bid: int, q_ask: int) -> float:
    """Order side skew toward book imbalance: Q_bid / (Q_bid + Q_ask)."""
    total = q_bid + q_ask
    if total == 0:
        return 0.5
    return q_bid / total


def toxic_flow_check(book: LimitOrderBook, now: int, threshold_ticks: int) -> bool:
    """True when the one-minute price trend strictly exceeds the threshold,
    telling the agent to withdraw. Always false until a minute of
    continuous trading has accumulated after the opening auction."""
    if now < book.opening_steps + STEPS_PER_MINUTE:
        return False
    trend = book.last_trade_price - book.price_at(now - STEPS_PER_MINUTE)
    return trend > threshold_ticks or -trend > threshold_ticks


def distressed_order_size(remaining: int, eta: float, trailing_volume: int) -> int:
    """Sell quantity capped at a fraction of trailing one-minute volume,
    with a one-share floor so sellers always make progress."""
    cap = int(math.floor(eta * trailing_volume))
    if cap < 1:
        cap = 1
    return remaining if remaining < cap else cap


# ---------------------------------------------------------------------------
# population table


@dataclass(frozen=True)
class AgentSpec:
    """Per-type calibration: wake timescale, inventory bound and population,
    with desk-scale divisors applied to population and (for most types)
    inventory."""

    kind: str
    timescale_s: float
    inventory_limit: float | None   # unscaled shares; None = unbounded
    population: int                 # unscaled count
    order_size: int
    scale_divisor: int = 32
    #: warehouse liquidity providers keep per-agent caps unscaled so their
    #: aggregate capacity tracks total volume (populations already divide
    #: by the scale divisor); recyclers and noise traders scale caps too
    scale_inventory: bool = True

    def __post_init__(self):
        if self.timescale_s <= 0:
            raise ValueError("timescale must be positive")
        if self.scale_divisor < 1:
            raise ValueError("scale divisor must be >= 1")

    @property
    def scaled_population(self) -> int:
        return max(int(self.population / self.scale_divisor), 1)

    @property
    def scaled_inventory(self) -> int | None:
        if self.inventory_limit is None:
            return None
        divisor = self.scale_divisor if self.scale_inventory else 1
        return max(int(round(self.inventory_limit / divisor)), 1)

    def mean_gap_steps(self, dt_ms: int) -> float:
        return self.timescale_s * 1000.0 / dt_ms


#: HFT inventory follows the reported 3000-contract total across 16 firms.
HFT_TOTAL_INVENTORY = 3000.0
HFT_UNSCALED_COUNT = 16


def default_agent_specs(scale_divisor: int = 32,
                        order_sizes: dict[str, int] | None = None) -> dict[str, AgentSpec]:
    # sizes calibrated so a lone distressed seller crashes its asset by
    # roughly 5-25% while collective fire sales cut much deeper; the
    # published phase boundaries depend on that separation
    sizes = {"small": 1, "fundamental": 25, "opportunistic": 5,
             "market_maker": 30, "hft": 5}
    if order_sizes:
        sizes.update(order_sizes)
    return {
        "small": AgentSpec("small", 7200.0, None, 6500, sizes["small"], scale_divisor),
        "fundamental_buy": AgentSpec("fundamental_buy", 60.0, None, 1250,
                                     sizes["fundamental"], scale_divisor),
        "fundamental_sell": AgentSpec("fundamental_sell", 60.0, None, 1250,
                                      sizes["fundamental"], scale_divisor),
        "opportunistic": AgentSpec("opportunistic", 120.0, 120.0, 1600,
                                   sizes["opportunistic"], scale_divisor),
        "market_maker": AgentSpec("market_maker", 20.0, 120.0, 320,
                                  sizes["market_maker"], scale_divisor,
                                  scale_inventory=False),
        "hft": AgentSpec("hft", 0.35, HFT_TOTAL_INVENTORY / HFT_UNSCALED_COUNT,
                         16, sizes["hft"], scale_divisor),
    }


# ---------------------------------------------------------------------------
# trader agents


class TraderAgent:
    """Common state: one agent trades one asset via one book."""

    __slots__ = ("agent_id", "book", "stream", "inventory", "mean_gap",
                 "order_size", "inventory_limit", "open_ids", "withdrawn")

    def __init__(self, agent_id: int, book: LimitOrderBook, stream: Stream,
                 spec: AgentSpec, dt_ms: int):
        self.agent_id = agent_id
        self.book = book
        self.stream = stream
        self.inventory = 0
        self.mean_gap = spec.mean_gap_steps(dt_ms)
        self.order_size = spec.order_size
        self.inventory_limit = spec.scaled_inventory
        self.open_ids: list[int] = []
        self.withdrawn = False

    def next_wakeup(self, now: int) -> int:
        return now + poisson_gap(self.mean_gap, self.stream)

    def _cancel_open(self) -> None:
        book = self.book
        for oid in self.open_ids:
            book.cancel_order(oid)
        self.open_ids.clear()

    def _trim_open(self, keep: int) -> None:
        """Purge filled orders and cancel the oldest beyond ``keep``."""
        book = self.book
        live = [oid for oid in self.open_ids if book.order(oid) is not None]
        while len(live) > keep:
            book.cancel_order(live.pop(0))
        self.open_ids = live

    def _submit(self, side: int, price: int | None, qty: int, now: int, trades):
        oid, fills = self.book.submit_order(self.agent_id, side, price, qty, now)
        if fills:
            trades.extend(fills)
        if self.book.order(oid) is not None:
            self.open_ids.append(oid)

    def _capped(self, side: int, qty: int) -> int:
        """Shrink qty so any fill keeps |inventory| within the limit,
        counting the exposure of still-open orders."""
        limit = self.inventory_limit
        if limit is None:
            return qty
        exposure = 0
        book = self.book
        for oid in self.open_ids:
            order = book.order(oid)
            if order is not None and order.side == side:
                exposure += order.quantity
        if side == BUY:
            room = limit - self.inventory - exposure
        else:
            room = limit + self.inventory - exposure
        return qty if qty <= room else int(room)

    def wake(self, now: int) -> list:
        raise NotImplementedError


class SmallTrader(TraderAgent):
    """Minimal one-share limit orders, uniformly priced within a thousand
    ticks of the same-side best. Far orders act as stub quotes; fire and
    forget, never cancelled."""

    __slots__ = ()

    def wake(self, now: int) -> list:
        trades: list = []
        book = self.book
        if self.stream.uniform() < 0.5:
            anchor = book.best_bid()
            if anchor is None:
                anchor = book.last_trade_price
            price = self.stream.randint(anchor - SMALL_TRADER_SPREAD, anchor)
            self._submit(BUY, max(price, 1), self.order_size, now, trades)
        else:
            anchor = book.best_ask()
            if anchor is None:
                anchor = book.last_trade_price
            price = self.stream.randint(anchor, anchor + SMALL_TRADER_SPREAD)
            self._submit(SELL, max(price, 1), self.order_size, now, trades)
        self.open_ids.clear()   # small traders never manage resting orders
        return trades


class FundamentalTrader(TraderAgent):
    """Holds a private valuation and trades only with a surplus: buyers pay
    at most their valuation, sellers accept at least theirs. Orders join the
    wall within ten ticks of the same-side best (balancing impact against
    immediacy), so in calm markets fundamentals are the dominant standing
    depth; they withdraw under toxic one-minute trends, which is what lets
    distressed flow punch through."""

    __slots__ = ("side", "valuation")

    #: quotes improve the same-side best by up to this many ticks
    PEG_TICKS = 10
    #: single working order: the standing book stays a thin crust, so a
    #: sustained distressed sweep gaps through it (the crash mechanism),
    #: while the valuation anchor pulls transient spikes back
    MAX_OPEN = 1

    def __init__(self, agent_id, book, stream, spec, dt_ms, side: int,
                 valuation_mean: int, valuation_std: float):
        super().__init__(agent_id, book, stream, spec, dt_ms)
        self.side = side
        self.valuation = max(1, int(round(valuation_mean
                                          + valuation_std * stream.gauss())))

    def wake(self, now: int) -> list:
        trades: list = []
        book = self.book
        last = book.last_trade_price
        self.withdrawn = toxic_flow_check(book, now, FUNDAMENTAL_TOXIC_TICKS)
        if self.withdrawn:
            # deep-value override: a price far through the valuation is an
            # opportunity, not toxic flow -- but only once the collapse
            # pauses. Finite value-buyer flow floors a lone seller's crash
            # near the discount; relentless collective fire sales keep the
            # tape falling and cut through the floor.
            if self.side == BUY:
                bargain = last < self.valuation * (1.0 - DEEP_VALUE_DISCOUNT)
            else:
                bargain = last > self.valuation * (1.0 + DEEP_VALUE_DISCOUNT)
            recent = book.price_at(now - DEEP_VALUE_CALM_STEPS)
            calm = abs(last - recent) <= DEEP_VALUE_CALM_TICKS
            if not (bargain and calm):
                return trades
            self.withdrawn = False
        self._trim_open(self.MAX_OPEN - 1)
        if book.phase != CONTINUOUS:
            # auctions: band around the prevailing price, capped by the
            # private valuation. Sides overlap only at the touch, so the
            # clear executes little and leaves both walls standing for the
            # continuous session; pegging to the crossed auction queue
            # would instead drag the clearing price around
            offset = self.stream.randint(1, self.PEG_TICKS) - 1
            if self.side == BUY:
                price = min(self.valuation, last - offset)
            else:
                price = max(self.valuation, last + offset)
        elif self.side == BUY:
            base = book.best_bid()
            if base is None:
                base = last
            price = min(self.valuation, base + self.stream.randint(1, self.PEG_TICKS))
        else:
            base = book.best_ask()
            if base is None:
                base = last
            price = max(self.valuation, base - self.stream.randint(1, self.PEG_TICKS))
        self._submit(self.side, max(price, 1), self.order_size, now, trades)
        return trades


class OpportunisticTrader(TraderAgent):
    """Herding flow: order side follows a mean-reverting random walk on the
    buy probability, clipped to [0.2, 0.8]; joins the same-side best."""

    __slots__ = ("buy_prob",)
    PROB_STEP_STD = 0.05
    PROB_REVERSION = 0.05

    def __init__(self, agent_id, book, stream, spec, dt_ms):
        super().__init__(agent_id, book, stream, spec, dt_ms)
        self.buy_prob = 0.5

    def wake(self, now: int) -> list:
        trades: list = []
        p = self.buy_prob + self.PROB_REVERSION * (0.5 - self.buy_prob) \
            + self.PROB_STEP_STD * self.stream.gauss()
        self.buy_prob = min(max(p, 0.2), 0.8)
        self._cancel_open()
        book = self.book
        side = BUY if self.stream.uniform() < self.buy_prob else SELL
        if side == BUY:
            price = book.best_bid()
            if price is None:
                price = book.last_trade_price
            ask = book.best_ask()
            if ask is not None and price >= ask:
                price = ask - 1
        else:
            price = book.best_ask()
            if price is None:
                price = book.last_trade_price
            bid = book.best_bid()
            if bid is not None and price <= bid:
                price = bid + 1
        qty = self._capped(side, self.order_size)
        if qty > 0 and price >= 1:
            self._submit(side, price, qty, now, trades)
        return trades


class MarketMaker(TraderAgent):
    """Two-sided quotes around the last trade. Spreads widen under a half-
    threshold trend, quoting stops entirely under toxic flow, and a full
    inventory flips the agent into passive liquidation until the position
    halves."""

    __slots__ = ("liquidating", "base_offset")

    def __init__(self, agent_id, book, stream, spec, dt_ms, base_offset: int = 1):
        super().__init__(agent_id, book, stream, spec, dt_ms)
        self.liquidating = False
        self.base_offset = base_offset

    def wake(self, now: int) -> list:
        trades: list = []
        book = self.book
        self.withdrawn = toxic_flow_check(book, now, MARKET_MAKER_TOXIC_TICKS)
        self._cancel_open()
        if self.withdrawn:
            return trades

        limit = self.inventory_limit
        inv = self.inventory
        if self.liquidating and abs(inv) <= limit / 2:
            self.liquidating = False
        if not self.liquidating and abs(inv) >= limit:
            self.liquidating = True

        trend = book.last_trade_price - book.price_at(now - STEPS_PER_MINUTE)
        offset = self.base_offset
        if abs(trend) > MARKET_MAKER_TOXIC_TICKS // 2:
            # retreat from a directional half-threshold trend: quotes step
            # well off the touch, so sustained attacks stop being absorbed
            # long before the full withdrawal threshold
            offset *= 12
        last = book.last_trade_price
        bid_px, ask_px = last - offset, last + offset
        # stay passive: never cross the opposite best
        ask = book.best_ask()
        if ask is not None and bid_px >= ask:
            bid_px = ask - 1
        bid = book.best_bid()
        if bid is not None and ask_px <= bid:
            ask_px = bid + 1

        quote_bid = not self.liquidating or inv < 0
        quote_ask = not self.liquidating or inv > 0
        if quote_bid and bid_px >= 1:
            qty = self._capped(BUY, self.order_size)
            if qty > 0:
                self._submit(BUY, bid_px, qty, now, trades)
        if quote_ask and ask_px >= 1:
            qty = self._capped(SELL, self.order_size)
            if qty > 0:
                self._submit(SELL, ask_px, qty, now, trades)
        return trades


class HftTrader(TraderAgent):
    """Fast passive quoting skewed by top-of-book imbalance; saturated
    inventory is aggressively reduced with market orders until halved."""

    __slots__ = ("reducing",)

    def __init__(self, agent_id, book, stream, spec, dt_ms):
        super().__init__(agent_id, book, stream, spec, dt_ms)
        self.reducing = False

    def wake(self, now: int) -> list:
        trades: list = []
        book = self.book
        self._cancel_open()
        limit = self.inventory_limit
        inv = self.inventory
        if self.reducing and abs(inv) <= limit / 2:
            self.reducing = False
        if not self.reducing and abs(inv) >= limit:
            self.reducing = True

        if self.reducing and inv != 0:
            side = SELL if inv > 0 else BUY
            qty = min(self.order_size, abs(inv) - int(limit // 2))
            if qty > 0:
                oid, fills = book.submit_order(self.agent_id, side, None, qty, now)
                trades.extend(fills)
            return trades

        # quote around the last trade like a (fast) market maker, clamped
        # passive; unlike slower makers, HFTs keep quoting through distress
        p_buy = hft_buy_probability(book.qty_at_best(BUY), book.qty_at_best(SELL))
        side = BUY if self.stream.uniform() < p_buy else SELL
        last = book.last_trade_price
        if side == BUY:
            price = last - 1
            ask = book.best_ask()
            if ask is not None and price >= ask:
                price = ask - 1
        else:
            price = last + 1
            bid = book.best_bid()
            if bid is not None and price <= bid:
                price = bid + 1
        qty = self._capped(side, self.order_size)
        if qty > 0 and price >= 1:
            self._submit(side, price, qty, now, trades)
        return trades


class DistressedSeller:
    """Market-sells a position down to zero in chunks capped at a fraction
    eta of trailing one-minute volume, waking with mean interval delta.

    Owned either by the exogenous shock (tracks its own remaining quantity)
    or by a fund (remaining follows the fund's live position; the engine
    books fills back to the fund)."""

    __slots__ = ("agent_id", "book", "stream", "fund_id", "asset_id",
                 "remaining", "eta", "mean_gap", "active", "epoch",
                 "open_order_id", "scheduled")

    def __init__(self, agent_id: int, book: LimitOrderBook, stream: Stream,
                 eta: float, delta_s: float, dt_ms: int,
                 fund_id: int | None = None, quantity: int = 0):
        self.agent_id = agent_id
        self.book = book
        self.stream = stream
        self.fund_id = fund_id
        self.asset_id = book.asset_id
        self.remaining = quantity
        self.eta = eta
        self.mean_gap = delta_s * 1000.0 / dt_ms
        self.active = False
        self.epoch = 0
        self.open_order_id: int | None = None
        self.scheduled = False   # engine guard against duplicate wake events

    def next_wakeup(self, now: int) -> int:
        return now + poisson_gap(self.mean_gap, self.stream)

    def activate(self, quantity: int) -> None:
        self.remaining = quantity
        self.active = quantity > 0
        self.epoch += 1

    def deactivate(self) -> None:
        self.active = False
        self.epoch += 1

    def wake(self, now: int) -> list:
        trades: list = []
        if not self.active or self.remaining <= 0:
            return trades
        if self.open_order_id is not None:
            if self.book.order(self.open_order_id) is not None:
                return trades   # queued in an auction; wait for the clear
            self.open_order_id = None
        qty = distressed_order_size(self.remaining,
                                    self.eta,
                                    self.book.trailing_minute_volume(now))
        oid, fills = self.book.submit_order(self.agent_id, SELL, None, qty, now)
        if self.book.order(oid) is not None:
            self.open_order_id = oid
        if fills:
            trades.extend(fills)
        return trades
