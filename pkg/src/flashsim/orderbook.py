"""Per-asset limit order book: continuous double auction with price-time
priority, plus opening and volatility auctions.

Prices are integer ticks (1 tick = 1 currency cent). All books start at the
same price. Trades define the asset price; between trades the price is the
last traded price. Market orders never rest: any unfilled remainder is
cancelled immediately (continuous phase) or at the auction clear.
"""

from __future__ import annotations

import heapq
from bisect import bisect_right
from collections import deque
from typing import NamedTuple

BUY = 0
SELL = 1

# Book phases.
OPENING_AUCTION = 0
CONTINUOUS = 1
VOLATILITY_AUCTION = 2

SIDE_NAMES = {BUY: "buy", SELL: "sell"}

# One simulated second / minute in 50 ms steps.
STEPS_PER_SECOND = 20
STEPS_PER_MINUTE = 1200

#: Volatility auction: a fall of >= 1.3% over one second suspends matching
#: for five seconds.
VOLATILITY_FALL_PER_MILLE = 13
VOLATILITY_WINDOW_STEPS = STEPS_PER_SECOND
VOLATILITY_AUCTION_STEPS = 5 * STEPS_PER_SECOND


class Trade(NamedTuple):
    time: int
    price: int
    quantity: int
    aggressor_side: int
    buyer_id: int
    seller_id: int


class Order:
    """A resting or incoming order. ``price`` is None for market orders."""

    __slots__ = ("id", "agent_id", "side", "price", "quantity", "submit_time", "live")

    def __init__(self, oid: int, agent_id: int, side: int, price: int | None,
                 quantity: int, submit_time: int):
        self.id = oid
        self.agent_id = agent_id
        self.side = side
        self.price = price
        self.quantity = quantity
        self.submit_time = submit_time
        self.live = True


class LimitOrderBook:
    """Price-time priority book for one asset.

    Within a price level orders are FIFO by arrival. In the continuous phase
    marketable volume executes immediately at resting-order prices; in an
    auction phase orders queue without matching until :meth:`clear_auction`.
    """

    def __init__(self, asset_id: int, p0: int = 10_000,
                 opening_auction_steps: int = STEPS_PER_MINUTE):
        self.asset_id = asset_id
        self.p0 = p0
        self.last_trade_price = p0
        self.last_trade_step = -1
        self.phase = OPENING_AUCTION
        self.opening_steps = opening_auction_steps
        self.auction_end_step = opening_auction_steps
        self._next_order_id = 0

        # price level -> FIFO queue of live orders; parallel per-level volume.
        self._bid_levels: dict[int, deque[Order]] = {}
        self._ask_levels: dict[int, deque[Order]] = {}
        self._bid_qty: dict[int, int] = {}
        self._ask_qty: dict[int, int] = {}
        self._bid_heap: list[int] = []   # negated prices
        self._ask_heap: list[int] = []
        self._orders: dict[int, Order] = {}
        # market orders queued during auctions (infinite price priority)
        self._market_buys: deque[Order] = deque()
        self._market_sells: deque[Order] = deque()

        self.total_bid_qty = 0
        self.total_ask_qty = 0

        # trade log as parallel columns (time, price, qty, aggressor, buyer, seller)
        self.trade_steps: list[int] = []
        self.trade_prices: list[int] = []
        self.trade_qtys: list[int] = []
        self.trade_aggrs: list[int] = []
        self.trade_buyers: list[int] = []
        self.trade_sellers: list[int] = []

        # price change points: price_at(t) = last trade price at end of step t
        self._pc_steps: list[int] = [-1]
        self._pc_prices: list[int] = [p0]

        # rolling one-minute executed volume
        self._vol_events: deque[tuple[int, int]] = deque()
        self._vol_sum = 0

    # ------------------------------------------------------------------
    # market data

    def best_bid(self) -> int | None:
        heap, qty = self._bid_heap, self._bid_qty
        while heap:
            price = -heap[0]
            if qty.get(price, 0) > 0:
                return price
            heapq.heappop(heap)
        return None

    def best_ask(self) -> int | None:
        heap, qty = self._ask_heap, self._ask_qty
        while heap:
            price = heap[0]
            if qty.get(price, 0) > 0:
                return price
            heapq.heappop(heap)
        return None

    def qty_at_best(self, side: int) -> int:
        if side == BUY:
            price = self.best_bid()
            return self._bid_qty[price] if price is not None else 0
        price = self.best_ask()
        return self._ask_qty[price] if price is not None else 0

    def price_at(self, step: int) -> int:
        """Last trade price as of the end of ``step`` (p0 before any trade)."""
        idx = bisect_right(self._pc_steps, step) - 1
        return self._pc_prices[idx]

    def trailing_minute_volume(self, now: int) -> int:
        """Executed share volume over the previous simulated minute."""
        events, cutoff = self._vol_events, now - STEPS_PER_MINUTE
        while events and events[0][0] <= cutoff:
            self._vol_sum -= events.popleft()[1]
        return self._vol_sum

    def order(self, order_id: int) -> Order | None:
        return self._orders.get(order_id)

    # ------------------------------------------------------------------
    # order entry

    def submit_order(self, agent_id: int, side: int, price: int | None,
                     quantity: int, now: int) -> tuple[int, list[Trade]]:
        """Submit a limit (price given) or market (price None) order.

        Returns the assigned order id and the list of immediate trades.
        Market remainders never rest; in an auction phase nothing matches
        and the order queues until the clear.
        """
        if quantity <= 0:
            raise ValueError(f"order quantity must be positive, got {quantity}")
        if price is not None and price < 1:
            raise ValueError(f"limit price must be >= 1 tick, got {price}")

        oid = self._next_order_id
        self._next_order_id += 1
        order = Order(oid, agent_id, side, price, quantity, now)

        if self.phase != CONTINUOUS:
            if price is None:
                (self._market_buys if side == BUY else self._market_sells).append(order)
                self._orders[oid] = order
            else:
                self._rest(order)
            return oid, []

        trades = self._match(order, now)
        if order.quantity > 0 and price is not None:
            self._rest(order)
        # else: filled, or market remainder dropped
        return oid, trades

    def cancel_order(self, order_id: int) -> bool:
        """Remove a resting order. Returns False if not found (not fatal)."""
        order = self._orders.pop(order_id, None)
        if order is None or not order.live:
            return False
        order.live = False
        if order.price is not None:
            if order.side == BUY:
                self._bid_qty[order.price] -= order.quantity
                self.total_bid_qty -= order.quantity
            else:
                self._ask_qty[order.price] -= order.quantity
                self.total_ask_qty -= order.quantity
        order.quantity = 0
        return True

    # ------------------------------------------------------------------
    # auctions

    def check_volatility_trigger(self, now: int) -> bool:
        """Enter a five-second volatility auction if the last trade price has
        fallen by at least 1.3% relative to one second earlier."""
        if self.phase != CONTINUOUS:
            raise RuntimeError("volatility trigger is only checked in continuous phase")
        ref = self.price_at(now - VOLATILITY_WINDOW_STEPS)
        if (ref - self.last_trade_price) * 1000 >= VOLATILITY_FALL_PER_MILLE * ref:
            self.phase = VOLATILITY_AUCTION
            self.auction_end_step = now + VOLATILITY_AUCTION_STEPS
            return True
        return False

    def clear_auction(self, now: int) -> tuple[int | None, list[Trade], list[Order]]:
        """Single-price clear: the price maximising executable volume, ties
        broken by closeness to the last trade price, then lower price.

        Returns (clearing price or None, trades, cancelled market orders with
        their unfilled quantity still set). Transitions to continuous phase.
        """
        if self.phase == CONTINUOUS:
            raise RuntimeError("clear_auction called while continuous")
        if now < self.auction_end_step:
            raise RuntimeError("auction duration has not elapsed")

        mkt_buy = sum(o.quantity for o in self._market_buys if o.live)
        mkt_sell = sum(o.quantity for o in self._market_sells if o.live)
        bid_levels = sorted((p for p, q in self._bid_qty.items() if q > 0), reverse=True)
        ask_levels = sorted(p for p, q in self._ask_qty.items() if q > 0)

        candidates = set(bid_levels) | set(ask_levels)
        candidates.add(self.last_trade_price)
        best_price, best_exec = None, 0
        for cand in sorted(candidates):
            demand = mkt_buy + sum(self._bid_qty[p] for p in bid_levels if p >= cand)
            supply = mkt_sell + sum(self._ask_qty[p] for p in ask_levels if p <= cand)
            executable = min(demand, supply)
            if executable > best_exec:
                best_price, best_exec = cand, executable
            elif executable == best_exec and executable > 0:
                if (abs(cand - self.last_trade_price), cand) < \
                        (abs(best_price - self.last_trade_price), best_price):
                    best_price = cand

        trades: list[Trade] = []
        if best_exec > 0:
            trades = self._cross_at(best_price, best_exec, now)

        cancelled = [o for o in self._market_buys if o.live]
        cancelled += [o for o in self._market_sells if o.live]
        for order in cancelled:
            order.live = False
            self._orders.pop(order.id, None)
        self._market_buys.clear()
        self._market_sells.clear()
        self.phase = CONTINUOUS
        return (best_price if best_exec > 0 else None), trades, cancelled

    # ------------------------------------------------------------------
    # internals

    def _rest(self, order: Order) -> None:
        price = order.price
        if order.side == BUY:
            level = self._bid_levels.get(price)
            if level is None:
                level = self._bid_levels[price] = deque()
            if self._bid_qty.get(price, 0) == 0:
                heapq.heappush(self._bid_heap, -price)
            level.append(order)
            self._bid_qty[price] = self._bid_qty.get(price, 0) + order.quantity
            self.total_bid_qty += order.quantity
        else:
            level = self._ask_levels.get(price)
            if level is None:
                level = self._ask_levels[price] = deque()
            if self._ask_qty.get(price, 0) == 0:
                heapq.heappush(self._ask_heap, price)
            level.append(order)
            self._ask_qty[price] = self._ask_qty.get(price, 0) + order.quantity
            self.total_ask_qty += order.quantity
        self._orders[order.id] = order

    def _record_trade(self, price: int, qty: int, aggressor: int,
                      buyer: int, seller: int, now: int) -> None:
        self.trade_steps.append(now)
        self.trade_prices.append(price)
        self.trade_qtys.append(qty)
        self.trade_aggrs.append(aggressor)
        self.trade_buyers.append(buyer)
        self.trade_sellers.append(seller)
        if self.last_trade_step == now:
            self._pc_prices[-1] = price
        else:
            self._pc_steps.append(now)
            self._pc_prices.append(price)
        self.last_trade_price = price
        self.last_trade_step = now
        self._vol_events.append((now, qty))
        self._vol_sum += qty

    def _match(self, order: Order, now: int) -> list[Trade]:
        trades: list[Trade] = []
        if order.side == BUY:
            levels, level_qty = self._ask_levels, self._ask_qty
            get_best = self.best_ask
        else:
            levels, level_qty = self._bid_levels, self._bid_qty
            get_best = self.best_bid
        limit = order.price
        while order.quantity > 0:
            best = get_best()
            if best is None:
                break
            if limit is not None and ((order.side == BUY and best > limit)
                                      or (order.side == SELL and best < limit)):
                break
            queue = levels[best]
            resting = queue[0]
            if not resting.live:
                queue.popleft()
                continue
            qty = resting.quantity if resting.quantity < order.quantity else order.quantity
            resting.quantity -= qty
            order.quantity -= qty
            level_qty[best] -= qty
            if order.side == BUY:
                self.total_ask_qty -= qty
                buyer, seller = order.agent_id, resting.agent_id
            else:
                self.total_bid_qty -= qty
                buyer, seller = resting.agent_id, order.agent_id
            if resting.quantity == 0:
                resting.live = False
                queue.popleft()
                self._orders.pop(resting.id, None)
            self._record_trade(best, qty, order.side, buyer, seller, now)
            trades.append(Trade(now, best, qty, order.side, buyer, seller))
        return trades

    def _cross_at(self, price: int, volume: int, now: int) -> list[Trade]:
        """Execute ``volume`` shares at the auction clearing price."""
        buyers = self._auction_queue(BUY, price)
        sellers = self._auction_queue(SELL, price)
        trades: list[Trade] = []
        remaining = volume
        buy = next(buyers)
        sell = next(sellers)
        buy_left, sell_left = buy.quantity, sell.quantity
        while remaining > 0:
            qty = min(buy_left, sell_left, remaining)
            aggressor = buy.side if buy.id > sell.id else sell.side
            self._record_trade(price, qty, aggressor, buy.agent_id, sell.agent_id, now)
            trades.append(Trade(now, price, qty, aggressor, buy.agent_id, sell.agent_id))
            remaining -= qty
            buy_left -= qty
            sell_left -= qty
            self._consume(buy, qty)
            self._consume(sell, qty)
            if remaining == 0:
                break
            if buy_left == 0:
                buy = next(buyers)
                buy_left = buy.quantity
            if sell_left == 0:
                sell = next(sellers)
                sell_left = sell.quantity
        return trades

    def _auction_queue(self, side: int, clearing_price: int):
        """Live orders eligible at the clearing price in execution priority:
        market orders first, then limit orders by price then arrival."""
        market = self._market_buys if side == BUY else self._market_sells
        for order in market:
            if order.live:
                yield order
        if side == BUY:
            prices = sorted((p for p, q in self._bid_qty.items() if q > 0), reverse=True)
            levels = self._bid_levels
            eligible = lambda p: p >= clearing_price
        else:
            prices = sorted(p for p, q in self._ask_qty.items() if q > 0)
            levels = self._ask_levels
            eligible = lambda p: p <= clearing_price
        for p in prices:
            if not eligible(p):
                break
            for order in list(levels[p]):
                if order.live:
                    yield order

    def _consume(self, order: Order, qty: int) -> None:
        """Reduce a matched auction order, maintaining level bookkeeping.

        Fully filled orders are only marked dead; queues skip them lazily.
        """
        order.quantity -= qty
        if order.price is not None:
            if order.side == BUY:
                self._bid_qty[order.price] -= qty
                self.total_bid_qty -= qty
            else:
                self._ask_qty[order.price] -= qty
                self.total_ask_qty -= qty
        if order.quantity == 0:
            order.live = False
            self._orders.pop(order.id, None)


def trade_log_rows(book: LimitOrderBook):
    """Trade log as CSV rows: time,asset,price,qty,aggressor."""
    asset = book.asset_id
    for i in range(len(book.trade_steps)):
        yield (book.trade_steps[i], asset, book.trade_prices[i],
               book.trade_qtys[i], SIDE_NAMES[book.trade_aggrs[i]])
