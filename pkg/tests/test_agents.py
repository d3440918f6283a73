import numpy as np
import pytest
from scipy import stats

from flashsim.agents import (
    AgentSpec, DistressedSeller, FundamentalTrader, HftTrader, MarketMaker,
    OpportunisticTrader, SmallTrader, Stream, default_agent_specs,
    distressed_order_size, hft_buy_probability, poisson_gap, toxic_flow_check,
)
from flashsim.orderbook import BUY, SELL, LimitOrderBook

DT_MS = 50


def make_stream(seed=0):
    return Stream(np.random.default_rng(seed))


def make_book(p0=10_000):
    book = LimitOrderBook(0, p0=p0, opening_auction_steps=0)
    book.clear_auction(0)
    return book


def route(trades, agents_by_id):
    """Minimal fill routing: inventory bookkeeping the engine normally does."""
    for t in trades:
        buyer = agents_by_id.get(t.buyer_id)
        if buyer is not None:
            buyer.inventory += t.quantity
        seller = agents_by_id.get(t.seller_id)
        if seller is not None:
            seller.inventory -= t.quantity


def trade_path(book, path):
    """Print a sequence of (step, price) trades onto the book."""
    for step, price in path:
        book.submit_order(98, BUY, price, 1, now=step)
        book.submit_order(99, SELL, price, 1, now=step)


class TestPoissonGap:
    def test_hft_mean_gap(self):
        spec = default_agent_specs()["hft"]
        assert spec.mean_gap_steps(DT_MS) == 7.0
        stream = make_stream(1)
        gaps = [poisson_gap(7.0, stream) for _ in range(100_000)]
        assert min(gaps) >= 1
        assert np.mean(gaps) == pytest.approx(7.0, rel=0.02)

    def test_small_trader_mean_gap(self):
        spec = default_agent_specs()["small"]
        assert spec.mean_gap_steps(DT_MS) == 144_000.0
        stream = make_stream(2)
        gaps = [poisson_gap(144_000.0, stream) for _ in range(100_000)]
        assert np.mean(gaps) == pytest.approx(144_000.0, rel=0.02)


class TestAgentSpecScaling:
    def test_populations_scale_with_floor_one(self):
        specs = default_agent_specs(scale_divisor=32)
        assert specs["small"].scaled_population == 203
        assert specs["opportunistic"].scaled_population == 50
        assert specs["market_maker"].scaled_population == 10
        assert specs["hft"].scaled_population == 1    # 16/32 floors to 0 -> 1
        combined = (specs["fundamental_buy"].population
                    + specs["fundamental_sell"].population)
        assert combined == 2500

    def test_inventory_scales(self):
        specs = default_agent_specs(scale_divisor=32)
        assert specs["market_maker"].scaled_inventory == 120  # warehouse: unscaled
        assert specs["hft"].scaled_inventory == 6             # 3000/16/32
        assert specs["small"].scaled_inventory is None

    def test_unscaled(self):
        spec = AgentSpec("opportunistic", 120.0, 120.0, 1600, 3, scale_divisor=1)
        assert spec.scaled_population == 1600
        assert spec.scaled_inventory == 120


class TestSmallTrader:
    def _collect_orders(self, book, n=10_000, seed=11):
        spec = default_agent_specs()["small"]
        agent = SmallTrader(1, book, make_stream(seed), spec, DT_MS)
        buys, sells = [], []
        for step in range(n):
            nxt = book._next_order_id
            agent.wake(step)
            order = book.order(nxt)
            if order is None:     # crossed and filled; record traded price
                continue
            (buys if order.side == BUY else sells).append(order.price)
        return buys, sells

    def test_buy_prices_uniform_within_thousand_ticks_of_bid(self):
        book = make_book()
        book.submit_order(50, BUY, 9_990, 1000, now=0)
        book.submit_order(51, SELL, 11_500, 1000, now=0)
        buys, _ = self._collect_orders(book)
        assert min(buys) >= 8_990 and max(buys) <= 9_990
        counts, _ = np.histogram(buys, bins=13, range=(8_990, 9_991))
        chi2, p_value = stats.chisquare(counts)
        assert p_value > 0.005

    def test_sell_prices_anchor_to_ask(self):
        book = make_book()
        book.submit_order(50, BUY, 8_000, 1000, now=0)
        book.submit_order(51, SELL, 10_010, 1000, now=0)
        _, sells = self._collect_orders(book)
        assert min(sells) >= 10_010 and max(sells) <= 11_010

    def test_empty_side_anchors_to_last_trade(self):
        book = make_book()
        spec = default_agent_specs()["small"]
        agent = SmallTrader(1, book, make_stream(3), spec, DT_MS)
        for step in range(200):
            nxt = book._next_order_id
            agent.wake(step)
            order = book.order(nxt)
            if order is not None:
                if order.side == BUY:
                    assert 9_000 <= order.price <= 10_000
                else:
                    assert 10_000 <= order.price <= 11_000
                book.cancel_order(nxt)   # keep both sides empty

    def test_minimal_size(self):
        book = make_book()
        book.submit_order(50, BUY, 9_990, 10, now=0)
        spec = default_agent_specs()["small"]
        agent = SmallTrader(1, book, make_stream(5), spec, DT_MS)
        nxt = book._next_order_id
        agent.wake(0)
        order = book.order(nxt)
        if order is not None:
            assert order.quantity == 1


class TestToxicFlow:
    def test_trend_above_threshold_withdraws(self):
        book = make_book()
        trade_path(book, [(0, 10_000), (1_301, 10_071)])
        # reference one minute before 2500 is the price at step 1300
        assert toxic_flow_check(book, 2_500, 70) is True

    def test_boundary_is_strict(self):
        book = make_book()
        trade_path(book, [(0, 10_000), (1_301, 9_976)])   # -24 ticks
        assert toxic_flow_check(book, 2_500, 24) is False
        book2 = make_book()
        trade_path(book2, [(0, 10_000), (1_301, 9_975)])  # -25 ticks
        assert toxic_flow_check(book2, 2_500, 24) is True

    def test_warmup_returns_false(self):
        book = make_book()
        trade_path(book, [(0, 10_000), (100, 9_000)])
        assert toxic_flow_check(book, 500, 70) is False


class TestFundamental:
    def test_buyer_caps_price_at_valuation(self):
        # best bid far above the private valuation: the wall quote is capped
        book = make_book()
        spec = default_agent_specs()["fundamental_buy"]
        agent = FundamentalTrader(1, book, make_stream(7), spec, DT_MS,
                                  side=BUY, valuation_mean=10_000,
                                  valuation_std=50.0)
        book.submit_order(50, BUY, agent.valuation + 300, 50, now=0)
        book.submit_order(51, SELL, agent.valuation + 400, 50, now=0)
        nxt = book._next_order_id
        trades = agent.wake(0)
        assert trades == []
        assert book.order(nxt).price == agent.valuation

    def test_buyer_joins_wall_within_ten_ticks(self):
        book = make_book()
        spec = default_agent_specs()["fundamental_buy"]
        agent = FundamentalTrader(1, book, make_stream(29), spec, DT_MS,
                                  side=BUY, valuation_mean=10_000,
                                  valuation_std=50.0)
        agent.valuation = 11_000   # far above: peg governs
        book.submit_order(50, BUY, 9_990, 50, now=0)
        book.submit_order(51, SELL, 10_500, 50, now=0)
        for step in range(50):
            nxt = book._next_order_id
            agent.wake(step)
            order = book.order(nxt)
            assert order is not None
            assert 9_991 <= order.price <= 10_000
            book.cancel_order(nxt)

    def test_buyer_lifts_cheap_ask(self):
        book = make_book()
        spec = default_agent_specs()["fundamental_buy"]
        agent = FundamentalTrader(1, book, make_stream(8), spec, DT_MS,
                                  side=BUY, valuation_mean=10_000,
                                  valuation_std=50.0)
        book.submit_order(50, SELL, agent.valuation - 200, 50, now=0)
        trades = agent.wake(0)
        assert trades and trades[0].price == agent.valuation - 200

    def test_withdraws_on_toxic_trend(self):
        book = make_book()
        trade_path(book, [(0, 10_000), (1_300, 10_090)])
        spec = default_agent_specs()["fundamental_sell"]
        agent = FundamentalTrader(1, book, make_stream(9), spec, DT_MS,
                                  side=SELL, valuation_mean=10_000,
                                  valuation_std=50.0)
        before = book._next_order_id
        assert agent.wake(2_000) == []
        assert book._next_order_id == before
        assert agent.withdrawn


class TestMarketMaker:
    def _maker(self, book, seed=13):
        spec = default_agent_specs()["market_maker"]
        return MarketMaker(1, book, make_stream(seed), spec, DT_MS)

    def test_quotes_both_sides(self):
        book = make_book()
        maker = self._maker(book)
        maker.wake(0)
        assert book.best_bid() == 9_999
        assert book.best_ask() == 10_001

    def test_saturated_inventory_quotes_offsetting_side_only(self):
        book = make_book()
        maker = self._maker(book)
        maker.inventory = maker.inventory_limit
        maker.wake(0)
        assert maker.liquidating
        assert book.best_bid() is None
        assert book.best_ask() == 10_001

    def test_resumes_both_sides_at_half_limit(self):
        book = make_book()
        maker = self._maker(book)
        maker.inventory = maker.inventory_limit
        maker.wake(0)
        maker.inventory = maker.inventory_limit // 2
        maker.wake(1)
        assert not maker.liquidating
        assert book.best_bid() is not None and book.best_ask() is not None

    def test_toxic_trend_stops_quoting_and_pulls_quotes(self):
        book = make_book()
        maker = self._maker(book)
        maker.wake(0)                 # quotes 9999 / 10001
        trade_path(book, [(10, 10_000)])
        # a sell sweep takes the full maker bid and prints 9970: a -30 tick
        # one-minute trend
        book.submit_order(60, SELL, 9_970, maker.order_size + 1, now=1_301)
        book.submit_order(61, BUY, 9_970, 1, now=1_301)
        assert book.last_trade_price == 9_970
        open_before = [oid for oid in maker.open_ids if book.order(oid)]
        assert open_before                     # the ask survived the sweep
        maker.wake(2_500)
        assert maker.withdrawn
        assert not any(book.order(oid) for oid in open_before)
        assert book.best_ask() is None

    def test_widens_spread_on_half_threshold_trend(self):
        book = make_book()
        trade_path(book, [(0, 10_000), (1_300, 10_015)])   # +15 > 12, < 24
        maker = self._maker(book)
        maker.wake(2_000)
        assert book.best_bid() == 10_015 - 12
        assert book.best_ask() == 10_015 + 12


class TestHft:
    def test_buy_probability_formula(self):
        assert hft_buy_probability(30, 10) == 0.75
        assert hft_buy_probability(7, 7) == 0.5
        assert hft_buy_probability(0, 10) == 0.0
        assert hft_buy_probability(0, 0) == 0.5

    def test_sides_balanced_on_symmetric_book(self):
        book = make_book()
        spec = default_agent_specs()["hft"]
        agent = HftTrader(1, book, make_stream(17), spec, DT_MS)
        buys = sells = 0
        for step in range(2_000):
            book.submit_order(50, BUY, 9_995, 5, now=step)
            book.submit_order(51, SELL, 10_005, 5, now=step)
            nxt = book._next_order_id
            agent.wake(step)
            order = book.order(nxt)
            if order is not None:
                if order.side == BUY:
                    buys += 1
                else:
                    sells += 1
        total = buys + sells
        assert total > 1_500
        assert abs(buys - total / 2) < 3 * np.sqrt(total * 0.25)

    def test_skews_toward_imbalance(self):
        book = make_book()
        book.submit_order(50, BUY, 9_999, 90, now=0)
        book.submit_order(51, SELL, 10_001, 10, now=0)
        spec = default_agent_specs()["hft"]
        agent = HftTrader(1, book, make_stream(19), spec, DT_MS)
        buys = total = 0
        for step in range(1_000):
            nxt = book._next_order_id
            agent.wake(step)
            order = book.order(nxt)
            if order is not None:
                total += 1
                buys += order.side == BUY
            agent._cancel_open()
        assert total > 0
        assert buys / total > 0.8

    def test_saturation_triggers_market_order_reduction(self):
        book = make_book()
        book.submit_order(50, BUY, 9_990, 500, now=0)
        spec = default_agent_specs()["hft"]
        agent = HftTrader(1, book, make_stream(21), spec, DT_MS)
        agent.inventory = agent.inventory_limit
        trades = agent.wake(0)
        assert trades and trades[0].aggressor_side == SELL
        route(trades, {1: agent})
        assert agent.reducing
        for step in range(1, 50):   # keeps unloading until half the limit
            route(agent.wake(step), {1: agent})
            if not agent.reducing:
                break
        assert not agent.reducing
        assert agent.inventory <= agent.inventory_limit // 2


class TestInventoryBounds:
    @pytest.mark.parametrize("kind", ["opportunistic", "market_maker", "hft"])
    def test_fills_never_exceed_limit(self, kind):
        book = make_book()
        specs = default_agent_specs()
        spec = specs[kind]
        cls = {"opportunistic": OpportunisticTrader, "market_maker": MarketMaker,
               "hft": HftTrader}[kind]
        agent = cls(1, book, make_stream(23), spec, DT_MS)
        small = SmallTrader(2, book, make_stream(24), specs["small"], DT_MS)
        agents = {1: agent, 2: small}
        limit = agent.inventory_limit
        for step in range(5_000):
            route(small.wake(step), agents)
            route(agent.wake(step), agents)
            assert abs(agent.inventory) <= limit, step


class TestDistressedSeller:
    def test_order_size_rule(self):
        assert distressed_order_size(50_000, 0.09, 10_000) == 900
        assert distressed_order_size(100, 0.09, 10_000) == 100
        assert distressed_order_size(500, 0.09, 0) == 1

    def test_sells_down_to_zero_and_conserves_totals(self):
        book = make_book()
        seller = DistressedSeller(9, book, make_stream(31), eta=0.5,
                                  delta_s=1.0, dt_ms=DT_MS, quantity=250)
        seller.activate(250)
        sold = 0
        for step in range(2_000):
            book.submit_order(50, BUY, 10_000 - step % 3, 10, now=step)
            trades = seller.wake(step)
            filled = sum(t.quantity for t in trades)
            sold += filled
            seller.remaining -= filled   # engine bookkeeping
            assert sold + seller.remaining == 250
            if seller.remaining == 0:
                break
        assert sold == 250

    def test_inactive_seller_places_nothing(self):
        book = make_book()
        book.submit_order(50, BUY, 10_000, 100, now=0)
        seller = DistressedSeller(9, book, make_stream(33), eta=0.09,
                                  delta_s=10.0, dt_ms=DT_MS, quantity=100)
        assert seller.wake(0) == []
        seller.activate(100)
        seller.deactivate()
        assert seller.wake(1) == []

    def test_waits_while_order_queued_in_auction(self):
        book = LimitOrderBook(0, p0=10_000, opening_auction_steps=100)
        seller = DistressedSeller(9, book, make_stream(35), eta=0.09,
                                  delta_s=10.0, dt_ms=DT_MS, quantity=100)
        seller.activate(100)
        seller.wake(0)
        assert seller.open_order_id is not None
        n_orders = book._next_order_id
        seller.wake(5)
        assert book._next_order_id == n_orders   # no stacking while queued


def test_agent_behaviour_is_reproducible():
    def run(seed):
        book = make_book()
        specs = default_agent_specs()
        agents = {
            1: SmallTrader(1, book, make_stream(seed), specs["small"], DT_MS),
            2: MarketMaker(2, book, make_stream(seed + 1), specs["market_maker"], DT_MS),
            3: HftTrader(3, book, make_stream(seed + 2), specs["hft"], DT_MS),
            4: FundamentalTrader(4, book, make_stream(seed + 3),
                                 specs["fundamental_buy"], DT_MS, BUY, 10_000, 50.0),
            5: FundamentalTrader(5, book, make_stream(seed + 4),
                                 specs["fundamental_sell"], DT_MS, SELL, 10_000, 50.0),
        }
        for step in range(3_000):
            for agent in agents.values():
                route(agent.wake(step), agents)
        return (book.trade_steps, book.trade_prices, book.trade_qtys,
                [a.inventory for a in agents.values()])

    assert run(5) == run(5)
    first = run(5)
    assert first[0], "scenario should actually trade"
    assert first != run(6)
