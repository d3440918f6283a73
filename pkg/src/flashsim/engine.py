"""Per-trial simulation loop and the Monte-Carlo ensemble runner.

A trial owns all of its state: books, agents, funds and random streams all
derive from the trial seed, so a (config, seed) pair fully determines every
output byte. Trials are independent and can run in parallel processes.
"""

from __future__ import annotations

import heapq
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from . import agents as ag
from . import metrics as mt
from .macrofin import FundSystem
from .netgen import FundAssetNetwork, NetworkParams, generate_network, select_shock_asset
from .orderbook import (BUY, CONTINUOUS, SELL, VOLATILITY_WINDOW_STEPS,
                        LimitOrderBook)

# seed-space domains for independent sub-streams
_DOM_NETWORK = 0
_DOM_SCHEDULER = 1
_DOM_AGENT = 2
_DOM_SELLER = 3
_DOM_SHOCK = 4

# event kinds on the scheduler heap
_EV_AUCTION_END = 0
_EV_SHOCK = 1
_EV_WAKE = 2


@dataclass
class TrialConfig:
    """Complete specification of one simulation trial."""

    seed: int = 0
    config_id: str = ""
    total_steps: int = 100_000
    dt_ms: int = 50
    n_assets: int = 10
    n_funds: int = 10
    p0: int = 10_000
    scale_divisor: int = 32
    valuation_std: float = 150.0
    order_sizes: dict | None = None

    # fund-asset network topology
    rho: float = 0.5
    beta: float = 0.0
    alpha: float = 0.0
    sigma: float = 0.001

    # leverage triple theta = (lambda0, tau_c, c0); c0 in dollars
    lambda0: float = 3.0
    tau_c: float = 1.01
    c0: float = 1_000_000.0

    # exogenous shock: quantity is unscaled shares, divided by scale_divisor,
    # calibrated so the shocked asset reliably crashes 5-25% at desk scale
    shock_enabled: bool = True
    shock_quantity: int = 75_000
    eta: float = 0.09
    delta_s: float = 10.0

    gamma: float = 0.05
    zeta: float = 0.8
    #: margin monitoring cadence in steps; once per simulated second keeps
    #: intraday monitoring from reacting to individual 50 ms prints
    margin_check_every: int = 20
    record_depth_every: int = 20
    record_funds_every: int = 0

    @property
    def shock_step(self) -> int:
        return int(0.2 * self.total_steps)

    @property
    def opening_auction_steps(self) -> int:
        return int(60_000 / self.dt_ms)

    @property
    def scaled_shock_quantity(self) -> int:
        return max(int(self.shock_quantity / self.scale_divisor), 1)

    def validate(self) -> None:
        if self.dt_ms != 50:
            raise ValueError("the calibrated behaviour windows assume 50 ms steps")
        if self.total_steps <= 0:
            raise ValueError("total_steps must be positive")
        if self.shock_enabled and not (
                self.opening_auction_steps < self.shock_step < self.total_steps):
            raise ValueError("shock step must fall inside the continuous session")
        if self.n_assets < 1 or self.n_funds < 1:
            raise ValueError("need at least one asset and one fund")
        if not 1.0 <= self.tau_c:
            raise ValueError("tau_c must be >= 1")
        if self.eta <= 0 or self.delta_s <= 0:
            raise ValueError("eta and delta must be positive")
        if self.p0 < 2:
            raise ValueError("start price must be at least 2 ticks")
        # constructing the network params revalidates rho/alpha/sigma/c0
        self.network_params()

    def network_params(self) -> NetworkParams:
        return NetworkParams(self.n_funds, self.n_assets, self.rho, self.beta,
                             self.alpha, self.sigma, self.c0 * 100.0,
                             self.lambda0)


def _stream(seed: int, *key: int) -> ag.Stream:
    return ag.Stream(np.random.default_rng(np.random.SeedSequence((seed, *key))))


_AGENT_BUILD_ORDER = ("small", "fundamental_buy", "fundamental_sell",
                      "opportunistic", "market_maker", "hft")


class Trial:
    """Mutable state of one running trial."""

    def __init__(self, config: TrialConfig):
        config.validate()
        self.config = config
        seed = config.seed
        self.now = 0
        self._seq = 0
        self.margin_call_events = 0

        self.scheduler = _stream(seed, _DOM_SCHEDULER)
        self.books = [LimitOrderBook(a, config.p0, config.opening_auction_steps)
                      for a in range(config.n_assets)]

        net_rng = np.random.default_rng(np.random.SeedSequence((seed, _DOM_NETWORK)))
        self.network: FundAssetNetwork = generate_network(config.network_params(), net_rng)
        positions = self.network.positions(config.p0)
        financed = np.full(config.n_funds, config.network_params().financed_capital)
        self.funds = FundSystem(positions, financed, config.lambda0,
                                config.tau_c, config.p0)

        self.heap: list[tuple[int, int, int, object]] = []
        self.traders: dict[int, ag.TraderAgent] = {}
        self.fund_sellers: dict[tuple[int, int], ag.DistressedSeller] = {}
        self.sellers: dict[int, ag.DistressedSeller] = {}
        self._build_agents()

        self.shock_asset = -1
        self.shock_asset_rank = math.nan
        self.exo_seller: ag.DistressedSeller | None = None
        if config.shock_enabled:
            shock_rng = np.random.default_rng(np.random.SeedSequence((seed, _DOM_SHOCK)))
            self.shock_asset = select_shock_asset(self.network, shock_rng)
            totals = self.network.asset_totals()
            self.shock_asset_rank = float(
                (totals <= totals[self.shock_asset]).sum()) / config.n_assets
            self.exo_seller = ag.DistressedSeller(
                self._next_agent_id(), self.books[self.shock_asset],
                _stream(seed, _DOM_SELLER, 10 ** 6, self.shock_asset),
                config.eta, config.delta_s, config.dt_ms,
                fund_id=None, quantity=config.scaled_shock_quantity)
            self.sellers[self.exo_seller.agent_id] = self.exo_seller
            self._push(config.shock_step, _EV_SHOCK, None)

        for book in self.books:
            self._push(book.auction_end_step, _EV_AUCTION_END, book)

        self.prices = np.full(config.n_assets, float(config.p0))
        # funds are marked at the one-minute median of per-second samples:
        # intraday monitoring tracks dislocations that persist, not single
        # prints at microstructure depth
        self._mark_ring = np.full((30, config.n_assets), float(config.p0))
        self._mark_idx = 0
        self._settle = 0
        self.mark_prices = self.prices.copy()
        self._hot: set[int] = set()
        self._dirty = False
        self.depth_log: list[list[tuple[int, int, int]]] = \
            [[] for _ in range(config.n_assets)]
        self.fund_log: list[tuple[int, int, float, float, int]] = []

    # ------------------------------------------------------------------
    # construction helpers

    def _next_agent_id(self) -> int:
        nid = self._agent_id_counter
        self._agent_id_counter += 1
        return nid

    def _build_agents(self) -> None:
        config = self.config
        specs = ag.default_agent_specs(config.scale_divisor, config.order_sizes)
        self._agent_id_counter = 0
        for asset in range(config.n_assets):
            book = self.books[asset]
            cohort: dict[int, list[ag.FundamentalTrader]] = {BUY: [], SELL: []}
            for type_idx, kind in enumerate(_AGENT_BUILD_ORDER):
                spec = specs[kind]
                for i in range(spec.scaled_population):
                    stream = _stream(config.seed, _DOM_AGENT, asset, type_idx, i)
                    aid = self._next_agent_id()
                    agent = self._make_agent(kind, aid, book, stream, spec)
                    self.traders[aid] = agent
                    self._push(agent.next_wakeup(0), _EV_WAKE, agent)
                    if isinstance(agent, ag.FundamentalTrader):
                        cohort[agent.side].append(agent)
            # centre each side's valuation sample on the start price so the
            # fundamental anchor cannot drift between assets; sub-percent
            # drifts would trip tight margin tolerances without any shock
            for side_agents in cohort.values():
                if len(side_agents) > 1:
                    offset = round(sum(a.valuation for a in side_agents)
                                   / len(side_agents)) - config.p0
                    for agent in side_agents:
                        agent.valuation = max(1, agent.valuation - offset)

    def _make_agent(self, kind, aid, book, stream, spec) -> ag.TraderAgent:
        config = self.config
        if kind == "small":
            return ag.SmallTrader(aid, book, stream, spec, config.dt_ms)
        if kind == "fundamental_buy":
            return ag.FundamentalTrader(aid, book, stream, spec, config.dt_ms,
                                        BUY, config.p0, config.valuation_std)
        if kind == "fundamental_sell":
            return ag.FundamentalTrader(aid, book, stream, spec, config.dt_ms,
                                        SELL, config.p0, config.valuation_std)
        if kind == "opportunistic":
            return ag.OpportunisticTrader(aid, book, stream, spec, config.dt_ms)
        if kind == "market_maker":
            return ag.MarketMaker(aid, book, stream, spec, config.dt_ms)
        if kind == "hft":
            return ag.HftTrader(aid, book, stream, spec, config.dt_ms)
        raise ValueError(f"unknown agent kind {kind}")

    def _push(self, step: int, kind: int, obj) -> None:
        self._seq += 1
        heapq.heappush(self.heap, (step, kind, self._seq, obj))

    # ------------------------------------------------------------------
    # seller lifecycle

    def _seller_for(self, fund: int, asset: int) -> ag.DistressedSeller:
        seller = self.fund_sellers.get((fund, asset))
        if seller is None:
            seller = ag.DistressedSeller(
                self._next_agent_id(), self.books[asset],
                _stream(self.config.seed, _DOM_SELLER, fund, asset),
                self.config.eta, self.config.delta_s, self.config.dt_ms,
                fund_id=fund)
            self.fund_sellers[(fund, asset)] = seller
            self.sellers[seller.agent_id] = seller
        return seller

    def _activate_fund_sellers(self, fund: int) -> None:
        positions = self.funds.positions[fund]
        for asset in np.nonzero(positions >= 1.0)[0].tolist():
            seller = self._seller_for(fund, asset)
            seller.activate(int(positions[asset]))
            if not seller.scheduled:
                seller.scheduled = True
                self._push(self.now + 1, _EV_WAKE, seller)

    def _deactivate_fund_sellers(self, fund: int) -> None:
        for (f, asset), seller in self.fund_sellers.items():
            if f == fund and seller.active:
                seller.deactivate()
                if seller.open_order_id is not None:
                    seller.book.cancel_order(seller.open_order_id)
                    seller.open_order_id = None

    # ------------------------------------------------------------------
    # fills

    def _route(self, trades, book: LimitOrderBook) -> None:
        traders = self.traders
        sellers = self.sellers
        asset = book.asset_id
        for t in trades:
            buyer = traders.get(t.buyer_id)
            if buyer is not None:
                buyer.inventory += t.quantity
            seller_agent = traders.get(t.seller_id)
            if seller_agent is not None:
                seller_agent.inventory -= t.quantity
            else:
                distressed = sellers.get(t.seller_id)
                if distressed is not None:
                    distressed.remaining -= t.quantity
                    if distressed.fund_id is not None:
                        self.funds.apply_sale(distressed.fund_id, asset,
                                              t.quantity,
                                              float(t.quantity * t.price))
                    if distressed.remaining <= 0:
                        distressed.active = False
        self._hot.add(asset)
        self._dirty = True
        self.prices[asset] = book.last_trade_price

    # ------------------------------------------------------------------
    # main loop

    def run(self) -> mt.TrialResult:
        config = self.config
        total = config.total_steps
        heap = self.heap
        hot = self._hot
        depth_every = config.record_depth_every
        funds_every = config.record_funds_every

        margin_every = max(config.margin_check_every, 1)
        for now in range(total):
            self.now = now
            if heap and heap[0][0] <= now:
                self._process_events(now)
            if hot:
                self._check_volatility(now)
            if now % margin_every == 0:
                self._mark_ring[self._mark_idx] = self.prices
                self._mark_idx = (self._mark_idx + 1) % len(self._mark_ring)
                if self._dirty:
                    self._settle = len(self._mark_ring) + 1
                    self._dirty = False
                if self._settle > 0:
                    self._settle -= 1
                    np.median(self._mark_ring, axis=0, out=self.mark_prices)
                    self._update_funds(now)
            if depth_every and now % depth_every == 0:
                for book in self.books:
                    self.depth_log[book.asset_id].append(
                        (now, book.total_bid_qty, book.total_ask_qty))
            if funds_every and now % funds_every == 0:
                self._snapshot_funds(now)
        return self._result()

    def _process_events(self, now: int) -> None:
        heap = self.heap
        batch: list[tuple[int, int, object]] = []
        while heap and heap[0][0] <= now:
            _, kind, seq, obj = heapq.heappop(heap)
            batch.append((kind, seq, obj))

        wakes = []
        for kind, seq, obj in batch:
            if kind == _EV_AUCTION_END:
                book: LimitOrderBook = obj
                if book.phase != CONTINUOUS and now >= book.auction_end_step:
                    _, trades, _ = book.clear_auction(now)
                    if trades:
                        self._route(trades, book)
            elif kind == _EV_SHOCK:
                seller = self.exo_seller
                seller.activate(self.config.scaled_shock_quantity)
                wakes.append(seller)
            else:
                wakes.append(obj)

        if len(wakes) > 1:
            order = np.argsort(
                [self.scheduler.uniform() for _ in wakes], kind="stable")
            wakes = [wakes[i] for i in order]

        for entity in wakes:
            if isinstance(entity, ag.DistressedSeller):
                entity.scheduled = False
                if not entity.active:
                    continue
                trades = entity.wake(now)
                if trades:
                    self._route(trades, entity.book)
                if entity.active:
                    entity.scheduled = True
                    self._push(entity.next_wakeup(now), _EV_WAKE, entity)
                continue
            trades = entity.wake(now)
            if trades:
                self._route(trades, entity.book)
            self._push(entity.next_wakeup(now), _EV_WAKE, entity)
            book = entity.book
            if book.phase == CONTINUOUS and book.asset_id in self._hot:
                if book.check_volatility_trigger(now):
                    self._push(book.auction_end_step, _EV_AUCTION_END, book)

    def _check_volatility(self, now: int) -> None:
        expired = []
        for asset in sorted(self._hot):
            book = self.books[asset]
            if now - book.last_trade_step > VOLATILITY_WINDOW_STEPS:
                expired.append(asset)
                continue
            if book.phase == CONTINUOUS and book.check_volatility_trigger(now):
                self._push(book.auction_end_step, _EV_AUCTION_END, book)
        for asset in expired:
            self._hot.discard(asset)

    def _update_funds(self, now: int) -> None:
        funds = self.funds
        funds.mark_to_market(self.mark_prices)
        entered, exited, _defaulted = funds.update_states(now)
        for fund in entered:
            self.margin_call_events += 1
            self._activate_fund_sellers(fund)
        for fund in exited:
            self._deactivate_fund_sellers(fund)

    def _snapshot_funds(self, now: int) -> None:
        for i in range(self.funds.n_funds):
            leverage = self.funds.leverage[i]
            self.fund_log.append(
                (now, i, float(self.funds.capital[i]),
                 float(leverage) if np.isfinite(leverage) else math.nan,
                 int(self.funds.state[i])))

    # ------------------------------------------------------------------

    def _result(self) -> mt.TrialResult:
        config = self.config
        price_points = []
        trade_log = []
        depth = []
        for book in self.books:
            price_points.append((np.asarray(book._pc_steps, dtype=np.int64),
                                 np.asarray(book._pc_prices, dtype=np.int64)))
            trade_log.append(np.array(
                [book.trade_steps, book.trade_prices, book.trade_qtys,
                 book.trade_aggrs], dtype=np.int64))
            depth.append(np.asarray(self.depth_log[book.asset_id],
                                    dtype=np.int64).reshape(-1, 3))
        result = mt.TrialResult(
            config_id=config.config_id,
            seed=config.seed,
            n_assets=config.n_assets,
            n_funds=config.n_funds,
            total_steps=config.total_steps,
            dt_ms=config.dt_ms,
            shock_step=config.shock_step if config.shock_enabled else -1,
            shock_asset=self.shock_asset,
            price_points=price_points,
            trade_log=trade_log,
            depth_samples=depth,
            fund_states=self.funds.state.copy(),
            fund_default_steps=self.funds.default_step.copy(),
            bank_loss_marked=float(sum(self.funds.bank.loss_marked.values())),
            bank_loss_realised=float(self.funds.bank.total_realised_loss),
            margin_call_events=self.margin_call_events,
            shock_asset_rank=self.shock_asset_rank,
        )
        result.first_crash_steps = mt.compute_first_crashes(result)
        return result


def run_trial(config: TrialConfig) -> mt.TrialResult:
    """Build a trial from its config and run it to completion."""
    return Trial(config).run()


def worker_count(requested: int | None = None) -> int:
    if requested is not None and requested >= 1:
        return requested
    env = os.environ.get("FLASHSIM_WORKERS")
    if env:
        return max(int(env), 1)
    return max(os.cpu_count() or 1, 1)


def run_ensemble(configs: list[TrialConfig], workers: int | None = None
                 ) -> list[mt.TrialResult]:
    """Run independent trials, optionally across processes. Results keep the
    order of the input configs regardless of parallelism."""
    configs = list(configs)
    if not configs:
        return []
    n_workers = min(worker_count(workers), len(configs))
    if n_workers <= 1:
        return [run_trial(c) for c in configs]
    import multiprocessing as mp
    ctx = mp.get_context("fork")
    with ctx.Pool(n_workers) as pool:
        return pool.map(run_trial, configs, chunksize=1)


def seed_sweep(config: TrialConfig, n_trials: int, seed0: int = 0
               ) -> list[TrialConfig]:
    """The M Monte-Carlo replicates of one parameter point: only the seed
    varies between trials."""
    return [replace(config, seed=seed0 + m) for m in range(n_trials)]
