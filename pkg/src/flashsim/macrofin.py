"""Balance-sheet accounting for the margin-lending bank and leveraged funds.

Loans are fixed for the whole trial at L_i = C0 * lambda0. Marking to market
values a fund's risky exposure at E = sum_j S_ij p_j; sale proceeds
accumulate as cash, so capital (equity) is C = E + cash - L while leverage
counts only the financed share exposure:

  lambda_t = E_t / C_t - 1

Selling therefore deleverages directly: at low lambda0 a margin-called fund
exits after liquidating a small slice, while at high lambda0 the required
slice is large and its own price impact erodes C, feeding the margin spiral.

  margin call entered   when lambda_t / lambda_0 > tau_c
  margin call released  when lambda_t < lambda_0
  default               when C_t < 0                (terminal)
"""

from __future__ import annotations

import numpy as np

NORMAL = 0
MARGIN_CALL = 1
DEFAULT = 2

STATE_NAMES = {NORMAL: "normal", MARGIN_CALL: "margin_call", DEFAULT: "default"}


def mark_to_market(positions: np.ndarray, prices: np.ndarray, cash: float,
                   loan: float) -> tuple[float, float | None]:
    """Current capital and leverage of one fund.

    Returns (capital, leverage); leverage is None when capital <= 0, which
    signals the default condition rather than raising.
    """
    exposure = float(positions @ prices)
    capital = exposure + cash - loan
    if capital <= 0:
        return capital, None
    return capital, exposure / capital - 1.0


def margin_check(state: int, leverage: float | None, lambda0: float,
                 tau_c: float) -> int:
    """One hysteresis transition. Default is absorbing and entered whenever
    leverage is undefined (capital <= 0)."""
    if state == DEFAULT:
        return DEFAULT
    if leverage is None:
        return DEFAULT
    if state == NORMAL:
        return MARGIN_CALL if leverage / lambda0 > tau_c else NORMAL
    # margin call in force: released only once leverage re-crosses lambda0
    return NORMAL if leverage < lambda0 else MARGIN_CALL


class Bank:
    """Single lender. Tracks per-fund loans and losses on defaulted funds:
    marked at the default instant, realised when liquidation completes."""

    def __init__(self, loans: np.ndarray):
        self.loans = loans
        self.loss_marked: dict[int, float] = {}
        self.loss_realised: dict[int, float] = {}

    def mark_default(self, fund: int, capital: float) -> None:
        self.loss_marked[fund] = max(0.0, -capital)

    def realise_loss(self, fund: int, cash_recovered: float) -> None:
        self.loss_realised[fund] = max(0.0, float(self.loans[fund]) - cash_recovered)

    @property
    def total_realised_loss(self) -> float:
        return sum(self.loss_realised.values())


class FundSystem:
    """All funds of one trial, stored columnwise for vectorised marking.

    positions: (n_funds, n_assets) share counts; cash holds sale proceeds
    plus any residual from rounding initial investments to whole shares.
    """

    def __init__(self, positions: np.ndarray, financed: np.ndarray,
                 lambda0: float, tau_c: float, p0: int):
        self.n_funds, self.n_assets = positions.shape
        self.positions = positions.astype(np.float64)
        exposure0 = self.positions @ np.full(self.n_assets, float(p0))
        self.cash = financed - exposure0       # rounding residual, >= 0
        self.lambda0 = lambda0
        self.tau_c = tau_c
        self.capital0 = financed / (1.0 + lambda0)
        self.loans = self.capital0 * lambda0
        self.state = np.zeros(self.n_funds, dtype=np.int8)
        self.default_step = np.full(self.n_funds, -1, dtype=np.int64)
        self.bank = Bank(self.loans)
        self.capital = self.capital0.copy()
        self.leverage = np.full(self.n_funds, lambda0)

    def mark_to_market(self, prices: np.ndarray) -> np.ndarray:
        """Revalue every fund; returns capital vector."""
        exposure = self.positions @ prices
        self.capital = exposure + self.cash - self.loans
        with np.errstate(divide="ignore", invalid="ignore"):
            self.leverage = np.where(self.capital > 0,
                                     exposure / self.capital - 1.0, np.nan)
        return self.capital

    def update_states(self, now: int) -> tuple[list[int], list[int], list[int]]:
        """Apply default/margin transitions after a mark-to-market.

        Returns (entered_liquidation, exited_liquidation, defaulted): fund
        ids that must have distressed sellers activated, deactivated, or
        (for defaults) kept selling under bank control.
        """
        capital, state = self.capital, self.state
        live = state != DEFAULT
        defaulted = np.nonzero(live & (capital < 0))[0]
        entered: list[int] = []
        exited: list[int] = []
        for i in defaulted.tolist():
            was_normal = state[i] == NORMAL
            state[i] = DEFAULT
            self.default_step[i] = now
            self.bank.mark_default(i, float(capital[i]))
            if was_normal:
                entered.append(i)   # bank takes over: sellers activate now
        leverage = self.leverage
        with np.errstate(invalid="ignore"):
            enter_mask = (state == NORMAL) & (capital >= 0) & \
                (leverage / self.lambda0 > self.tau_c)
            exit_mask = (state == MARGIN_CALL) & (capital >= 0) & \
                (leverage < self.lambda0)
        for i in np.nonzero(enter_mask)[0].tolist():
            state[i] = MARGIN_CALL
            entered.append(i)
        for i in np.nonzero(exit_mask)[0].tolist():
            state[i] = NORMAL
            exited.append(i)
        return entered, exited, defaulted.tolist()

    def apply_sale(self, fund: int, asset: int, qty: int, proceeds: float) -> None:
        """Book a distressed sale: shares leave, cash comes in. Sellers are
        sized from remaining positions so a fund can never oversell."""
        self.positions[fund, asset] -= qty
        assert self.positions[fund, asset] >= 0
        self.cash[fund] += proceeds
        if (self.state[fund] == DEFAULT
                and self.loans[fund] > 0
                and fund not in self.bank.loss_realised
                and not self.positions[fund].any()):
            self.bank.realise_loss(fund, float(self.cash[fund]))

    def default_fraction(self) -> float:
        return float((self.state == DEFAULT).sum()) / self.n_funds
