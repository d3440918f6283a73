"""Random weighted bipartite fund-asset networks.

Funds are added sequentially; each picks k distinct assets by nonlinear
preferential attachment on the total currency already invested per asset
(crowding exponent beta), then splits its financed capital across them with
descending weights interpolated between Gaussian-derived and uniform
allocations (uniformity alpha).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.stats import rankdata


@dataclass
class NetworkParams:
    n_funds: int
    n_assets: int
    rho: float            # diversification: fraction of assets held per fund
    beta: float           # crowding exponent (negative disperses)
    alpha: float = 0.0    # allocation uniformity: 0 Gaussian, 1 equal split
    sigma: float = 0.001  # per-fund noise on rho
    c0: float = 1e8       # initial capital per fund, currency ticks (cents)
    lambda0: float = 3.0  # initial leverage

    def __post_init__(self):
        if self.n_funds < 1 or self.n_assets < 1:
            raise ValueError("need at least one fund and one asset")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must be in [0,1], got {self.rho}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0,1], got {self.alpha}")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.c0 <= 0 or self.lambda0 < 0:
            raise ValueError("c0 must be positive and lambda0 non-negative")

    @property
    def financed_capital(self) -> float:
        """Total investable currency per fund: C0 * (1 + lambda0)."""
        return self.c0 * (1.0 + self.lambda0)


@dataclass
class FundAssetNetwork:
    params: NetworkParams
    investments: np.ndarray          # (n_funds, n_assets) currency amounts
    k_fund: np.ndarray = field(repr=False)  # assets held per fund

    def positions(self, p0: int) -> np.ndarray:
        """Share positions at the start price: floor(A_ij / p0)."""
        return np.floor(self.investments / p0)

    def asset_totals(self) -> np.ndarray:
        return self.investments.sum(axis=0)


def preferential_weights(totals: np.ndarray, beta: float) -> np.ndarray:
    """Selection probabilities from ascending dense ranks of invested totals.

    Distinct total values rank 1, 2, ... ascending; ties share a rank, so a
    fresh network with no investment yet is sampled exactly uniformly. For
    beta < 0 ranks are reversed first; p_j = r_j^|beta| / sum r^|beta|.
    beta > 0 favours crowded assets, beta < 0 favours empty ones, beta = 0
    is uniform.
    """
    ranks = rankdata(totals, method="dense").astype(np.float64)
    if beta < 0:
        ranks = ranks.max() - ranks + 1.0
    weights = ranks ** abs(beta)
    return weights / weights.sum()


def investment_fractions(k: int, alpha: float, rng: np.random.Generator) -> np.ndarray:
    """k descending portfolio fractions summing to one.

    The Gaussian endpoint normalises |N(0,1)| variates; alpha interpolates
    linearly toward an equal 1/k split.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    g = np.abs(rng.standard_normal(k))
    total = g.sum()
    if total == 0.0:
        g = np.full(k, 1.0 / k)
    else:
        g /= total
    g.sort()
    g = g[::-1]
    return alpha / k + (1.0 - alpha) * g


def _fund_degree(params: NetworkParams, rng: np.random.Generator) -> int:
    if params.rho >= 1.0:
        # complete portfolios are pinned exactly: the degree noise models
        # heterogeneity strictly inside (0, 1)
        return params.n_assets
    rho_eff = min(max(rng.normal(params.rho, params.sigma), 0.0), 1.0)
    return max(int(math.floor(rho_eff * params.n_assets)), 1)


def generate_network(params: NetworkParams, rng: np.random.Generator) -> FundAssetNetwork:
    """Sequentially attach funds to assets and assign currency investments.

    Asset choice is weighted sampling without replacement, renormalising
    the preferential weights over the remaining assets after each pick.
    The largest fraction goes to the first-selected asset.
    """
    n_f, n_a = params.n_funds, params.n_assets
    A = np.zeros((n_f, n_a))
    k_fund = np.zeros(n_f, dtype=np.int64)
    capital = params.financed_capital
    for i in range(n_f):
        k = min(_fund_degree(params, rng), n_a)
        k_fund[i] = k
        weights = preferential_weights(A.sum(axis=0), params.beta).copy()
        chosen = np.empty(k, dtype=np.int64)
        for pick in range(k):
            total = weights.sum()
            j = int(np.searchsorted(np.cumsum(weights), rng.random() * total, side="right"))
            j = min(j, len(weights) - 1)
            while weights[j] == 0.0:   # guard against fp edge on exhausted entries
                j = (j + 1) % len(weights)
            chosen[pick] = j
            weights[j] = 0.0
        fractions = investment_fractions(k, params.alpha, rng)
        A[i, chosen] = fractions * capital
    return FundAssetNetwork(params, A, k_fund)


def _component_labels(investments: np.ndarray) -> tuple[int, np.ndarray]:
    n_f, n_a = investments.shape
    funds, assets = np.nonzero(investments > 0)
    graph = sparse.coo_matrix(
        (np.ones(len(funds)), (funds, n_f + assets)), shape=(n_f + n_a, n_f + n_a))
    return connected_components(graph, directed=False)


def largest_component_funds(network: FundAssetNetwork | np.ndarray) -> int:
    """Number of fund nodes in the largest connected component of the
    bipartite graph induced by positive investments. Isolated assets do
    not count as components."""
    A = network.investments if isinstance(network, FundAssetNetwork) else np.asarray(network)
    n_f = A.shape[0]
    _, labels = _component_labels(A)
    fund_labels = labels[:n_f]
    counts = np.bincount(fund_labels)
    return int(counts.max()) if len(counts) else 0


def select_shock_asset(network: FundAssetNetwork, rng: np.random.Generator) -> int:
    """Uniform choice among invested assets; when one component holds more
    than 80% of funds, only that component's assets are eligible."""
    A = network.investments
    n_f = A.shape[0]
    held = np.nonzero(A.sum(axis=0) > 0)[0]
    if len(held) == 0:
        raise ValueError("no asset has positive investment")
    _, labels = _component_labels(A)
    fund_labels = labels[:n_f]
    counts = np.bincount(fund_labels)
    giant = int(np.argmax(counts))
    if counts[giant] > 0.8 * n_f:
        in_giant = held[labels[n_f + held] == giant]
        if len(in_giant):
            held = in_giant
    return int(held[rng.integers(len(held))])


def edge_list_rows(network: FundAssetNetwork):
    """Network as CSV rows: fund,asset,investment."""
    funds, assets = np.nonzero(network.investments > 0)
    for i, j in zip(funds.tolist(), assets.tolist()):
        yield (i, j, float(network.investments[i, j]))
