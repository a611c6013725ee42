"""Shared fixtures: small parameter profiles that keep the suite fast."""

from __future__ import annotations

import pytest

from delaytower import vdf
from delaytower.ledger import EpochConfig, LedgerState
from delaytower.signing import KeyedHashScheme

SMALL_SECURITY = vdf.SecurityParams(modulus_bits=512, iterations=16)
TINY_SECURITY = vdf.SecurityParams(modulus_bits=256, iterations=16)


@pytest.fixture(scope="session")
def small_security() -> vdf.SecurityParams:
    return SMALL_SECURITY


@pytest.fixture(scope="session")
def small_params() -> vdf.PublicParams:
    return vdf.setup(SMALL_SECURITY, b"fixture-key", b"fixture-endpoint")


@pytest.fixture(scope="session")
def scheme() -> KeyedHashScheme:
    return KeyedHashScheme()


def make_ledger(
    security: vdf.SecurityParams = TINY_SECURITY,
    config: EpochConfig | None = None,
    miners: int = 0,
    validators: int = 0,
) -> LedgerState:
    """Ledger with bootstrapped miners m-00.. and the first ``validators`` installed."""
    state = LedgerState(security, config or EpochConfig(), KeyedHashScheme())
    addresses = [f"m-{i:02d}".encode() for i in range(miners)]
    for address in addresses:
        state.bootstrap_miner(address)
    if validators:
        state.install_validators(addresses[:validators])
    return state
