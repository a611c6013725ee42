"""Deterministic round-based network harness over the ledger.

Each round one validator proposes: a dead or silent leader costs the round
(timeout), otherwise the round commits iff the signatures collected from the
validator set reach quorum. Epoch boundaries apply mining results and run the
reconfiguration pipeline. All randomness comes from a counter-style generator
keyed by (seed, epoch, round, address), so two runs of one scenario produce
byte-identical metrics regardless of scheduling.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Callable, Optional, Union

from . import tower, vdf
from .ledger import (
    EpochConfig,
    LedgerState,
    Ranking,
    registration_message,
    submission_message,
)
from .reconfig import advance_epoch
from .signing import KeyedHashScheme
from .serialization import encode_bytes, encode_uint

_DOMAIN_DRAW = b"delay-tower/sim-draw/v1"

_U64 = 1 << 64


class InvalidScenario(ValueError):
    """Scenario fails validation before the run starts."""


class _NeverRecovered:
    def __repr__(self) -> str:
        return "NEVER_RECOVERED"


NEVER_RECOVERED = _NeverRecovered()


class BehaviorKind(Enum):
    HONEST = "honest"
    CRASHED = "crashed"
    SILENT = "silent"


@dataclass(frozen=True)
class RealVdf:
    """Mining marker: actually build a tower at desk scale instead of simulating."""

    proofs_per_epoch: int = 1

    def __post_init__(self):
        if self.proofs_per_epoch < 1:
            raise ValueError("proofs_per_epoch must be positive")


@dataclass(frozen=True)
class Behavior:
    """Consensus conduct plus mining output for one node."""

    kind: BehaviorKind = BehaviorKind.HONEST
    from_round: int = 0
    sign_probability: Fraction = Fraction(1)
    mining: Union[int, RealVdf] = 0

    def __post_init__(self):
        if not 0 <= self.sign_probability <= 1:
            raise ValueError("sign_probability must lie in [0, 1]")
        if self.from_round < 0:
            raise ValueError("from_round must be non-negative")
        if isinstance(self.mining, int) and self.mining < 0:
            raise ValueError("mining rate must be non-negative")

    @classmethod
    def honest(cls, mining: Union[int, RealVdf] = 0) -> "Behavior":
        return cls(kind=BehaviorKind.HONEST, mining=mining)

    @classmethod
    def crashed(cls, from_round: int = 0, mining: Union[int, RealVdf] = 0) -> "Behavior":
        return cls(kind=BehaviorKind.CRASHED, from_round=from_round, mining=mining)

    @classmethod
    def silent(cls, sign_probability: Fraction,
               mining: Union[int, RealVdf] = 0) -> "Behavior":
        return cls(kind=BehaviorKind.SILENT, sign_probability=Fraction(sign_probability),
                   mining=mining)


@dataclass(frozen=True)
class Scenario:
    seed: int
    epochs: int
    population: tuple[tuple[bytes, Behavior], ...]
    genesis_validators: tuple[bytes, ...]
    epoch_config: EpochConfig = EpochConfig()
    rounds_per_epoch: Optional[int] = None
    security: vdf.SecurityParams = vdf.SecurityParams(modulus_bits=512, iterations=16)

    @property
    def rounds(self) -> int:
        return (self.rounds_per_epoch if self.rounds_per_epoch is not None
                else self.epoch_config.rounds_per_epoch)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    committed_blocks: int
    timeouts: int
    validator_set: tuple[bytes, ...]
    jailed: tuple[bytes, ...]
    released: tuple[bytes, ...]
    liveliness: dict[bytes, Fraction]
    nakamoto_liveness: int
    reconfiguration_skipped: bool


@dataclass(frozen=True)
class SimMetrics:
    epochs: tuple[EpochRecord, ...]
    total_commits: int
    total_timeouts: int

    def to_csv(self) -> str:
        """One row per epoch; full address sets live in the summary document."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([
            "epoch", "committed_blocks", "timeouts", "validators", "jailed",
            "released", "reconfiguration_skipped", "nakamoto_liveness",
            "mean_liveliness",
        ])
        for rec in self.epochs:
            if rec.liveliness:
                mean = sum(rec.liveliness.values(), Fraction(0)) / len(rec.liveliness)
                mean_text = f"{float(mean):.6f}"
            else:
                mean_text = ""
            writer.writerow([
                rec.epoch, rec.committed_blocks, rec.timeouts,
                len(rec.validator_set), len(rec.jailed), len(rec.released),
                int(rec.reconfiguration_skipped), rec.nakamoto_liveness, mean_text,
            ])
        return buf.getvalue()

    def to_summary_json(self) -> str:
        recovery = recovery_time(self)
        doc = {
            "epochs": [
                {
                    "epoch": rec.epoch,
                    "committed_blocks": rec.committed_blocks,
                    "timeouts": rec.timeouts,
                    "validator_set": [a.hex() for a in rec.validator_set],
                    "jailed": [a.hex() for a in rec.jailed],
                    "released": [a.hex() for a in rec.released],
                    "liveliness": {a.hex(): str(v) for a, v in rec.liveliness.items()},
                    "nakamoto_liveness": rec.nakamoto_liveness,
                    "reconfiguration_skipped": rec.reconfiguration_skipped,
                }
                for rec in self.epochs
            ],
            "total_commits": self.total_commits,
            "total_timeouts": self.total_timeouts,
            "recovery_epochs": "never" if recovery is NEVER_RECOVERED else recovery,
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def nakamoto_liveness(n: int) -> int:
    """Validators that must fail before liveness is at risk: floor((n-1)/3)."""
    if n < 4:
        raise ValueError(f"validator sets smaller than 4 are unsupported, got {n}")
    return (n - 1) // 3


def recovery_time(metrics: SimMetrics) -> Union[int, _NeverRecovered]:
    """Epochs from the first timeout until the first clean epoch afterwards.

    A run with no timeouts anywhere recovers in zero epochs by definition.
    """
    onset = next((rec.epoch for rec in metrics.epochs if rec.timeouts > 0), None)
    if onset is None:
        return 0
    for rec in metrics.epochs:
        if rec.epoch >= onset and rec.timeouts == 0:
            return rec.epoch - onset
    return NEVER_RECOVERED


def _draw(seed: int, epoch: int, round_index: int, address: bytes) -> float:
    """Uniform [0, 1) draw, independent of evaluation order."""
    material = (
        _DOMAIN_DRAW
        + encode_uint(seed, 8)
        + encode_uint(epoch, 8)
        + encode_uint(round_index, 8)
        + encode_bytes(address)
    )
    digest = hashlib.sha256(material).digest()
    return int.from_bytes(digest[:8], "big") / _U64


def _validate(scenario: Scenario) -> None:
    if not 0 <= scenario.seed < _U64:
        raise InvalidScenario("seed must fit in 64 bits")
    if scenario.epochs < 1:
        raise InvalidScenario("epochs must be positive")
    if scenario.rounds < 1:
        raise InvalidScenario("rounds_per_epoch must be positive")
    addresses = [address for address, _ in scenario.population]
    if len(set(addresses)) != len(addresses):
        raise InvalidScenario("population contains duplicate addresses")
    if len(scenario.genesis_validators) < 4:
        raise InvalidScenario("at least 4 genesis validators are required")
    missing = set(scenario.genesis_validators) - set(addresses)
    if missing:
        raise InvalidScenario(
            f"genesis validators missing from population: {[m.hex() for m in missing]}")


class _Node:
    def __init__(self, address: bytes, behavior: Behavior):
        self.address = address
        self.behavior = behavior
        self.tower: Optional[tower.Tower] = None

    def crashed_at(self, global_round: int) -> bool:
        return (self.behavior.kind is BehaviorKind.CRASHED
                and global_round >= self.behavior.from_round)

    def participates(self, seed: int, epoch: int, round_index: int,
                     global_round: int) -> bool:
        if self.crashed_at(global_round):
            return False
        if self.behavior.kind is BehaviorKind.SILENT:
            return _draw(seed, epoch, round_index, self.address) < self.behavior.sign_probability
        return True


def run(
    scenario: Scenario,
    *,
    observer: Optional[Callable[[str, int, LedgerState], None]] = None,
) -> SimMetrics:
    """Execute a scenario and collect per-epoch metrics.

    ``observer``, when given, is called with ("genesis", -1, state) once, then
    with ("pre-boundary", epoch, state) after mining lands and
    ("post-boundary", epoch, state) after reconfiguration, for test
    instrumentation. Observers must not mutate the state.
    """
    _validate(scenario)
    scheme = KeyedHashScheme()
    nodes = {address: _Node(address, behavior)
             for address, behavior in scenario.population}

    state = LedgerState(scenario.security, scenario.epoch_config, scheme)
    for address, node in nodes.items():
        if isinstance(node.behavior.mining, RealVdf):
            node.tower = tower.init_tower(scenario.security, address, b"sim",
                                          created_epoch=0)
            record = node.tower.records[0]
            signature = scheme.sign(
                address, registration_message(address, node.tower.params, record))
            state.register_miner(address, node.tower.params, record, signature)
        else:
            state.bootstrap_miner(address)
    state.install_validators(scenario.genesis_validators)

    rounds = scenario.rounds
    records: list[EpochRecord] = []
    total_commits = 0
    total_timeouts = 0

    if observer is not None:
        observer("genesis", -1, state)

    for epoch_index in range(scenario.epochs):
        committed = 0
        timeouts = 0
        validator_set = tuple(state.validator_set)
        for round_index in range(rounds):
            global_round = epoch_index * rounds + round_index
            leader = nodes[validator_set[round_index % len(validator_set)]]
            if not leader.participates(scenario.seed, epoch_index, round_index,
                                       global_round):
                timeouts += 1
                continue
            signers = [
                address for address in validator_set
                if nodes[address].participates(scenario.seed, epoch_index,
                                               round_index, global_round)
            ]
            if state.record_block(signers):
                committed += 1
            else:
                timeouts += 1

        liveliness_map = {}
        if state.epoch_blocks_total > 0:
            liveliness_map = {a: state.liveliness(a) for a in validator_set}

        _apply_mining(state, nodes, scheme, epoch_index, rounds)
        if observer is not None:
            observer("pre-boundary", epoch_index, state)
        summary = advance_epoch(state)
        if observer is not None:
            observer("post-boundary", epoch_index, state)
        records.append(EpochRecord(
            epoch=epoch_index,
            committed_blocks=committed,
            timeouts=timeouts,
            validator_set=validator_set,
            jailed=summary.jailed,
            released=summary.released,
            liveliness=liveliness_map,
            nakamoto_liveness=nakamoto_liveness(len(validator_set)),
            reconfiguration_skipped=summary.reconfiguration_skipped,
        ))
        total_commits += committed
        total_timeouts += timeouts

    return SimMetrics(epochs=tuple(records), total_commits=total_commits,
                      total_timeouts=total_timeouts)


def _parse_rational(value) -> Fraction:
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(value).limit_denominator(10**9)
    raise InvalidScenario(f"cannot parse rational from {value!r}")


def _parse_behavior(doc: dict) -> Behavior:
    conduct = doc.get("behavior", {})
    kind = BehaviorKind(conduct.get("kind", "honest"))
    mining_doc = doc.get("mining_rate", 0)
    if isinstance(mining_doc, dict):
        if not mining_doc.get("real_vdf"):
            raise InvalidScenario(f"unrecognised mining rate {mining_doc!r}")
        mining: Union[int, RealVdf] = RealVdf(
            proofs_per_epoch=mining_doc.get("proofs_per_epoch", 1))
    else:
        mining = int(mining_doc)
    return Behavior(
        kind=kind,
        from_round=conduct.get("from_round", 0),
        sign_probability=_parse_rational(conduct.get("sign_probability", 1)),
        mining=mining,
    )


def scenario_from_json(text: str) -> Scenario:
    """Parse the documented scenario schema; raises InvalidScenario on bad fields."""
    doc = json.loads(text)
    try:
        cfg_doc = doc.get("epoch_config", {})
        epoch_config = EpochConfig(
            rounds_per_epoch=cfg_doc.get("rounds_per_epoch", 100),
            max_validators=cfg_doc.get("max_validators", 100),
            liveliness_threshold=_parse_rational(cfg_doc.get("liveliness_threshold", "9/10")),
            mining_threshold=cfg_doc.get("mining_threshold", 24),
            jail_sentence_epochs=cfg_doc.get("jail_sentence_epochs", 1),
            growth_cap=cfg_doc.get("growth_cap", 48),
            ranking=Ranking(cfg_doc.get("ranking", "by-tower-height")),
        )
        sec_doc = doc.get("security", {})
        security = vdf.SecurityParams(
            modulus_bits=sec_doc.get("modulus_bits", 512),
            prime_length_bits=sec_doc.get("prime_length_bits", 512),
            iterations=sec_doc.get("iterations", 16),
        )
        population = tuple(
            (bytes.fromhex(entry["address"]), _parse_behavior(entry))
            for entry in doc["population"]
        )
        scenario = Scenario(
            seed=doc["seed"],
            epochs=doc["epochs"],
            rounds_per_epoch=doc.get("rounds_per_epoch"),
            population=population,
            genesis_validators=tuple(bytes.fromhex(a) for a in doc["genesis_validators"]),
            epoch_config=epoch_config,
            security=security,
        )
    except InvalidScenario:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidScenario(f"bad scenario document: {exc}") from exc
    _validate(scenario)
    return scenario


def scenario_to_json(scenario: Scenario) -> str:
    """Serialize a scenario into the documented schema."""
    def mining_doc(mining):
        if isinstance(mining, RealVdf):
            return {"real_vdf": True, "proofs_per_epoch": mining.proofs_per_epoch}
        return mining

    def behavior_doc(behavior: Behavior):
        conduct = {"kind": behavior.kind.value}
        if behavior.kind is BehaviorKind.CRASHED:
            conduct["from_round"] = behavior.from_round
        if behavior.kind is BehaviorKind.SILENT:
            conduct["sign_probability"] = str(behavior.sign_probability)
        return conduct

    doc = {
        "seed": scenario.seed,
        "epochs": scenario.epochs,
        "rounds_per_epoch": scenario.rounds,
        "epoch_config": {
            "rounds_per_epoch": scenario.epoch_config.rounds_per_epoch,
            "max_validators": scenario.epoch_config.max_validators,
            "liveliness_threshold": str(scenario.epoch_config.liveliness_threshold),
            "mining_threshold": scenario.epoch_config.mining_threshold,
            "jail_sentence_epochs": scenario.epoch_config.jail_sentence_epochs,
            "growth_cap": scenario.epoch_config.growth_cap,
            "ranking": scenario.epoch_config.ranking.value,
        },
        "security": {
            "modulus_bits": scenario.security.modulus_bits,
            "prime_length_bits": scenario.security.prime_length_bits,
            "iterations": scenario.security.iterations,
        },
        "population": [
            {
                "address": address.hex(),
                "behavior": behavior_doc(behavior),
                "mining_rate": mining_doc(behavior.mining),
            }
            for address, behavior in scenario.population
        ],
        "genesis_validators": [a.hex() for a in scenario.genesis_validators],
    }
    return json.dumps(doc, indent=2) + "\n"


def _apply_mining(state: LedgerState, nodes: dict[bytes, _Node],
                  scheme: KeyedHashScheme, epoch_index: int, rounds: int) -> None:
    """Set per-epoch proof counts at the boundary.

    Simulated miners get their configured rate written straight into the miner
    state (height advances to match, as accepted submissions would). Real
    miners extend their tower and push every proof through the genuine
    submission path. Nodes crashed before the boundary mine nothing.
    """
    boundary_round = (epoch_index + 1) * rounds
    cap = state.epoch_config.growth_cap
    for address, node in nodes.items():
        crashed = (node.behavior.kind is BehaviorKind.CRASHED
                   and node.behavior.from_round < boundary_round)
        if isinstance(node.behavior.mining, RealVdf):
            if crashed:
                continue
            for _ in range(node.behavior.mining.proofs_per_epoch):
                node.tower = tower.extend(node.tower, created_epoch=epoch_index)
                record = node.tower.records[-1]
                claimed = len(node.tower.records)
                signature = scheme.sign(
                    address, submission_message(address, claimed, record))
                accepted = state.submit_proof(address, claimed, record, signature)
                if not accepted:
                    raise RuntimeError("simulated real miner produced a rejected proof")
        else:
            ms = state.miner_pool[address]
            accepted = 0 if crashed else min(node.behavior.mining, cap)
            ms.num = accepted
            ms.height += accepted
