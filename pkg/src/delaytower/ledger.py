"""Validator-side chain state: miner records, proof acceptance, block tallies.

Proof submissions go through a fixed gauntlet: signature, chain-tip match,
height progression, cheap structural screen, then full transcript
verification. A submission that fails any step leaves the state untouched.
Block production is abstracted to signature events; a block commits when a
two-thirds quorum of the current validator set endorses it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Optional

from . import tower, vdf
from .serialization import encode_bigint, encode_bytes, encode_uint
from .signing import SignatureScheme, scheme_by_name

SNAPSHOT_VERSION = 1

_DOMAIN_REGISTER = b"delay-tower/register/v1"
_DOMAIN_SUBMIT = b"delay-tower/submit/v1"

MIN_VALIDATORS = 4


class AlreadyRegistered(Exception):
    """Address already has a miner state."""


class InvalidSignature(Exception):
    """Submission signature does not verify against the sender address."""


class InvalidProof(Exception):
    """Registration proof fails structural or transcript checks."""


class UnknownMiner(Exception):
    """Submission from an address with no miner state."""


class ForeignSigner(Exception):
    """Block endorsement from outside the current validator set."""


class NoBlocksThisEpoch(Exception):
    """Liveliness is undefined while the epoch has no committed blocks."""


class Ranking(Enum):
    BY_TOWER_HEIGHT = "by-tower-height"
    BY_COMPLIANT_EPOCHS = "by-compliant-epochs"


@dataclass(frozen=True)
class EpochConfig:
    """Protocol knobs fixed per network; see README for the default rationale."""

    rounds_per_epoch: int = 100
    max_validators: int = 100
    liveliness_threshold: Fraction = Fraction(9, 10)
    mining_threshold: int = 24
    jail_sentence_epochs: int = 1
    growth_cap: int = 48
    ranking: Ranking = Ranking.BY_TOWER_HEIGHT

    def __post_init__(self):
        if self.rounds_per_epoch < 1:
            raise ValueError("rounds_per_epoch must be positive")
        if self.max_validators < MIN_VALIDATORS:
            raise ValueError(f"max_validators must be >= {MIN_VALIDATORS}")
        if not 0 <= self.liveliness_threshold <= 1:
            raise ValueError("liveliness_threshold must lie in [0, 1]")
        if self.mining_threshold < 1:
            raise ValueError("mining_threshold must be positive")
        if self.jail_sentence_epochs < 1:
            raise ValueError("jail_sentence_epochs must be positive")
        if self.growth_cap < self.mining_threshold:
            raise ValueError("growth_cap must be >= mining_threshold")


@dataclass
class MinerState:
    """On-chain record for one miner address."""

    address: bytes
    height: int
    hash: bytes
    num: int = 0
    jailed: bool = False
    jail_sentence: int = 0
    compliant_epochs: int = 0


def quorum(n: int) -> int:
    """Endorsements needed to commit a block: ceil(2n/3)."""
    return (2 * n + 2) // 3


def registration_message(address: bytes, params: vdf.PublicParams,
                         record: tower.ProofRecord) -> bytes:
    return (
        _DOMAIN_REGISTER
        + encode_bytes(address)
        + encode_bigint(params.modulus)
        + encode_bytes(params.input_digest)
        + encode_uint(params.iterations, 8)
        + encode_uint(params.prime_length_bits, 4)
        + tower.record_digest_bytes(record)
        + encode_uint(record.created_epoch, 8)
    )


def submission_message(address: bytes, claimed_height: int,
                       record: tower.ProofRecord) -> bytes:
    return (
        _DOMAIN_SUBMIT
        + encode_bytes(address)
        + encode_uint(claimed_height, 8)
        + tower.record_digest_bytes(record)
        + encode_uint(record.created_epoch, 8)
    )


class LedgerState:
    """Single-writer chain state; mutating calls either fully apply or not at all."""

    def __init__(
        self,
        security: vdf.SecurityParams,
        epoch_config: EpochConfig,
        scheme: SignatureScheme,
        *,
        modulus: Optional[int] = None,
        modulus_seed: bytes = vdf.DEFAULT_MODULUS_SEED,
    ):
        self.security = security
        self.epoch_config = epoch_config
        self.scheme = scheme
        self.modulus = modulus if modulus is not None else vdf.generate_modulus(
            security.modulus_bits, modulus_seed)
        self.iterations = vdf.effective_iterations(security.iterations)
        self.epoch: int = 0
        self.validator_set: list[bytes] = []
        self.miner_pool: dict[bytes, MinerState] = {}
        self.epoch_blocks_total: int = 0
        self.epoch_signatures: dict[bytes, int] = {}
        self._pp_template = vdf.PublicParams(
            modulus=self.modulus,
            input_digest=b"",
            iterations=self.iterations,
            prime_length_bits=security.prime_length_bits,
        )

    @classmethod
    def genesis(
        cls,
        security: vdf.SecurityParams,
        epoch_config: EpochConfig,
        scheme: SignatureScheme,
        genesis_miners: Iterable[tuple[bytes, int]],
        genesis_validators: Iterable[bytes],
        **kwargs,
    ) -> "LedgerState":
        """Bootstrap a chain: seed the miner pool and install the first validators.

        Genesis miners get placeholder chain tips; they exist so that networks
        can start with a working validator set before anyone has mined.
        """
        state = cls(security, epoch_config, scheme, **kwargs)
        for address, height in genesis_miners:
            state.bootstrap_miner(address, height=height)
        state.install_validators(genesis_validators)
        return state

    # -- invariant helpers -------------------------------------------------

    @property
    def jail_set(self) -> set[bytes]:
        return {a for a, ms in self.miner_pool.items() if ms.jailed}

    def bootstrap_miner(self, address: bytes, *, height: int = 1) -> MinerState:
        """Genesis-only shortcut that skips the proof-submission path."""
        if address in self.miner_pool:
            raise AlreadyRegistered(f"{address.hex()} already in miner pool")
        placeholder = hashlib.sha256(b"genesis-tip" + address).digest()
        ms = MinerState(address=address, height=height, hash=placeholder)
        self.miner_pool[address] = ms
        return ms

    def install_validators(self, addresses: Iterable[bytes]) -> None:
        addresses = list(addresses)
        if len(addresses) < MIN_VALIDATORS:
            raise ValueError(f"validator set needs >= {MIN_VALIDATORS} members")
        if len(set(addresses)) != len(addresses):
            raise ValueError("validator set contains duplicates")
        missing = [a for a in addresses if a not in self.miner_pool]
        if missing:
            raise ValueError(f"validators not in miner pool: {[m.hex() for m in missing]}")
        self.validator_set = list(addresses)

    def _check_params_match_genesis(self, params: vdf.PublicParams) -> None:
        if (params.modulus != self.modulus
                or params.iterations != self.iterations
                or params.prime_length_bits != self.security.prime_length_bits):
            raise InvalidProof("public parameters do not match the genesis profile")

    # -- proof intake ------------------------------------------------------

    def register_miner(
        self,
        address: bytes,
        params: vdf.PublicParams,
        first_proof: tower.ProofRecord,
        signature: bytes,
    ) -> MinerState:
        """Admit a full node into the miner pool on a valid first proof."""
        if address in self.miner_pool:
            raise AlreadyRegistered(f"{address.hex()} already registered")
        if not self.scheme.verify(address, registration_message(address, params, first_proof),
                                  signature):
            raise InvalidSignature("registration signature does not verify")
        self._check_params_match_genesis(params)
        if first_proof.index != 0:
            raise InvalidProof("first proof must have index 0")
        if first_proof.input != vdf.hash_to_group(params.input_digest, params.modulus):
            raise InvalidProof("first proof input does not match the declared parameters")
        if vdf.fast_reject(self.security, first_proof.proof):
            raise InvalidProof("first proof fails the structural screen")
        if not vdf.verify(params, first_proof.input, first_proof.output, first_proof.proof):
            raise InvalidProof("first proof transcript does not verify")
        ms = MinerState(
            address=address,
            height=1,
            hash=tower.record_digest(first_proof),
            num=1,
        )
        self.miner_pool[address] = ms
        return ms

    def submit_proof(
        self,
        address: bytes,
        claimed_height: int,
        record: tower.ProofRecord,
        signature: bytes,
    ) -> bool:
        """Validate one tower extension; True and a state update only when every
        gate passes, False and an untouched state otherwise.

        Gates, in order: signature; the record chains from the stored tip (its
        input is derived from the stored digest and its index is the next one);
        the claimed height exceeds the stored height; the structural screen and
        the full transcript check. Runs in O(1) state reads plus one transcript
        verification, independent of tower height.
        """
        if address not in self.miner_pool:
            raise UnknownMiner(f"{address.hex()} has no miner state")
        ms = self.miner_pool[address]
        message = submission_message(address, claimed_height, record)
        if not self.scheme.verify(address, message, signature):
            return False
        if record.input != vdf.hash_to_group(ms.hash, self.modulus):
            return False
        if record.index != ms.height:
            return False
        if not ms.height < claimed_height:
            return False
        if vdf.fast_reject(self.security, record.proof):
            return False
        if not vdf.verify(self._pp_template, record.input, record.output, record.proof):
            return False
        ms.height += 1
        ms.num = min(ms.num + 1, self.epoch_config.growth_cap)
        ms.hash = tower.record_digest(record)
        return True

    # -- block accounting ----------------------------------------------------

    def record_block(self, signers: Iterable[bytes]) -> bool:
        """Tally one proposed block; True iff the signer set reaches quorum."""
        signers = set(signers)
        foreign = signers - set(self.validator_set)
        if foreign:
            raise ForeignSigner(f"signers outside validator set: {[a.hex() for a in foreign]}")
        if len(signers) < quorum(len(self.validator_set)):
            return False
        self.epoch_blocks_total += 1
        for address in signers:
            self.epoch_signatures[address] = self.epoch_signatures.get(address, 0) + 1
        return True

    def liveliness(self, address: bytes) -> Fraction:
        """Fraction of this epoch's committed blocks the validator signed."""
        if address not in self.validator_set:
            raise ValueError(f"{address.hex()} is not in the validator set")
        if self.epoch_blocks_total == 0:
            raise NoBlocksThisEpoch("no blocks committed this epoch")
        return Fraction(self.epoch_signatures.get(address, 0), self.epoch_blocks_total)

    # -- snapshots -------------------------------------------------------------

    def export_snapshot(self) -> str:
        """Canonical JSON snapshot (stable key order) for checkpointing."""
        doc = {
            "version": SNAPSHOT_VERSION,
            "scheme": self.scheme.name,
            "security": {
                "modulus_bits": self.security.modulus_bits,
                "prime_length_bits": self.security.prime_length_bits,
                "iterations": self.security.iterations,
            },
            "modulus": str(self.modulus),
            "epoch_config": {
                "rounds_per_epoch": self.epoch_config.rounds_per_epoch,
                "max_validators": self.epoch_config.max_validators,
                "liveliness_threshold": str(self.epoch_config.liveliness_threshold),
                "mining_threshold": self.epoch_config.mining_threshold,
                "jail_sentence_epochs": self.epoch_config.jail_sentence_epochs,
                "growth_cap": self.epoch_config.growth_cap,
                "ranking": self.epoch_config.ranking.value,
            },
            "epoch": self.epoch,
            "validator_set": [a.hex() for a in self.validator_set],
            "miner_pool": {
                a.hex(): {
                    "height": ms.height,
                    "hash": ms.hash.hex(),
                    "num": ms.num,
                    "jailed": ms.jailed,
                    "jail_sentence": ms.jail_sentence,
                    "compliant_epochs": ms.compliant_epochs,
                }
                for a, ms in self.miner_pool.items()
            },
            "epoch_blocks_total": self.epoch_blocks_total,
            "epoch_signatures": {a.hex(): n for a, n in self.epoch_signatures.items()},
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    @classmethod
    def import_snapshot(cls, text: str) -> "LedgerState":
        doc = json.loads(text)
        if doc.get("version") != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {doc.get('version')}")
        security = vdf.SecurityParams(**doc["security"])
        cfg = doc["epoch_config"]
        epoch_config = EpochConfig(
            rounds_per_epoch=cfg["rounds_per_epoch"],
            max_validators=cfg["max_validators"],
            liveliness_threshold=Fraction(cfg["liveliness_threshold"]),
            mining_threshold=cfg["mining_threshold"],
            jail_sentence_epochs=cfg["jail_sentence_epochs"],
            growth_cap=cfg["growth_cap"],
            ranking=Ranking(cfg["ranking"]),
        )
        state = cls(security, epoch_config, scheme_by_name(doc["scheme"]),
                    modulus=int(doc["modulus"]))
        state.epoch = doc["epoch"]
        for addr_hex, fields in doc["miner_pool"].items():
            address = bytes.fromhex(addr_hex)
            state.miner_pool[address] = MinerState(
                address=address,
                height=fields["height"],
                hash=bytes.fromhex(fields["hash"]),
                num=fields["num"],
                jailed=fields["jailed"],
                jail_sentence=fields["jail_sentence"],
                compliant_epochs=fields["compliant_epochs"],
            )
        validators = [bytes.fromhex(a) for a in doc["validator_set"]]
        if validators:
            state.install_validators(validators)
        state.epoch_blocks_total = doc["epoch_blocks_total"]
        state.epoch_signatures = {
            bytes.fromhex(a): n for a, n in doc["epoch_signatures"].items()
        }
        return state
