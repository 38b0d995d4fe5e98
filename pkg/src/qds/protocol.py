"""Three-party signing protocol: distribution stage and messaging stage.

Bob and Charlie send photons; Alice receives them and later signs. Each
recipient ends up able to check L positions per message value: L/2 of his own
string that he kept, plus L/2 of the other recipient's string that was
forwarded to him over the confidential Bob-Charlie link. Alice never learns
which positions went where.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from . import bits as bitcodec
from .channel import ExchangeRecord, LinkParams, sample_exchange
from .errors import (
    DistributionAborted,
    MalformedDeclaration,
    MaterialConsumed,
    ProtocolError,
    ValidationError,
)
from .rng import Seed, derive, generator
from .security import Thresholds

MESSAGE_VALUES = (0, 1)


class PartyId(str, enum.Enum):
    ALICE = "alice"
    BOB = "bob"
    CHARLIE = "charlie"

    @property
    def other_recipient(self) -> "PartyId":
        if self is PartyId.BOB:
            return PartyId.CHARLIE
        if self is PartyId.CHARLIE:
            return PartyId.BOB
        raise ValueError("Alice is not a recipient")


SENDERS = (PartyId.BOB, PartyId.CHARLIE)


class Role(str, enum.Enum):
    DIRECT = "direct"
    FORWARDED = "forwarded"


@dataclass(frozen=True)
class Outcomes:
    """Bits indexed by their original exchange positions (sorted ascending)."""

    positions: np.ndarray
    bits: np.ndarray

    def __post_init__(self):
        if self.positions.shape != self.bits.shape:
            raise ValidationError("positions and bits must have equal length")

    def __len__(self) -> int:
        return int(self.positions.size)

    def lookup(self, positions: np.ndarray) -> np.ndarray:
        """Bits at ``positions``; every requested position must be present."""
        idx = np.searchsorted(self.positions, positions)
        if np.any(idx >= self.positions.size) or np.any(
            self.positions[np.minimum(idx, self.positions.size - 1)] != positions
        ):
            raise MalformedDeclaration("malformed declaration: position sets misaligned")
        return self.bits[idx]

    def to_json(self) -> dict:
        return {
            "positions": self.positions.tolist(),
            "bits": bitcodec.encode(self.bits),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Outcomes":
        return cls(
            positions=np.asarray(obj["positions"], dtype=np.int64),
            bits=bitcodec.decode(obj["bits"]),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Outcomes):
            return NotImplemented
        return np.array_equal(self.positions, other.positions) and np.array_equal(
            self.bits, other.bits
        )


@dataclass(frozen=True)
class SenderKeyPair:
    """A sender's two random strings, one per future message value."""

    owner: PartyId
    message0_bits: np.ndarray
    message1_bits: np.ndarray

    def for_message(self, m: int) -> np.ndarray:
        return self.message1_bits if m else self.message0_bits


@dataclass
class SymmetrizedKey:
    """What one recipient can check for one message value."""

    owner: PartyId
    message_value: int
    own_kept: Outcomes
    other_received: Outcomes
    used: bool = False

    def __post_init__(self):
        if len(self.own_kept) != len(self.other_received):
            raise ValidationError("kept and received halves must have equal size")

    @property
    def L(self) -> int:
        return len(self.own_kept) + len(self.other_received)

    def consume(self) -> None:
        if self.used:
            raise MaterialConsumed("signature material already consumed")
        self.used = True

    def to_json(self) -> dict:
        return {
            "owner": self.owner.value,
            "message_value": self.message_value,
            "own_kept": self.own_kept.to_json(),
            "other_received": self.other_received.to_json(),
            "used": self.used,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SymmetrizedKey":
        return cls(
            owner=PartyId(obj["owner"]),
            message_value=int(obj["message_value"]),
            own_kept=Outcomes.from_json(obj["own_kept"]),
            other_received=Outcomes.from_json(obj["other_received"]),
            used=bool(obj["used"]),
        )


@dataclass(frozen=True)
class Declaration:
    """Alice's signed message: m plus her L outcomes for each sender's string."""

    message_bit: int
    bob_string_outcomes: Outcomes
    charlie_string_outcomes: Outcomes

    def outcomes_for(self, origin: PartyId) -> Outcomes:
        if origin is PartyId.BOB:
            return self.bob_string_outcomes
        if origin is PartyId.CHARLIE:
            return self.charlie_string_outcomes
        raise ValueError(f"no string originates from {origin}")

    def to_json(self) -> dict:
        return {
            "message_bit": self.message_bit,
            "bob": self.bob_string_outcomes.to_json(),
            "charlie": self.charlie_string_outcomes.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Declaration":
        return cls(
            message_bit=int(obj["message_bit"]),
            bob_string_outcomes=Outcomes.from_json(obj["bob"]),
            charlie_string_outcomes=Outcomes.from_json(obj["charlie"]),
        )

    def with_flips(self, origin: PartyId, flip_mask: np.ndarray) -> "Declaration":
        """Copy with the bits of one origin string XOR-ed with ``flip_mask``."""
        old = self.outcomes_for(origin)
        new = Outcomes(old.positions, old.bits ^ flip_mask.astype(np.uint8))
        if origin is PartyId.BOB:
            return Declaration(self.message_bit, new, self.charlie_string_outcomes)
        return Declaration(self.message_bit, self.bob_string_outcomes, new)


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    mismatches: int
    positions_checked: int
    threshold_fraction: float
    role: Role
    mismatches_by_origin: Dict[str, int] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "accepted": self.accepted,
            "mismatches": self.mismatches,
            "positions_checked": self.positions_checked,
            "threshold_fraction": self.threshold_fraction,
            "role": self.role.value,
            "mismatches_by_origin": dict(sorted(self.mismatches_by_origin.items())),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Verdict":
        return cls(
            accepted=bool(obj["accepted"]),
            mismatches=int(obj["mismatches"]),
            positions_checked=int(obj["positions_checked"]),
            threshold_fraction=float(obj["threshold_fraction"]),
            role=Role(obj["role"]),
            mismatches_by_origin={k: int(v) for k, v in obj["mismatches_by_origin"].items()},
        )


@dataclass
class AliceStore:
    """Alice's outcomes at the retained positions of all four exchanges.

    Holds nothing about how Bob and Charlie partitioned their strings.
    """

    outcomes: Dict[Tuple[PartyId, int], Outcomes]
    used: set = field(default_factory=set)

    def to_json(self) -> dict:
        return {
            "outcomes": {
                f"{sender.value}/{m}": out.to_json()
                for (sender, m), out in sorted(
                    self.outcomes.items(), key=lambda kv: (kv[0][0].value, kv[0][1])
                )
            },
            "used": sorted(self.used),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AliceStore":
        outcomes = {}
        for key, out in obj["outcomes"].items():
            sender, m = key.split("/")
            outcomes[(PartyId(sender), int(m))] = Outcomes.from_json(out)
        return cls(outcomes=outcomes, used=set(int(m) for m in obj["used"]))


@dataclass
class RecipientStore:
    owner: PartyId
    keys: Dict[int, SymmetrizedKey]

    def to_json(self) -> dict:
        return {
            "owner": self.owner.value,
            "keys": {str(m): key.to_json() for m, key in sorted(self.keys.items())},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RecipientStore":
        return cls(
            owner=PartyId(obj["owner"]),
            keys={int(m): SymmetrizedKey.from_json(k) for m, k in obj["keys"].items()},
        )


@dataclass
class DistributionResult:
    alice: AliceStore
    bob: RecipientStore
    charlie: RecipientStore
    e_hat: float
    e_hat_by_exchange: Dict[Tuple[PartyId, int], float]
    sender_keys: Dict[PartyId, SenderKeyPair]

    def recipient(self, party: PartyId) -> RecipientStore:
        return self.bob if party is PartyId.BOB else self.charlie


def choose_sacrifice(length: int, k: int, seed: Seed) -> np.ndarray:
    """Public-coin choice of the k positions (indices into the record) to sacrifice."""
    if k >= length:
        raise ValidationError("nothing left to sign with: k must be < record length")
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    rng = generator(seed, "sacrifice")
    return np.sort(rng.choice(length, size=k, replace=False))


def estimate_error(
    record: ExchangeRecord, k: int, seed: Seed
) -> Tuple[float, ExchangeRecord]:
    """Sacrifice k random positions to estimate the error rate; return the rest."""
    chosen = choose_sacrifice(record.length, k, seed)
    e_hat = float(np.count_nonzero(record.sender_bits[chosen] != record.alice_bits[chosen])) / k
    keep = np.ones(record.length, dtype=bool)
    keep[chosen] = False
    surviving = ExchangeRecord(
        sender_bits=record.sender_bits[keep],
        alice_bits=record.alice_bits[keep],
        seed=record.seed,
        positions=record.positions[keep],
    )
    return e_hat, surviving


def choose_forward_half(L: int, seed: Seed) -> np.ndarray:
    """Boolean mask over L positions; True marks the L/2 positions to forward."""
    if L % 2:
        raise ValidationError(f"cannot halve signature: L={L} is odd")
    rng = generator(seed, "forward-half")
    mask = np.zeros(L, dtype=bool)
    mask[rng.choice(L, size=L // 2, replace=False)] = True
    return mask


def symmetrize(
    bob_surviving: Outcomes,
    charlie_surviving: Outcomes,
    message_value: int,
    seed: Seed,
) -> Tuple[SymmetrizedKey, SymmetrizedKey]:
    """Each recipient forwards a random half of his string to the other.

    The transfer is modelled as an ideal confidential, authenticated channel.
    Bob and Charlie draw their halves from independent child streams of ``seed``.
    """
    if len(bob_surviving) != len(charlie_surviving):
        raise ValidationError("both recipients must hold strings of length L")
    L = len(bob_surviving)
    halves = {}
    for party, string in ((PartyId.BOB, bob_surviving), (PartyId.CHARLIE, charlie_surviving)):
        fwd = choose_forward_half(L, derive(seed, party.value))
        halves[party] = (
            Outcomes(string.positions[~fwd], string.bits[~fwd]),
            Outcomes(string.positions[fwd], string.bits[fwd]),
        )
    bob_key = SymmetrizedKey(
        owner=PartyId.BOB,
        message_value=message_value,
        own_kept=halves[PartyId.BOB][0],
        other_received=halves[PartyId.CHARLIE][1],
    )
    charlie_key = SymmetrizedKey(
        owner=PartyId.CHARLIE,
        message_value=message_value,
        own_kept=halves[PartyId.CHARLIE][0],
        other_received=halves[PartyId.BOB][1],
    )
    return bob_key, charlie_key


def exchange_seed(seed: Seed, sender: PartyId, m: int):
    return derive(seed, "exchange", sender.value, m)


def estimate_seed(seed: Seed, sender: PartyId, m: int):
    return derive(seed, "estimate", sender.value, m)


def symmetrize_seed(seed: Seed, m: int):
    return derive(seed, "symmetrize", m)


def run_distribution(
    link: LinkParams,
    L: int,
    k: int,
    seed: Seed,
    th: Optional[Thresholds] = None,
    links: Optional[Dict[PartyId, LinkParams]] = None,
) -> DistributionResult:
    """Run the whole distribution stage for both senders and both message values.

    ``links`` optionally gives Bob and Charlie different links. When
    ``th`` is given the stage aborts if the pooled error estimate reaches s_a.
    """
    if L < 1 or k < 1:
        raise ValidationError("L and k must be >= 1")
    if L % 2:
        raise ValidationError(f"cannot halve signature: L={L} is odd")
    links = links or {}
    alice: Dict[Tuple[PartyId, int], Outcomes] = {}
    surviving: Dict[Tuple[PartyId, int], Outcomes] = {}
    e_hats: Dict[Tuple[PartyId, int], float] = {}
    sender_bits: Dict[PartyId, Dict[int, np.ndarray]] = {p: {} for p in SENDERS}
    for sender in SENDERS:
        for m in MESSAGE_VALUES:
            record = sample_exchange(links.get(sender, link), L + k, exchange_seed(seed, sender, m))
            sender_bits[sender][m] = record.sender_bits
            e_hat, kept = estimate_error(record, k, estimate_seed(seed, sender, m))
            e_hats[(sender, m)] = e_hat
            alice[(sender, m)] = Outcomes(kept.positions, kept.alice_bits)
            surviving[(sender, m)] = Outcomes(kept.positions, kept.sender_bits)
    pooled = float(np.mean(list(e_hats.values())))
    if th is not None and pooled >= th.s_a:
        raise DistributionAborted(
            f"distribution aborted: channel too noisy (e_hat={pooled:.5f} >= s_a={th.s_a:.5f})"
        )
    bob_keys, charlie_keys = {}, {}
    for m in MESSAGE_VALUES:
        bob_keys[m], charlie_keys[m] = symmetrize(
            surviving[(PartyId.BOB, m)],
            surviving[(PartyId.CHARLIE, m)],
            m,
            symmetrize_seed(seed, m),
        )
    return DistributionResult(
        alice=AliceStore(outcomes=alice),
        bob=RecipientStore(PartyId.BOB, bob_keys),
        charlie=RecipientStore(PartyId.CHARLIE, charlie_keys),
        e_hat=pooled,
        e_hat_by_exchange=e_hats,
        sender_keys={
            p: SenderKeyPair(p, sender_bits[p][0], sender_bits[p][1]) for p in SENDERS
        },
    )


def sign(alice: AliceStore, m: int) -> Declaration:
    if m not in MESSAGE_VALUES:
        raise ValidationError(f"message must be a bit, got {m!r}")
    if any((sender, m) not in alice.outcomes for sender in SENDERS):
        raise ProtocolError("no distribution for this message value")
    if m in alice.used:
        raise MaterialConsumed("signature material already consumed")
    alice.used.add(m)
    return Declaration(
        message_bit=m,
        bob_string_outcomes=alice.outcomes[(PartyId.BOB, m)],
        charlie_string_outcomes=alice.outcomes[(PartyId.CHARLIE, m)],
    )


def count_mismatches(declaration: Declaration, key: SymmetrizedKey) -> Dict[str, int]:
    own = key.owner
    other = own.other_recipient
    own_claimed = declaration.outcomes_for(own).lookup(key.own_kept.positions)
    other_claimed = declaration.outcomes_for(other).lookup(key.other_received.positions)
    return {
        own.value: int(np.count_nonzero(own_claimed != key.own_kept.bits)),
        other.value: int(np.count_nonzero(other_claimed != key.other_received.bits)),
    }


def verify(
    declaration: Declaration,
    key: SymmetrizedKey,
    threshold_fraction: float,
    role: Role = Role.DIRECT,
    consume: bool = True,
) -> Verdict:
    """Accept iff the mismatch count is strictly below ``L * threshold_fraction``."""
    if declaration.message_bit != key.message_value:
        raise MalformedDeclaration(
            f"declaration is for m={declaration.message_bit}, key is for m={key.message_value}"
        )
    if consume:
        key.consume()
    by_origin = count_mismatches(declaration, key)
    total = sum(by_origin.values())
    L = key.L
    return Verdict(
        accepted=total < L * threshold_fraction,
        mismatches=total,
        positions_checked=L,
        threshold_fraction=threshold_fraction,
        role=Role(role),
        mismatches_by_origin=by_origin,
    )


def run_messaging(
    alice: AliceStore,
    bob: RecipientStore,
    charlie: RecipientStore,
    m: int,
    th: Thresholds,
    in_transit: Optional[Callable[[Declaration], Declaration]] = None,
) -> Tuple[Verdict, Optional[Verdict]]:
    """Alice signs to Bob; if Bob accepts he forwards the declaration to Charlie.

    ``in_transit`` may rewrite the declaration on the Bob-to-Charlie hop.
    """
    declaration = sign(alice, m)
    bob_verdict = verify(declaration, bob.keys[m], th.s_a, Role.DIRECT)
    if not bob_verdict.accepted:
        return bob_verdict, None
    forwarded = in_transit(declaration) if in_transit else declaration
    charlie_verdict = verify(forwarded, charlie.keys[m], th.s_v, Role.FORWARDED)
    return bob_verdict, charlie_verdict


STORE_FORMAT = "qds-party-store"
STORE_VERSION = 1


def dump_store(store, path) -> None:
    """Write an Alice or recipient store as a versioned JSON envelope."""
    party = PartyId.ALICE if isinstance(store, AliceStore) else store.owner
    envelope = {
        "format": STORE_FORMAT,
        "version": STORE_VERSION,
        "party": party.value,
        "data": store.to_json(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(envelope, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_store(path):
    with open(path, encoding="utf-8") as fh:
        envelope = json.load(fh)
    if envelope.get("format") != STORE_FORMAT:
        raise ValidationError(f"{path}: not a party store")
    if envelope.get("version") != STORE_VERSION:
        raise ValidationError(f"{path}: unsupported store version {envelope.get('version')}")
    party = PartyId(envelope["party"])
    if party is PartyId.ALICE:
        return AliceStore.from_json(envelope["data"])
    return RecipientStore.from_json(envelope["data"])
