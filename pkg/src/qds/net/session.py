"""Run Alice, Bob and Charlie as concurrent endpoints exchanging frames.

Message sequence for one signed bit::

    sender -> Alice   KEY_BLOCK x2        simulated detection results, m = 0, 1
    sender -> Alice   ERROR_EST x2        public-coin sacrificed positions + sender bits
    Alice -> sender   ERROR_EST x2        mismatch count and error estimate
    Bob <-> Charlie   FORWARD_HALF x2     forwarded halves (confidential channel)
    Alice -> Bob      SIGNED_MESSAGE      or ABORT if the pooled estimate reaches s_a
    Bob -> Charlie    FORWARDED_MESSAGE   or ABORT if Bob rejected
    Bob, Charlie      VERDICT             recorded in the transcript only

The quantum link is collapsed into KEY_BLOCK: the sender runs the channel
statistics and ships Alice the outcomes she would have measured.

Each endpoint reads its channels in a fixed order, so for a given seed the
frames on every channel are identical whichever transport carries them.
"""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .. import bits as bitcodec
from ..channel import LinkParams, sample_exchange
from ..errors import ProtocolError, QDSError
from ..protocol import (
    MESSAGE_VALUES,
    SENDERS,
    AliceStore,
    Declaration,
    Outcomes,
    PartyId,
    Role,
    SymmetrizedKey,
    Verdict,
    choose_forward_half,
    choose_sacrifice,
    estimate_seed,
    exchange_seed,
    run_distribution,
    run_messaging,
    sign,
    symmetrize_seed,
    verify,
)
from ..rng import Seed, derive
from ..security import Thresholds
from .frames import Frame, MessageType, decode_frame
from .transport import ChannelClosed, Transport, make_transport

A, B, C = PartyId.ALICE, PartyId.BOB, PartyId.CHARLIE
HARNESS = "harness"


class SessionError(QDSError):
    pass


@dataclass(frozen=True)
class SessionConfig:
    link: LinkParams
    L: int
    k: int
    thresholds: Thresholds
    message: int = 0
    timeout: float = 30.0


@dataclass(frozen=True)
class TranscriptRecord:
    channel: str
    sender: str
    receiver: str
    seq: int
    type: str
    t: float
    delivered: bool
    raw: bytes

    def frame(self) -> Frame:
        return decode_frame(self.raw)

    def to_json(self, include_time: bool = True) -> dict:
        out = {
            "channel": self.channel,
            "from": self.sender,
            "to": self.receiver,
            "seq": self.seq,
            "type": self.type,
            "delivered": self.delivered,
            "frame_hex": self.raw.hex(),
        }
        if include_time:
            out["t"] = round(self.t, 6)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "TranscriptRecord":
        return cls(
            channel=obj["channel"],
            sender=obj["from"],
            receiver=obj["to"],
            seq=int(obj["seq"]),
            type=obj["type"],
            t=float(obj.get("t", 0.0)),
            delivered=bool(obj["delivered"]),
            raw=bytes.fromhex(obj["frame_hex"]),
        )


@dataclass
class SessionTranscript:
    session: str
    records: List[TranscriptRecord] = field(default_factory=list)
    bob_verdict: Optional[Verdict] = None
    charlie_verdict: Optional[Verdict] = None
    e_hat: Optional[float] = None
    aborted: Optional[str] = None

    def channel_sequence(self, channel: str) -> List[Tuple[str, int, str, bytes]]:
        """(sender, seq, type, raw) in per-sender seq order, for one channel."""
        rows = [r for r in self.records if r.channel == channel]
        rows.sort(key=lambda r: (r.sender, r.seq))
        return [(r.sender, r.seq, r.type, r.raw) for r in rows]

    def channels(self) -> List[str]:
        return sorted({r.channel for r in self.records})

    def verdicts(self) -> Tuple[Optional[Verdict], Optional[Verdict]]:
        return self.bob_verdict, self.charlie_verdict

    def to_jsonl(self, include_time: bool = True) -> str:
        ordered = sorted(self.records, key=lambda r: (r.channel, r.sender, r.seq))
        if include_time:
            ordered = sorted(self.records, key=lambda r: r.t)
        return "".join(json.dumps(r.to_json(include_time), sort_keys=True) + "\n" for r in ordered)

    @classmethod
    def from_jsonl(cls, text: str, session: str = "") -> "SessionTranscript":
        records = [TranscriptRecord.from_json(json.loads(line)) for line in text.splitlines() if line.strip()]
        transcript = cls(session=session, records=records)
        for rec in records:
            if rec.type == MessageType.VERDICT.value:
                verdict = Verdict.from_json(rec.frame().body["verdict"])
                if rec.sender == B.value:
                    transcript.bob_verdict = verdict
                else:
                    transcript.charlie_verdict = verdict
            if not transcript.session:
                transcript.session = rec.frame().session
        return transcript


class _Endpoint:
    def __init__(self, party: PartyId, transport: Transport, session: str, cfg: SessionConfig,
                 seed: Seed, cancelled: threading.Event):
        self.party = party
        self.transport = transport
        self.session = session
        self.cfg = cfg
        self.seed = seed
        self.cancelled = cancelled

    def send(self, to: PartyId, kind: MessageType, body: dict) -> None:
        self.transport.send(self.party, to, kind, self.session, body)

    def recv(self, frm: PartyId, expect: Tuple[MessageType, ...], what: str) -> Frame:
        try:
            frame = self.transport.recv(self.party, frm, self.cfg.timeout, self.cancelled)
        except TimeoutError:
            raise SessionError(what) from None
        if frame.session != self.session:
            raise SessionError(f"frame for foreign session {frame.session!r}")
        if frame.type not in expect:
            raise SessionError(
                f"{what}: {self.party.value} expected {[e.value for e in expect]} "
                f"from {frm.value}, got {frame.type.value}"
            )
        return frame


class _Alice(_Endpoint):
    def run(self, out: dict) -> None:
        cfg = self.cfg
        received: Dict[Tuple[PartyId, int], np.ndarray] = {}
        for sender in SENDERS:
            for _ in MESSAGE_VALUES:
                frame = self.recv(sender, (MessageType.KEY_BLOCK,), "key exchange incomplete")
                received[(sender, frame.body["m"])] = bitcodec.decode(frame.body["outcomes"])
        outcomes: Dict[Tuple[PartyId, int], Outcomes] = {}
        e_hats = []
        for sender in SENDERS:
            for _ in MESSAGE_VALUES:
                frame = self.recv(sender, (MessageType.ERROR_EST,), "error estimation incomplete")
                m = frame.body["m"]
                mine = received[(sender, m)]
                chosen = np.asarray(frame.body["positions"], dtype=np.int64)
                theirs = bitcodec.decode(frame.body["sender_bits"])
                mismatches = int(np.count_nonzero(mine[chosen] != theirs))
                e_hat = mismatches / chosen.size
                e_hats.append(e_hat)
                self.send(sender, MessageType.ERROR_EST, {"m": m, "mismatches": mismatches, "e_hat": e_hat})
                keep = np.ones(mine.size, dtype=bool)
                keep[chosen] = False
                outcomes[(sender, m)] = Outcomes(np.flatnonzero(keep).astype(np.int64), mine[keep])
        pooled = float(np.mean(e_hats))
        out["e_hat"] = pooled
        if pooled >= cfg.thresholds.s_a:
            reason = "distribution aborted: channel too noisy"
            out["aborted"] = reason
            self.send(B, MessageType.ABORT, {"reason": reason})
            return
        declaration = sign(AliceStore(outcomes), cfg.message)
        self.send(B, MessageType.SIGNED_MESSAGE, {"declaration": declaration.to_json()})


class _Recipient(_Endpoint):
    def run(self, out: dict) -> None:
        cfg = self.cfg
        me, peer = self.party, self.party.other_recipient
        n = cfg.L + cfg.k
        records = {}
        for m in MESSAGE_VALUES:
            record = sample_exchange(cfg.link, n, exchange_seed(self.seed, me, m))
            records[m] = record
            self.send(A, MessageType.KEY_BLOCK, {"m": m, "outcomes": bitcodec.encode(record.alice_bits)})
        kept_strings: Dict[int, Outcomes] = {}
        for m in MESSAGE_VALUES:
            chosen = choose_sacrifice(n, cfg.k, estimate_seed(self.seed, me, m))
            self.send(A, MessageType.ERROR_EST, {
                "m": m,
                "positions": chosen.tolist(),
                "sender_bits": bitcodec.encode(records[m].sender_bits[chosen]),
            })
            keep = np.ones(n, dtype=bool)
            keep[chosen] = False
            kept_strings[m] = Outcomes(np.flatnonzero(keep).astype(np.int64), records[m].sender_bits[keep])
        for _ in MESSAGE_VALUES:
            self.recv(A, (MessageType.ERROR_EST,), "error estimation incomplete")
        own_kept: Dict[int, Outcomes] = {}
        for m in MESSAGE_VALUES:
            string = kept_strings[m]
            fwd = choose_forward_half(cfg.L, derive(symmetrize_seed(self.seed, m), me.value))
            own_kept[m] = Outcomes(string.positions[~fwd], string.bits[~fwd])
            self.send(peer, MessageType.FORWARD_HALF, {
                "m": m,
                "positions": string.positions[fwd].tolist(),
                "bits": bitcodec.encode(string.bits[fwd]),
            })
        keys: Dict[int, SymmetrizedKey] = {}
        for _ in MESSAGE_VALUES:
            frame = self.recv(peer, (MessageType.FORWARD_HALF,), "symmetrization incomplete")
            m = frame.body["m"]
            received = Outcomes(
                np.asarray(frame.body["positions"], dtype=np.int64), bitcodec.decode(frame.body["bits"])
            )
            keys[m] = SymmetrizedKey(me, m, own_kept[m], received)
        if set(keys) != set(MESSAGE_VALUES):
            raise SessionError("symmetrization incomplete")
        if me is B:
            self._bob_messaging(keys, out)
        else:
            self._charlie_messaging(keys, out)

    def _report(self, verdict: Verdict) -> None:
        frame = Frame(MessageType.VERDICT, self.session,
                      self.transport.next_seq(self.party, HARNESS), {"verdict": verdict.to_json()})
        self.transport.log_local(self.party, HARNESS, frame)

    def _bob_messaging(self, keys, out):
        frame = self.recv(A, (MessageType.SIGNED_MESSAGE, MessageType.ABORT), "no signed message")
        if frame.type is MessageType.ABORT:
            self.send(C, MessageType.ABORT, frame.body)
            return
        declaration = Declaration.from_json(frame.body["declaration"])
        verdict = verify(declaration, keys[declaration.message_bit], self.cfg.thresholds.s_a, Role.DIRECT)
        out["bob_verdict"] = verdict
        self._report(verdict)
        if verdict.accepted:
            self.send(C, MessageType.FORWARDED_MESSAGE, {"declaration": declaration.to_json()})
        else:
            self.send(C, MessageType.ABORT, {"reason": "rejected by bob"})

    def _charlie_messaging(self, keys, out):
        frame = self.recv(B, (MessageType.FORWARDED_MESSAGE, MessageType.ABORT), "no forwarded message")
        if frame.type is MessageType.ABORT:
            return
        declaration = Declaration.from_json(frame.body["declaration"])
        verdict = verify(declaration, keys[declaration.message_bit], self.cfg.thresholds.s_v, Role.FORWARDED)
        out["charlie_verdict"] = verdict
        self._report(verdict)


def run_session(
    config: SessionConfig,
    transport: str = "in_process",
    seed: Seed = 0,
    session_id: Optional[str] = None,
    drop=None,
    check_reference: bool = True,
    host: str = "127.0.0.1",
    ports: Optional[Dict[str, int]] = None,
) -> SessionTranscript:
    """Execute distribution and messaging for one bit across three endpoints.

    With ``check_reference`` the verdicts are compared against the direct
    in-process protocol run for the same seed.
    """
    if config.L % 2:
        raise ProtocolError(f"cannot halve signature: L={config.L} is odd")
    session = session_id or f"s{derive(seed, 'session-id').generate_state(1)[0]:08x}"
    tr = make_transport(transport, drop=drop, host=host, ports=ports)
    cancelled = threading.Event()
    results: Dict[PartyId, dict] = {p: {} for p in PartyId}
    errors: List[Tuple[PartyId, BaseException]] = []
    err_lock = threading.Lock()

    endpoints = [
        _Alice(A, tr, session, config, seed, cancelled),
        _Recipient(B, tr, session, config, seed, cancelled),
        _Recipient(C, tr, session, config, seed, cancelled),
    ]

    def runner(ep: _Endpoint):
        try:
            ep.run(results[ep.party])
        except ChannelClosed:
            pass
        except BaseException as exc:  # noqa: BLE001 - reported to the caller below
            with err_lock:
                errors.append((ep.party, exc))
            cancelled.set()

    threads = [threading.Thread(target=runner, args=(ep,), name=f"endpoint-{ep.party.value}") for ep in endpoints]
    try:
        for t in threads:
            t.start()
        for t in threads:
            t.join(config.timeout * 4)
    finally:
        cancelled.set()
        tr.close()
    if errors:
        party, exc = errors[0]
        if isinstance(exc, QDSError):
            raise SessionError(str(exc)) from exc
        raise SessionError(f"{party.value} failed: {exc!r}") from exc
    if any(t.is_alive() for t in threads):
        raise SessionError("timeout: endpoints did not finish")

    transcript = SessionTranscript(
        session=session,
        records=[
            TranscriptRecord(
                channel=r.channel,
                sender=r.sender.value,
                receiver=r.receiver.value if r.receiver else HARNESS,
                seq=r.frame.seq,
                type=r.frame.type.value,
                t=r.t,
                delivered=r.delivered,
                raw=r.raw,
            )
            for r in tr.sent
        ],
        bob_verdict=results[B].get("bob_verdict"),
        charlie_verdict=results[C].get("charlie_verdict"),
        e_hat=results[A].get("e_hat"),
        aborted=results[A].get("aborted"),
    )
    if check_reference:
        _check_reference(config, seed, transcript)
    return transcript


def reference_verdicts(config: SessionConfig, seed: Seed):
    """Verdicts from the direct (non-networked) protocol functions."""
    dist = run_distribution(config.link, config.L, config.k, seed)
    if dist.e_hat >= config.thresholds.s_a:
        return dist.e_hat, None, None
    bob, charlie = run_messaging(dist.alice, dist.bob, dist.charlie, config.message, config.thresholds)
    return dist.e_hat, bob, charlie


def _check_reference(config: SessionConfig, seed: Seed, transcript: SessionTranscript) -> None:
    e_hat, bob, charlie = reference_verdicts(config, seed)
    if (
        not np.isclose(e_hat, transcript.e_hat, rtol=0, atol=1e-15)
        or bob != transcript.bob_verdict
        or charlie != transcript.charlie_verdict
    ):
        raise SessionError("verdict mismatch vs in-process reference run")


def partition_leaks_to_alice(transcript: SessionTranscript) -> bool:
    """True if any frame on an Alice channel carries forwarded-half data."""
    for rec in transcript.records:
        if "alice" in rec.channel.split("-"):
            if rec.type in (MessageType.FORWARD_HALF.value, MessageType.KEY_HALF.value):
                return True
            body = rec.frame().body
            if any(key in body for key in ("own_kept", "other_received", "forwarded")):
                return True
    return False
