"""In-process message transport with virtual time and accounting.

Parties are identified by integers ``1..N`` (which double as their Shamir
evaluation points).  Every message gets an arrival time computed from the
sender's virtual clock and a :class:`LatencyModel`; receivers that only need
``k`` of ``n`` messages take the ``k`` earliest arrivals, which is how
stragglers are modelled.  Wall-clock time plays no role, so a run is fully
determined by its seed and latency model.

Delays depend on the sender (and message size) but not on the receiver.  All
receivers therefore agree on the order in which senders of a round arrive,
which keeps decoding sets identical across parties.
"""

from __future__ import annotations

import hashlib
import json
import math
import zlib
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from copml.errors import TransportError
from copml.field import FieldMatrix


@dataclass(frozen=True)
class LatencyModel:
    """Per-sender delay: ``base[sender] + per_byte * nbytes + jitter``.

    ``jitter`` draws uniformly from ``[0, jitter)`` using a generator keyed on
    ``(seed, sender, round tag)``.
    """

    base: Mapping[int, float] | float = 0.0
    per_byte: float = 0.0
    jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        values = self.base.values() if isinstance(self.base, Mapping) else [self.base]
        for v in list(values) + [self.per_byte, self.jitter]:
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"delays must be finite and non-negative, got {v}")

    def base_delay(self, sender: int) -> float:
        if isinstance(self.base, Mapping):
            return float(self.base.get(sender, 0.0))
        return float(self.base)

    def delay(self, sender: int, tag: str, nbytes: int) -> float:
        d = self.base_delay(sender) + self.per_byte * nbytes
        if self.jitter:
            key = [self.seed, sender, zlib.crc32(tag.encode())]
            d += float(np.random.default_rng(key).uniform(0.0, self.jitter))
        return d

    @classmethod
    def stragglers(cls, slow: Iterable[int], delay: float = 1e6, **kw) -> "LatencyModel":
        return cls(base={i: delay for i in slow}, **kw)


@dataclass(frozen=True)
class Message:
    seq: int
    sender: int
    receiver: int
    tag: str
    nbytes: int
    sent_at: float
    arrival: float

    def record(self) -> dict:
        return {
            "seq": self.seq,
            "sender": self.sender,
            "receiver": self.receiver,
            "tag": self.tag,
            "bytes": self.nbytes,
            "sent": self.sent_at,
            "time": self.arrival,
        }


@dataclass
class PartyCounters:
    messages_sent: int = 0
    bytes_sent: int = 0
    messages_received: int = 0
    bytes_received: int = 0
    muls: dict = field(default_factory=lambda: defaultdict(int))

    @property
    def field_muls(self) -> int:
        return sum(self.muls.values())


class Network:
    """Synchronous-round transport shared by all simulated parties."""

    def __init__(self, parties: Iterable[int], p: int, latency: LatencyModel | None = None):
        self.parties = tuple(parties)
        if len(set(self.parties)) != len(self.parties):
            raise TransportError("duplicate party ids")
        self.p = p
        self.element_bytes = max(1, math.ceil(p.bit_length() / 8))
        self.latency = latency or LatencyModel()
        self.clock = {i: 0.0 for i in self.parties}
        self.counters = {i: PartyCounters() for i in self.parties}
        self.transcript: list[Message] = []
        self._mail: dict[tuple[int, str], dict[int, tuple[Message, object]]] = defaultdict(dict)
        self._delivered: set[tuple[int, int, str]] = set()
        self._first: dict[str, dict[int, float]] = defaultdict(dict)

    def _known(self, *ids: int):
        for i in ids:
            if i not in self.clock:
                raise TransportError(f"unknown party {i}")

    def payload_bytes(self, payload) -> int:
        if isinstance(payload, FieldMatrix):
            return payload.size * self.element_bytes
        if isinstance(payload, np.ndarray):
            return payload.size * self.element_bytes
        if isinstance(payload, (tuple, list)):
            return sum(self.payload_bytes(x) for x in payload)
        if hasattr(payload, "values") and isinstance(getattr(payload, "values"), FieldMatrix):
            return payload.values.size * self.element_bytes
        return self.element_bytes

    def send(self, sender: int, receiver: int, payload, tag: str) -> Message:
        self._known(sender, receiver)
        if sender == receiver:
            raise TransportError("parties do not message themselves")
        box = self._mail[(receiver, tag)]
        if sender in box:
            raise TransportError(f"party {sender} reused round tag {tag!r} towards {receiver}")
        nbytes = self.payload_bytes(payload)
        sent = self.clock[sender]
        msg = Message(len(self.transcript), sender, receiver, tag, nbytes, sent,
                      sent + self.latency.delay(sender, tag, nbytes))
        box[sender] = (msg, payload)
        first = self._first[tag]
        first[sender] = min(first.get(sender, math.inf), msg.arrival)
        self.transcript.append(msg)
        c = self.counters[sender]
        c.messages_sent += 1
        c.bytes_sent += nbytes
        # bytes count as received once transmitted, whether or not they are used
        c = self.counters[receiver]
        c.messages_received += 1
        c.bytes_received += nbytes
        return msg

    def _take(self, receiver: int, tag: str, sender: int):
        key = (sender, receiver, tag)
        if key in self._delivered:
            raise TransportError(f"message {key} already delivered")
        try:
            msg, payload = self._mail[(receiver, tag)][sender]
        except KeyError:
            raise TransportError(f"no message from {sender} to {receiver} tagged {tag!r}") from None
        self._delivered.add(key)
        self.clock[receiver] = max(self.clock[receiver], msg.arrival)
        return payload

    def recv(self, receiver: int, tag: str, sender: int):
        """Deliver one message (exactly once)."""
        self._known(receiver, sender)
        return self._take(receiver, tag, sender)

    def arrivals(self, receiver: int, tag: str) -> list[Message]:
        """Messages of a round addressed to ``receiver``, by arrival then send order."""
        msgs = [m for m, _ in self._mail.get((receiver, tag), {}).values()]
        return sorted(msgs, key=lambda m: (m.arrival, m.seq))

    def gather(self, receiver: int, tag: str, need: int | None = None,
               senders: Iterable[int] | None = None) -> dict[int, object]:
        """Collect messages of a round, earliest first.

        With ``need`` only that many earliest arrivals are delivered (the rest
        stay in the mailbox, as from stragglers); with ``senders`` exactly those.
        """
        self._known(receiver)
        if senders is not None:
            return {s: self._take(receiver, tag, s) for s in senders}
        order = self.arrivals(receiver, tag)
        if need is not None:
            if len(order) < need:
                raise TransportError(
                    f"party {receiver} has {len(order)} messages tagged {tag!r}, needs {need}")
            order = order[:need]
        return {m.sender: self._take(receiver, tag, m.sender) for m in order}

    def fastest_subset(self, tag: str, size: int, receiver: int | None = None) -> list[int]:
        """The ``size`` senders whose ``tag`` messages arrive first (ties by index)."""
        if receiver is None:
            first = self._first.get(tag, {})
        else:
            first = {m.sender: m.arrival for m in self.arrivals(receiver, tag)}
        if len(first) < size:
            raise TransportError(f"only {len(first)} parties responded to {tag!r}, need {size}")
        return sorted(first, key=lambda s: (first[s], s))[:size]

    def count_muls(self, party: int, n: int, kind: str = "other") -> None:
        self.counters[party].muls[kind] += int(n)

    def snapshot(self) -> dict[int, dict]:
        return {
            i: {
                "messages_sent": c.messages_sent,
                "bytes_sent": c.bytes_sent,
                "messages_received": c.messages_received,
                "bytes_received": c.bytes_received,
                "muls": dict(c.muls),
            }
            for i, c in self.counters.items()
        }

    def dump_transcript(self, fh) -> None:
        for m in self.transcript:
            fh.write(json.dumps(m.record(), sort_keys=True) + "\n")

    def transcript_hash(self) -> str:
        h = hashlib.sha256()
        for m in self.transcript:
            h.update(json.dumps(m.record(), sort_keys=True).encode())
        return h.hexdigest()


def load_transcript(fh) -> list[dict]:
    return [json.loads(line) for line in fh if line.strip()]


def summarize_transcript(records: Iterable[Mapping]) -> dict:
    """Per-party message/byte totals re-aggregated from transcript records."""
    sent = defaultdict(lambda: [0, 0])
    recv = defaultdict(lambda: [0, 0])
    tags = defaultdict(int)
    for r in records:
        sent[r["sender"]][0] += 1
        sent[r["sender"]][1] += r["bytes"]
        recv[r["receiver"]][0] += 1
        recv[r["receiver"]][1] += r["bytes"]
        tags[r["tag"].split("/")[-1]] += r["bytes"]
    parties = sorted(set(sent) | set(recv))
    return {
        "parties": {
            i: {"messages_sent": sent[i][0], "bytes_sent": sent[i][1],
                "messages_received": recv[i][0], "bytes_received": recv[i][1]}
            for i in parties
        },
        "total_messages": sum(v[0] for v in sent.values()),
        "total_bytes": sum(v[1] for v in sent.values()),
        "bytes_by_step": dict(sorted(tags.items())),
    }
