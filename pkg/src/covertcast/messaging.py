"""Message lifecycle at a node: construction, queues, packing, delivery.

A logical message is sealed once by its sender; each routed instance of it is
a :class:`Copy` that remembers where it has been.  Copies wait in a node's
output queue ordered by routing score (lower drains first; a node's own
messages and direct-delivery diversions take priority), and each upload
drains up to the carrier capacity.

The simulator normally runs without ciphertexts for speed, in which case the
destination and nonce fields stand in for what the envelope would reveal to
a key holder; with crypto enabled the same checks run against real
universal-re-encryption blocks and every packed copy is re-randomized.
"""

from __future__ import annotations

import enum
import random
from collections.abc import Iterable
from dataclasses import dataclass, field
from typing import NamedTuple

from . import crypto
from .crypto import GroupParams, SealedMessage

__all__ = [
    "Message",
    "Copy",
    "MessageQueues",
    "Upload",
    "NodeKeys",
    "Delivery",
    "DeliveryResult",
    "OWN_PRIORITY",
    "DEFAULT_CAPACITY",
    "DEFAULT_TTL_DAYS",
    "construct_message",
    "pack_upload",
    "check_delivery",
    "expire",
    "serialize_upload",
]

DEFAULT_CAPACITY = 150
DEFAULT_TTL_DAYS = 15

# Queue priority assigned to a node's own messages and to diverted
# direct-delivery copies; sorts ahead of every routed score (those are >= 0).
OWN_PRIORITY = -1.0


class Message:
    """One logical message.

    ``dest`` and ``nonce`` are simulation bookkeeping: routing logic may
    consult them only through :func:`check_delivery`, which models what the
    envelope discloses to holders of the right neighbourhood key.  ``sim_id``
    exists purely for metrics and TTL accounting.
    """

    __slots__ = ("sim_id", "sender", "dest", "nonce", "created_day", "sealed")

    def __init__(self, sim_id, sender, dest, nonce, created_day, sealed=None):
        self.sim_id = sim_id
        self.sender = sender
        self.dest = dest
        self.nonce = nonce
        self.created_day = created_day
        self.sealed = sealed

    def __repr__(self):
        return f"Message(sim_id={self.sim_id}, {self.sender}->{self.dest}, day {self.created_day})"


class Copy:
    """A routed instance of a message, with its own hop trace.

    Traces are chained through ``parent`` so sibling copies share their
    common prefix.
    """

    __slots__ = ("msg", "node", "day", "parent", "score", "seq", "sealed")

    def __init__(self, msg, node, day, parent, score, seq, sealed=None):
        self.msg = msg
        self.node = node
        self.day = day
        self.parent = parent
        self.score = score
        self.seq = seq
        self.sealed = sealed

    def record_hop(self, node, day, score, seq, sealed=None):
        """New copy one hop further along, extending the trace."""
        return Copy(self.msg, node, day, self, score, seq, sealed or self.sealed)

    def trace(self):
        """Hop list from the sender to this copy, as (node, day) pairs."""
        out = []
        c = self
        while c is not None:
            out.append((c.node, c.day))
            c = c.parent
        out.reverse()
        return out

    def sort_key(self):
        return (self.score, self.seq)

    def __repr__(self):
        return f"Copy(sim_id={self.msg.sim_id} at {self.node}, day {self.day})"


@dataclass
class MessageQueues:
    """Per-node queues plus the bookkeeping sets routing needs."""

    input: list = field(default_factory=list)
    output: list = field(default_factory=list)
    seen_uploads: dict = field(default_factory=dict)  # upload id -> upload day
    delivered_nonces: set = field(default_factory=set)
    next_seq: int = 0
    last_prune_day: int = 0

    def take_seq(self) -> int:
        seq = self.next_seq
        self.next_seq += 1
        return seq

    def prune_seen(self, day: int, ttl_days: int = DEFAULT_TTL_DAYS) -> None:
        # Amortized: nothing can be stale until a TTL has passed since the
        # last sweep, so sweeps are rare and the dict stays ~2x steady size.
        if day - self.last_prune_day < ttl_days:
            return
        cutoff = day - ttl_days
        self.seen_uploads = {
            uid: d for uid, d in self.seen_uploads.items() if d >= cutoff
        }
        self.last_prune_day = day


@dataclass(frozen=True)
class Upload:
    """One published carrier upload."""

    id: int
    uploader: int
    day: int
    carried: tuple


@dataclass(frozen=True)
class NodeKeys:
    """What a node can recognize: itself, plus every neighbour whose
    neighbourhood private key was shared with it."""

    node: int
    neighbour_ids: frozenset
    params: GroupParams | None = None
    msg_private: int | None = None
    nbr_private: int | None = None
    neighbour_privates: dict | None = None  # neighbour node -> their nbr private


class Delivery(enum.Enum):
    MINE = "mine"
    NEIGHBOUR = "neighbour"
    DUPLICATE = "duplicate"
    OTHER = "other"


class DeliveryResult(NamedTuple):
    kind: Delivery
    neighbour: int | None


def construct_message(
    queues: MessageQueues,
    *,
    sim_id,
    sender: int,
    dest: int,
    day: int,
    rng: random.Random,
    payload: bytes = b"",
    params: GroupParams | None = None,
    dest_msg_public: int | None = None,
    dest_nbr_public: int | None = None,
) -> Copy:
    """Create a fresh message and queue it at the head of the sender's
    output queue.  With group parameters given, the payload and envelope are
    sealed for real; otherwise the simulation fields stand in."""
    nonce = rng.getrandbits(128)
    sealed = None
    if params is not None:
        sealed = crypto.seal_message(
            params,
            payload,
            nonce.to_bytes(16, "big"),
            str(dest).encode(),
            dest_msg_public,
            dest_nbr_public,
            rng,
        )
    msg = Message(sim_id, sender, dest, nonce, day, sealed)
    copy = Copy(msg, sender, day, None, OWN_PRIORITY, queues.take_seq(), sealed)
    queues.output.append(copy)
    return copy


def expire(queues: MessageQueues, day: int, ttl_days: int = DEFAULT_TTL_DAYS) -> int:
    """Drop copies older than the TTL from both queues.

    A copy aged exactly ``ttl_days`` is retained; strictly older goes.
    Returns the number removed.
    """
    before = len(queues.output) + len(queues.input)
    keep = lambda c: day - c.msg.created_day <= ttl_days
    queues.output = [c for c in queues.output if keep(c)]
    queues.input = [c for c in queues.input if keep(c)]
    return before - len(queues.output) - len(queues.input)


def pack_upload(
    queues: MessageQueues,
    capacity: int,
    day: int,
    *,
    uploader: int,
    upload_id: int,
    ttl_days: int = DEFAULT_TTL_DAYS,
    params: GroupParams | None = None,
    rng: random.Random | None = None,
) -> Upload:
    """Drain up to ``capacity`` copies from the head of the output queue.

    Head means lowest (score, seq): best-scored first, FIFO among ties, own
    and diverted messages before everything.  Leftovers stay queued.  An
    empty queue still yields an (empty) upload: the user uploads regardless,
    so carrier behaviour never reflects queue state.  With crypto enabled
    every carried copy is re-encrypted before it is embedded.
    """
    expire(queues, day, ttl_days)
    queues.output.sort(key=Copy.sort_key)
    carried = queues.output[:capacity]
    queues.output = queues.output[capacity:]
    if params is not None:
        carried = [
            Copy(
                c.msg, c.node, c.day, c.parent, c.score, c.seq,
                _reencrypt_sealed(params, c.sealed, rng),
            )
            for c in carried
        ]
    return Upload(id=upload_id, uploader=uploader, day=day, carried=tuple(carried))


def _reencrypt_sealed(params: GroupParams, sealed: SealedMessage, rng) -> SealedMessage:
    return SealedMessage(
        envelope=crypto.reencrypt(params, sealed.envelope, rng),
        payload_blocks=tuple(
            crypto.reencrypt(params, b, rng) for b in sealed.payload_blocks
        ),
    )


def check_delivery(
    copy: Copy,
    keys: NodeKeys,
    queues: MessageQueues | None = None,
) -> DeliveryResult:
    """What this node's key ring says about a pulled copy.

    Recognition happens only for messages sealed under a neighbourhood key
    the node holds (its own, or one shared by a neighbour); everything else
    is opaque routing cargo.  With ``queues`` given, a nonce this node has
    already delivered or diverted reports as DUPLICATE.
    """
    if keys.params is not None:
        hit = _crypto_recognize(copy, keys)
    else:
        dest = copy.msg.dest
        if dest == keys.node:
            hit = (copy.msg.nonce, None)
        elif dest in keys.neighbour_ids:
            hit = (copy.msg.nonce, dest)
        else:
            hit = None
    if hit is None:
        return DeliveryResult(Delivery.OTHER, None)
    nonce, neighbour = hit
    if queues is not None and nonce in queues.delivered_nonces:
        return DeliveryResult(Delivery.DUPLICATE, neighbour)
    if neighbour is None:
        return DeliveryResult(Delivery.MINE, None)
    return DeliveryResult(Delivery.NEIGHBOUR, neighbour)


def _crypto_recognize(copy: Copy, keys: NodeKeys):
    hit = crypto.recognize_envelope(keys.params, keys.nbr_private, copy.sealed.envelope)
    if hit is not None:
        nonce, _addr = hit
        return int.from_bytes(nonce, "big"), None
    for nb, priv in sorted((keys.neighbour_privates or {}).items()):
        hit = crypto.recognize_envelope(keys.params, priv, copy.sealed.envelope)
        if hit is not None:
            nonce, _addr = hit
            return int.from_bytes(nonce, "big"), nb
    return None


def serialize_upload(params: GroupParams, upload: Upload) -> bytes:
    """Wire form: uploader (4B) | day (4B) | count (2B) | message blocks."""
    out = [
        upload.uploader.to_bytes(4, "big"),
        upload.day.to_bytes(4, "big"),
        len(upload.carried).to_bytes(2, "big"),
    ]
    for c in upload.carried:
        out.append(crypto.serialize_message(params, c.sealed))
    return b"".join(out)


def parse_upload_header(data: bytes) -> tuple[int, int, int]:
    if len(data) < 10:
        raise ValueError("upload too short for its header")
    return (
        int.from_bytes(data[0:4], "big"),
        int.from_bytes(data[4:8], "big"),
        int.from_bytes(data[8:10], "big"),
    )
