"""Universal re-encryption over a safe-prime ElGamal group.

Ciphertexts are two ElGamal units: the first carries the plaintext, the
second carries an encryption of 1.  Anyone can re-randomize both units
without knowing the recipient's public key, so a forwarded message block is
bitwise unlinkable to the block that arrived, and a recipient recognizes its
own traffic by checking whether the second unit decrypts to 1.

Two key roles share this machinery: a message-secrecy pair (end-to-end, only
the receiver reads payloads) and a neighbourhood pair (private half shared
with all direct neighbours so they can spot and short-circuit traffic
addressed to the receiver).

The group is the quadratic-residue subgroup of Z_p* for a safe prime
p = 2q + 1.  Plaintext bytes are mapped into the subgroup by squaring, which
is invertible on [1, q] because p = 3 (mod 4).
"""

from __future__ import annotations

import random
from dataclasses import dataclass

__all__ = [
    "GroupParams",
    "KeyPair",
    "UreCiphertext",
    "SealedMessage",
    "CryptoError",
    "EncodingError",
    "TINY_GROUP",
    "RECOG_GROUP",
    "TOY_64",
    "TOY_256",
    "STANDARD_1024",
    "keygen",
    "encrypt",
    "decrypt",
    "reencrypt",
    "encode_plaintext",
    "decode_plaintext",
    "block_capacity",
    "seal_message",
    "open_message",
    "recognize_envelope",
    "serialize_ciphertext",
    "parse_ciphertext",
    "serialize_message",
    "parse_message",
]

NONCE_BYTES = 16
MAX_PAYLOAD_BYTES = 240


class CryptoError(Exception):
    """Invalid group element, key, or ciphertext."""


class EncodingError(CryptoError):
    """Plaintext cannot be represented in this group."""


@dataclass(frozen=True)
class GroupParams:
    """Safe-prime group: p = 2q + 1, g generates the order-q QR subgroup."""

    p: int
    q: int
    g: int

    def __post_init__(self):
        if self.p != 2 * self.q + 1:
            raise CryptoError("p must equal 2q + 1")
        if self.p % 4 != 3:
            raise CryptoError("safe prime p must be 3 mod 4")
        if not (1 < self.g < self.p):
            raise CryptoError("generator out of range")
        if pow(self.g, self.q, self.p) != 1:
            raise CryptoError("generator does not lie in the order-q subgroup")

    def verify(self) -> None:
        """Full check including primality (not done at construction)."""
        import gmpy2

        if not gmpy2.is_prime(self.p) or not gmpy2.is_prime(self.q):
            raise CryptoError("p and q must both be prime")

    def element_width(self) -> int:
        """Bytes per serialized group element."""
        return (self.p.bit_length() + 7) // 8

    def is_element(self, x: int) -> bool:
        """Membership in the QR subgroup."""
        return 0 < x < self.p and pow(x, self.q, self.p) == 1


# Fixed parameter sets.  The two toy groups keep property tests fast; the
# 1024-bit group is the well-known Oakley/MODP safe prime.  g = 4 is a
# square, so it generates the QR subgroup in every safe-prime group.
TINY_GROUP = GroupParams(p=23, q=11, g=4)

RECOG_GROUP = GroupParams(p=131267, q=65633, g=4)

TOY_64 = GroupParams(
    p=9223372036854803519,
    q=4611686018427401759,
    g=4,
)

TOY_256 = GroupParams(
    p=57896044618658097711785492504343953926634992332820282019728792003956565016447,
    q=28948022309329048855892746252171976963317496166410141009864396001978282508223,
    g=4,
)

_P_1024 = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE65381FFFFFFFFFFFFFFFF",
    16,
)

STANDARD_1024 = GroupParams(p=_P_1024, q=(_P_1024 - 1) // 2, g=4)

GROUPS_BY_NAME = {
    "tiny": TINY_GROUP,
    "recog": RECOG_GROUP,
    "64": TOY_64,
    "256": TOY_256,
    "1024": STANDARD_1024,
}


@dataclass(frozen=True)
class KeyPair:
    """y = g^x; x is the private half."""

    public: int
    private: int


@dataclass(frozen=True)
class UreCiphertext:
    """Two ElGamal units: [(a0, b0); (a1, b1)].

    Unit 0 hides the plaintext, unit 1 hides the constant 1 and powers both
    recognition and key-free re-encryption.
    """

    a0: int
    b0: int
    a1: int
    b1: int

    def elements(self) -> tuple[int, int, int, int]:
        return (self.a0, self.b0, self.a1, self.b1)


def _draw(rng: random.Random | None, lo: int, hi: int) -> int:
    if rng is None:
        rng = random.SystemRandom()
    return rng.randrange(lo, hi)


def keygen(params: GroupParams, rng: random.Random | None = None) -> KeyPair:
    """Fresh key pair with x uniform in [1, q-1]."""
    x = _draw(rng, 1, params.q)
    return KeyPair(public=pow(params.g, x, params.p), private=x)


def encrypt(
    params: GroupParams,
    public: int,
    m: int,
    rng: random.Random | None = None,
    *,
    k0: int | None = None,
    k1: int | None = None,
) -> UreCiphertext:
    """[(m*y^k0, g^k0); (y^k1, g^k1)] with fresh exponents.

    k1 is drawn from [1, q-1]: a zero there would make unit 1 the pair
    (1, 1), which every key "recognizes" and which re-encryption can never
    re-randomize.  Explicit k0/k1 are for deterministic tests only.
    """
    if not params.is_element(m):
        raise EncodingError("plaintext is not a group element")
    p, g, y = params.p, params.g, public
    if k0 is None:
        k0 = _draw(rng, 0, params.q)
    if k1 is None:
        k1 = _draw(rng, 1, params.q)
    return UreCiphertext(
        a0=m * pow(y, k0, p) % p,
        b0=pow(g, k0, p),
        a1=pow(y, k1, p),
        b1=pow(g, k1, p),
    )


def decrypt(params: GroupParams, private: int, c: UreCiphertext) -> tuple[bool, int | None]:
    """Returns (recognized, plaintext-or-None).

    Recognized means unit 1 decrypts to 1 under this key; an unrecognized
    ciphertext is a normal outcome (it belongs to someone else), not an
    error.
    """
    p = params.p
    m1 = c.a1 * pow(c.b1, params.q - private, p) % p  # a1 / b1^x via Fermat
    if m1 != 1:
        return False, None
    m0 = c.a0 * pow(c.b0, params.q - private, p) % p
    return True, m0


def reencrypt(
    params: GroupParams,
    c: UreCiphertext,
    rng: random.Random | None = None,
    *,
    k0: int | None = None,
    k1: int | None = None,
) -> UreCiphertext:
    """Re-randomize without any key: [(a0*a1^k0', b0*b1^k0'); (a1^k1', b1^k1')].

    Decrypts identically under the original key; k1' stays in [1, q-1] so
    unit 1 keeps its blinding power across arbitrarily long chains.
    """
    p = params.p
    if k0 is None:
        k0 = _draw(rng, 0, params.q)
    if k1 is None:
        k1 = _draw(rng, 1, params.q)
    return UreCiphertext(
        a0=c.a0 * pow(c.a1, k0, p) % p,
        b0=c.b0 * pow(c.b1, k0, p) % p,
        a1=pow(c.a1, k1, p),
        b1=pow(c.b1, k1, p),
    )


# ---------------------------------------------------------------------------
# Plaintext encoding: pad-and-square into the QR subgroup
# ---------------------------------------------------------------------------

def block_capacity(params: GroupParams) -> int:
    """Payload bytes that fit one block: 16 bits reserved for padding."""
    return (params.p.bit_length() - 16) // 8


def encode_plaintext(params: GroupParams, data: bytes) -> int:
    """Injective map bytes -> QR subgroup.

    The data sits in a fixed-width blob (2-byte big-endian length, data,
    zero padding to capacity), read as an integer t offset by one; the group
    element is t^2 mod p.  The width keeps t below q, where squaring is
    injective, and the fixed layout makes decoding unambiguous.
    """
    cap = block_capacity(params)
    if cap < 1:
        raise EncodingError("group too small to hold byte plaintexts")
    if len(data) > cap:
        raise EncodingError(f"{len(data)} bytes exceed block capacity {cap}")
    blob = len(data).to_bytes(2, "big") + data + b"\x00" * (cap - len(data))
    t = int.from_bytes(blob, "big") + 1
    if t > params.q:
        raise EncodingError("encoded value escapes the invertible range")
    return pow(t, 2, params.p)


def decode_plaintext(params: GroupParams, element: int) -> bytes:
    """Invert :func:`encode_plaintext` via the square root in [1, q]."""
    if not params.is_element(element):
        raise EncodingError("not a group element")
    cap = block_capacity(params)
    root = pow(element, (params.p + 1) // 4, params.p)
    if root > params.q:
        root = params.p - root
    t = root - 1
    blob = t.to_bytes(cap + 2, "big")
    length = int.from_bytes(blob[:2], "big")
    if length > cap:
        raise EncodingError("corrupt length prefix")
    return blob[2 : 2 + length]


# ---------------------------------------------------------------------------
# Message sealing: envelope + payload blocks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SealedMessage:
    """Envelope block (nonce + address under the neighbourhood key) plus
    payload blocks (under the message-secrecy key)."""

    envelope: UreCiphertext
    payload_blocks: tuple[UreCiphertext, ...]


def seal_message(
    params: GroupParams,
    payload: bytes,
    nonce: bytes,
    dest_addr: bytes,
    msg_public: int,
    nbr_public: int,
    rng: random.Random | None = None,
) -> SealedMessage:
    """Encrypt (nonce || address) for the neighbourhood and the payload for
    the receiver, splitting the payload across blocks as needed."""
    if len(payload) > MAX_PAYLOAD_BYTES:
        raise EncodingError(
            f"payload of {len(payload)} bytes exceeds the {MAX_PAYLOAD_BYTES}-byte cap; "
            "send multiple messages"
        )
    if len(nonce) != NONCE_BYTES:
        raise CryptoError(f"nonce must be {NONCE_BYTES} bytes")
    cap = block_capacity(params)
    if len(dest_addr) + NONCE_BYTES > cap:
        raise EncodingError("destination address too long for the envelope block")
    envelope = encrypt(params, nbr_public, encode_plaintext(params, nonce + dest_addr), rng)
    blocks = []
    chunks = [payload[i : i + cap] for i in range(0, len(payload), cap)] or [b""]
    for chunk in chunks:
        blocks.append(encrypt(params, msg_public, encode_plaintext(params, chunk), rng))
    return SealedMessage(envelope=envelope, payload_blocks=tuple(blocks))


def recognize_envelope(
    params: GroupParams, nbr_private: int, envelope: UreCiphertext
) -> tuple[bytes, bytes] | None:
    """(nonce, address) if this neighbourhood key opens the envelope."""
    ok, element = decrypt(params, nbr_private, envelope)
    if not ok:
        return None
    blob = decode_plaintext(params, element)
    return blob[:NONCE_BYTES], blob[NONCE_BYTES:]


def open_message(
    params: GroupParams,
    msg_private: int,
    nbr_private: int,
    sealed: SealedMessage,
) -> tuple[bytes, bytes, bytes]:
    """Receiver-side full open: (nonce, address, payload)."""
    hit = recognize_envelope(params, nbr_private, sealed.envelope)
    if hit is None:
        raise CryptoError("envelope not addressed to this neighbourhood key")
    nonce, addr = hit
    parts = []
    for block in sealed.payload_blocks:
        ok, element = decrypt(params, msg_private, block)
        if not ok:
            raise CryptoError("payload block not readable with this message key")
        parts.append(decode_plaintext(params, element))
    return nonce, addr, b"".join(parts)


# ---------------------------------------------------------------------------
# Wire format: fixed-width big-endian elements, order a0 b0 a1 b1
# ---------------------------------------------------------------------------

def serialize_ciphertext(params: GroupParams, c: UreCiphertext) -> bytes:
    w = params.element_width()
    return b"".join(x.to_bytes(w, "big") for x in c.elements())


def parse_ciphertext(params: GroupParams, data: bytes) -> UreCiphertext:
    w = params.element_width()
    if len(data) != 4 * w:
        raise CryptoError(f"ciphertext block must be {4 * w} bytes, got {len(data)}")
    vals = [int.from_bytes(data[i * w : (i + 1) * w], "big") for i in range(4)]
    return UreCiphertext(*vals)


def serialize_message(params: GroupParams, sealed: SealedMessage) -> bytes:
    """1-byte payload-block count, envelope block, payload blocks."""
    if len(sealed.payload_blocks) > 255:
        raise CryptoError("too many payload blocks for the 1-byte header")
    out = [len(sealed.payload_blocks).to_bytes(1, "big")]
    out.append(serialize_ciphertext(params, sealed.envelope))
    out.extend(serialize_ciphertext(params, b) for b in sealed.payload_blocks)
    return b"".join(out)


def parse_message(params: GroupParams, data: bytes) -> SealedMessage:
    if not data:
        raise CryptoError("empty message")
    n_blocks = data[0]
    w = 4 * params.element_width()
    expected = 1 + w * (n_blocks + 1)
    if len(data) != expected:
        raise CryptoError(f"message should be {expected} bytes, got {len(data)}")
    envelope = parse_ciphertext(params, data[1 : 1 + w])
    blocks = tuple(
        parse_ciphertext(params, data[1 + w * (i + 1) : 1 + w * (i + 2)])
        for i in range(n_blocks)
    )
    return SealedMessage(envelope=envelope, payload_blocks=blocks)
