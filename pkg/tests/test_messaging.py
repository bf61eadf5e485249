"""Message construction, queue packing, delivery recognition, expiry."""

import random

import pytest

from covertcast import crypto
from covertcast.crypto import TOY_256, keygen
from covertcast.messaging import (
    Copy,
    Delivery,
    Message,
    MessageQueues,
    NodeKeys,
    OWN_PRIORITY,
    check_delivery,
    construct_message,
    expire,
    pack_upload,
    parse_upload_header,
    serialize_upload,
)


def plain_copy(sim_id, sender, dest, day, nonce=None, score=0.0, seq=0):
    msg = Message(sim_id, sender, dest, nonce if nonce is not None else sim_id, day)
    return Copy(msg, sender, day, None, score, seq)


def sim_keys(node, neighbours):
    return NodeKeys(node=node, neighbour_ids=frozenset(neighbours))


class TestConstructMessage:
    def test_enters_output_queue_with_priority(self):
        q = MessageQueues()
        copy = construct_message(
            q, sim_id=1, sender=0, dest=5, day=3, rng=random.Random(0)
        )
        assert q.output == [copy]
        assert copy.score == OWN_PRIORITY
        assert copy.trace() == [(0, 3)]

    def test_fresh_nonces_per_construction(self):
        q = MessageQueues()
        rng = random.Random(1)
        a = construct_message(q, sim_id=1, sender=0, dest=5, day=0, rng=rng)
        b = construct_message(q, sim_id=2, sender=0, dest=5, day=0, rng=rng)
        assert a.msg.nonce != b.msg.nonce

    def test_crypto_roundtrip_to_receiver(self):
        rng = random.Random(2)
        msg_kp, nbr_kp = keygen(TOY_256, rng), keygen(TOY_256, rng)
        q = MessageQueues()
        copy = construct_message(
            q, sim_id=1, sender=0, dest=7, day=0, rng=rng,
            payload=b"midnight", params=TOY_256,
            dest_msg_public=msg_kp.public, dest_nbr_public=nbr_kp.public,
        )
        nonce, addr, payload = crypto.open_message(
            TOY_256, msg_kp.private, nbr_kp.private, copy.sealed
        )
        assert payload == b"midnight"
        assert addr == b"7"
        assert int.from_bytes(nonce, "big") == copy.msg.nonce

    def test_same_payload_different_ciphertexts(self):
        rng = random.Random(3)
        msg_kp, nbr_kp = keygen(TOY_256, rng), keygen(TOY_256, rng)
        q = MessageQueues()
        kwargs = dict(
            sender=0, dest=7, day=0, rng=rng, payload=b"same", params=TOY_256,
            dest_msg_public=msg_kp.public, dest_nbr_public=nbr_kp.public,
        )
        a = construct_message(q, sim_id=1, **kwargs)
        b = construct_message(q, sim_id=2, **kwargs)
        assert a.sealed != b.sealed


class TestPackUpload:
    def test_small_queue_fully_drained(self):
        q = MessageQueues()
        for i in range(10):
            q.output.append(plain_copy(i, 0, 9, day=0, seq=i))
        up = pack_upload(q, 150, day=0, uploader=0, upload_id=1)
        assert len(up.carried) == 10
        assert q.output == []

    def test_capacity_binds(self):
        q = MessageQueues()
        for i in range(200):
            q.output.append(plain_copy(i, 0, 9, day=0, seq=i))
        up = pack_upload(q, 150, day=0, uploader=0, upload_id=1)
        assert len(up.carried) == 150
        assert len(q.output) == 50

    def test_drain_order_score_then_fifo(self):
        q = MessageQueues()
        q.output.append(plain_copy(1, 0, 9, day=0, score=30.0, seq=1))
        q.output.append(plain_copy(2, 0, 9, day=0, score=OWN_PRIORITY, seq=2))
        q.output.append(plain_copy(3, 0, 9, day=0, score=30.0, seq=0))
        up = pack_upload(q, 2, day=0, uploader=0, upload_id=1)
        assert [c.msg.sim_id for c in up.carried] == [2, 3]
        assert [c.msg.sim_id for c in q.output] == [1]

    def test_empty_queue_still_uploads(self):
        up = pack_upload(MessageQueues(), 150, day=0, uploader=3, upload_id=9)
        assert up.carried == ()
        assert up.uploader == 3

    def test_expired_copies_never_packed(self):
        q = MessageQueues()
        q.output.append(plain_copy(1, 0, 9, day=0))
        up = pack_upload(q, 150, day=16, uploader=0, upload_id=1, ttl_days=15)
        assert up.carried == ()

    def test_crypto_pack_rerandomizes_blocks(self):
        rng = random.Random(4)
        msg_kp, nbr_kp = keygen(TOY_256, rng), keygen(TOY_256, rng)
        q = MessageQueues()
        construct_message(
            q, sim_id=1, sender=0, dest=7, day=0, rng=rng, payload=b"x",
            params=TOY_256, dest_msg_public=msg_kp.public, dest_nbr_public=nbr_kp.public,
        )
        queued_wire = crypto.serialize_message(TOY_256, q.output[0].sealed)
        up = pack_upload(
            q, 150, day=0, uploader=0, upload_id=1, params=TOY_256, rng=rng
        )
        carried_wire = crypto.serialize_message(TOY_256, up.carried[0].sealed)
        assert carried_wire != queued_wire
        # still opens identically for the receiver
        _, _, payload = crypto.open_message(
            TOY_256, msg_kp.private, nbr_kp.private, up.carried[0].sealed
        )
        assert payload == b"x"


class TestCheckDelivery:
    def test_addressed_to_self(self):
        copy = plain_copy(1, 0, 4, day=0)
        assert check_delivery(copy, sim_keys(4, [1, 2])).kind is Delivery.MINE

    def test_addressed_to_neighbour(self):
        copy = plain_copy(1, 0, 2, day=0)
        got = check_delivery(copy, sim_keys(4, [1, 2]))
        assert got == (Delivery.NEIGHBOUR, 2)

    def test_unrelated_is_opaque(self):
        copy = plain_copy(1, 0, 9, day=0)
        assert check_delivery(copy, sim_keys(4, [1, 2])).kind is Delivery.OTHER

    def test_duplicate_nonce_discarded(self):
        q = MessageQueues()
        copy = plain_copy(1, 0, 4, day=0, nonce=77)
        q.delivered_nonces.add(77)
        got = check_delivery(copy, sim_keys(4, []), q)
        assert got.kind is Delivery.DUPLICATE

    def test_crypto_recognition(self):
        rng = random.Random(5)
        msg_kp = keygen(TOY_256, rng)
        nbr_self, nbr_friend = keygen(TOY_256, rng), keygen(TOY_256, rng)
        q = MessageQueues()
        to_me = construct_message(
            q, sim_id=1, sender=9, dest=4, day=0, rng=rng, payload=b"hi",
            params=TOY_256, dest_msg_public=msg_kp.public, dest_nbr_public=nbr_self.public,
        )
        to_friend = construct_message(
            q, sim_id=2, sender=9, dest=2, day=0, rng=rng, payload=b"yo",
            params=TOY_256, dest_msg_public=msg_kp.public, dest_nbr_public=nbr_friend.public,
        )
        keys = NodeKeys(
            node=4, neighbour_ids=frozenset([2]), params=TOY_256,
            msg_private=msg_kp.private, nbr_private=nbr_self.private,
            neighbour_privates={2: nbr_friend.private},
        )
        assert check_delivery(to_me, keys).kind is Delivery.MINE
        assert check_delivery(to_friend, keys) == (Delivery.NEIGHBOUR, 2)


class TestExpire:
    def test_sixteen_days_removed(self):
        q = MessageQueues()
        q.output.append(plain_copy(1, 0, 9, day=0))
        assert expire(q, day=16, ttl_days=15) == 1
        assert q.output == []

    def test_fifteen_days_retained(self):
        q = MessageQueues()
        q.output.append(plain_copy(1, 0, 9, day=0))
        assert expire(q, day=15, ttl_days=15) == 0
        assert len(q.output) == 1

    def test_empty_queues_unchanged(self):
        q = MessageQueues()
        assert expire(q, day=100) == 0
        assert q.output == [] and q.input == []


class TestUploadWire:
    def test_header_and_roundtrip_fields(self):
        rng = random.Random(6)
        msg_kp, nbr_kp = keygen(TOY_256, rng), keygen(TOY_256, rng)
        q = MessageQueues()
        construct_message(
            q, sim_id=1, sender=3, dest=7, day=2, rng=rng, payload=b"p",
            params=TOY_256, dest_msg_public=msg_kp.public, dest_nbr_public=nbr_kp.public,
        )
        up = pack_upload(q, 150, day=2, uploader=3, upload_id=1, params=TOY_256, rng=rng)
        wire = serialize_upload(TOY_256, up)
        assert parse_upload_header(wire) == (3, 2, 1)
