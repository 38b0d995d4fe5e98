import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qds import protocol as P
from qds.channel import ExchangeRecord, LinkParams, sample_bsc_exchange
from qds.errors import (
    DistributionAborted,
    MalformedDeclaration,
    MaterialConsumed,
    ProtocolError,
    ValidationError,
)
from qds.protocol import Outcomes, PartyId, Role
from qds.security import honest_abort_bound, thresholds

NOISELESS = LinkParams(qber_override=0.0)
TRIAL_NOISE = LinkParams(qber_override=0.0108)


def _record(sender, alice):
    return ExchangeRecord(np.asarray(sender, dtype=np.uint8), np.asarray(alice, dtype=np.uint8))


class TestEstimateError:
    def test_no_mismatches(self):
        bits = np.ones(50, dtype=np.uint8)
        e_hat, rest = P.estimate_error(_record(bits, bits), 10, seed=1)
        assert e_hat == 0.0
        assert rest.length == 40

    def test_all_mismatches(self):
        e_hat, _ = P.estimate_error(_record(np.zeros(50), np.ones(50)), 10, seed=1)
        assert e_hat == 1.0

    def test_positions_removed_consistently(self):
        rec = sample_bsc_exchange(0.2, 100, seed=4)
        _, rest = P.estimate_error(rec, 30, seed=9)
        assert rest.positions.size == 70
        assert np.array_equal(rec.sender_bits[rest.positions], rest.sender_bits)
        assert np.array_equal(rec.alice_bits[rest.positions], rest.alice_bits)

    def test_nothing_left(self):
        rec = sample_bsc_exchange(0.1, 10, seed=4)
        with pytest.raises(ValidationError, match="nothing left"):
            P.estimate_error(rec, 10, seed=0)

    def test_concentration_over_seeds(self):
        e, k = 0.0108, 10**4
        rec = sample_bsc_exchange(e, 10**6, seed=77)
        sigma = math.sqrt(e * (1 - e) / k)
        hits = sum(abs(P.estimate_error(rec, k, seed=s)[0] - e) < 5 * sigma for s in range(100))
        assert hits >= 99


def _outcomes(L, seed=0):
    rng = np.random.default_rng(seed)
    return Outcomes(np.arange(L, dtype=np.int64) * 3, rng.integers(0, 2, L, dtype=np.uint8))


class TestSymmetrize:
    def test_smallest_case(self):
        bob, charlie = P.symmetrize(_outcomes(2, 1), _outcomes(2, 2), 0, seed=5)
        assert len(bob.own_kept) == len(bob.other_received) == 1
        assert len(charlie.own_kept) == len(charlie.other_received) == 1

    def test_partition_property(self):
        b_str, c_str = _outcomes(4, 1), _outcomes(4, 2)
        bob, charlie = P.symmetrize(b_str, c_str, 1, seed=5)
        again_bob, _ = P.symmetrize(b_str, c_str, 1, seed=5)
        assert bob.own_kept == again_bob.own_kept
        kept = set(bob.own_kept.positions.tolist())
        forwarded = set(charlie.other_received.positions.tolist())
        assert kept | forwarded == set(b_str.positions.tolist())
        assert not kept & forwarded
        # bits travel with their positions
        assert np.array_equal(b_str.lookup(charlie.other_received.positions), charlie.other_received.bits)

    def test_odd_length_rejected(self):
        with pytest.raises(ValidationError, match="cannot halve"):
            P.symmetrize(_outcomes(3), _outcomes(3), 0, seed=0)

    def test_forwarding_frequency_is_one_half(self):
        L, runs = 1000, 10**4
        counts = np.zeros(L)
        for s in range(runs):
            counts += P.choose_forward_half(L, seed=s)
        freq = counts / runs
        sigma = math.sqrt(0.25 / runs)
        assert np.all(np.abs(freq - 0.5) < 5 * sigma)

    def test_bob_and_charlie_choose_independently(self):
        bob, charlie = P.symmetrize(_outcomes(1000, 1), _outcomes(1000, 2), 0, seed=3)
        # same index sets would mean shared randomness
        assert not np.array_equal(bob.own_kept.positions, charlie.own_kept.positions)


class TestDistribution:
    def test_noiseless(self):
        dist = P.run_distribution(NOISELESS, 8, 4, seed=1)
        assert dist.e_hat == 0.0
        for sender in P.SENDERS:
            for m in (0, 1):
                alice = dist.alice.outcomes[(sender, m)]
                truth = dist.sender_keys[sender].for_message(m)
                assert len(alice) == 8
                assert np.array_equal(alice.bits, truth[alice.positions])

    def test_deterministic(self):
        a = P.run_distribution(TRIAL_NOISE, 100, 50, seed=9)
        b = P.run_distribution(TRIAL_NOISE, 100, 50, seed=9)
        assert json.dumps(a.alice.to_json()) == json.dumps(b.alice.to_json())
        assert json.dumps(a.bob.to_json()) == json.dumps(b.bob.to_json())
        assert json.dumps(a.charlie.to_json()) == json.dumps(b.charlie.to_json())

    def test_pooled_estimate_concentrates(self):
        e, L, k = 0.0108, 5992, 5992
        dist = P.run_distribution(TRIAL_NOISE, L, k, seed=123)
        assert abs(dist.e_hat - e) < 5 * math.sqrt(e * (1 - e) / (4 * k))
        assert dist.e_hat == pytest.approx(np.mean(list(dist.e_hat_by_exchange.values())))

    def test_keys_are_consistent_with_sender_strings(self):
        dist = P.run_distribution(TRIAL_NOISE, 200, 20, seed=2)
        for party in P.SENDERS:
            for m in (0, 1):
                key = dist.recipient(party).keys[m]
                own = dist.sender_keys[party].for_message(m)
                other = dist.sender_keys[party.other_recipient].for_message(m)
                assert key.L == 200
                assert np.array_equal(key.own_kept.bits, own[key.own_kept.positions])
                assert np.array_equal(key.other_received.bits, other[key.other_received.positions])

    def test_abort_when_too_noisy(self):
        th = thresholds(0.0108, 0.262)
        with pytest.raises(DistributionAborted, match="too noisy"):
            P.run_distribution(LinkParams(qber_override=0.2), 100, 100, seed=0, th=th)

    def test_odd_L_rejected(self):
        with pytest.raises(ValidationError):
            P.run_distribution(NOISELESS, 7, 4, seed=0)


class TestSignAndVerify:
    def test_noiseless_declaration_matches_sender_bits(self):
        dist = P.run_distribution(NOISELESS, 8, 4, seed=1)
        decl = P.sign(dist.alice, 0)
        for sender in P.SENDERS:
            out = decl.outcomes_for(sender)
            assert len(out) == 8
            assert np.array_equal(out.bits, dist.sender_keys[sender].message0_bits[out.positions])

    def test_single_use(self):
        dist = P.run_distribution(NOISELESS, 8, 4, seed=1)
        P.sign(dist.alice, 0)
        with pytest.raises(MaterialConsumed, match="already consumed"):
            P.sign(dist.alice, 0)
        P.sign(dist.alice, 1)  # the other value still has material

    def test_missing_material(self):
        with pytest.raises(ProtocolError, match="no distribution"):
            P.sign(P.AliceStore(outcomes={}), 0)

    def test_declaration_carries_channel_errors(self):
        dist = P.run_distribution(TRIAL_NOISE, 20000, 100, seed=8)
        decl = P.sign(dist.alice, 1)
        for sender in P.SENDERS:
            out = decl.outcomes_for(sender)
            truth = dist.sender_keys[sender].message1_bits[out.positions]
            rate = np.mean(out.bits != truth)
            assert abs(rate - 0.0108) < 5 * math.sqrt(0.0108 * 0.9892 / 20000)

    def test_verify_exact_and_flipped(self):
        dist = P.run_distribution(NOISELESS, 10, 4, seed=1)
        decl = P.sign(dist.alice, 0)
        ok = P.verify(decl, dist.bob.keys[0], 0.1, consume=False)
        assert ok.accepted and ok.mismatches == 0 and ok.positions_checked == 10
        flipped = decl.with_flips(PartyId.BOB, np.ones(10, bool)).with_flips(PartyId.CHARLIE, np.ones(10, bool))
        bad = P.verify(flipped, dist.bob.keys[0], 0.99, consume=False)
        assert not bad.accepted and bad.mismatches == 10
        assert bad.mismatches_by_origin == {"bob": 5, "charlie": 5}

    def test_strict_threshold(self):
        dist = P.run_distribution(NOISELESS, 10, 4, seed=1)
        decl = P.sign(dist.alice, 0)
        key = dist.bob.keys[0]
        mask = np.zeros(10, bool)
        mask[np.searchsorted(decl.bob_string_outcomes.positions, key.own_kept.positions[0])] = True
        one_off = decl.with_flips(PartyId.BOB, mask)
        # exactly L*s = 1 mismatch: rejected ("fewer than")
        assert not P.verify(one_off, key, 0.1, consume=False).accepted
        assert P.verify(one_off, key, 0.11, consume=False).accepted

    def test_verify_consumes_key(self):
        dist = P.run_distribution(NOISELESS, 10, 4, seed=1)
        decl = P.sign(dist.alice, 0)
        P.verify(decl, dist.bob.keys[0], 0.1)
        with pytest.raises(MaterialConsumed):
            P.verify(decl, dist.bob.keys[0], 0.1)

    def test_misaligned_declaration(self):
        dist = P.run_distribution(NOISELESS, 10, 4, seed=1)
        decl = P.sign(dist.alice, 0)
        shifted = P.Declaration(0, Outcomes(decl.bob_string_outcomes.positions + 1000,
                                            decl.bob_string_outcomes.bits), decl.charlie_string_outcomes)
        with pytest.raises(MalformedDeclaration, match="malformed"):
            P.verify(shifted, dist.bob.keys[0], 0.1)
        with pytest.raises(MalformedDeclaration):
            P.verify(decl, dist.bob.keys[1], 0.1)

    def test_honest_acceptance_rate_at_L_1000(self):
        # Monte Carlo with the honest-abort bound as the floor
        L, e, s_a, trials = 1000, 0.0108, 0.0736, 10**4
        rng = np.random.default_rng(99)
        key_bits = rng.integers(0, 2, size=L, dtype=np.uint8)
        positions = np.arange(L, dtype=np.int64)
        key = P.SymmetrizedKey(PartyId.BOB, 0, Outcomes(positions[:500], key_bits[:500]),
                               Outcomes(positions[500:], key_bits[500:]))
        accepted = 0
        for t in range(trials):
            flips = (rng.random(L) < e).astype(np.uint8)
            declared = key_bits ^ flips
            decl = P.Declaration(0, Outcomes(positions[:500], declared[:500]),
                                 Outcomes(positions[500:], declared[500:]))
            accepted += P.verify(decl, key, s_a, consume=False).accepted
        assert accepted / trials >= 1 - honest_abort_bound(L, s_a, e)
        assert 1 - honest_abort_bound(L, s_a, e) == pytest.approx(0.9613, abs=1e-3)

    @given(st.integers(0, 40), st.floats(0.01, 0.5), st.floats(0.01, 0.5))
    def test_accept_at_s_a_implies_accept_at_s_v(self, n_flips, s_a, delta):
        s_v = s_a + delta
        dist = P.run_distribution(NOISELESS, 40, 4, seed=n_flips)
        decl = P.sign(dist.alice, 0)
        mask = np.zeros(40, bool)
        mask[:n_flips] = True
        decl = decl.with_flips(PartyId.BOB, mask)
        direct = P.verify(decl, dist.bob.keys[0], s_a, consume=False)
        forwarded = P.verify(decl, dist.bob.keys[0], s_v, Role.FORWARDED, consume=False)
        if direct.accepted:
            assert forwarded.accepted


class TestMessaging:
    def test_noiseless_both_accept(self):
        th = thresholds(0.0, 0.4)
        dist = P.run_distribution(NOISELESS, 8, 4, seed=1)
        bob, charlie = P.run_messaging(dist.alice, dist.bob, dist.charlie, 0, th)
        assert bob.accepted and charlie.accepted
        assert bob.mismatches == charlie.mismatches == 0
        assert bob.role is Role.DIRECT and charlie.role is Role.FORWARDED
        assert charlie.threshold_fraction == th.s_v

    def test_field_trial_sessions_accept(self, trial_thresholds):
        failures = 0
        for s in range(200):
            dist = P.run_distribution(TRIAL_NOISE, 5992, 5992, seed=s, th=trial_thresholds)
            bob, charlie = P.run_messaging(dist.alice, dist.bob, dist.charlie, s % 2, trial_thresholds)
            failures += not (bob.accepted and charlie is not None and charlie.accepted)
        assert failures == 0

    def test_tampered_in_transit_rejected_by_charlie(self, trial_thresholds):
        dist = P.run_distribution(NOISELESS, 1000, 100, seed=3)
        rng = np.random.default_rng(0)

        def tamper(decl):
            for origin in P.SENDERS:
                mask = np.zeros(1000, bool)
                mask[rng.choice(1000, 250, replace=False)] = True
                decl = decl.with_flips(origin, mask)
            return decl

        bob, charlie = P.run_messaging(dist.alice, dist.bob, dist.charlie, 0, trial_thresholds, in_transit=tamper)
        assert bob.accepted
        assert not charlie.accepted
        assert charlie.mismatches / 1000 > trial_thresholds.s_v

    def test_bob_reject_means_no_charlie_verdict(self, trial_thresholds):
        dist = P.run_distribution(LinkParams(qber_override=0.3), 100, 100, seed=3)
        bob, charlie = P.run_messaging(dist.alice, dist.bob, dist.charlie, 0, trial_thresholds)
        assert not bob.accepted and charlie is None


class TestAliceNeverSeesPartition:
    def test_alice_store_and_declaration_have_no_partition(self):
        dist = P.run_distribution(TRIAL_NOISE, 100, 20, seed=4)
        alice_json = json.dumps(dist.alice.to_json())
        decl_json = json.dumps(P.sign(dist.alice, 0).to_json())
        for text in (alice_json, decl_json):
            for marker in ("own_kept", "other_received", "forward"):
                assert marker not in text
        # Alice's positions for each string are the full retained set, not a half
        for sender in P.SENDERS:
            assert len(dist.alice.outcomes[(sender, 0)]) == 100


class TestStores:
    def test_round_trip_and_split_stage(self, tmp_path, trial_thresholds):
        dist = P.run_distribution(TRIAL_NOISE, 200, 50, seed=6)
        for name, store in (("alice", dist.alice), ("bob", dist.bob), ("charlie", dist.charlie)):
            P.dump_store(store, tmp_path / f"{name}.json")
        alice = P.load_store(tmp_path / "alice.json")
        bob = P.load_store(tmp_path / "bob.json")
        charlie = P.load_store(tmp_path / "charlie.json")
        later = P.run_messaging(alice, bob, charlie, 1, trial_thresholds)
        fresh = P.run_messaging(dist.alice, dist.bob, dist.charlie, 1, trial_thresholds)
        assert later == fresh
        P.dump_store(alice, tmp_path / "alice.json")
        with pytest.raises(MaterialConsumed):
            P.sign(P.load_store(tmp_path / "alice.json"), 1)

    def test_envelope_is_versioned(self, tmp_path):
        dist = P.run_distribution(NOISELESS, 8, 4, seed=1)
        P.dump_store(dist.bob, tmp_path / "bob.json")
        env = json.loads((tmp_path / "bob.json").read_text())
        assert env["format"] == "qds-party-store" and env["version"] == 1 and env["party"] == "bob"
        env["version"] = 99
        (tmp_path / "bad.json").write_text(json.dumps(env))
        with pytest.raises(ValidationError, match="version"):
            P.load_store(tmp_path / "bad.json")
