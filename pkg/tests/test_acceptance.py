"""End-to-end acceptance checks at the field-trial operating point.

Each test prints one ``[PASS]``/``[FAIL]`` line, repeated in the terminal
summary under "acceptance criteria".
"""

import numpy as np
import pytest

from qds import adversary
from qds.channel import LinkParams, expected_detection_rate
from qds.cli import main
from qds.config import field_trial_config
from qds.net import SessionConfig, run_session
from qds.protocol import DistributionAborted, run_distribution, run_messaging
from qds.rng import derive
from qds.security import (
    forge_bound,
    honest_abort_bound,
    repudiation_bound,
    required_length,
    signing_rate,
    thresholds,
)
from qds.tables import params_rows

E, P_E = 0.0108, 0.262
MEASURED_RATE_HZ = 1e4


def test_signature_lengths(criterion):
    with criterion(1, "signature length within 1% of 2502 and 5992") as c:
        short, long_ = required_length(E, P_E, 1e-4), required_length(E, P_E, 1e-10)
        c.detail = f"L={short}, {long_}"
        assert abs(short - 2502) <= 0.01 * 2502
        assert abs(long_ - 5992) <= 0.01 * 5992


def test_signing_rates(criterion):
    with criterion(2, "signing rate ~2.0 and ~0.83 bits/s within 10% at 10^4 Hz") as c:
        fast = signing_rate(MEASURED_RATE_HZ, required_length(E, P_E, 1e-4))
        slow = signing_rate(MEASURED_RATE_HZ, required_length(E, P_E, 1e-10))
        c.detail = f"{fast:.3f}, {slow:.3f} bits/s"
        assert fast == pytest.approx(2.0, rel=0.10)
        assert slow == pytest.approx(0.83, rel=0.10)


def test_params_show_both_eve_error_values(criterion):
    with criterion(3, "params reports formula and override P_e, branch and discrepancy flag") as c:
        rows = params_rows(field_trial_config())
        row = rows[0]
        c.detail = f"formula={row['P_e_formula']:.4f} ({row['branch']}), override={row['P_e_override']}"
        assert row["P_e_override"] == 0.262 and row["P_e"] == 0.262
        assert row["P_e_formula"] is not None and row["P_e_formula"] != row["P_e_override"]
        assert row["branch"] in ("beam_splitting", "sequential")
        assert row["P_e_discrepancy"] is True
        assert row["provenance"] == "override"


def test_exact_tails_never_exceed_bounds(criterion):
    with criterion(4, "exact failure probabilities <= Hoeffding bounds on >=200 triples") as c:
        rng = np.random.default_rng(20161)
        checked = 0
        for _ in range(100):
            n = int(rng.integers(2, 1001)) * 2
            e = float(rng.uniform(0.0, 0.16))
            P_e = float(rng.uniform(e + 1e-3, 0.5))
            th = thresholds(e, P_e)
            honest = adversary.exact_rejection_probability(n, e, n * th.s_a)
            forge = adversary.exact_acceptance_probability(n, P_e, n * th.s_v)
            # worst i.i.d. repudiation: both origins at the same rate, swept over a line
            rep = max(
                adversary.exact_repudiation_probability(n, q, q, th.s_a, th.s_v)
                for q in np.linspace(th.s_a - 0.02, th.s_v + 0.02, 9).clip(0, 1)
            )
            assert honest <= honest_abort_bound(n, th.s_a, e) + 1e-15
            assert forge <= forge_bound(n, th.s_v, P_e) + 1e-15
            assert rep <= repudiation_bound(n, th.s_a, th.s_v) + 1e-15
            checked += 3
        c.detail = f"{checked} triples"
        assert checked >= 200


MC_POINTS = [
    ("honest", 0.0108, 0.0736, 500),
    ("forge", 0.262, 0.1992, 200),
    ("honest", 0.05, 0.08, 200),
    ("honest", 0.1, 0.13, 300),
    ("honest", 0.02, 0.04, 150),
    ("honest", 0.0108, 0.03, 400),
    ("forge", 0.3, 0.2, 100),
    ("forge", 0.262, 0.22, 500),
    ("forge", 0.4, 0.3, 150),
    ("forge", 0.2, 0.15, 300),
]


def test_monte_carlo_matches_exact(criterion):
    with criterion(5, "Monte Carlo within 4 Wilson widths of exact tails, 10 points at 10^6 trials") as c:
        worst_ratio = 0.0
        for i, (kind, rate, threshold, L) in enumerate(MC_POINTS):
            seed = derive(5, "mc-point", i)
            if kind == "honest":
                out = adversary.simulate_honest_abort(rate, L, threshold, 10**6, seed, workers=4)
                exact = adversary.exact_rejection_probability(L, rate, L * threshold)
            else:
                out = adversary.simulate_forge(rate, L, threshold, 10**6, seed, workers=4)
                exact = adversary.exact_acceptance_probability(L, rate, L * threshold)
            lo, hi = out.wilson_95
            width = hi - lo
            assert abs(out.frequency - exact) <= 4 * width, (kind, rate, threshold, L, out.frequency, exact)
            if width:
                worst_ratio = max(worst_ratio, abs(out.frequency - exact) / width)
        c.detail = f"{len(MC_POINTS)} points, worst |freq-exact|/width = {worst_ratio:.2f}"


def test_repudiation_grid(criterion):
    with criterion(6, "repudiation grid at L=1000 within bound + 3 Wilson widths") as c:
        th = thresholds(E, P_E)
        bound = repudiation_bound(1000, th.s_a, th.s_v)
        grid = adversary.sweep_repudiation(E, 1000, th, 10**5, seed=6, workers=4)
        top = adversary.worst(grid)
        c.detail = f"bound={bound:.4f}, max freq={top.frequency:.5f} over {len(grid)} strategies"
        assert bound == pytest.approx(0.0388, abs=5e-4)
        assert len(grid) == 49
        for out in grid:
            lo, hi = out.wilson_95
            assert out.frequency <= bound + 3 * (hi - lo)


def test_honest_sessions(criterion):
    with criterion(7, "1000 honest sessions at L=2502: no aborts, no transfer failures") as c:
        L = 2502
        th = thresholds(E, P_E)
        link = LinkParams(qber_override=E)
        aborts = transfer = dist_aborts = 0
        for i in range(1000):
            seed = derive(7, "session", i)
            try:
                dist = run_distribution(link, L, L, seed, th)
            except DistributionAborted:
                dist_aborts += 1
                continue
            bob, charlie = run_messaging(dist.alice, dist.bob, dist.charlie, i % 2, th)
            if not bob.accepted:
                aborts += 1
            elif charlie is None or not charlie.accepted:
                transfer += 1
        c.detail = f"distribution aborts={dist_aborts}, honest aborts={aborts}, transfer failures={transfer}"
        assert dist_aborts == aborts == transfer == 0


def test_transport_equivalence(criterion):
    with criterion(8, "50 seeded sessions identical on in-process and socket transports") as c:
        cfg = SessionConfig(LinkParams(qber_override=E), 2502, 2502, thresholds(E, P_E))
        records = 0
        for s in range(50):
            seed = derive(8, "session", s)
            a = run_session(cfg, "in_process", seed=seed, session_id=f"eq-{s}")
            b = run_session(cfg, "socket", seed=seed, session_id=f"eq-{s}")
            assert a.verdicts() == b.verdicts()
            assert a.channels() == b.channels()
            for channel in a.channels():
                assert a.channel_sequence(channel) == b.channel_sequence(channel)
            records += len(a.records)
        c.detail = f"{records} frames compared"


def test_detection_rate_sanity(criterion):
    with criterion(9, "modelled detection rate within a factor of 3 of 10^4 Hz") as c:
        model = expected_detection_rate(field_trial_config().link)
        c.detail = f"model {model:.0f} Hz, ratio {MEASURED_RATE_HZ / model:.2f}"
        assert MEASURED_RATE_HZ / 3 <= model <= MEASURED_RATE_HZ * 3


DETERMINISM_COMMANDS = [
    ["params"],
    ["params", "--format", "csv"],
    ["sweep", "--range", "0:150:10", "--loss-per-km", "0.344"],
    ["run", "--sessions", "3", "--seed", "11"],
    ["run", "--sessions", "2", "--seed", "11", "--transport", "socket"],
    ["simulate", "--trials", "20000", "--seed", "11"],
]


def test_determinism(criterion, tmp_path):
    with criterion(10, "stochastic commands rerun byte-identically with the same seed") as c:
        for n, argv in enumerate(DETERMINISM_COMMANDS):
            blobs = []
            for attempt in range(2):
                out = tmp_path / f"{n}-{attempt}.out"
                extra = ["--transcript", str(tmp_path / f"{n}-{attempt}.jsonl")] if argv[0] == "run" else []
                assert main(argv + extra + ["--out", str(out)]) == 0, argv
                blobs.append(out.read_bytes())
                if extra:
                    blobs[-1] += (tmp_path / f"{n}-{attempt}.jsonl").read_bytes()
            assert blobs[0] == blobs[1], argv
        c.detail = f"{len(DETERMINISM_COMMANDS)} commands"
