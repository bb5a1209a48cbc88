"""Acceptance gate: one test per shipping criterion.

Each test prints a single summary line (bypassing capture, so it lands
in piped logs) with the measured values, the tolerance, and PASS or
FAIL, then asserts. Two sub-criteria are expected to fail and are
documented where they fail: the cross-correlation stitching gap (the
alignment cue is unambiguous on clean sparse material, so the measured
gap is zero) and the 3 s memory point (no nonnegative linear fit can
hit all three published memory values within 5%).
"""

import time

import numpy as np
import pytest

from cssep import mixgen
from cssep.audio import AudioBuffer
from cssep.framing import FramingConfig, frames_iter
from cssep.metrics import CAP_DB, si_sdr, si_sdr_improvement
from cssep.pipeline import run_pipeline
from cssep.scheduling import SegmentEmitter, min_latency, predict_cost
from cssep.separators import (
    IdealRatioMaskSeparator,
    IdentitySeparator,
    OracleSourceSeparator,
    ShuffleSeparator,
)
from cssep.stitching import PermutationTracker, StitchConfig, overlap_add

SR = 8000


@pytest.fixture
def report(capsys):
    def _report(line):
        with capsys.disabled():
            print(line, flush=True)
    return _report


def build_conv(overlap, seed):
    spec = mixgen.MixtureSpec(target_overlap=overlap, seed=seed)
    rng = np.random.default_rng([seed, 1])
    pools = (mixgen.UtterancePool.draw(0, rng, 64),
             mixgen.UtterancePool.draw(1, rng, 64))
    return mixgen.build_conversation(pools, spec)


def test_criterion_1_reconstruction_identity(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    x = AudioBuffer(rng.standard_normal(60 * SR), SR)
    worst = 0.0
    for w_s, h_s in [(1.0, 0.5), (3.0, 1.5), (5.0, 2.5), (5.0, 0.5), (10.0, 0.5)]:
        cfg = FramingConfig(int(w_s * SR), int(h_s * SR))
        result = run_pipeline(x, cfg, IdentitySeparator(2))
        worst = max(worst, float(np.max(np.abs(result.estimates - x.mono[None, :]))))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-9 and elapsed < 10.0
    report(f"[criterion 1] reconstruction identity over 5 (W,H) pairs: "
           f"{'PASS' if ok else 'FAIL'} max_abs_err={worst:.3e} (tol 1e-9) "
           f"runtime={elapsed:.1f}s (budget 10s)")
    assert worst < 1e-9
    assert elapsed < 10.0


def test_criterion_2_offline_online_equivalence(report):
    t0 = time.perf_counter()
    cfg = FramingConfig(2 * SR, SR // 2)
    identical = 0
    total = 20
    for i in range(total):
        conv = build_conv([0.2, 0.4, 0.6, 1.0][i % 4], 4000 + i)
        sep_off = ShuffleSeparator(OracleSourceSeparator(conv.sources), seed=i)
        sep_on = ShuffleSeparator(OracleSourceSeparator(conv.sources), seed=i)
        offline = run_pipeline(conv.mixture, cfg, sep_off)
        online = run_pipeline(conv.mixture, cfg, sep_on, n_seg=cfg.frames_per_segment)
        if np.array_equal(offline.estimates, online.estimates):
            identical += 1
    elapsed = time.perf_counter() - t0
    ok = identical == total and elapsed < 30.0
    report(f"[criterion 2] offline == online at n_seg=W/H: "
           f"{'PASS' if ok else 'FAIL'} bit-identical {identical}/{total} "
           f"runtime={elapsed:.1f}s (budget 30s)")
    assert identical == total
    assert elapsed < 30.0


def test_criterion_3_si_sdr_oracle_equivalence(report):
    import math

    def reference(x, e):
        dot_xe = math.fsum(a * b for a, b in zip(x, e))
        dot_xx = math.fsum(a * a for a in x)
        alpha = dot_xe / dot_xx
        scaled = [alpha * a for a in x]
        err = [s - b for s, b in zip(scaled, e)]
        return 10.0 * math.log10(math.fsum(s * s for s in scaled) /
                                 math.fsum(v * v for v in err))

    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = 0.0
    worst_scale = 0.0
    for _ in range(1000):
        x = rng.standard_normal(1024)
        e = rng.standard_normal(1024)
        got = si_sdr(x, e)
        worst = max(worst, abs(got - reference(list(x), list(e))))
        c = float(rng.uniform(0.01, 100.0))
        worst_scale = max(worst_scale, abs(si_sdr(x, c * e) - got))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and worst_scale <= 1e-9 and elapsed < 5.0
    report(f"[criterion 3] si_sdr vs independent evaluation, 1000 pairs: "
           f"{'PASS' if ok else 'FAIL'} max_diff={worst:.2e} dB (tol 1e-6) "
           f"scale_inv={worst_scale:.2e} dB (tol 1e-9) runtime={elapsed:.1f}s (budget 5s)")
    assert worst <= 1e-6
    assert worst_scale <= 1e-9
    assert elapsed < 5.0


def test_criterion_4_latency_contract(report):
    cfg = FramingConfig(5 * SR, SR // 2)
    hop = cfg.hop
    total = 20 * SR  # 40 segments
    exact = True
    for n_seg in (1, 4, 10):
        emitter = SegmentEmitter(cfg, n_seg, total, channels=1)
        sep = IdentitySeparator(1)
        events = []
        for frame in frames_iter(AudioBuffer(np.zeros(total), SR), cfg):
            events.extend(emitter.feed(sep.separate(frame)))
        events.extend(emitter.finish())
        for e in events:
            # segment k leaves once sample (k + n_seg) * H has arrived,
            # or at end of stream for the clamped tail
            if e.available_samples != min((e.segment_index + n_seg) * hop, total):
                exact = False
        interior = [e for e in events if (e.segment_index + n_seg) * hop <= total]
        if not all(e.available_samples == (e.segment_index + n_seg) * hop
                   for e in interior):
            exact = False
    lat = min_latency(cfg, 1, SR)
    ok = exact and lat == 0.5
    report(f"[criterion 4] latency contract at W=5s H=0.5s, n_seg in {{1,4,10}}: "
           f"{'PASS' if ok else 'FAIL'} trace exact={exact} "
           f"min_latency(n_seg=1)={lat}s (expected 0.5, no tolerance)")
    assert exact
    assert lat == 0.5


def test_criterion_5_permutation_recovery(report):
    t0 = time.perf_counter()
    cfg = FramingConfig(2 * SR, SR)
    recovered = 0
    total = 50
    worst = 0.0
    for i in range(total):
        conv = build_conv(1.0, 5000 + i)
        sep = ShuffleSeparator(OracleSourceSeparator(conv.sources), seed=i)
        result = run_pipeline(conv.mixture, cfg, sep,
                              stitch_mode="oracle", sources=conv.sources)
        err = float(np.max(np.abs(result.estimates - conv.sources)))
        worst = max(worst, err)
        if err < 1e-9:
            recovered += 1
    elapsed = time.perf_counter() - t0
    ok = recovered == total
    report(f"[criterion 5] shuffled-oracle recovery at 100% overlap: "
           f"{'PASS' if ok else 'FAIL'} {recovered}/{total} exact "
           f"worst_err={worst:.3e} (tol 1e-9) runtime={elapsed:.1f}s")
    assert recovered == total


def test_criterion_6_cross_correlation_vs_oracle_gap(report):
    t0 = time.perf_counter()
    windows = (1.0, 3.0, 5.0, 15.0)
    convs = [build_conv(0.0, 6000 + i) for i in range(100)]
    gaps = {}
    for w_s in windows:
        cfg = FramingConfig(int(w_s * SR), int(w_s * SR) // 2)
        means = {}
        for mode in ("cross_correlation", "oracle"):
            vals = []
            for i, conv in enumerate(convs):
                sep = ShuffleSeparator(OracleSourceSeparator(conv.sources), seed=i)
                tracker = PermutationTracker(StitchConfig(
                    cfg, mode, conv.sources if mode == "oracle" else None))
                aligned = [tracker.align(sep.separate(f))
                           for f in frames_iter(conv.mixture, cfg)]
                est = overlap_add(aligned, conv.mixture.num_samples, cfg)
                v = si_sdr_improvement(conv.sources, est, conv.mixture.mono)
                vals.append(float(np.clip(v, -CAP_DB, CAP_DB)))
            means[mode] = float(np.mean(vals))
        gaps[w_s] = means["oracle"] - means["cross_correlation"]
    elapsed = time.perf_counter() - t0
    non_increasing = all(gaps[a] >= gaps[b] - 1e-12
                         for a, b in zip(windows, windows[1:]))
    gap_1s = gaps[1.0]
    ok = gap_1s >= 5.0 and non_increasing and elapsed < 300.0
    gap_text = ", ".join(f"W={w:g}s: {gaps[w]:+.3f} dB" for w in windows)
    report(f"[criterion 6] cc-vs-oracle stitching gap at 0% overlap, 100 convs: "
           f"{'PASS' if ok else 'FAIL'} [{gap_text}] "
           f"(need >= 5 dB at 1 s and non-increasing) runtime={elapsed:.1f}s (budget 300s)")
    assert non_increasing
    assert elapsed < 300.0
    # Expected failure. Correlation stitching does not err on this
    # material: every frame boundary's overlap region contains ongoing
    # speech (pauses are 50 ms, far shorter than the W/2 overlap), so
    # the cue is never ambiguous, recovery is exact in both modes, and
    # the capped means coincide. A >= 5 dB gap would require the
    # aligner to make mistakes it provably cannot make here.
    assert gap_1s >= 5.0, (
        f"measured gap at W=1s is {gap_1s:.6f} dB; both modes recover the "
        f"sources exactly on 0%-overlap material, so their capped means are "
        f"equal and the required 5 dB separation is unattainable")


def test_criterion_7_cost_model(report):
    flops_pub = {3.0: 76e9, 5.0: 127e9, 10.0: 254e9}
    mem_pub = {3.0: 0.94e9, 5.0: 2.07e9, 10.0: 4.06e9}
    flops_errs = {}
    mem_errs = {}
    for w_s in (3.0, 5.0, 10.0):
        flops, memory = predict_cost(w_s)
        flops_errs[w_s] = abs(flops - flops_pub[w_s]) / flops_pub[w_s]
        mem_errs[w_s] = abs(memory - mem_pub[w_s]) / mem_pub[w_s]
    flops_ok = all(e < 0.01 for e in flops_errs.values())
    mem_ok = all(e < 0.05 for e in mem_errs.values())
    f_text = ", ".join(f"{w:g}s: {e * 100:.2f}%" for w, e in flops_errs.items())
    m_text = ", ".join(f"{w:g}s: {e * 100:.2f}%" for w, e in mem_errs.items())
    report(f"[criterion 7] cost model: {'PASS' if flops_ok and mem_ok else 'FAIL'} "
           f"flops rel err [{f_text}] (tol 1%) memory rel err [{m_text}] (tol 5%)")
    assert flops_ok
    # Expected failure at the 3 s point. The three published memory
    # values are not collinear in W under a nonnegative intercept: the
    # 3s-5s secant needs 0.565 GB/s while 5s-10s needs 0.398 GB/s, and
    # any nonnegative-intercept line within 5% of both endpoints misses
    # 0.94 GB at 3 s by >= 19%. The shipped slope fits the 5 s and 10 s
    # points and overshoots 3 s by ~28%.
    assert mem_ok, (
        f"memory relative errors {m_text}: no linear model with a "
        f"nonnegative standing allocation can reproduce all three "
        f"published points within 5%")


def test_criterion_8_mixture_generator(report):
    t0 = time.perf_counter()
    targets = (0.0, 0.1, 0.2, 0.4, 0.6, 1.0)
    per_target = 100
    worst_dev = 0.0
    exact_sum = True
    long_enough = True
    zero_exact = True
    full_exact = True
    for t_idx, target in enumerate(targets):
        for i in range(per_target):
            conv = build_conv(target, 10000 + t_idx * 1000 + i)
            dev = abs(conv.manifest.realized_overlap - target)
            if target == 0.0 and conv.manifest.realized_overlap != 0.0:
                zero_exact = False
            if target == 1.0 and conv.manifest.realized_overlap != 1.0:
                full_exact = False
            worst_dev = max(worst_dev, dev)
            if not np.array_equal(conv.mixture.mono, conv.sources[0] + conv.sources[1]):
                exact_sum = False
            if conv.manifest.duration_samples < 15 * SR:
                long_enough = False
    elapsed = time.perf_counter() - t0
    ok = (worst_dev <= 0.02 and exact_sum and long_enough and zero_exact
          and full_exact and elapsed < 60.0)
    report(f"[criterion 8] mixture generator, 100 convs x {len(targets)} targets: "
           f"{'PASS' if ok else 'FAIL'} worst |realized-target|={worst_dev * 100:.2f} pts "
           f"(tol 2) 0%/100% exact={zero_exact}/{full_exact} "
           f"sum exact={exact_sum} all >= 15s={long_enough} "
           f"runtime={elapsed:.1f}s (budget 60s)")
    assert worst_dev <= 0.02
    assert zero_exact and full_exact
    assert exact_sum
    assert long_enough
    assert elapsed < 60.0


def test_criterion_9_latency_quality_curve_shape(report):
    t0 = time.perf_counter()
    overlaps = (0.2, 0.6)
    windows = (3.0, 5.0, 10.0)
    per_overlap = 8
    convs = {ov: [build_conv(ov, 9000 + i) for i in range(per_overlap)]
             for ov in overlaps}
    curves = {}
    for w_s in windows:
        cfg = FramingConfig(int(w_s * SR), SR // 2)
        for ov in overlaps:
            sums = np.zeros(cfg.frames_per_segment)
            for conv in convs[ov]:
                sep = IdealRatioMaskSeparator(conv.sources)
                tracker = PermutationTracker(StitchConfig(cfg))
                aligned = [tracker.align(sep.separate(f))
                           for f in frames_iter(conv.mixture, cfg)]
                for n_seg in range(1, cfg.frames_per_segment + 1):
                    emitter = SegmentEmitter(cfg, n_seg, conv.mixture.num_samples,
                                             channels=2)
                    parts = []
                    for frame in aligned:
                        parts.extend(e.samples for e in emitter.feed(frame))
                    parts.extend(e.samples for e in emitter.finish())
                    est = np.concatenate(parts, axis=1)
                    v = si_sdr_improvement(conv.sources, est, conv.mixture.mono)
                    sums[n_seg - 1] += float(np.clip(v, -CAP_DB, CAP_DB))
            curves[(w_s, ov)] = sums / per_overlap
    elapsed = time.perf_counter() - t0
    monotone = True
    n1_min = True
    details = []
    for (w_s, ov), curve in sorted(curves.items()):
        steps = np.diff(curve)
        if np.min(steps) < -0.3:
            monotone = False
        if curve[0] != np.min(curve):
            n1_min = False
        details.append(f"W={w_s:g}s ov={ov:g}: n1={curve[0]:.2f} dB "
                       f"plateau={curve[-1]:.2f} dB min_step={np.min(steps):+.4f}")
    ok = monotone and n1_min and elapsed < 600.0
    report(f"[criterion 9] latency-quality curve shape (ratio-mask sweep): "
           f"{'PASS' if ok else 'FAIL'} " + "; ".join(details) +
           f" (slack 0.3 dB/step, n_seg=1 must be the minimum) "
           f"runtime={elapsed:.1f}s (budget 600s)")
    assert monotone
    assert n1_min
    assert elapsed < 600.0
