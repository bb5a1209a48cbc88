import itertools
import math

import numpy as np
import pytest
import torch

from tinysep.train import (
    HIGH_BAND,
    LOW_BAND,
    evaluate,
    pit_si_sdr_db,
    si_sdr_db,
    tone_batch,
)

SR = 8000
W = 2048


@pytest.fixture
def report(capsys):
    def _report(line):
        with capsys.disabled():
            print(line, flush=True)
    return _report


def numpy_si_sdr(target, estimate):
    target = np.asarray(target, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    alpha = float(np.dot(target, estimate) / np.dot(target, target))
    scaled = alpha * target
    err = scaled - estimate
    return 10.0 * math.log10(float(np.dot(scaled, scaled) / np.dot(err, err)))


def numpy_pit_si_sdr(targets, estimates):
    best = -math.inf
    for perm in itertools.permutations(range(len(targets))):
        score = np.mean([numpy_si_sdr(targets[c], estimates[p])
                         for c, p in enumerate(perm)])
        best = max(best, score)
    return best


def test_tone_batch_mixture_is_exact_sum():
    gen = torch.Generator().manual_seed(5)
    mix, sources = tone_batch(gen, 8, W, SR)
    assert torch.equal(mix, sources.sum(dim=1))
    assert mix.dtype == torch.float32
    assert sources.shape == (8, 2, W)


def test_tone_batch_deterministic():
    a = tone_batch(torch.Generator().manual_seed(9), 4, W, SR)
    b = tone_batch(torch.Generator().manual_seed(9), 4, W, SR)
    assert torch.equal(a[0], b[0])
    assert torch.equal(a[1], b[1])


def test_tone_batch_band_occupancy():
    gen = torch.Generator().manual_seed(11)
    _, sources = tone_batch(gen, 16, W, SR)
    freqs = np.fft.rfftfreq(W, d=1.0 / SR)
    for b in range(16):
        for channel, (low, high) in ((0, LOW_BAND), (1, HIGH_BAND)):
            spectrum = np.abs(np.fft.rfft(sources[b, channel].numpy()))
            peak = freqs[int(np.argmax(spectrum))]
            # FFT bin spacing is ~3.9 Hz; allow one bin of slack
            assert low - 4.0 <= peak <= high + 4.0


def test_si_sdr_db_matches_independent_evaluation():
    # estimates correlated with targets, the regime the loss runs in;
    # the stability epsilon only matters at extreme negative values
    rng = np.random.default_rng(2)
    for sigma in (0.01, 0.1, 1.0, 10.0):
        for _ in range(5):
            x = rng.standard_normal(W)
            e = x + sigma * rng.standard_normal(W)
            got = float(si_sdr_db(torch.from_numpy(x), torch.from_numpy(e)))
            assert got == pytest.approx(numpy_si_sdr(x, e), abs=1e-4)


def test_si_sdr_db_scale_invariance():
    rng = np.random.default_rng(3)
    x = torch.from_numpy(rng.standard_normal(W))
    e = torch.from_numpy(rng.standard_normal(W))
    assert float(si_sdr_db(x, 5.0 * e)) == pytest.approx(float(si_sdr_db(x, e)),
                                                         abs=1e-3)


def test_pit_picks_the_better_assignment():
    gen = torch.Generator().manual_seed(13)
    _, sources = tone_batch(gen, 4, W, SR)
    straight = pit_si_sdr_db(sources, sources)
    swapped = pit_si_sdr_db(sources, sources.flip(dims=(1,)))
    assert torch.allclose(straight, swapped)
    assert float(straight.min()) > 70.0


def test_trained_model_separates_held_out_tones(trained_model):
    assert evaluate(trained_model, seed=777, frames=64) > 5.0


def test_trained_model_over_the_wire(spawn, checkpoint, report):
    child = spawn("--checkpoint", str(checkpoint))
    assert child.handshake(SR, W, 2) == b"CSS1"
    gen = torch.Generator().manual_seed(4242)
    mix, sources = tone_batch(gen, 48, W, SR)
    scores = []
    for i in range(48):
        index, est = child.request(i, mix[i].numpy())
        assert index == i
        scores.append(numpy_pit_si_sdr(sources[i].numpy(), est))
    assert child.shutdown() == 0
    mean = float(np.mean(scores))
    worst = float(np.min(scores))
    ok = mean > 5.0
    report(f"[secondary criterion] toy-trained plugin over the wire: "
           f"{'PASS' if ok else 'FAIL'} held-out per-frame PIT SI-SDR "
           f"mean={mean:.2f} dB min={worst:.2f} dB over 48 frames (need > 5 dB)")
    assert mean > 5.0
