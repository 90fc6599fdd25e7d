"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` (the lines are printed even
without ``-s``, since capture is suspended around them).
"""

import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from ttsforge import archkernel as ak
from ttsforge import losses as L
from ttsforge import metrics

from oracles import attention_loops, edit_distance_recursive, nearest_code_brute, speech_bert_brute

ROOT = Path(__file__).resolve().parent.parent
GOLDEN = Path(__file__).parent / "golden" / "filter_report.jsonl"


@pytest.fixture
def report(capsys):
    def emit(tag, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {tag} {detail}")
        assert ok, f"{tag}: {detail}"

    return emit


def test_ac01_cer_oracle(report):
    rng = np.random.default_rng(101)
    pairs = []
    for _ in range(1000):
        h = "".join(rng.choice(list("abcd"), size=rng.integers(0, 21)))
        r = "".join(rng.choice(list("abcd"), size=rng.integers(1, 21)))
        pairs.append((h, r))
    t0 = time.perf_counter()
    got = [metrics.cer(h, r) for h, r in pairs]
    elapsed = time.perf_counter() - t0
    mismatches = sum(g != edit_distance_recursive(h, r) / len(r) for g, (h, r) in zip(got, pairs))
    report("AC1", mismatches == 0 and elapsed < 1.0,
           f"CER vs DP oracle: {mismatches} mismatches / 1000, {elapsed:.3f}s (limit 1s)")


def test_ac02_duration_equality(report):
    rng = np.random.default_rng(102)
    bad = 0
    for _ in range(10_000):
        a, b = np.exp(rng.uniform(-5, 5, size=2))
        k = float(np.exp(rng.uniform(-3, 3)))
        de = metrics.duration_equality(a, b)
        bad += not (0 < de <= 1)
        bad += de != metrics.duration_equality(b, a)
        bad += not math.isclose(de, metrics.duration_equality(k * a, k * b), rel_tol=1e-12)
        bad += metrics.duration_equality(a, a) != 1.0
    exact = metrics.duration_equality(2.0, 4.0)
    report("AC2", bad == 0 and exact == 0.5, f"DE axioms: {bad} violations over 1e4 pairs; DE(2,4)={exact!r}")


def test_ac03_speech_bert_score(report):
    rng = np.random.default_rng(103)
    seq = rng.normal(size=(12, 6))
    self_err = abs(metrics.speech_bert_score(seq, seq) - 1.0)
    worst = 0.0
    for _ in range(200):
        d = int(rng.integers(1, 9))
        gen = rng.normal(size=(int(rng.integers(1, 17)), d))
        ref = rng.normal(size=(int(rng.integers(1, 17)), d))
        worst = max(worst, abs(metrics.speech_bert_score(gen, ref) - speech_bert_brute(gen, ref)))
    gen, ref = [[1.0, 0.0]], [[1.0, 0.0], [0.0, 1.0]]
    fwd, back = metrics.speech_bert_score(gen, ref), metrics.speech_bert_score(ref, gen)
    ok = self_err <= 1e-9 and worst <= 1e-9 and abs(fwd - 1.0) < 1e-12 and abs(back - 0.5) < 1e-12
    report("AC3", ok, f"SBS self err {self_err:.1e}, brute max err {worst:.1e}; asymmetry {fwd:.3f} vs {back:.3f}")


def test_ac04_attention_perceiver(report):
    rng = np.random.default_rng(104)
    worst = 0.0
    row_err = 0.0
    for _ in range(100):
        heads = int(rng.integers(1, 4))
        d = heads * int(rng.integers(1, 4))
        w = ak.AttentionWeights.random(d, heads, rng, scale=2.0)
        lq, lk = int(rng.integers(1, 7)), int(rng.integers(1, 7))
        q, k, v = rng.normal(size=(lq, d)), rng.normal(size=(lk, d)), rng.normal(size=(lk, d))
        out, probs = ak.attention(q, k, v, w, return_probs=True)
        ref = np.array(attention_loops(q.tolist(), k.tolist(), v.tolist(), w.w_q.tolist(), w.w_k.tolist(),
                                       w.w_v.tolist(), w.w_o.tolist()))
        worst = max(worst, float(np.max(np.abs(out - ref))))
        row_err = max(row_err, float(np.max(np.abs(probs.sum(axis=-1) - 1.0))))
    w = ak.AttentionWeights.random(8, 2, rng)
    latents = rng.normal(size=(32, 8))
    rows_ok = all(ak.perceiver_resample(rng.normal(size=(n, 8)), latents, w).shape == (32, 8) for n in range(1, 65))
    ok = worst <= 1e-9 and row_err <= 1e-9 and rows_ok
    report("AC4", ok, f"attention max err {worst:.1e}; softmax row err {row_err:.1e}; perceiver rows==P for L=1..64: {rows_ok}")


def test_ac05_vq(report):
    rng = np.random.default_rng(105)
    mismatches = 0
    for _ in range(200):
        d = int(rng.integers(1, 6))
        cb = ak.Codebook(rng.normal(size=(int(rng.integers(1, 20)), d)))
        frames = rng.normal(size=(int(rng.integers(1, 10)), d))
        got = ak.vq_assign(frames, cb)
        mismatches += sum(g != nearest_code_brute(f, cb.entries) for g, f in zip(got, frames))
    cb = ak.Codebook(rng.normal(size=(64, 5)))
    identity = ak.vq_assign(cb.entries, cb) == list(range(64))
    # frame at the origin, equidistant from codes 1 and 3; the lower index wins
    tie_cb = ak.Codebook([[5.0, 5.0], [1.0, 0.0], [9.0, 9.0], [-1.0, 0.0]])
    tie = ak.vq_assign([[0.0, 0.0]], tie_cb) == [1]
    report("AC5", mismatches == 0 and identity and tie,
           f"VQ vs exhaustive: {mismatches} mismatches; self-assign identity {identity}; tie to lower index {tie}")


def test_ac06_sampling(report):
    rng = np.random.default_rng(106)
    greedy = ak.SamplingConfig(temperature=1.0, top_k=1)
    draw_rng = np.random.default_rng(0)
    argmax_bad = sum(
        ak.sample_token(x, greedy, draw_rng) != int(np.argmax(x)) for x in rng.normal(size=(10_000, 12))
    )
    cfg = ak.SamplingConfig(temperature=1.0, top_k=2, seed=2024)
    g = cfg.rng()
    n = 100_000
    hits = sum(ak.sample_token([2.0, 1.0], cfg, g) == 0 for _ in range(n))
    freq = hits / n
    target = 1 / (1 + math.exp(-1))
    invariant = True
    for x in rng.normal(size=(500, 10)):
        peaks = {int(np.argmax(ak.token_probabilities(x, ak.SamplingConfig(temperature=t, top_k=k))))
                 for t in (0.5, 0.85, 1.0, 2.0) for k in (2, 50)}
        invariant &= peaks == {int(np.argmax(x))}
    ok = argmax_bad == 0 and abs(freq - target) <= 0.02 and invariant
    report("AC6", ok, f"top1 mismatches {argmax_bad}/1e4; freq {freq:.4f} vs {target:.4f} (+-0.02); "
                      f"argmax invariant over T: {invariant}")


def test_ac07_loss_constants(report):
    lm = L.lm_total(2.0, 3.0)[2]
    t = L.DiscriminatorTrace([1.0], [0.5], ([0.0],), ([0.1],))
    hifi = L.hifi_generator_total([t, t], np.zeros((1, 2)), np.full((1, 2), 0.02))
    rng = np.random.default_rng(107)
    feats = [rng.normal(size=4), rng.normal(size=9)]
    mel = rng.normal(size=(5, 80))
    logits = np.zeros((3, 6))
    logits[np.arange(3), [0, 5, 2]] = 800.0
    perfect = L.DiscriminatorTrace([1.0, 1.0], [0.0, 0.0], feats, feats)
    fooled = L.DiscriminatorTrace([1.0], [1.0, 1.0], feats, feats)
    zeros = {
        "adv_d": L.adv_d(perfect),
        "adv_g": L.adv_g(fooled),
        "fm": L.fm_loss(perfect),
        "mel": L.mel_loss(mel, mel),
        "ce": L.cross_entropy(L.TokenBatch(logits, [0, 5, 2])),
        "hifi_g": L.hifi_generator_total([fooled], mel, mel),
        "hifi_d": L.hifi_discriminator_total([perfect]),
    }
    ok = abs(lm - 3.02) <= 1e-12 and abs(hifi - 1.8) <= 1e-12 and all(v == 0.0 for v in zeros.values())
    report("AC7", ok, f"lm_total(2,3)={lm!r}; hifi hand case={hifi!r}; identity cases {zeros}")


def test_ac08_gradient_checks(report):
    rng = np.random.default_rng(108)
    ce_worst = mel_worst = 0.0
    for _ in range(50):
        steps, vocab = int(rng.integers(1, 5)), int(rng.integers(2, 10))
        logits = rng.normal(scale=2.0, size=(steps, vocab))
        targets = rng.integers(0, vocab, size=steps)
        grad = L.cross_entropy_grad(L.TokenBatch(logits, targets))
        ce_worst = max(ce_worst, L.grad_check(lambda x: L.cross_entropy(L.TokenBatch(x, targets)), grad, logits))

        real = rng.normal(size=(int(rng.integers(1, 6)), int(rng.integers(1, 9))))
        gap = rng.uniform(0.01, 1.0, size=real.shape) * rng.choice([-1.0, 1.0], size=real.shape)
        fake = real + gap  # stays clear of the kink at zero
        mel_worst = max(mel_worst, L.grad_check(lambda x: L.mel_loss(real, x), L.mel_loss_grad(real, fake), fake))
    ok = ce_worst <= 1e-5 and mel_worst <= 1e-5
    report("AC8", ok, f"central-difference rel err: CE {ce_worst:.1e}, mel {mel_worst:.1e} (limit 1e-5, 50 each)")


def _forge(*args):
    proc = subprocess.run([sys.executable, "-m", "ttsforge.cli", "--quiet", *map(str, args)],
                          capture_output=True, text=True, cwd=ROOT)
    assert proc.returncode == 0, proc.stderr
    return proc


def _run_pipeline(out: Path, seed: int) -> dict:
    fx = out / "fx"
    _forge("--seed", seed, "make-fixtures", "--out", fx)
    _forge("filter", "--manifest", fx / "manifest.jsonl", "--policy", fx / "policy.cfg",
           "--out-accepted", out / "accepted.jsonl", "--out-report", out / "report.jsonl")
    _forge("eval", "--pairs", fx / "pairs.jsonl", "--metrics", "cer,secs,sbs,de,mos", "--out", out / "eval.jsonl")
    return {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}


def test_ac09_filter_golden(report, tmp_path):
    _run_pipeline(tmp_path, 0)
    got = (tmp_path / "report.jsonl").read_bytes()
    report("AC9", got == GOLDEN.read_bytes(), f"filter report vs golden ({len(got)} bytes, 6 canonical records)")


def test_ac10_prompt_policy(report):
    start, length = ak.select_prompt_span(0.8)
    short_ok = abs(length - 0.4) <= 1e-12 and 0 <= start <= 0.4
    rng = np.random.default_rng(110)
    out_of_band = 0
    for _ in range(10_000):
        dur = float(rng.uniform(6.0, 30.0))
        s, n = ak.select_prompt_span(dur, rng=rng)
        out_of_band += not (1.0 <= n <= 6.0 and 0 <= s and s + n <= dur)
    report("AC10", short_ok and out_of_band == 0,
           f"0.8s clip -> {length:.3f}s prompt; spans outside [1,6]s: {out_of_band}/1e4")


def test_ac11_end_to_end(report, tmp_path):
    first = _run_pipeline(tmp_path / "a", 7)
    second = _run_pipeline(tmp_path / "b", 7)
    identical = first == second and len(first) > 0
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", "tests",
                           "--ignore=tests/test_acceptance.py"], capture_output=True, text=True, cwd=ROOT)
    elapsed = time.perf_counter() - t0
    ok = identical and proc.returncode == 0 and elapsed < 60.0
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    report("AC11", ok, f"two seeded runs byte-identical ({len(first)} files): {identical}; "
                       f"unit suite {tail!r} in {elapsed:.1f}s (limit 60s)")
