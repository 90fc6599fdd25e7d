"""Oracle comparisons run by ``forge kernel selftest`` and ``forge losses selftest``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ttsforge import archkernel as ak
from ttsforge import losses as L


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def __post_init__(self):
        self.passed = bool(self.passed)


def _naive_attention(q_in, k_in, v_in, w: ak.AttentionWeights) -> np.ndarray:
    heads, d, dh = w.w_q.shape
    lq, lk = len(q_in), len(k_in)

    def proj(x, m):
        return [[sum(x[r][a] * m[a][c] for a in range(d)) for c in range(dh)] for r in range(len(x))]

    concat = [[0.0] * (heads * dh) for _ in range(lq)]
    for h in range(heads):
        q, k, v = proj(q_in, w.w_q[h]), proj(k_in, w.w_k[h]), proj(v_in, w.w_v[h])
        for i in range(lq):
            s = [sum(q[i][c] * k[j][c] for c in range(dh)) / math.sqrt(dh) for j in range(lk)]
            m = max(s)
            e = [math.exp(x - m) for x in s]
            z = sum(e)
            for c in range(dh):
                concat[i][h * dh + c] = sum(e[j] / z * v[j][c] for j in range(lk))
    return np.array(
        [[sum(concat[i][a] * w.w_o[a][c] for a in range(heads * dh)) for c in range(d)] for i in range(lq)]
    )


def check_attention(rng: np.random.Generator, cases: int = 100) -> CheckResult:
    worst = 0.0
    worst_rowsum = 0.0
    for _ in range(cases):
        heads = int(rng.integers(1, 4))
        d = heads * int(rng.integers(1, 4))
        lq, lk = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        w = ak.AttentionWeights.random(d, heads, rng, scale=2.0)
        q, k, v = rng.normal(size=(lq, d)), rng.normal(size=(lk, d)), rng.normal(size=(lk, d))
        out, probs = ak.attention(q, k, v, w, return_probs=True)
        worst = max(worst, float(np.max(np.abs(out - _naive_attention(q, k, v, w)))))
        worst_rowsum = max(worst_rowsum, float(np.max(np.abs(probs.sum(axis=-1) - 1.0))))
    ok = worst <= 1e-9 and worst_rowsum <= 1e-9
    return CheckResult("attention-vs-naive", ok, f"max|diff|={worst:.2e} max|rowsum-1|={worst_rowsum:.2e}")


def check_perceiver_shape(rng: np.random.Generator) -> CheckResult:
    d, p = 8, 4
    w = ak.AttentionWeights.random(d, 2, rng)
    latents = rng.normal(size=(p, d))
    bad = [n for n in range(1, 65) if ak.perceiver_resample(rng.normal(size=(n, d)), latents, w).shape != (p, d)]
    return CheckResult("perceiver-fixed-rows", not bad, f"P={p} for L in 1..64, failures={bad}")


def check_vq(rng: np.random.Generator, cases: int = 50) -> CheckResult:
    mismatches = 0
    for _ in range(cases):
        d, c, m = int(rng.integers(1, 6)), int(rng.integers(1, 10)), int(rng.integers(1, 30))
        book = ak.Codebook(rng.normal(size=(c, d)))
        frames = rng.normal(size=(m, d))
        got = ak.vq_assign(frames, book)
        for f, idx in zip(frames, got):
            dists = [sum((f[a] - book.entries[j][a]) ** 2 for a in range(d)) for j in range(c)]
            if idx != dists.index(min(dists)):
                mismatches += 1
        if ak.vq_assign(book.entries, book) != list(range(c)):
            mismatches += 1
    return CheckResult("vq-vs-exhaustive", mismatches == 0, f"mismatches={mismatches}")


def check_sampling(rng: np.random.Generator) -> CheckResult:
    greedy_fail = 0
    for _ in range(2000):
        logits = rng.normal(size=int(rng.integers(1, 20)))
        cfg = ak.SamplingConfig(temperature=float(rng.uniform(0.1, 3)), top_k=1, seed=int(rng.integers(2**32)))
        if ak.sample_token(logits, cfg) != int(np.argmax(logits)):
            greedy_fail += 1
    cfg = ak.SamplingConfig(temperature=1.0, top_k=2, seed=7)
    gen = cfg.rng()
    n = 20000
    hits = sum(ak.sample_token([2.0, 1.0], cfg, gen) == 0 for _ in range(n))
    target = 1.0 / (1.0 + math.exp(-1.0))
    freq = hits / n
    ok = greedy_fail == 0 and abs(freq - target) <= 0.02
    return CheckResult("sampling", ok, f"greedy_fail={greedy_fail} freq={freq:.4f} target={target:.4f}")


def check_layout(rng: np.random.Generator) -> CheckResult:
    fails = 0
    for _ in range(100):
        d = int(rng.integers(1, 5))
        p, n, m = (int(x) for x in rng.integers(1, 6, size=3))
        s, t, y = rng.normal(size=(p, d)), rng.normal(size=(n, d)), rng.normal(size=(m, d))
        x = ak.build_llm_input(s, t, y)
        if x.matrix.shape[0] != p + n + m or x.offsets != (0, p, p + n):
            fails += 1
        if not (np.array_equal(x.speaker, s) and np.array_equal(x.text, t) and np.array_equal(x.audio, y)):
            fails += 1
        h = rng.normal(size=(p, d))
        if np.max(np.abs(ak.hifi_combine(h, s) - (h + s))) != 0:
            fails += 1
    return CheckResult("llm-layout-and-combine", fails == 0, f"failures={fails}")


def check_lm_constants() -> CheckResult:
    _, _, total = L.lm_total(2.0, 3.0)
    return CheckResult("lm-total-constants", math.isclose(total, 3.02, rel_tol=1e-12), f"total={total!r}")


def check_hifi_constants() -> CheckResult:
    trace = L.DiscriminatorTrace([1.0], [0.5], ([0.0],), ([0.1],))
    real = np.zeros((2, 2))
    fake = np.full((2, 2), 0.02)
    total = L.hifi_generator_total([trace, trace], real, fake)
    return CheckResult("hifi-total-constants", math.isclose(total, 1.8, rel_tol=1e-12), f"total={total!r}")


def check_identities() -> CheckResult:
    perfect = L.DiscriminatorTrace([1.0, 1.0], [0.0, 0.0], ([1.0, 2.0],), ([1.0, 2.0],))
    fooled = L.DiscriminatorTrace([0.3], [1.0])
    mel = np.arange(6.0).reshape(2, 3)
    values = (L.adv_d(perfect), L.adv_g(fooled), L.fm_loss(perfect), L.mel_loss(mel, mel))
    return CheckResult("loss-identities", all(v == 0.0 for v in values), f"values={values}")


def check_ce_gradient(rng: np.random.Generator, cases: int = 50) -> CheckResult:
    worst = 0.0
    for _ in range(cases):
        steps, v = int(rng.integers(1, 6)), int(rng.integers(2, 10))
        logits = rng.normal(scale=2.0, size=(steps, v))
        targets = rng.integers(0, v, size=steps)

        def fn(x):
            return L.cross_entropy(L.TokenBatch(x, targets))

        grad = L.cross_entropy_grad(L.TokenBatch(logits, targets))
        worst = max(worst, L.grad_check(fn, grad, logits, eps=1e-4))
    return CheckResult("ce-gradient", worst <= 1e-5, f"max rel err={worst:.2e}")


def check_mel_gradient(rng: np.random.Generator, cases: int = 50) -> CheckResult:
    worst = 0.0
    for _ in range(cases):
        shape = (int(rng.integers(1, 5)), int(rng.integers(1, 5)))
        real = rng.normal(size=shape)
        offset = rng.uniform(1e-2, 1.0, size=shape) * rng.choice([-1.0, 1.0], size=shape)
        fake = real + offset
        worst = max(worst, L.grad_check(lambda x: L.mel_loss(real, x), L.mel_loss_grad(real, fake), fake))
    return CheckResult("mel-subgradient", worst <= 1e-5, f"max rel err={worst:.2e}")


KERNEL_CHECKS: list[Callable[[np.random.Generator], CheckResult]] = [
    check_attention, check_perceiver_shape, check_vq, check_sampling, check_layout,
]
LOSS_CHECKS: list[Callable[[np.random.Generator], CheckResult]] = [
    lambda rng: check_lm_constants(),
    lambda rng: check_hifi_constants(),
    lambda rng: check_identities(),
    check_ce_gradient,
    check_mel_gradient,
]


def run(scope: str, seed: int = 0) -> list[CheckResult]:
    checks = {"kernel": KERNEL_CHECKS, "losses": LOSS_CHECKS, "all": KERNEL_CHECKS + LOSS_CHECKS}[scope]
    rng = np.random.default_rng(seed)
    return [check(rng) for check in checks]
