"""Built-in verification suites: gradient checks and metric closed forms.

These run from the command line (the ``selftest`` subcommand) without any
test framework; the pytest suite covers the same ground more thoroughly.
Gradient checks are central finite differences in float64.
"""

from __future__ import annotations

import math

import numpy as np

from . import tape
from .chunker import cosine_scores, sigmoid_scores
from .gradcheck import check_gradients
from .harness import ExperimentConfig, forward, init_params
from .metrics import Trace, cusum_range, enrichment, gap_entropy, runs_z
from .rng import SeededRng
from .synthetic import GeneratorInstance, encode
from .synthetic import sample as draw_sample
from .tape import Tape

__all__ = ["gradient_suite", "metric_suite", "composite_gradient_check", "run_selftest"]


def _mask_from(gen, T):
    b = (gen.random(T) < 0.4).astype(np.uint8)
    b[0] = 1
    return b


def gradient_suite(instances: int = 4) -> list[str]:
    """Finite-difference checks for each differentiable op and the full
    training composite; returns a list of failure descriptions."""
    failures: list[str] = []

    def run(name, build, arrays):
        try:
            check_gradients(build, arrays)
        except AssertionError as e:
            failures.append(f"{name}: {e}")

    for k in range(instances):
        gen = SeededRng(100 + k).next_generator()
        T, d = 11, 4
        A = gen.standard_normal((5, 4))
        B = gen.standard_normal((4, 3))
        w53 = tape.constant(gen.standard_normal((5, 3)))
        run("matmul", lambda t, ls: tape.mean(tape.matmul(ls[0], ls[1]) * w53), [A, B])
        x = gen.standard_normal(T)
        run("sigmoid", lambda t, ls: tape.mean(tape.sigmoid(ls[0])), [x])
        wT = tape.constant(gen.standard_normal(T))
        run("clamp", lambda t, ls: tape.mean(tape.clamp(ls[0], -0.5, 0.5) * wT), [x * 0.3])
        v = gen.standard_normal((T, d))
        c = gen.uniform(0.05, 0.95, T)
        wTd = tape.constant(gen.standard_normal((T, d)))
        run("ema_scan", lambda t, ls: tape.mean(tape.ema_scan(ls[0], ls[1]) * wTd), [v, c])
        a_scan = gen.uniform(0.0, 1.0, (T, d))
        run("scan_linear", lambda t, ls: tape.mean(tape.scan_linear(ls[0], ls[1]) * wTd), [a_scan, v])
        b = _mask_from(gen, T)
        K = int(b.sum())
        wKd = tape.constant(gen.standard_normal((K, d)))
        run("select_rows", lambda t, ls: tape.mean(tape.select_rows(ls[0], b) * wKd), [v])
        u = gen.standard_normal((K, d))
        run("repeat_rows", lambda t, ls: tape.mean(tape.repeat_rows(ls[0], b) * wTd), [u])
        run("mse", lambda t, ls: tape.mse(ls[0], ls[1]), [v, gen.standard_normal((T, d))])

    for k in range(instances):
        gen = SeededRng(200 + k).next_generator()
        T, d_h = 9, 5
        xE = gen.standard_normal((T, d_h))
        Wq = gen.standard_normal((d_h, d_h))
        Wk = gen.standard_normal((d_h, d_h))
        run("cosine_scores", lambda t, ls: tape.mean(cosine_scores(ls[0], ls[1], ls[2]).p), [xE, Wq, Wk])
        wv = gen.standard_normal(d_h)
        run("sigmoid_scores", lambda t, ls: tape.mean(sigmoid_scores(ls[0], ls[1], ls[2]).p), [xE, wv, np.asarray(0.1)])
        x_in = gen.standard_normal((T, 3))
        enc_args = [
            gen.standard_normal((3, d_h)),
            gen.standard_normal((3, d_h)),
            gen.standard_normal(d_h),
            gen.standard_normal((d_h, d_h)),
        ]
        run(
            "encode",
            lambda t, ls: tape.mean(encode(ls[0], ls[1], ls[2], ls[3], ls[4])),
            [x_in, *enc_args],
        )

    for k in range(instances):
        failures.extend(composite_gradient_check(seed=300 + k))
    return failures


def _encoder_output(params: dict[str, np.ndarray], s) -> np.ndarray:
    t = Tape()
    leaves = {n: t.leaf(a) for n, a in params.items()}
    return encode(tape.constant(s.x, dtype=np.float64), leaves["enc_U"], leaves["enc_V"],
                  leaves["enc_gate_bias"], leaves["enc_O"]).data


def composite_gradient_check(seed: int, T: int = 32) -> list[str]:
    """Finite-difference check of the full train-step loss in float64.

    Central differences at h=1e-3 are only trustworthy where the composite is
    smooth and well conditioned, so instances are re-drawn until (a) every
    score clears the 0.5 threshold by a margin (the realized mask must not
    flip under probe perturbations), (b) the minimum-boundary guard is
    inactive, and (c) for the cosine chunker, the projected row norms stay
    bounded away from zero (the cosine's curvature scales like 1/norm).
    """
    cfg = ExperimentConfig(chunker="sigmoid" if seed % 2 else "cosine",
                           smoothing="byte" if seed % 4 < 2 else "chunk",
                           T=T, d_z=6, d_x=4, d_h=6, steps=1, seeds=(seed,))
    k_min = math.ceil(T / cfg.c_max)
    for attempt in range(80):
        run_seed = seed + 1000 * attempt
        params = init_params(cfg, run_seed, dtype=np.float64)
        params["enc_U"] = params["enc_U"] * 6.0
        params["enc_V"] = params["enc_V"] * 6.0
        params["enc_O"] = params["enc_O"] * 3.0
        gen = GeneratorInstance(cfg.d_z, cfg.d_x, SeededRng(run_seed, stream=2))
        s = draw_sample(cfg.synth_config(run_seed), gen, SeededRng(run_seed, stream=0))
        s.z = s.z.astype(np.float64)
        # Temper the observation scale: probe accuracy at h=1e-3 needs the
        # third derivatives through the sigmoid chains kept moderate.
        s.x = s.x.astype(np.float64) * 0.3
        xE = _encoder_output(params, s)
        if cfg.chunker == "cosine":
            params["chk_Wq"] = params["chk_Wq"] * 80.0
            params["chk_Wk"] = params["chk_Wk"] * 80.0
            q = xE @ params["chk_Wq"]
            k = xE @ params["chk_Wk"]
            qn = np.linalg.norm(q, axis=1)
            kn = np.linalg.norm(k, axis=1)
            if min(qn.min(), kn.min()) < 1.0:
                continue
            cos = (q[1:] * k[:-1]).sum(axis=1) / (qn[1:] * kn[:-1])
            if np.abs(cos).max() > 0.9:
                continue
            p = np.concatenate([[1.0], 0.5 * (1.0 - cos)])
        else:
            # Spread the logits and center them so both classes appear.
            logits = xE @ params["chk_w"]
            spread = logits.std()
            if spread < 1e-6:
                continue
            params["chk_w"] = params["chk_w"] * (0.8 / spread)
            params["chk_bias"] = np.asarray(0.2 - logits.mean() * (0.8 / spread), dtype=np.float64)
            z = xE @ params["chk_w"] + params["chk_bias"]
            p = np.concatenate([[1.0], 1.0 / (1.0 + np.exp(-z[1:]))])
        if (np.abs(p[1:] - 0.5).min() < 0.04 or (p > 0.5).sum() < k_min
                or p[1:].max() > 0.995 or p[1:].min() < 0.005):
            continue
        names = list(params)

        def build(t2, ls):
            return forward(cfg, dict(zip(names, ls)), s).loss

        try:
            check_gradients(build, [params[n] for n in names], mode="norm")
        except AssertionError as e:
            return [f"composite({cfg.variant}, seed={seed}): {e}"]
        return []
    return [f"composite(seed={seed}): no well-conditioned instance found"]


def metric_suite() -> list[str]:
    """Closed-form metric checks; returns failure descriptions."""
    failures: list[str] = []

    def expect(name, got, want, tol=1e-9):
        if abs(got - want) > tol:
            failures.append(f"{name}: got {got!r}, want {want!r}")

    h = np.full(40, 0.7)
    b = np.zeros(40, dtype=np.uint8)
    b[::5] = 1
    expect("enrichment constant h", enrichment(Trace(id="t", h=h, b=b)), 1.0)
    hi = b.astype(np.float64)
    expect("enrichment indicator h", enrichment(Trace(id="t", h=hi, b=b)), 40 / 8)
    expect("gap entropy periodic", gap_entropy(b), 0.0)
    b2 = np.zeros(11, dtype=np.uint8)
    b2[[0, 2, 4, 6, 10]] = 1
    want = (0.75 * math.log(4 / 3) + 0.25 * math.log(4)) / math.log(2)
    expect("gap entropy {2,2,2,4}", gap_entropy(b2), want)
    b3 = np.tile([1, 0, 0, 0, 0], 6).astype(np.uint8)
    expect("cusum period-5", cusum_range(b3), 0.8)
    b4 = np.r_[np.zeros(50), np.ones(50)].astype(np.uint8)
    expect("cusum step", cusum_range(b4), 25.0)
    alt = np.tile([1, 0], 8).astype(np.uint8)
    n = alt.shape[0]
    mu = n / 2 + 1
    sig = math.sqrt((mu - 1) * (mu - 2) / (n - 1))
    expect("runs alternating", runs_z(alt), (n - mu) / sig)
    return failures


def run_selftest() -> list[str]:
    """Both suites; empty list means everything passed."""
    return gradient_suite() + metric_suite()
