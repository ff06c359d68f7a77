"""Change-point generator, encoder stand-in, oracle readout, and SMB1 files."""

import json

import numpy as np
import pytest

from chunklab import tape
from chunklab.chunker import BoundaryMask, Confidence
from chunklab.expansion import byte_smooth_expand, chunk_smooth_expand
from chunklab.gradcheck import check_gradients
from chunklab.rng import SeededRng
from chunklab.synthetic import (
    EncoderParams,
    GeneratorInstance,
    SynthConfig,
    boundary_accuracy,
    encode,
    load_sample,
    oracle_subsample,
    sample,
    save_sample,
)
from chunklab.tape import Tape


def _gen_and_cfg(seed=0, **kw):
    cfg = SynthConfig(T=kw.pop("T", 256), d_z=kw.pop("d_z", 8), d_x=kw.pop("d_x", 4),
                      seed=seed, **kw)
    gen = GeneratorInstance(cfg.d_z, cfg.d_x, SeededRng(seed, stream=2))
    return cfg, gen


def test_sample_noiseless_is_exact_linear_map_and_reproducible():
    cfg, gen = _gen_and_cfg(seed=1, sigma=0.0)
    s1 = sample(cfg, gen, SeededRng(1))
    s2 = sample(cfg, gen, SeededRng(1))
    np.testing.assert_array_equal(s1.x, s2.x)
    np.testing.assert_array_equal(s1.z, s2.z)
    np.testing.assert_array_equal(s1.b_star, s2.b_star)
    # x lies exactly in the row space of W
    np.testing.assert_array_equal(s1.x, s1.z @ gen.W)


def test_sample_rate_one_every_position_is_boundary():
    cfg, gen = _gen_and_cfg(seed=2, boundary_rate=1.0)
    s = sample(cfg, gen, SeededRng(2))
    assert s.b_star.sum() == cfg.T
    # latent rows i.i.d.: no two consecutive rows equal
    assert (np.abs(np.diff(s.z, axis=0)).max(axis=1) > 0).all()


def test_sample_piecewise_constant_within_segments():
    cfg, gen = _gen_and_cfg(seed=3, boundary_rate=0.2, sigma=0.05)
    s = sample(cfg, gen, SeededRng(3))
    starts = np.flatnonzero(s.b_star)
    bounds = np.concatenate([starts, [cfg.T]])
    for a, b in zip(bounds[:-1], bounds[1:]):
        seg = s.z[a:b]
        np.testing.assert_array_equal(seg, np.tile(seg[0], (b - a, 1)))
    # discontinuous across change points
    for t in starts[1:]:
        assert np.abs(s.z[t] - s.z[t - 1]).max() > 0


def test_sample_mean_segment_length_matches_inverse_rate():
    rate = 0.25
    cfg, gen = _gen_and_cfg(seed=4, T=4096, boundary_rate=rate)
    rng = SeededRng(4)
    lengths = []
    for _ in range(200):
        s = sample(cfg, gen, rng)
        lengths.append(cfg.T / s.b_star.sum())
    assert abs(np.mean(lengths) - 1 / rate) / (1 / rate) < 0.05


def test_encode_memoryless_with_saturated_gate():
    gen = np.random.default_rng(5)
    T, d_x, d_h = 12, 3, 4
    x = gen.standard_normal((T, d_x)).astype(np.float64)
    U = gen.standard_normal((d_x, d_h))
    V = np.zeros((d_x, d_h))
    bias = np.full(d_h, 60.0)  # gate saturates to 1
    O = np.eye(d_h)
    out = encode(tape.constant(x), tape.constant(U), tape.constant(V), tape.constant(bias), tape.constant(O))
    np.testing.assert_allclose(out.data, x @ U, rtol=1e-12)


def test_encode_strict_causality():
    gen = np.random.default_rng(6)
    T, d_x, d_h = 20, 3, 5
    x = gen.standard_normal((T, d_x)).astype(np.float32)
    params = EncoderParams.init(d_x, d_h, SeededRng(6))

    def run(x_arr):
        return encode(
            tape.constant(x_arr, np.float32),
            tape.constant(params.U, np.float32),
            tape.constant(params.V, np.float32),
            tape.constant(params.gate_bias, np.float32),
            tape.constant(params.O, np.float32),
        ).data

    base = run(x)
    for t in (0, 7, 19):
        bumped = x.copy()
        bumped[t] += 3.0
        out = run(bumped)
        np.testing.assert_array_equal(out[:t], base[:t])
        assert np.abs(out[t:] - base[t:]).max() > 0


def test_encode_finite_difference():
    gen = np.random.default_rng(7)
    T, d_x, d_h = 8, 3, 4
    x = gen.standard_normal((T, d_x))
    args = [
        x,
        gen.standard_normal((d_x, d_h)),
        gen.standard_normal((d_x, d_h)),
        gen.standard_normal(d_h),
        gen.standard_normal((d_h, d_h)),
    ]
    w = tape.constant(gen.standard_normal((T, d_h)))
    check_gradients(lambda t, ls: tape.sum_all(encode(ls[0], ls[1], ls[2], ls[3], ls[4]) * w), args)


def _conf_ones(T):
    conf = Confidence.__new__(Confidence)
    conf.c = tape.constant(np.ones(T))
    return conf


def test_oracle_reconstruction_exact_when_boundaries_match():
    cfg, gen = _gen_and_cfg(seed=8, sigma=0.0)
    s = sample(cfg, gen, SeededRng(8))
    mask = BoundaryMask(s.b_star)
    chunks = oracle_subsample(s.z.astype(np.float64), mask)
    for expand in (chunk_smooth_expand, byte_smooth_expand):
        out = expand(chunks, mask, _conf_ones(cfg.T))
        assert tape.mse(out.xb, tape.constant(s.z.astype(np.float64))).item() == 0.0


def test_oracle_all_ones_mask_returns_latents():
    cfg, gen = _gen_and_cfg(seed=9)
    s = sample(cfg, gen, SeededRng(9))
    chunks = oracle_subsample(s.z, BoundaryMask(np.ones(cfg.T, dtype=np.uint8)))
    np.testing.assert_array_equal(chunks.y.data, s.z)


def test_oracle_single_chunk_mse_is_variance_about_first_row():
    cfg, gen = _gen_and_cfg(seed=10)
    s = sample(cfg, gen, SeededRng(10))
    b = np.zeros(cfg.T, dtype=np.uint8)
    b[0] = 1
    mask = BoundaryMask(b)
    z64 = s.z.astype(np.float64)
    chunks = oracle_subsample(z64, mask)
    out = byte_smooth_expand(chunks, mask, _conf_ones(cfg.T))
    got = tape.mse(out.xb, tape.constant(z64)).item()
    # brute computation: reconstruction is constant z_1
    brute = float(np.mean([(np.linalg.norm(z64[t] - z64[0])) ** 2 for t in range(cfg.T)]))
    assert got == pytest.approx(brute, rel=1e-6)


def test_oracle_passes_no_gradient_into_latents():
    cfg, gen = _gen_and_cfg(seed=11)
    s = sample(cfg, gen, SeededRng(11))
    mask = BoundaryMask(s.b_star)
    t = Tape()
    chunks = oracle_subsample(s.z, mask)
    assert chunks.y.tape is None


def test_boundary_accuracy_cases():
    b = np.array([1, 0, 1, 1, 0], dtype=np.uint8)
    acc, prec, rec, f1 = boundary_accuracy(b, b)
    assert (acc, prec, rec, f1) == (1.0, 1.0, 1.0, 1.0)
    flipped = 1 - b
    flipped[0] = 1
    acc, _, _, _ = boundary_accuracy(flipped, b)
    assert acc == pytest.approx(1 / 5)


def test_boundary_accuracy_random_rate_expectation():
    # masks independently Bernoulli(r): P(agree) = (1-r)^2 + r^2
    r = 0.3
    gen = SeededRng(12).next_generator()
    accs = []
    for _ in range(200):
        a = (gen.random(2048) < r).astype(np.uint8)
        b = (gen.random(2048) < r).astype(np.uint8)
        a[0] = b[0] = 1
        accs.append(boundary_accuracy(a, b)[0])
    expect = (1 - r) ** 2 + r**2
    assert abs(np.mean(accs) - expect) < 0.01


def test_smb1_roundtrip(tmp_path):
    cfg, gen = _gen_and_cfg(seed=13, T=100)
    s = sample(cfg, gen, SeededRng(13))
    path = tmp_path / "sample_0000.smb1"
    save_sample(path, cfg, s)
    cfg2, s2 = load_sample(path)
    assert cfg2 == cfg
    np.testing.assert_array_equal(s.z, s2.z)
    np.testing.assert_array_equal(s.x, s2.x)
    np.testing.assert_array_equal(s.b_star, s2.b_star)
    sidecar = json.loads((tmp_path / "sample_0000.smb1.json").read_text())
    assert sidecar["T"] == 100 and sidecar["format"] == "SMB1"
    # magic and truncation guards
    raw = path.read_bytes()
    assert raw[:4] == b"SMB1"
    bad = tmp_path / "bad.smb1"
    bad.write_bytes(raw[:-1])
    with pytest.raises(ValueError):
        load_sample(bad)


def test_synth_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(T=1)
    with pytest.raises(ValueError):
        SynthConfig(boundary_rate=0.0)
    with pytest.raises(ValueError):
        SynthConfig(sigma=-0.1)
    paper = SynthConfig.paper_scale(seed=3)
    assert (paper.T, paper.d_z, paper.d_x) == (2**15, 256, 32)
