import copy
import math

import numpy as np
import pytest

from qcsoc import analysis
from qcsoc.config import Config
from qcsoc.plant import PlantParams


def _plant(**kw):
    p = copy.deepcopy(Config().plant)
    for k, v in kw.items():
        setattr(p, k, v)
    return p


def _dec(p):
    return p.readout_freq, (-p.readout_freq * p.delay) & 0xFFFF_FFFF


def test_noiseless_moments_match_the_decoder_exactly():
    p = _plant()
    block = analysis.ReadoutBlock(p)
    for state in (0, 1):
        m, v = analysis.readout_moments(state, p, 64, *_dec(p), h_start=block.h_start)
        _, I, _ = block.shot(0, state)
        assert v == 0.0
        assert m == I


def test_term_moments_against_monte_carlo():
    rng = np.random.default_rng(5)
    mu, c, sigma = 1234.3, 23170, 700.0
    x = np.clip(np.rint(mu + rng.normal(0, sigma, 400_000)), -32768, 32767).astype(np.int64)
    v = (x * c) >> 15
    m, var = analysis._term_moments(mu, c, sigma)
    assert abs(v.mean() - m) < 4 * math.sqrt(var / len(v))
    assert var == pytest.approx(v.var(), rel=0.01)


def test_term_moments_include_saturation():
    m, var = analysis._term_moments(40000.0, 32767, 1.0)
    assert m == (32767 * 32767) >> 15 and var == pytest.approx(0.0, abs=1e-9)


def test_rate_is_symmetric_for_antipodal_poles():
    p = _plant(reflect_amplitude=1000, sigma=3000)
    rate, per_state = analysis.misclassification_rate(p, 64, *_dec(p))
    # flooring each product biases I slightly negative, so state 0 errs a little more
    assert per_state[0] > per_state[1]
    assert per_state[0] == pytest.approx(per_state[1], rel=0.02)
    assert 0.02 < rate < 0.04


def test_rate_grows_with_noise():
    p = _plant(reflect_amplitude=1000)
    rates = []
    for s in (1000, 2000, 4000, 8000):
        p.sigma = s
        rates.append(analysis.misclassification_rate(p, 64, *_dec(p))[0])
    assert rates == sorted(rates) and rates[-1] < 0.5


def test_nonzero_threshold_is_out_of_scope():
    p = _plant(sigma=10)
    with pytest.raises(NotImplementedError):
        analysis.misclassification_rate(p, 64, *_dec(p), threshold=5)


def test_readout_block_matches_oracle_on_a_small_run():
    p = _plant(reflect_amplitude=1000, sigma=3000)
    rate, _ = analysis.misclassification_rate(p, 64, *_dec(p))
    n = 4000
    states = np.arange(n) % 2
    out = analysis.ReadoutBlock(p, seed=11).run(states)
    err = float((out[:, 0] != states).mean())
    lo, hi = analysis.binomial_interval(rate, n)
    assert lo <= err <= hi


def test_readout_block_is_deterministic_per_seed():
    p = _plant(reflect_amplitude=1000, sigma=3000)
    states = [0, 1] * 20
    a = analysis.ReadoutBlock(p, seed=3).run(states)
    b = analysis.ReadoutBlock(p, seed=3).run(states)
    c = analysis.ReadoutBlock(p, seed=4).run(states)
    assert (a == b).all() and (a != c).any()


def test_binomial_interval():
    lo, hi = analysis.binomial_interval(0.5, 10_000)
    assert (lo, hi) == pytest.approx((0.485, 0.515))
    assert analysis.binomial_interval(0.0, 10) == (0.0, 0.0)


def test_fit_rabi_recovers_the_pi_amplitude():
    amps = np.linspace(0, 32767, 21)
    a_pi = 15000.0
    a, err = analysis.fit_rabi(amps, analysis.rabi_model(amps, a_pi), guess=14000)
    assert a == pytest.approx(a_pi, rel=1e-6)
    assert err < 1e-3


def test_reference_samples_and_iq_phase():
    x = analysis.reference_samples(0, 4, 1 << 30, 0, 2.0)
    assert x == pytest.approx([2.0, 0.0, -2.0, 0.0], abs=1e-12)
    assert analysis.iq_phase(0, 5) == pytest.approx(math.pi / 2)


def test_plant_defaults_are_antipodal():
    p = PlantParams()
    assert (p.phi1 - p.phi0) & 0xFFFF_FFFF == 0x8000_0000
