import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from envadapt import ofdm as of
from envadapt.config import preset
from envadapt.errors import UsageError


def test_single_path_environment():
    pdp = of.sample_environment(7, 1)
    np.testing.assert_array_equal(pdp.delays, [0])
    np.testing.assert_array_equal(pdp.powers, [1.0])


def test_environment_seeded():
    a, b = of.sample_environment(11, 3), of.sample_environment(11, 3)
    np.testing.assert_array_equal(a.delays, b.delays)
    np.testing.assert_array_equal(a.powers, b.powers)


def test_four_paths_normalized():
    pdp = of.sample_environment(5, 4)
    assert abs(pdp.powers.sum() - 1.0) < 1e-12
    assert np.all(np.diff(pdp.delays) > 0) and np.all(pdp.powers >= 0)


def test_zero_paths_rejected():
    with pytest.raises(UsageError):
        of.sample_environment(0, 0)


@given(st.lists(st.floats(0.01, 100.0), min_size=1, max_size=8), st.integers(0, 10_000))
def test_pdp_normalization_property(powers, seed):
    delays = np.cumsum(np.random.default_rng(seed).integers(1, 4, size=len(powers))) - 1
    pdp = of.Pdp(delays, powers)
    assert abs(pdp.powers.sum() - 1.0) < 1e-12
    assert np.all(pdp.powers >= 0)


@given(st.integers(0, 10_000), st.integers(1, 4))
def test_sampled_pdp_property(seed, L):
    pdp = of.sample_environment(seed, L)
    assert pdp.paths == L and pdp.delays[0] == 0
    assert np.all(np.diff(pdp.delays) > 0)
    assert abs(pdp.powers.sum() - 1.0) < 1e-12


def test_alias_constraint_keeps_residues_distinct():
    for s in range(30):
        pdp = of.sample_environment(s, 3, (1, 11), alias=3)
        assert len(set(pdp.delays % 3)) == 3


# transmission ----------------------------------------------------------------


def test_noiseless_unit_channel_is_transparent():
    frame = of.make_frame(24, 3)
    pdp = of.Pdp([0], [1.0])
    bits = np.random.default_rng(0).integers(0, 2, 24)
    rx = of.transmit_receive(pdp, frame, np.inf, 1, bits=bits, taps=np.array([1.0 + 0j]))
    sent = np.stack([frame.pilot_block(), of.bpsk(bits).astype(complex)])[None]
    np.testing.assert_allclose(rx, of.to_features(sent)[0], atol=1e-12)


def test_multipath_equals_dft_of_taps():
    # independent route: zero-padded FFT of the tap vector
    frame = of.make_frame(24, 24)
    pdp = of.Pdp([0, 2, 5], [0.5, 0.3, 0.2])
    rng = np.random.default_rng(3)
    taps = of.draw_taps(pdp, 1, rng)[0]
    bits = rng.integers(0, 2, 24)
    rx = of.transmit_receive(pdp, frame, np.inf, 0, bits=bits, taps=taps)
    h = np.zeros(24, dtype=complex)
    h[pdp.delays] = taps
    H = np.fft.fft(h)
    data = rx[2] + 1j * rx[3]
    np.testing.assert_allclose(data, H * of.bpsk(bits), atol=1e-12)
    np.testing.assert_allclose(of.frequency_response(pdp, taps, 24)[0], H, atol=1e-12)


def test_zero_signal_noise_variance():
    frame = of.make_frame(24, 3)
    pdp = of.Pdp([0], [1.0])
    n_frames = 2100                       # 2 blocks x 24 subcarriers each: > 10^5 samples
    blocks = np.zeros((n_frames, 2, 24), dtype=complex)
    rx = of._channel(pdp, frame, blocks, np.ones((n_frames, 1)), 7.0, np.random.default_rng(9))
    assert rx.size > 100_000
    expect = of.noise_variance(7.0)
    assert abs(np.mean(np.abs(rx) ** 2) / expect - 1) < 0.05


def test_transmit_receive_seeded():
    frame = of.make_frame(24, 3)
    pdp = of.sample_environment(1, 3)
    a = of.transmit_receive(pdp, frame, 10.0, 42)
    b = of.transmit_receive(pdp, frame, 10.0, 42)
    assert a.tobytes() == b.tobytes()


def test_path_gain_normalization():
    taps = of.draw_taps(of.Pdp([0], [1.0]), 100_000, np.random.default_rng(2024))
    assert 0.99 <= np.mean(np.abs(taps) ** 2) <= 1.01


def test_coherent_frames_share_taps():
    frame = of.make_frame(24, 3)
    pdp = of.sample_environment(2, 3)
    bits = np.random.default_rng(0).integers(0, 2, (8, 24))
    _, taps = of.received_blocks(pdp, frame, bits, 10.0, np.random.default_rng(1), coherence=4)
    assert np.array_equal(taps[0], taps[3]) and np.array_equal(taps[4], taps[7])
    assert not np.array_equal(taps[0], taps[4])


# datasets ---------------------------------------------------------------------


@pytest.mark.parametrize("count", [500, 16])
def test_dataset_sizes(count):
    ds = of.make_dataset(of.sample_environment(0, 3), of.make_frame(24, 3), count, 10.0, 0)
    assert len(ds) == count and ds.x.shape == (count, 4, 24) and ds.y.shape == (count, 24)


def test_disjoint_seeds_disjoint_noise():
    pdp, frame = of.sample_environment(0, 3), of.make_frame(24, 3)
    a = of.make_dataset(pdp, frame, 64, 10.0, 1)
    b = of.make_dataset(pdp, frame, 64, 10.0, 2)
    rows = {r.tobytes() for r in a.x} | {r.tobytes() for r in b.x}
    assert len(rows) == 128


def test_pilot_count_limits():
    with pytest.raises(UsageError):
        of.make_frame(24, 25)
    cfg = preset("paper")
    assert cfg.ofdm.k_sub == 72 and set(cfg.ofdm.study_pilots) == {9, 72}


# ber ----------------------------------------------------------------------------


def test_ber_extremes():
    bits = np.random.default_rng(0).integers(0, 2, 100).astype(float)
    assert of.ber(bits, bits) == 0.0
    assert of.ber(1 - bits, bits) == 1.0


def test_ber_random_guessing():
    rng = np.random.default_rng(77)
    assert abs(of.ber(rng.uniform(size=100_000), rng.integers(0, 2, 100_000)) - 0.5) < 0.01


def test_ber_length_mismatch():
    with pytest.raises(UsageError):
        of.ber(np.zeros(3), np.zeros(4))


@given(st.integers(0, 10_000))
def test_ber_in_unit_interval(seed):
    r = np.random.default_rng(seed)
    assert 0.0 <= of.ber(r.uniform(size=50), r.integers(0, 2, 50)) <= 1.0


def test_ls_more_pilots_lower_ber():
    task = of.OfdmTask(k_sub=72, pilots=9)
    env = task.dissimilar_env(0)
    few, full = task.with_pilots(9), task.with_pilots(72)
    ds9 = of.make_dataset(env, few, 2000, 10.0, [5, 1])
    ds72 = of.make_dataset(env, full, 2000, 10.0, [5, 1])
    b9 = of.ber(of.ls_equalize(ds9.x, few), ds9.y)
    b72 = of.ber(of.ls_equalize(ds72.x, full), ds72.y)
    assert b72 < b9
