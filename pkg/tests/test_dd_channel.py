"""
Delay-Doppler channel matrices and echo synthesis
"""
import numpy as np
import pytest

from src.core.allocation import ResourceAllocation, modes_from_receivers
from src.core.dd_channel import (
    assemble_reflected, build_psi, build_psi_ofdm, build_psi_otfs, delay_tap, dump_psi,
    qpsk_symbols, synthesize_echo,
)
from src.core.exceptions import ConfigurationError, DelayOutOfRangeError, SizeGuardError
from src.core.experiments import sensing_only_allocation
from src.core.scenario import spawn_rng
from src.core.validation import check_psi_identity
from src.utils.constants import Waveform

def random_vector(size, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(size) + 1j * rng.standard_normal(size)

def test_psi_identity_at_zero_shift():
    result = check_psi_identity(max_size=64)
    assert result.passed, result.detail

@pytest.mark.parametrize("waveform", [Waveform.OTFS, Waveform.OFDM])
@pytest.mark.parametrize("which", ['psi', 'dtau', 'dnu'])
def test_factored_products_match_dense(unit_grid, waveform, which):
    """apply / apply_adjoint agree with the dense matrix"""
    grid = unit_grid(4, 6, n_cp=4)
    dd = build_psi(1.3 / grid.M, 0.35 / grid.N, grid, waveform)
    dense = dd.dense(which)
    x = random_vector(grid.size)
    np.testing.assert_allclose(dd.apply(x, which), dense @ x, atol=1e-12)
    np.testing.assert_allclose(dd.apply_adjoint(x, which), dense.conj().T @ x, atol=1e-12)
    operator = dd.as_operator(which)
    np.testing.assert_allclose(operator.matvec(x), dense @ x, atol=1e-12)

def test_otfs_psi_is_unitary(unit_grid):
    grid = unit_grid(8, 8)
    psi = build_psi_otfs(2.7 / 8, -0.6 / 8, grid).psi
    np.testing.assert_allclose(psi.conj().T @ psi, np.eye(64), atol=1e-10)

def test_unknown_matrix_name(unit_grid):
    dd = build_psi_otfs(0.0, 0.0, unit_grid(2, 2))
    with pytest.raises(ValueError):
        dd.apply(np.ones(4), 'dboth')

def test_delay_tap_snaps_near_integers(unit_grid):
    grid = unit_grid(16, 4)
    assert delay_tap(3.0 / 16 * (1 + 1e-13), grid) == 3
    assert delay_tap(3.2 / 16, grid) == 4
    assert delay_tap(0.0, grid) == 0

def test_otfs_delay_outside_block(unit_grid):
    grid = unit_grid(4, 4)
    with pytest.raises(DelayOutOfRangeError):
        build_psi_otfs(3.5 / 4, 0.0, grid)
    with pytest.raises(DelayOutOfRangeError):
        build_psi_otfs(-1e-9, 0.0, grid)

def test_ofdm_delay_beyond_cyclic_prefix(unit_grid):
    grid = unit_grid(8, 4, n_cp=2)
    t_cp = grid.ofdm_cp_duration
    build_psi_ofdm(t_cp, 0.0, grid)
    with pytest.raises(DelayOutOfRangeError):
        build_psi_ofdm(1.01 * t_cp, 0.0, grid)

def test_dense_guard(unit_grid):
    dd = build_psi_otfs(0.0, 0.0, unit_grid(128, 128))
    with pytest.raises(SizeGuardError):
        dd.dense()
    # the factored product still works at this size
    x = random_vector(128 * 128)
    np.testing.assert_allclose(dd.apply(x), x, atol=1e-9)

def test_dump_psi_layout(unit_grid, tmp_path):
    """Row-major complex64 little endian"""
    dd = build_psi_otfs(1.0 / 4, 0.25 / 4, unit_grid(4, 4))
    path = tmp_path / "psi.bin"
    dump_psi(dd, str(path))
    data = np.fromfile(path, dtype='<c8')
    assert data.size == 16 * 16
    np.testing.assert_allclose(data.reshape(16, 16), dd.psi, atol=1e-6)

def test_qpsk_unit_power():
    symbols = qpsk_symbols(np.random.default_rng(1), (3, 50))
    assert symbols.shape == (3, 50)
    np.testing.assert_allclose(np.abs(symbols), 1.0)

def test_reflected_channel_matches_dense(desk_scenario):
    channel = assemble_reflected(desk_scenario, 0, 1, 0)
    block = random_vector((desk_scenario.antennas, desk_scenario.grid.size)).reshape(desk_scenario.antennas, -1)
    dense = channel.dense() @ block.ravel()
    np.testing.assert_allclose(channel.apply(block).ravel(), dense, atol=1e-10)

def test_sensing_frame_power(desk_scenario):
    """A unit-norm beam with QPSK symbols spends exactly eta per symbol"""
    allocation = sensing_only_allocation(desk_scenario, [0], [1])
    echo = synthesize_echo(desk_scenario, allocation, spawn_rng(0, 1))
    frame = echo.frames[0]
    assert frame.power == pytest.approx(allocation.sensing_powers[0].sum())
    assert frame.vector.size == desk_scenario.antennas * desk_scenario.grid.size

def test_echo_shapes(desk_scenario):
    modes = modes_from_receivers(desk_scenario.num_aps, [1, 2])
    comm = np.full((desk_scenario.num_aps, desk_scenario.num_users), 1e-3)
    sensing = np.full((desk_scenario.num_aps, desk_scenario.num_targets), 1e-3)
    allocation = ResourceAllocation.from_blocks(modes, comm, sensing)
    echo = synthesize_echo(desk_scenario, allocation, spawn_rng(0, 2))
    assert echo.receivers == (1, 2)
    assert set(echo.frames) == set(allocation.transmitters)
    assert echo.signal(2).shape == (desk_scenario.antennas, desk_scenario.grid.size)
    assert echo.gains.shape == (desk_scenario.num_aps, desk_scenario.num_aps, desk_scenario.num_targets)
    # gains only on transmitter -> receiver pairs
    assert np.all(echo.gains[1, 2] == 0)

def test_echo_is_reproducible(desk_scenario):
    allocation = sensing_only_allocation(desk_scenario, [0], [1])
    a = synthesize_echo(desk_scenario, allocation, spawn_rng(4, 1))
    b = synthesize_echo(desk_scenario, allocation, spawn_rng(4, 1))
    np.testing.assert_array_equal(a.signal(1), b.signal(1))

def test_echo_needs_a_receiver(desk_scenario):
    n = desk_scenario.num_aps
    allocation = ResourceAllocation.from_blocks(np.ones(n), np.zeros((n, desk_scenario.num_users)),
                                                np.zeros((n, desk_scenario.num_targets)))
    with pytest.raises(ConfigurationError):
        synthesize_echo(desk_scenario, allocation, spawn_rng(0))
