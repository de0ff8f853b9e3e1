import cmath
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robust_gcs.constellation import (
    Constellation,
    ConstellationError,
    load,
    min_distance,
    normalize_power,
    save,
    square_qam,
)


def _qam64_dmin_oracle():
    # brute force: mean |a+jb|^2 over the odd 8x8 grid, then the grid step 2 rescaled
    grid = [complex(a, b) for a, b in itertools.product(range(-7, 8, 2), repeat=2)]
    avg_power = sum(abs(p) ** 2 for p in grid) / len(grid)
    assert avg_power == 42
    return 2 / math.sqrt(avg_power)


def test_qam4_positions():
    pts = set(np.round(square_qam(4).points, 12))
    expected = {complex(round(a / math.sqrt(2), 12), round(b / math.sqrt(2), 12)) for a in (1, -1) for b in (1, -1)}
    assert pts == expected


def test_qam64_min_distance_matches_grid_oracle():
    assert min_distance(square_qam(64)) == pytest.approx(_qam64_dmin_oracle(), rel=1e-12)
    assert _qam64_dmin_oracle() == pytest.approx(0.30861, abs=1e-5)


@pytest.mark.parametrize("order", [5, 8, 32, 1024])
def test_unsupported_qam_order(order):
    with pytest.raises(ConstellationError, match="unsupported QAM order"):
        square_qam(order)


@pytest.mark.parametrize("order", [4, 16, 64, 256])
def test_qam_unit_power_and_quarter_turn_symmetry(order):
    c = square_qam(order)
    assert np.mean(np.abs(c.points) ** 2) == pytest.approx(1.0, rel=1e-12)
    rotated = c.points * 1j
    dist = np.abs(rotated[:, None] - c.points[None, :]).min(axis=1)
    assert dist.max() < 1e-12


def test_qam4_min_distance_sqrt2():
    assert min_distance(square_qam(4)) == pytest.approx(math.sqrt(2), rel=1e-12)


@pytest.mark.parametrize("points, expected", [
    ([1, -1], [1, -1]),
    ([2, -2], [1, -1]),
    ([1 + 1j, 0], [1 + 1j, 0]),
])
def test_normalize_power_examples(points, expected):
    np.testing.assert_allclose(normalize_power(points).points, expected, atol=1e-15)


def test_normalize_power_rejects_zero_and_nonfinite():
    with pytest.raises(ConstellationError, match="all-zero"):
        normalize_power([0, 0, 0])
    with pytest.raises(ConstellationError, match="non-finite"):
        normalize_power([1, np.nan])
    with pytest.raises(ConstellationError, match="empty"):
        normalize_power([])


def test_duplicate_points_rejected():
    with pytest.raises(ConstellationError, match="degenerate"):
        normalize_power([1, 1, -1, 1j])


def test_power_invariant_enforced_on_construction():
    with pytest.raises(ConstellationError, match="average power"):
        Constellation(np.array([0.5, -0.5]))


points_strategy = st.lists(
    st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False),
    min_size=2, max_size=32,
).filter(lambda p: np.mean(np.abs(np.array(p)) ** 2) > 1e-6)


@settings(max_examples=200, deadline=None)
@given(points_strategy)
def test_normalize_idempotent(points):
    try:
        once = normalize_power(points)
    except ConstellationError:
        return  # near-duplicate draws
    twice = normalize_power(once.points)
    np.testing.assert_allclose(twice.points, once.points, atol=1e-12, rtol=0)


@settings(max_examples=200, deadline=None)
@given(points_strategy, st.floats(-math.pi, math.pi))
def test_normalize_commutes_with_rotation(points, alpha):
    try:
        base = normalize_power(points)
    except ConstellationError:
        return
    rot = cmath.exp(1j * alpha)
    rotated = normalize_power(np.array(points) * rot)
    np.testing.assert_allclose(rotated.points, base.points * rot, atol=1e-12, rtol=0)


def test_save_load_roundtrip_exact(tmp_path):
    c = square_qam(64)
    path = tmp_path / "q.const"
    save(c, path)
    back = load(path)
    assert back == c
    assert np.array_equal(back.points, c.points)
    assert path.read_text().splitlines()[0] == "constellation v1 64 qam64 qam"


def test_roundtrip_random_points_and_metadata(tmp_path):
    rng = np.random.default_rng(3)
    c = normalize_power(rng.standard_normal(16) + 1j * rng.standard_normal(16), label="rnd",
                        provenance="trained-fixed", metadata={"rpn_var": "0.005", "snr_db": "17"})
    save(c, tmp_path / "r.const")
    back = load(tmp_path / "r.const")
    assert np.array_equal(back.points, c.points)
    assert back.metadata == c.metadata


def test_load_csv_variant(tmp_path):
    c = square_qam(4)
    lines = ["constellation,v1,4,q4,qam"] + [f"{float(p.real)!r},{float(p.imag)!r}" for p in c.points]
    (tmp_path / "c.csv").write_text("\n".join(lines))
    assert np.array_equal(load(tmp_path / "c.csv").points, c.points)


def test_load_wrong_count(tmp_path):
    c = square_qam(64)
    save(c, tmp_path / "q.const")
    lines = (tmp_path / "q.const").read_text().splitlines()
    (tmp_path / "bad.const").write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ConstellationError, match="declares 64 points, found 63"):
        load(tmp_path / "bad.const")


def test_load_wrong_power(tmp_path):
    pts = square_qam(4).points / math.sqrt(2)
    lines = ["constellation v1 4 half qam"] + [f"{p.real:.17g} {p.imag:.17g}" for p in pts]
    (tmp_path / "half.const").write_text("\n".join(lines))
    with pytest.raises(ConstellationError, match="average power"):
        load(tmp_path / "half.const")


def test_load_malformed(tmp_path):
    (tmp_path / "m.const").write_text("constellation v1 2 x qam\n1 0\nnot a number\n")
    with pytest.raises(ConstellationError, match="malformed"):
        load(tmp_path / "m.const")
    (tmp_path / "h.const").write_text("points 2\n1 0\n-1 0\n")
    with pytest.raises(ConstellationError, match="bad header"):
        load(tmp_path / "h.const")
