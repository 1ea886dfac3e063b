from collections import deque

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lvseg.errors import NoSignal, ValidationError
from lvseg.postproc import components, filter_by_center, filter_record, keep_largest, lv_center


def _flood_fill(mask, connectivity):
    """Plain BFS labelling in raster order of the first pixel."""
    steps = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    if connectivity == 8:
        steps += [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    rows, cols = mask.shape
    labels = np.zeros(mask.shape, dtype=int)
    n = 0
    for r in range(rows):
        for c in range(cols):
            if mask[r, c] and not labels[r, c]:
                n += 1
                labels[r, c] = n
                todo = deque([(r, c)])
                while todo:
                    y, x = todo.popleft()
                    for dy, dx in steps:
                        yy, xx = y + dy, x + dx
                        if 0 <= yy < rows and 0 <= xx < cols and mask[yy, xx] and not labels[yy, xx]:
                            labels[yy, xx] = n
                            todo.append((yy, xx))
    return labels, n


masks16 = st.integers(0, 2 ** 32 - 1).map(
    lambda s: (np.random.default_rng(s).random((16, 16)) > 0.55).astype(np.uint8))


# -- components ------------------------------------------------------------------

def test_blank_has_no_components():
    assert components(np.zeros((5, 5), np.uint8)).n == 0


def test_diagonal_pixels():
    m = np.array([[1, 0], [0, 1]], np.uint8)
    assert components(m, 8).n == 1
    assert components(m, 4).n == 2


@given(masks16, st.sampled_from([4, 8]))
def test_labels_match_flood_fill(mask, conn):
    comp = components(mask, conn)
    labels, n = _flood_fill(mask, conn)
    assert comp.n == n
    np.testing.assert_array_equal(comp.labels, labels)
    assert comp.counts.sum() == mask.sum()
    for k in range(1, n + 1):
        rows, cols = np.nonzero(labels == k)
        np.testing.assert_allclose(comp.centroids[k - 1], (rows.mean(), cols.mean()))


def test_component_input_checks():
    with pytest.raises(ValidationError):
        components(np.full((3, 3), 2))
    with pytest.raises(ValidationError):
        components(np.zeros((3, 3), np.uint8), connectivity=6)


# -- largest ---------------------------------------------------------------------

def _two_blobs():
    m = np.zeros((30, 30), np.uint8)
    m[2:12, 2:7] = 1       # 50 pixels
    m[20:24, 20:25] = 1    # 20 pixels
    return m


def test_keep_largest():
    out = keep_largest(_two_blobs())
    assert out.sum() == 50 and out[2:12, 2:7].all()


def test_keep_largest_tie_prefers_first():
    m = np.zeros((10, 10), np.uint8)
    m[0:2, 6:8] = 1
    m[5:7, 0:2] = 1
    out = keep_largest(m)
    assert out[0:2, 6:8].all() and out.sum() == 4


def test_keep_largest_trivial():
    m = np.zeros((8, 8), np.uint8)
    np.testing.assert_array_equal(keep_largest(m), m)
    m[2:5, 3:6] = 1
    np.testing.assert_array_equal(keep_largest(m), m)


# -- centre ----------------------------------------------------------------------

def test_lv_center_shared_block():
    stack = np.zeros((4, 20, 20), np.uint8)
    stack[:, 6:11, 3:8] = 1
    assert lv_center(stack) == (8.0, 5.0)


def test_lv_center_blank():
    with pytest.raises(NoSignal):
        lv_center(np.zeros((3, 8, 8), np.uint8))


def test_lv_center_uses_hot_pixels_only():
    stack = np.zeros((10, 20, 20), np.uint8)
    stack[:, 4:7, 4:7] = 1
    stack[0, 15:18, 15:18] = 1   # heat 1 << 0.9 * 10
    assert lv_center(stack) == (5.0, 5.0)


@given(st.integers(0, 10_000))
def test_lv_center_order_free(seed):
    rng = np.random.default_rng(seed)
    stack = (rng.random((6, 12, 12)) > 0.6).astype(np.uint8)
    assert lv_center(stack) == lv_center(stack[rng.permutation(6)])


# -- centre filter ---------------------------------------------------------------

def test_filter_keeps_component_with_center():
    out = filter_by_center(_two_blobs(), (21.6, 22.4))
    assert out.sum() == 20 and out[20:24, 20:25].all()


def test_filter_background_gives_blank():
    assert filter_by_center(_two_blobs(), (15, 15)).sum() == 0


def test_filter_single_component_identity():
    m = np.zeros((10, 10), np.uint8)
    m[2:6, 2:6] = 1
    np.testing.assert_array_equal(filter_by_center(m, (3.5, 3.5)), m)


def test_filter_rounds_half_up():
    m = np.zeros((6, 6), np.uint8)
    m[3, 3] = 1
    assert filter_by_center(m, (2.5, 2.5)).sum() == 1
    assert filter_by_center(m, (2.49, 2.5)).sum() == 0


def test_filter_rejects_outside_center():
    with pytest.raises(ValidationError):
        filter_by_center(np.zeros((4, 4), np.uint8), (4.6, 0))


@given(masks16, st.integers(0, 15), st.integers(0, 15))
def test_filter_properties(mask, r, c):
    for out in (filter_by_center(mask, (r, c)), keep_largest(mask)):
        assert components(out).n <= 1
        assert (out <= mask).all()
    once = filter_by_center(mask, (r, c))
    np.testing.assert_array_equal(filter_by_center(once, (r, c)), once)
    big = keep_largest(mask)
    np.testing.assert_array_equal(keep_largest(big), big)


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 8), st.integers(0, 8))
def test_methods_agree_on_single_component(h, w, r0, c0):
    m = np.zeros((16, 16), np.uint8)
    m[r0:r0 + h, c0:c0 + w] = 1
    np.testing.assert_array_equal(keep_largest(m), filter_by_center(m, (r0, c0)))


# -- whole record ----------------------------------------------------------------

def test_filter_record_center_and_largest():
    rec = np.zeros((2, 3, 30, 30), np.uint8)
    rec[:, :, 10:16, 10:16] = 1          # LV in every frame
    rec[0, 0, 0:10, 20:30] = 1           # a bigger spurious blob in one image
    out = filter_record(rec, "center")
    assert out.shape == rec.shape
    assert out[0, 0, 0:10, 20:30].sum() == 0 and out[:, :, 10:16, 10:16].all()
    largest = filter_record(rec, "largest")
    assert largest[0, 0, 10:16, 10:16].sum() == 0


def test_filter_record_blank_passthrough():
    rec = np.zeros((1, 2, 8, 8), np.uint8)
    np.testing.assert_array_equal(filter_record(rec), rec)
    with pytest.raises(ValidationError):
        filter_record(rec, "median")
