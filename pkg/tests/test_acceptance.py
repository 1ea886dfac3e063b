"""Acceptance criteria 1-10.

Each test prints one ``criterion N: PASS|FAIL`` line (visible under
``pytest -v``) and then asserts. Run just this file with
``pytest tests/test_acceptance.py -v``.
"""
import csv
import json
import math
import time
from collections import deque

import numpy as np
import pytest
import torch

from lvseg.cli import main
from lvseg.ingest import load_study, parse_dicom, stack_from_dicom_files, stack_from_nifti, store_study
from lvseg.postproc import filter_by_center, lv_center
from lvseg.roi import first_harmonic_map, hough_circles
from lvseg.synthetic import disc, disc_dataset, lv_record, ring, solid_volume_ml
from lvseg.unet import SegModel, TrainHyper, UNetConfig, build_model, layer_summary, loss_grad, loss_value, train
from lvseg.unet.losses import LOSSES
from lvseg.volume import integrate, linear_model, patient_volumes, slice_area, slice_location
from test_ingest import _craft, _craft_nifti


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return emit


# -- 1. architecture ---------------------------------------------------------------

# layer, type, output shape, params, inputs; copied row for row from the reference summary
REFERENCE_SUMMARY = """\
conv2d_1	Conv2D	176,176,64	640	input_1
conv2d_2	Conv2D	176,176,64	36928	conv2d_1
max_pooling2d_1	MaxPooling2D	88,88,64	0	conv2d_2
conv2d_3	Conv2D	88,88,128	73856	max_pooling2d_1
conv2d_4	Conv2D	88,88,128	147584	conv2d_3
max_pooling2d_2	MaxPooling2D	44,44,128	0	conv2d_4
conv2d_5	Conv2D	44,44,256	295168	max_pooling2d_2
conv2d_6	Conv2D	44,44,256	590080	conv2d_5
max_pooling2d_3	MaxPooling2D	22,22,256	0	conv2d_6
conv2d_7	Conv2D	22,22,512	1180160	max_pooling2d_3
conv2d_8	Conv2D	22,22,512	2359808	conv2d_7
max_pooling2d_4	MaxPooling2D	11,11,512	0	conv2d_8
conv2d_9	Conv2D	11,11,1024	4719616	max_pooling2d_4
conv2d_10	Conv2D	11,11,1024	9438208	conv2d_9
dropout_1	Dropout	11,11,1024	0	conv2d_10
up_sampling2d_1	UpSampling2D	22,22,1024	0	dropout_1
conv2d_11	Conv2D	22,22,512	2097664	up_sampling2d_1
concatenate_1	Concatenate	22,22,1024	0	conv2d_8 conv2d_11
conv2d_12	Conv2D	22,22,512	4719104	concatenate_1
conv2d_13	Conv2D	22,22,512	2359808	conv2d_12
dropout_2	Dropout	22,22,512	0	conv2d_13
up_sampling2d_2	UpSampling2D	44,44,512	0	dropout_2
conv2d_14	Conv2D	44,44,256	524544	up_sampling2d_2
concatenate_2	Concatenate	44,44,512	0	conv2d_6 conv2d_14
conv2d_15	Conv2D	44,44,256	1179904	concatenate_2
conv2d_16	Conv2D	44,44,256	590080	conv2d_15
dropout_3	Dropout	44,44,256	0	conv2d_16
up_sampling2d_3	UpSampling2D	88,88,256	0	dropout_3
conv2d_17	Conv2D	88,88,128	131200	up_sampling2d_3
concatenate_3	Concatenate	88,88,256	0	conv2d_4 conv2d_17
conv2d_18	Conv2D	88,88,128	295040	concatenate_3
conv2d_19	Conv2D	88,88,128	147584	conv2d_18
dropout_4	Dropout	88,88,128	0	conv2d_19
up_sampling2d_4	UpSampling2D	176,176,128	0	dropout_4
conv2d_20	Conv2D	176,176,64	32832	up_sampling2d_4
concatenate_4	Concatenate	176,176,128	0	conv2d_2 conv2d_20
conv2d_21	Conv2D	176,176,64	73792	concatenate_4
conv2d_22	Conv2D	176,176,64	36928	conv2d_21
conv2d_23	Conv2D	176,176,1	65	conv2d_22
"""
REFERENCE_TOTAL = 31_030_593


def _reference_rows():
    rows = []
    for line in REFERENCE_SUMMARY.splitlines():
        name, kind, shape, params, inputs = line.split("\t")
        rows.append((name, kind, (None, *map(int, shape.split(","))), int(params), inputs.split()))
    return rows


def test_criterion_01_architecture(report):
    cfg = UNetConfig(176, 64, 23)
    t0 = time.perf_counter()
    net = build_model(cfg)
    total = sum(p.numel() for p in net.parameters() if p.requires_grad)
    elapsed = time.perf_counter() - t0
    ours = [(r["name"], r["type"], r["output_shape"], r["params"], r["connected_to"])
            for r in layer_summary(cfg)]
    ref = _reference_rows()
    convs = [m for m in net.modules() if isinstance(m, torch.nn.Conv2d)]
    ref_conv_params = [r[3] for r in ref if r[1] == "Conv2D"]
    net_conv_params = [sum(p.numel() for p in c.parameters()) for c in convs]
    mismatched = [a[0] for a, b in zip(ours, ref) if a != b]
    ok = (total == REFERENCE_TOTAL and len(ours) == len(ref) and not mismatched
          and net_conv_params == ref_conv_params and elapsed < 1.0)
    report(1, ok, f"total={total:,} rows={len(ours)}/{len(ref)} mismatched={mismatched} "
                  f"build={elapsed:.2f}s")
    assert total == REFERENCE_TOTAL
    assert ours == ref
    assert net_conv_params == ref_conv_params
    assert elapsed < 1.0


# -- 2. regression table -------------------------------------------------------------

def test_criterion_02_regression_table(report):
    # every cell, evaluated by hand at a few ages
    expected = {
        (10, "M"): (46.9, 117.0), (0, "M"): (0.0, 9.0), (15, "M"): (70.35, 171.0),
        (10, "F"): (39.1, 98.1), (0, "F"): (15.0, 22.0), (15, "F"): (51.15, 136.15),
        (16, "M"): (75.0, 181.0), (40, "M"): (75.0, 181.0),
        (16, "F"): (53.6, 144.0), (20, "F"): (53.6, 144.0),
    }
    got = {k: linear_model(*k) for k in expected}
    bad = {k: got[k] for k in expected if got[k] != expected[k]}
    report(2, not bad, f"cells={len(expected)} mismatched={bad}")
    assert not bad


# -- 3. volume oracle ----------------------------------------------------------------

def _brute_volume(areas, locs, mode):
    pairs = sorted(zip(locs, areas))
    total = 0.0
    for (l0, a0), (l1, a1) in zip(pairs, pairs[1:]):
        h = abs(l1 - l0)
        if mode == "am":
            total += (a0 + a1) * h / 2
        else:
            total += (a0 + a1 + math.sqrt(a0 * a1)) * h / 3
    return total


def test_criterion_03_volume_oracle(report):
    rng = np.random.default_rng(3)
    worst, am_ge_tc = 0.0, True
    for _ in range(50):
        n = int(rng.integers(3, 15))
        spacing = float(rng.uniform(0.6, 2.0))
        size = 64
        masks = [disc((size, size), (32, 32), float(rng.uniform(0, 30))) for _ in range(n)]
        # tilted slice plane; normal = row x col cosine
        t = rng.uniform(0, 2 * math.pi)
        iop = (math.cos(t), math.sin(t), 0.0, 0.0, 0.0, 1.0)
        normal = (math.sin(t) * 1.0, -math.cos(t) * 1.0, 0.0)
        offsets = np.cumsum(rng.uniform(2, 12, n))[rng.permutation(n)]
        ipps = [(o * normal[0] + 5.0, o * normal[1] - 3.0, float(rng.uniform(-50, 50))) for o in offsets]
        areas = [slice_area(m, spacing) for m in masks]
        locs = [slice_location(p, iop) for p in ipps]
        ref_areas = [float(sum(int(v) for v in m.ravel())) * spacing * spacing for m in masks]
        ref_locs = [sum(a * b for a, b in zip(p, normal)) for p in ipps]
        vols = {}
        for mode in ("am", "tc"):
            ours = integrate(areas, locs, mode)
            ref = _brute_volume(ref_areas, ref_locs, mode)
            worst = max(worst, abs(ours - ref) / ref if ref else abs(ours))
            vols[mode] = ours
        am_ge_tc &= vols["am"] >= vols["tc"]
    ok = worst <= 1e-12 and am_ge_tc
    report(3, ok, f"stacks=50 worst_rel_err={worst:.2e} am>=tc={am_ge_tc}")
    assert worst <= 1e-12
    assert am_ge_tc


# -- 4. analytic phantom -------------------------------------------------------------

def test_criterion_04_phantom(report):
    t0 = time.perf_counter()
    rec = lv_record(n_slices=10, n_frames=20, size=128, slice_gap=10.0, pixel_spacing=1.0,
                    r_ed=25.0, r_es=17.0)
    res = patient_volumes(rec.masks, rec.meta)
    truth = solid_volume_ml(25.0, 100.0)
    rel = abs(res.edv_ml - truth) / truth
    report(4, rel <= 0.05, f"EDV={res.edv_ml:.2f}ml analytic={truth:.2f}ml rel_err={rel:.3%} "
                           f"time={time.perf_counter() - t0:.1f}s")
    assert rel <= 0.05


# -- 5. toy training -----------------------------------------------------------------

def test_criterion_05_toy_training(report):
    t0 = time.perf_counter()
    best, final = [], []
    for seed in range(10):
        x, y = disc_dataset(200, 64, seed=seed)
        model = SegModel.build(UNetConfig(64, 8, 23, seed=seed))
        hyper = TrainHyper(loss="logdice", learning_rate=1e-3, batch_size=4, epochs=20)
        _, hist = train(model, (x[:160], y[:160]), (x[160:], y[160:]), hyper, seed=seed)
        best.append(max(h["val_dsc"] for h in hist))
        final.append(hist[-1]["val_dsc"])
    elapsed = time.perf_counter() - t0
    hits = sum(b >= 0.90 for b in best)
    ok = hits >= 9 and elapsed < 15 * 60
    report(5, ok, f"seeds_reaching_0.90={hits}/10 best={[round(b, 3) for b in best]} "
                  f"final={[round(f, 3) for f in final]} time={elapsed:.0f}s")
    assert hits >= 9
    assert elapsed < 15 * 60


# -- 6. gradient checks --------------------------------------------------------------

def test_criterion_06_gradients(report):
    rng = np.random.default_rng(6)
    worst = {}
    for name in LOSSES:
        w = 0.0
        for _ in range(20):
            t = (rng.random((8, 8)) > 0.5).astype(float)
            p = rng.uniform(0.02, 0.98, (8, 8))
            g = loss_grad(name, t, p)
            h = 1e-6
            fd = np.empty_like(p)
            for idx in np.ndindex(p.shape):
                up, dn = p.copy(), p.copy()
                up[idx] += h
                dn[idx] -= h
                fd[idx] = (loss_value(name, t, up) - loss_value(name, t, dn)) / (2 * h)
            w = max(w, float(np.abs(g - fd).max() / np.abs(fd).max()))
        worst[name] = w
    ok = all(v <= 1e-4 for v in worst.values())
    report(6, ok, "worst_rel_err " + " ".join(f"{k}={v:.1e}" for k, v in worst.items()))
    assert ok


# -- 7. ROI detection ----------------------------------------------------------------

def test_criterion_07_roi(report):
    rng = np.random.default_rng(7)
    hits, size = 0, 160
    for _ in range(30):
        r = float(rng.uniform(15, 64))
        cy, cx = rng.uniform(r + 2, size - r - 3, 2)
        top = hough_circles(ring((size, size), (cy, cx), r))[0]
        hits += (abs(top.center[0] - cy) <= 2 and abs(top.center[1] - cx) <= 2
                 and abs(top.radius - r) <= 2)
    worst = 0.0
    for a, T in ((1.0, 8), (7.25, 20), (300.0, 31)):
        t = np.arange(T)[:, None, None]
        series = a * np.cos(2 * np.pi * t / T) * np.ones((1, 3, 3)) + 40.0
        worst = max(worst, float(np.abs(first_harmonic_map(series) - a * T / 2).max()))
    ok = hits >= 28 and worst <= 1e-9
    report(7, ok, f"rings_recovered={hits}/30 harmonic_abs_err={worst:.1e}")
    assert hits >= 28
    assert worst <= 1e-9


# -- 8. post-processing --------------------------------------------------------------

def _component_at(mask, r, c):
    """8-connected flood fill from (r, c); blank if that pixel is background."""
    out = np.zeros_like(mask)
    if not mask[r, c]:
        return out
    todo = deque([(r, c)])
    out[r, c] = 1
    while todo:
        y, x = todo.popleft()
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                yy, xx = y + dy, x + dx
                if 0 <= yy < mask.shape[0] and 0 <= xx < mask.shape[1] and mask[yy, xx] and not out[yy, xx]:
                    out[yy, xx] = 1
                    todo.append((yy, xx))
    return out


def test_criterion_08_postproc(report):
    rng = np.random.default_rng(8)
    size, kept_ok, blank_ok, n_blank, total = 64, 0, 0, 0, 0
    for _ in range(20):                      # 20 records of 5 masks
        center = rng.uniform(24, 40, 2)
        record, lv_present = [], []
        for k in range(5):
            m = np.zeros((size, size), np.uint8)
            has_lv = k != 4 or rng.random() < 0.5
            if has_lv:
                m |= disc((size, size), center, float(rng.uniform(6, 10)))
            for _ in range(int(rng.integers(1, 4))):
                # spurious blobs well clear of the LV disc
                while True:
                    p = rng.uniform(4, size - 5, 2)
                    if np.hypot(*(p - center)) > 18:
                        break
                m |= disc((size, size), p, float(rng.uniform(1.5, 3)))
            record.append(m)
            lv_present.append(has_lv)
        c = lv_center(np.stack(record))
        r0, c0 = int(math.floor(c[0] + 0.5)), int(math.floor(c[1] + 0.5))
        for m, has_lv in zip(record, lv_present):
            total += 1
            out = filter_by_center(m, c)
            expect = _component_at(m, r0, c0)
            if m[r0, c0]:
                kept_ok += np.array_equal(out, expect) and bool(out[r0, c0])
            else:
                n_blank += 1
                blank_ok += not out.any()
    ok = kept_ok + blank_ok == total
    report(8, ok, f"masks={total} kept_correct={kept_ok} blank_correct={blank_ok}/{n_blank}")
    assert total == 100
    assert ok


# -- 9. parser round trips -----------------------------------------------------------

def test_criterion_09_round_trips(report, tmp_path):
    import struct
    checks = {}
    rows, cols = 6, 5
    blobs, truth = [], np.zeros((2, 3, rows, cols), np.uint16)
    rng = np.random.default_rng(9)
    for s in range(2):
        for f in range(3):
            px = rng.integers(0, 65535, (rows, cols)).astype("<u2")
            truth[s, f] = px
            ipp = f"{-12.5 - 8 * s}\\3\\40".encode()
            ipp += b" " * (len(ipp) % 2)
            blobs.append(_craft([
                (0x0020, 0x0013, "IS", str(f + 1).encode().ljust(2)),
                (0x0020, 0x0032, "DS", ipp),
                (0x0020, 0x0037, "DS", b"0\\1\\0\\0\\0\\-1"),
                (0x0028, 0x0010, "US", struct.pack("<H", rows)),
                (0x0028, 0x0011, "US", struct.pack("<H", cols)),
                (0x0028, 0x0030, "DS", b"1.25\\0.75"),
                (0x7FE0, 0x0010, "OW", px.tobytes()),
            ]))
    meta, img = parse_dicom(blobs[4])
    checks["rows"] = meta.rows == rows
    checks["cols"] = meta.cols == cols
    checks["spacing"] = (meta.pixel_spacing_row, meta.pixel_spacing_col) == (1.25, 0.75)
    checks["ipp"] = meta.ipp == (-20.5, 3.0, 40.0)
    checks["iop"] = meta.iop == (0.0, 1.0, 0.0, 0.0, 0.0, -1.0)
    checks["pixels"] = img.tobytes() == truth[1, 1].tobytes()
    stack = stack_from_dicom_files(blobs)
    store_study(stack, tmp_path / "dcm")
    back = load_study(tmp_path / "dcm")
    checks["dicom_store"] = back.data.tobytes() == truth.tobytes() and back.meta == stack.meta

    vol = rng.integers(0, 30000, size=(8, 7, 3, 4)).astype(np.int16)  # x, y, z, t
    nstack = stack_from_nifti(_craft_nifti(vol), "n1")
    expect = np.transpose(vol, (2, 3, 1, 0))
    store_study(nstack, tmp_path / "nii")
    nback = load_study(tmp_path / "nii")
    checks["nifti_axes"] = np.array_equal(nstack.data, expect)
    checks["nifti_store"] = (nback.data.tobytes() == nstack.data.tobytes()
                             and nback.data.dtype == nstack.data.dtype and nback.meta == nstack.meta)
    ok = all(checks.values())
    report(9, ok, " ".join(f"{k}={'ok' if v else 'BAD'}" for k, v in checks.items()))
    assert ok


# -- 10. end-to-end phantom evaluation -----------------------------------------------

def _hand_class(ef):
    if ef < 0.4:
        return 0
    if ef < 0.5:
        return 1
    return 2


def test_criterion_10_end_to_end(report, tmp_path, capsys):
    assert main(["ingest", "--phantom", "8", "--seed", "10", "--out", str(tmp_path / "in")]) == 0
    ing = json.loads(capsys.readouterr().out)
    assert main(["pipeline", "--studies", ing["studies"], "--oracle-masks", ing["studies"],
                 "--method", "baseline", "--crop", "128", "--truth", f"{ing['run']}/truth.csv",
                 "--out", str(tmp_path / "run")]) == 0
    res = json.loads(capsys.readouterr().out)
    with open(f"{ing['run']}/truth.csv", newline="") as fh:
        truth = {r["patient_id"]: r for r in csv.DictReader(fh)}
    with open(res["volumes"], newline="") as fh:
        pred = {r["patient_id"]: r for r in csv.DictReader(fh)}
    ids = sorted(truth)
    err = {}
    for q in ("esv_ml", "edv_ml"):
        t = [float(truth[p][q]) for p in ids]
        d = [float(pred[p][q]) - float(truth[p][q]) for p in ids]
        err[q] = math.sqrt(sum(v * v for v in d) / len(d)) / (sum(t) / len(t))
    counts = [[0] * 3 for _ in range(3)]
    for p in ids:
        ef_t = (float(truth[p]["edv_ml"]) - float(truth[p]["esv_ml"])) / float(truth[p]["edv_ml"])
        ef_p = (float(pred[p]["edv_ml"]) - float(pred[p]["esv_ml"])) / float(pred[p]["edv_ml"])
        counts[_hand_class(ef_t)][_hand_class(ef_p)] += 1
    hand_acc = sum(counts[k][k] for k in range(3)) / len(ids)
    summary = json.load(open(f"{res['report']}/summary.json"))
    acc_ok = summary["confusion_matrix"] == counts and summary["accuracy"] == hand_acc
    ok = err["esv_ml"] < 0.02 and err["edv_ml"] < 0.02 and acc_ok
    report(10, ok, f"patients={len(ids)} esv_rmse={err['esv_ml']:.2%} edv_rmse={err['edv_ml']:.2%} "
                   f"of mean; accuracy={summary['accuracy']} hand={hand_acc} matrix_match={acc_ok}")
    assert err["esv_ml"] < 0.02 and err["edv_ml"] < 0.02
    assert acc_ok
