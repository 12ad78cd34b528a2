import itertools
import math

import numpy as np
import pytest
from sklearn.base import clone

from conftest import square_sequence
from mlai.detection import BoundingBox, Detection, iou
from mlai.errors import EmptyIntersection, TargetLost
from mlai.imaging import Frame, to_gray
from mlai.tracking import (
    CentroidTracker,
    DcfHyper,
    DcfTracker,
    TrackState,
    _features,
    _patch,
    assign_ids,
    dcf_init,
    dcf_update,
    ema_update,
    gaussian_label,
)


def det(x, y, s=10):
    return Detection(BoundingBox(x, y, s, s), 1.0)


# -- centroid assignment ---------------------------------------------------------


def test_fresh_ids_in_detection_order():
    st, pairs = assign_ids(TrackState(), [det(10, 10), det(50, 50)], 20, 3)
    assert [i for i, _ in pairs] == [0, 1]
    assert st.next_id == 2


def test_id_persists():
    st, _ = assign_ids(TrackState(), [det(10, 10)], 20, 3)
    st, pairs = assign_ids(st, [det(15, 12)], 20, 3)
    assert pairs[0][0] == 0 and st.tracks[0].centroid == (15, 12)


def test_far_detection_gets_new_id():
    st, _ = assign_ids(TrackState(), [det(10, 10)], 20, 3)
    st, pairs = assign_ids(st, [det(100, 100)], 20, 3)
    assert pairs[0][0] == 1
    assert st.tracks[0].missed == 1


def test_dropped_after_max_missed_and_never_reused():
    st, _ = assign_ids(TrackState(), [det(10, 10)], 20, 2)
    for _ in range(2):
        st, _ = assign_ids(st, [], 20, 2)
    assert 0 in st.tracks and st.tracks[0].missed == 2
    st, _ = assign_ids(st, [], 20, 2)
    assert 0 not in st.tracks
    st, pairs = assign_ids(st, [det(10, 10)], 20, 2)
    assert pairs[0][0] == 1


def test_crossed_distances():
    st, _ = assign_ids(TrackState(), [det(0, 0), det(10, 0)], 100, 3)
    # detection order reversed, each close to the other track
    st, pairs = assign_ids(st, [det(11, 0), det(1, 0)], 100, 3)
    assert [i for i, _ in pairs] == [1, 0]


def test_greedy_can_be_suboptimal():
    # tracks at 0 and 3; detections at 2 and 5. greedy takes the 1 px pair first.
    st, _ = assign_ids(TrackState(), [det(0, 0), det(3, 0)], 10, 3)
    _, g = assign_ids(st, [det(2, 0), det(5, 0)], 10, 3, method="greedy")
    _, o = assign_ids(st, [det(2, 0), det(5, 0)], 10, 3)
    assert [i for i, _ in g] == [1, 0]  # total 1 + 5
    assert [i for i, _ in o] == [0, 1]  # total 2 + 2


def _brute(dist, max_dist):
    """Largest admissible matching, then minimal summed distance."""
    nt, nd = dist.shape
    best = (0, 0.0, ())
    for k in range(min(nt, nd), 0, -1):
        for ts in itertools.combinations(range(nt), k):
            for ds in itertools.permutations(range(nd), k):
                if all(dist[t, d] <= max_dist for t, d in zip(ts, ds)):
                    cost = sum(dist[t, d] for t, d in zip(ts, ds))
                    if k > best[0] or (k == best[0] and cost < best[1]):
                        best = (k, cost, tuple(zip(ts, ds)))
        if best[0]:
            break
    return best


def test_matches_brute_force_oracle():
    rng = np.random.default_rng(17)
    for _ in range(600):
        nt, nd = (int(v) for v in rng.integers(1, 5, 2))
        tpos = rng.uniform(0, 60, (nt, 2))
        dpos = rng.uniform(0, 60, (nd, 2))
        st, _ = assign_ids(TrackState(), [det(*p) for p in tpos], 1e9, 5)
        max_dist = float(rng.uniform(10, 60))
        st2, pairs = assign_ids(st, [det(*p) for p in dpos], max_dist, 5)
        dist = np.linalg.norm(tpos[:, None] - dpos[None], axis=-1)
        k, cost, _ = _brute(dist, max_dist)
        matched = [(tid, j) for j, (tid, _) in enumerate(pairs) if tid < nt]
        assert len(matched) == k
        assert sum(dist[t, j] for t, j in matched) == pytest.approx(cost, abs=1e-9)
        # one-to-one
        assert len({t for t, _ in matched}) == len(matched)


def test_ids_strictly_increase():
    rng = np.random.default_rng(2)
    st, seen = TrackState(), set()
    for _ in range(50):
        dets = [det(*p) for p in rng.uniform(0, 200, (int(rng.integers(0, 5)), 2))]
        prev_next = st.next_id
        st, pairs = assign_ids(st, dets, 15, 1)
        fresh = [i for i, _ in pairs if i >= prev_next]
        assert fresh == list(range(prev_next, st.next_id))
        assert len({i for i, _ in pairs}) == len(pairs)
        assert not (set(fresh) & seen)
        seen |= {i for i, _ in pairs}


def test_bad_inputs():
    with pytest.raises(ValueError):
        assign_ids(TrackState(), [], 0, 1)
    with pytest.raises(ValueError):
        assign_ids(TrackState(), [], 1, 1, method="hungarian-ish")


def test_centroid_estimator():
    ct = CentroidTracker(max_dist=20).fit()
    assert [i for i, _ in ct.update([det(0, 0)])] == [0]
    assert [i for i, _ in ct.update([det(3, 3)])] == [0]
    assert clone(ct).get_params()["max_dist"] == 20


# -- gaussian label ----------------------------------------------------------------


def test_label_peak_and_symmetry():
    for size in (31, 32):
        g = gaussian_label(size, 0.1, (32, 64))
        assert g.max() == pytest.approx(1.0)
        np.testing.assert_allclose(g, g[::-1, ::-1], atol=1e-15)
        np.testing.assert_allclose(g, g.T, atol=1e-15)
    assert gaussian_label(31, 0.1, (32, 64))[15, 15] == 1.0


def test_label_sigma():
    g = gaussian_label(65, 0.1, (32, 64))
    sigma = math.sqrt(2048) * 0.1
    assert sigma == pytest.approx(4.5255, abs=1e-4)
    assert g[32, 32 + 3] == pytest.approx(math.exp(-9 / (2 * sigma**2)))


def test_label_mass_monotone():
    masses = [gaussian_label(64, f, (32, 32)).sum() for f in (0.05, 0.1, 0.2)]
    assert masses[0] < masses[1] < masses[2]


# -- correlation filter ---------------------------------------------------------------


@pytest.fixture
def seq():
    return square_sequence()


def test_model_shapes(seq):
    frames, boxes = seq
    m = dcf_init(frames[0], boxes[0])
    assert m.filter_numerator.shape == (1, 64, 64)
    assert m.filter_denominator.shape == (64, 64)


def test_ridge_identity(seq):
    frames, boxes = seq
    m = dcf_init(frames[0], boxes[0])
    b = boxes[0]
    feats = _features(_patch(to_gray(frames[0]), b.center, (b.b_w * 2, b.b_h * 2), 64), m.window)
    resp = m.response(feats)
    label = np.fft.ifft2(m.label_fft).real
    np.testing.assert_allclose(resp.real, label, atol=1e-6)
    assert np.abs(resp.imag).max() < 1e-9


def test_self_response_peak_at_centre(seq):
    frames, boxes = seq
    m = dcf_init(frames[0], boxes[0])
    b = boxes[0]
    resp = m.response(_features(_patch(to_gray(frames[0]), b.center, (b.b_w * 2, b.b_h * 2), 64), m.window)).real
    r, c = np.unravel_index(np.argmax(resp), resp.shape)
    assert abs(r - 31.5) <= 0.5 and abs(c - 31.5) <= 0.5


def test_static_target_drift():
    frames, boxes = square_sequence(n=11, step=0.0)
    m = dcf_init(frames[0], boxes[0])
    for f in frames[1:]:
        box, m = dcf_update(m, f)
    assert math.dist(box.center, boxes[0].center) <= 1.0


def test_translating_target_iou(seq):
    frames, boxes = seq
    m = dcf_init(frames[0], boxes[0])
    scores = []
    for f, b in zip(frames[1:], boxes[1:]):
        box, m = dcf_update(m, f)
        scores.append(iou(box, b))
    assert np.mean(scores) >= 0.5


def test_noise_triggers_target_lost(seq):
    frames, boxes = seq
    m = dcf_init(frames[0], boxes[0])
    rng = np.random.default_rng(99)
    with pytest.raises(TargetLost):
        for _ in range(5):
            noise = Frame.from_array(rng.integers(0, 256, (240, 320, 3), dtype=np.uint8))
            _, m = dcf_update(m, noise)


def test_target_lost_leaves_model(seq):
    frames, boxes = seq
    m = dcf_init(frames[0], boxes[0])
    flat = Frame.from_array(np.full((240, 320, 3), 90, np.uint8))
    num = m.filter_numerator.copy()
    with pytest.raises(TargetLost):
        dcf_update(m, flat)
    assert np.array_equal(m.filter_numerator, num)


def test_ema_boundaries(seq):
    frames, boxes = seq
    m = dcf_init(frames[0], boxes[0])
    other = dcf_init(frames[5], boxes[5])
    same = ema_update(m, other.filter_numerator, other.filter_denominator, rate=0.0)
    assert np.array_equal(same.filter_numerator, m.filter_numerator)
    repl = ema_update(m, other.filter_numerator, other.filter_denominator, rate=1.0)
    assert np.array_equal(repl.filter_numerator, other.filter_numerator)
    assert np.array_equal(repl.filter_denominator, other.filter_denominator)


def test_init_outside_frame(seq):
    frames, _ = seq
    with pytest.raises(EmptyIntersection):
        dcf_init(frames[0], BoundingBox(-50, -50, 10, 10))


def test_hyper_validation():
    with pytest.raises(ValueError):
        DcfHyper(lambda_=0)
    with pytest.raises(ValueError):
        DcfHyper(online_lr=0)
    with pytest.raises(ValueError):
        DcfHyper(scales=(0.9, 1.1))
    with pytest.raises(ValueError):
        DcfHyper(template_size=48)


def test_dcf_estimator(seq):
    frames, boxes = seq
    tr = DcfTracker().fit(frames[0], boxes[0])
    box = tr.update(frames[1])
    assert iou(box, boxes[1]) > 0.5
    assert clone(tr).get_params()["online_lr"] == 0.008
