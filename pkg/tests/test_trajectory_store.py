import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from collab_act.errors import ChecksumMismatch, EmptyOverlap, FormatError, FormatVersionMismatch, GapExceeded, Io, LengthMismatch
from collab_act.trajectory_store import (
    RawStream,
    SyncConfig,
    Trajectory,
    attach_labels,
    generate_synthetic_dataset,
    load_dataset,
    long_horizon_demo,
    nearest_indices,
    save_dataset,
    synchronize,
    time_grid,
)
from collab_act.trajectory_store.container import decode_trajectory, encode_trajectory
from collab_act.trajectory_store.synthetic import COLLABORATORS, SYNERGY_BASIS, mean_flexion


def brute_nearest(ts, grid):
    # exhaustive search; ties resolve to the earlier sample
    out = []
    for g in grid:
        best = 0
        for j, t in enumerate(ts):
            if abs(t - g) < abs(ts[best] - g):
                best = j
        out.append(best)
    return np.array(out)


def quat_stream(name, ts, rng):
    q = rng.normal(size=(len(ts), 4))
    return RawStream(name, ts, (q / np.linalg.norm(q, axis=1, keepdims=True)).astype(np.float32))


def test_identity_resampling(rng):
    ts = np.arange(21) / 10.0
    pos = rng.normal(size=(21, 3)).astype(np.float32)
    joints = rng.normal(size=(21, 16)).astype(np.float32)
    traj = synchronize([RawStream("ee_position", ts, pos), RawStream("hand_joints", ts, joints)])
    assert len(traj) == 21
    np.testing.assert_array_equal(traj.ee_position, pos)
    np.testing.assert_array_equal(traj.hand_joints, joints)


def test_mixed_rates_match_exhaustive_search(rng):
    t30 = np.arange(61) / 30.0
    t15 = np.arange(31) / 15.0
    s30 = RawStream("ee_position", t30, rng.normal(size=(61, 3)).astype(np.float32))
    s15 = RawStream("hand_joints", t15, rng.normal(size=(31, 16)).astype(np.float32))
    traj = synchronize([s30, s15])
    assert len(traj) == 21
    np.testing.assert_allclose(traj.t, np.arange(21) / 10.0, atol=1e-12)
    np.testing.assert_array_equal(traj.ee_position, s30.samples[brute_nearest(t30, traj.t)])
    np.testing.assert_array_equal(traj.hand_joints, s15.samples[brute_nearest(t15, traj.t)])


def test_disjoint_windows():
    a = RawStream("ee_position", np.linspace(0, 1, 11), np.zeros((11, 3), np.float32))
    b = RawStream("hand_joints", np.linspace(2, 3, 11), np.zeros((11, 16), np.float32))
    with pytest.raises(EmptyOverlap):
        synchronize([a, b])


def test_gap_exceeded_names_stream():
    ts = np.concatenate([np.arange(0, 1.0, 0.05), np.arange(1.5, 2.01, 0.05)])
    s = RawStream("hand_joints", ts, np.zeros((len(ts), 16), np.float32))
    with pytest.raises(GapExceeded) as info:
        synchronize([s])
    assert info.value.stream == "hand_joints"
    assert info.value.gap > 0.15


def test_quaternions_are_canonicalized(rng):
    ts = np.arange(11) / 10.0
    traj = synchronize([quat_stream("ee_quat", ts, rng)])
    assert np.all(traj.ee_quat[:, 0] >= 0)
    np.testing.assert_allclose(np.linalg.norm(traj.ee_quat, axis=1), 1.0, atol=1e-6)


def test_unknown_stream_rejected():
    with pytest.raises(ValueError):
        synchronize([RawStream("lidar", np.arange(3.0), np.zeros((3, 2), np.float32))])


@st.composite
def timestamps(draw):
    n = draw(st.integers(2, 40))
    steps = draw(st.lists(st.floats(0.01, 0.14), min_size=n - 1, max_size=n - 1))
    start = draw(st.floats(0.0, 5.0))
    return start + np.concatenate([[0.0], np.cumsum(steps)])


@given(timestamps(), timestamps())
def test_sync_grid_and_nearest_optimality(ta, tb):
    a = RawStream("ee_position", ta, np.arange(len(ta) * 3, dtype=np.float32).reshape(-1, 3))
    b = RawStream("hand_joints", tb, np.arange(len(tb) * 16, dtype=np.float32).reshape(-1, 16))
    try:
        grid = time_grid([a, b], 10.0)
    except EmptyOverlap:
        return
    if len(grid) > 1:
        assert np.max(np.abs(np.diff(grid) - 0.1)) <= 1e-9
    for ts in (ta, tb):
        idx = nearest_indices(ts, grid)
        chosen = np.abs(ts[idx] - grid)
        best = np.min(np.abs(ts[None, :] - grid[:, None]), axis=1)
        assert np.all(chosen <= best)
    traj = synchronize([a, b], SyncConfig(max_gap_s=1.0))
    np.testing.assert_array_equal(traj.ee_position, a.samples[nearest_indices(ta, traj.t)])


def test_attach_labels(small_dataset):
    traj = small_dataset[0]
    n, v = len(traj), traj.n_views
    cue = np.full((n, v, 21, 2), 0.5)
    out = attach_labels(traj, cue, 0, np.zeros(n, int))
    assert np.all(out.target_index == 0)
    np.testing.assert_array_equal(out.cue_keypoints, cue.astype(np.float32))
    np.testing.assert_array_equal(out.ee_position, traj.ee_position)
    with pytest.raises(LengthMismatch):
        attach_labels(traj, cue, 0, np.zeros(n - 1, int))
    with pytest.raises(LengthMismatch):
        attach_labels(traj, cue[:-1], 0, np.zeros(n, int))
    with pytest.raises(LengthMismatch):
        attach_labels(traj, cue, np.zeros(n + 2, int), np.zeros(n, int))


def test_trajectory_rejects_irregular_grid(small_dataset):
    traj = small_dataset[0]
    t = traj.t.copy()
    t[3] += 0.01
    with pytest.raises(ValueError):
        traj.replace(t=t)


# ---------------------------------------------------------------- synthetic data

def test_synthetic_determinism():
    a = generate_synthetic_dataset(3, 4)
    b = generate_synthetic_dataset(3, 4)
    assert [encode_trajectory(t) for t in a] == [encode_trajectory(t) for t in b]
    c = generate_synthetic_dataset(4, 4)
    assert encode_trajectory(a[0]) != encode_trajectory(c[0])


def test_synthetic_counts():
    data = generate_synthetic_dataset(0, 60)
    picks = [t for t in data if t.task_id == "pick"]
    assert len(picks) == 60 and len(data) == 120
    targets = [int(t.target_index[0]) for t in picks]
    assert targets.count(0) == 30 and targets.count(1) == 30
    assert all(np.all(t.target_index == -1) for t in data if t.task_id == "pass")
    assert all(0.0 <= t.cue_keypoints.min() and t.cue_keypoints.max() <= 1.0 for t in data)


def test_synthetic_hand_rank(small_dataset):
    # eigendecomposition oracle on the sample covariance
    H = np.vstack([t.hand_joints for t in small_dataset]).astype(np.float64)
    ev = np.sort(np.linalg.eigvalsh(np.cov(H.T)))[::-1]
    assert ev[:4].sum() / ev.sum() >= 0.99
    assert SYNERGY_BASIS.shape == (16, 4) and np.linalg.matrix_rank(SYNERGY_BASIS) == 4


def test_pick_lifts_and_closes(small_dataset):
    for t in small_dataset:
        if t.task_id == "pick":
            assert t.ee_position[-1, 2] > 0.30
            assert mean_flexion(t.hand_joints[-1]) > 0.9
        else:
            assert mean_flexion(t.hand_joints[-1]) < 0.45


def test_collaborator_b_is_affine_perturbation():
    a, b = COLLABORATORS["A"], COLLABORATORS["B"]
    assert (a.scale, a.offset) == (1.0, 0.0)
    assert (b.scale, b.offset) == (1.15, 0.08)


def test_long_horizon_demo_is_continuous():
    pick, passing = long_horizon_demo(5, target=1)
    np.testing.assert_allclose(passing.ee_position[0], pick.action_raw[-1, :3], atol=1e-6)
    assert pick.task_id == "pick" and passing.task_id == "pass"


# ---------------------------------------------------------------- container

def test_container_roundtrip(tmp_path, small_dataset):
    save_dataset(small_dataset, tmp_path / "d")
    loaded = load_dataset(tmp_path / "d")
    assert loaded == small_dataset
    for a, b in zip(loaded, small_dataset):
        assert encode_trajectory(a) == encode_trajectory(b)
        assert (a.task_id, a.collaborator_id, a.rate_hz) == (b.task_id, b.collaborator_id, b.rate_hz)


def test_manifest_contents(tmp_path, small_dataset):
    save_dataset(small_dataset, tmp_path, meta={"seed": 0})
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["format_version"] == 1 and manifest["rate_hz"] == 10.0
    assert manifest["meta"] == {"seed": 0}
    assert [e["n_frames"] for e in manifest["trajectories"]] == [len(t) for t in small_dataset]


def test_binary_layout(small_dataset):
    traj = small_dataset[0]
    blob = encode_trajectory(traj)
    assert blob[:4] == b"CACT"
    assert int.from_bytes(blob[4:8], "little") == 1
    assert int.from_bytes(blob[8:12], "little") == len(traj)
    per_frame = 8 + 4 * (3 + 4 + 16 + traj.n_views * 42) + 1 + 1 + 4 * 23
    assert len(blob) == 12 + len(traj) * per_frame + 4
    np.testing.assert_array_equal(np.frombuffer(blob, "<f8", len(traj), 12), traj.t)


def decode(blob, traj):
    return decode_trajectory(blob, traj.n_views, traj.rate_hz, traj.task_id, traj.collaborator_id)


def test_truncated_file(small_dataset):
    traj = small_dataset[0]
    blob = encode_trajectory(traj)
    with pytest.raises(ChecksumMismatch):
        decode(blob[:-10], traj)
    flipped = bytearray(blob)
    flipped[100] ^= 0xFF
    with pytest.raises(ChecksumMismatch):
        decode(bytes(flipped), traj)


def test_version_mismatch(tmp_path, small_dataset):
    traj = small_dataset[0]
    blob = bytearray(encode_trajectory(traj))
    blob[4:8] = (99).to_bytes(4, "little")
    with pytest.raises(FormatVersionMismatch):
        decode(bytes(blob), traj)
    with pytest.raises(FormatError):
        decode(b"XXXX" + bytes(blob[4:]), traj)

    save_dataset(small_dataset[:1], tmp_path)
    m = json.loads((tmp_path / "manifest.json").read_text())
    m["format_version"] = 99
    (tmp_path / "manifest.json").write_text(json.dumps(m))
    with pytest.raises(FormatVersionMismatch):
        load_dataset(tmp_path)


def test_missing_manifest(tmp_path):
    with pytest.raises(Io):
        load_dataset(tmp_path)
