"""Synthetic pick/pass demonstrations at desk scale.

World layout (meters, robot base frame): table plane at z = 0, two cubes in
front of the robot (not mirror-symmetric about the home pose), a collaborator
hand-over zone further out. Pick demonstrations grasp the cube, then lift it
while carrying it back over the home pose. Commands carry operator sway (a
correlated drift) plus white jitter. The robot tracks each teleoperation
command one period later, so ``state[i + 1] == command[i]``.

Hand joints follow a fixed 16x4 synergy basis: ``joints = mean + B @ z + noise``.
Latent 0 is the grasp synergy (uniform flexion of all joints); latents 1..3 are
joint-pattern variations with zero mean flexion.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sync import canonical_quat
from .types import (
    DEFAULT_N_VIEWS,
    N_JOINTS,
    N_KEYPOINTS,
    PASS_PROMPT,
    PICK_PROMPT,
    UNLABELED,
    Trajectory,
)

RATE_HZ = 10.0
SIGMA_JOINT = 0.01
SIGMA_TELEOP = 0.0015
SWAY_STD = 0.01  # operator hand sway, Ornstein-Uhlenbeck stationary std (m)
SWAY_TAU = 0.3  # sway correlation time (s)
SIGMA_CUE = 0.004
Z_LIFT = 0.40
GRASP_Z = 0.04
HOME = np.array([0.35, 0.0, 0.22])
CUBES = np.array([[0.50, 0.10, 0.025], [0.50, -0.20, 0.025]])
HANDOVER = np.array([0.70, 0.0, 0.36])
TILT = 0.3  # fixed pitch of the end effector, radians

SYNERGY_SCALES = np.array([2.0, 1.2, 1.0, 0.8])
JOINT_MEAN = np.full(N_JOINTS, 0.7)
GRASP_OPEN, GRASP_CLOSED = -1.0, 1.0


def _synergy_basis() -> np.ndarray:
    # column 0 is uniform flexion; the others are orthogonal to it
    rng = np.random.default_rng(20240917)
    m = np.column_stack([np.ones(N_JOINTS), rng.normal(size=(N_JOINTS, 3))])
    u, _ = np.linalg.qr(m)
    u[:, 0] = np.abs(u[:, 0])
    return u * SYNERGY_SCALES


SYNERGY_BASIS = _synergy_basis()


def mean_flexion(joints) -> np.ndarray:
    """Mean joint flexion, radians; drops from ~1.2 (closed) to ~0.2 (open)."""
    return np.asarray(joints).mean(axis=-1)


@dataclass(frozen=True)
class Collaborator:
    """Keypoint template transform: scale about the wrist, then a shift in image coords."""

    name: str
    scale: float = 1.0
    offset: float = 0.0


COLLABORATORS = {
    "A": Collaborator("A"),
    "B": Collaborator("B", scale=1.15, offset=0.08),
}


def get_collaborator(c) -> Collaborator:
    if isinstance(c, Collaborator):
        return c
    try:
        return COLLABORATORS[c]
    except KeyError:
        raise ValueError(f"unknown collaborator {c!r}; known: {sorted(COLLABORATORS)}") from None


# ---------------------------------------------------------------- hand cues

def _hand_template(pointing: bool) -> np.ndarray:
    """21 landmarks (wrist, then 4 per finger thumb..pinky) in a wrist-centered frame, fingers along +y."""
    bases = np.array([[-0.035, 0.02], [-0.02, 0.055], [0.0, 0.06], [0.018, 0.055], [0.033, 0.045]])
    spread = np.array([-0.6, -0.12, 0.0, 0.12, 0.28])
    pts = [np.zeros(2)]
    for f in range(5):
        extended = (not pointing) or f == 1
        seg = 0.022 if extended else 0.009
        ang = spread[f] if extended else spread[f] + (0.0 if f else 0.6)
        d = np.array([np.sin(ang), np.cos(ang)])
        for j in range(4):
            pts.append(bases[f] + d * seg * j * (1.0 if extended else 0.6))
    return np.array(pts)


POINT_TEMPLATE = _hand_template(pointing=True)
OPEN_TEMPLATE = _hand_template(pointing=False)

# per view: wrist placement, pointing angle magnitude, mirror flag
VIEWS = (
    (np.array([0.42, 0.30]), 0.6, 1.0),
    (np.array([0.50, 0.36]), 0.9, -1.0),
)


def cue_jitter(rng):
    """Per-gesture pose variation: pointing-angle offset and wrist shift."""
    return rng.normal(0.0, 0.08), rng.normal(0.0, 0.02, size=2)


def cue_keypoints(
    rng: np.random.Generator,
    collaborator: Collaborator,
    gesture: str,
    target: int,
    n_frames: int,
    n_views: int = DEFAULT_N_VIEWS,
    jitter=None,
) -> np.ndarray:
    """(n_frames, n_views, 21, 2) keypoints for a 'point' (at cube `target`) or 'receive' gesture.

    Collaborator B: the same gesture drawn with a scaled template and shifted placement.
    ``jitter`` = (angle, xy offset) of the gesture; drawn from ``rng`` when omitted.
    """
    out = np.empty((n_frames, n_views, N_KEYPOINTS, 2))
    ang_jitter, pos_jitter = cue_jitter(rng) if jitter is None else jitter
    for v in range(n_views):
        wrist, mag, mirror = VIEWS[v % len(VIEWS)]
        if gesture == "point":
            template = POINT_TEMPLATE
            sign = 1.0 if target == 0 else -1.0
            ang = mirror * sign * mag + ang_jitter
        elif gesture == "receive":
            template = OPEN_TEMPLATE
            ang = ang_jitter
            wrist = wrist + np.array([0.1, 0.05])
        else:
            raise ValueError(f"unknown gesture {gesture!r}")
        c, s = np.cos(ang), np.sin(ang)
        rot = np.array([[c, s], [-s, c]])
        pts = collaborator.scale * (template @ rot.T) + wrist + pos_jitter + collaborator.offset
        out[:, v] = pts + rng.normal(0.0, SIGMA_CUE, size=(n_frames, N_KEYPOINTS, 2))
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------- motion

def _min_jerk(s):
    return s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


def _quat_yaw_tilt(yaw: np.ndarray) -> np.ndarray:
    # qz(yaw) * qy(TILT), (w, x, y, z)
    cz, sz = np.cos(yaw / 2), np.sin(yaw / 2)
    cy, sy = np.cos(TILT / 2), np.sin(TILT / 2)
    return np.stack([cz * cy, -sz * sy, cz * sy, sz * cy], axis=-1)


def _sample_path(waypoints, t: np.ndarray) -> dict:
    """Min-jerk blend between successive (duration, position, yaw, grasp) waypoints."""
    pos = np.empty((len(t), 3))
    yaw = np.empty(len(t))
    grasp = np.empty(len(t))
    starts = np.cumsum([0.0] + [w[0] for w in waypoints[1:]])
    for i, ti in enumerate(t):
        k = int(np.searchsorted(starts, ti, side="right")) - 1
        if k >= len(waypoints) - 1:
            _, p, y, g = waypoints[-1]
            pos[i], yaw[i], grasp[i] = p, y, g
            continue
        _, p0, y0, g0 = waypoints[k]
        dur, p1, y1, g1 = waypoints[k + 1]
        s = _min_jerk(np.clip((ti - starts[k]) / dur, 0.0, 1.0))
        pos[i] = p0 + s * (p1 - p0)
        yaw[i] = y0 + s * (y1 - y0)
        grasp[i] = g0 + s * (g1 - g0)
    return {"pos": pos, "yaw": yaw, "grasp": grasp, "duration": starts[-1]}


def _hand_style(rng):
    """Per-demonstration latent endpoints for the open and closed hand."""
    z_open = np.concatenate([[GRASP_OPEN + rng.normal(0, 0.1)], rng.normal(0, 1.0, 3)])
    z_closed = np.concatenate([[GRASP_CLOSED + rng.normal(0, 0.1)], rng.normal(0, 1.0, 3)])
    return z_open, z_closed


def _hand_joints(rng, style, grasp):
    z_open, z_closed = style
    z = z_open + grasp[:, None] * (z_closed - z_open)
    joints = JOINT_MEAN + z @ SYNERGY_BASIS.T
    return joints + rng.normal(0.0, SIGMA_JOINT, size=joints.shape)


def _pick_waypoints(rng, start_pos, target):
    cube = CUBES[target] + np.append(rng.normal(0, 0.015, 2), 0.0)
    yaw_cube = 0.5 * np.arctan2(cube[1] - start_pos[1], cube[0] - start_pos[0])
    above = cube + np.array([0.0, 0.0, 0.10])
    grasp_pos = np.array([cube[0], cube[1], GRASP_Z])
    carried = np.array([start_pos[0], start_pos[1], Z_LIFT]) + np.append(
        rng.normal(0, 0.02, 2), rng.uniform(0.0, 0.03)
    )
    return [
        (0.0, start_pos, 0.0, 0.0),
        (rng.uniform(2.0, 3.0), above, yaw_cube, 0.0),
        (rng.uniform(0.8, 1.2), grasp_pos, yaw_cube, 0.0),
        (rng.uniform(0.7, 1.0), grasp_pos, yaw_cube, 1.0),
        (rng.uniform(2.5, 3.5), carried, 0.0, 1.0),
        (0.5, carried, 0.0, 1.0),
    ]


def _pass_waypoints(rng, start_pos, start_yaw):
    zone = HANDOVER + rng.normal(0, 0.02, 3)
    return [
        (0.0, start_pos, start_yaw, 1.0),
        (rng.uniform(2.0, 3.0), zone, 0.0, 1.0),
        (rng.uniform(0.8, 1.2), zone, 0.0, 0.0),
        (0.5, zone, 0.0, 0.0),
    ]


def _sway(rng, n):
    a = np.exp(-1.0 / (RATE_HZ * SWAY_TAU))
    kicks = rng.normal(0.0, SWAY_STD, size=(n, 3))
    out = np.empty((n, 3))
    x = kicks[0]
    for i in range(n):
        x = a * x + np.sqrt(1.0 - a * a) * kicks[i] if i else x
        out[i] = x
    return out


def _render(rng, waypoints, style, task_id, target, collaborator, n_views):
    """Sample waypoints at the grid rate and assemble a trajectory."""
    dur = _sample_path(waypoints, np.array([0.0]))["duration"]
    n = int(np.floor(dur * RATE_HZ + 1e-9)) + 1
    t_cmd = np.arange(1, n + 1) / RATE_HZ  # command i targets grid point i + 1
    path = _sample_path(waypoints, t_cmd)
    cmd_pos = path["pos"] + _sway(rng, n) + rng.normal(0.0, SIGMA_TELEOP, size=(n, 3))
    cmd_quat = canonical_quat(_quat_yaw_tilt(path["yaw"] + rng.normal(0.0, 0.005, n)))
    cmd_joints = _hand_joints(rng, style, path["grasp"])

    first = _sample_path(waypoints, np.array([0.0]))
    pos0 = first["pos"]
    quat0 = canonical_quat(_quat_yaw_tilt(first["yaw"]))
    joints0 = _hand_joints(rng, style, first["grasp"])

    gesture = "point" if task_id == "pick" else "receive"
    cue = cue_keypoints(rng, collaborator, gesture, target, n, n_views)
    return Trajectory(
        t=np.arange(n) / RATE_HZ,
        ee_position=np.vstack([pos0, cmd_pos[:-1]]),
        ee_quat=np.vstack([quat0, cmd_quat[:-1]]),
        hand_joints=np.vstack([joints0, cmd_joints[:-1]]),
        cue_keypoints=cue,
        target_index=np.full(n, target),
        prompt_id=np.full(n, PICK_PROMPT if task_id == "pick" else PASS_PROMPT),
        action_raw=np.hstack([cmd_pos, cmd_quat, cmd_joints]),
        rate_hz=RATE_HZ,
        task_id=task_id,
        collaborator_id=collaborator.name,
    )


def synthetic_pick(rng, target, collaborator="A", n_views=DEFAULT_N_VIEWS, style=None, start_pos=None):
    collaborator = get_collaborator(collaborator)
    if start_pos is None:
        start_pos = HOME + rng.normal(0, [0.03, 0.03, 0.015])
    style = style if style is not None else _hand_style(rng)
    wps = _pick_waypoints(rng, start_pos, target)
    return _render(rng, wps, style, "pick", target, collaborator, n_views)


def synthetic_pass(rng, collaborator="A", n_views=DEFAULT_N_VIEWS, style=None, start=None):
    """Pass demonstration; ``start`` = (position, yaw) of a lifted, closed hand.

    Frames are labeled UNLABELED: the held cube's color is not observable
    from keypoint cues, so the hand head gets no target term here.
    """
    collaborator = get_collaborator(collaborator)
    if start is None:
        xy = HOME[:2] + rng.normal(0, 0.03, 2)
        start = (np.array([xy[0], xy[1], Z_LIFT + rng.uniform(0.0, 0.03)]), rng.normal(0.0, 0.1))
    style = style if style is not None else _hand_style(rng)
    wps = _pass_waypoints(rng, *start)
    return _render(rng, wps, style, "pass", UNLABELED, collaborator, n_views)


def generate_synthetic_dataset(
    seed: int, n_per_task: int, collaborator="A", n_views: int = DEFAULT_N_VIEWS
) -> list[Trajectory]:
    """``n_per_task`` pick trajectories (targets alternate 0/1) followed by ``n_per_task`` pass ones."""
    if n_per_task < 1:
        raise ValueError("n_per_task must be >= 1")
    collaborator = get_collaborator(collaborator)
    rng = np.random.default_rng(seed)
    picks = [synthetic_pick(rng, i % 2, collaborator, n_views) for i in range(n_per_task)]
    passes = [synthetic_pass(rng, collaborator, n_views) for _ in range(n_per_task)]
    return picks + passes


def long_horizon_demo(seed: int, target: int = 0, collaborator="A", n_views=DEFAULT_N_VIEWS):
    """A pick demonstration and a pass demonstration that starts where the pick ends."""
    rng = np.random.default_rng(seed)
    style = _hand_style(rng)
    pick = synthetic_pick(rng, target, collaborator, n_views, style=style)
    last = pick.action_raw[-1]
    q = last[3:7].astype(np.float64)
    # yaw of qz(yaw) * qy(tilt): w = cos(y/2)cos(t/2), z = sin(y/2)cos(t/2)
    yaw = 2.0 * np.arctan2(q[3], q[0])
    passing = synthetic_pass(rng, collaborator, n_views, style=style, start=(last[:3].astype(np.float64), yaw))
    return pick, passing
