"""Stick-figure skater geometry shared by the video renderer and the sketcher.

Coordinates are pixels with y pointing down; the figure is anchored at its
torso centre. ``phase`` is the spin angle about the vertical torso axis.
"""
import math

import numpy as np

from .spec import HATCH_ANGLES, HATCH_PERIODS

HEAD = (0.0, -11.0)
HEAD_R = 3.2
TORSO = (0.0, -1.0)
TORSO_AX = (4.2, 5.5)
SHOULDER = 3.8
SHOULDER_Y = -5.0
ARM_LEN = 7.0
HIP = (2.0, 4.0)
FOOT_Y = 13.0
FOOT_X = 3.2
BLADE_Y = 14.0

# figure extent around the anchor, used to keep it inside the frame
EXTENT_X = 12.5
EXTENT_UP = 17.5
EXTENT_DOWN = 15.5

_ARM_DIRS = {
    0: ((-1.0, 0.2), (1.0, 0.2)),
    1: ((-0.6, -0.8), (0.6, -0.8)),
    2: ((-0.45, 0.9), (0.45, 0.9)),
    3: ((-0.6, -0.8), (1.0, 0.2)),
}

_PALETTE = np.array([
    [0.80, 0.15, 0.20], [0.15, 0.35, 0.80], [0.10, 0.60, 0.30], [0.55, 0.20, 0.65],
    [0.90, 0.55, 0.10], [0.10, 0.55, 0.60], [0.60, 0.45, 0.20], [0.85, 0.25, 0.55],
])
_HAIR_COLORS = np.array([[0.30, 0.18, 0.08], [0.85, 0.70, 0.30], [0.08, 0.06, 0.05], [0.65, 0.22, 0.08]])
SKIN = np.array([0.92, 0.76, 0.64])
TIGHTS = np.array([0.22, 0.20, 0.26])
BLADE = np.array([0.45, 0.45, 0.50])


def arm_points(appearance, phase):
    """Shoulder and hand points of both arms (figure-local)."""
    out = []
    c = math.cos(phase)
    for side, (dx, dy) in zip((-1.0, 1.0), _ARM_DIRS[appearance.pose]):
        n = math.hypot(dx, dy)
        shoulder = (side * SHOULDER * c, SHOULDER_Y)
        hand = (shoulder[0] + ARM_LEN * dx / n * c, SHOULDER_Y + ARM_LEN * dy / n)
        out.append((shoulder, hand))
    return out


def leg_points():
    return [((-HIP[0], HIP[1]), (-FOOT_X, FOOT_Y)), ((HIP[0], HIP[1]), (FOOT_X, FOOT_Y))]


def blade_points():
    return [((-FOOT_X - 2.5, BLADE_Y), (-FOOT_X + 2.0, BLADE_Y)),
            ((FOOT_X - 2.0, BLADE_Y), (FOOT_X + 2.5, BLADE_Y))]


def marker_offset(phase):
    """Torso-front marker position; visible while facing the viewer."""
    return 3.0 * math.sin(phase), TORSO[1], math.cos(phase) > 0.0


def hatch_params(appearance):
    return math.radians(HATCH_ANGLES[appearance.hatch_angle]), HATCH_PERIODS[appearance.hatch_period]


def colors(appearance):
    primary = _PALETTE[appearance.clothing % len(_PALETTE)]
    secondary = 0.35 * primary + 0.65 * np.array([0.97, 0.97, 0.92])
    return primary, secondary, _HAIR_COLORS[appearance.hair]


# -------------------------------------------------------------- sketch strokes

def _circle(cx, cy, r, n=16, a0=0.0, a1=2 * math.pi):
    t = np.linspace(a0, a1, n)
    return np.stack([cx + r * np.cos(t), cy + r * np.sin(t)], axis=1)


def _ellipse_chords(theta, period):
    """Hatch lines (in figure coords) where the stripe pattern peaks inside the torso."""
    a, b = TORSO_AX
    nx, ny = math.cos(theta), math.sin(theta)
    lines = []
    reach = math.hypot(a * nx, b * ny)
    k_max = int(reach // period)
    for k in range(-k_max, k_max + 1):
        off = k * period
        # points p = c + off*n + s*t on the ellipse boundary, t perpendicular to n
        tx, ty = -ny, nx
        px, py = off * nx, off * ny
        qa = (tx / a) ** 2 + (ty / b) ** 2
        qb = 2 * (px * tx / a ** 2 + py * ty / b ** 2)
        qc = (px / a) ** 2 + (py / b) ** 2 - 1.0
        disc = qb * qb - 4 * qa * qc
        if disc <= 0:
            continue
        r = math.sqrt(disc)
        s0, s1 = (-qb - r) / (2 * qa), (-qb + r) / (2 * qa)
        if s1 - s0 < 1.5:
            continue
        shrink = 0.6
        lines.append(np.array([[px + (s0 + shrink) * tx, TORSO[1] + py + (s0 + shrink) * ty],
                               [px + (s1 - shrink) * tx, TORSO[1] + py + (s1 - shrink) * ty]]))
    return lines


def appearance_polylines(appearance):
    """Line-drawing of the skater in the canonical key pose (figure coords)."""
    lines = [_circle(HEAD[0], HEAD[1], HEAD_R, 18)]
    hair = appearance.hair
    if hair == 0:
        lines.append(_circle(0.0, -15.2, 1.8, 10))
    elif hair == 1:
        lines.append(np.array([[2.4, -13.2], [6.2, -8.0]]))
    elif hair == 2:
        lines.append(np.array([[-3.0, -12.2], [3.0, -12.2]]))
        lines.append(np.array([[-2.2, -13.4], [2.2, -13.4]]))
    else:
        lines.append(np.array([[-3.1, -12.0], [-3.8, -5.2]]))
        lines.append(np.array([[3.1, -12.0], [3.8, -5.2]]))
    t = np.linspace(0.0, 2 * math.pi, 22)
    lines.append(np.stack([TORSO[0] + TORSO_AX[0] * np.cos(t), TORSO[1] + TORSO_AX[1] * np.sin(t)], axis=1))
    theta, period = hatch_params(appearance)
    lines.extend(_ellipse_chords(theta, period))
    for sh, hand in arm_points(appearance, 0.0):
        lines.append(np.array([sh, hand]))
    for hip, foot in leg_points():
        lines.append(np.array([hip, foot]))
    for a, b in blade_points():
        lines.append(np.array([a, b]))
    mx, my, _ = marker_offset(0.0)
    lines.append(_circle(mx, my, 0.9, 8))
    return lines
