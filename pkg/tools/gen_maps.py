"""Generate the two bundled maps (run from the repo root).

Usage: python tools/gen_maps.py
"""

import json
import math
from pathlib import Path

import numpy as np

STRAIGHT_SPACING = 4.0
ARC_SPACING = 1.5


def fillet_path(corners, radius):
    """Polyline through the corner list with circular fillets at interior corners."""
    corners = [np.asarray(c, dtype=float) for c in corners]
    pts = [corners[0]]
    for i in range(1, len(corners) - 1):
        p_prev, c, p_next = corners[i - 1], corners[i], corners[i + 1]
        u_in = (c - p_prev) / np.linalg.norm(c - p_prev)
        u_out = (p_next - c) / np.linalg.norm(p_next - c)
        cross = u_in[0] * u_out[1] - u_in[1] * u_out[0]
        dot = float(np.clip(u_in @ u_out, -1.0, 1.0))
        phi = math.acos(dot)
        if phi < 1e-6:
            pts.append(c)
            continue
        t = radius * math.tan(phi / 2.0)
        a = c - t * u_in
        b = c + t * u_out
        sign = 1.0 if cross > 0 else -1.0
        n_in = sign * np.array([-u_in[1], u_in[0]])
        center = a + radius * n_in
        ang_a = math.atan2(*(a - center)[::-1])
        ang_b = math.atan2(*(b - center)[::-1])
        sweep = (ang_b - ang_a) % (2 * math.pi)
        if sign < 0:
            sweep = sweep - 2 * math.pi
        n_arc = max(2, int(abs(sweep) * radius / ARC_SPACING))
        for k in range(n_arc + 1):
            ang = ang_a + sweep * k / n_arc
            pts.append(center + radius * np.array([math.cos(ang), math.sin(ang)]))
    pts.append(corners[-1])
    return pts


def densify(pts, spacing=STRAIGHT_SPACING):
    out = [np.asarray(pts[0], dtype=float)]
    for p in pts[1:]:
        p = np.asarray(p, dtype=float)
        prev = out[-1]
        dist = float(np.linalg.norm(p - prev))
        n = max(1, int(dist / spacing))
        for k in range(1, n + 1):
            q = prev + (p - prev) * k / n
            if np.linalg.norm(q - out[-1]) > 1e-9:
                out.append(q)
    return [[round(float(x), 4), round(float(y), 4)] for x, y in out]


# fillet radius = full-lock turn radius of the bicycle model, so a
# saturated steering command tracks the corner arc exactly
FULL_LOCK_RADIUS = 3.5702


def route(corners, radius=FULL_LOCK_RADIUS):
    return densify(fillet_path(corners, radius))


def seen_map():
    # T-junction grid: main road along y=0, vertical stem at x=80.
    r0 = route([(0, 0), (160, 0)])                      # straight through
    r1 = route([(0, 0), (80, 0), (80, 80)])             # turn up at the T
    r2 = route([(80, 80), (80, 0), (160, 0)])           # down the stem, turn east
    lanes = [
        densify([(0, 0), (160, 0)], 8.0),
        densify([(80, 0), (80, 80)], 8.0),
    ]
    objects = [
        # crossing pedestrian on the western straight
        {"id": "ped_w", "kind": "pedestrian", "x": 40.0, "y": 6.0, "heading": -math.pi / 2,
         "speed": 1.4, "radius": 0.4, "behavior": "scripted-crossing", "trigger_distance": 26.0},
        # pedestrian guarding the T-junction (slows traffic before the corner)
        {"id": "ped_t", "kind": "pedestrian", "x": 74.0, "y": -6.0, "heading": math.pi / 2,
         "speed": 1.3, "radius": 0.4, "behavior": "scripted-crossing", "trigger_distance": 24.0},
        # cut-in vehicle on the eastern straight
        {"id": "cutin_e", "kind": "vehicle", "x": 118.0, "y": 3.5, "heading": 0.0,
         "speed": 4.0, "radius": 1.0, "behavior": "scripted-cut-in",
         "trigger_distance": 16.0, "shift": -3.5, "shift_time": 2.5},
        # pedestrian on the vertical stem
        {"id": "ped_n", "kind": "pedestrian", "x": 86.0, "y": 45.0, "heading": math.pi,
         "speed": 1.3, "radius": 0.4, "behavior": "scripted-crossing", "trigger_distance": 24.0},
        # parked vehicle off the corridor
        {"id": "parked", "kind": "vehicle", "x": 60.0, "y": -6.0, "heading": 0.0,
         "speed": 0.0, "radius": 1.0, "behavior": "stationary"},
    ]
    return {
        "format": 1,
        "map_id": "map_seen",
        "lane_width": 4.0,
        "lanes": lanes,
        "routes": [r0, r1, r2],
        "objects": objects,
    }


def unseen_map():
    # Ring road (rounded rectangle) with a merge approach; disjoint geometry
    # from the seen map.
    ring_bl, ring_br = (0, 120), (90, 120)
    ring_tr, ring_tl = (90, 170), (0, 170)
    u1 = route([(10, 120), ring_br, ring_tr, (45, 170)])          # around the east end
    u2 = route([(20, 92), (44, 120), ring_br, (90, 150)])         # merge then east side
    u3 = route([(80, 170), ring_tl, ring_bl, (70, 120)])          # around the west end
    lanes = [
        densify([ring_bl, ring_br], 8.0),
        densify([(90, 120), ring_tr], 8.0),
        densify([ring_tr, ring_tl], 8.0),
        densify([(0, 170), ring_bl], 8.0),
        densify([(20, 92), (44, 120)], 8.0),
        route([(44, 120 - 0.001), ring_br, (90, 150)]),           # merge fillet cover
        route([(10, 120 + 0.001), ring_br, ring_tr, (45, 170)]),  # ring fillet cover
        route([(80, 170 + 0.001), ring_tl, ring_bl, (70, 120)]),
    ]
    objects = [
        {"id": "ped_s", "kind": "pedestrian", "x": 55.0, "y": 126.0, "heading": -math.pi / 2,
         "speed": 1.4, "radius": 0.4, "behavior": "scripted-crossing", "trigger_distance": 26.0},
        {"id": "ped_e", "kind": "pedestrian", "x": 96.0, "y": 140.0, "heading": math.pi,
         "speed": 1.3, "radius": 0.4, "behavior": "scripted-crossing", "trigger_distance": 24.0},
        {"id": "ped_n2", "kind": "pedestrian", "x": 40.0, "y": 164.0, "heading": math.pi / 2,
         "speed": 1.3, "radius": 0.4, "behavior": "scripted-crossing", "trigger_distance": 24.0},
        {"id": "cutin_m", "kind": "vehicle", "x": 60.0, "y": 116.5, "heading": 0.0,
         "speed": 3.5, "radius": 1.0, "behavior": "scripted-cut-in",
         "trigger_distance": 15.0, "shift": 3.5, "shift_time": 2.5},
        {"id": "ped_w2", "kind": "pedestrian", "x": -6.0, "y": 150.0, "heading": 0.0,
         "speed": 1.3, "radius": 0.4, "behavior": "scripted-crossing", "trigger_distance": 24.0},
    ]
    return {
        "format": 1,
        "map_id": "map_unseen",
        "lane_width": 4.0,
        "lanes": lanes,
        "routes": [u1, u2, u3],
        "objects": objects,
    }


def main():
    out = Path(__file__).resolve().parents[1] / "src" / "semdrive" / "maps"
    out.mkdir(parents=True, exist_ok=True)
    for doc in (seen_map(), unseen_map()):
        path = out / f"{doc['map_id']}.json"
        path.write_text(json.dumps(doc, indent=1))
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
