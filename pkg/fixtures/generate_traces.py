#!/usr/bin/env python3
"""Regenerate the scenario trace fixtures (JSONL command streams).

Run from the repo root:  python3 fixtures/generate_traces.py
"""

import json
import os

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "traces")


def step(tick, **cmd):
    return {"v": 1, "tick": tick, "cmd": cmd}


def write(name, steps):
    path = os.path.join(OUT, name)
    with open(path, "w", encoding="utf-8") as f:
        for s in steps:
            f.write(json.dumps(s, sort_keys=True) + "\n")
    print(f"wrote {path} ({len(steps)} steps)")


def axis_x(deg):
    return {"axis": [1, 0, 0], "deg": deg}


def highlight_pinch():
    return [
        step(5, kind="set-gesture", id="hand-left", pinch=True),
        step(120, kind="set-gesture", id="hand-left", pinch=False),
    ]


def tilt_sweep():
    # 0 -> 90 degrees at half a degree per tick, then back down
    steps = []
    for k in range(1, 181):
        steps.append(step(k, kind="set-pose", id="vis1", rotation=axis_x(k * 0.5)))
    for k in range(181, 361):
        steps.append(step(k, kind="set-pose", id="vis1", rotation=axis_x(90 - (k - 180) * 0.5)))
    return steps


def teaser(angle_deg):
    # tilt the barchart, then push it into the wall plane at z = 1.5
    return [
        step(2, kind="set-pose", id="vis1", rotation=axis_x(angle_deg)),
        step(5, kind="set-pose", id="vis1", position=[0, 1.2, 1.2], rotation=axis_x(angle_deg)),
    ]


def slider_drag():
    steps = []
    for k in range(10, 71):
        steps.append(step(k, kind="set-pose", id="slider-knob", position=[(k - 10) * 0.01, 0.9, 0.2]))
    for k in range(100, 161):
        steps.append(step(k, kind="set-pose", id="slider-knob", position=[0.6 - (k - 100) * 0.01, 0.9, 0.2]))
    return steps


def unstack_gated():
    # pinch on the floating barchart and pull; it never touches the table
    steps = [step(2, kind="set-gesture", id="hand-left", pinch=True)]
    for k in range(5, 600, 5):
        steps.append(step(k, kind="set-pose", id="hand-left", position=[0, 1.8 + (k - 5) * 0.0005, 0.4]))
    return steps


def unstack_pull():
    steps = [step(2, kind="set-gesture", id="hand-left", pinch=True)]
    for k in range(4, 290):
        steps.append(step(k, kind="set-pose", id="hand-left", position=[0, 0.95 + (k - 4) * 0.002, 0.4]))
    return steps


def menu_toggle():
    return [
        step(3, kind="set-ui-value", id="field-menu", value="Displacement"),
        step(5, kind="set-ui-value", id="extrude-toggle", value=True),
        step(120, kind="set-ui-value", id="extrude-toggle", value=False),
    ]


def proxemic_approach():
    steps = []
    for k in range(5, 206):
        steps.append(step(k, kind="set-pose", id="head", position=[0, 1.3, -2.5 + (k - 5) * 0.01]))
    for k in range(220, 421):
        steps.append(step(k, kind="set-pose", id="head", position=[0, 1.3, -0.5 - (k - 220) * 0.01]))
    return steps


def rotary_turn():
    steps = []
    for k in range(5, 186):
        steps.append(
            step(k, kind="set-pose", id="dial", rotation={"axis": [0, 1, 0], "deg": (k - 5) * 1.0})
        )
    return steps


def height_lower():
    steps = []
    for k in range(5, 156):
        steps.append(step(k, kind="set-pose", id="vis1", position=[0, 1.5 - (k - 5) * 0.01, 0.4]))
    return steps


def main():
    os.makedirs(OUT, exist_ok=True)
    write("highlight_pinch.jsonl", highlight_pinch())
    write("tilt_sweep.jsonl", tilt_sweep())
    write("teaser_ortho.jsonl", teaser(5.0))
    write("teaser_parallel.jsonl", teaser(-85.0))
    write("slider_drag.jsonl", slider_drag())
    write("unstack_gated.jsonl", unstack_gated())
    write("unstack_pull.jsonl", unstack_pull())
    write("menu_toggle.jsonl", menu_toggle())
    write("proxemic_approach.jsonl", proxemic_approach())
    write("rotary_turn.jsonl", rotary_turn())
    write("height_lower.jsonl", height_lower())
    assert math.isfinite(1.0)


if __name__ == "__main__":
    main()
