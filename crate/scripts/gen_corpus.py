#!/usr/bin/env python3
"""Regenerates the benchmark corpus.

Writes every chart variant, the stimulus CSVs and test.json files, and the
expected outputs (by simulating the fixed chart with the flowmend binary).

    python3 scripts/gen_corpus.py [path/to/flowmend]
"""

import json
import math
import shutil
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus"
BIN = Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "target" / "release" / "flowmend"

FRIDGE = (CORPUS / "fridge_1.fixed.chart").read_text()

FRIDGE_2 = FRIDGE.replace(
    "// an alarm once the door has been open for 15 seconds.",
    "// an alarm once the door has been open for 10 seconds. Tighter thresholds.",
).replace("[TEMP > 5.0]", "[TEMP > 6.0]").replace("[TEMP <= 3.0]", "[TEMP <= 4.0]").replace(
    "[after(15, sec)]", "[after(10, sec)]"
)

DOOR = """// Automatic sliding door. POS runs from 0 (closed) to 1 (open).
chart AutoDoor {
    input PERSON: bool;
    output MOTOR: int = 0;
    output POS: real = 0.0;

    state CLOSED {
        entry {
            MOTOR = 0;
            POS = 0.0;
        }
    }
    state OPENING {
        entry {
            MOTOR = 1;
        }
        during {
            POS = POS + 0.25;
        }
    }
    state OPEN {
        entry {
            MOTOR = 0;
            POS = 1.0;
        }
    }
    state CLOSING {
        entry {
            MOTOR = -1;
        }
        during {
            POS = POS - 0.25;
        }
    }

    initial -> CLOSED;
    transition CLOSED -> OPENING when [PERSON];
    transition OPENING -> OPEN when [POS >= 1.0];
    transition OPEN -> CLOSING when [!PERSON && after(3, sec)];
    transition CLOSING -> OPENING when [PERSON];
    transition CLOSING -> CLOSED when [POS <= 0.0];
}
"""

PACEMAKER = """// Pacemaker-style pulse generator. MODE 2 runs a configuration step that
// loads fifteen hardware settings before pacing starts.
chart Pacemaker {
    input SENSE: bool;
    input MODE: int;
    output PACE: bool = false;
    output VENT_CMP_REF_PWM: int = 0;
    output ATR_CMP_REF_PWM: int = 0;
    local PACING_REF_PWM: int = 0;
    local VENT_PACE_PWM: int = 0;
    local ATR_PACE_PWM: int = 0;
    local PACE_CHARGE: int = 0;
    local PACE_GND: int = 0;
    local VENT_GND: int = 0;
    local ATR_GND: int = 0;
    local Z_ATR_CTRL: int = 0;
    local Z_VENT_CTRL: int = 0;
    local ATR_PACE_CTRL: int = 0;
    local VENT_PACE_CTRL: int = 0;
    local FRONTEND_CTRL: int = 0;
    local BLANK_CTRL: int = 0;

    state INIT {
        entry {
            PACE = false;
        }
    }
    state CONFIGURE {
        entry {
            ATR_CMP_REF_PWM = 80;
            VENT_CMP_REF_PWM = 70;
            PACING_REF_PWM = 150;
            VENT_PACE_PWM = 100;
            ATR_PACE_PWM = 100;
            PACE_CHARGE = 1;
            PACE_GND = 1;
            VENT_GND = 0;
            ATR_GND = 0;
            Z_ATR_CTRL = 0;
            Z_VENT_CTRL = 0;
            ATR_PACE_CTRL = 0;
            VENT_PACE_CTRL = 0;
            FRONTEND_CTRL = 1;
            BLANK_CTRL = 4;
        }
    }
    state CHARGE {
        entry {
            PACE = false;
        }
    }
    state PACE_PULSE {
        entry {
            PACE = true;
        }
    }
    state SENSED {
        entry {
            PACE = false;
        }
    }

    initial -> INIT;
    transition INIT -> CONFIGURE when [MODE == 2];
    transition INIT -> CHARGE when [MODE == 1];
    transition CONFIGURE -> CHARGE when [after(100, msec)];
    transition CHARGE -> SENSED when [SENSE];
    transition CHARGE -> PACE_PULSE when [after(800, msec)];
    transition PACE_PULSE -> CHARGE when [after(20, msec)];
    transition SENSED -> CHARGE when [!SENSE];
}
"""


def variant(base, old, new):
    assert base.count(old) == 1, old
    return base.replace(old, new)


# id -> (buggy chart, fixed chart, description, faults)
CASES = {
    "fridge_1": (
        variant(FRIDGE, "[TEMP > 5.0]", "[TEMP == 5.0]"),
        FRIDGE,
        "relational operator flipped in the hot-threshold guard; COLD never activates",
        1,
    ),
    "fridge_2": (
        variant(variant(FRIDGE_2, "[TEMP <= 4.0]", "[TEMP <= 40.0]"), "after(10, sec)", "after(10, msec)"),
        FRIDGE_2,
        "cool-down threshold off by a factor of ten and alarm timer in the wrong unit",
        2,
    ),
    "fridge_2a": (
        variant(FRIDGE_2, "after(10, sec)", "after(10, msec)"),
        FRIDGE_2,
        "fridge_2 with the cool-down threshold fixed; alarm timer in the wrong unit",
        1,
    ),
    "fridge_2b": (
        variant(FRIDGE_2, "[TEMP <= 4.0]", "[TEMP <= 40.0]"),
        FRIDGE_2,
        "fridge_2 with the timer fixed; cool-down threshold off by a factor of ten",
        1,
    ),
    "fridge_3": (
        variant(FRIDGE, "transition OPEN_15_SEC -> CLOSE_NORM", "transition OPEN_15_SEC -> OPEN"),
        FRIDGE,
        "alarm state returns to OPEN instead of CLOSE_NORM when the door closes",
        1,
    ),
    "door_1": (
        variant(DOOR, "after(3, sec)", "after(3, msec)"),
        DOOR,
        "hold-open timer in milliseconds instead of seconds",
        1,
    ),
    "door_2": (
        variant(DOOR, "POS = POS - 0.25;", "POS = POS + 0.25;"),
        DOOR,
        "closing motion adds to the position instead of subtracting",
        1,
    ),
    "pacemaker_1": (
        variant(PACEMAKER, "transition SENSED -> CHARGE", "transition SENSED -> PACE_PULSE"),
        PACEMAKER,
        "sensed beat is followed by an immediate pace instead of recharging",
        1,
    ),
    "pacemaker_2": (
        variant(PACEMAKER, "VENT_CMP_REF_PWM = 70;", "VENT_CMP_REF_PWM = 125;"),
        PACEMAKER,
        "wrong comparator setting among fifteen configuration assignments",
        1,
    ),
}


def grid(dt, duration):
    n = round(duration / dt)
    return [round(k * dt, 9) for k in range(n + 1)]


def fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(round(v, 9))
    return str(v)


def pulses(t, windows):
    return any(a <= t + 1e-9 < b for a, b in windows)


def fridge_ramp(t, door=()):
    return {"DOOR": pulses(t, door), "TEMP": 1.0 + 7.0 * t / 60.0}


def fridge_door(t):
    return {"DOOR": pulses(t, [(5.0, 25.0)]), "TEMP": 2.0}


def fridge_blips(t):
    return {"DOOR": pulses(t, [(10.0, 10.1), (30.0, 30.1), (45.0, 45.1)]), "TEMP": 3.0 + 0.5 * math.sin(t / 5.0)}


def door_visit(t):
    return {"PERSON": pulses(t, [(1.0, 1.5), (12.0, 12.5)])}


def door_stay(t):
    return {"PERSON": pulses(t, [(1.0, 20.0)])}


BEATS = [(0.5, 0.52), (3.0, 3.02), (5.5, 5.52)]

# id -> list of (test name, kind, dt, duration, stimulus function, tolerances)
TESTS = {
    "fridge_1": [
        ("ramp", "failing", 0.1, 60.0, fridge_ramp, {}),
        ("door", "passing", 0.1, 60.0, fridge_door, {}),
    ],
    "fridge_2": [
        ("ramp_door", "failing", 0.1, 60.0, lambda t: fridge_ramp(t, [(40.0, 55.0)]), {}),
        ("blips", "passing", 0.1, 60.0, fridge_blips, {}),
    ],
    "fridge_3": [
        ("door", "failing", 0.1, 60.0, fridge_door, {}),
        ("ramp", "passing", 0.1, 60.0, fridge_ramp, {}),
    ],
    "door_1": [
        ("visit", "failing", 0.1, 20.0, door_visit, {"POS": 1e-6}),
        ("stay", "passing", 0.1, 20.0, door_stay, {"POS": 1e-6}),
    ],
    "pacemaker_1": [
        ("beats", "failing", 0.01, 8.0, lambda t: {"SENSE": pulses(t, BEATS), "MODE": 1}, {}),
        ("paced", "passing", 0.01, 8.0, lambda t: {"SENSE": False, "MODE": 1}, {}),
    ],
    "pacemaker_2": [
        ("configure", "failing", 0.01, 8.0, lambda t: {"SENSE": False, "MODE": 2}, {}),
        ("beats", "passing", 0.01, 8.0, lambda t: {"SENSE": pulses(t, BEATS), "MODE": 1}, {}),
    ],
}
TESTS["fridge_2a"] = TESTS["fridge_2"]
TESTS["fridge_2b"] = TESTS["fridge_2"]
TESTS["door_2"] = TESTS["door_1"]


def write_csv(path, times, rows):
    names = list(rows[0].keys())
    lines = [",".join(["time"] + names)]
    for t, row in zip(times, rows):
        lines.append(",".join([fmt(t)] + [fmt(row[n]) for n in names]))
    path.write_text("\n".join(lines) + "\n")


def main():
    cases = []
    for cid, (buggy, fixed, description, faults) in CASES.items():
        (CORPUS / f"{cid}.chart").write_text(buggy)
        (CORPUS / f"{cid}.fixed.chart").write_text(fixed)
        tests_dir = CORPUS / f"{cid}.tests"
        if tests_dir.exists():
            shutil.rmtree(tests_dir)
        for name, kind, dt, duration, stim, tol in TESTS[cid]:
            d = tests_dir / name
            d.mkdir(parents=True)
            times = grid(dt, duration)
            write_csv(d / "stim.csv", times, [stim(t) for t in times])
            meta = {"kind": kind, "dt": dt, "duration": duration, "tolerances": tol}
            (d / "test.json").write_text(json.dumps(meta, indent=2) + "\n")
            subprocess.run(
                [str(BIN), "simulate", str(CORPUS / f"{cid}.fixed.chart"), "--stim", str(d / "stim.csv"),
                 "--out", str(d / "expected.csv"), "--dt", str(dt), "--duration", str(duration)],
                check=True,
            )
        cases.append({
            "id": cid,
            "buggy": f"{cid}.chart",
            "fixed": f"{cid}.fixed.chart",
            "tests": f"{cid}.tests",
            "description": description,
            "faults": faults,
        })
    (CORPUS / "cases.json").write_text(json.dumps(cases, indent=2) + "\n")


if __name__ == "__main__":
    main()
