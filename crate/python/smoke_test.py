"""Smoke test for the flowmend extension module.

Uses an installed `flowmend` if importable, otherwise the library built by
`cargo build --release -p flowmend-py`.
"""

import os
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def import_flowmend():
    try:
        import flowmend
        return flowmend
    except ImportError:
        pass
    built = os.path.join(ROOT, "target", "release", "libflowmend.so")
    if not os.path.exists(built):
        sys.exit("build first: cargo build --release -p flowmend-py")
    tmp = tempfile.mkdtemp()
    shutil.copy(built, os.path.join(tmp, "flowmend.so"))
    sys.path.insert(0, tmp)
    import flowmend
    return flowmend


def main():
    fm = import_flowmend()
    corpus = os.path.join(ROOT, "corpus")

    buggy = fm.Chart.from_file(os.path.join(corpus, "fridge_1.chart"))
    fixed = fm.Chart.from_file(os.path.join(corpus, "fridge_1.fixed.chart"))
    assert fm.Chart.parse(buggy.serialize()) == buggy
    assert "TEMP" in buggy.diff(fixed)
    print("parsed", buggy)

    suite = fm.TestSuite.load(os.path.join(corpus, "fridge_1.tests"), buggy)
    assert not fm.run_suite(buggy, suite)["plausible"]
    assert fm.run_suite(fixed, suite)["plausible"]

    stim = os.path.join(corpus, "fridge_1.tests", suite.failing, "stim.csv")
    outputs = fm.simulate(fixed, stim)
    assert set(outputs) >= {"COLD"}
    print("simulated", {k: len(v) for k, v in outputs.items()})

    ranking = fm.localize(buggy, suite)
    print("top component", ranking[0]["label"], round(ranking[0]["score"], 3))

    result = fm.repair(buggy, suite, budget=30.0, seed=1)
    print("repair:", len(result["plausible"]), "plausible of", result["candidates"])
    for entry in result["plausible"]:
        assert fm.run_suite(entry["chart"], suite)["plausible"]
        assert buggy.apply_patch(entry["patch"]) == entry["chart"]

    try:
        fm.Chart.parse("chart broken {")
    except ValueError as e:
        print("diagnostic:", str(e).splitlines()[0])
    else:
        raise AssertionError("parse error expected")
    print("ok")


if __name__ == "__main__":
    main()
