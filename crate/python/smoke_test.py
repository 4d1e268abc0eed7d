"""Smoke test for the aigcert_py extension.

Build first with `cargo build --release -p aigcert-py`, then run
`python3 python/smoke_test.py`. An installed module is used if present.
"""

import importlib.machinery
import importlib.util
import pathlib
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "crates" / "core" / "tests" / "fixtures"


def load_module():
    try:
        import aigcert_py

        return aigcert_py
    except ImportError:
        pass
    for profile in ("release", "debug"):
        for suffix in ("so", "dylib"):
            lib = ROOT / "target" / profile / f"libaigcert_py.{suffix}"
            if lib.exists():
                loader = importlib.machinery.ExtensionFileLoader("aigcert_py", str(lib))
                spec = importlib.util.spec_from_file_location("aigcert_py", lib, loader=loader)
                mod = importlib.util.module_from_spec(spec)
                loader.exec_module(mod)
                return mod
    sys.exit("aigcert_py not found; run `cargo build --release -p aigcert-py`")


def main():
    ac = load_module()

    clock = ac.Circuit.load(str(FIXTURES / "fig5.aag"))
    assert (clock.num_inputs, clock.num_latches, clock.num_ands) == (0, 2, 1)
    assert clock.latch_names == ["t", "c"]
    assert ac.Circuit.parse(clock.to_aag()) == clock
    assert clock.eval([], [False, True]) == ([True, False], False)

    res = ac.model_check(clock)
    assert res["status"] == "SAFE", res
    assert (res["d"], res["n"], res["proof_depth"]) == (0, 2, 0)
    witness = res["witness"]
    assert witness is not None
    report = ac.check(clock, witness)
    assert report["pass"] and [c["status"] for c in report["checks"]] == ["pass"] * 6

    # an empty invariant excludes the initial state
    broken = ac.Circuit.parse("aag 3 0 2 1 1\n2 4\n4 5\n1\n6 2 4\nl0 t\nl1 c\n")
    assert not ac.check(clock, broken)["pass"]

    unsafe = ac.Circuit.load(str(FIXTURES / "input_reset.aag"))
    res = ac.model_check(unsafe)
    assert res["status"] == "UNSAFE" and res["trace"]["text"].startswith("1\nb0\n")

    res = ac.model_check(clock, engine="bmc", max_bound=0)
    assert res["status"] == "UNKNOWN"

    c = ac.random_circuit(7)
    assert c == ac.random_circuit(7)

    summary = ac.fuzz(200, seed=3)
    assert summary["disagreements"] == 0 and summary["witness_failures"] == 0, summary

    print("smoke test passed:", summary["safe"], "safe,", summary["unsafe_"], "unsafe of", summary["count"])


if __name__ == "__main__":
    main()
