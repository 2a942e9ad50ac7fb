"""Builds the extension with cargo and exercises the main bindings.

Usage: python3 python/smoke_test.py [--no-build]
"""

import json
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def build():
    subprocess.run(
        ["cargo", "build", "--release", "-p", "latticefold-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )


def load(tmp):
    lib = ROOT / "target" / "release" / "liblatticefold_py.so"
    shutil.copy(lib, Path(tmp) / "latticefold_py.so")
    sys.path.insert(0, tmp)
    import latticefold_py

    return latticefold_py


def main():
    if "--no-build" not in sys.argv:
        build()
    with tempfile.TemporaryDirectory() as tmp:
        lf = load(tmp)

        fuel = lf.Layout.all_fuel()
        assert fuel.gd_count == 0
        assert len(fuel.to_text()) == 306
        assert lf.Layout(fuel.to_text()) == fuel
        assert fuel.is_d4_invariant()

        layout = lf.Layout.random(16, 7)
        assert layout.gd_count == 16
        assert len(layout.gd_positions()) == 16
        assert layout.transform(3).gd_count == 16
        assert lf.Layout.symmetric(24, 3).is_d4_invariant()
        assert layout.render("svg").startswith("<svg")

        res = lf.evaluate(layout, "high", 0)
        assert len(res["pin_power"]) == lf.FREE_CELLS
        k = res["k_eff"]
        assert 0.9 < k < 1.5, k
        assert abs(lf.penalty(1.10) - 2.0) < 1e-12
        assert abs(lf.fitness(1.05, 1.0, 1.0) - 1.0) < 1e-12
        print("prompt:", lf.format_prompt(k, res["fq"], res["fdh"]))

        try:
            lf.Layout("xyz")
        except ValueError:
            pass
        else:
            raise AssertionError("bad layout accepted")

        ga = lf.run_ga(seed=1, eval_budget=40, population=8)
        assert ga["evaluations"] == 40
        assert all(e["gd_count"] == 16 for e in ga["log"])

        policy = lf.Policy.pretrained(low_records=50, high_records=10)
        assert abs(policy.expected_inventory() - 16) < 3
        run = lf.run_dpo(policy, steps=10, seed=1)
        assert run["evaluations"] == 20
        assert isinstance(run["policy"], lf.Policy)

        a, b = lf.Layout.random(20, 1), lf.Layout.random(12, 2)
        stepped = policy.dpo_step(a, b)
        before = policy.log_prob(a) - policy.log_prob(b)
        after = stepped.log_prob(a) - stepped.log_prob(b)
        assert after > before

        path = Path(tmp) / "d.jsonl"
        assert lf.generate_dataset(5, str(path)) == 5
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        assert [r["seed"] for r in rows] == [1, 2, 3, 4, 5]

        corr = lf.pearson_corr(["a", "b"], [[1.0, 2.0, 3.0], [3.0, 2.0, 1.0]])
        assert abs(corr["values"][0][1] + 1.0) < 1e-12

    print("python smoke test passed")


if __name__ == "__main__":
    main()
