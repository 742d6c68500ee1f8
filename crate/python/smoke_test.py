"""Smoke test for the h2lca_py extension.

    pip install --no-build-isolation crates/py
    python python/smoke_test.py
"""

import subprocess
import sys
import tempfile
from pathlib import Path

import h2lca_py as h

ROOT = Path(__file__).resolve().parent.parent


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    model = h.SystemModel.bundled()
    assert model.validate() == [], model.validate()
    again = h.SystemModel.parse(model.to_document())
    assert again.to_document() == model.to_document()

    values, rows, cols = model.incidence()
    assert len(values) == len(rows) and len(values[0]) == len(cols)

    part = model.partition()
    assert len(part.a) == len(part.a[0])
    co2 = part.aspects.index("co2 @ substation")
    b = part.b[co2]
    assert [b[part.capabilities.index(c)] for c in ("coal_gen", "ng_gen", "oil_gen", "biomass_gen")] == [820, 490, 650, 230]

    hydrogen = part.products.index("hydrogen @ electrolyzer")
    dy = [0.0] * len(part.a)
    dy[hydrogen] = 1.0
    sol = part.steady_state_lca(dy)
    assert sol["condition"] < 1e12

    toy = h.Partition.from_blocks([[2.0, 0.0], [0.0, 4.0]], [[1.0, 1.0]])
    assert toy.steady_state_lca([2.0, 4.0])["delta_e"] == [2.0]

    assert close(h.ci_per_kg(820.0), 43.05)
    assert round(h.cost_per_kg(60.0), 2) == 5.11
    assert round(h.cost_per_kg(0.0), 2) == 1.96
    assert h.decide_rate("green-rule", 14.5) == 20.0
    assert h.decide_rate("green-rule", 17.0) == 8.0
    assert h.decide_rate("green-rule", 19.5) == 0.0
    assert h.decide_rate("credit-threshold", 0.6) == 20.0
    assert h.decide_rate("credit-threshold", 0.61) == 0.0
    assert close(h.hourly_emissions(20.0, {"coal": 1.0}), 861.0)
    assert close(h.hourly_emissions(20.0, {"coal": 1.0, "wind": 3.0}), 215.25)

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        subprocess.run(
            ["cargo", "run", "-q", "-p", "h2lca", "--", "synth", "--zone", "QLD", "--out-dir", str(tmp)],
            cwd=ROOT,
            check=True,
        )
        rows = h.run(
            [str(tmp / "generation_QLD.csv")],
            [str(tmp / "prices_QLD.csv")],
            scenarios=["baseline", "green-rule", "credit-threshold"],
            out_dir=str(tmp / "out"),
        )
        assert [r["scenario"] for r in rows] == ["baseline", "green-rule", "credit-threshold"]
        assert close(rows[0]["h2_t"], 175.2)
        assert rows[0]["emissions_t"] >= rows[1]["emissions_t"] >= rows[2]["emissions_t"]
        assert (tmp / "out" / "comparison.csv").exists()

    try:
        h.decide_rate("nonsense", 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown scenario accepted")

    print("smoke test passed")


if __name__ == "__main__":
    sys.exit(main())
