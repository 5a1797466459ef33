"""Smoke test for the stirsap extension module.

Build and install first, e.g. `maturin develop --release -m crates/python/Cargo.toml`.
"""

import math
import tempfile
from pathlib import Path

import stirsap


def main():
    cfg = stirsap.ExperimentConfig()
    assert cfg.protocol == "STIRSAP"
    assert abs(cfg.omega0 - 2 * math.pi * 0.03) < 1e-12

    again = stirsap.ExperimentConfig(cfg.to_toml())
    assert again.to_toml() == cfg.to_toml()

    base = stirsap.simulate(cfg)
    print(f"STIRSAP 32 ns: F = {base['fidelity']:.4f}, leakage = {base['leakage']:.2e}")
    assert 0.0 < base["fidelity"] <= 1.0
    assert len(base["times"]) == len(base["populations"])
    assert abs(sum(base["final_populations"]) - 1.0) < 1e-9

    plain = stirsap.simulate(cfg, protocol="STIRAP")
    assert plain["fidelity"] < base["fidelity"]

    ident = stirsap.simulate(cfg, protocol="STIRSAP_OPT", control=stirsap.ControlParams())
    assert ident["fidelity"] == base["fidelity"]

    p = stirsap.pulses(cfg)
    assert len(p["t_ns"]) == int(32.0 / 0.01) + 1
    assert {"omega_p", "omega_s", "omega_cd", "zeta"} <= p.keys()

    best, cost, evals, why = stirsap.cmaes_minimize(
        lambda x: sum(v * v for v in x), [3.0] * 4, [(-5.0, 5.0)] * 4, seed=1, max_evaluations=5000
    )
    print(f"sphere: {cost:.1e} in {evals} evaluations ({why})")
    assert cost < 1e-9

    rows = stirsap.sweep_total_time(cfg, [40.0, 80.0], 2 * math.pi * 0.02, ["STIRAP", "STIRSAP"])
    assert [r["variant"] for r in rows] == ["STIRAP", "STIRSAP", "STIRAP", "STIRSAP"]

    with tempfile.TemporaryDirectory() as d:
        cfg.output_dir = d
        out = stirsap.run_transfer(cfg)
        assert (Path(d) / "manifest.json").exists()
        assert any(f.endswith("trajectory.csv") for f in out["files"])

    try:
        stirsap.ExperimentConfig("bogus = 1\n")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown keys must be rejected")

    print("ok")


if __name__ == "__main__":
    main()
