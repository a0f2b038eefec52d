"""Smoke test for the cubicml_py extension module.

Build and install first:
    pip install --no-build-isolation ./crates/py
Run from the repository root:
    python python/smoke_test.py
"""

import math
import os
import sys
import tempfile

import cubicml_py as cm

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def path(*parts):
    return os.path.join(ROOT, *parts)


def main():
    ads = cm.SearchSpace.from_file(path("spaces", "ads_fsdp.space"))
    assert ads.cardinality() == 8_857_350, ads.cardinality()

    space = cm.SearchSpace.from_file(path("spaces", "ads_fsdp_reduced.space"))
    sim = cm.Simulator("fsdp", path("sims", "fsdp_reduced.params"))
    cfg = space.sample(1)
    assert space.contains(cfg)
    out = sim.execute(space, cfg)
    assert out["status"] in ("completed", "failed_oom", "failed_infra"), out

    best_cfg, optimum = cm.exhaustive_optimum(space, sim.without_noise())
    assert optimum > 0

    with tempfile.TemporaryDirectory() as tmp:
        hist = os.path.join(tmp, "history.jsonl")
        config = {
            "bootstrap": 30,
            "rounds": 1,
            "seed": 4,
            "predictor": {"backend": "gbdt", "n_trees": 40},
            "searcher": {"samples_per_trial": 300, "top_k": 5},
        }
        report = cm.run_loop(space, sim, config, hist)
        records = cm.load_history(hist)
    assert report["jobs"] == len(records) <= 35
    assert report["best_metric"] == max(r["metric"] for r in records if r["metric"] is not None)
    assert [r["round"] for r in report["rounds"]] == ["bootstrap", "round-1"]

    llm = cm.SearchSpace.from_file(path("spaces", "llm.space"))
    llm_sim = cm.Simulator("llm", path("sims", "llm_default.params"))
    data = cm.generate_dataset(llm, llm_sim, 200, seed=2)
    train, valid = data[:150], data[150:]
    model = cm.Predictor.fit(llm, train, {"backend": "gbdt", "log_target": True}, seed=0)
    pred = [model.predict(llm, r["config"]) for r in valid]
    actual = [r["metric"] for r in valid]
    corr = cm.correlation_report(pred, actual)
    assert corr["spearman"] > 0.5, corr

    assert math.isclose(cm.kendall_tau([1, 2, 3], [1, 3, 2]), 1 / 3)
    assert math.isclose(cm.pearson([1, 2, 3], [2, 4, 6]), 1.0)
    assert math.isclose(cm.spearman([1, 2, 3], [3, 2, 1]), -1.0)
    assert cm.aggregate_metric(list(range(1, 11))) == 9.0
    assert cm.derive_seed(0, "a") == cm.derive_seed(0, "a") != cm.derive_seed(0, "b")

    try:
        cm.SearchSpace.from_file(path("spaces", "missing.space"))
    except OSError:
        pass
    else:
        raise AssertionError("missing file accepted")
    try:
        cm.pearson([1, 1, 1], [1, 2, 3])
    except ValueError:
        pass
    else:
        raise AssertionError("undefined correlation accepted")

    print(f"ok: optimum {optimum:.1f}, loop best {report['best_metric']:.1f}, "
          f"llm spearman {corr['spearman']:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
