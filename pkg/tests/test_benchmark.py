import csv

import numpy as np

from clothskill.eval import PolicyConfig, run_benchmark
from clothskill.tasks import load_suite


def test_zero_trials():
    rep = run_benchmark(load_suite(), PolicyConfig(), trials=0)
    assert all(r.trials == 0 and r.success_rate is None for r in rep.rows)
    assert rep.failures(0.9) == []
    assert rep.to_dict()["tasks"][0]["success_rate"] is None


def test_same_seed_same_report(tmp_path):
    suite = [t for t in load_suite() if t.cloth_type in ("square", "skirt")]
    a = run_benchmark(suite, PolicyConfig(), trials=2, seed=5)
    b = run_benchmark(suite, PolicyConfig(), trials=2, seed=5)
    a.write_json(tmp_path / "a.json")
    b.write_json(tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    c = run_benchmark(suite, PolicyConfig(), trials=2, seed=6)
    assert [t.pose for t in c.trial_results] != [t.pose for t in a.trial_results]


def test_rows_follow_suite_order_and_csv(tmp_path):
    suite = load_suite()[:3]
    rep = run_benchmark(suite, PolicyConfig(), trials=1, seed=0)
    assert [r.name for r in rep.rows] == [t.name for t in suite]
    rep.write_csv(tmp_path / "r.csv")
    with open(tmp_path / "r.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["task", "cloth", "seen", "success_rate"]
    assert len(rows) == 4 and all(r[2] in ("seen", "unseen") for r in rows[1:])
    assert all(0 <= float(r[3]) <= 1 for r in rows[1:])


def test_trial_metrics_in_range():
    suite = [t for t in load_suite() if t.name == "trousers_half_horizontal"]
    rep = run_benchmark(suite, PolicyConfig(), trials=3, seed=1)
    for t in rep.trial_results:
        assert 0 <= t.miou <= 1 and 0 <= t.wrinkle_recall <= 1 and np.isfinite(t.error)
        assert abs(t.pose["theta"]) <= np.radians(10) + 1e-12
