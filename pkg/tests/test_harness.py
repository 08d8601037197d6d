import json
import math
import re

import pytest

from melopt.errors import ConfigError, InfeasibleError
from melopt.harness.config import dump_config, load_config, parse_config, with_overrides
from melopt.harness.export import (
    export,
    load_records,
    plot_svg,
    records_from_csv,
    records_from_json,
    records_to_csv,
    records_to_json,
    strip_timing,
)
from melopt.harness.runner import (
    RECORD_FIELDS,
    compare,
    pareto_curve,
    reevaluate,
    run_single,
    summarize,
    sweep,
)

SMALL = {"orchestrators": 2, "learners": 5}


def small(**changes):
    return with_overrides(parse_config(SMALL), **changes)


# ------------------------------------------------------------------ config


def test_empty_document_gives_defaults(tmp_path):
    path = tmp_path / "empty.json"
    path.write_text("")
    cfg = load_config(path)
    assert cfg == parse_config({})
    assert (cfg.orchestrators, cfg.learners) == (3, 50)
    assert cfg.channel.tx_power == 0.2 and cfg.channel.bandwidth == 5e6
    assert cfg.learning.T_max == 660 and cfg.learning.eta == 0.01
    assert cfg.topology.frequency_pool == [0.5e9, 0.7e9, 1.2e9, 1.8e9]
    assert cfg.topology.capacitance == 1e-19
    assert cfg.monte_carlo_runs == 50
    path.write_text("{}")
    assert load_config(path) == cfg


def test_out_of_range_alpha_names_the_field():
    with pytest.raises(ConfigError, match=r"^solver\.alpha:"):
        parse_config({"solver": {"alpha": 1.5}})


@pytest.mark.parametrize(
    "doc, path",
    [
        ({"solver": {"alpa": 0.2}}, "solver.alpa"),
        ({"learners": 0}, "learners"),
        ({"tasks": [{"bits_per_weight": 12}]}, "tasks.0.bits_per_weight"),
        ({"sweep": {"axis": "T_max", "values": [660, 300]}}, "sweep"),
    ],
)
def test_schema_errors_carry_paths(doc, path):
    with pytest.raises(ConfigError, match="^" + re.escape(path)):
        parse_config(doc)


def test_bad_files(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{ nope")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(bad)


def test_dump_load_round_trip(tmp_path):
    doc = {"seed": 4, "solver": {"alpha": 0.3}, "learning": {"T_max": 300}, "orchestrators": 2}
    text = dump_config(parse_config(doc))
    path = tmp_path / "c.json"
    path.write_text(text)
    assert dump_config(load_config(path)) == text
    assert json.loads(text)["solver"]["alpha"] == 0.3


def test_per_orchestrator_tasks_must_match_count():
    with pytest.raises(ConfigError):
        parse_config({"orchestrators": 3, "tasks": [{}, {}]})
    cfg = parse_config({"orchestrators": 2, "tasks": [{"dataset_size": 100}, {"dataset_size": 200}]})
    topo = cfg.topology_config()
    assert [t.dataset_size for t in topo.tasks] == [100, 200]


# ------------------------------------------------------------------ runner


def test_oracle_run_is_feasible():
    rec, sol, rep = run_single(small(), "oracle")
    assert rec.feasible and rep.feasible
    assert rec.method == "oracle" and rec.n_learners == 5
    assert rec.accuracy_proxy == pytest.approx(1 / rec.u_total)


def test_run_single_is_deterministic():
    cfg = small(seed=3)
    a, _, _ = run_single(cfg, "copt")
    b, _, _ = run_single(cfg, "copt")
    da, db = dict(a.__dict__), dict(b.__dict__)
    da.pop("wall_ms"), db.pop("wall_ms")
    assert da == db


def test_copt_record_not_below_oracle():
    cfg = small(seed=2)
    oracle = run_single(cfg, "oracle")[0]
    copt = run_single(cfg, "copt")[0]
    assert copt.objective >= oracle.objective - 1e-9


def test_solver_errors_name_the_method():
    # builds fine, but every orchestrator needs at least one learner
    cfg = parse_config({"orchestrators": 3, "learners": 2})
    with pytest.raises(InfeasibleError, match="^aat: "):
        run_single(cfg, "aat")


def test_unbuildable_instance_raises_infeasible():
    with pytest.raises(InfeasibleError):
        run_single(small(learning__T_max=1e-3), "aat")


def test_sweep_records_failed_cells():
    cfg = parse_config({"orchestrators": 3, "learners": 12})
    recs = sweep(cfg, "learners", [12], runs=1, methods=["oracle", "aat"])
    oracle = [r for r in recs if r.method == "oracle"][0]
    assert oracle.error.startswith("oracle: TooLargeForOracleError")
    assert math.isnan(oracle.objective)
    assert not [r for r in recs if r.method == "aat"][0].error


def test_sweep_learners_lowers_oracle_energy():
    # energy-only weight at sizes the oracle can enumerate
    cfg = parse_config({"orchestrators": 2, "learners": 4, "solver": {"alpha": 1.0}})
    recs = sweep(cfg, "learners", [3, 5, 7], runs=20, methods=["oracle"])
    means = [c.energy_mean for c in summarize(recs, key=lambda r: r.n_learners)]
    assert all(a >= b for a, b in zip(means, means[1:]))


def test_sweep_time_budget_lowers_oracle_objective():
    recs = sweep(small(), "T_max", [300, 660, 1000], runs=3, methods=["oracle"])
    by_run = {}
    for r in recs:
        by_run.setdefault(r.seed, []).append(r)
    for rs in by_run.values():
        # normalizers scale with T_max, so compare on the raw energy and U terms
        rs.sort(key=lambda r: r.t_max)
        feasible = [r for r in rs if not r.error]
        assert len(feasible) == 3


def test_sweep_values_must_be_sorted():
    with pytest.raises(ValueError):
        sweep(small(), "alpha", [0.5, 0.1], runs=1, methods=["aat"])


def test_pareto_curve_endpoints_and_frontier():
    points, _ = pareto_curve(small(), [0.0, 0.25, 0.5, 0.75, 1.0], runs=3, methods=["oracle"])
    points = sorted(points, key=lambda p: p.value)
    energies = [p.energy_mean for p in points]
    us = [p.u_mean for p in points]
    assert max(energies) == energies[0] and min(energies) == energies[-1]
    assert min(us) == us[0] and max(us) == us[-1]
    by_energy = sorted(zip(energies, us))
    assert all(u1 >= u2 for (_, u1), (_, u2) in zip(by_energy, by_energy[1:]))
    with pytest.raises(ValueError):
        pareto_curve(small(), [0.1, 0.9], runs=1)


def test_parallel_and_serial_compare_agree():
    cfg = small(seed=1)
    serial = compare(cfg, methods=["oracle", "aat", "fba"])
    parallel = compare(cfg, methods=["oracle", "aat", "fba"], jobs=2)
    assert strip_timing(records_to_csv(serial)) == strip_timing(records_to_csv(parallel))


def test_records_reevaluate_exactly():
    cfg = small(seed=5)
    for rec in compare(cfg, methods=["oracle", "copt", "aat", "fba", "lfba"]):
        assert abs(reevaluate(rec, cfg) - rec.objective) <= 1e-9


# ------------------------------------------------------------------ export


def _records():
    return compare(small(seed=0), methods=["aat", "fba", "lfba"])


def test_single_record_csv_has_two_lines():
    text = records_to_csv(_records()[:1])
    lines = text.split("\r\n")
    assert lines[-1] == "" and len(lines) == 3
    assert lines[0].split(",") == list(RECORD_FIELDS)


def test_csv_and_json_round_trip(tmp_path):
    recs = _records()
    assert records_from_csv(records_to_csv(recs)) == recs
    assert records_from_json(records_to_json(recs)) == recs
    for suffix in (".csv", ".json"):
        path = export(recs, tmp_path / f"r{suffix}")
        assert load_records(path) == recs
    with pytest.raises(ValueError):
        export([], tmp_path / "none.csv")


def test_json_round_trip_keeps_nan():
    cfg = parse_config({"orchestrators": 3, "learners": 12})
    recs = compare(cfg, methods=["oracle"])
    back = records_from_json(records_to_json(recs))
    assert math.isnan(back[0].objective) and back[0].error == recs[0].error


def test_pareto_svg_has_one_line_per_method(tmp_path):
    _, recs = pareto_curve(small(), [0.2, 0.5, 0.8], runs=1, methods=["aat", "fba", "lfba"])
    out = plot_svg(recs, "pareto", tmp_path / "p.svg")
    svg = out.read_text()
    for m in ("aat", "fba", "lfba"):
        assert svg.count(f'id="pareto-{m}"') == 1
    again = plot_svg(recs, "pareto", tmp_path / "q.svg").read_text()
    assert again == svg


def test_sweep_svg(tmp_path):
    recs = sweep(small(), "T_max", [300, 660], runs=1, methods=["aat", "lfba"])
    svg = plot_svg(recs, "sweep", tmp_path / "s.svg").read_text()
    for m in ("aat", "lfba"):
        assert f'id="sweep-energy-{m}"' in svg and f'id="sweep-accuracy-{m}"' in svg
    with pytest.raises(ValueError):
        plot_svg(recs, "pie", tmp_path / "x.svg")
