import csv
import itertools
import json
from pathlib import Path

import numpy as np
import pytest

from mdpgn.cli import main
from mdpgn.config import parse_config, set_path
from mdpgn.envs.gridworlds import build_hallway
from mdpgn.exceptions import ConfigError
from mdpgn.experiments import repeat_seeds
from mdpgn.mdp import expected_return

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

EM_DOC = json.loads((CONFIGS / "random_tabular_em.json").read_text())


def write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestValidate:
    def test_affine_suite(self, capsys):
        assert main(["validate", "--suite", "affine"]) == 0
        out = capsys.readouterr().out
        assert "negative control" in out and "(seed 0)" in out

    def test_em_gn_suite(self, capsys):
        assert main(["validate", "--suite", "em-gn", "--seed", "1"]) == 0
        assert "PASS [em-gn]" in capsys.readouterr().out

    def test_unknown_suite(self, capsys):
        assert main(["validate", "--suite", "nope"]) == 2
        assert "--suite" in capsys.readouterr().err

    def test_failure_exit_code(self, monkeypatch):
        from mdpgn import validation

        failing = lambda seed: [validation.PropertyResult("x", "always fails", seed, False, "")]
        monkeypatch.setitem(validation.SUITES, "x", failing)
        assert main(["validate", "--suite", "x"]) == 1


class TestTrain:
    def test_zero_iterations(self, tmp_path):
        doc = dict(EM_DOC, iterations=0, repeats=1)
        assert main(["train", "--config", write(tmp_path, doc), "--out", str(tmp_path / "o")]) == 0
        rows = read_csv(tmp_path / "o" / "run_0.csv")
        assert len(rows) == 1 and rows[0]["iteration"] == "0"
        header = (tmp_path / "o" / "run_0.csv").read_text().splitlines()[0]
        assert header == "iteration,return,grad_norm,step_size,direction_norm,wall_ms,seed"

    def test_byte_identical(self, tmp_path):
        cfg = write(tmp_path, EM_DOC)
        main(["train", "--config", cfg, "--out", str(tmp_path / "a")])
        main(["train", "--config", cfg, "--out", str(tmp_path / "b")])
        for name in ("run_0.csv", "run_2.csv", "aggregate.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_sampled_byte_identical(self, tmp_path):
        doc = json.loads((CONFIGS / "navigation_gn2.json").read_text())
        doc.update(iterations=3, repeats=2, estimator={"trajectories": 5, "horizon": 10})
        cfg = write(tmp_path, doc)
        main(["train", "--config", cfg, "--out", str(tmp_path / "a")])
        main(["train", "--config", cfg, "--out", str(tmp_path / "b")])
        assert (tmp_path / "a" / "aggregate.csv").read_bytes() == (tmp_path / "b" / "aggregate.csv").read_bytes()

    def test_aggregate_recomputation(self, tmp_path):
        doc = dict(EM_DOC, repeats=4, iterations=6)
        main(["train", "--config", write(tmp_path, doc), "--out", str(tmp_path / "o")])
        runs = [read_csv(tmp_path / "o" / f"run_{k}.csv") for k in range(4)]
        agg = read_csv(tmp_path / "o" / "aggregate.csv")
        seeds = {r[0]["seed"] for r in runs}
        assert len(seeds) == 4 and {int(s) for s in seeds} == set(repeat_seeds(1, 4))
        for i, row in enumerate(agg):
            vals = np.array([float(r[i]["return"]) for r in runs if len(r) > i])
            assert float(row["return"]) == pytest.approx(vals.mean(), abs=1e-12)
            assert float(row["return_se"]) == pytest.approx(vals.std(ddof=1) / np.sqrt(len(vals)), abs=1e-12)
            assert row["seed"] == "1"

    def test_hallway_reaches_enumerated_optimum(self, tmp_path):
        out = tmp_path / "h"
        assert main(["train", "--config", str(CONFIGS / "hallway_gn2.json"), "--out", str(out)]) == 0
        final = float(read_csv(out / "run_0.csv")[-1]["return"])
        mdp, _ = build_hallway()
        best = 0.0
        # every deterministic tabular policy
        for acts in itertools.product(range(4), repeat=mdp.num_states):
            pi = np.eye(4)[list(acts)]
            best = max(best, expected_return(mdp, pi))
        assert final <= best + 1e-12
        assert final >= 0.99 * best

    def test_sweep(self, tmp_path, capsys):
        doc = dict(EM_DOC, rule="gauss_newton_2", iterations=3, repeats=1)
        code = main(["sweep", "--config", write(tmp_path, doc), "--param", "schedule.alpha", "--values", "0.5,1.0",
                     "--out", str(tmp_path / "s")])
        assert code == 0
        assert (tmp_path / "s" / "schedule.alpha=0.5" / "aggregate.csv").exists()
        assert "schedule.alpha=1.0" in capsys.readouterr().out


class TestErrors:
    def test_unknown_key(self, tmp_path, capsys):
        assert main(["train", "--config", write(tmp_path, dict(EM_DOC, colour="red"))]) == 2
        assert "colour" in capsys.readouterr().err

    @pytest.mark.parametrize("path,value,needle", [
        ("repeats", 0, "repeats"),
        ("rule", "newton", "rule.kind"),
        ("environment.states", "four", "environment.states"),
        ("policy.sigma", -1.0, "policy.sigma"),
        ("schedule.steps", [], "schedule.steps"),
    ])
    def test_field_messages(self, path, value, needle):
        with pytest.raises(ConfigError, match=needle.replace(".", r"\.")):
            parse_config(set_path(EM_DOC, path, value))

    def test_missing_file(self, tmp_path):
        assert main(["train", "--config", str(tmp_path / "none.json")]) == 2

    def test_diagnostics_need_tabular(self, tmp_path):
        assert main(["diagnose-hessian", "--config", str(CONFIGS / "tetris_gn2.json"), "--out", str(tmp_path)]) == 2

    def test_numerical_failure_exit(self, tmp_path, capsys):
        # far from an optimum -(A1 + A2) is indefinite and GN1 refuses to step
        doc = {"environment": {"id": "random_tabular", "states": 5, "actions": 3, "features": 3, "instance_seed": 2},
               "policy": "gibbs", "rule": "gauss_newton_1", "iterations": 5, "init": {"kind": "normal", "scale": 2.0}}
        assert main(["train", "--config", write(tmp_path, doc), "--out", str(tmp_path / "o")]) == 3
        assert "not positive definite" in capsys.readouterr().err


class TestDiagnostics:
    def test_hallway_ratio_grows(self, tmp_path):
        code = main(["diagnose-hessian", "--config", str(CONFIGS / "hallway_diagnostics.json"), "--out", str(tmp_path)])
        assert code == 0
        rows = read_csv(tmp_path / "hessian_diagnostics.csv")
        ratio = [float(r["ratio_a1_h12"]) for r in rows]
        assert all(b > a for a, b in zip(ratio, ratio[1:]))
        assert ratio[-1] >= 100
        dist = [float(r["distance"]) for r in rows]
        assert dist[-1] == 0.0
