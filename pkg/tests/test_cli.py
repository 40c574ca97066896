from __future__ import annotations

import csv
import io
import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liquidpower.cli import (
    CSV_FIELDS,
    EXIT_FAIL,
    EXIT_INPUT,
    EXIT_NOT_COMPLETE,
    EXIT_OVERLAP,
    EXIT_TOO_LARGE,
    InputError,
    election_from_dict,
    election_to_dict,
    fixture_path,
    game_from_dict,
    game_to_dict,
    main,
    parse_profile,
    rows_to_csv,
)
from liquidpower.constructions import random_lde
from liquidpower.core import NULL_AGENT
from liquidpower.experiments import ExperimentConfig, run_experiment
from liquidpower.game import DelegationGame, theorem2_instance

D1 = str(fixture_path("example1_d1.json"))
D2 = str(fixture_path("example1_d2.json"))
T2 = str(fixture_path("theorem2_game.json"))


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def write(tmp_path, name, doc) -> str:
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


class TestFiles:
    def test_fixtures(self):
        lde = election_from_dict(json.loads(open(D2).read()))
        assert lde.profile.targets == (3, 3, 3, 3) and lde.quota == 3
        assert game_from_dict(json.loads(open(T2).read())) == theorem2_instance()

    def test_abstain_and_fraction_quota(self):
        lde = election_from_dict({"agents": 3, "delegations": [0, 2, 2], "weights": [1, "1/2", 2], "quota": "13/6"})
        assert lde.profile.targets == (NULL_AGENT, 1, 1)
        assert lde.weights[1] == Fraction(1, 2) and lde.quota == Fraction(13, 6)

    @pytest.mark.parametrize(
        "doc",
        [
            {"agents": 2, "delegations": [1], "quota": 2},
            {"agents": 2, "delegations": [1, 3], "quota": 2},
            {"agents": 2, "delegations": [1, 2]},
            {"agents": 2, "delegations": [1, 2], "quota": 1},
            {"agents": 2, "delegations": [1, 2], "quota": "x"},
            {"agents": 0, "delegations": [], "quota": 1},
        ],
    )
    def test_bad_elections(self, doc):
        with pytest.raises(InputError):
            election_from_dict(doc)

    def test_bad_game(self):
        with pytest.raises(InputError):
            game_from_dict({"agents": 2, "edges": [[1, 1]], "accuracies": [0.6, 0.7], "quota": 2})
        with pytest.raises(InputError):
            game_from_dict({"agents": 2, "edges": [], "accuracies": [0.4, 0.7], "quota": 2})

    @settings(max_examples=60)
    @given(st.integers(0, 2**32 - 1))
    def test_election_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        lde = random_lde(rng, int(rng.integers(1, 8)))
        doc = election_to_dict(lde)
        again = election_from_dict(json.loads(json.dumps(doc)))
        assert again == lde
        assert election_to_dict(again) == doc

    @settings(max_examples=40)
    @given(st.integers(0, 2**32 - 1))
    def test_game_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 7))
        pairs = [(i, j) for i in range(n) for j in range(n) if i != j and rng.random() < 0.5]
        g = DelegationGame.from_pairs(n, pairs, tuple(rng.uniform(0.51, 1, n)), n // 2 + 1, float(rng.random()))
        assert game_from_dict(json.loads(json.dumps(game_to_dict(g)))) == g

    def test_profile_parsing(self, tmp_path):
        assert parse_profile("2,3,4,4", 4).targets == (1, 2, 3, 3)
        assert parse_profile("0, 2", 2).targets == (NULL_AGENT, 1)
        assert parse_profile(D1, 4).targets == (1, 2, 3, 3)
        for bad in ("1,2", "1,x,3,4", "5,1,1,1"):
            with pytest.raises(InputError):
                parse_profile(bad, 4)


class TestPower:
    def test_example_exact(self, capsys):
        code, out, _ = run(capsys, "power", D2, "--exact")
        assert code == 0
        assert "agent 4: DB=1/2" in out and "agent 1: DB=1/4" in out

    def test_json(self, capsys):
        code, out, _ = run(capsys, "power", D1, "--json")
        doc = json.loads(out)
        assert code == 0
        assert doc["agents"][0]["db"] == "0" and doc["agents"][3]["db"] == "1/4"
        assert doc["agents"][0]["class"] != doc["agents"][3]["class"]

    def test_single_agent(self, capsys):
        code, out, _ = run(capsys, "power", D2, "--agent", "4")
        assert code == 0 and out.strip().startswith("agent 4: DB=1/2")

    def test_trivial_all_gurus(self, capsys, tmp_path):
        f = write(tmp_path, "t.json", {"agents": 3, "delegations": [1, 2, 3], "quota": 2})
        code, out, _ = run(capsys, "power", f, "--json")
        assert code == 0
        assert {a["class"] for a in json.loads(out)["agents"]} == {"guru"}

    def test_mc(self, capsys):
        code, out, _ = run(capsys, "power", D2, "--mc=15000", "--seed", "3", "--json")
        assert code == 0
        est = {a["agent"]: a["db_estimate"] for a in json.loads(out)["agents"]}
        assert abs(est[4] - 0.5) <= 0.011 and abs(est[1] - 0.25) <= 0.011

    def test_too_large(self, capsys, tmp_path):
        f = write(tmp_path, "big.json", {"agents": 12, "delegations": list(range(1, 13)), "quota": 7})
        code, _, err = run(capsys, "power", f, "--exact", "--cap", "10")
        assert code == EXIT_TOO_LARGE and "error" in err

    def test_parse_errors(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run(capsys, "power", str(bad))[0] == EXIT_INPUT
        assert run(capsys, "power", str(tmp_path / "missing.json"))[0] == EXIT_INPUT
        assert run(capsys, "power", D2, "--agent", "9")[0] == EXIT_INPUT


class TestAxioms:
    def test_random_bp(self, capsys):
        code, out, _ = run(capsys, "axioms", "--random", "n=6", "count=100", "seed=1", "--axiom=BP")
        assert code == 0, out

    def test_constant_index_np_fails(self, capsys):
        code, out, _ = run(capsys, "axioms", D1, "--axiom", "NP", "--index", "const1")
        assert code == EXIT_FAIL
        assert "witness" in out.lower() or "agent" in out.lower()

    def test_facts_on_fixtures(self, capsys):
        code, _, _ = run(capsys, "axioms", D1, D2, "--axiom", "facts")
        assert code == 0

    def test_all_on_fixture(self, capsys):
        code, out, _ = run(capsys, "axioms", D2, "--json")
        assert code == 0
        json.loads(out)

    def test_example_pair_is_incompatible(self, capsys):
        # Same agents, different delegations: no composite exists for SP.
        assert run(capsys, "axioms", D1, D2)[0] == EXIT_OVERLAP

    def test_incompatible_overlap(self, capsys, tmp_path):
        a = write(tmp_path, "a.json", {"agents": 2, "delegations": [2, 2], "quota": 2, "labels": [1, 2]})
        b = write(tmp_path, "b.json", {"agents": 2, "delegations": [1, 2], "quota": 2, "labels": [1, 2]})
        code, _, err = run(capsys, "axioms", a, b, "--axiom", "SP")
        assert code == EXIT_OVERLAP and "error" in err

    def test_bad_random_spec(self, capsys):
        assert run(capsys, "axioms", "--random", "n=six")[0] == EXIT_INPUT


class TestGame:
    def test_theorem2_find(self, capsys):
        code, out, _ = run(capsys, "game", "--preset", "theorem2", "--find-ne")
        assert code == 0
        assert out.splitlines()[0] == "1 pure NE found (15/16 profiles refuted)"
        assert "NE: 3,2,3,4,5,6" in out

    def test_theorem2_verbose(self, capsys):
        code, out, _ = run(capsys, "game", "--preset", "theorem2", "--find-ne", "--verbose")
        assert code == 0 and len(out.splitlines()) == 2 + 16

    def test_construct(self, capsys, tmp_path):
        f = write(tmp_path, "g.json", {"agents": 3, "edges": [[i, j] for i in (1, 2, 3) for j in (1, 2, 3) if i != j], "accuracies": [0.9, 0.7, 0.6], "quota": 2})
        code, out, _ = run(capsys, "game", f, "--construct-ne")
        assert code == 0
        assert out.splitlines() == ["profile 1,2,3", "verified NE: true"]

    def test_check_trivial(self, capsys, tmp_path):
        f = write(tmp_path, "g.json", {"agents": 3, "edges": [[i, j] for i in (1, 2, 3) for j in (1, 2, 3) if i != j], "accuracies": [0.9, 0.7, 0.6], "quota": 2})
        code, out, _ = run(capsys, "game", f, "--check-ne", "1,2,3", "--json")
        assert code == 0 and json.loads(out)["is_nash"] is True

    def test_check_with_witness(self, capsys):
        code, out, _ = run(capsys, "game", "--preset", "theorem2", "--check-ne", "1,2,3,4,5,6")
        assert code == 0
        assert "NE: false" in out and "deviation: agent 1" in out

    def test_not_complete(self, capsys):
        code, _, err = run(capsys, "game", "--preset", "theorem2", "--construct-ne")
        assert code == EXIT_NOT_COMPLETE and "error" in err

    def test_illegal_profile(self, capsys):
        assert run(capsys, "game", "--preset", "theorem2", "--check-ne", "1,2,1,4,5,6")[0] == EXIT_INPUT

    def test_too_large(self, capsys, tmp_path):
        n = 12
        f = write(tmp_path, "g.json", {"agents": n, "edges": [[i, j] for i in range(1, n + 1) for j in range(1, n + 1) if i != j], "accuracies": [0.7] * n, "quota": 7})
        assert run(capsys, "game", f, "--find-ne")[0] == EXIT_TOO_LARGE


class TestExperiment:
    SMALL = ["--n", "6", "--quota", "4", "--instances", "2", "--samples", "500"]

    def _rows(self, text):
        return list(csv.DictReader(io.StringIO(text)))

    def test_header_and_shape_a(self, capsys):
        code, out, _ = run(capsys, "experiment", "--preset", "A", *self.SMALL)
        assert code == 0
        assert out.splitlines()[0] == ",".join(CSV_FIELDS)
        rows = self._rows(out)
        assert len(rows) == 20
        assert [r["grid_value"] for r in rows[::2]] == ["0.1", "0.2", "0.3", "0.4", "0.5", "0.6", "0.7", "0.8", "0.9", "1.0"]

    def test_preset_c_grid(self, capsys):
        code, out, _ = run(capsys, "experiment", "--preset", "C", "--n", "28", "--instances", "1", "--samples", "200", "--max-rounds", "2")
        assert code == 0
        assert [r["grid_value"] for r in self._rows(out)[::2]] == ["18", "21", "24", "27"]

    def test_byte_identical(self, capsys, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run(capsys, "experiment", "--preset", "B", "--seed", "42", *self.SMALL, "--out", str(a))[0] == 0
        assert run(capsys, "experiment", "--preset", "B", "--seed", "42", *self.SMALL, "--out", str(b), "--threads", "2")[0] == 0
        assert a.read_bytes() == b.read_bytes()
        assert all(r["master_seed"] == "42" for r in self._rows(a.read_text()))

    def test_config_file(self, capsys, tmp_path):
        cfg = write(tmp_path, "c.json", {"name": "mine", "n": 6, "quota": "7/2", "instances": 1, "mc_samples": 300, "grid_param": "p", "grid": [0.0, 0.5]})
        code, out, _ = run(capsys, "experiment", "--config", cfg)
        assert code == 0
        rows = self._rows(out)
        assert len(rows) == 4 and rows[0]["preset"] == "mine"
        assert rows[0]["delegator_ratio"] == "0.000000"

    def test_config_errors(self, capsys, tmp_path):
        assert run(capsys, "experiment", "--config", write(tmp_path, "x.json", {"n": 6}))[0] == EXIT_INPUT
        assert run(capsys, "experiment", "--config", write(tmp_path, "y.json", {"n": 6, "bogus": 1, "grid_param": "p", "grid": [1]}))[0] == EXIT_INPUT
        assert run(capsys, "experiment", "--preset", "B", "--n", "15", "--quota", "7")[0] == EXIT_INPUT

    def test_csv_formatting(self):
        cfg = ExperimentConfig(n=6, quota=Fraction(7, 2), instances=1, mc_samples=300)
        rows = run_experiment(cfg, "quota", [Fraction(7, 2), 4], threads=1)
        parsed = self._rows(rows_to_csv(rows))
        assert [r["grid_value"] for r in parsed] == ["7/2", "7/2", "4", "4"]
        for r in parsed:
            for f in ("delegator_ratio", "gini", "mean_rounds"):
                assert len(r[f].split(".")[1]) == 6
            assert r["instances"] == "1" and r["converged_count"] in ("0", "1")
