"""End-to-end checks for the command line: every subcommand runs in a temp
directory on a small hand-built data set, and the artifact files are read
back and cross-checked rather than just tested for existence."""

import csv
import hashlib
import json
import os

import numpy as np
import pytest

from phylink.cli import MissingArtifact, build_parser, load_config_file, main
from phylink.errors import ConfigError
from phylink.interactions import read_edge_csv, read_probability_csv
from phylink.newick import parse_newick
from phylink.sampler import read_trace_csv

HOSTS = ("h1", "h2", "h3", "h4", "h5", "h6")

TREE = "((h1:0.2,h2:0.2):0.6,((h3:0.3,h4:0.3):0.3,(h5:0.25,h6:0.25):0.35):0.2):0.0;"

# host, parasite, year; every parasite documented on at least two hosts
EDGES = [
    ("h1", "p1", 1995), ("h2", "p1", 2001),
    ("h1", "p2", 1988), ("h3", "p2", 1999),
    ("h2", "p3", 2003), ("h4", "p3", 2005),
    ("h3", "p4", 1992), ("h4", "p4", 2010),
    ("h5", "p5", 1985), ("h6", "p5", 2011),
    ("h1", "p6", 2007), ("h5", "p6", 1996),
    ("h2", "p7", 1993), ("h6", "p7", 2004),
    ("h3", "p8", 2000), ("h5", "p8", 2002), ("h6", "p8", 2008),
    ("h4", "p9", 1997), ("h6", "p9", 2012),
]


def _sha(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


def _write_edges(path, rows, header=("host", "parasite", "year")):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    _write_edges(d / "edges.csv", EDGES)
    (d / "tree.nwk").write_text(TREE + "\n", encoding="utf-8")
    single = EDGES + [("h1", "p10", 2001)]
    _write_edges(d / "edges_single.csv", single)
    return d


def run_cli(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def fit_dir(data_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("fit")
    code = run_cli("fit", "--edges", data_dir / "edges.csv",
                   "--tree", data_dir / "tree.nwk",
                   "--iterations", "40", "--burn-in", "20", "--seed", "5",
                   "--out", out)
    assert code == 0
    return out


class TestConfigFile:
    def test_parse(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("iterations = 12  # short\nburn-in=3\n\n# comment only\nmodel= full\n")
        assert load_config_file(p) == {"iterations": "12", "burn_in": "3", "model": "full"}

    def test_missing_equals(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("iterations 12\n")
        with pytest.raises(ConfigError, match="expected key = value"):
            load_config_file(p)

    def test_empty_key(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("= 3\n")
        with pytest.raises(ConfigError, match="empty key"):
            load_config_file(p)

    def test_unreadable(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config_file(tmp_path / "absent.cfg")


class TestFit:
    def test_artifacts(self, fit_dir):
        for name in ("matrix.csv", "trace.csv", "predictive.csv", "summary.csv",
                     "diagnostics.csv", "manifest.json"):
            assert (fit_dir / name).exists()

    def test_stdout_line(self, data_dir, tmp_path, capsys):
        code = run_cli("fit", "--edges", data_dir / "edges.csv",
                       "--tree", data_dir / "tree.nwk",
                       "--iterations", "10", "--burn-in", "5",
                       "--out", tmp_path / "r")
        assert code == 0
        assert "fit: 6 hosts x 9 parasites, 10 recorded sweeps" in capsys.readouterr().out

    def test_predictive_is_probability_matrix(self, fit_dir):
        hosts, parasites, probs = read_probability_csv(fit_dir / "predictive.csv")
        assert tuple(hosts) == HOSTS
        assert len(parasites) == 9
        assert probs.shape == (6, 9)

    def test_trace_rows_match_iterations(self, fit_dir):
        _, _, columns = read_trace_csv(fit_dir / "trace.csv")
        assert len(columns["sweep"]) == 40

    def test_summary_covers_every_parameter(self, fit_dir):
        with open(fit_dir / "summary.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        # header + tree_scale + miss_prob + 6 hosts + 9 parasites
        assert len(rows) == 18
        assert rows[0] == ["parameter", "mean", "sd", "q025", "q975", "ess"]

    def test_manifest_digests_match_files(self, fit_dir, data_dir):
        manifest = json.loads((fit_dir / "manifest.json").read_text())
        assert manifest["command"] == "fit"
        assert manifest["config"]["iterations"] == 40
        for path, digest in manifest["inputs"].items():
            assert _sha(path) == digest
        for name, digest in manifest["outputs"].items():
            assert _sha(fit_dir / name) == digest

    def test_rerun_is_byte_identical(self, data_dir, fit_dir, tmp_path):
        out = tmp_path / "again"
        code = run_cli("fit", "--edges", data_dir / "edges.csv",
                       "--tree", data_dir / "tree.nwk",
                       "--iterations", "40", "--burn-in", "20", "--seed", "5",
                       "--out", out)
        assert code == 0
        for name in ("trace.csv", "predictive.csv", "summary.csv", "manifest.json"):
            assert (out / name).read_bytes() == (fit_dir / name).read_bytes()

    def test_seed_changes_trace(self, data_dir, fit_dir, tmp_path):
        out = tmp_path / "seeded"
        code = run_cli("fit", "--edges", data_dir / "edges.csv",
                       "--tree", data_dir / "tree.nwk",
                       "--iterations", "40", "--burn-in", "20", "--seed", "6",
                       "--out", out)
        assert code == 0
        assert (out / "trace.csv").read_bytes() != (fit_dir / "trace.csv").read_bytes()

    def test_affinity_model_needs_no_tree(self, data_dir, tmp_path):
        code = run_cli("fit", "--edges", data_dir / "edges.csv",
                       "--model", "affinity",
                       "--iterations", "10", "--burn-in", "5",
                       "--out", tmp_path / "r")
        assert code == 0

    def test_with_g_records_miss_probability(self, data_dir, tmp_path):
        out = tmp_path / "g"
        code = run_cli("fit", "--edges", data_dir / "edges.csv",
                       "--tree", data_dir / "tree.nwk", "--with-g",
                       "--iterations", "30", "--burn-in", "10",
                       "--out", out)
        assert code == 0
        _, _, columns = read_trace_csv(out / "trace.csv")
        assert np.any(columns["miss_prob"] > 0)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["model"] == "full+g"

    def test_numeric_empty_neighbor_weight_flag(self, data_dir, tmp_path):
        # regression: the flag used to reach the sampler as an unparsed string
        code = run_cli("fit", "--edges", data_dir / "edges.csv",
                       "--tree", data_dir / "tree.nwk",
                       "--empty-neighbor-weight", "2.5",
                       "--iterations", "10", "--burn-in", "5",
                       "--out", tmp_path / "r")
        assert code == 0

    def test_mean_distance_empty_neighbor_weight(self, data_dir, tmp_path):
        code = run_cli("fit", "--edges", data_dir / "edges.csv",
                       "--tree", data_dir / "tree.nwk",
                       "--empty-neighbor-weight", "mean_distance",
                       "--iterations", "10", "--burn-in", "5",
                       "--out", tmp_path / "r")
        assert code == 0

    def test_year_cutoff_writes_holdout(self, data_dir, tmp_path):
        out = tmp_path / "cut"
        code = run_cli("fit", "--edges", data_dir / "edges.csv",
                       "--tree", data_dir / "tree.nwk", "--year-cutoff", "2004",
                       "--iterations", "20", "--burn-in", "10",
                       "--out", out)
        assert code == 0
        assert (out / "holdout.csv").exists()

    def test_config_file_supplies_defaults(self, data_dir, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("iterations = 35\nburn-in = 5\n")
        out = tmp_path / "fromcfg"
        code = run_cli("fit", "--edges", data_dir / "edges.csv",
                       "--tree", data_dir / "tree.nwk", "--config", cfg,
                       "--out", out)
        assert code == 0
        _, _, columns = read_trace_csv(out / "trace.csv")
        assert len(columns["sweep"]) == 35

    def test_flag_beats_config_file(self, data_dir, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("iterations = 35\nburn-in = 5\n")
        out = tmp_path / "flagged"
        code = run_cli("fit", "--edges", data_dir / "edges.csv",
                       "--tree", data_dir / "tree.nwk", "--config", cfg,
                       "--iterations", "15",
                       "--out", out)
        assert code == 0
        _, _, columns = read_trace_csv(out / "trace.csv")
        assert len(columns["sweep"]) == 15

    def test_bad_config_value_exits_2(self, data_dir, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("iterations = plenty\n")
        code = run_cli("fit", "--edges", data_dir / "edges.csv",
                       "--tree", data_dir / "tree.nwk", "--config", cfg,
                       "--out", tmp_path / "r")
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_missing_edges_exits_2(self, tmp_path):
        assert run_cli("fit", "--out", tmp_path / "r") == 2

    def test_tree_required_for_phylogeny_exits_2(self, data_dir, tmp_path):
        code = run_cli("fit", "--edges", data_dir / "edges.csv",
                       "--out", tmp_path / "r")
        assert code == 2

    def test_zero_iterations_exits_2(self, data_dir, tmp_path):
        code = run_cli("fit", "--edges", data_dir / "edges.csv",
                       "--tree", data_dir / "tree.nwk", "--iterations", "0",
                       "--out", tmp_path / "r")
        assert code == 2

    def test_host_missing_from_tree_exits_3(self, data_dir, tmp_path):
        extra = EDGES + [("h7", "p1", 2001)]
        edges = tmp_path / "edges7.csv"
        _write_edges(edges, extra)
        code = run_cli("fit", "--edges", edges, "--tree", data_dir / "tree.nwk",
                       "--iterations", "10", "--burn-in", "5",
                       "--out", tmp_path / "r")
        assert code == 3

    def test_phylo_refuses_single_host_parasite(self, data_dir, tmp_path, capsys):
        code = run_cli("fit", "--edges", data_dir / "edges_single.csv",
                       "--tree", data_dir / "tree.nwk", "--model", "phylo",
                       "--iterations", "10", "--burn-in", "5",
                       "--out", tmp_path / "r")
        assert code == 3
        assert "drop them" in capsys.readouterr().err

    def test_drop_single_host_flag_recovers(self, data_dir, tmp_path):
        code = run_cli("fit", "--edges", data_dir / "edges_single.csv",
                       "--tree", data_dir / "tree.nwk", "--model", "phylo",
                       "--drop-single-host",
                       "--iterations", "10", "--burn-in", "5",
                       "--out", tmp_path / "r")
        assert code == 0

    def test_loose_label_matching(self, data_dir, tmp_path):
        shouty = tmp_path / "tree_upper.nwk"
        shouty.write_text(TREE.upper() + "\n", encoding="utf-8")
        code = run_cli("fit", "--edges", data_dir / "edges.csv", "--tree", shouty,
                       "--iterations", "10", "--burn-in", "5",
                       "--out", tmp_path / "ok")
        assert code == 0
        code = run_cli("fit", "--edges", data_dir / "edges.csv", "--tree", shouty,
                       "--label-normalize", "none",
                       "--iterations", "10", "--burn-in", "5",
                       "--out", tmp_path / "strict")
        assert code == 3


@pytest.fixture(scope="module")
def cv_dir(data_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("cv")
    code = run_cli("crossval", "--edges", data_dir / "edges.csv",
                   "--models", "affinity,nn", "--folds", "2", "--floor", "1",
                   "--iterations", "30", "--burn-in", "10", "--seed", "2",
                   "--out", out)
    assert code == 0
    return out


class TestCrossval:
    def test_artifacts(self, cv_dir):
        for name in ("folds.csv", "auc.csv", "murphy.csv", "roc.csv",
                     "wilcoxon.csv", "manifest.json"):
            assert (cv_dir / name).exists()

    def test_auc_rows(self, cv_dir):
        with open(cv_dir / "auc.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        # header + per model: 2 folds + 1 average
        assert len(rows) == 7
        avg = [r for r in rows if r[1] == "avg"]
        assert {r[0] for r in avg} == {"affinity", "nn"}
        for r in rows[1:]:
            if r[1] != "avg":
                assert 0.0 <= float(r[2]) <= 1.0

    def test_murphy_grid(self, cv_dir):
        with open(cv_dir / "murphy.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["theta", "affinity", "nn"]
        assert len(rows) == 100
        thetas = np.array([float(r[0]) for r in rows[1:]])
        assert thetas[0] == pytest.approx(0.01)
        assert thetas[-1] == pytest.approx(0.99)

    def test_wilcoxon_pairs(self, cv_dir):
        with open(cv_dir / "wilcoxon.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 3
        # two folds cannot support the signed-rank test
        assert all(r[2] == "nan" for r in rows[1:])

    def test_fold_assignment_values(self, cv_dir):
        with open(cv_dir / "folds.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        cells = np.array([[int(c) for c in row[1:]] for row in rows[1:]])
        assert cells.shape == (6, 9)
        assert set(np.unique(cells)) <= {-1, 0, 1}

    def test_rerun_is_byte_identical(self, data_dir, cv_dir, tmp_path):
        out = tmp_path / "again"
        code = run_cli("crossval", "--edges", data_dir / "edges.csv",
                       "--models", "affinity,nn", "--folds", "2", "--floor", "1",
                       "--iterations", "30", "--burn-in", "10", "--seed", "2",
                       "--out", out)
        assert code == 0
        for name in ("auc.csv", "murphy.csv", "roc.csv", "manifest.json"):
            assert (out / name).read_bytes() == (cv_dir / name).read_bytes()

    def test_full_model_with_tree(self, data_dir, tmp_path, capsys):
        code = run_cli("crossval", "--edges", data_dir / "edges.csv",
                       "--tree", data_dir / "tree.nwk", "--models", "full",
                       "--folds", "2", "--floor", "1",
                       "--iterations", "25", "--burn-in", "10",
                       "--out", tmp_path / "r")
        assert code == 0
        assert "crossval full: area" in capsys.readouterr().out

    def test_single_fold_exits_2(self, data_dir, tmp_path):
        code = run_cli("crossval", "--edges", data_dir / "edges.csv",
                       "--models", "affinity", "--folds", "1",
                       "--iterations", "10", "--burn-in", "5",
                       "--out", tmp_path / "r")
        assert code == 2

    def test_no_models_exits_2(self, data_dir, tmp_path):
        code = run_cli("crossval", "--edges", data_dir / "edges.csv",
                       "--models", " , ", "--out", tmp_path / "r")
        assert code == 2


class TestScan:
    def test_small_grid(self, data_dir, tmp_path, capsys):
        out = tmp_path / "scan"
        code = run_cli("scan", "--edges", data_dir / "edges.csv",
                       "--tree", data_dir / "tree.nwk",
                       "--grid", "eb:-1:1:3,identity", "--folds", "2", "--floor", "1",
                       "--out", out)
        assert code == 0
        with open(out / "scan.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["kind", "parameter", "auc"]
        assert len(rows) == 5
        assert [r[0] for r in rows[1:]] == ["eb", "eb", "eb", "identity"]
        assert "best transform" in capsys.readouterr().out

    def test_bad_grid_token_exits_2(self, data_dir, tmp_path):
        code = run_cli("scan", "--edges", data_dir / "edges.csv",
                       "--tree", data_dir / "tree.nwk", "--grid", "eb:0:1",
                       "--out", tmp_path / "r")
        assert code == 2

    def test_empty_grid_exits_2(self, data_dir, tmp_path):
        code = run_cli("scan", "--edges", data_dir / "edges.csv",
                       "--tree", data_dir / "tree.nwk", "--grid", ",",
                       "--out", tmp_path / "r")
        assert code == 2


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    code = run_cli("simulate", "--hosts", "10", "--parasites", "14",
                   "--tree-scale", "0.8", "--seed", "3", "--out", out)
    assert code == 0
    return out


class TestSimulate:
    def test_artifacts(self, sim_dir):
        for name in ("edges.csv", "tree.nwk", "params.csv", "manifest.json"):
            assert (sim_dir / name).exists()

    def test_edges_and_tree_parse(self, sim_dir):
        records = read_edge_csv(sim_dir / "edges.csv")
        assert records
        hosts = {r.host for r in records}
        tree = parse_newick((sim_dir / "tree.nwk").read_text())
        assert hosts <= set(tree.tip_labels())
        assert len(tree.tip_labels()) == 10

    def test_params_table(self, sim_dir):
        with open(sim_dir / "params.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        kinds = [r[0] for r in rows[1:]]
        assert kinds.count("host_affinity") == 10
        assert kinds.count("parasite_affinity") == 14
        assert kinds.count("tree_scale") == 1

    def test_rerun_is_byte_identical(self, sim_dir, tmp_path):
        out = tmp_path / "again"
        code = run_cli("simulate", "--hosts", "10", "--parasites", "14",
                       "--tree-scale", "0.8", "--seed", "3", "--out", out)
        assert code == 0
        for name in ("edges.csv", "params.csv", "manifest.json"):
            assert (out / name).read_bytes() == (sim_dir / name).read_bytes()

    def test_no_phylogeny_omits_tree(self, tmp_path):
        out = tmp_path / "flat"
        code = run_cli("simulate", "--hosts", "8", "--parasites", "10",
                       "--no-phylogeny", "--seed", "1", "--out", out)
        assert code == 0
        assert not (out / "tree.nwk").exists()

    def test_max_density_exits_2(self, tmp_path):
        code = run_cli("simulate", "--hosts", "10", "--parasites", "14",
                       "--seed", "3", "--max-density", "0.0001",
                       "--out", tmp_path / "r")
        assert code == 2

    def test_too_few_hosts_exits_2(self, tmp_path):
        assert run_cli("simulate", "--hosts", "1", "--out", tmp_path / "r") == 2

    def test_simulated_data_round_trips_through_fit(self, sim_dir, tmp_path):
        code = run_cli("fit", "--edges", sim_dir / "edges.csv",
                       "--tree", sim_dir / "tree.nwk",
                       "--iterations", "15", "--burn-in", "5",
                       "--out", tmp_path / "r")
        assert code == 0


class TestReport:
    def test_fit_report(self, fit_dir, tmp_path):
        out = tmp_path / "figs"
        code = run_cli("report", "--run", fit_dir, "--out", out)
        assert code == 0
        for name in ("degrees.csv", "matrix_leftordered.csv", "report_manifest.json",
                     "degrees.png", "matrix.png", "predictive.png", "trace.png"):
            assert (out / name).exists()
        assert (out / "degrees.png").read_bytes()[:4] == b"\x89PNG"

    def test_degrees_table(self, fit_dir, tmp_path):
        out = tmp_path / "figs"
        assert run_cli("report", "--run", fit_dir, "--out", out) == 0
        with open(out / "degrees.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        axes = {r[0] for r in rows[1:]}
        assert axes == {"host", "parasite"}
        total = sum(int(r[1]) * int(r[2]) for r in rows[1:] if r[0] == "host")
        assert total == len(EDGES)

    def test_holdout_recovery_table(self, data_dir, tmp_path):
        run = tmp_path / "cut"
        code = run_cli("fit", "--edges", data_dir / "edges.csv",
                       "--tree", data_dir / "tree.nwk", "--year-cutoff", "2004",
                       "--iterations", "20", "--burn-in", "10", "--out", run)
        assert code == 0
        assert run_cli("report", "--run", run) == 0
        with open(run / "topx.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        counts = [int(r[1]) for r in rows[1:]]
        assert counts == sorted(counts)
        assert counts[-1] == 6  # links documented after the cutoff
        assert (run / "topx.png").exists()

    def test_crossval_report(self, data_dir, tmp_path):
        run = tmp_path / "cv"
        code = run_cli("crossval", "--edges", data_dir / "edges.csv",
                       "--models", "affinity,nn", "--folds", "2", "--floor", "1",
                       "--iterations", "20", "--burn-in", "5", "--out", run)
        assert code == 0
        assert run_cli("report", "--run", run) == 0
        assert (run / "murphy.png").exists()
        assert (run / "roc.png").exists()

    def test_empty_run_dir_exits_3(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert run_cli("report", "--run", empty) == 3

    def test_matrix_without_trace_exits_3(self, fit_dir, tmp_path):
        partial = tmp_path / "partial"
        partial.mkdir()
        (partial / "matrix.csv").write_bytes((fit_dir / "matrix.csv").read_bytes())
        assert run_cli("report", "--run", partial) == 3

    def test_missing_run_dir_exits_3(self, tmp_path):
        assert run_cli("report", "--run", tmp_path / "nowhere") == 3

    def test_missing_artifact_is_data_error(self):
        from phylink.errors import DataError

        assert issubclass(MissingArtifact, DataError)


class TestParser:
    def test_no_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as err:
            main([])
        assert err.value.code == 2

    def test_unknown_model_choice_exits_2(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            main(["fit", "--model", "bogus", "--out", str(tmp_path)])
        assert err.value.code == 2

    def test_help_exits_0(self, capsys):
        with pytest.raises(SystemExit) as err:
            main(["--help"])
        assert err.value.code == 0
        assert "Subcommands" not in capsys.readouterr().err

    def test_parser_lists_subcommands(self):
        parser = build_parser()
        text = parser.format_help()
        for name in ("fit", "crossval", "scan", "simulate", "report"):
            assert name in text
