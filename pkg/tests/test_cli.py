import json
import os

import pytest

from evolen.cli import main
from evolen.genome import Block, Genome, conv, dense, pool, serialize


def write_config(tmp_path, name="config.json", **overrides):
    cfg = {
        "master_seed": 11,
        "dataset": {"name": "cifar10", "input_shape": [32, 32, 3], "num_classes": 10},
        "backend": {"kind": "surrogate", "family": "length_peak", "peak_length": 6, "noise_scale": 0.02},
    }
    cfg.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run(args):
    return main([str(a) for a in args])


# -- length-search ------------------------------------------------------------


def test_length_search_prints_the_selected_space(tmp_path, capsys):
    config = write_config(tmp_path)
    out = tmp_path / "run"
    assert run(["length-search", "-c", config, "--out", out]) == 0
    assert capsys.readouterr().out.strip() == "[4-8] (effective max 10)"
    assert (out / "spaces.json").exists()
    assert (out / "spaces.csv").exists()


def test_plateau_below_floor_exits_three(tmp_path, capsys):
    config = write_config(
        tmp_path, backend={"kind": "surrogate", "family": "plateau", "level": 0.05}
    )
    out = tmp_path / "run"
    assert run(["length-search", "-c", config, "--out", out]) == 3
    assert "no optimal space" in capsys.readouterr().err
    assert (out / "spaces.json").exists()  # results are still reported


def test_length_search_outputs_are_byte_identical(tmp_path):
    config = write_config(tmp_path)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert run(["length-search", "-c", config, "--out", out_a]) == 0
    assert run(["length-search", "-c", config, "--out", out_b]) == 0
    for name in ("spaces.json", "spaces.csv", "cache.jsonl"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_missing_config_exits_two(tmp_path, capsys):
    assert run(["length-search", "-c", tmp_path / "nope.json"]) == 2
    assert "config error" in capsys.readouterr().err


def test_unknown_config_key_is_named(tmp_path, capsys):
    config = write_config(tmp_path, banana=1)
    assert run(["length-search", "-c", config, "--out", tmp_path / "o"]) == 2
    assert "banana" in capsys.readouterr().err


# -- evolve ---------------------------------------------------------------------


def test_evolve_finds_the_surrogate_peak(tmp_path):
    config = write_config(tmp_path)
    out = tmp_path / "run"
    assert run(["evolve", "-c", config, "--space", "4:8", "--out", out]) == 0
    best = json.loads((out / "best.json").read_text())
    assert best["effective_length"] == 6
    assert (out / "history.csv").exists()
    assert (out / "checkpoint.json").exists()


def test_evolve_uses_prior_length_search_output(tmp_path):
    config = write_config(tmp_path)
    out = tmp_path / "run"
    assert run(["length-search", "-c", config, "--out", out]) == 0
    assert run(["evolve", "-c", config, "--out", out]) == 0
    assert json.loads((out / "best.json").read_text())["effective_length"] == 6


def test_evolve_without_any_space_exits_two(tmp_path, capsys):
    config = write_config(tmp_path)
    assert run(["evolve", "-c", config, "--out", tmp_path / "empty"]) == 2
    assert "--space" in capsys.readouterr().err


def test_deep_space_on_small_input_warns_and_succeeds(tmp_path, capsys):
    # floor(28 / 2^10) = 0: every candidate in [20-24] is out of shape.
    config = write_config(
        tmp_path,
        dataset={"name": "mnist", "input_shape": [28, 28, 1], "num_classes": 10},
        max_generations=2,
    )
    out = tmp_path / "run"
    assert run(["evolve", "-c", config, "--space", "20:24", "--out", out]) == 0
    captured = capsys.readouterr()
    assert "warning" in captured.err
    best = json.loads((out / "best.json").read_text())
    assert best["fitness"] == 0.0


def test_evolve_runs_are_byte_identical(tmp_path):
    config = write_config(tmp_path)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert run(["evolve", "-c", config, "--space", "4:8", "--out", out_a]) == 0
    assert run(["evolve", "-c", config, "--space", "4:8", "--out", out_b]) == 0
    assert (out_a / "history.csv").read_bytes() == (out_b / "history.csv").read_bytes()
    assert (out_a / "best.json").read_bytes() == (out_b / "best.json").read_bytes()


def test_resume_continues_without_generation_gap(tmp_path):
    short = write_config(tmp_path, "short.json", max_generations=3)
    full = write_config(tmp_path, "full.json", max_generations=6)
    out_short = tmp_path / "short"
    out_full = tmp_path / "full"
    out_resumed = tmp_path / "resumed"

    assert run(["evolve", "-c", short, "--space", "4:8", "--out", out_short]) == 0
    assert run([
        "evolve", "-c", full, "--resume", out_short / "checkpoint.json", "--out", out_resumed,
    ]) == 0
    assert run(["evolve", "-c", full, "--space", "4:8", "--out", out_full]) == 0

    resumed = (out_resumed / "history.csv").read_text()
    straight = (out_full / "history.csv").read_text()
    assert resumed == straight
    gens = [int(line.split(",")[0]) for line in resumed.splitlines()[1:]]
    assert sorted(set(gens)) == list(range(7))


def test_seed_flag_changes_the_run(tmp_path):
    config = write_config(tmp_path)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert run(["evolve", "-c", config, "--space", "4:8", "--out", out_a, "--seed", 1]) == 0
    assert run(["evolve", "-c", config, "--space", "4:8", "--out", out_b, "--seed", 2]) == 0
    assert (out_a / "history.csv").read_text() != (out_b / "history.csv").read_text()


# -- eval -----------------------------------------------------------------------


def dense_only_genome():
    return Genome(blocks=(Block(kind="head", layers=(dense(10),)),))


def test_eval_reports_params_for_dense_only_genome(tmp_path, capsys):
    config = write_config(
        tmp_path, dataset={"name": "mnist", "input_shape": [28, 28, 1], "num_classes": 10}
    )
    genome_path = tmp_path / "g.json"
    genome_path.write_text(serialize(dense_only_genome()))
    assert run(["eval", genome_path, "-c", config]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["num_params"] == 7850
    assert payload["out_of_shape"] is False
    assert payload["record"]["source"] == "surrogate"


def test_eval_flags_out_of_shape_genomes(tmp_path, capsys):
    config = write_config(tmp_path)
    blocks = tuple(Block(kind="feature", layers=(conv(16), pool(), pool())) for _ in range(3))
    g = Genome(blocks=blocks + (Block(kind="head", layers=(dense(10),)),))
    genome_path = tmp_path / "deep.json"
    genome_path.write_text(serialize(g))
    assert run(["eval", genome_path, "-c", config]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["out_of_shape"] is True
    assert payload["fitness"] == 0.0


def test_eval_rejects_malformed_genomes(tmp_path, capsys):
    config = write_config(tmp_path)
    genome_path = tmp_path / "bad.json"
    genome_path.write_text("{]")
    assert run(["eval", genome_path, "-c", config]) == 2
    assert "cannot load genome" in capsys.readouterr().err


# -- report ----------------------------------------------------------------------


def test_report_summarizes_each_generation(tmp_path, capsys):
    config = write_config(tmp_path)
    out = tmp_path / "run"
    assert run(["evolve", "-c", config, "--space", "4:8", "--out", out]) == 0
    assert run(["report", out / "history.csv", "--out", out]) == 0
    lines = (out / "generations.csv").read_text().strip().splitlines()
    assert lines[0] == "generation,best_fitness,mean_fitness"
    assert len(lines) == 1 + 11  # generations 0..10
    bests = [float(line.split(",")[1]) for line in lines[1:]]
    assert bests == sorted(bests)
    assert (out / "space_fitness.csv").exists()


def test_report_single_member_history_has_best_equal_mean(tmp_path):
    history = tmp_path / "history.csv"
    history.write_text(
        "generation,individual_id,parent_ids,operator,effective_length,num_params,fitness,loss,eval_seconds\n"
        "0,g000x000,,init,4,1000,0.75,0.25,0.0\n"
    )
    assert run(["report", history, "--out", tmp_path]) == 0
    lines = (tmp_path / "generations.csv").read_text().strip().splitlines()
    assert len(lines) == 2
    _, best, mean = lines[1].split(",")
    assert best == mean


def test_report_on_empty_history_exits_two(tmp_path, capsys):
    history = tmp_path / "history.csv"
    history.write_text(
        "generation,individual_id,parent_ids,operator,effective_length,num_params,fitness,loss,eval_seconds\n"
    )
    assert run(["report", history]) == 2
    assert "empty" in capsys.readouterr().err


def test_report_on_missing_file_exits_two(tmp_path):
    assert run(["report", tmp_path / "nope.csv"]) == 2


def test_report_on_malformed_history_exits_two(tmp_path, capsys):
    history = tmp_path / "history.csv"
    history.write_text("a,b\n1,2\n")
    assert run(["report", history]) == 2
    assert "malformed" in capsys.readouterr().err


# -- environment override ---------------------------------------------------------


def test_backend_cmd_env_override_is_used(tmp_path, monkeypatch, capsys):
    import sys

    stub = os.path.join(os.path.dirname(__file__), "stub_backend.py")
    config = write_config(
        tmp_path, dataset={"name": "mnist", "input_shape": [28, 28, 1], "num_classes": 10}
    )
    genome_path = tmp_path / "g.json"
    genome_path.write_text(serialize(dense_only_genome()))
    monkeypatch.setenv("EVOLEN_BACKEND_CMD", f"{sys.executable} {stub} fixed")
    assert run(["eval", genome_path, "-c", config]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["record"]["source"] == "external"
    assert payload["record"]["fitness"] == 0.42
