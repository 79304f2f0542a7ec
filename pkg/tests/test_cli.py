"""Command-line behavior: artifacts, determinism, exit codes, diagnostics."""

import json
from pathlib import Path

import numpy as np
import pytest

from expertlib.cli import main
from expertlib.library import load_library, load_registry
from expertlib.model import ADAPTER_PREFIX, CONFIG_KEY
from expertlib.params import load_params
from expertlib.tasks import load_taskset, save_taskset
from expertlib.synth import make_copy_token_task


def run(*args) -> int:
    return main([str(a) for a in args])


@pytest.fixture()
def work(tmp_path, monkeypatch):
    # Relative paths keep meta sidecars location-independent.
    monkeypatch.chdir(tmp_path)
    return tmp_path


def write_tiny_base(work, name="base.params", seed=0):
    assert run("init-model", "--out", name, "--layers", 1, "--dim", 16,
               "--adapter-dim", 2, "--heads", 2, "--vocab", 64,
               "--max-tokens", 16, "--seed", seed) == 0
    return name


def write_task(work, name="copytoken.jsonl", n=12, seed=0):
    # Task names round-trip through the file stem, so the file is named
    # after the task it holds.
    save_taskset(make_copy_token_task(num_instances=n, seed=seed), work / name)
    return name


def train_tiny(work, task, base, kind="pe", out="expert.params",
               expert_id=None, registry="registry.jsonl"):
    args = ["train-expert", "--task", task, "--base", base, "--kind", kind,
            "--out", out, "--registry", registry, "--epochs", 1,
            "--learning-rate", 0.05, "--seed", 0]
    if expert_id:
        args += ["--expert-id", expert_id]
    assert run(*args) == 0
    return out


# ----------------------------------------------------------------- gen-tasks


def test_gen_tasks_writes_split_tree(work, capsys):
    assert run("gen-tasks", "--out", "tasks", "--families", 2, "--prompts", 2,
               "--instances", 6, "--val-instances", 3, "--test-instances", 4,
               "--seed", 0) == 0
    for split, count in (("train", 6), ("validation", 3), ("test", 4)):
        files = sorted(p.name for p in (work / "tasks" / split).glob("*.jsonl"))
        assert files == ["family00_prompt0.jsonl", "family00_prompt1.jsonl",
                         "family01_prompt0.jsonl", "family01_prompt1.jsonl"]
        task = load_taskset(work / "tasks" / split / files[0])
        assert len(task) == count
    meta = json.loads((work / "tasks" / "meta.json").read_text())
    assert meta["seed"] == 0 and "expertlib" in meta["versions"]


def test_gen_tasks_generative_flag_adds_sequence_tasks(work):
    assert run("gen-tasks", "--out", "tasks", "--families", 1, "--prompts", 1,
               "--instances", 5, "--generative", "--seed", 1) == 0
    names = {p.stem for p in (work / "tasks" / "train").glob("*.jsonl")}
    assert {"copy", "reverse", "compose", "copytoken"} <= names


def test_gen_tasks_rerun_is_byte_identical(work):
    for out in ("a", "b"):
        assert run("gen-tasks", "--out", out, "--families", 2, "--prompts", 1,
                   "--instances", 5, "--seed", 3) == 0
    for path in sorted((work / "a").rglob("*")):
        if path.is_file():
            twin = work / "b" / path.relative_to(work / "a")
            assert path.read_bytes() == twin.read_bytes()


# ---------------------------------------------------------------- init/train


def test_init_model_writes_loadable_params(work):
    write_tiny_base(work)
    params = load_params("base.params")
    assert CONFIG_KEY in params
    meta = json.loads(Path("base.params.meta.json").read_text())
    assert meta["inputs"] == {} and meta["seed"] == 0


def test_train_expert_pe_writes_adapter_only_file(work):
    base = write_tiny_base(work)
    task = write_task(work)
    out = train_tiny(work, task, base, kind="pe")
    trained = load_params(out)
    assert all(name.startswith(ADAPTER_PREFIX) for name in trained)
    record = load_registry("registry.jsonl")["copytoken"]
    assert record.kind == "pe" and record.params_path == out
    assert record.source == ("copytoken", None)


def test_train_expert_de_writes_full_schema(work):
    base = write_tiny_base(work)
    task = write_task(work)
    out = train_tiny(work, task, base, kind="de", out="de.params",
                     expert_id="copytoken_de")
    trained = load_params(out)
    assert set(trained) == set(load_params(base))


def test_train_expert_rerun_is_byte_identical_and_registry_idempotent(work):
    base = write_tiny_base(work)
    task = write_task(work)
    train_tiny(work, task, base)
    first = Path("expert.params").read_bytes()
    first_registry = Path("registry.jsonl").read_bytes()
    train_tiny(work, task, base)
    assert Path("expert.params").read_bytes() == first
    assert Path("registry.jsonl").read_bytes() == first_registry


def test_train_expert_conflicting_reregistration_fails(work, capsys):
    base = write_tiny_base(work)
    task = write_task(work)
    train_tiny(work, task, base)
    code = run("train-expert", "--task", task, "--base", base, "--kind", "de",
               "--out", "other.params", "--registry", "registry.jsonl",
               "--epochs", 1, "--seed", 0)
    assert code == 1
    assert "DuplicateExpertIdError" in capsys.readouterr().err


def test_train_expert_epoch_log_goes_to_stderr(work, capsys):
    base = write_tiny_base(work)
    task = write_task(work)
    assert run("train-expert", "--task", task, "--base", base, "--kind", "pe",
               "--out", "e.params", "--registry", "registry.jsonl",
               "--epochs", 2, "--seed", 0) == 0
    err = capsys.readouterr().err
    assert err.count("epoch=") == 2 and "loss=" in err


# ------------------------------------------------------------------- library


def suite(work, n_tasks=3, n=10):
    base = write_tiny_base(work)
    Path("tasks").mkdir(exist_ok=True)
    names = []
    for i in range(n_tasks):
        task = make_copy_token_task(num_instances=n, seed=i)
        task = type(task)(name=f"fam{i:02d}_prompt0", instances=task.instances,
                          split=task.split)
        save_taskset(task, work / "tasks" / f"{task.name}.jsonl")
        train_tiny(work, f"tasks/{task.name}.jsonl", base,
                   out=f"{task.name}.params", expert_id=task.name)
        names.append(task.name)
    return base, names


def test_build_library_default_header(work):
    suite(work)
    assert run("build-library", "--registry", "registry.jsonl", "--tasks",
               "tasks", "--out", "library.jsonl", "--seed", 0) == 0
    header = json.loads(Path("library.jsonl").read_text().splitlines()[0])
    assert header["S"] == 100 and header["format"] == "e"
    library = load_library("library.jsonl")
    assert library.num_experts() == 3 and len(library) == 30


def test_build_library_missing_params_names_dangling_id(work, capsys):
    suite(work)
    Path("fam01_prompt0.params").unlink()
    code = run("build-library", "--registry", "registry.jsonl", "--tasks",
               "tasks", "--out", "library.jsonl")
    assert code == 1
    err = capsys.readouterr().err
    assert "DanglingExpertIdError" in err and "fam01_prompt0" in err


def test_build_library_external_vectors(work):
    base, names = suite(work, n_tasks=2, n=4)
    rng = np.random.default_rng(0)
    with open("vecs.jsonl", "w") as fh:
        for name in names:
            for inst in load_taskset(f"tasks/{name}.jsonl").instances:
                vec = rng.normal(size=8).tolist()
                fh.write(json.dumps({"id": inst.instance_id, "vector": vec}) + "\n")
    assert run("build-library", "--registry", "registry.jsonl", "--tasks",
               "tasks", "--out", "library.jsonl", "--embed",
               "external:vecs.jsonl", "--S", 4) == 0
    library = load_library("library.jsonl")
    assert library.dim == 8
    for entry in library.entries:
        assert abs(np.linalg.norm(entry.key.astype(np.float64)) - 1.0) < 1e-6


def test_add_expert_appends_without_touching_old_bytes(work):
    base, names = suite(work, n_tasks=2)
    assert run("build-library", "--registry", "registry.jsonl", "--tasks",
               "tasks", "--out", "library.jsonl", "--S", 5) == 0
    before = Path("library.jsonl").read_bytes()
    new_task = make_copy_token_task(num_instances=6, seed=9)
    save_taskset(new_task, work / "new.jsonl")
    assert run("add-expert", "--library", "library.jsonl", "--expert-id",
               "newbie", "--task", "new.jsonl") == 0
    after = Path("library.jsonl").read_bytes()
    assert after[:len(before)] == before
    assert load_library("library.jsonl").num_experts() == 3


# ------------------------------------------------------------ route and eval


def test_route_prints_decision_and_single_expert_is_unanimous(work, capsys):
    base, names = suite(work, n_tasks=1, n=8)
    assert run("build-library", "--registry", "registry.jsonl", "--tasks",
               "tasks", "--out", "library.jsonl", "--S", 5) == 0
    assert run("route", "--library", "library.jsonl", "--task",
               "tasks/fam00_prompt0.jsonl", "--Q", 4, "--seed", 0,
               "--out", "decision.json") == 0
    decision = json.loads(capsys.readouterr().out)
    assert decision["chosen_expert"] == "fam00_prompt0"
    assert decision["votes"] == {"fam00_prompt0": 4}
    assert decision["seed"] == 0
    assert json.loads(Path("decision.json").read_text()) == decision


def test_route_default_q_is_32(work, capsys):
    base, names = suite(work, n_tasks=1, n=40)
    assert run("build-library", "--registry", "registry.jsonl", "--tasks",
               "tasks", "--out", "library.jsonl", "--S", 5) == 0
    assert run("route", "--library", "library.jsonl", "--task",
               "tasks/fam00_prompt0.jsonl") == 0
    decision = json.loads(capsys.readouterr().out)
    assert len(decision["per_query"]) == 32


def test_eval_via_decision_resolves_registry_params(work, capsys):
    base, names = suite(work, n_tasks=2, n=8)
    assert run("build-library", "--registry", "registry.jsonl", "--tasks",
               "tasks", "--out", "library.jsonl", "--S", 5) == 0
    assert run("route", "--library", "library.jsonl", "--task",
               "tasks/fam01_prompt0.jsonl", "--Q", 4, "--out",
               "decision.json") == 0
    capsys.readouterr()
    assert run("eval", "--decision", "decision.json", "--registry",
               "registry.jsonl", "--base", base, "--report", "report.json",
               "tasks/fam01_prompt0.jsonl") == 0
    report = json.loads(capsys.readouterr().out)
    assert report["expert"] == "fam01_prompt0"
    direct = run("eval", "--params", "fam01_prompt0.params", "--base", base,
                 "--expert-id", "fam01_prompt0", "tasks/fam01_prompt0.jsonl")
    assert direct == 0
    assert json.loads(capsys.readouterr().out)["mean"] == report["mean"]


def test_eval_mean_matches_per_task_rows(work, capsys):
    base, names = suite(work, n_tasks=2, n=8)
    assert run("eval", "--params", "fam00_prompt0.params", "--base", base,
               "tasks/fam00_prompt0.jsonl", "tasks/fam01_prompt0.jsonl") == 0
    report = json.loads(capsys.readouterr().out)
    values = list(report["per_task"].values())
    assert len(values) == 2
    assert abs(report["mean"] - sum(values) / len(values)) < 1e-9


def test_eval_adapter_without_base_fails(work, capsys):
    base, names = suite(work, n_tasks=1, n=6)
    code = run("eval", "--params", "fam00_prompt0.params",
               "tasks/fam00_prompt0.jsonl")
    assert code == 1
    assert "--base is required" in capsys.readouterr().err


def test_rank_experts_table_and_report(work, capsys):
    base, names = suite(work, n_tasks=3, n=8)
    assert run("rank-experts", "--registry", "registry.jsonl", "--base", base,
               "--report", "ranking.json", "tasks/fam00_prompt0.jsonl",
               "tasks/fam01_prompt0.jsonl") == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].split() == ["expert", "mean", "metric"]
    assert len(lines) == 2 + 3
    rows = [json.loads(line) for line in
            Path("ranking.json").read_text().splitlines()]
    means = [row["mean"] for row in rows]
    assert means == sorted(means, reverse=True)
    assert {row["expert"] for row in rows} == set(names)


# --------------------------------------------------------------------- merge


def test_merge_uniform_default_and_explicit_lambdas(work, capsys):
    base, names = suite(work, n_tasks=2, n=6)
    assert run("merge", "--base", base, "--registry", "registry.jsonl",
               "--experts", *names, "--out", "uniform.params") == 0
    assert json.loads(capsys.readouterr().out) == {"lambdas": [0.5, 0.5]}
    assert run("merge", "--base", base, "--registry", "registry.jsonl",
               "--experts", *names, "--lambdas", 1.0, 1.0, "--out",
               "ones.params") == 0
    assert json.loads(capsys.readouterr().out) == {"lambdas": [1.0, 1.0]}
    uniform = load_params("uniform.params")
    ones = load_params("ones.params")
    a, b = (load_params(f"{n}.params") for n in names)
    for name in uniform:
        manual = (a[name].astype(np.float64) + b[name].astype(np.float64))
        np.testing.assert_array_equal(ones[name],
                                      manual.astype(np.float32))
        np.testing.assert_array_equal(uniform[name],
                                      (0.5 * manual).astype(np.float32))


def test_merge_search_dominates_log_and_writes_artifacts(work, capsys):
    base, names = suite(work, n_tasks=2, n=6)
    save_taskset(make_copy_token_task(num_instances=5, seed=0,
                                      split="validation"), work / "val.jsonl")
    assert run("merge", "--base", base, "--registry", "registry.jsonl",
               "--experts", *names, "--search", "val.jsonl", "--out",
               "merged.params", "--grid", 0.0, 0.5, 1.0, "--seed", 0) == 0
    chosen = json.loads(capsys.readouterr().out)
    lines = [json.loads(line) for line in
             Path("merged.params.search.jsonl").read_text().splitlines()]
    points = [line for line in lines if "chosen" not in line]
    assert len(points) == 9
    assert all(chosen["score"] >= p["score"] for p in points)
    assert lines[-1]["chosen"] is True
    assert load_params("merged.params") is not None


def test_merge_rejects_mixed_kinds_and_unknown_ids(work, capsys):
    base, names = suite(work, n_tasks=1, n=6)
    task = write_task(work, name="detask.jsonl", n=6, seed=7)
    train_tiny(work, "detask.jsonl", base, kind="de", out="de.params",
               expert_id="full_expert")
    code = run("merge", "--base", base, "--registry", "registry.jsonl",
               "--experts", names[0], "full_expert", "--out", "m.params")
    assert code == 1
    assert "SchemaMismatchError" in capsys.readouterr().err
    code = run("merge", "--base", base, "--registry", "registry.jsonl",
               "--experts", "ghost", "--out", "m.params")
    assert code == 1
    assert "ghost" in capsys.readouterr().err


def test_merge_lambda_count_mismatch_fails(work, capsys):
    base, names = suite(work, n_tasks=2, n=6)
    code = run("merge", "--base", base, "--registry", "registry.jsonl",
               "--experts", *names, "--lambdas", 1.0, "--out", "m.params")
    assert code == 1
    assert "2 experts" in capsys.readouterr().err


# ----------------------------------------------------------------- sidecars


def test_every_artifact_gets_a_meta_sidecar(work):
    base, names = suite(work, n_tasks=1, n=6)
    assert run("build-library", "--registry", "registry.jsonl", "--tasks",
               "tasks", "--out", "library.jsonl", "--S", 3, "--seed", 5) == 0
    meta = json.loads(Path("library.jsonl.meta.json").read_text())
    assert meta["seed"] == 5
    assert "registry.jsonl" in meta["inputs"]
    assert all(len(v) == 8 for v in meta["inputs"].values())
    assert Path("fam00_prompt0.params.meta.json").exists()


def test_unknown_embed_flag_fails_cleanly(work, capsys):
    base, names = suite(work, n_tasks=1, n=6)
    code = run("build-library", "--registry", "registry.jsonl", "--tasks",
               "tasks", "--out", "library.jsonl", "--embed", "fancy")
    assert code == 1
    assert "ValueError" in capsys.readouterr().err
