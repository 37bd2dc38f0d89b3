import os

import numpy as np
import pytest

from privdistill import cli, data, experiment, metrics, nn

TINY = """\
[gen]
n_samples = 1200
[model]
raw_hidden = 16,8
priv_hidden = 8,4
[teacher]
epochs = 2
[student]
epochs = 2
[experiment]
seeds = 1,2
"""

PIPELINE = [
    ["gen"],
    ["train-teacher"],
    ["export-distill"],
    ["train-student", "--mode", "plain"],
    ["train-student", "--mode", "pfd"],
    ["train-student", "--mode", "cpfd"],
    ["train-student", "--mode", "cpfd", "--mapping", "tanh", "--temperature", "2"],
    ["eval", "--model", "teacher"],
    ["eval", "--model", "cpfd-exp_decay"],
    ["analyze"],
    ["sweep", "--axis", "temperature"],
    ["sweep", "--axis", "mapping"],
    ["run"],
]


def _run(tmp, argv, cfg="tiny.ini"):
    return cli.main(argv + ["--config", str(tmp / cfg), "--out", str(tmp / "runs")])


def _tree(root):
    out = {}
    for d, _, files in os.walk(root):
        for f in files:
            p = os.path.join(d, f)
            with open(p, "rb") as fh:
                out[os.path.relpath(p, root)] = fh.read()
    return out


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    (tmp / "tiny.ini").write_text(TINY)
    codes = [_run(tmp, argv) for argv in PIPELINE]
    return tmp, codes


def test_pipeline_succeeds(pipeline):
    _, codes = pipeline
    assert codes == [0] * len(PIPELINE)


def test_layout_keyed_by_config_hash(pipeline):
    tmp, _ = pipeline
    cfg = experiment.load_config(tmp / "tiny.ini")
    root = tmp / "runs" / cfg.config_hash
    for seed in (1, 2):
        names = set(os.listdir(root / f"seed-{seed}"))
        assert {"train.txt", "eval.txt", "teacher.ckpt", "distill.txt", "student-cpfd-exp_decay.ckpt",
                "student-cpfd-tanh-T2.ckpt"} <= names
    assert {"report.tsv", "report.txt", "config.ini", "sweep-temperature.txt"} <= set(os.listdir(root))
    # the written config copy parses back to the same experiment
    assert experiment.load_config(root / "config.ini").config_hash == cfg.config_hash


def test_all_commands_byte_identical_on_rerun(pipeline, tmp_path):
    tmp, _ = pipeline
    (tmp_path / "tiny.ini").write_text(TINY)
    for argv in PIPELINE:
        assert _run(tmp_path, argv) == 0
    assert _tree(tmp / "runs") == _tree(tmp_path / "runs")


def test_sweep_tables(pipeline):
    tmp, _ = pipeline
    root = tmp / "runs" / experiment.load_config(tmp / "tiny.ini").config_hash
    header = (root / "sweep-temperature.txt").read_text().splitlines()[0].split()
    assert header[1:] == ["T=0.5", "T=1", "T=2", "plain"]
    rows = [l.split("\t")[0] for l in (root / "sweep-mapping.tsv").read_text().splitlines()[1:]]
    assert len(set(rows) - {"plain"}) == 4


def test_analyze_outputs(pipeline):
    tmp, _ = pipeline
    seed_dir = tmp / "runs" / experiment.load_config(tmp / "tiny.ini").config_hash / "seed-1"
    rows = [l.split("\t") for l in (seed_dir / "analyze-alpha.tsv").read_text().splitlines()[1:]]
    thr = {float(a) for k, _, a in rows if k == "threshold"}
    assert thr == {0.9, 0.1}
    exp = [float(a) for k, _, a in rows if k == "exp_decay"]
    assert all(b < a for a, b in zip(exp, exp[1:]))
    counts = [l.split("\t") for l in (seed_dir / "analyze-confidence.tsv").read_text().splitlines()[1:]]
    n_eval = len(data.read_dataset(seed_dir / "eval.txt"))
    assert sum(int(c[3]) for c in counts if c[2] == "all") == n_eval
    assert {c[0] for c in counts} == {"1"}


def test_existing_outputs_refused_without_force(pipeline, capsys):
    tmp, _ = pipeline
    assert _run(tmp, ["gen"]) == 2
    assert capsys.readouterr().err.startswith("error: ExistsError: ")
    assert _run(tmp, ["gen", "--seed", "1", "--force"]) == 0


def test_student_without_export_is_dependency_error(tmp_path, capsys):
    (tmp_path / "tiny.ini").write_text(TINY)
    assert _run(tmp_path, ["gen", "--seed", "1"]) == 0
    capsys.readouterr()
    assert _run(tmp_path, ["train-student", "--mode", "cpfd", "--seed", "1"]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error: DependencyError: ") and "export-distill" in err
    assert err.count("\n") == 1


def test_invalid_config_writes_nothing(tmp_path, capsys):
    (tmp_path / "bad.ini").write_text("[gen]\npositive_rate = 1.0\n")
    assert _run(tmp_path, ["gen"], cfg="bad.ini") == 2
    assert capsys.readouterr().err.startswith("error: ConfigError: ")
    assert not (tmp_path / "runs").exists()


def test_unknown_config_key(tmp_path, capsys):
    (tmp_path / "bad.ini").write_text("[gen]\nn_sample = 10\n")
    assert _run(tmp_path, ["gen"], cfg="bad.ini") == 2
    assert "ConfigError" in capsys.readouterr().err


def test_eval_width_mismatch_and_empty_file(pipeline, tmp_path, capsys):
    tmp, _ = pipeline
    seed_dir = tmp / "runs" / experiment.load_config(tmp / "tiny.ini").config_hash / "seed-1"
    ckpt = str(seed_dir / "student-plain.ckpt")
    narrow = tmp_path / "narrow.txt"
    narrow.write_text("#privdistill-v1 d_raw=2 d_priv=1 K=2\n0,1,0.5,0.5,0.1\n")
    assert cli.main(["eval", "--checkpoint", ckpt, "--eval-file", str(narrow)]) == 2
    assert capsys.readouterr().err.startswith("error: ShapeError: ")
    empty = tmp_path / "empty.txt"
    empty.write_text("#privdistill-v1 d_raw=32 d_priv=18 K=2\n")
    assert cli.main(["eval", "--checkpoint", ckpt, "--eval-file", str(empty)]) == 2
    assert capsys.readouterr().err.startswith("error: ParameterError: ")


def test_eval_report_fields(pipeline):
    tmp, _ = pipeline
    seed_dir = tmp / "runs" / experiment.load_config(tmp / "tiny.ini").config_hash / "seed-1"
    header = (seed_dir / "teacher.eval.tsv").read_text().splitlines()[0].split("\t")
    for f in ("roc_auc", "pr_auc", "f1_at_half", "best_f1", "hit_rate", "n_pos", "n_neg"):
        assert f in header


def test_random_student_is_chance_level():
    cfg = experiment.ExperimentConfig()
    aucs = []
    for seed in range(1, 6):
        _, ev = experiment.make_split(cfg, seed)
        model = nn.StudentModel.build(cfg.raw_spec(), seed=seed)
        aucs.append(metrics.roc_auc(experiment.student_scores(model, ev), ev.labels))
    assert 0.4 <= np.mean(aucs) <= 0.6


def test_run_report_aggregate_recomputes():
    cfg = experiment.parse_config(TINY)
    report = experiment.run_benchmark(cfg)
    agg = report.aggregate()
    for model in report.models():
        vals = report.values(model, "roc_auc")
        assert abs(agg[model]["roc_auc"][0] - np.mean(vals)) <= 1e-12
        assert abs(agg[model]["roc_auc"][1] - np.std(vals, ddof=1)) <= 1e-12
