"""Experiment configuration, artifact layout, pipelines and reports.

Everything the CLI does goes through here so the same code backs the
command line and the test suite. Output paths are a pure function of
(config hash, seed, artifact name).
"""
from __future__ import annotations

import configparser
import hashlib
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import confmap, data, metrics, nn, train
from .confmap import MAPPING_KINDS, MappingConfig
from .errors import ConfigError, DependencyError, ExistsError, ParameterError, ShapeError
from .nn import MlpSpec, write_atomic
from .train import TrainConfig

log = logging.getLogger(__name__)

SWEEP_DEFAULTS = {
    "mapping": MAPPING_KINDS,
    "temperature": (0.5, 1.0, 2.0),
    "alpha": (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9),
}
METRIC_FIELDS = ("roc_auc", "pr_auc", "f1_at_half", "best_f1", "hit_rate")
MAPPING_OVERRIDE_KEYS = tuple(f.name for f in fields(MappingConfig) if f.name != "kind")


@dataclass(frozen=True)
class ExperimentConfig:
    gen: data.GenConfig = field(default_factory=data.GenConfig)
    eval_fraction: float = 0.1
    raw_hidden: tuple = (64, 32)
    priv_hidden: tuple = (32, 16)
    teacher: TrainConfig = field(default_factory=lambda: TrainConfig(mode="teacher"))
    student: TrainConfig = field(default_factory=lambda: TrainConfig(mode="pfd"))
    mapping_kind: str = "exp_decay"
    mapping_overrides: tuple = ()
    pfd_alphas: tuple = (0.3, 0.5, 0.7)
    analysis_alpha: float = 0.5
    seeds: tuple = (1, 2, 3, 4, 5)
    sweep_mapping: tuple = SWEEP_DEFAULTS["mapping"]
    sweep_temperature: tuple = SWEEP_DEFAULTS["temperature"]
    sweep_alpha: tuple = SWEEP_DEFAULTS["alpha"]
    out_dir: str = "runs"

    def validate(self):
        self.gen.validate()
        if not 0.0 < self.eval_fraction < 1.0:
            raise ConfigError(f"eval_fraction must lie in (0, 1), got {self.eval_fraction}")
        if not self.seeds:
            raise ConfigError("seed list must be nonempty")
        MlpSpec((self.gen.d_raw,) + tuple(self.raw_hidden))
        MlpSpec((self.gen.d_priv_total,) + tuple(self.priv_hidden))
        replace(self.teacher, mode="teacher").validate()
        replace(self.student, mode="pfd").validate()
        if self.mapping_kind not in confmap.KINDS:
            raise ConfigError(f"unknown mapping kind {self.mapping_kind!r}")
        for key, _ in self.mapping_overrides:
            if key not in MAPPING_OVERRIDE_KEYS:
                raise ConfigError(f"unknown mapping override {key!r}")
        for a in tuple(self.pfd_alphas) + tuple(self.sweep_alpha) + (self.analysis_alpha,):
            if not 0.0 <= a <= 1.0:
                raise ConfigError(f"alpha {a} outside [0, 1]")
        for t in self.sweep_temperature:
            if not t > 0:
                raise ConfigError(f"temperature {t} must be positive")
        for k in self.sweep_mapping:
            if k not in confmap.KINDS:
                raise ConfigError(f"unknown sweep mapping kind {k!r}")
        return self

    def canonical(self):
        """Stable text of every setting that affects artifacts (not seeds or paths)."""
        d = asdict(self)
        d.pop("seeds")
        d.pop("out_dir")
        for k in ("teacher", "student"):
            d[k].pop("seed")
            d[k].pop("mode")
        d["gen"].pop("seed")
        return repr(sorted(d.items()))

    @property
    def config_hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:12]

    def raw_spec(self):
        return MlpSpec((self.gen.d_raw,) + tuple(self.raw_hidden))

    def priv_spec(self):
        return MlpSpec((self.gen.d_priv_total,) + tuple(self.priv_hidden))

    def sweep_values(self, axis):
        try:
            return {"mapping": self.sweep_mapping, "temperature": self.sweep_temperature, "alpha": self.sweep_alpha}[axis]
        except KeyError:
            raise ConfigError(f"unknown sweep axis {axis!r}") from None


# --- config file -------------------------------------------------------------

def _coerce(raw, default, key):
    try:
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [x.strip() for x in raw.split(",") if x.strip()]
            sample = default[0] if default else ""
            if isinstance(sample, str):
                return tuple(items)
            if isinstance(sample, int) and not isinstance(sample, bool):
                if all(x.lstrip("-").isdigit() for x in items):
                    return tuple(int(x) for x in items)
            return tuple(float(x) for x in items)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def _apply(obj, section, items, skip=()):
    kw = {}
    names = {f.name for f in fields(obj)}
    for key, raw in items:
        if key not in names or key in skip:
            raise ConfigError(f"unknown key [{section}] {key}")
        kw[key] = _coerce(raw, getattr(obj, key), f"[{section}] {key}")
    return replace(obj, **kw)


def parse_config(text):
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from None
    cfg = ExperimentConfig()
    known = {"gen", "model", "teacher", "student", "mapping", "experiment", "sweep"}
    for section in cp.sections():
        if section not in known:
            raise ConfigError(f"unknown section [{section}]")
    if cp.has_section("gen"):
        cfg = replace(cfg, gen=_apply(cfg.gen, "gen", cp.items("gen"), skip=("seed",)))
    if cp.has_section("teacher"):
        cfg = replace(cfg, teacher=_apply(cfg.teacher, "teacher", cp.items("teacher"), skip=("mode", "seed", "mapping")))
    if cp.has_section("student"):
        cfg = replace(cfg, student=_apply(cfg.student, "student", cp.items("student"), skip=("mode", "seed", "mapping")))
    top = {}
    for section, keys in (
        ("model", {"raw_hidden", "priv_hidden"}),
        ("experiment", {"eval_fraction", "pfd_alphas", "analysis_alpha", "seeds", "out_dir"}),
        ("sweep", {"mapping", "temperature", "alpha"}),
    ):
        if not cp.has_section(section):
            continue
        for key, raw in cp.items(section):
            if key not in keys:
                raise ConfigError(f"unknown key [{section}] {key}")
            name = f"sweep_{key}" if section == "sweep" else key
            top[name] = _coerce(raw, getattr(cfg, name), f"[{section}] {key}")
    cfg = replace(cfg, **top)
    if cp.has_section("mapping"):
        overrides = []
        for key, raw in cp.items("mapping"):
            if key == "kind":
                cfg = replace(cfg, mapping_kind=raw.strip())
            elif key in MAPPING_OVERRIDE_KEYS:
                overrides.append((key, _coerce(raw, 0.0, f"[mapping] {key}")))
            else:
                raise ConfigError(f"unknown key [mapping] {key}")
        cfg = replace(cfg, mapping_overrides=tuple(sorted(overrides)))
    return cfg.validate()


def load_config(path=None):
    if path is None:
        return ExperimentConfig().validate()
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def config_file_text(cfg):
    """Render a config back to the INI form accepted by :func:`parse_config`.

    ``out_dir`` is left out: the copy lives inside the output tree.
    """
    def fmt(v):
        if isinstance(v, tuple):
            return ",".join(str(x) for x in v)
        return str(v)

    lines = ["[gen]"]
    lines += [f"{f.name} = {fmt(getattr(cfg.gen, f.name))}" for f in fields(cfg.gen) if f.name != "seed"]
    lines += ["", "[model]", f"raw_hidden = {fmt(cfg.raw_hidden)}", f"priv_hidden = {fmt(cfg.priv_hidden)}"]
    for name in ("teacher", "student"):
        tc = getattr(cfg, name)
        lines += ["", f"[{name}]"]
        lines += [f"{f.name} = {getattr(tc, f.name)}" for f in fields(tc) if f.name not in ("mode", "seed", "mapping")]
    lines += ["", "[mapping]", f"kind = {cfg.mapping_kind}"] + [f"{k} = {v}" for k, v in cfg.mapping_overrides]
    lines += [
        "",
        "[experiment]",
        f"eval_fraction = {cfg.eval_fraction}",
        f"pfd_alphas = {fmt(cfg.pfd_alphas)}",
        f"analysis_alpha = {cfg.analysis_alpha}",
        f"seeds = {fmt(cfg.seeds)}",
        "",
        "[sweep]",
        f"mapping = {fmt(cfg.sweep_mapping)}",
        f"temperature = {fmt(cfg.sweep_temperature)}",
        f"alpha = {fmt(cfg.sweep_alpha)}",
    ]
    return "\n".join(lines) + "\n"


# --- layout ------------------------------------------------------------------

class Layout:
    def __init__(self, cfg, out_dir=None):
        self.root = os.path.join(out_dir or cfg.out_dir, cfg.config_hash)

    def seed_dir(self, seed):
        return os.path.join(self.root, f"seed-{seed}")

    def path(self, seed, name):
        return os.path.join(self.seed_dir(seed), name)

    def shared(self, name):
        return os.path.join(self.root, name)


def student_name(mode, alpha=None, kind=None, temperature=None, default_temperature=1.0):
    if mode == "plain":
        name = "plain"
    elif mode == "pfd":
        name = f"pfd-a{alpha:g}"
    else:
        name = f"cpfd-{kind}"
    if temperature is not None and temperature != default_temperature and mode != "plain":
        name += f"-T{temperature:g}"
    return name


def guard(paths, force):
    """Refuse to overwrite finished artifacts unless forced."""
    existing = [p for p in paths if os.path.exists(p)]
    if existing and not force:
        raise ExistsError(f"{existing[0]} already exists; pass --force to recompute")


def require(path, step):
    if not os.path.exists(path):
        raise DependencyError(f"missing {path}; run `privdistill {step}` first")
    return path


# --- pipeline pieces -----------------------------------------------------------

def make_split(cfg, seed):
    dataset = data.generate(replace(cfg.gen, seed=seed))
    return data.split(dataset, cfg.eval_fraction, seed)


def teacher_config(cfg, seed):
    return replace(cfg.teacher, mode="teacher", seed=seed)


def student_config(cfg, seed, mode, alpha=None, mapping=None, temperature=None):
    tc = replace(
        cfg.student,
        mode=mode,
        seed=seed,
        alpha=cfg.student.alpha if alpha is None else alpha,
        mapping=mapping,
        temperature=cfg.student.temperature if temperature is None else temperature,
    )
    return tc.validate()


def mapping_for(cfg, kind, stats):
    return confmap.default_config_from_stats(kind, stats, **dict(cfg.mapping_overrides))


@dataclass
class SeedArtifacts:
    seed: int
    train: data.Dataset
    eval: data.Dataset
    teacher: nn.TeacherModel
    teacher_log: train.TrainLog
    records: data.DistillSet
    eval_records: data.DistillSet
    stats: confmap.TeacherStats


def prepare_seed(cfg, seed):
    tr, ev = make_split(cfg, seed)
    teacher, tlog = train.train_teacher(teacher_config(cfg, seed), tr, ev, cfg.raw_spec(), cfg.priv_spec())
    records = data.export_distill(teacher, tr)
    eval_records = data.export_distill(teacher, ev)
    return SeedArtifacts(seed, tr, ev, teacher, tlog, records, eval_records, confmap.calibrate(records.teacher_loss))


def fit_student(cfg, art, mode, alpha=None, kind=None, temperature=None):
    mapping = mapping_for(cfg, kind, art.stats) if mode == "cpfd" else None
    tc = student_config(cfg, art.seed, mode, alpha, mapping, temperature)
    return train.train_student(tc, art.records, art.eval, art.stats, cfg.raw_spec())


def student_scores(model, eval_set):
    return nn.positive_scores(model.logits(eval_set.raw))


def teacher_scores(model, eval_set):
    return nn.positive_scores(model.logits(eval_set.raw, eval_set.priv))


# --- run report ----------------------------------------------------------------

def mean_std(values):
    v = np.asarray([x for x in values if x is not None], dtype=np.float64)
    if v.size == 0:
        return None, None
    std = float(v.std(ddof=1)) if v.size > 1 else 0.0
    return float(v.mean()), std


def gap_closure(f1_student, f1_plain, f1_teacher):
    """Fraction of the teacher-minus-plain F1 gap recovered; None when there is no gap."""
    if not f1_teacher > f1_plain:
        return None
    return (f1_student - f1_plain) / (f1_teacher - f1_plain)


@dataclass
class RunReport:
    seeds: tuple
    metrics: dict  # seed -> model name -> MetricsReport
    confidence: dict  # seed -> ConfidenceTable
    pfd_alpha: float
    cpfd_name: str
    f1_field: str = "f1_at_half"

    def models(self):
        return list(next(iter(self.metrics.values())).keys())

    def values(self, model, metric):
        return [getattr(self.metrics[s][model], metric) for s in self.seeds]

    def aggregate(self):
        return {
            m: {k: mean_std(self.values(m, k)) for k in METRIC_FIELDS} for m in self.models()
        }

    def f1(self, model):
        return mean_std(self.values(model, self.f1_field))[0]

    def closure_per_seed(self):
        out = {}
        for s in self.seeds:
            m = self.metrics[s]
            out[s] = gap_closure(
                getattr(m["cpfd"], self.f1_field), getattr(m["plain"], self.f1_field), getattr(m["teacher"], self.f1_field)
            )
        return out

    def closure(self):
        return gap_closure(self.f1("cpfd"), self.f1("plain"), self.f1("teacher"))


def run_benchmark(cfg, seeds=None, keep_artifacts=False):
    """Teacher, plain, PFD over ``cfg.pfd_alphas`` and CPFD for every seed.

    The "pfd" row is the alpha with the best seed-mean F1.
    Returns the report, plus the per-seed artifacts when ``keep_artifacts``.
    """
    cfg.validate()
    seeds = tuple(seeds or cfg.seeds)
    per_seed, conf, arts = {}, {}, {}
    for seed in seeds:
        art = prepare_seed(cfg, seed)
        ev = art.eval
        rows = {"teacher": metrics.evaluate(teacher_scores(art.teacher, ev), ev.labels)}
        plain, _ = fit_student(cfg, art, "plain")
        rows["plain"] = metrics.evaluate(student_scores(plain, ev), ev.labels)
        analysis_scores = None
        for a in cfg.pfd_alphas:
            model, _ = fit_student(cfg, art, "pfd", alpha=a)
            scores = student_scores(model, ev)
            rows[f"pfd-a{a:g}"] = metrics.evaluate(scores, ev.labels)
            if a == cfg.analysis_alpha:
                analysis_scores = scores
        cpfd, _ = fit_student(cfg, art, "cpfd", kind=cfg.mapping_kind)
        rows["cpfd"] = metrics.evaluate(student_scores(cpfd, ev), ev.labels)
        if analysis_scores is None:
            model, _ = fit_student(cfg, art, "pfd", alpha=cfg.analysis_alpha)
            analysis_scores = student_scores(model, ev)
        conf[seed] = metrics.confidence_table(art.eval_records.teacher_loss, analysis_scores, ev.labels)
        per_seed[seed] = rows
        if keep_artifacts:
            arts[seed] = art
        log.info("seed %s done: %s", seed, {k: round(v.f1_at_half, 4) for k, v in rows.items()})
    report = RunReport(seeds, per_seed, conf, pfd_alpha=0.0, cpfd_name=f"cpfd-{cfg.mapping_kind}")
    best = max(cfg.pfd_alphas, key=lambda a: report.f1(f"pfd-a{a:g}"))
    report.pfd_alpha = best
    for s in seeds:
        per_seed[s]["pfd"] = per_seed[s][f"pfd-a{best:g}"]
    return (report, arts) if keep_artifacts else report


# --- sweeps --------------------------------------------------------------------

def sweep_student_kwargs(axis, value, cfg):
    if axis == "plain":
        return {"mode": "plain"}
    if axis == "mapping":
        return {"mode": "cpfd", "kind": value}
    if axis == "temperature":
        return {"mode": "cpfd", "kind": cfg.mapping_kind, "temperature": float(value)}
    if axis == "alpha":
        return {"mode": "pfd", "alpha": float(value)}
    raise ConfigError(f"unknown sweep axis {axis!r}")


@dataclass
class SweepReport:
    axis: str
    values: tuple
    seeds: tuple
    cells: dict  # value label -> seed -> MetricsReport

    def labels(self):
        return list(self.cells)

    def stat(self, label, metric):
        return mean_std([getattr(self.cells[label][s], metric) for s in self.seeds])


def value_label(axis, value):
    if axis == "mapping":
        return str(value)
    if axis == "temperature":
        return f"T={float(value):g}"
    return f"alpha={float(value):g}"


def sweep_in_memory(cfg, axis, artifacts, include_plain=True):
    values = cfg.sweep_values(axis)
    seeds = tuple(artifacts)
    cells = {}
    if include_plain:
        cells["plain"] = {}
        for s, art in artifacts.items():
            m, _ = fit_student(cfg, art, "plain")
            cells["plain"][s] = metrics.evaluate(student_scores(m, art.eval), art.eval.labels)
    for v in values:
        label = value_label(axis, v)
        cells[label] = {}
        for s, art in artifacts.items():
            m, _ = fit_student(cfg, art, **sweep_student_kwargs(axis, v, cfg))
            cells[label][s] = metrics.evaluate(student_scores(m, art.eval), art.eval.labels)
    return SweepReport(axis, tuple(values), seeds, cells)


# --- rendering -------------------------------------------------------------------

def _num(x, digits=4):
    return "-" if x is None else f"{x:.{digits}f}"


def _pm(ms):
    mean, std = ms
    return "-" if mean is None else f"{mean:.4f} ± {std:.4f}"


def metrics_tsv(rows):
    """rows: iterable of (key columns dict, MetricsReport)."""
    rows = list(rows)
    keys = list(rows[0][0]) if rows else []
    cols = list(metrics.MetricsReport.__dataclass_fields__)
    out = ["\t".join(keys + cols)]
    for key, rep in rows:
        d = rep.as_dict()
        out.append("\t".join([str(key[k]) for k in keys] + ["" if d[c] is None else format(d[c], ".17g") if isinstance(d[c], float) else str(d[c]) for c in cols]))
    return "\n".join(out) + "\n"


def aligned(header, rows):
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]
    def line(r):
        return "  ".join(str(c).ljust(w) if i == 0 else str(c).rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
    sep = "-" * len(line(header))
    return "\n".join([line(header), sep] + [line(r) for r in rows]) + "\n"


def metrics_table(report, name="model"):
    header = ["model", "ROC AUC", "PR AUC", "F1@0.5", "best F1", "hit rate", "n_pos", "n_neg"]
    row = [name] + [_num(getattr(report, k)) for k in METRIC_FIELDS] + [report.n_pos, report.n_neg]
    return aligned(header, [row])


def confidence_text(table):
    header = ["Mean teacher loss", "Neg sample", "Pos sample", "Overall"]
    rows = []
    for r in table.ROWS:
        rows.append([f"Student {r}"] + [f"{_num(table.means[r][c])} (n={table.counts[r][c]})" for c in table.COLS])
    return aligned(header, rows)


def confidence_tsv(tables):
    out = ["seed\trow\tcol\tcount\tmean_teacher_loss"]
    for seed, t in tables.items():
        for r in t.ROWS:
            for c in t.COLS:
                m = t.means[r][c]
                out.append(f"{seed}\t{r}\t{c}\t{t.counts[r][c]}\t{'' if m is None else format(m, '.17g')}")
    return "\n".join(out) + "\n"


def run_report_text(report):
    agg = report.aggregate()
    order = ["teacher", "plain"] + [m for m in report.models() if m.startswith("pfd-a")] + ["pfd", "cpfd"]
    rows = []
    for m in order:
        label = {"pfd": f"pfd (best alpha={report.pfd_alpha:g})", "cpfd": report.cpfd_name}.get(m, m)
        rows.append([label] + [_pm(agg[m][k]) for k in METRIC_FIELDS])
    text = aligned(["model", "ROC AUC", "PR AUC", "F1@0.5", "best F1", "hit rate"], rows)
    closure = report.closure()
    per = report.closure_per_seed()
    text += "\ngap closure (mean F1): " + _num(closure) + "\n"
    text += "gap closure per seed: " + ", ".join(f"{s}:{_num(v)}" for s, v in per.items()) + "\n"
    text += f"gap closure mean ± std: {_pm(mean_std(per.values()))}\n"
    for seed, t in report.confidence.items():
        text += f"\nconfidence table, seed {seed} (pfd alpha student)\n" + confidence_text(t)
    return text


def run_report_tsv(report):
    rows = []
    for s in report.seeds:
        for m, rep in report.metrics[s].items():
            rows.append(({"seed": s, "model": m}, rep))
    text = metrics_tsv(rows)
    agg = report.aggregate()
    text += "#aggregate\nmodel\tmetric\tmean\tstd\n"
    for m in report.models():
        for k in METRIC_FIELDS:
            mean, std = agg[m][k]
            text += f"{m}\t{k}\t{'' if mean is None else format(mean, '.17g')}\t{'' if std is None else format(std, '.17g')}\n"
    closure = report.closure()
    text += f"#gap_closure\t{'' if closure is None else format(closure, '.17g')}\n"
    return text


def sweep_text(rep):
    if rep.axis == "temperature":
        labels = [l for l in rep.labels() if l != "plain"]
        header = ["metric"] + labels + (["plain"] if "plain" in rep.cells else [])
        rows = []
        for k in METRIC_FIELDS:
            rows.append([k] + [_pm(rep.stat(l, k)) for l in header[1:]])
        return aligned(header, rows)
    header = [rep.axis] + list(METRIC_FIELDS)
    return aligned(header, [[l] + [_pm(rep.stat(l, k)) for k in METRIC_FIELDS] for l in rep.labels()])


def sweep_tsv(rep):
    out = ["value\tmetric\tmean\tstd\t" + "\t".join(f"seed_{s}" for s in rep.seeds)]
    for l in rep.labels():
        for k in METRIC_FIELDS:
            mean, std = rep.stat(l, k)
            per = [getattr(rep.cells[l][s], k) for s in rep.seeds]
            out.append("\t".join([l, k, "" if mean is None else format(mean, ".17g"), "" if std is None else format(std, ".17g")]
                                 + ["" if v is None else format(v, ".17g") for v in per]))
    return "\n".join(out) + "\n"


def alpha_curves(stats, cfg, n_points=21):
    out = {}
    for kind in MAPPING_KINDS:
        mc = mapping_for(cfg, kind, stats)
        out[kind] = confmap.alpha_curve(mc, n_points)
    return out


def alpha_curves_tsv(curves):
    out = ["kind\tteacher_loss\talpha"]
    for kind, (grid, alpha) in curves.items():
        out += [f"{kind}\t{l:.17g}\t{a:.17g}" for l, a in zip(grid, alpha)]
    return "\n".join(out) + "\n"


# --- disk-backed steps (used by the CLI) ------------------------------------------

def step_gen(cfg, seed, layout, force=False):
    paths = [layout.path(seed, n) for n in ("train.txt", "eval.txt", "manifest.txt")]
    guard(paths, force)
    tr, ev = make_split(cfg, seed)
    os.makedirs(layout.seed_dir(seed), exist_ok=True)
    data.write_dataset(tr, paths[0])
    data.write_dataset(ev, paths[1])
    write_atomic(
        paths[2],
        f"config {cfg.config_hash}\nseed {seed}\ntrain {len(tr)} positives={int(tr.labels.sum())}\n"
        f"eval {len(ev)} positives={int(ev.labels.sum())}\nd_raw {tr.d_raw}\nd_priv {tr.d_priv}\n",
    )
    return paths


def step_teacher(cfg, seed, layout, force=False):
    ckpt, logp = layout.path(seed, "teacher.ckpt"), layout.path(seed, "teacher.log")
    guard([ckpt, logp], force)
    tr = data.read_dataset(require(layout.path(seed, "train.txt"), "gen"))
    ev = data.read_dataset(require(layout.path(seed, "eval.txt"), "gen"))
    model, tlog = train.train_teacher(teacher_config(cfg, seed), tr, ev, cfg.raw_spec(), cfg.priv_spec())
    nn.save_checkpoint(model, ckpt)
    write_atomic(logp, tlog.text())
    log.info("teacher seed %s trained in %.1fs", seed, tlog.wall_clock)
    return [ckpt, logp]


def step_export(cfg, seed, layout, force=False):
    outs = [layout.path(seed, "distill.txt"), layout.path(seed, "distill_eval.txt")]
    guard(outs, force)
    teacher = nn.load_checkpoint(require(layout.path(seed, "teacher.ckpt"), "train-teacher"), kind="teacher")
    tr = data.read_dataset(require(layout.path(seed, "train.txt"), "gen"))
    ev = data.read_dataset(require(layout.path(seed, "eval.txt"), "gen"))
    data.write_distill(data.export_distill(teacher, tr), outs[0])
    data.write_distill(data.export_distill(teacher, ev), outs[1])
    return outs


def _load_student_inputs(cfg, seed, layout, mode):
    ev = data.read_dataset(require(layout.path(seed, "eval.txt"), "gen"))
    if mode == "plain":
        records = data.DistillSet.without_teacher(data.read_dataset(require(layout.path(seed, "train.txt"), "gen")))
        return records, ev, None
    records = data.read_distill(require(layout.path(seed, "distill.txt"), "export-distill"))
    return records, ev, confmap.calibrate(records.teacher_loss)


def step_student(cfg, seed, layout, mode, alpha=None, kind=None, temperature=None, force=False):
    if mode not in ("plain", "pfd", "cpfd"):
        raise ConfigError(f"unknown student mode {mode!r}")
    alpha = cfg.student.alpha if alpha is None else alpha
    kind = kind or cfg.mapping_kind
    name = student_name(mode, alpha, kind, temperature, cfg.student.temperature)
    ckpt, logp = layout.path(seed, f"student-{name}.ckpt"), layout.path(seed, f"student-{name}.log")
    guard([ckpt, logp], force)
    records, ev, stats = _load_student_inputs(cfg, seed, layout, mode)
    mapping = mapping_for(cfg, kind, stats) if mode == "cpfd" else None
    tc = student_config(cfg, seed, mode, alpha, mapping, temperature)
    model, slog = train.train_student(tc, records, ev, stats, cfg.raw_spec())
    nn.save_checkpoint(model, ckpt)
    write_atomic(logp, slog.text())
    return model, ev, [ckpt, logp]


def evaluate_checkpoint(ckpt_path, eval_path):
    model = nn.load_checkpoint(ckpt_path)
    ev = data.read_dataset(eval_path)
    if len(ev) == 0:
        raise ParameterError(f"{eval_path}: empty evaluation set")
    if model.d_raw != ev.d_raw:
        raise ShapeError(f"checkpoint expects d_raw={model.d_raw}, eval file has {ev.d_raw}")
    if model.kind == "teacher":
        if model.d_priv != ev.d_priv:
            raise ShapeError(f"teacher expects d_priv={model.d_priv}, eval file has {ev.d_priv}")
        scores = teacher_scores(model, ev)
    else:
        scores = student_scores(model, ev)
    return metrics.evaluate(scores, ev.labels)


def write_eval(report, base, force=False):
    paths = [base + ".eval.tsv", base + ".eval.txt"]
    guard(paths, force)
    write_atomic(paths[0], metrics_tsv([({"model": os.path.basename(base)}, report)]))
    write_atomic(paths[1], metrics_table(report, os.path.basename(base)))
    return paths


def analyze(cfg, teacher_export_path, student_ckpt, eval_path):
    records = data.read_distill(teacher_export_path)
    ev = data.read_dataset(eval_path)
    if not np.array_equal(records.ids, ev.ids):
        raise ShapeError("teacher export ids do not match the evaluation file")
    model = nn.load_checkpoint(student_ckpt, kind="student")
    table = metrics.confidence_table(records.teacher_loss, student_scores(model, ev), ev.labels)
    curves = alpha_curves(confmap.calibrate(records.teacher_loss), cfg)
    return table, curves


def _sweep_task(args):
    cfg, seed, root, axis, value, force = args
    layout = Layout(cfg)
    layout.root = root
    kw = sweep_student_kwargs(axis, value, cfg)
    mode = kw.pop("mode")
    name = student_name(mode, kw.get("alpha", cfg.student.alpha), kw.get("kind"), kw.get("temperature"), cfg.student.temperature)
    ckpt = layout.path(seed, f"student-{name}.ckpt")
    ev_path = require(layout.path(seed, "eval.txt"), "gen")
    if mode != "plain":
        require(layout.path(seed, "distill.txt"), "export-distill")
    if os.path.exists(ckpt) and not force:
        return evaluate_checkpoint(ckpt, ev_path)
    model, ev, _ = step_student(cfg, seed, layout, mode, force=True, **kw)
    return metrics.evaluate(student_scores(model, ev), ev.labels)


def step_sweep(cfg, seeds, layout, axis, jobs=1, force=False):
    values = cfg.sweep_values(axis)
    outs = [layout.shared(f"sweep-{axis}.tsv"), layout.shared(f"sweep-{axis}.txt")]
    guard(outs, force)
    for seed in seeds:
        require(layout.path(seed, "distill.txt"), "export-distill")
    tasks = [("plain", None)] + [(value_label(axis, v), v) for v in values]
    args = []
    for label, v in tasks:
        for seed in seeds:
            args.append((cfg, seed, layout.root, axis if v is not None else "plain", v, force))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_task, args))
    else:
        results = [_sweep_task(a) for a in args]
    cells = {}
    it = iter(results)
    for label, _ in tasks:
        cells[label] = {seed: next(it) for seed in seeds}
    rep = SweepReport(axis, tuple(values), tuple(seeds), cells)
    write_atomic(outs[0], sweep_tsv(rep))
    write_atomic(outs[1], sweep_text(rep))
    return rep, outs
