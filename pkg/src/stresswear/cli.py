"""Command-line driver: synth -> features -> train -> eval -> report.

Settings come from an INI file (``--config``) and are overridden by flags.
Exit codes: 0 success, 1 invalid configuration or input, 2 pipeline failure.
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import evaluation as ev
from .eda import CvxEdaConfig
from .errors import (
    ConfigError,
    IoError,
    InvalidSpec,
    PipelineError,
    SchemaMismatch,
    SchemaVersionMismatch,
    SingleClassTraining,
    StressWearError,
)
from .features import FeatureMatrix, Scenario, WindowSpec, read_feature_csv, write_feature_csv
from .fileio import write_text_atomic
from .ingest import (
    EDA_DEVICES,
    DeviceKind,
    DeviceSession,
    SignalKind,
    load_protocol,
    load_signal_csv,
    write_protocol,
    write_signal_csv,
)
from .models import ModelKind, RfConfig, SvmConfig, fit_model, load_model, save_model
from .pipeline import session_matrices
from .synth import DEVICE_ORDER, CohortSpec, DeviceNoiseSpec, apply_device_noise, gen_subject

VALIDATION_ERRORS = (ConfigError, InvalidSpec, SchemaMismatch, SchemaVersionMismatch)

DEVICE_ALIASES = {
    "biopac": DeviceKind.BIOPAC_MP160,
    "polar": DeviceKind.POLAR_H10,
    "empatica": DeviceKind.EMPATICA_E4,
    "garmin": DeviceKind.GARMIN_FORERUNNER_55S,
}
SIGNAL_FILES = {SignalKind.RR_INTERVAL: "rr.csv", SignalKind.EDA: "eda.csv", SignalKind.HEART_RATE: "hr.csv"}
PROTOCOL_FILE = "protocol.csv"
TRUTH_FILE = "ground_truth.json"


@dataclass
class RunConfig:
    data_dir: Path = Path("data")
    output_dir: Path = Path("out")
    protocol: Path | None = None  # overrides per-subject protocol files
    model_file: Path | None = None  # default: <output_dir>/model-<device>-s<k>-<model>.json
    cohort_tag: str = ""
    seed: int = 0
    scenario: Scenario = Scenario.ALL_STRESSORS
    devices: tuple = tuple(DeviceKind)
    model: str = "hrv"  # hrv | hrv_eda
    classifier: str = "auto"  # auto | svm | rf
    window: WindowSpec = field(default_factory=WindowSpec)
    cvxeda: CvxEdaConfig = field(default_factory=CvxEdaConfig)
    svm: SvmConfig = field(default_factory=SvmConfig)
    rf: RfConfig = field(default_factory=RfConfig)
    cohort: CohortSpec = field(default_factory=CohortSpec)
    noise: DeviceNoiseSpec = field(default_factory=DeviceNoiseSpec)
    noise_devices: tuple = (DeviceKind.EMPATICA_E4,)

    @property
    def include_eda(self) -> bool:
        return self.model == "hrv_eda"

    @property
    def model_kind(self) -> ModelKind:
        if self.classifier == "svm":
            return ModelKind.SVM_RBF
        if self.classifier == "rf":
            return ModelKind.RANDOM_FOREST
        # HRV-only favours the SVM, HRV+EDA the forest
        return ModelKind.RANDOM_FOREST if self.include_eda else ModelKind.SVM_RBF

    def model_path(self, device: DeviceKind | None = None) -> Path:
        if self.model_file is not None:
            return self.model_file
        tag = device.value if device is not None else "+".join(d.value for d in self.devices)
        return self.output_dir / f"model-{tag}-s{self.scenario.value}-{self.model}.json"


def parse_devices(text: str) -> tuple:
    out = []
    for part in text.split(","):
        key = part.strip()
        if not key:
            continue
        dev = DEVICE_ALIASES.get(key.lower())
        if dev is None:
            try:
                dev = DeviceKind(key)
            except ValueError:
                raise ConfigError(f"unknown device {key!r}; use one of {', '.join(DEVICE_ALIASES)}") from None
        if dev not in out:
            out.append(dev)
    if not out:
        raise ConfigError("no devices given")
    return tuple(sorted(out, key=DEVICE_ORDER.index))


def _parse_scenario(text) -> Scenario:
    try:
        return Scenario(int(text))
    except (ValueError, TypeError):
        raise ConfigError(f"scenario must be 1 or 2, got {text!r}") from None


def _coerce(value: str, default):
    if isinstance(default, bool):
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, tuple):
        return tuple(float(x) for x in value.split(","))
    if default is None:
        low = value.strip().lower()
        if low in ("", "none"):
            return None
        return int(value)
    return value


def _apply_section(obj, section, skip=()):
    """Return a copy of the dataclass ``obj`` with keys from an INI section."""
    names = {f.name for f in dataclasses.fields(obj)}
    changes = {}
    for key, raw in section.items():
        if key not in names or key in skip:
            raise ConfigError(f"[{section.name}] unknown key {key!r}")
        try:
            changes[key] = _coerce(raw, getattr(obj, key))
        except ValueError as exc:
            raise ConfigError(f"[{section.name}] {key}: {exc}") from None
    try:
        return dataclasses.replace(obj, **changes)
    except (ValueError, InvalidSpec) as exc:
        raise ConfigError(f"[{section.name}] {exc}") from None


SECTIONS = ("paths", "run", "window", "cvxeda", "svm", "rf", "synth", "noise")


def load_config(path=None, args=None) -> RunConfig:
    """Read an INI file (if any) then apply command-line overrides."""
    cfg = RunConfig()
    cp = configparser.ConfigParser(interpolation=None)
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        try:
            cp.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for name in cp.sections():
            if name not in SECTIONS:
                raise ConfigError(f"{path}: unknown section [{name}]")
    base = path.parent if path is not None else Path(".")

    if cp.has_section("paths"):
        for key, raw in cp["paths"].items():
            if key not in ("data_dir", "output_dir", "protocol", "model_file"):
                raise ConfigError(f"[paths] unknown key {key!r}")
            p = Path(raw)
            setattr(cfg, key, p if p.is_absolute() else base / p)
    if cp.has_section("run"):
        run = cp["run"]
        for key in run:
            if key not in ("seed", "scenario", "devices", "model", "classifier", "cohort_tag"):
                raise ConfigError(f"[run] unknown key {key!r}")
        if "seed" in run:
            cfg.seed = _int(run["seed"], "seed")
        if "scenario" in run:
            cfg.scenario = _parse_scenario(run["scenario"])
        if "devices" in run:
            cfg.devices = parse_devices(run["devices"])
        if "model" in run:
            cfg.model = run["model"].strip()
        if "classifier" in run:
            cfg.classifier = run["classifier"].strip()
        if "cohort_tag" in run:
            cfg.cohort_tag = run["cohort_tag"].strip()
    for name, attr in (("window", "window"), ("cvxeda", "cvxeda"), ("svm", "svm"), ("rf", "rf")):
        if cp.has_section(name):
            setattr(cfg, attr, _apply_section(getattr(cfg, attr), cp[name]))
    if cp.has_section("synth"):
        cfg.cohort = _apply_section(cfg.cohort, cp["synth"], skip=("protocol", "devices", "seed"))
    if cp.has_section("noise"):
        sec = dict(cp["noise"])
        devs = sec.pop("devices", None)
        if devs is not None:
            cfg.noise_devices = parse_devices(devs)
        cp["noise"] = sec
        cfg.noise = _apply_section(cfg.noise, cp["noise"])

    if args is not None:
        for key in ("data_dir", "output_dir", "model_file", "protocol"):
            val = getattr(args, key, None)
            if val is not None:
                setattr(cfg, key, Path(val))
        if getattr(args, "seed", None) is not None:
            cfg.seed = args.seed
        if getattr(args, "scenario", None) is not None:
            cfg.scenario = _parse_scenario(args.scenario)
        if getattr(args, "device", None) is not None:
            cfg.devices = parse_devices(args.device)
        if getattr(args, "model", None) is not None:
            cfg.model = args.model
        if getattr(args, "classifier", None) is not None:
            cfg.classifier = args.classifier

    if cfg.model not in ("hrv", "hrv_eda"):
        raise ConfigError(f"model must be 'hrv' or 'hrv_eda', got {cfg.model!r}")
    if cfg.classifier not in ("auto", "svm", "rf"):
        raise ConfigError(f"classifier must be auto, svm or rf, got {cfg.classifier!r}")
    # a single top-level seed drives every random stream
    cfg.cohort = dataclasses.replace(cfg.cohort, seed=cfg.seed)
    cfg.svm = dataclasses.replace(cfg.svm, seed=cfg.seed)
    cfg.rf = dataclasses.replace(cfg.rf, seed=cfg.seed)
    return cfg


def _int(text, name):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {text!r}") from None


# --- commands -----------------------------------------------------------------

def _mkdir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create directory {path}: {exc.strerror or exc}") from exc
    return path


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def cmd_synth(cfg: RunConfig) -> list[Path]:
    """Write the cohort as per-subject device CSVs, protocols and a ground-truth manifest."""
    root = cfg.data_dir
    if root.exists() and not root.is_dir():
        raise IoError(f"output path {root} exists and is not a directory")
    _mkdir(root)
    spec = dataclasses.replace(cfg.cohort, devices=cfg.devices)
    written, manifest = [], {"seed": cfg.seed, "n_subjects": spec.n_subjects, "subjects": {}}
    for i in range(spec.n_subjects):
        sessions, truth = gen_subject(spec, i)
        sdir = _mkdir(root / truth.subject_id)
        write_protocol(truth.timeline, sdir / PROTOCOL_FILE)
        written.append(sdir / PROTOCOL_FILE)
        for device, session in sessions.items():
            if device in cfg.noise_devices and not cfg.noise.is_identity:
                session = apply_device_noise(session, cfg.noise, [cfg.seed, i, DEVICE_ORDER.index(device)])
            ddir = _mkdir(sdir / device.value)
            for kind, series in session.signals.items():
                write_signal_csv(series, ddir / SIGNAL_FILES[kind])
                written.append(ddir / SIGNAL_FILES[kind])
        manifest["subjects"][truth.subject_id] = {
            "reactivity": truth.reactivity,
            "irf_tau0": truth.irf_tau0,
            "scr_event_times": truth.scr_event_times.tolist(),
            "scr_amplitudes_us": truth.scr_amplitudes.tolist(),
            "segments": [
                {"label": lab.value, "start_s": a, "end_s": b, "true_mean_hr": hr}
                for lab, a, b, hr in truth.segment_mean_hr
            ],
        }
    write_text_atomic(root / TRUTH_FILE, _dump_json(manifest))
    written.append(root / TRUTH_FILE)
    return written


def _subject_dirs(cfg: RunConfig) -> list[Path]:
    if not cfg.data_dir.is_dir():
        raise ConfigError(f"data directory {cfg.data_dir} does not exist")
    subs = sorted(p for p in cfg.data_dir.iterdir() if p.is_dir())
    if not subs:
        raise ConfigError(f"no subject directories under {cfg.data_dir}")
    return subs


def _protocol_for(cfg: RunConfig, sdir: Path) -> Path:
    path = cfg.protocol if cfg.protocol is not None else sdir / PROTOCOL_FILE
    if not path.is_file():
        raise ConfigError(f"protocol file {path} does not exist")
    return path


def load_session(sdir: Path, device: DeviceKind, protocol: Path) -> DeviceSession:
    ddir = sdir / device.value
    signals = {}
    for kind, name in SIGNAL_FILES.items():
        if (ddir / name).is_file():
            # fixture timestamps are already session-relative
            signals[kind] = load_signal_csv(ddir / name, device, kind, t0=0.0)
    return DeviceSession(sdir.name, device, signals, load_protocol(protocol))


def _feature_dir(cfg: RunConfig, device: DeviceKind, with_eda: bool) -> Path:
    tag = "hrv_eda" if with_eda else "hrv"
    return cfg.output_dir / "features" / device.value / f"scenario{cfg.scenario.value}" / tag


def _uses_eda(cfg: RunConfig, device: DeviceKind) -> bool:
    return cfg.include_eda and device in EDA_DEVICES


def cmd_features(cfg: RunConfig) -> list[Path]:
    subs = _subject_dirs(cfg)
    protocols = {s: _protocol_for(cfg, s) for s in subs}  # validate before any work
    written = []
    for device in cfg.devices:
        subjects = [s for s in subs if (s / device.value).is_dir()]
        if not subjects:
            raise ConfigError(f"no {device.value} recordings under {cfg.data_dir}")
        out = _mkdir(_feature_dir(cfg, device, _uses_eda(cfg, device)))
        for sdir in subjects:
            try:
                session = load_session(sdir, device, protocols[sdir])
            except StressWearError as exc:
                raise PipelineError(sdir.name, device, exc) from exc
            m = session_matrices(session, (cfg.scenario,), cfg.include_eda, cfg.cvxeda, cfg.window)[cfg.scenario]
            write_feature_csv(m, out / f"{sdir.name}.csv")
            written.append(out / f"{sdir.name}.csv")
    return written


def _read_matrices(cfg: RunConfig, device: DeviceKind) -> dict[str, FeatureMatrix]:
    fdir = _feature_dir(cfg, device, _uses_eda(cfg, device))
    files = sorted(fdir.glob("*.csv")) if fdir.is_dir() else []
    if not files:
        raise ConfigError(f"no feature matrices in {fdir}; run 'features' first")
    return {f.stem: read_feature_csv(f, cfg.scenario, device) for f in files}


def cmd_train(cfg: RunConfig) -> Path:
    """Fit one model on the pooled matrices of the selected devices."""
    mats = []
    for device in cfg.devices:
        mats.extend(_read_matrices(cfg, device).values())
    schemas = {m.schema.names for m in mats}
    if len(schemas) > 1:
        raise SchemaMismatch("selected devices produce different feature schemas; train on one device at a time")
    pooled = FeatureMatrix.concatenate(mats)
    meta = {
        "cohort": cfg.cohort_tag or cfg.data_dir.name,
        "devices": [d.value for d in cfg.devices],
        "scenario": cfg.scenario.value,
        "seed": cfg.seed,
        "n_rows": len(pooled),
    }
    try:
        model = fit_model(pooled, cfg.model_kind, cfg.svm, cfg.rf, meta)
    except SingleClassTraining as exc:
        raise SingleClassTraining(
            f"{exc}; the training windows hold a single label. Check the protocol covers both "
            "the baseline and the scenario's stressors."
        ) from exc
    path = cfg.model_path(cfg.devices[0] if len(cfg.devices) == 1 else None)
    _mkdir(path.parent)
    save_model(model, path)
    return path


def report_to_dict(r: ev.EvalReport) -> dict:
    return {
        "device": r.device.value,
        "scenario": r.scenario.value,
        "model_desc": r.model_desc,
        "mode": r.mode.value,
        "per_subject_auroc": r.per_subject_auroc,
        "median": r.median,
        "q1": r.q1,
        "q3": r.q3,
        "skipped": list(r.skipped),
        "diagnostics": r.diagnostics,
    }


def report_from_dict(d: dict) -> ev.EvalReport:
    return ev.EvalReport(
        device=DeviceKind(d["device"]),
        scenario=Scenario(d["scenario"]),
        model_desc=d["model_desc"],
        mode=ev.EvalMode(d["mode"]),
        per_subject_auroc=dict(d["per_subject_auroc"]),
        median=d["median"],
        q1=d["q1"],
        q3=d["q3"],
        skipped=tuple(d["skipped"]),
        diagnostics=d.get("diagnostics", {}),
    )


def _reports_dir(cfg: RunConfig) -> Path:
    return cfg.output_dir / "reports"


def cmd_eval(cfg: RunConfig, mode: str) -> list[Path]:
    reports = []
    model = None
    if mode == "pretrained":
        path = cfg.model_path(cfg.devices[0] if len(cfg.devices) == 1 else None)
        if not path.is_file():
            raise ConfigError(f"model file {path} does not exist; run 'train' first")
        model = load_model(path)
    for device in cfg.devices:
        mats = _read_matrices(cfg, device)
        if mode == "loso":
            reports.append(ev.loso(mats, cfg.model_kind, cfg.svm, cfg.rf))
        else:
            reports.append(ev.pretrained_eval(model, mats))
    out = _mkdir(_reports_dir(cfg))
    written = []
    for r in reports:
        tag = "hrv_eda" if r.model_desc == "HRV+EDA" else "hrv"
        stem = f"{r.mode.value.lower()}-{r.device.value}-s{r.scenario.value}-{tag}"
        write_text_atomic(out / f"{stem}.json", _dump_json(report_to_dict(r)))
        written.append(out / f"{stem}.json")
    written.extend(ev.render_report(reports, out / f"eval-{mode}-s{cfg.scenario.value}-{cfg.model}"))
    return written


def cmd_report(cfg: RunConfig) -> tuple[Path, Path]:
    """Combine every saved evaluation into one Table-II-shaped report."""
    rdir = _reports_dir(cfg)
    files = sorted(rdir.glob("*.json")) if rdir.is_dir() else []
    if not files:
        raise ConfigError(f"no evaluation results in {rdir}; run 'eval' first")
    reports = [report_from_dict(json.loads(f.read_text(encoding="utf-8"))) for f in files]
    return ev.render_report(reports, cfg.output_dir / "table")


# --- argument parsing ---------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI file with [paths], [run], [window], [cvxeda], "
                        "[svm], [rf], [synth] and [noise] sections; flags override it")
    common.add_argument("--seed", type=int, help="top-level seed for every random stream (default 0)")
    common.add_argument("--device", metavar="NAME[,NAME...]",
                        help="devices: biopac, polar, empatica, garmin (or the full names); default all")
    common.add_argument("--scenario", choices=("1", "2"),
                        help="1: baseline vs all stressors, 2: baseline vs mental arithmetic (default 1)")
    common.add_argument("--model", choices=("hrv", "hrv_eda"),
                        help="feature set: HRV-only or HRV+EDA (default hrv)")
    common.add_argument("--classifier", choices=("auto", "svm", "rf"),
                        help="auto picks the SVM for hrv and the random forest for hrv_eda")
    common.add_argument("--data-dir", metavar="DIR", help="cohort directory (default ./data)")
    common.add_argument("--output-dir", metavar="DIR", help="features, models and reports go here (default ./out)")
    common.add_argument("--model-file", metavar="PATH", help="model to write (train) or read (eval --mode pretrained)")
    common.add_argument("--protocol", metavar="PATH", help="protocol CSV used for every subject")

    p = _Parser(prog="stresswear", description="Wearable stress-detection pipeline.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("synth", parents=[common], help="generate a synthetic cohort of device CSVs")
    sub.add_parser("features", parents=[common], help="preprocess, decompose EDA and write feature matrices")
    sub.add_parser("train", parents=[common], help="fit a classifier on the feature matrices")
    pe = sub.add_parser("eval", parents=[common], help="LOSO or frozen-model evaluation")
    pe.add_argument("--mode", choices=("loso", "pretrained"), required=True,
                    help="loso: leave-one-subject-out; pretrained: apply --model-file unchanged")
    sub.add_parser("report", parents=[common], help="combine saved evaluations into one table")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args)
        if args.command == "synth":
            out = cmd_synth(cfg)
        elif args.command == "features":
            out = cmd_features(cfg)
        elif args.command == "train":
            out = [cmd_train(cfg)]
        elif args.command == "eval":
            out = cmd_eval(cfg, args.mode)
        else:
            out = list(cmd_report(cfg))
    except VALIDATION_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except StressWearError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(f"{args.command}: wrote {len(out)} file(s) under {_common_root(out)}")
    return 0


def _common_root(paths) -> str:
    paths = [Path(p).resolve() for p in paths]
    if not paths:
        return "."
    root = paths[0].parent
    while not all(root in p.parents or p == root for p in paths):
        root = root.parent
    return str(root)


if __name__ == "__main__":
    sys.exit(main())
