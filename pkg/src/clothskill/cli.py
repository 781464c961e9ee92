"""``clothskill`` command-line entry point.

Every subcommand reads an optional JSON ``--config`` whose keys mirror the
long flag names (dashes become underscores); flags given on the command line
win. Nested ``sim``, ``camera``, ``model`` and ``train`` objects override the
corresponding parameter sets.

Exit codes: 0 success, 2 configuration error, 3 runtime error,
4 an acceptance threshold was not met.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import plotting
from .camera import CameraModel, top_down_camera
from .discovery import (
    build_dataset,
    decompose_llm,
    decompose_rule,
    generate_demo,
    load_demos,
    read_dataset,
    save_demo,
    validate_decomposition,
    write_dataset,
)
from .errors import ClothSkillError, ConfigError
from .eval import PolicyConfig, run_benchmark
from .eval.benchmark import make_grounding, make_oracle_state
from .eval.metrics import SUCCESS_THRESHOLD, success
from .executor import ClothEnv, execute_plan, save_trace, sample_pose
from .grammar import canonical_cloth_type, vocabulary
from .llm import ChatClient, LiveTransport, MockTransport, PromptConfig
from .model import ModelConfig, TrainHyper, arrays_from_triples, train
from .model.train import save_training_checkpoint
from .planner import TaskSpec, plan_llm
from .rasters import depth_to_png, read_depth, write_depth, write_mask
from .sim import SimConfig, make_template, render_depth, render_mask
from .tasks import Task, find_task, load_suite

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_THRESHOLD = 0, 2, 3, 4
DEFAULT_MIN_SUCCESS = 0.9

log = logging.getLogger("clothskill")


class Settings:
    """Flag values layered over the JSON config file, layered over defaults."""

    def __init__(self, args: argparse.Namespace, config: dict):
        self.args = args
        self.config = config

    def get(self, key: str, default=None):
        v = getattr(self.args, key, None)
        if v is not None:
            return v
        return self.config.get(key, default)

    def require(self, key: str):
        v = self.get(key)
        if v is None:
            raise ConfigError(f"--{key.replace('_', '-')} is required (flag or config key {key!r})")
        return v

    def section(self, name: str) -> dict:
        d = self.config.get(name, {})
        if not isinstance(d, dict):
            raise ConfigError(f"config key {name!r} must be an object")
        return d

    def sim(self) -> SimConfig:
        try:
            return SimConfig.from_dict(self.section("sim"))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad sim config: {exc}") from exc

    def camera(self) -> CameraModel:
        try:
            return top_down_camera(**self.section("camera"))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad camera config: {exc}") from exc

    def model(self) -> ModelConfig:
        try:
            return ModelConfig(**self.section("model"))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad model config: {exc}") from exc

    def hyper(self) -> TrainHyper:
        d = dict(self.section("train"))
        for key in ("epochs", "batch_size", "lr"):
            v = getattr(self.args, key, None)
            if v is not None:
                d[key] = v
        try:
            return TrainHyper(**d)
        except TypeError as exc:
            raise ConfigError(f"bad train config: {exc}") from exc

    def suite(self) -> list[Task]:
        return load_suite(self.get("suite"))

    def prompt(self) -> PromptConfig:
        path = self.get("prompt")
        try:
            return PromptConfig.load(path) if path else PromptConfig.default()
        except (OSError, ValueError, TypeError) as exc:
            raise ConfigError(f"cannot load prompt config {path}: {exc}") from exc

    def chat_client(self) -> ChatClient:
        """Mock transport when ``--mock-responses`` names a script file, otherwise the live endpoint."""
        mock = self.get("mock_responses")
        if mock:
            try:
                d = json.loads(Path(mock).read_text(encoding="utf-8"))
            except (OSError, ValueError) as exc:
                raise ConfigError(f"cannot read mock responses {mock}: {exc}") from exc
            if isinstance(d, list):
                transport = MockTransport(script=d)
            else:
                transport = MockTransport(responses=d.get("responses"), script=d.get("script"))
        else:
            transport = LiveTransport.from_env()
        return ChatClient(transport, self.get("transcript"))


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(d, dict):
        raise ConfigError("config file must hold a JSON object")
    return d


def _existing(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{what} {p} does not exist")
    return p


def _emit_rows(header: list[str], rows: list[list]) -> None:
    """Tab-delimited table on stdout."""
    print("\t".join(header))
    for r in rows:
        print("\t".join(str(v) for v in r))


# ---------------------------------------------------------------- demo-gen

def _demo_job(job):
    task, pose, camera, sim, demo_id, out = job
    demo = generate_demo(task, pose, camera, sim, demo_id)
    save_demo(demo, Path(out) / demo_id)
    return demo_id, demo.m


def cmd_demo_gen(s: Settings) -> int:
    out = Path(s.require("out"))
    per_task = int(s.get("per_task", 20))
    seed = int(s.get("seed", 0))
    camera, sim = s.camera(), s.sim()
    suite = s.suite()
    seen = [(i, t) for i, t in enumerate(suite) if t.seen]
    if not seen:
        log.warning("suite has no seen tasks; no demonstrations written")
    jobs = []
    for ti, task in seen:
        for k in range(per_task):
            pose = sample_pose(np.random.default_rng([seed, ti, k, 1]))
            jobs.append((task, pose, camera, sim, f"{task.name}_{k:04d}", str(out)))
    out.mkdir(parents=True, exist_ok=True)
    n_jobs = int(s.get("jobs", 1))
    if n_jobs > 1 and jobs:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            done = list(pool.map(_demo_job, jobs))
    else:
        done = [_demo_job(j) for j in jobs]
    _emit_rows(["demo_id", "images", "actions"], [[d, m, 2 * m - 2] for d, m in done])
    print(f"# wrote {len(done)} demonstrations to {out}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------- discover

def cmd_discover(s: Settings) -> int:
    demos = load_demos(_existing(s.require("demos"), "demo directory"))
    out = Path(s.require("out"))
    mode = s.get("decomposer", "rule")
    if mode == "rule":
        decomposer = decompose_rule
        provenance = {"decomposer": "rule", "prompt_hash": None}
    elif mode == "llm":
        client, prompt = s.chat_client(), s.prompt()
        decomposer = lambda d: decompose_llm(d, client, prompt)  # noqa: E731
        provenance = {"decomposer": "llm", "prompt_hash": prompt.fingerprint(),
                      "deterministic": client.deterministic}
    else:
        raise ConfigError(f"unknown decomposer {mode!r} (rule or llm)")
    ds = build_dataset(demos, decomposer, provenance)
    write_dataset(ds, out)
    by_demo: dict[str, list] = {}
    for t in ds.triples:
        by_demo.setdefault(t.demo_id, []).append(t)
    rows, passed = [], 0
    for d in demos:
        if d.demo_id not in by_demo:
            rows.append([d.demo_id, "skipped", ""])
            continue
        rep = validate_decomposition(by_demo[d.demo_id], d)
        passed += rep.ok
        rows.append([d.demo_id, "pass" if rep.ok else "fail", "; ".join(rep.reasons)])
    _emit_rows(["demo_id", "validation", "reasons"], rows)
    print(f"# {len(ds)} triples from {len(demos)} demos; {passed} validated, {ds.skipped} skipped",
          file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------- train

def cmd_train(s: Settings) -> int:
    ds = read_dataset(_existing(s.require("dataset"), "dataset"))
    out = Path(s.require("out"))
    cfg, hyper, seed = s.model(), s.hyper(), int(s.get("seed", 0))
    data = arrays_from_triples(ds.triples, cfg)
    resume = s.get("resume")
    log_path = s.get("log")
    if log_path:
        Path(log_path).parent.mkdir(parents=True, exist_ok=True)
        if not resume:
            Path(log_path).unlink(missing_ok=True)
    params, rows, state = train(data, cfg, hyper, seed, resume=resume, log_path=log_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_training_checkpoint(out, params, cfg, state)
    fig = s.get("figure")
    if fig and rows:
        plotting.plot_training(rows, fig)
    _emit_rows(["epoch", "train_loss", "holdout_argmax_acc"],
               [[r["epoch"], f"{r['train_loss']:.6f}",
                 "" if r["holdout_argmax_acc"] is None else f"{r['holdout_argmax_acc']:.4f}"] for r in rows])
    return EXIT_OK


# ---------------------------------------------------------------- plan / rollout

def _task_from_settings(s: Settings) -> Task:
    name = s.get("task")
    if name:
        return find_task(s.suite(), name)
    instruction, cloth = s.get("instruction"), s.get("cloth")
    if not instruction or not cloth:
        raise ConfigError("give --task NAME, or --instruction TEXT with --cloth TYPE")
    try:
        return Task("adhoc", canonical_cloth_type(cloth), instruction, False)
    except ClothSkillError as exc:
        raise ConfigError(str(exc)) from exc


def _make_plan(s: Settings, task: Task):
    planner = s.get("planner", "rule")
    if planner == "rule":
        return task.plan()
    if planner == "llm":
        return plan_llm(TaskSpec(task.long_instruction, task.cloth_type), s.chat_client(), s.prompt())
    raise ConfigError(f"unknown planner {planner!r} (rule or llm)")


def cmd_plan(s: Settings) -> int:
    plan = _make_plan(s, _task_from_settings(s))
    for line in plan.texts():
        print(line)
    return EXIT_OK


def cmd_rollout(s: Settings) -> int:
    task = _task_from_settings(s)
    camera, sim = s.camera(), s.sim()
    policy = PolicyConfig(grounding=s.get("grounding", "oracle"), checkpoint=s.get("checkpoint"))
    if policy.grounding == "model":
        if not policy.checkpoint:
            raise ConfigError("model grounding needs --checkpoint")
        _existing(policy.checkpoint, "checkpoint")
    plan = _make_plan(s, task)
    seed, trial = int(s.get("seed", 0)), int(s.get("trial", 0))
    pose = sample_pose(np.random.default_rng([seed, 0, trial]), policy.max_shift, policy.max_deg)
    template = make_template(task.cloth_type)
    env = ClothEnv.create(template, sim, pose)
    oracle = make_oracle_state(plan, template, camera, sim, env.initial)
    trace = execute_plan(plan, env, make_grounding(policy, camera), camera, sim)
    ok, err = success(trace.final_state, oracle, float(s.get("threshold", SUCCESS_THRESHOLD)))
    out = s.get("out")
    if out:
        save_trace(trace, out, camera, template.spacing)
        if s.get("save_frames"):
            plotting.plot_episode(trace, Path(out) / "episode.png", f"{task.name}: {task.long_instruction}")
            for k, obs in enumerate(trace.observations):
                depth_to_png(Path(out) / f"obs_{k:02d}.png", obs)
    _emit_rows(["step", "pick", "place", "pick_pixel", "place_pixel", "status"],
               [[k, r.pick, r.place, list(r.pick_pixel), list(r.place_pixel), r.status]
                for k, r in enumerate(trace.records)])
    print(f"# outcome={trace.outcome} error={err:.4f} success={ok and trace.outcome == 'completed'}",
          file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------- eval

def cmd_eval(s: Settings) -> int:
    suite = s.suite()
    only = s.get("tasks")
    if only:
        names = only if isinstance(only, list) else [n.strip() for n in str(only).split(",") if n.strip()]
        suite = [find_task(suite, n) for n in names]
    policy = PolicyConfig(grounding=s.get("grounding", "oracle"), checkpoint=s.get("checkpoint"),
                          threshold=float(s.get("threshold", SUCCESS_THRESHOLD)))
    if policy.grounding not in ("oracle", "model"):
        raise ConfigError(f"unknown grounding {policy.grounding!r} (oracle or model)")
    if policy.grounding == "model":
        if not policy.checkpoint:
            raise ConfigError("model grounding needs --checkpoint")
        _existing(policy.checkpoint, "checkpoint")
    trials, seed = int(s.get("trials", 50)), int(s.get("seed", 0))
    if trials < 0:
        raise ConfigError("--trials must be >= 0")
    report = run_benchmark(suite, policy, trials, seed, s.sim(), s.camera(), int(s.get("jobs", 1)))
    min_rate = float(s.get("min_success", DEFAULT_MIN_SUCCESS))
    out = s.get("out")
    if out:
        report.write_json(out)
    if s.get("csv"):
        report.write_csv(s.get("csv"))
    figures = s.get("figures")
    if figures:
        plotting.plot_success_rates(report, Path(figures) / "success_rates.png", min_rate)
        plotting.plot_error_hist(report, Path(figures) / "errors.png", policy.threshold)
    fmt = lambda v: "" if v is None else f"{v:.4f}"  # noqa: E731
    _emit_rows(["task", "cloth", "seen", "trials", "successes", "success_rate", "mean_error", "mean_miou", "mean_wr"],
               [[r.name, r.cloth_type, "seen" if r.seen else "unseen", r.trials, r.successes,
                 fmt(r.success_rate), fmt(r.mean_error), fmt(r.mean_miou), fmt(r.mean_wr)] for r in report.rows])
    failed = report.failures(min_rate)
    if failed:
        print(f"# below {min_rate:.2f} success: {', '.join(failed)}", file=sys.stderr)
        return EXIT_THRESHOLD
    return EXIT_OK


# ---------------------------------------------------------------- vocab / render

def cmd_vocab(s: Settings) -> int:
    cloth = s.require("cloth")
    try:
        parts = vocabulary(canonical_cloth_type(cloth))
    except ClothSkillError as exc:
        raise ConfigError(str(exc)) from exc
    for p in parts:
        print(p)
    return EXIT_OK


def cmd_render(s: Settings) -> int:
    """Render a flat cloth, or convert an existing CDPT raster, to PNG/CDPT/CMSK by output suffix."""
    out = Path(s.require("out"))
    src = s.get("input")
    camera = s.camera()
    if src:
        depth = read_depth(_existing(src, "input raster"))
        mask = None
    else:
        cloth = canonical_cloth_type(s.require("cloth"))
        template = make_template(cloth)
        env = ClothEnv.create(template, s.sim())
        depth = render_depth(env.state, camera, template.spacing)
        mask = render_mask(env.state, camera, template.spacing)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.suffix == ".cdpt":
        write_depth(out, depth)
    elif out.suffix == ".cmsk":
        if mask is None:
            raise ConfigError("a mask can only be rendered from --cloth")
        write_mask(out, mask)
    elif s.get("figure_style"):
        plotting.plot_depth(depth, out)
    else:
        depth_to_png(out, depth)
    h, w = depth.shape
    _emit_rows(["path", "width", "height", "min_depth", "max_depth"],
               [[out, w, h, f"{float(depth.min()):.4f}", f"{float(depth.max()):.4f}"]])
    return EXIT_OK


# ---------------------------------------------------------------- parser

COMMANDS = {
    "demo-gen": cmd_demo_gen,
    "discover": cmd_discover,
    "train": cmd_train,
    "plan": cmd_plan,
    "rollout": cmd_rollout,
    "eval": cmd_eval,
    "vocab": cmd_vocab,
    "render": cmd_render,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="clothskill", description="Language-conditioned cloth folding toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", help="JSON config file; flags override its keys")
        return sp

    sp = add("demo-gen", "synthesize demonstrations of the seen tasks")
    sp.add_argument("--out")
    sp.add_argument("--per-task", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--jobs", type=int)
    sp.add_argument("--suite")

    sp = add("discover", "decompose demonstrations into a skill dataset")
    sp.add_argument("--demos")
    sp.add_argument("--out")
    sp.add_argument("--decomposer", choices=["rule", "llm"])
    sp.add_argument("--prompt")
    sp.add_argument("--transcript")
    sp.add_argument("--mock-responses")

    sp = add("train", "train the affordance model")
    sp.add_argument("--dataset")
    sp.add_argument("--out")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--resume")
    sp.add_argument("--log")
    sp.add_argument("--figure")

    for name, text in (("plan", "print the basic-instruction plan for a task"),
                       ("rollout", "run one episode and save its trace")):
        sp = add(name, text)
        sp.add_argument("--task")
        sp.add_argument("--instruction")
        sp.add_argument("--cloth")
        sp.add_argument("--suite")
        sp.add_argument("--planner", choices=["rule", "llm"])
        sp.add_argument("--prompt")
        sp.add_argument("--transcript")
        sp.add_argument("--mock-responses")
        if name == "rollout":
            sp.add_argument("--grounding", choices=["oracle", "model"])
            sp.add_argument("--checkpoint")
            sp.add_argument("--seed", type=int)
            sp.add_argument("--trial", type=int)
            sp.add_argument("--threshold", type=float)
            sp.add_argument("--out")
            sp.add_argument("--save-frames", action="store_true", default=None)

    sp = add("eval", "run the seen/unseen benchmark")
    sp.add_argument("--suite")
    sp.add_argument("--tasks", help="comma-separated subset of task names")
    sp.add_argument("--grounding", choices=["oracle", "model"])
    sp.add_argument("--checkpoint")
    sp.add_argument("--trials", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--jobs", type=int)
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--min-success", type=float)
    sp.add_argument("--out", help="JSON report path")
    sp.add_argument("--csv")
    sp.add_argument("--figures", help="directory for PNG figures")

    sp = add("vocab", "list the part vocabulary of a cloth type")
    sp.add_argument("--cloth")

    sp = add("render", "render a flat cloth or convert a CDPT raster")
    sp.add_argument("--cloth")
    sp.add_argument("--input")
    sp.add_argument("--out")
    sp.add_argument("--figure-style", action="store_true", default=None,
                    help="write a colour-mapped matplotlib figure instead of a 16-bit PNG")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = Settings(args, _load_config(args.config))
        return COMMANDS[args.command](settings)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ClothSkillError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
