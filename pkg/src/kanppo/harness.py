"""Experiment orchestration: configuration, multi-seed training, evaluation,
parameter tables, pruning, latency benchmarks and curve aggregation.

Every command returns a plain Python result; ``kanppo.cli`` turns them into
terminal output and exit codes.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .envs import MUJOCO_DIMS, ObsNormalizer, lookup_dims, make_env, random_policy_baseline
from .networks import (
    ARCHS,
    ActorCritic,
    NetworkSpec,
    _atomic_write_text,
    build_network,
    count_params,
    edge_importance,
    load_checkpoint,
    prune,
    save_checkpoint,
)
from .nn_core import make_rng
from .policy import deterministic_action
from .ppo import METRICS_HEADER, MetricsRow, PpoConfig, evaluate_policy, run_episode, train


class ConfigError(ValueError):
    """Invalid configuration or arguments (CLI exit code 2)."""


PPO_KEYS = {f.name for f in dataclasses.fields(PpoConfig)}


@dataclass(frozen=True)
class RunConfig:
    env: str = "point-reacher"
    arch: str = "kan-actor"
    k: int = 2
    g: int = 3
    kan_input_scale: float = 0.2
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    out_dir: str = "runs"
    ppo: PpoConfig = field(default_factory=PpoConfig)

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ConfigError(f"unknown arch {self.arch!r}; choose from {', '.join(ARCHS)}")
        try:
            make_env(self.env)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be non-empty and distinct")
        if self.k < 1 or self.g < 1:
            raise ConfigError("k and g must be >= 1")

    @property
    def spec(self) -> NetworkSpec:
        return NetworkSpec(self.arch, self.k, self.g, kan_input_scale=self.kan_input_scale)

    def to_mapping(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "ppo"}
        out["seeds"] = list(self.seeds)
        out.update(dataclasses.asdict(self.ppo))
        return out

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        top = {f.name for f in dataclasses.fields(cls)} - {"ppo"}
        unknown = set(values) - top - PPO_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        run_kw = {k: v for k, v in values.items() if k in top}
        if "seeds" in run_kw:
            run_kw["seeds"] = tuple(int(s) for s in run_kw["seeds"])
        try:
            ppo = PpoConfig(**{k: v for k, v in values.items() if k in PPO_KEYS})
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        return cls(ppo=ppo, **run_kw)


def _coerce(raw: str):
    s = raw.strip()
    low = s.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null", ""):
        return None
    if "," in s or (s.startswith("[") and s.endswith("]")):
        return [_coerce(p) for p in s.strip("[]").split(",") if p.strip()]
    for cast in (int, float):
        try:
            return cast(s)
        except ValueError:
            pass
    return s


def parse_config_text(text: str) -> dict:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "seeds":
            v = _coerce(value)
            value = v if isinstance(v, list) else [v]
        else:
            value = _coerce(value)
        out[key] = value
    return out


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    values = {}
    if path is not None:
        try:
            values.update(parse_config_text(Path(path).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig.from_mapping(values)


def run_stem(env: str, arch: str, seed: int) -> str:
    return f"{env}__{arch}__seed{seed}"


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def metrics_csv(rows: list[MetricsRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for r in rows:
        w.writerow([_fmt(getattr(r, k)) for k in METRICS_HEADER])
    return buf.getvalue()


@dataclass
class SeedResult:
    seed: int
    metrics_path: Path
    checkpoint_path: Path
    final_row: MetricsRow | None


def train_seed(config: RunConfig, seed: int) -> SeedResult:
    env = make_env(config.env)
    d = env.descriptor
    net = build_network(config.spec, d.obs_dim, d.act_dim, seed, env.action_low, env.action_high)
    result = train(env, net, config.ppo, make_rng(seed), seed=seed)
    out = Path(config.out_dir)
    stem = run_stem(config.env, config.arch, seed)
    metrics_path = out / f"{stem}.csv"
    ckpt_path = out / f"{stem}.ckpt.json"
    _atomic_write_text(metrics_path, metrics_csv(result.history))
    extra = {
        "env": config.env,
        "seed": seed,
        "normalizer": result.normalizer.state_dict() if config.ppo.normalize_obs else None,
        # where the run was written is not part of the trained policy
        "config": {k: v for k, v in config.to_mapping().items() if k != "out_dir"},
    }
    save_checkpoint(ckpt_path, result.net, extra)
    return SeedResult(seed, metrics_path, ckpt_path, result.history[-1] if result.history else None)


def worker_count(n_jobs: int) -> int:
    try:
        cap = int(os.environ.get("KANPPO_THREADS", "1"))
    except ValueError:
        raise ConfigError("KANPPO_THREADS must be an integer") from None
    return max(1, min(cap, n_jobs))


def cmd_train(config: RunConfig) -> list[SeedResult]:
    """Train one independent run per seed; metrics CSV + checkpoint each."""
    workers = worker_count(len(config.seeds))
    if workers == 1:
        return [train_seed(config, s) for s in config.seeds]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(train_seed, config, s) for s in config.seeds]
        return [f.result() for f in futures]


@dataclass
class EvalReport:
    mean_return: float
    std_return: float
    episodes: int
    deterministic: bool = True
    returns: list[float] = field(default_factory=list, repr=False)


def load_policy(path) -> tuple[ActorCritic, ObsNormalizer | None, dict]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"checkpoint not found: {path}")
    net, extra = load_checkpoint(path)
    norm = ObsNormalizer.from_state(extra["normalizer"]) if extra.get("normalizer") else None
    if norm is not None:
        norm.frozen = True
    return net, norm, extra


def evaluate_net(net: ActorCritic, norm, env_name: str, episodes: int) -> EvalReport:
    returns = evaluate_policy(net, make_env(env_name), norm, episodes)
    return EvalReport(float(returns.mean()), float(returns.std()), episodes, True, returns.tolist())


def cmd_eval(checkpoint, episodes: int = 100) -> EvalReport:
    if episodes < 1:
        raise ConfigError("episodes must be >= 1")
    net, norm, extra = load_policy(checkpoint)
    return evaluate_net(net, norm, extra["env"], episodes)


@dataclass
class CountRow:
    name: str
    obs_dim: int
    act_dim: int
    counts: dict  # arch -> (actor, critic)


def cmd_count_params(k: int = 2, g: int = 3, width: int = 64) -> dict:
    """Actor / critic / total parameter counts for every MuJoCo dimension
    pair and architecture, with truncated-mean footers."""
    rows = []
    for name, (obs, act) in MUJOCO_DIMS.items():
        counts = {a: count_params(NetworkSpec(a, k, g, width), obs, act) for a in ARCHS}
        rows.append(CountRow(name, obs, act, counts))
    n = len(rows)

    def trunc_mean(values):
        return int(sum(values) / n)  # toward zero; all counts are positive

    footer = {
        a: {
            "actor": trunc_mean([r.counts[a][0] for r in rows]),
            "critic": trunc_mean([r.counts[a][1] for r in rows]),
            "total": trunc_mean([sum(r.counts[a]) for r in rows]),
        }
        for a in ARCHS
    }
    return {"k": k, "g": g, "rows": rows, "mean": footer}


def format_count_table(table: dict) -> str:
    lines = [f"# parameter counts (k={table['k']}, g={table['g']}); columns actor/critic/total"]
    head = f"{'env':<18}{'obs:act':>8}" + "".join(f"{a:>22}" for a in ARCHS)
    lines.append(head)
    for r in table["rows"]:
        cells = "".join(f"{'%d/%d/%d' % (a_, c_, a_ + c_):>22}" for a_, c_ in (r.counts[a] for a in ARCHS))
        lines.append(f"{r.name:<18}{f'{r.obs_dim}:{r.act_dim}':>8}{cells}")
    m = table["mean"]
    cells = "".join(f"{'%d/%d/%d' % (m[a]['actor'], m[a]['critic'], m[a]['total']):>22}" for a in ARCHS)
    lines.append(f"{'mean (truncated)':<18}{'':>8}{cells}")
    return "\n".join(lines)


@dataclass
class BenchLine:
    arch: str
    actor_params: int
    total_seconds: float
    per_step_seconds: float
    checksum: float


def cmd_bench(arch_a: str, arch_b: str, env: str = "halfcheetah:17:6", steps: int = 1000,
              seed: int = 0) -> list[BenchLine]:
    """Time ``steps`` single-observation actor forwards for two architectures
    over the same observation stream. BLAS is pinned to one thread."""
    from threadpoolctl import threadpool_limits

    for a in (arch_a, arch_b):
        if a not in ARCHS:
            raise ConfigError(f"unknown arch {a!r}")
    obs_dim, act_dim = lookup_dims(env)
    stream = make_rng(seed).standard_normal((steps, obs_dim))
    lines = []
    with threadpool_limits(1):
        for arch in (arch_a, arch_b):
            net = build_network(NetworkSpec(arch), obs_dim, act_dim, seed)
            acc = 0.0
            t0 = time.perf_counter()
            for o in stream:
                acc += float(deterministic_action(net, o)[0])
            total = time.perf_counter() - t0
            lines.append(BenchLine(arch, net.param_counts()[0], total, total / steps, acc))
    return lines


@dataclass
class PruneReport:
    threshold: float
    edges_total: int
    edges_pruned: int
    params_before: tuple[int, int]
    params_after: tuple[int, int]
    return_before: float
    return_after: float
    output_path: Path | None = None

    @property
    def degradation(self) -> float:
        """Relative loss of eval return; negative means the pruned net did better."""
        return (self.return_before - self.return_after) / max(abs(self.return_before), 1e-12)


def collect_probe_states(net: ActorCritic, norm, env_name: str, episodes: int, seed: int = 7_000) -> np.ndarray:
    """Network-input observations visited by the noise-free policy."""
    env = make_env(env_name)
    states = []

    def policy(obs):
        o = norm.normalize(obs) if norm is not None else obs
        states.append(o)
        return deterministic_action(net, o)

    for i in range(episodes):
        run_episode(env, policy, seed + i)
    return np.array(states)


def _clone_masks(net):
    return [layer.keep.copy() for layer in net.kan_layers()]


def _restore_masks(net, masks):
    for layer, keep in zip(net.kan_layers(), masks):
        layer.keep = keep.copy()


def cmd_prune(checkpoint, threshold: float | None = None, probe_episodes: int = 5,
              eval_episodes: int = 100, out=None, max_degradation: float = 0.2) -> PruneReport:
    """Magnitude-prune KAN edges of a checkpoint.

    With ``threshold=None`` the candidates are the distinct edge importances
    and the largest one whose eval return degrades by at most
    ``max_degradation`` is kept.
    """
    net, norm, extra = load_policy(checkpoint)
    if not net.kan_layers():
        raise ConfigError("nothing to prune: checkpoint has no KAN layers")
    if probe_episodes < 1:
        raise ConfigError("probe_episodes must be >= 1")
    env_name = extra["env"]
    probe = collect_probe_states(net, norm, env_name, probe_episodes)
    before = evaluate_net(net, norm, env_name, eval_episodes).mean_return
    masks = _clone_masks(net)
    edges_total = sum(layer.keep.size for layer in net.kan_layers())

    if threshold is None:
        imp = np.concatenate([v.ravel() for v in edge_importance(net, probe).values()])
        best = None
        # importances are distinct almost surely; thresholds just above each
        for cand in np.sort(np.unique(imp)):
            thr = float(np.nextafter(cand, np.inf))
            _restore_masks(net, masks)
            prune(net, probe, thr)
            after = evaluate_net(net, norm, env_name, eval_episodes).mean_return
            if (before - after) / max(abs(before), 1e-12) <= max_degradation:
                best = (thr, after)
            else:
                break
        threshold, after = best if best is not None else (0.0, before)
        _restore_masks(net, masks)
        mask = prune(net, probe, threshold)
    else:
        if threshold < 0:
            raise ConfigError("threshold must be >= 0")
        mask = prune(net, probe, threshold)
        after = evaluate_net(net, norm, env_name, eval_episodes).mean_return

    out = Path(out) if out is not None else Path(str(checkpoint).replace(".ckpt.json", "") + ".pruned.ckpt.json")
    extra = dict(extra, pruned_threshold=threshold)
    save_checkpoint(out, net, extra)
    pruned_edges = sum(int((~layer.keep).sum()) for layer in net.kan_layers())
    return PruneReport(threshold, edges_total, pruned_edges, mask.params_before, mask.params_after,
                       before, after, out)


def read_metrics(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    if rows and list(rows[0]) != METRICS_HEADER:
        raise ConfigError(f"{path}: unexpected header")
    return {k: np.array([float(r[k]) for r in rows]) for k in METRICS_HEADER}


def cmd_plot_data(metrics_dir, out_dir=None) -> list[Path]:
    """Aggregate per-seed metrics CSVs into cross-seed mean/std curves,
    one file per (env, arch)."""
    metrics_dir = Path(metrics_dir)
    files = sorted(p for p in metrics_dir.glob("*__*__seed*.csv"))
    if not files:
        raise ConfigError(f"no metrics CSV files in {metrics_dir}")
    groups: dict[tuple[str, str], list[Path]] = {}
    for p in files:
        env, arch, _ = p.stem.split("__")
        groups.setdefault((env, arch), []).append(p)
    out_dir = Path(out_dir) if out_dir is not None else metrics_dir
    written = []
    for (env, arch), paths in sorted(groups.items()):
        runs = [read_metrics(p) for p in paths]
        steps = sorted(set.intersection(*(set(r["env_step"].tolist()) for r in runs)))
        table = np.array([[r["mean_return"][r["env_step"] == s][0] for r in runs] for s in steps])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["env_step", "mean_return", "std_return", "n_seeds"])
        for s, vals in zip(steps, table):
            ok = vals[np.isfinite(vals)]
            mean = float(ok.mean()) if ok.size else float("nan")
            std = float(ok.std()) if ok.size else float("nan")
            w.writerow([int(s), repr(mean), repr(std), int(ok.size)])
        path = out_dir / f"curve__{env}__{arch}.csv"
        _atomic_write_text(path, buf.getvalue())
        written.append(path)
    return written


def random_baseline(env_name: str, episodes: int = 100, seed: int = 0) -> tuple[float, float]:
    return random_policy_baseline(make_env(env_name), episodes, make_rng(seed))
