"""Command-line pipeline: mine, classify, metrics, advantage, simulate, judge, report.

Every command validates its parameters before doing work, writes all outputs
under --out, and never mutates its inputs. Exit codes: 0 success, 1 for
validation problems, 2 for runtime failures (I/O, endpoints, divergence).
Secrets only ever come from the environment, never from flags.
"""

from __future__ import annotations

import functools
import json
import os
import sys
from pathlib import Path

import click
import yaml

from . import credit, report as report_mod, sim
from .classify import classify_trajectory
from .embeddings import HashEmbedder, HTTPEmbedder, PrecomputedEmbedder
from .judge import (
    JudgeEndpoint,
    JudgeRequestError,
    VerdictCache,
    classify_failures,
    error_series,
    verdict_counts,
)
from .metrics import (
    accuracy_length_series,
    build_windows,
    conditional_entropy,
    entropy_overlap_stats,
    MetricPoint,
    MetricSeries,
    pass_at_k,
    relative_perplexity_series,
    semantic_entropy_series,
    token_entropy_series,
    write_series_csv,
)
from .mining import SGSet, mine_sgset
from .sim import EnvSpec, PolicyTable, TrainConfig
from .traces import TraceParseError, read_corpus, trajectory_to_record

EMBED_KEY_ENV_VAR = "HICRA_EMBED_API_KEY"

_current_command = "hicra"


def common_options(fn):
    @click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                  default=None, help="YAML config with per-command sections.")
    @click.option("--out", "out_dir", type=click.Path(file_okay=False), default="out",
                  help="Output directory (created if missing).")
    @click.option("--threads", type=int, default=4, show_default=True,
                  help="Worker cap for commands with internal parallelism.")
    @click.option("--seed", type=int, default=0, show_default=True)
    @click.option("--strict", is_flag=True, help="Fail on the first malformed trace record.")
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        global _current_command
        _current_command = fn.__name__
        return fn(*args, **kwargs)

    return wrapper


def load_section(config_path: str | None, command: str) -> dict:
    if config_path is None:
        return {}
    data = yaml.safe_load(Path(config_path).read_text(encoding="utf-8"))
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValueError(f"config root must be a mapping, got {type(data).__name__}")
    section = data.get(command, {})
    if not isinstance(section, dict):
        raise ValueError(f"config section {command!r} must be a mapping")
    return section


def pick(flag_value, section: dict, key: str, default):
    """Precedence: explicit flag, then config section, then the default."""
    if flag_value is not None:
        return flag_value
    if key in section:
        return section[key]
    return default


def _load_traces(path: str, strict: bool):
    load = read_corpus(path, strict=strict)
    if load.skipped:
        click.echo(f"warning: skipped {len(load.skipped)} malformed trace lines", err=True)
    if not load.trajectories:
        raise ValueError(f"no usable trajectories in {path}")
    return load.trajectories


def _out_dir(out_dir: str) -> Path:
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_jsonl(path: Path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


@click.group()
def cli() -> None:
    """Strategic-gram mining, token classification, credit shaping, and analysis."""


@cli.command()
@click.argument("corpus", type=click.Path(exists=True, dir_okay=False))
@click.option("--tau", type=float, default=None, help="Cluster cosine threshold.")
@click.option("--quantile", type=float, default=None, help="Top fraction of clusters to keep.")
@click.option("--n-min", type=int, default=None)
@click.option("--n-max", type=int, default=None)
@click.option("--embedder", type=click.Choice(["hash", "precomputed", "http"]), default=None)
@click.option("--vectors", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Precomputed embedding JSON (surface -> vector).")
@common_options
def mine(corpus, tau, quantile, n_min, n_max, embedder, vectors, config_path, out_dir,
         threads, seed, strict):
    """Mine a strategic-gram set from successful solutions.

    CORPUS is either a trace JSONL file (successful trajectories are used) or
    a plain text file with one solution per line.
    """
    section = load_section(config_path, "mine")
    tau = float(pick(tau, section, "tau", 0.8))
    quantile = float(pick(quantile, section, "quantile", 0.2))
    n_min = int(pick(n_min, section, "n_min", 3))
    n_max = int(pick(n_max, section, "n_max", 5))
    embedder = pick(embedder, section, "embedder", "hash")
    vectors = pick(vectors, section, "vectors", None)

    if corpus.endswith(".jsonl"):
        trajectories = _load_traces(corpus, strict)
        solutions = [t.full_text for t in trajectories if t.correct]
        if not solutions:
            raise ValueError(f"no successful solutions in {corpus}")
    else:
        lines = Path(corpus).read_text(encoding="utf-8").splitlines()
        solutions = [line for line in lines if line.strip()]
        if not solutions:
            raise ValueError(f"no solutions in {corpus}")

    if embedder == "hash":
        provider = HashEmbedder()
    elif embedder == "precomputed":
        if vectors is None:
            raise ValueError("precomputed embedder needs --vectors")
        provider = PrecomputedEmbedder.from_file(vectors)
    else:
        url = section.get("url")
        model = section.get("model")
        dimension = section.get("dimension")
        if not (url and model and dimension):
            raise ValueError("http embedder needs url, model, and dimension in the config")
        provider = HTTPEmbedder(url=url, model=model, dimension=int(dimension),
                                api_key=os.environ.get(EMBED_KEY_ENV_VAR))

    sgset = mine_sgset(solutions, provider, n_min=n_min, n_max=n_max, tau=tau, quantile=quantile)
    out = _out_dir(out_dir)
    sgset.save(out / "sgset.json")
    click.echo(
        f"mined {len(sgset.clusters)} clusters ({len(sgset.grams)} grams) "
        f"from {len(solutions)} solutions -> {out / 'sgset.json'}"
    )


@cli.command()
@click.argument("traces", type=click.Path(exists=True, dir_okay=False))
@click.option("--sgset", "sgset_path", type=click.Path(exists=True, dir_okay=False), required=True)
@common_options
def classify(traces, sgset_path, config_path, out_dir, threads, seed, strict):
    """Annotate traces with planning masks and SG match spans."""
    sgset = SGSet.load(sgset_path)
    trajectories = _load_traces(traces, strict)
    out = _out_dir(out_dir)

    def records():
        for traj in trajectories:
            mask, matches = classify_trajectory(traj, sgset)
            record = trajectory_to_record(traj)
            record["planning_mask"] = [int(flag) for flag in mask.labels]
            record["matches"] = [
                {
                    "surface": m.gram.surface,
                    "cluster_id": m.cluster_id,
                    "start": m.char_span[0],
                    "end": m.char_span[1],
                }
                for m in matches
            ]
            yield record

    _write_jsonl(out / "classified.jsonl", records())
    click.echo(f"classified {len(trajectories)} trajectories -> {out / 'classified.jsonl'}")


@cli.command()
@click.argument("traces", type=click.Path(exists=True, dir_okay=False))
@click.option("--sgset", "sgset_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Enables the planning/execution split and SG-based series.")
@click.option("--k", type=int, default=None, help="Compute pass@k over rollout groups.")
@click.option("--overlap-p", type=float, default=None,
              help="Top-entropy fraction for the planning overlap stats.")
@common_options
def metrics(traces, sgset_path, k, overlap_p, config_path, out_dir, threads, seed, strict):
    """Emit metric tables (CSV series plus a scalar JSON) for a trace corpus."""
    section = load_section(config_path, "metrics")
    k = pick(k, section, "k", None)
    overlap_p = pick(overlap_p, section, "overlap_p", None)

    trajectories = _load_traces(traces, strict)
    sgset = SGSet.load(sgset_path) if sgset_path else None
    masks = None
    if sgset is not None:
        masks = [classify_trajectory(t, sgset)[0] for t in trajectories]
    windows = build_windows(trajectories, masks)
    out = _out_dir(out_dir)

    emitted: list[MetricSeries] = []

    def emit(build) -> None:
        # A corpus can legitimately lack a series (no planning tokens, no
        # per-token entropies); skip it unless --strict demands otherwise.
        try:
            emitted.append(build())
        except ValueError as exc:
            if strict:
                raise
            click.echo(f"warning: skipping series: {exc}", err=True)

    accuracy, mean_length = accuracy_length_series(windows)
    emitted += [accuracy, mean_length]
    classes = ("all", "planning", "execution") if masks is not None else ("all",)
    for token_class in classes:
        emit(lambda tc=token_class: token_entropy_series(windows, tc))
        emit(lambda tc=token_class: relative_perplexity_series(windows, tc))
    if sgset is not None:
        emit(lambda: semantic_entropy_series(windows, sgset))
        emit(
            lambda: MetricSeries(
                name="conditional_entropy",
                unit="bits",
                points=tuple(
                    MetricPoint(w.step, conditional_entropy(w, sgset)) for w in windows
                ),
            )
        )
    for series in emitted:
        write_series_csv(series, out / f"{series.name}.csv")

    scalars: dict[str, object] = {"kind": "scalars", "trajectories": len(trajectories)}
    if k is not None:
        from .traces import group_rollouts

        groups, singletons = group_rollouts(trajectories)
        if singletons:
            click.echo(f"warning: {len(singletons)} trajectories outside any group", err=True)
        if not groups:
            raise ValueError("pass@k needs at least one rollout group of size >= 2")
        scalars[f"pass_at_{int(k)}"] = pass_at_k(groups, int(k))
    if overlap_p is not None:
        if masks is None:
            raise ValueError("overlap stats need --sgset for planning masks")
        in_top, top_planning = entropy_overlap_stats(windows, float(overlap_p))
        scalars["overlap_planning_in_top"] = in_top
        scalars["overlap_top_planning"] = top_planning
    (out / "metrics.json").write_text(
        json.dumps(scalars, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    click.echo(f"wrote {len(emitted)} series and metrics.json -> {out}")


@cli.command()
@click.argument("traces", type=click.Path(exists=True, dir_okay=False))
@click.option("--alpha", type=float, default=None,
              help="Planning amplification; omit for plain group-relative advantages.")
@click.option("--sgset", "sgset_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--normalize-std", is_flag=True, help="Also divide by the group reward std.")
@common_options
def advantage(traces, alpha, sgset_path, normalize_std, config_path, out_dir, threads,
              seed, strict):
    """Dump per-token advantages for every rollout group in a corpus."""
    from .traces import group_rollouts

    if alpha is not None and not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if alpha is not None and sgset_path is None:
        raise ValueError("amplification needs --sgset to identify planning tokens")

    trajectories = _load_traces(traces, strict)
    groups, singletons = group_rollouts(trajectories)
    if singletons:
        click.echo(f"warning: {len(singletons)} trajectories outside any group", err=True)
    if not groups:
        raise ValueError("no rollout groups of size >= 2 in the corpus")
    sgset = SGSet.load(sgset_path) if sgset_path else None
    out = _out_dir(out_dir)

    def records():
        for group in groups:
            scalars = credit.grpo_advantages(list(group.rewards), normalize_std=normalize_std)
            adv = credit.AdvantageArray.raw(
                scalars, [len(t.tokens) for t in group.trajectories]
            )
            if alpha is not None:
                masks = [classify_trajectory(t, sgset)[0] for t in group.trajectories]
                adv = credit.hicra_advantages(adv, masks, alpha)
            yield {
                "problem_id": group.problem_id,
                "step": group.step,
                "rewards": list(group.rewards),
                "advantages": list(adv.trajectory_values),
                "token_advantages": [list(row) for row in adv.token_values],
                "alpha": alpha,
            }

    _write_jsonl(out / "advantages.jsonl", records())
    click.echo(f"wrote advantages for {len(groups)} groups -> {out / 'advantages.jsonl'}")


@cli.command()
@click.option("--method", type=click.Choice(list(sim.METHODS)), default=None)
@click.option("--steps", type=int, default=None)
@click.option("--learning-rate", type=float, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--entropy-coef", type=float, default=None)
@click.option("--group-size", type=int, default=None)
@click.option("--bias", type=float, default=None, help="Initial wrong-symbol execution bias.")
@click.option("--strategies", type=int, default=None, help="Correct strategies per task.")
@click.option("--env-seed", type=int, default=None, help="Environment seed (defaults to --seed).")
@common_options
def simulate(method, steps, learning_rate, alpha, entropy_coef, group_size, bias, strategies,
             env_seed, config_path, out_dir, threads, seed, strict):
    """Train the tabular two-level policy and emit its metric series."""
    section = load_section(config_path, "simulate")
    method = pick(method, section, "method", "grpo")
    steps = int(pick(steps, section, "steps", sim.DEFAULT_STEPS))
    learning_rate = float(pick(learning_rate, section, "learning_rate", 0.5))
    alpha = float(pick(alpha, section, "alpha", credit.DEFAULT_ALPHA))
    entropy_coef = float(pick(entropy_coef, section, "entropy_coef", sim.DEFAULT_ENTROPY_COEF))
    group_size = int(pick(group_size, section, "group_size", 8))
    bias = float(pick(bias, section, "bias", sim.DEFAULT_EXEC_BIAS))
    strategies = int(pick(strategies, section, "strategies", sim.DEFAULT_STRATEGIES_PER_TASK))
    env_seed = pick(env_seed, section, "env_seed", None)

    env = EnvSpec.random(
        seed=seed if env_seed is None else int(env_seed), correct_strategies=strategies
    )
    policy0 = PolicyTable.initial(env, exec_bias=bias, seed=seed)
    config = TrainConfig(
        method=method,
        steps=steps,
        group_size=group_size,
        learning_rate=learning_rate,
        alpha=alpha,
        entropy_coefficient=entropy_coef,
        seed=seed,
    )
    series, policy = sim.train(env, config, policy=policy0)

    out = _out_dir(out_dir)
    series_dir = out / "series"
    series_dir.mkdir(exist_ok=True)
    for name, s in series.items():
        write_series_csv(s, series_dir / f"{name}.csv")
    (out / "policy.json").write_text(
        json.dumps(
            {
                "planning": policy.planning.tolist(),
                "execution": policy.execution.tolist(),
            }
        )
        + "\n",
        encoding="utf-8",
    )
    (out / "env.json").write_text(
        json.dumps(
            {
                "num_tasks": env.num_tasks,
                "num_strategies": env.num_strategies,
                "strategies_per_task": [sorted(s) for s in env.strategies_per_task],
                "exec_len": env.exec_len,
                "exec_branching": env.exec_branching,
                "correct_exec": [list(row) for row in env.correct_exec],
            }
        )
        + "\n",
        encoding="utf-8",
    )
    try:
        phase1, phase2, crossover = sim.two_phase_probe(series)
        probe = f"phase1={phase1} phase2={phase2} crossover={crossover}"
    except ValueError:
        probe = "probe unavailable (run too short)"
    click.echo(f"{method}: final reward {sim.final_reward(series):.3f}, {probe} -> {out}")


@cli.command()
@click.argument("failures", type=click.Path(exists=True, dir_okay=False))
@click.option("--url", type=str, default=None)
@click.option("--model", type=str, default=None)
@click.option("--cache", "cache_path", type=click.Path(dir_okay=False), default=None)
@common_options
def judge(failures, url, model, cache_path, config_path, out_dir, threads, seed, strict):
    """Judge failed solutions into error categories via a chat endpoint.

    FAILURES is a JSONL file of records with problem, reference, student, and
    an optional step. The auth token is read from HICRA_JUDGE_API_KEY.
    """
    section = load_section(config_path, "judge")
    url = pick(url, section, "url", None)
    model = pick(model, section, "model", None)
    if not url or not model:
        raise ValueError("judge needs an endpoint url and model (flag or config)")
    out = _out_dir(out_dir)
    cache_path = pick(cache_path, section, "cache", out / "judge_cache.json")

    items = []
    steps = []
    with open(failures, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            record = json.loads(line)
            try:
                items.append((record["problem"], record["reference"], record["student"]))
            except KeyError as exc:
                raise ValueError(f"{failures}:{line_no}: missing field {exc}") from exc
            steps.append(int(record.get("step", 0)))
    if not items:
        raise ValueError(f"no failure records in {failures}")

    endpoint = JudgeEndpoint(url=url, model=model, concurrency=threads)
    cache = VerdictCache(cache_path)
    verdicts = classify_failures(items, endpoint, cache=cache)

    _write_jsonl(
        out / "verdicts.jsonl",
        (
            {"step": step, "choice": v.choice, "category": v.category}
            for step, v in zip(steps, verdicts)
        ),
    )
    by_step: dict[int, list] = {}
    for step, verdict in zip(steps, verdicts):
        by_step.setdefault(step, []).append(verdict)
    planning_series, others_series = error_series(by_step)
    write_series_csv(planning_series, out / "planning_strategy_errors.csv")
    write_series_csv(others_series, out / "other_errors.csv")
    counts = verdict_counts(verdicts)
    (out / "judge_summary.json").write_text(
        json.dumps({"kind": "scalars", **counts}, ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )
    click.echo(f"judged {len(verdicts)} failures -> {out} ({counts})")


@cli.command()
@click.argument("artifacts", type=click.Path(exists=True, file_okay=False))
@common_options
def report(artifacts, config_path, out_dir, threads, seed, strict):
    """Assemble tables, figures, and a text summary from emitted artifacts."""
    out = _out_dir(out_dir)
    summary = report_mod.write_report(artifacts, out)
    click.echo(
        f"report: {len(summary.tables)} tables, {len(summary.figures)} figures -> "
        f"{out / 'summary.txt'}"
    )


def main(argv: list[str] | None = None) -> int:
    """Entry point mapping exceptions onto the documented exit codes."""
    global _current_command
    _current_command = "hicra"
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 2
    except (ValueError, TraceParseError, json.JSONDecodeError, yaml.YAMLError) as exc:
        click.echo(f"{_current_command}: {exc}", err=True)
        return 1
    except (JudgeRequestError, sim.SimulationDiverged, RuntimeError, OSError) as exc:
        click.echo(f"{_current_command}: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
