"""Command-line front end.

The CLI is a thin client of the engine service: every verb builds a JSON
request and posts it to the service API.  By default requests go to an
in-process application instance over an ASGI transport (no network, fully
deterministic); set ``REMASK_SERVICE_URL`` or pass ``--service-url`` to
target a running service instead.  ``REMASK_ORACLE_URL`` (or
``--oracle-url``) routes probability scoring to a remote oracle server.

Verbs: ``run`` (scenario), ``sweep`` (grid), ``gen-task``, ``analyze``
(trajectory diff / proposition checks / context quality / cap audit), and
``serve``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import httpx

CONFIG_FLAGS: tuple[tuple[str, type], ...] = (
    ("tau_m2t", float),
    ("tau_t2t", float),
    ("tau_lp", float),
    ("tau_tr", float),
    ("tau_ld", float),
    ("sigma", float),
    ("c_max", int),
    ("rho_max", float),
    ("n_transfer", int),
    ("block_len", int),
    ("max_new_tokens", int),
    ("max_inner_iters", int),
    ("seed", int),
)

STRATEGIES = ("t2t_replace", "t2m_lowprob", "t2m_t2ttrigger", "t2m_logitdiff", "random_remask", "none")


class InProcessClient:
    """Sync facade over the service app: requests go through the ASGI
    interface without a network hop, so offline runs stay deterministic."""

    def __init__(self):
        from remask.service import create_app

        self._app = create_app()

    def __enter__(self) -> "InProcessClient":
        return self

    def __exit__(self, *exc) -> bool:
        return False

    def post(self, path: str, json: dict) -> httpx.Response:
        import asyncio

        async def _do() -> httpx.Response:
            transport = httpx.ASGITransport(app=self._app)
            async with httpx.AsyncClient(
                transport=transport, base_url="http://remask.local", timeout=600.0
            ) as client:
                return await client.post(path, json=json)

        return asyncio.run(_do())


def make_client(service_url: str | None) -> httpx.Client | InProcessClient:
    url = service_url or os.environ.get("REMASK_SERVICE_URL")
    if url:
        return httpx.Client(base_url=url.rstrip("/"), timeout=600.0)
    return InProcessClient()


def post(client: httpx.Client | InProcessClient, path: str, body: dict) -> dict:
    resp = client.post(path, json=body)
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        raise SystemExit(f"error: service returned {resp.status_code}: {detail}")
    return resp.json()


def add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("strategy configuration")
    for name, typ in CONFIG_FLAGS:
        group.add_argument(f"--{name.replace('_', '-')}", type=typ, default=None, dest=name)


def config_body(args: argparse.Namespace) -> dict:
    return {name: getattr(args, name) for name, _ in CONFIG_FLAGS if getattr(args, name) is not None}


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def cmd_run(args: argparse.Namespace) -> int:
    scenario_doc = json.loads(Path(args.scenario).read_text(encoding="utf-8"))
    body = {
        "scenario": scenario_doc,
        "strategy": args.strategy,
        "config": config_body(args),
        "oracle_url": args.oracle_url or os.environ.get("REMASK_ORACLE_URL"),
    }
    with make_client(args.service_url) as client:
        doc = post(client, "/v1/scenario/run", body)

    out_dir = Path(args.out_dir)
    name = doc["summary"].get("scenario", "scenario")
    stem = f"{name}.{args.strategy}"
    write_text(out_dir / f"{stem}.trajectory.jsonl", doc["trajectory_jsonl"])
    write_text(out_dir / f"{stem}.summary.json", json.dumps(doc["summary"], indent=2) + "\n")
    print(f"{name} [{args.strategy}] answer={doc['summary']['answer_tokens']}")
    print(
        f"  fills={doc['summary']['fills']} edits={doc['summary']['edits']} "
        f"remasks={doc['summary']['remasks']} inner_iters={doc['summary']['inner_iters']} "
        f"converged={doc['summary']['converged']}"
    )
    if doc["matched"] is not None:
        print(f"  expected={doc['expected']} matched={doc['matched']}")
        if not doc["matched"]:
            return 1
    return 0


def cmd_gen_task(args: argparse.Namespace) -> int:
    body = {
        "n_instances": args.n_instances,
        "length": args.length,
        "seed": args.seed,
        "spec": {
            "alpha0": args.alpha0,
            "alpha1": args.alpha1,
            "alpha2": args.alpha2,
            "frac_adversarial": args.frac_adversarial,
            "bias_adversarial": args.bias_adversarial,
            "bias_normal": args.bias_normal,
            "vocab_size": args.vocab_size,
        },
    }
    with make_client(args.service_url) as client:
        doc = post(client, "/v1/tasks/signal", body)
    text = json.dumps({"tasks": doc["tasks"]}, indent=2) + "\n"
    if args.out:
        write_text(Path(args.out), text)
        print(f"wrote {len(doc['tasks'])} task instances to {args.out}")
    else:
        print(text, end="")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    if args.tasks:
        tasks = json.loads(Path(args.tasks).read_text(encoding="utf-8"))["tasks"]
    else:
        gen_body = {"n_instances": args.n_instances, "length": args.length, "seed": args.seed}
        with make_client(args.service_url) as client:
            tasks = post(client, "/v1/tasks/signal", gen_body)["tasks"]
    body = {
        "tasks": tasks,
        "config": config_body(args),
        "parallelism": args.parallelism,
    }
    with make_client(args.service_url) as client:
        doc = post(client, "/v1/sweep", body)
    write_text(Path(args.out), doc["csv"])
    n_failed = sum(1 for r in doc["rows"] if r["failed"])
    print(f"wrote {len(doc['rows'])} sweep rows to {args.out}" + (f" ({n_failed} failed)" if n_failed else ""))
    return 0


def _load_events_file(path: str) -> list[dict]:
    events = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line:
            events.append(json.loads(line))
    return events


def cmd_analyze_diff(args: argparse.Namespace) -> int:
    body = {
        "events_a": _load_events_file(args.trajectory_a),
        "events_b": _load_events_file(args.trajectory_b),
        "prompt_len_a": args.prompt_len_a,
        "prompt_len_b": args.prompt_len_b,
    }
    with make_client(args.service_url) as client:
        doc = post(client, "/v1/analyze/diff", body)
    print(doc["table"])
    if args.out:
        write_text(Path(args.out), json.dumps(doc["report"], indent=2) + "\n")
    return 0


def cmd_analyze_context_quality(args: argparse.Namespace) -> int:
    body = {
        "n_c": args.n_c,
        "n_e": args.n_e,
        "s_plus": args.s_plus,
        "s_minus": args.s_minus,
        "sigma": args.sigma,
    }
    with make_client(args.service_url) as client:
        doc = post(client, "/v1/analyze/context-quality", body)
    print(json.dumps(doc, indent=2))
    return 0


def cmd_analyze_detector_quality(args: argparse.Namespace) -> int:
    body = {
        "n_c": args.n_c,
        "n_e": args.n_e,
        "s_plus": args.s_plus,
        "s_minus": args.s_minus,
        "precisions": args.precisions,
        "removed": args.removed,
    }
    with make_client(args.service_url) as client:
        doc = post(client, "/v1/analyze/detector-quality", body)
    print(f"base_error_rate={doc['base_error_rate']:.4f}")
    for p in doc["points"]:
        print(
            f"precision={p['precision']:.2f} q_detector={p['q_detector']:.4f} "
            f"q_random={p['q_random']:.4f} advantage={p['advantage']:+.4f}"
        )
    return 0


def cmd_analyze_stuck(args: argparse.Namespace) -> int:
    body = json.loads(Path(args.posterior).read_text(encoding="utf-8"))
    body.setdefault("epsilon", args.epsilon)
    body.setdefault("tau_t2t", args.tau_t2t)
    body.setdefault("tau_lp", args.tau_lp)
    with make_client(args.service_url) as client:
        doc = post(client, "/v1/analyze/stuck", body)
    print(json.dumps(doc, indent=2))
    return 0 if doc["passed"] else 1


def cmd_analyze_audit(args: argparse.Namespace) -> int:
    body = {
        "events": _load_events_file(args.trajectory),
        "prompt_len": args.prompt_len,
        "max_new_tokens": args.max_new_tokens,
        "block_len": args.block_len,
        "c_max": args.c_max,
        "rho_max": args.rho_max,
    }
    with make_client(args.service_url) as client:
        doc = post(client, "/v1/analyze/audit", body)
    print(json.dumps(doc["report"], indent=2))
    return 0 if doc["report"]["ok"] else 1


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from remask.service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="remask",
        description="Block-diffusion decoding with pluggable post-commit editing.",
    )
    parser.add_argument(
        "--service-url",
        default=None,
        help="engine service URL (default: in-process; env REMASK_SERVICE_URL)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scripted scenario and write its trajectory")
    p_run.add_argument("scenario", help="path to a scenario JSON file")
    p_run.add_argument("--strategy", choices=STRATEGIES, default="t2m_lowprob")
    p_run.add_argument("--out-dir", default="out")
    p_run.add_argument("--oracle-url", default=None, help="remote oracle URL (env REMASK_ORACLE_URL)")
    add_config_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_gen = sub.add_parser("gen-task", help="generate a synthetic signal-model task set")
    p_gen.add_argument("--n-instances", type=int, default=20)
    p_gen.add_argument("--length", type=int, default=8)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--alpha0", type=float, default=0.0)
    p_gen.add_argument("--alpha1", type=float, default=1.2)
    p_gen.add_argument("--alpha2", type=float, default=3.6)
    p_gen.add_argument("--frac-adversarial", type=float, default=0.25)
    p_gen.add_argument("--bias-adversarial", type=float, default=-2.2)
    p_gen.add_argument("--bias-normal", type=float, default=0.9)
    p_gen.add_argument("--vocab-size", type=int, default=32)
    p_gen.add_argument("--out", default=None)
    p_gen.set_defaults(func=cmd_gen_task)

    p_sweep = sub.add_parser("sweep", help="run the ablation grid and write a cost/accuracy CSV")
    p_sweep.add_argument("--tasks", default=None, help="task-set JSON from gen-task")
    p_sweep.add_argument("--n-instances", type=int, default=20, help="used when --tasks is absent")
    p_sweep.add_argument("--length", type=int, default=8)
    p_sweep.add_argument("--parallelism", type=int, default=1)
    p_sweep.add_argument("--out", default="sweep.csv")
    add_config_flags(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_an = sub.add_parser("analyze", help="trajectory diff, proposition checks, context quality")
    an_sub = p_an.add_subparsers(dest="analyze_command", required=True)

    p_diff = an_sub.add_parser("diff", help="side-by-side divergence of two trajectories")
    p_diff.add_argument("trajectory_a")
    p_diff.add_argument("trajectory_b")
    p_diff.add_argument("--prompt-len-a", type=int, default=None)
    p_diff.add_argument("--prompt-len-b", type=int, default=None)
    p_diff.add_argument("--out", default=None)
    p_diff.set_defaults(func=cmd_analyze_diff)

    p_cq = an_sub.add_parser("context-quality", help="targeted vs random remasking quality")
    p_cq.add_argument("--n-c", type=int, required=True)
    p_cq.add_argument("--n-e", type=int, required=True)
    p_cq.add_argument("--s-plus", type=float, default=1.0)
    p_cq.add_argument("--s-minus", type=float, default=-1.0)
    p_cq.add_argument("--sigma", type=float, default=0.5)
    p_cq.set_defaults(func=cmd_analyze_context_quality)

    p_dq = an_sub.add_parser(
        "detector-quality", help="context quality of an imperfect detector vs random removal"
    )
    p_dq.add_argument("--n-c", type=int, required=True)
    p_dq.add_argument("--n-e", type=int, required=True)
    p_dq.add_argument("--s-plus", type=float, default=1.0)
    p_dq.add_argument("--s-minus", type=float, default=-1.0)
    p_dq.add_argument("--removed", type=int, required=True)
    p_dq.add_argument(
        "--precisions", type=float, nargs="+", default=[0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
    )
    p_dq.set_defaults(func=cmd_analyze_detector_quality)

    p_stuck = an_sub.add_parser("stuck", help="check the inert-replacement proposition on a posterior")
    p_stuck.add_argument("posterior", help="JSON file with entries + committed map")
    p_stuck.add_argument("--epsilon", type=float, default=0.01)
    p_stuck.add_argument("--tau-t2t", type=float, default=0.5)
    p_stuck.add_argument("--tau-lp", type=float, default=0.3)
    p_stuck.set_defaults(func=cmd_analyze_stuck)

    p_audit = an_sub.add_parser("audit", help="re-verify safety caps from a trajectory log")
    p_audit.add_argument("trajectory")
    p_audit.add_argument("--prompt-len", type=int, required=True)
    p_audit.add_argument("--max-new-tokens", type=int, required=True)
    p_audit.add_argument("--block-len", type=int, required=True)
    p_audit.add_argument("--c-max", type=int, default=1)
    p_audit.add_argument("--rho-max", type=float, default=0.25)
    p_audit.set_defaults(func=cmd_analyze_audit)

    p_serve = sub.add_parser("serve", help="run the engine service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8700)
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
