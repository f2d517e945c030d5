"""Headless entry point: run missions scripted or from the gateway, emit
trajectory/summary artifacts, export per-figure plot data and run the
solver-vs-brute-force verification suite."""

from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import sys
import threading
from pathlib import Path

import numpy as np

from . import trajlog
from .bruteforce import run_oracle_comparison
from .config import (
    default_chain,
    default_mission_params,
    default_world,
    load_chain,
    load_mission_params,
    load_world,
)
from .errors import ConfigError, UnknownObjectError
from .gateway import ControllerService, StatusHub, UdpCommandReceiver
from .mission import Command, compile_mission, run_mission
from .world import SimConfig, initial_world, perceive

log = logging.getLogger("armstack")

DEFAULT_COMMAND_PORT = 47700
DEFAULT_STATUS_PORT = 47710


def _env_port(name: str, fallback: int) -> int:
    try:
        return int(os.environ.get(name, fallback))
    except ValueError:
        return fallback


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="armstack",
        description="Set-based task-priority arm controller: run missions, "
        "listen for gateway commands, export plot data, verify the solver.",
    )
    p.add_argument("--chain", type=Path, help="chain config YAML (default: built-in 7-DOF arm)")
    p.add_argument("--world", type=Path, help="world layout YAML (default: two-bottle table)")
    p.add_argument("--params", type=Path, help="mission parameter YAML (default: built-in)")
    p.add_argument(
        "--mission",
        help='command string "<action> <object> [left|right]", e.g. "move water right"',
    )
    p.add_argument("--listen", action="store_true", help="serve gateway commands until terminated")
    p.add_argument("--port", type=int, default=_env_port("ARMSTACK_PORT", DEFAULT_COMMAND_PORT),
                   help="UDP command port (env ARMSTACK_PORT)")
    p.add_argument("--status-port", type=int,
                   default=_env_port("ARMSTACK_STATUS_PORT", DEFAULT_STATUS_PORT),
                   help="console status/input WebSocket port (env ARMSTACK_STATUS_PORT)")
    p.add_argument("--seed", type=int, default=0, help="perception noise seed")
    p.add_argument("--out", type=Path, default=Path("runs"), help="artifact output directory")
    p.add_argument("--verify-oracle", action="store_true",
                   help="compare the solver against the brute-force reference")
    p.add_argument("--cases", type=int, default=1000, help="verification case count")
    p.add_argument("--export-plots", type=Path, metavar="TRAJECTORY_CSV",
                   help="project a trajectory log into per-figure CSV bundles")
    p.add_argument("--realtime", action="store_true",
                   help="pace listen-mode missions at the control period")
    return p


def parse_mission_string(text: str) -> Command:
    tokens = text.split()
    if len(tokens) not in (2, 3):
        raise ValueError(f'mission must be "<action> <object> [left|right]", got {text!r}')
    return Command(object_id=tokens[1], action=tokens[0],
                   sub_action=tokens[2] if len(tokens) == 3 else "none")


def _load_setup(args):
    chain = load_chain(args.chain) if args.chain else default_chain()
    layout = load_world(args.world) if args.world else default_world()
    params = load_mission_params(args.params) if args.params else default_mission_params()
    return chain, layout, params


def set_based_bounds(hierarchy) -> list[tuple[str, float, float]]:
    return [
        (t.id, t.bounds.lower, t.bounds.upper)
        for t in hierarchy.tasks
        if t.kind == "set_based"
    ]


def write_artifacts(out_dir: Path, script, result, chain, seed: int) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    bounds = set_based_bounds(script.hierarchy)
    trajectory = trajlog.write_trajectory(out_dir / "trajectory.csv", result.rows, chain.n, bounds)

    margins_path = out_dir / "bound_margins.csv"
    import csv

    with open(margins_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["tick", "clock"]
        for task_id, _, _ in bounds:
            header += [f"sigma_{task_id}", f"margin_{task_id}"]
        writer.writerow(header)
        for row in result.rows:
            record = [row.tick, repr(row.clock)]
            for task_id, lo, hi in bounds:
                sigma = row.sigma.get(task_id, float("nan"))
                record += [repr(sigma), repr(min(sigma - lo, hi - sigma))]
            writer.writerow(record)

    min_margins = {}
    activations = result.activation_counts
    for task_id, lo, hi in bounds:
        values = [row.sigma[task_id] for row in result.rows if task_id in row.sigma]
        if values:
            min_margins[task_id] = min(min(v - lo for v in values), min(hi - v for v in values))
    summary = {
        "mission": {"action": script.action, "object": script.object_id, "sub_action": script.sub_action},
        "status": result.status.state,
        "fault": result.status.fault,
        "seed": seed,
        "ticks": len(result.rows),
        "sim_duration": result.rows[-1].clock if result.rows else 0.0,
        "wall_time": result.wall_time,
        "phase_durations": result.phase_durations,
        "activation_counts": activations,
        "min_bound_margins": min_margins,
        "final_position_error": result.final_position_error,
        "final_orientation_error": result.final_orientation_error,
    }
    summary_path = out_dir / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return {"trajectory": trajectory, "margins": margins_path, "summary": summary_path}


def run_scripted_mission(args) -> int:
    chain, layout, params = _load_setup(args)
    command = parse_mission_string(args.mission)
    world = initial_world(layout)
    rng = np.random.default_rng(args.seed)
    perception = perceive(world, SimConfig(noise=params.noise), rng)
    script = compile_mission(command, world, perception, params)
    result = run_mission(script, world, chain, params, rng=rng)
    paths = write_artifacts(args.out, script, result, chain, args.seed)
    print(
        f"mission {command.action} {command.object_id} {command.sub_action}: "
        f"{result.status.state}"
        + (f" ({result.status.fault})" if result.status.fault else "")
        + f" in {result.rows[-1].clock:.2f} s simulated, {result.wall_time:.2f} s wall"
    )
    print(f"artifacts: {paths['trajectory']}, {paths['margins']}, {paths['summary']}")
    return 0 if result.status.state == "completed" else 3


def run_verify_oracle(args) -> int:
    mismatches = run_oracle_comparison(args.cases, args.seed)
    if mismatches:
        for line in mismatches[:20]:
            print("MISMATCH:", line)
        print(f"oracle verification FAILED on {len(mismatches)} of {args.cases} cases")
        return 1
    print(f"oracle verification passed: {args.cases} randomized cases, exact match")
    return 0


def run_export(args) -> int:
    out_dir = args.out
    _, rows = trajlog.read_trajectory(args.export_plots)
    files = trajlog.export_plot_data(args.export_plots, out_dir)
    for path in files:
        print(f"wrote {path}")
    if not rows:
        print("warning: trajectory log was empty; exports have zero rows", file=sys.stderr)
        return 1
    return 0


def run_listen(args) -> int:
    import uvicorn

    from .server import create_console_app

    chain, layout, params = _load_setup(args)
    hub = StatusHub()
    service = ControllerService(
        chain, layout, params, hub,
        seed=args.seed, pace=params.dt if args.realtime else None,
    )
    receiver = UdpCommandReceiver(args.port, service.handle_message).start()

    from .gateway import UdpCommandSender

    sender = UdpCommandSender("127.0.0.1", receiver.port)
    app = create_console_app(hub, lambda: service.object_ids, sender.send)
    config = uvicorn.Config(app, host="127.0.0.1", port=args.status_port, log_level="warning")
    server = uvicorn.Server(config)
    web_thread = threading.Thread(target=server.run, name="status-server", daemon=True)
    web_thread.start()

    shutdown = threading.Event()

    def handle_signal(signum, frame):
        shutdown.set()

    signal.signal(signal.SIGINT, handle_signal)
    signal.signal(signal.SIGTERM, handle_signal)

    print(f"listening: UDP commands on {receiver.port}, console on ws://127.0.0.1:{args.status_port}/ws", flush=True)
    try:
        service.serve(shutdown)
    finally:
        receiver.stop()
        sender.close()
        server.should_exit = True
        web_thread.join(timeout=3.0)
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.verify_oracle:
            return run_verify_oracle(args)
        if args.export_plots:
            return run_export(args)
        if args.mission:
            return run_scripted_mission(args)
        if args.listen:
            return run_listen(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError, UnknownObjectError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    parser.print_usage(sys.stderr)
    print("nothing to do: pass --mission, --listen, --verify-oracle or --export-plots", file=sys.stderr)
    return 2


if __name__ == "__main__":
    raise SystemExit(main())
