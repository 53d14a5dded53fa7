"""Command-line interface.

`serve` runs the HTTP service (with the TCP topic bridge alongside).
Commands needing a live stream (calibrate, replay, record) talk to a
running service; file-to-file commands (fit, validate-profile, analyze,
preprocess) work directly on disk.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .broker import TopicClient
from .calibration import (
    KeyposeSet,
    build_profile,
    load_profile,
    mirror_arm,
    save_profile,
    validate_profile,
)
from .config import load_config
from .depthproc import import_dataset
from .errors import RetargetError
from .pipeline import TOPIC_SKELETON
from .skeleton import (
    arm_length_sum,
    arm_vector,
    median_skeleton,
    read_skeleton_log,
    to_shoulder_frame,
    torso_basis,
)
from .workspace import read_trajectory_log, segment_atomic, smoothness_metric


def _parse_listen(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    return host or "127.0.0.1", int(port)


def load_keypose_file(path) -> dict:
    """Custom keypose set: JSON with targets (16x3), z_low, z_high."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return {"targets": doc["targets"], "z_low": doc["z_low"],
            "z_high": doc["z_high"]}


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = load_config(args.config)
    if args.mode:
        cfg.mode = args.mode
    if args.profile:
        cfg.profile_path = args.profile
    host, port = (cfg.http_host, cfg.http_port)
    if args.listen:
        host, port = _parse_listen(args.listen)
        cfg.http_host = host
    app = create_app(config=cfg, ui_dir=args.ui)
    uvicorn.run(app, host=host, port=port, log_level="info")
    return 0


def cmd_calibrate(args) -> int:
    import httpx

    base = args.connect.rstrip("/")
    with httpx.Client(base_url=base, timeout=60.0) as client:
        body = {"user": args.user}
        if args.session_dir:
            body["session_dir"] = args.session_dir
        if args.keyposes:
            body["keyposes"] = load_keypose_file(args.keyposes)
        state = client.post("/calibration/start", json=body).raise_for_status().json()
        total = 16
        print(f"calibration for {args.user!r}: {total} keyposes, "
              f"{state['required_samples']} samples each")
        while True:
            st = client.get("/calibration/state").raise_for_status().json()
            if st["state"] != "collecting":
                break
            idx = st["current_index"]
            target = st["target"]
            print(f"[{idx + 1:2d}/{total}] match the marker at "
                  f"({target[0]:+.3f}, {target[1]:+.3f}, {target[2]:+.3f}) m")
            if not args.no_prompt:
                input("  hold the pose and press Enter to sample... ")
            r = client.post("/calibration/collect", params={"timeout": args.timeout})
            if r.status_code != 200:
                print(f"  collection failed: {r.json().get('detail')}", file=sys.stderr)
                return 1
            print(f"  captured keypose {r.json()['index']}")
        finish = client.post("/calibration/finish", json={
            "out_path": args.out, "activate": not args.no_activate,
        }).raise_for_status().json()
        report = finish["report"]
        if finish["accepted"]:
            print(f"accepted: max residual {finish['max_residual']:.2e} m, "
                  f"profile -> {finish['profile_path']}, mode={finish['mode']}")
            return 0
        print("rejected, repeat the session:", file=sys.stderr)
        for reason in report["failures"]:
            print(f"  - {reason}", file=sys.stderr)
        return 1


def _load_session(session_dir: Path):
    meta_path = session_dir / "session.json"
    with open(meta_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    keyposes = KeyposeSet(targets=np.asarray(meta["targets"], dtype=float),
                          z_low=float(meta["z_low"]), z_high=float(meta["z_high"]))
    collected = []
    arm_length = 0.0
    for index in range(16):
        samples = read_skeleton_log(session_dir / f"keypose_{index:02d}.jsonl")
        med = median_skeleton(samples)
        vec = to_shoulder_frame(arm_vector(med), torso_basis(med))
        collected.append(mirror_arm(vec))
        if index == 0:
            arm_length = arm_length_sum(med)
    return meta, keyposes, collected, arm_length


def cmd_fit(args) -> int:
    session_dir = Path(args.session)
    meta, keyposes, collected, arm_length = _load_session(session_dir)
    profile = build_profile(user=meta["user"], collected=collected,
                            keyposes=keyposes, arm_length=arm_length)
    if not profile.quality.passed:
        print("session rejected:", file=sys.stderr)
        for reason in profile.quality.failures:
            print(f"  - {reason}", file=sys.stderr)
        return 1
    save_profile(profile, args.out)
    print(f"profile for {profile.user!r} written to {args.out}")
    return 0


def cmd_validate_profile(args) -> int:
    profile = load_profile(args.profile)
    report = validate_profile(profile.source_points, profile.targets)
    print(f"user: {profile.user}")
    print(f"min pairwise distance: {report.min_pairwise_distance:.4f} m")
    print(f"edge consistency: {sum(report.edge_consistency)}/15 ok")
    if report.passed:
        print("verdict: pass")
        return 0
    print("verdict: FAIL")
    for reason in report.failures:
        print(f"  - {reason}")
    return 1


def cmd_replay(args) -> int:
    host, port = _parse_listen(args.connect)
    rate = 0.0 if args.as_fast_as_possible else args.rate
    period = 1.0 / rate if rate > 0 else 0.0
    count = 0
    with TopicClient(host, port) as client:
        next_due = time.monotonic()
        with open(args.log, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    payload = json.loads(line)
                except json.JSONDecodeError as exc:
                    print(f"malformed log line {lineno}: {exc}", file=sys.stderr)
                    return 1
                if period and count:
                    delay = next_due - time.monotonic()
                    if delay > 0:
                        time.sleep(delay)
                next_due += period
                client.publish(args.topic, payload)
                count += 1
    print(f"replayed {count} records onto {args.topic}")
    return 0


def cmd_record(args) -> int:
    host, port = _parse_listen(args.connect)
    bare = len(args.topics) == 1
    written = 0
    deadline = time.monotonic() + args.duration if args.duration else None
    with TopicClient(host, port) as client, \
            open(args.out, "w", encoding="utf-8") as fh:
        client.subscribe(args.topics)
        print(f"recording {', '.join(args.topics)} -> {args.out} "
              f"(Ctrl-C to stop)")
        try:
            while True:
                if deadline and time.monotonic() > deadline:
                    break
                if args.count and written >= args.count:
                    break
                env = client.recv(timeout=0.5)
                if env is None or "topic" not in env:
                    continue
                doc = env["payload"] if bare else env
                fh.write(json.dumps(doc, sort_keys=True))
                fh.write("\n")
                written += 1
        except KeyboardInterrupt:
            pass
    print(f"wrote {written} records")
    return 0


def cmd_preprocess(args) -> int:
    if args.action != "import":
        print(f"unknown preprocess action {args.action!r}", file=sys.stderr)
        return 2
    episodes = import_dataset(args.dataset_dir, dest_root=args.out)
    images = sum(len(e) for e in episodes)
    people = sorted({e.person_id for e in episodes})
    print(f"imported {len(episodes)} episodes, {images} images, "
          f"{len(people)} people")
    for ep in episodes:
        open_count = sum(1 for l in ep.labels if l.value == "open")
        print(f"  {ep.person_id}/{ep.episode_id}: {len(ep)} images "
              f"({open_count} open, {len(ep) - open_count} closed)")
    if args.out:
        print(f"normalized copy written to {args.out}")
    return 0


def cmd_analyze(args) -> int:
    trajectory = read_trajectory_log(args.log)
    movements = segment_atomic(trajectory, v_stop=args.v_stop, dwell=args.dwell)
    translations = [m for m in movements if m.kind.value == "translation"]
    toggles = [m for m in movements if m.kind.value == "gripper_toggle"]
    print(f"samples: {len(trajectory)}")
    print(f"atomic movements: {len(movements)} "
          f"({len(translations)} translations, {len(toggles)} gripper toggles)")
    for i, m in enumerate(movements):
        if m.kind.value == "translation":
            dist = float(np.linalg.norm(m.end_position - m.start_position))
            print(f"  {i + 1}. translation {m.t_start:.2f}s -> {m.t_end:.2f}s "
                  f"({dist:.3f} m)")
        else:
            print(f"  {i + 1}. gripper toggle at {m.t_start:.2f}s")
    try:
        jerk = smoothness_metric(trajectory)
        print(f"smoothness (RMS jerk): {jerk:.4f} m/s^3")
    except RetargetError as exc:
        print(f"smoothness: not computable ({exc})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="retarget",
        description="depth-sensor arm-to-robot teleoperation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the teleoperation service")
    p.add_argument("--config", default=None, help="config file path")
    p.add_argument("--mode", choices=["affine", "tps"], default=None)
    p.add_argument("--profile", default=None, help="profile for tps mode")
    p.add_argument("--listen", default=None, metavar="ADDR:PORT")
    p.add_argument("--ui", default=None, metavar="DIR",
                   help="serve a UI build from this directory at /ui")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("calibrate", help="run a keypose training session")
    p.add_argument("--user", required=True)
    p.add_argument("--keyposes", default=None, metavar="FILE",
                   help="custom keypose set (JSON: targets, z_low, z_high)")
    p.add_argument("--connect", default="http://127.0.0.1:7600")
    p.add_argument("--session-dir", default=None,
                   help="save raw samples for offline refitting")
    p.add_argument("--out", default=None, help="profile output path")
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--no-prompt", action="store_true")
    p.add_argument("--no-activate", action="store_true")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("fit", help="fit a profile from a recorded session")
    p.add_argument("--session", required=True, metavar="DIR")
    p.add_argument("--out", required=True, metavar="PROFILE")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("validate-profile", help="re-run the quality gate")
    p.add_argument("profile")
    p.set_defaults(func=cmd_validate_profile)

    p = sub.add_parser("replay", help="stream a skeleton log to a service")
    p.add_argument("log")
    p.add_argument("--rate", type=float, default=30.0)
    p.add_argument("--as-fast-as-possible", action="store_true")
    p.add_argument("--topic", default=TOPIC_SKELETON)
    p.add_argument("--connect", default="127.0.0.1:7601", metavar="ADDR:PORT")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("record", help="record topics from a service")
    p.add_argument("--topics", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--connect", default="127.0.0.1:7601", metavar="ADDR:PORT")
    p.add_argument("--duration", type=float, default=None, help="seconds")
    p.add_argument("--count", type=int, default=None, help="stop after N records")
    p.set_defaults(func=cmd_record)

    p = sub.add_parser("preprocess", help="dataset tools")
    p.add_argument("action", choices=["import"])
    p.add_argument("dataset_dir")
    p.add_argument("--out", default=None, help="write a normalized copy here")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("analyze", help="atomic movements + smoothness of a log")
    p.add_argument("log")
    p.add_argument("--v-stop", type=float, default=0.02)
    p.add_argument("--dwell", type=float, default=0.2)
    p.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RetargetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
