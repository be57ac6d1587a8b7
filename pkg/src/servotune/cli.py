"""Command-line front end for the identification-and-tuning pipeline."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import classifier, identify as ident, plotting
from .grid import ProcessGrid, build_grid
from .manifest import RunManifest, make_run_dir
from .models import PdGains, SimulationConfig, TransferFunctionModel, closed_loop_step
from .tuning import TuningSpec, optimize_pd, phase_margin

USAGE_ERROR = 2
CHECK_FAILURE = 1


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def cmd_grid(args) -> int:
    run = make_run_dir("grid")
    spec = TuningSpec()
    lattice = tuple(args.lattice) if args.lattice else None
    grid = build_grid(args.loop, target_j=args.target_j, spec=spec, lattice=lattice)
    out = run / f"grid_{args.loop}.json"
    grid.save(out)
    grid.export_j_csv(run / "j_matrix.csv")
    man = RunManifest("grid", {"loop": args.loop, "target_j": args.target_j,
                               "lattice": lattice}, seeds={})
    man.record("grid", out)
    man.record("j_matrix", run / "j_matrix.csv")
    man.write(run)
    print(f"{len(grid)} classes -> {out}")
    return 0


def cmd_gen_data(args) -> int:
    grid = ProcessGrid.load(args.grid)
    run = make_run_dir("gen-data")
    ds = ident.generate_dataset(grid, examples_per_class=args.per_class,
                                rng_seed=args.seed)
    out = run / "dataset.csv"
    ds.to_csv(out)
    man = RunManifest("gen-data", {"grid": str(args.grid),
                                   "per_class": args.per_class}, seeds={"rng": args.seed})
    man.record("dataset", out)
    man.write(run)
    if ds.failed_classes:
        print(f"warning: classes without converged cycles: {ds.failed_classes}",
              file=sys.stderr)
    print(f"{ds.features.shape[0]} examples -> {out}")
    return 0


def cmd_train(args) -> int:
    grid = ProcessGrid.load(args.grid)
    ds = ident.DatasetResult.from_csv(args.dataset)
    run = make_run_dir("train")
    cfg = classifier.TrainConfig(epochs=args.epochs, rng_seed=args.seed,
                                 hidden_sizes=tuple(args.hidden))
    log: list = []
    model = classifier.train(ds.features, ds.labels, grid.j_matrix, cfg, log=log)
    out = run / "model.json"
    model.save(out)
    classifier.training_log_to_csv(log, run / "training_log.csv")
    man = RunManifest("train", {"grid": str(args.grid), "dataset": str(args.dataset),
                                "epochs": args.epochs, "hidden": list(args.hidden)},
                      seeds={"rng": args.seed})
    man.record("model", out)
    man.record("training_log", run / "training_log.csv")
    man.write(run)
    print(f"final accuracy {log[-1].accuracy:.3f}, mean J cost "
          f"{log[-1].mean_j_cost:.2f}% -> {out}")
    return 0


def cmd_identify(args) -> int:
    grid = ProcessGrid.load(args.grid)
    model = classifier.MlpModel.load(args.model)
    plant_doc = _load_json(args.plant)
    plant = TransferFunctionModel.from_json(plant_doc["model"])
    sigma = plant_doc.get("noise_sigma", 0.0)
    run = make_run_dir("identify")
    noise = None
    if sigma > 0.0:
        from .grid import relay_sim_config
        cfg = relay_sim_config(plant, grid.relay_amplitude, grid.beta_star, periods=45)
        n = int(cfg.horizon / cfg.dt_ctrl) + 2
        noise = ident._tick_noise(sigma, 0.0, cfg.dt_ctrl, n, args.seed)
    res = ident.identify(plant, grid, model, noise=noise, sigma_hint=sigma,
                         rng_seed=args.seed)
    doc = {"class_index": res.class_index,
           "gains": res.gains.to_json(),
           "gain_ratio": res.gain_ratio,
           "time_ratio": res.time_ratio,
           "cycle": res.cycle.to_json()}
    out = run / "identification.json"
    with open(out, "w") as fh:
        json.dump(doc, fh, indent=2)
    man = RunManifest("identify", {"grid": str(args.grid), "plant": str(args.plant)},
                      seeds={"rng": args.seed})
    man.record("identification", out)
    man.write(run)
    print(f"class {res.class_index}, gains kp={res.gains.kp:.4f} "
          f"kd={res.gains.kd:.4f} -> {out}")
    return 0


def cmd_tune(args) -> int:
    doc = _load_json(args.plant)
    plant = TransferFunctionModel.from_json(doc["model"])
    spec = TuningSpec(min_phase_margin=args.min_pm)
    gains = optimize_pd(plant, spec)
    pm = phase_margin(plant, gains, spec.filter_hz)
    _, ise = closed_loop_step(plant, gains, 1.0, SimulationConfig())
    out_doc = {"gains": gains.to_json(), "phase_margin_deg": pm, "step_ise": ise}
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(out_doc, fh, indent=2)
    print(json.dumps(out_doc, indent=2))
    return 0


def cmd_simulate(args) -> int:
    from .scenario import run_scenario
    from . import scenario_presets
    run = make_run_dir("simulate")
    scen = scenario_presets.load_scenario(args.scenario, seed=args.seed)
    res = run_scenario(scen)
    traces = run / "traces.csv"
    res.to_csv(traces)
    metrics = run / "metrics.json"
    with open(metrics, "w") as fh:
        json.dump(res.metrics(), fh, indent=2)
    man = RunManifest("simulate", {"scenario": args.scenario}, seeds={"rng": args.seed})
    man.record("traces", traces)
    man.record("metrics", metrics)
    man.write(run)
    print(f"{args.scenario}: {res.metrics()}")
    return CHECK_FAILURE if res.diverged else 0


def cmd_reproduce(args) -> int:
    from .repro import run_suite
    run = make_run_dir("reproduce")
    report = run_suite(args.suite)
    out = run / "repro_report.json"
    with open(out, "w") as fh:
        json.dump(report, fh, indent=2)
    man = RunManifest("reproduce", {"suite": args.suite}, seeds={})
    man.record("report", out)
    man.write(run)
    failed = [c for c in report["checks"] if not c["passed"]]
    for c in report["checks"]:
        status = "PASS" if c["passed"] else "FAIL"
        print(f"[{status}] {c['name']}: value={c['value']:.4g} "
              f"expected={c['expected']:.4g} tol={c['tolerance']}")
    return CHECK_FAILURE if failed else 0


def cmd_plot(args) -> int:
    out = Path(args.out) if args.out else Path(args.traces).with_suffix(".svg")
    try:
        if args.kind == "relay":
            plotting.plot_relay(args.traces, out)
        else:
            plotting.plot_step(args.traces, out)
    except ValueError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return USAGE_ERROR
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="servotune",
                                description="Relay-test identification and PD "
                                            "tuning for servoing loops")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("grid", help="discretize a parameter space")
    g.add_argument("--loop", choices=["attitude", "altitude"], required=True)
    g.add_argument("--target-j", type=float, default=10.0)
    g.add_argument("--lattice", type=int, nargs=3, default=None,
                   metavar=("N_TPROP", "N_T1", "N_TAU"))
    g.set_defaults(fn=cmd_grid)

    d = sub.add_parser("gen-data", help="simulate relay tests for every class")
    d.add_argument("--grid", required=True)
    d.add_argument("--per-class", type=int, default=50)
    d.add_argument("--seed", type=int, required=True)
    d.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train", help="fit the limit-cycle classifier")
    t.add_argument("--grid", required=True)
    t.add_argument("--dataset", required=True)
    t.add_argument("--epochs", type=int, default=40)
    t.add_argument("--hidden", type=int, nargs=2, default=(3000, 1000))
    t.add_argument("--seed", type=int, required=True)
    t.set_defaults(fn=cmd_train)

    i = sub.add_parser("identify", help="identify a plant and look up gains")
    i.add_argument("--grid", required=True)
    i.add_argument("--model", required=True)
    i.add_argument("--plant", required=True, help="JSON with the true plant")
    i.add_argument("--seed", type=int, required=True)
    i.set_defaults(fn=cmd_identify)

    u = sub.add_parser("tune", help="optimize PD gains for a known plant")
    u.add_argument("--plant", required=True)
    u.add_argument("--min-pm", type=float, default=20.0)
    u.add_argument("--out", default=None)
    u.set_defaults(fn=cmd_tune)

    s = sub.add_parser("simulate", help="run a servoing scenario")
    s.add_argument("--scenario", required=True,
                   help="preset name or JSON file")
    s.add_argument("--seed", type=int, required=True)
    s.set_defaults(fn=cmd_simulate)

    r = sub.add_parser("reproduce", help="run the published-value checks")
    r.add_argument("--suite", choices=["tables"], default="tables")
    r.set_defaults(fn=cmd_reproduce)

    pl = sub.add_parser("plot", help="render traces to SVG")
    pl.add_argument("--traces", required=True)
    pl.add_argument("--kind", choices=["relay", "step"], default="step")
    pl.add_argument("--out", default=None)
    pl.set_defaults(fn=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as ex:
        return USAGE_ERROR if ex.code not in (0, None) else 0
    try:
        return args.fn(args)
    except FileNotFoundError as ex:
        print(f"error: missing artifact: {ex}", file=sys.stderr)
        return USAGE_ERROR
    except (ValueError, KeyError) as ex:
        print(f"error: {ex}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
