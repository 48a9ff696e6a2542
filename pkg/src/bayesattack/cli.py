"""Command-line entry point: ``bayesattack <command> [options]``."""
import argparse
import json
import logging
import os
import sys

from bayesattack.attack import ATTACKS, AttackConfig
from bayesattack.harness import (
    Campaign,
    load_dataset,
    open_oracle,
    run_ablation,
    run_campaign,
    save_report,
    write_dataset,
    write_trace,
)
from bayesattack.oracle import ObjectiveSpec, load_weights, save_weights


def _attack_flags(p):
    g = p.add_argument_group("attack")
    g.add_argument("--norm", choices=["linf", "l2"], default="linf")
    g.add_argument("--eps", type=float, default=0.05)
    g.add_argument("--budget", type=int, default=200)
    g.add_argument("--rd-side", type=int, default=6, help="side of the low-dim grid / frequency square")
    g.add_argument("--basis", choices=["nni", "fft_full", "fft_cos", "fft_sin"], default=None,
                   help="default: nni for linf, fft_full for l2")
    g.add_argument("--targeted", action="store_true",
                   help="targeted attack; random target per image unless --target-label")
    g.add_argument("--target-label", type=int, default=None)
    g.add_argument("--soft", action="store_true", help="use logit feedback instead of labels")
    g.add_argument("--n-init", type=int, default=5)
    g.add_argument("--acquisition", choices=["ei", "pi", "ucb", "mean"], default="ei")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--method", choices=sorted(ATTACKS), default="bayes")


def _io_flags(p, dataset_required=True):
    p.add_argument("--oracle", required=True, help="weight file or tcp://host:port")
    p.add_argument("--dataset", required=dataset_required)
    p.add_argument("--out", default=None)
    p.add_argument("--trace-dir", default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--count", type=int, default=None, help="attack only the first N images")


def _config(args) -> AttackConfig:
    feedback = "soft" if args.soft else "hard"
    if args.target_label is not None:
        objective = ObjectiveSpec("targeted", feedback, args.target_label)
    else:
        objective = ObjectiveSpec("untargeted", feedback)
    return AttackConfig(
        norm=args.norm, eps=args.eps, budget=args.budget, low_dim_side=args.rd_side,
        basis_mode=args.basis, n_init=args.n_init, objective=objective,
        acquisition=args.acquisition, seed=args.seed,
    )


def _campaign(args) -> Campaign:
    return Campaign(
        dataset=args.dataset, oracle=args.oracle, config=_config(args),
        image_count=args.count, out=args.out, trace_dir=args.trace_dir,
        workers=args.workers, method=args.method,
        random_targets=args.targeted and args.target_label is None,
    )


def cmd_attack(args):
    data = load_dataset(args.dataset)
    x0, y0 = data[args.index]
    cfg = _config(args)
    with open_oracle(args.oracle) as oracle:
        clean = oracle.label(x0)
        if clean != y0:
            print(json.dumps({"index": args.index, "status": "skipped", "reason": "misclassified"}))
            return 0
        result = ATTACKS[args.method](x0, y0, cfg, oracle)
    out = {"index": args.index, "label": y0, **result.to_dict()}
    if args.trace_dir:
        os.makedirs(args.trace_dir, exist_ok=True)
        write_trace(os.path.join(args.trace_dir, f"image_{args.index:05d}.csv"), result.trace)
    if args.out:
        save_report(out, args.out)
    print(json.dumps(out if args.verbose else {k: v for k, v in out.items() if k != "final_coeffs"}))
    return 0


def cmd_campaign(args):
    report = run_campaign(_campaign(args))
    print(json.dumps(report["metrics"], indent=1))
    return 0


def cmd_ablate(args):
    text = args.sweep
    if not text.lstrip().startswith("["):
        with open(text) as fh:
            text = fh.read()
    sweep = json.loads(text)
    reports = run_ablation(_campaign(args), sweep)
    for rep in reports:
        m = rep["metrics"]
        flag = " (cross-mode)" if rep["cross_mode"] else ""
        print(f"{json.dumps(rep['overrides'])}{flag}: success {m['success_rate']:.3f}, "
              f"avg queries {m['avg_queries_on_success']}")
    return 0


def cmd_serve(args):
    from bayesattack.remote import OracleServer

    oracle = load_weights(args.oracle)
    server = OracleServer(oracle, args.host, args.port)
    print(f"serving {type(oracle).__name__} on {server.address}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def cmd_verify(args):
    from bayesattack.selfcheck import run_all

    return 0 if run_all(args.seed) else 1


def cmd_make_synthetic(args):
    from bayesattack.synthetic import ball_dataset

    shape = (args.channels, args.side, args.side)
    oracle, images, labels = ball_dataset(args.count, args.seed, shape, args.block,
                                          args.radius, args.l2_margin)
    save_weights(oracle, args.weights)
    write_dataset(args.dataset, images, labels, 2)
    margin = min(oracle.linf_margin(x) for x in images)
    print(f"wrote {args.weights} and {args.dataset}; min linf margin {margin:.5f}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="bayesattack", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("attack", help="attack a single dataset image")
    _io_flags(p)
    p.add_argument("--index", type=int, default=0)
    _attack_flags(p)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("campaign", help="attack a batch of images and report metrics")
    _io_flags(p)
    _attack_flags(p)
    p.set_defaults(func=cmd_campaign)

    p = sub.add_parser("ablate", help="repeat a campaign under a list of overrides")
    _io_flags(p)
    _attack_flags(p)
    p.add_argument("--sweep", required=True,
                   help='JSON list of overrides or a path to one, e.g. \'[{"basis_mode": "fft_cos"}]\'')
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("serve-oracle", help="host a weight-file model over TCP")
    p.add_argument("--oracle", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=5577)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("verify", help="run numerical self-checks")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("make-synthetic", help="write a ball-oracle model and matching dataset")
    p.add_argument("--weights", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--channels", type=int, default=3)
    p.add_argument("--side", type=int, default=16)
    p.add_argument("--block", type=int, default=4)
    p.add_argument("--radius", type=float, default=3.0)
    p.add_argument("--l2-margin", type=float, default=0.6)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_synthetic)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
