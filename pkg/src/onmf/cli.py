"""Command-line front end for the factorization, Ising, image, and network pipelines.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Every run writes a metadata.txt of 'key: value' lines (full config, seed,
versions); reruns with identical metadata produce byte-identical numeric
outputs.
"""

from __future__ import annotations

import argparse
import math
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .factorization import (ConstraintSpec, OnlineNMF, WeightSchedule,
                            ZeroDictionaryError, init_dictionary,
                            load_dictionary, save_aggregates, save_dictionary)
from .ndl import (CorruptionError, DegenerateAggregatesError, NDLParams,
                  RocError, candidate_pairs, corrupt_network, denoise_classify,
                  dominance_scores, ndl_learn, nr_reconstruct, roc_auc)
from .networks import (EdgeListError, Motif, Network, OracleSizeError,
                       SamplingError, chain_update, hom_distribution_bruteforce,
                       initial_homomorphism, tv_distance)
from .pgm import PgmError, read_pgm, read_spins_pgm, write_pgm, write_spins_pgm
from .sources import (IsingConfig, PatchWalker, image_patch_minibatch,
                      ising_gibbs_run, reconstruct_grid, spin_patch_minibatch)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def _write_metadata(out_dir: Path, command: str, args) -> None:
    skip = {"func", "config", "out_dir"}
    entries = {"command": command,
               "out_dir": str(args.out_dir),
               "onmf_version": __version__,
               "numpy_version": np.__version__,
               "python_version": platform.python_version()}
    for key, val in sorted(vars(args).items()):
        if key in skip or callable(val):
            continue
        entries[key] = val
    with open(out_dir / "metadata.txt", "w") as fh:
        for key in sorted(entries):
            fh.write(f"{key}: {entries[key]}\n")


def _write_loss_trace(path: Path, trace) -> None:
    with open(path, "w") as fh:
        fh.write("t,surrogate\n")
        for t, value in trace:
            fh.write(f"{t},{repr(float(value))}\n")


def _atom_grid_image(W: np.ndarray, k: int) -> np.ndarray:
    """Tile min-max-normalized k x k atoms into one grid with 1px separators."""
    r = W.shape[1]
    cols = math.ceil(math.sqrt(r))
    rows = math.ceil(r / cols)
    canvas = np.ones((rows * (k + 1) + 1, cols * (k + 1) + 1))
    for j in range(r):
        tile = W[:, j].reshape(k, k)
        lo, hi = float(tile.min()), float(tile.max())
        norm = (tile - lo) / (hi - lo) if hi > lo else np.zeros_like(tile)
        rr, cc = divmod(j, cols)
        top, left = rr * (k + 1) + 1, cc * (k + 1) + 1
        canvas[top:top + k, left:left + k] = norm
    return canvas


def _write_atoms(out_dir: Path, W: np.ndarray, k: int, dominance=None) -> None:
    write_pgm(out_dir / "atoms.pgm", _atom_grid_image(W, k))
    if dominance is not None:
        with open(out_dir / "dominance.csv", "w") as fh:
            fh.write("atom,score\n")
            for j, s in enumerate(dominance):
                fh.write(f"{j},{repr(float(s))}\n")


def _write_weighted_edges(path: Path, net: Network, recons) -> None:
    """Edge list of reconstructed pair weights, 6 significant digits."""
    seen = sorted({(min(a, b), max(a, b)) for (a, b) in recons.counts})
    with open(path, "w") as fh:
        for u, v in seen:
            fh.write(f"{net.labels[u]} {net.labels[v]} "
                     f"{recons.pair_score(u, v):.6g}\n")


def _write_labels(path: Path, net: Network, labels: dict) -> None:
    with open(path, "w") as fh:
        fh.write("u,v,label\n")
        for (u, v), flag in sorted(labels.items()):
            fh.write(f"{net.labels[u]},{net.labels[v]},{str(bool(flag)).lower()}\n")


def _write_edge_list(path: Path, net: Network) -> None:
    with open(path, "w") as fh:
        for u, v in net.undirected_edges():
            fh.write(f"{net.labels[u]} {net.labels[v]}\n")


def _write_roc(path: Path, roc) -> None:
    with open(path, "w") as fh:
        fh.write("threshold,fpr,tpr\n")
        for th, fpr, tpr in roc.points:
            fh.write(f"{repr(float(th))},{repr(float(fpr))},{repr(float(tpr))}\n")
        fh.write(f"auc,{repr(float(roc.auc))}\n")


def _prepare_out_dir(args) -> Path:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def _ndl_params(args) -> NDLParams:
    return NDLParams(k=args.motif_k, atoms=args.atoms, iters=args.iters,
                     batch=args.batch, lam=args.lam, dict_radius=args.dict_radius,
                     mcmc=args.mcmc, beta=args.beta, kappa1=args.kappa1,
                     kappa2=args.kappa2)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_ndl_learn(args) -> None:
    out_dir = _prepare_out_dir(args)
    _write_metadata(out_dir, "ndl-learn", args)
    net = Network.from_edge_list_file(args.edges, undirected=args.undirected)
    rng = np.random.default_rng(args.seed)
    nd = ndl_learn(net, _ndl_params(args), rng)
    save_dictionary(out_dir / "dictionary.txt", nd.W)
    save_aggregates(out_dir / "aggregates.txt", nd.stats, args.beta)
    _write_loss_trace(out_dir / "loss_trace.csv", nd.loss_trace)
    _write_atoms(out_dir, nd.W, nd.k, nd.dominance)


def cmd_reconstruct(args) -> None:
    out_dir = _prepare_out_dir(args)
    _write_metadata(out_dir, "reconstruct", args)
    net = Network.from_edge_list_file(args.edges, undirected=args.undirected)
    W = load_dictionary(args.dict)
    if W.shape[0] != args.motif_k ** 2:
        raise UsageError(f"dictionary has {W.shape[0]} rows; "
                         f"--motif-k {args.motif_k} needs {args.motif_k ** 2}")
    rng = np.random.default_rng(args.seed)
    recons = nr_reconstruct(net, W, iters=args.iters, lam=args.lam,
                            mcmc=args.mcmc, rng=rng)
    _write_weighted_edges(out_dir / "recons.edgelist", net, recons)


def cmd_denoise(args) -> None:
    out_dir = _prepare_out_dir(args)
    _write_metadata(out_dir, "denoise", args)
    net = Network.from_edge_list_file(args.edges, undirected=args.undirected)
    rng = np.random.default_rng(args.seed)

    if args.fraction is not None:
        result = corrupt_network(net, args.mode, args.fraction, rng)
        corrupted, labels = result.corrupted, result.labels
        _write_edge_list(out_dir / "corrupted.edgelist", corrupted)
    else:
        if args.labels is None:
            raise UsageError("need --fraction to corrupt or --labels for a "
                             "pre-corrupted network")
        corrupted = net
        labels = _read_labels(args.labels, net)

    if args.dict is not None:
        W = load_dictionary(args.dict)
        if W.shape[0] != args.motif_k ** 2:
            raise UsageError(f"dictionary has {W.shape[0]} rows; "
                             f"--motif-k {args.motif_k} needs {args.motif_k ** 2}")
    else:
        nd = ndl_learn(corrupted, _ndl_params(args), rng)
        W = nd.W
        save_dictionary(out_dir / "dictionary.txt", W)

    recons = nr_reconstruct(corrupted, W, iters=args.recon_iters,
                            lam=args.recon_lambda, mcmc=args.mcmc, rng=rng)
    _write_labels(out_dir / "labels.csv", net, labels)
    _write_weighted_edges(out_dir / "recons.edgelist", net, recons)

    scores = {pair: recons.pair_score(*pair)
              for pair in candidate_pairs(corrupted, args.mode)}
    positives = {pair: not genuine for pair, genuine in labels.items()}
    lower = args.direction == "lower"
    roc = roc_auc(scores, positives, lower_is_positive=lower)
    _write_roc(out_dir / "roc.csv", roc)
    if args.threshold is not None:
        predictions = denoise_classify(corrupted, recons, args.mode,
                                       args.threshold, lower_is_positive=lower)
        with open(out_dir / "predictions.csv", "w") as fh:
            fh.write("u,v,positive\n")
            for (u, v), flag in sorted(predictions.items()):
                fh.write(f"{net.labels[u]},{net.labels[v]},"
                         f"{str(bool(flag)).lower()}\n")


def _read_labels(path, net: Network) -> dict:
    index = {lab: i for i, lab in enumerate(net.labels)}
    labels = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("u,v,"):
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise EdgeListError(f"{path}: line {lineno}: expected 'u,v,label'")
            if parts[0] not in index or parts[1] not in index:
                raise EdgeListError(f"{path}: line {lineno}: unknown node label")
            u, v = index[parts[0]], index[parts[1]]
            labels[(min(u, v), max(u, v))] = parts[2].strip().lower() == "true"
    return labels


def cmd_ising_learn(args) -> None:
    out_dir = _prepare_out_dir(args)
    _write_metadata(out_dir, "ising-learn", args)
    if args.patch > args.lattice:
        raise UsageError("--patch must not exceed --lattice")
    rng = np.random.default_rng(args.seed)
    if args.init_config is not None:
        spins = read_spins_pgm(args.init_config)
        if spins.shape[0] != args.lattice:
            raise UsageError("--init-config size must match --lattice")
        config = IsingConfig(spins=spins, temperature=args.temperature)
    else:
        config = IsingConfig.random(args.lattice, args.temperature, rng)
    d = args.patch ** 2
    constraint = ConstraintSpec.nonnegative(args.dict_radius)
    engine = OnlineNMF(init_dictionary(d, args.atoms, constraint, rng),
                       lam=args.lam, kappa1=args.kappa1, kappa2=args.kappa2,
                       schedule=WeightSchedule(args.beta))
    trace = []
    for t in range(1, args.iters + 1):
        ising_gibbs_run(config, args.epoch, rng)
        X = spin_patch_minibatch(config, args.patch, args.batch, rng)
        result = engine.step(X)
        trace.append((t, result.surrogate))
    save_dictionary(out_dir / "dictionary.txt", engine.W)
    _write_loss_trace(out_dir / "loss_trace.csv", trace)
    try:
        dom = dominance_scores(engine.stats.A)
    except DegenerateAggregatesError:
        dom = None
    _write_atoms(out_dir, engine.W, args.patch, dom)
    write_spins_pgm(out_dir / "final_config.pgm", config.spins)


def cmd_image_learn(args) -> None:
    out_dir = _prepare_out_dir(args)
    _write_metadata(out_dir, "image-learn", args)
    image = read_pgm(args.image)
    rng = np.random.default_rng(args.seed)
    d = args.patch ** 2
    constraint = ConstraintSpec.nonnegative(args.dict_radius)
    engine = OnlineNMF(init_dictionary(d, args.atoms, constraint, rng),
                       lam=args.lam, kappa1=args.kappa1, kappa2=args.kappa2,
                       schedule=WeightSchedule(args.beta))
    walker = PatchWalker.random(image.shape[0], image.shape[1], args.patch, rng)
    trace = []
    positions = []
    for t in range(1, args.iters + 1):
        X, walker, corners = image_patch_minibatch(
            image, args.patch, args.batch, mode=args.mode, walker=walker,
            rng=rng, return_corners=True)
        result = engine.step(X)
        trace.append((t, result.surrogate))
        positions.extend((t, int(r), int(c)) for r, c in corners)
    save_dictionary(out_dir / "dictionary.txt", engine.W)
    _write_loss_trace(out_dir / "loss_trace.csv", trace)
    try:
        dom = dominance_scores(engine.stats.A)
    except DegenerateAggregatesError:
        dom = None
    _write_atoms(out_dir, engine.W, args.patch, dom)
    recon = reconstruct_grid(image, engine.W, args.patch, lam=args.recon_lambda,
                             stride=args.stride)
    write_pgm(out_dir / "reconstruction.pgm", recon)
    if args.mode == "walk":
        with open(out_dir / "positions.csv", "w") as fh:
            fh.write("t,row,col\n")
            for t, r, c in positions:
                fh.write(f"{t},{r},{c}\n")


def cmd_hom_diag(args) -> None:
    out_dir = _prepare_out_dir(args)
    _write_metadata(out_dir, "hom-diag", args)
    net = Network.from_edge_list_file(args.edges, undirected=args.undirected)
    motif = Motif.chain(args.motif_k)
    try:
        oracle = hom_distribution_bruteforce(net, motif)
    except OracleSizeError as exc:
        raise OracleSizeError(f"{exc}; rerun with a smaller graph or motif")
    children = np.random.SeedSequence(args.seed).spawn(args.chains)
    for c, child in enumerate(children):
        rng = np.random.default_rng(child)
        suffix = f"_chain{c}" if args.chains > 1 else ""
        x = initial_homomorphism(net, motif, rng)
        counts: dict = {}
        tv_rows = []
        for step in range(1, args.iters + 1):
            x = chain_update(net, motif, x, rng, args.mcmc)
            counts[x] = counts.get(x, 0) + 1
            if step % 1000 == 0 or step == args.iters:
                emp = {k: v / step for k, v in counts.items()}
                tv_rows.append((step, tv_distance(emp, oracle)))
        with open(out_dir / f"empirical_dist{suffix}.csv", "w") as fh:
            fh.write("state,frequency\n")
            total = sum(counts.values())
            for state in sorted(counts):
                name = "-".join(net.labels[v] for v in state)
                fh.write(f"{name},{repr(counts[state] / total)}\n")
        with open(out_dir / f"tv_trace{suffix}.csv", "w") as fh:
            fh.write("step,tv\n")
            for step, tv in tv_rows:
                fh.write(f"{step},{repr(float(tv))}\n")


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config", default=None,
                   help="key: value file supplying defaults for any flag")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--kappa1", type=float, default=0.0)
    p.add_argument("--kappa2", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=1.0)


def _add_network_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--edges", required=True)
    p.add_argument("--undirected", action="store_true")
    p.add_argument("--motif-k", type=int, default=3)
    p.add_argument("--mcmc", choices=["glauber", "pivot", "pivot-approx"],
                   default="pivot")


def build_parser():
    parser = _Parser(prog="onmf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {}

    p = sub.add_parser("ndl-learn", parents=[], help="learn a network dictionary")
    _add_common(p)
    _add_network_flags(p)
    p.add_argument("--atoms", type=int, default=16)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--batch", type=int, default=100)
    p.add_argument("--dict-radius", type=float, default=1000.0)
    p.set_defaults(func=cmd_ndl_learn)
    commands["ndl-learn"] = p

    p = sub.add_parser("reconstruct", help="reconstruct a network with a dictionary")
    _add_common(p)
    _add_network_flags(p)
    p.add_argument("--dict", required=True)
    p.add_argument("--iters", type=int, default=20000)
    p.set_defaults(func=cmd_reconstruct, lam=0.0)
    commands["reconstruct"] = p

    p = sub.add_parser("denoise", help="corrupt, reconstruct, and score a network")
    _add_common(p)
    _add_network_flags(p)
    p.add_argument("--mode", choices=["additive", "subtractive"],
                   default="subtractive")
    p.add_argument("--fraction", type=float, default=None)
    p.add_argument("--labels", default=None,
                   help="labels.csv for a pre-corrupted input")
    p.add_argument("--dict", default=None)
    p.add_argument("--atoms", type=int, default=16)
    p.add_argument("--iters", type=int, default=60)
    p.add_argument("--batch", type=int, default=80)
    p.add_argument("--dict-radius", type=float, default=1000.0)
    p.add_argument("--recon-iters", type=int, default=20000)
    p.add_argument("--recon-lambda", type=float, default=0.0)
    p.add_argument("--direction", choices=["lower", "higher"], default="higher",
                   help="which reconstructed-weight tail flags a corrupted pair")
    p.add_argument("--threshold", type=float, default=None)
    p.set_defaults(func=cmd_denoise)
    commands["denoise"] = p

    p = sub.add_parser("ising-learn", help="dictionary learning from a Gibbs chain")
    _add_common(p)
    p.add_argument("--lattice", type=int, default=50)
    p.add_argument("--temperature", type=float, required=True)
    p.add_argument("--epoch", type=int, default=1, help="Gibbs updates per minibatch")
    p.add_argument("--patch", type=int, default=10)
    p.add_argument("--atoms", type=int, default=25)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--batch", type=int, default=100)
    p.add_argument("--dict-radius", type=float, default=1000.0)
    p.add_argument("--init-config", default=None, help="PGM spin grid to start from")
    p.set_defaults(func=cmd_ising_learn)
    commands["ising-learn"] = p

    p = sub.add_parser("image-learn", help="dictionary learning from image patches")
    _add_common(p)
    p.add_argument("--image", required=True)
    p.add_argument("--mode", choices=["iid", "walk"], default="iid")
    p.add_argument("--patch", type=int, default=10)
    p.add_argument("--atoms", type=int, default=25)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--batch", type=int, default=200)
    p.add_argument("--dict-radius", type=float, default=1000.0)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--recon-lambda", type=float, default=0.0)
    p.set_defaults(func=cmd_image_learn)
    commands["image-learn"] = p

    p = sub.add_parser("hom-diag", help="chain diagnostics against the exact oracle")
    _add_common(p)
    _add_network_flags(p)
    p.add_argument("--iters", type=int, default=100000)
    p.add_argument("--chains", type=int, default=1)
    p.set_defaults(func=cmd_hom_diag)
    commands["hom-diag"] = p

    return parser, commands


def _apply_config(argv, parser, commands):
    """Pre-scan for --config and install its keys as subcommand defaults."""
    if "--config" not in argv:
        return
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        raise UsageError("--config needs a file path")
    path = argv[idx + 1]
    if not argv or argv[0] not in commands:
        raise UsageError("--config requires a subcommand")
    sub = commands[argv[0]]
    defaults = {}
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if ":" not in line:
                    raise UsageError(f"{path}: line {lineno}: expected 'key: value'")
                key, value = line.split(":", 1)
                dest = key.strip().replace("-", "_")
                defaults[dest] = value.strip()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}")
    known = {a.dest: a for a in sub._actions}
    for dest, value in defaults.items():
        if dest not in known:
            raise UsageError(f"unknown config key {dest!r}")
        action = known[dest]
        if isinstance(action, argparse._StoreTrueAction):
            sub.set_defaults(**{dest: value.lower() == "true"})
        elif action.type is not None:
            sub.set_defaults(**{dest: action.type(value)})
        else:
            sub.set_defaults(**{dest: value})
        action.required = False  # the config satisfies required flags


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, commands = build_parser()
    try:
        _apply_config(argv, parser, commands)
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EdgeListError, PgmError, OracleSizeError, CorruptionError,
            FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SamplingError, DegenerateAggregatesError, RocError,
            ZeroDictionaryError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
