"""Command line front end.

One binary, subcommand style.  Every command accepts --json for a
machine-readable summary on stdout, writes output files atomically,
and draws its randomness from a single --seed, so a run is
reproducible from the report it emits.  Exit codes: 0 success,
2 usage error, 1 runtime failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from ._util import atomic_write_bytes, atomic_write_text, round_half_away
from .allocator import (
    RatioMap,
    block_ratio_aggregation,
    clip_round,
    local_std_saliency,
    simulate_correction,
    uniform_descent,
)
from .block_codec import (
    concat_measurements,
    fold,
    load_measurements,
    residual_sample_blocks,
    sample_blocks,
    save_measurements,
    transpose_initialize,
    unfold,
)
from .errors import ConvergenceError, FormatError
from .matrix_bank import (
    load_matrix,
    orthogonality_report,
    save_matrix,
    svd_init,
    truncate,
)
from .metrics_io import load_image, save_image, ssim
from .pipeline import PipelineConfig, gamma_sweep, run_mode, sweep_to_csv
from .recovery import (
    DihedralTransform,
    RecoveryConfig,
    parse_prox,
    reconstruct,
)

_IMAGE_SUFFIXES = (".pgm", ".png")


def _fail(message):
    raise SystemExit("cascs: error: %s" % message)


def _emit(args, report, lines):
    if getattr(args, "json", False):
        print(json.dumps(report, indent=2))
    else:
        for line in lines:
            print(line)


def _resolve(args, defaults):
    """Merge flag values over the optional JSON config file over defaults."""
    file_cfg = {}
    path = getattr(args, "config", None)
    if path:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except (OSError, ValueError) as exc:
            raise FormatError("cannot read config %r: %s" % (path, exc)) from None
        if not isinstance(file_cfg, dict):
            raise FormatError("config file must hold a JSON object")
    out = {}
    for key, fallback in defaults.items():
        value = getattr(args, key, None)
        if value is None:
            value = file_cfg.get(key, fallback)
        out[key] = value
    return out


def _threads(args):
    value = getattr(args, "threads", None)
    if value is None:
        value = os.environ.get("CASCS_THREADS", "1")
    try:
        count = int(value)
    except ValueError:
        raise FormatError("bad thread count %r" % (value,)) from None
    return max(1, count)


def _seed(args):
    merged = _resolve(args, {"seed": 0})
    return int(merged["seed"])


def _list_images(directory):
    try:
        names = sorted(os.listdir(directory))
    except OSError as exc:
        raise FormatError("cannot list %r: %s" % (directory, exc)) from None
    paths = [os.path.join(directory, n) for n in names
             if n.lower().endswith(_IMAGE_SUFFIXES)]
    if not paths:
        raise FormatError("no .pgm or .png files under %r" % directory)
    return paths


def _recovery_config(args, seed):
    merged = _resolve(args, {"phases": 13, "prox": "dct", "rte": "off"})
    if merged["rte"] not in ("on", "off"):
        raise FormatError("--rte takes on or off, got %r" % (merged["rte"],))
    return RecoveryConfig(
        phases=int(merged["phases"]),
        prox=parse_prox(str(merged["prox"])),
        random_transforms=(merged["rte"] == "on"),
        transform_seed=seed,
    )


def _padded_saliency(image, block, window=7):
    grid = unfold(image, block)
    canvas = fold(grid, crop=False)
    return grid, local_std_saliency(canvas, window)


def cmd_init_matrix(args):
    paths = _list_images(args.patches)
    block = args.block
    columns = []
    for path in paths:
        image = load_image(path)
        if min(image.shape) < block:
            continue
        columns.append(unfold(image, block).data)
    if not columns:
        _fail("every patch image is smaller than the block size")
    data = np.concatenate(columns, axis=1)
    if data.shape[1] < data.shape[0]:
        _fail("need at least %d blocks to span the space, found %d"
              % (data.shape[0], data.shape[1]))
    bank = svd_init(data, block_size=block)
    save_matrix(bank, args.out, precision=args.precision)
    report = {
        "out": args.out,
        "n": bank.n,
        "block": block,
        "columns": int(data.shape[1]),
        "images": len(paths),
        "hash": bank.content_hash().hex(),
    }
    _emit(args, report, [
        "wrote %s: %dx%d generating matrix from %d blocks"
        % (args.out, bank.n, bank.n, data.shape[1]),
        "content hash %s" % report["hash"],
    ])
    return 0


def cmd_analyze_matrix(args):
    bank = load_matrix(args.matrix)
    diag = orthogonality_report(bank)
    report = {"matrix": args.matrix, "n": bank.n, "block": bank.block_size,
              "hash": bank.content_hash().hex()}
    report.update(diag.to_dict())
    text = json.dumps(report, indent=2) + "\n"
    if args.json is None:
        print("matrix %s: N=%d block=%d" % (args.matrix, bank.n, bank.block_size))
        print("row energy eta=%.6g  max off-diagonal=%.3e  "
              "mean near-zero fraction=%.4f"
              % (diag.eta, diag.max_offdiag, float(np.mean(diag.row_near_zero))))
    elif args.json == "-":
        sys.stdout.write(text)
    else:
        atomic_write_text(args.json, text)
        print("wrote %s" % args.json)
    return 0


def cmd_allocate(args):
    seed = _seed(args)
    image = load_image(args.image)
    block = args.block
    n = block * block
    budget = int(round_half_away(args.ratio * n))
    _, saliency = _padded_saliency(image, block)
    rmap, qmap, trace = block_ratio_aggregation(saliency, block, budget, n,
                                                seed=seed)
    atomic_write_text(args.out, rmap.to_json() + "\n")
    if args.trace:
        atomic_write_text(args.trace, trace.to_csv())
    report = {
        "out": args.out,
        "blocks": int(qmap.grid.size),
        "budget": budget,
        "bound": n,
        "total": int(qmap.grid.sum()),
        "iterations": trace.iterations,
        "delta_inf": trace.delta_inf,
        "seed": seed,
    }
    _emit(args, report, [
        "allocated %d measurements over %d blocks (budget %d per block)"
        % (report["total"], report["blocks"], budget),
        "correction converged in %d iterations, final delta %.3g"
        % (trace.iterations, trace.delta_inf),
        "wrote %s" % args.out,
    ])
    return 0


def cmd_simulate_bra(args):
    seed = _seed(args)
    result = simulate_correction(args.trials, args.blocks, budget=args.budget,
                                 bound=args.bound, seed=seed)
    if args.csv:
        atomic_write_text(args.csv, result.to_csv())
    converged = int(np.sum(result.iterations >= 0))
    report = {
        "trials": result.trials,
        "blocks": result.cells,
        "budget": result.budget,
        "bound": result.bound,
        "seed": seed,
        "converged": converged,
        "max_iterations": result.max_iterations,
        "sign_violations": result.sign_violations,
        "growth_violations": result.growth_violations,
    }
    _emit(args, report, [
        "%d/%d trials reached delta=0, worst case %d iterations"
        % (converged, result.trials, result.max_iterations),
        "multinomial phase: %d sign flips, %d magnitude growths"
        % (result.sign_violations, result.growth_violations),
    ])
    return 0


def _uniform_sizes(cells, ratio, n):
    total = int(round_half_away(ratio * n * cells))
    base, rem = divmod(total, cells)
    sizes = np.full(cells, base, dtype=np.int64)
    sizes[:rem] += 1
    return sizes


def cmd_sample(args):
    if (args.ratio is None) == (args.ratios is None):
        _fail("give exactly one of --ratio or --ratios")
    image = load_image(args.image)
    bank = load_matrix(args.matrix)
    block = bank.block_size
    n = bank.n
    grid = unfold(image, block)
    if args.ratios is not None:
        with open(args.ratios, "r", encoding="utf-8") as fh:
            rmap = RatioMap.from_json(fh.read())
        if rmap.block_size != block:
            _fail("ratio map block %d does not match matrix block %d"
                  % (rmap.block_size, block))
        sizes = rmap.to_sizes().grid
        if sizes.shape != grid.grid_shape:
            _fail("ratio map covers %r blocks, image has %r"
                  % (sizes.shape, grid.grid_shape))
        if rmap.row_start:
            meas = residual_sample_blocks(grid, bank, rmap.row_start,
                                          rmap.row_start + sizes)
        else:
            meas = sample_blocks(grid, bank, sizes)
    elif args.uniform:
        sizes = _uniform_sizes(grid.cells, args.ratio, n)
        meas = sample_blocks(grid, bank, sizes.reshape(grid.grid_shape))
    else:
        q = int(clip_round(args.ratio * n, n))
        meas = sample_blocks(grid, bank, q)
    save_measurements(meas, args.out)
    report = {
        "out": args.out,
        "blocks": grid.cells,
        "measurements": meas.total_measurements(),
        "mean_rows": meas.total_measurements() / grid.cells,
    }
    _emit(args, report, [
        "sampled %d measurements over %d blocks -> %s"
        % (report["measurements"], grid.cells, args.out),
    ])
    return 0


def _load_measurement_chain(spec_text):
    paths = [p for p in spec_text.split(",") if p]
    if not paths:
        _fail("--meas needs at least one .casy path")
    sets = [load_measurements(p) for p in paths]
    combined = sets[0]
    for extra in sets[1:]:
        combined = concat_measurements(combined, extra)
    return sets, combined


def _ratio_map_for(rmap, n):
    # A residual-pass map describes rows past the shared basic prefix;
    # fold that prefix back in so thresholds see the full per-block rate.
    if rmap.row_start == 0:
        return rmap
    return RatioMap(rmap.grid + rmap.row_start / n, rmap.block_size,
                    rmap.budget + rmap.row_start, n)


def cmd_reconstruct(args):
    seed = _seed(args)
    bank = load_matrix(args.matrix)
    sets, combined = _load_measurement_chain(args.meas)
    rmap = None
    if args.ratios:
        with open(args.ratios, "r", encoding="utf-8") as fh:
            rmap = _ratio_map_for(RatioMap.from_json(fh.read()), bank.n)
    config = _recovery_config(args, seed)
    x0 = None
    for item in sets:
        part = transpose_initialize(item, bank, crop=False)
        x0 = part if x0 is None else x0 + part
    result = reconstruct(combined, bank, rmap, config, x0=x0)
    save_image(result.image, args.out)
    if args.log:
        lines = ["phase,fidelity"]
        lines += ["%d,%r" % (i, float(f)) for i, f in enumerate(result.fidelity)]
        atomic_write_text(args.log, "\n".join(lines) + "\n")
    report = {
        "out": args.out,
        "inputs": len(sets),
        "measurements": combined.total_measurements(),
        "phases": config.phases,
        "fidelity_final": float(result.fidelity[-1]),
        "seed": seed,
    }
    _emit(args, report, [
        "reconstructed %s from %d measurements (%d phases)"
        % (args.out, report["measurements"], config.phases),
        "final data fidelity %.6g" % report["fidelity_final"],
    ])
    return 0


def cmd_pipeline(args):
    seed = _seed(args)
    merged = _resolve(args, {"gamma": None, "mode": "deployed"})
    image = load_image(args.image)
    bank = load_matrix(args.matrix)
    recovery = _recovery_config(args, seed)
    kwargs = {"recovery": recovery, "seed": seed}
    if merged["gamma"] is not None:
        kwargs["gamma"] = float(merged["gamma"])
    cfg = PipelineConfig(bank, args.ratio, **kwargs)
    result = run_mode(image, cfg, merged["mode"])
    save_image(result.image, args.out)

    if args.handoff:
        if result.exchange is None:
            _fail("--handoff needs the deployed mode, got %r" % merged["mode"])
        os.makedirs(args.handoff, exist_ok=True)
        names = {"basic_measurements": "basic.casy",
                 "ratio_map_request": "request.json",
                 "residual_measurements": "residual.casy"}
        for message in result.exchange.messages:
            atomic_write_bytes(os.path.join(args.handoff, names[message.name]),
                               message.payload)
        atomic_write_text(os.path.join(args.handoff, "ratios.json"),
                          result.rmap.to_json() + "\n")

    report = result.report(reference=image)
    report.update({
        "image": args.image,
        "out": args.out,
        "ratio": args.ratio,
        "gamma": cfg.gamma,
        "seed": seed,
        "phases": recovery.phases,
        "ssim": ssim(image, result.image),
    })
    lines = [
        "%s mode at ratio %.4g: PSNR %.2f dB, SSIM %.4f"
        % (merged["mode"], args.ratio, report["psnr"], report["ssim"]),
        "wrote %s" % args.out,
    ]
    if result.exchange is not None:
        for msg in result.exchange.summary():
            lines.append("  %-22s %-28s %6d bytes"
                         % (msg["name"], msg["direction"], msg["bytes"]))
    if args.report:
        atomic_write_text(args.report, json.dumps(report, indent=2) + "\n")
        lines.append("wrote %s" % args.report)
    _emit(args, report, lines)
    return 0


def cmd_gamma_sweep(args):
    seed = _seed(args)
    threads = _threads(args)
    bank = load_matrix(args.matrix)
    images = [load_image(p) for p in _list_images(args.images)]
    ratios = [float(r) for r in args.ratios.split(",") if r]
    if not ratios:
        _fail("--ratios needs at least one value")
    gammas = np.linspace(0.0, 1.0, args.grid)
    recovery = _recovery_config(args, seed)
    rows = gamma_sweep(images, bank, ratios, gammas, recovery=recovery,
                       seed=seed, threads=threads)
    if args.csv:
        atomic_write_text(args.csv, sweep_to_csv(rows))
    best = {}
    for row in rows:
        cur = best.get(row["ratio"])
        if cur is None or row["psnr_deployed"] > cur["psnr_deployed"]:
            best[row["ratio"]] = row
    report = {"images": len(images), "ratios": ratios, "grid": args.grid,
              "seed": seed, "rows": rows}
    lines = ["swept %d images x %d ratios x %d gammas"
             % (len(images), len(ratios), args.grid)]
    for ratio in ratios:
        row = best[ratio]
        lines.append(
            "ratio %.4g: best gamma %.3f (%.2f dB), ideal %.2f dB, uniform %.2f dB"
            % (ratio, row["gamma"], row["psnr_deployed"], row["psnr_ideal"],
               row["psnr_uniform"]))
    if args.csv:
        lines.append("wrote %s" % args.csv)
    _emit(args, report, lines)
    return 0


def _check(name, fn):
    try:
        detail = fn()
        return {"name": name, "ok": True, "detail": detail or ""}
    except AssertionError as exc:
        return {"name": name, "ok": False, "detail": str(exc)}


def _selfcheck_suite(quick, seed):
    rng = np.random.default_rng(seed)
    trials = 200 if quick else 2000
    checks = []

    def descent_bound():
        for _ in range(trials):
            cells = int(rng.integers(2, 26))
            bound = int(rng.integers(4, 129))
            budget = int(rng.integers(1, bound + 1))
            q0 = rng.uniform(0, bound, size=cells)
            trace = uniform_descent(q0, budget, bound, max_steps=200)
            assert trace.fixed_point, "no fixed point reached"
            num = int(round(trace.records[-1].q.sum())) - budget * cells
            assert -cells < 2 * num <= cells, \
                "terminal delta %r outside (-1/2, 1/2]" % (num / cells)
        return "%d random instances" % trials

    def rounding_distance():
        bound = 32
        deltas = np.arange(-2 * 8, 2 * 8 + 1) / 8.0 if quick \
            else np.arange(-34 * 8, 34 * 8 + 1) / 8.0
        grid = np.arange(bound + 1, dtype=np.float64)
        for delta in deltas:
            moved = clip_round(grid - delta, bound)
            limit = round_half_away(abs(delta))
            worst = np.max(np.abs(grid - moved))
            assert worst <= limit + 1e-12, \
                "delta %r moved a count by %r > %r" % (delta, worst, limit)
        return "%d deltas x %d counts" % (len(deltas), bound + 1)

    def rounding_halving():
        xs = np.arange(0, 65) / 8.0
        rounded = round_half_away(xs)
        assert np.all(rounded <= 2 * xs + 1e-12), "round(x) > 2x"
        equal = xs[np.isclose(rounded, 2 * xs)]
        assert set(np.round(equal, 6)) == {0.0, 0.5}, \
            "equality set %r != {0, 1/2}" % (equal,)
        return "grid step 1/8"

    def order_preservation():
        # Both claims reduce to adjacent entries once each pair of
        # consecutive maps is sorted by the same permutation.
        pairs = 0
        for _ in range(trials):
            cells = int(rng.integers(2, 17))
            bound = int(rng.integers(4, 65))
            budget = int(rng.integers(1, bound + 1))
            q0 = rng.uniform(0, bound, size=cells)
            maps = [r.q.reshape(-1)
                    for r in uniform_descent(q0, budget, bound, 100).records]
            for a, b in zip(maps, maps[1:]):
                perm = np.argsort(a, kind="stable")
                sa, sb = a[perm], b[perm]
                assert np.all(np.diff(sb) >= 0), "descent step broke ordering"
                assert np.all(np.diff(sb) <= np.diff(sa)), "a pairwise gap grew"
                pairs += 1
        return "%d consecutive map pairs" % pairs

    def descent_contraction():
        for _ in range(trials // 2):
            cells = int(rng.integers(2, 26))
            q0 = rng.uniform(0, 64, size=cells)
            trace = uniform_descent(q0, 16, 64, max_steps=100)
            deltas = np.abs(trace.deltas)
            assert np.all(np.diff(deltas) <= 1e-12), "|delta| grew during descent"
        return "%d trajectories" % (trials // 2)

    def allocation_exactness():
        for _ in range(20 if quick else 100):
            side = int(rng.integers(2, 5)) * 4
            sal = rng.uniform(0, 1, size=(side, side))
            budget = int(rng.integers(1, 16))
            _, qmap, trace = block_ratio_aggregation(sal, 4, budget, 16,
                                                     seed=int(rng.integers(1 << 31)))
            assert int(qmap.grid.sum()) == budget * qmap.grid.size, "sum off budget"
            assert qmap.grid.min() >= 0 and qmap.grid.max() <= 16, "bound violated"
        return "budget exact on every run"

    def truncation_energy():
        for n in (4, 16):
            data = rng.normal(size=(n, n * 3))
            bank = svd_init(data)
            sigma = np.linalg.svd(data, compute_uv=False)
            for q in range(1, n + 1):
                part = truncate(bank, q)
                err = np.linalg.norm(part.T @ (part @ data) - data) ** 2
                tail = float(np.sum(sigma[q:] ** 2))
                assert abs(err - tail) <= 1e-8 * max(tail, 1.0), \
                    "truncation energy mismatch at n=%d q=%d" % (n, q)
            gram = bank.rows @ bank.rows.T
            assert np.max(np.abs(gram - np.eye(n))) < 1e-8, "rows not orthonormal"
        return "N in {4, 16}, every q"

    def recovery_limits():
        image = rng.uniform(0, 1, size=(12, 17))
        data = rng.normal(size=(16, 64))
        bank = svd_init(data, block_size=4)
        grid = unfold(image, 4)
        full = transpose_initialize(sample_blocks(grid, bank, 16), bank)
        assert np.max(np.abs(full - image)) <= 1e-8, "full-rate init not exact"
        empty = transpose_initialize(sample_blocks(grid, bank, 0), bank)
        assert np.max(np.abs(empty)) == 0.0, "zero-rate init not zero"
        return "r=1 exact, r=0 zero"

    def dihedral_roundtrip():
        image = rng.uniform(size=(9, 9))
        for t in DihedralTransform.all_elements():
            back = t.invert(t.apply(image))
            assert np.array_equal(back, image), "transform %s not undone" % t.name
        return "all 8 transforms"

    def wire_roundtrip():
        from .block_codec import measurements_from_bytes, measurements_to_bytes
        from .matrix_bank import load_matrix as _lm, save_matrix as _sm
        import tempfile

        data = rng.normal(size=(16, 40))
        bank = svd_init(data, block_size=4)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "a.casm")
            _sm(bank, path)
            again = _lm(path)
            assert np.array_equal(again.rows, bank.rows), "matrix round trip drifted"
        image = rng.uniform(size=(8, 12))
        meas = sample_blocks(unfold(image, 4), bank,
                             rng.integers(0, 17, size=(2, 3)))
        again = measurements_from_bytes(measurements_to_bytes(meas))
        for a, b in zip(again.vectors, meas.vectors):
            assert np.array_equal(a, b.astype(np.float32).astype(np.float64)), \
                "measurement round trip drifted"
        return "CASM and CASY round trips"

    checks.append(_check("descent terminal bound", descent_bound))
    checks.append(_check("bounded rounding distance", rounding_distance))
    checks.append(_check("rounding halving bound", rounding_halving))
    checks.append(_check("order preservation", order_preservation))
    checks.append(_check("descent contraction", descent_contraction))
    checks.append(_check("allocation exactness", allocation_exactness))
    checks.append(_check("truncation energy", truncation_energy))
    checks.append(_check("recovery limits", recovery_limits))
    checks.append(_check("dihedral round trip", dihedral_roundtrip))
    checks.append(_check("wire round trip", wire_roundtrip))
    return checks


def cmd_selfcheck(args):
    seed = _seed(args)
    checks = _selfcheck_suite(args.quick, seed)
    failed = [c for c in checks if not c["ok"]]
    report = {"seed": seed, "quick": bool(args.quick), "checks": checks,
              "failed": len(failed)}
    lines = []
    for c in checks:
        mark = "ok  " if c["ok"] else "FAIL"
        lines.append("%s %-26s %s" % (mark, c["name"], c["detail"]))
    lines.append("%d/%d checks passed" % (len(checks) - len(failed), len(checks)))
    _emit(args, report, lines)
    return 1 if failed else 0


def _add_common(sub, json_flag=True):
    sub.add_argument("--seed", type=int, default=None,
                     help="seed for every stochastic choice (default 0)")
    sub.add_argument("--config", default=None,
                     help="JSON file with defaults; flags override it")
    sub.add_argument("--threads", default=None,
                     help="worker cap (default $CASCS_THREADS or 1)")
    sub.add_argument("--verbose", action="store_true")
    if json_flag:
        sub.add_argument("--json", action="store_true",
                         help="print a machine-readable summary")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cascs",
        description="Block compressed sensing: sampling, allocation, recovery.",
    )
    parser.add_argument("--version", action="version",
                        version="cascs %s" % __version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init-matrix",
                       help="build a generating matrix from image patches")
    p.add_argument("--patches", required=True, help="directory of PGM/PNG images")
    p.add_argument("--block", type=int, default=32)
    p.add_argument("--out", required=True)
    p.add_argument("--precision", type=int, choices=(32, 64), default=64)
    _add_common(p)
    p.set_defaults(func=cmd_init_matrix)

    p = sub.add_parser("analyze-matrix", help="orthogonality diagnostics")
    p.add_argument("matrix")
    p.add_argument("--json", nargs="?", const="-", default=None,
                   help="write the JSON report here ('-' for stdout)")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", default=None)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_analyze_matrix)

    p = sub.add_parser("allocate",
                       help="saliency-driven measurement allocation")
    p.add_argument("--image", required=True)
    p.add_argument("--ratio", type=float, required=True)
    p.add_argument("--block", type=int, default=32)
    p.add_argument("--out", required=True, help="ratio map JSON path")
    p.add_argument("--trace", default=None, help="correction trace CSV path")
    _add_common(p)
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("simulate-bra",
                       help="convergence statistics of the correction loop")
    p.add_argument("--blocks", type=int, required=True)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--budget", type=int, default=512)
    p.add_argument("--bound", type=int, default=1024)
    p.add_argument("--csv", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_simulate_bra)

    p = sub.add_parser("sample", help="measure an image block by block")
    p.add_argument("--image", required=True)
    p.add_argument("--matrix", required=True)
    p.add_argument("--ratio", type=float, default=None)
    p.add_argument("--ratios", default=None, help="ratio map JSON path")
    p.add_argument("--uniform", action="store_true",
                   help="spread round(ratio*N*blocks) rows evenly")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("reconstruct", help="phase recovery from measurements")
    p.add_argument("--meas", required=True,
                   help="one .casy path, or several comma-separated passes")
    p.add_argument("--matrix", required=True)
    p.add_argument("--ratios", default=None)
    p.add_argument("--phases", type=int, default=None)
    p.add_argument("--prox", default=None, help="zero | dct:lambda=V,tile=T")
    p.add_argument("--rte", choices=("on", "off"), default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--log", default=None, help="per-phase fidelity CSV")
    _add_common(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("pipeline", help="end-to-end sampling and recovery")
    p.add_argument("--image", required=True)
    p.add_argument("--matrix", required=True)
    p.add_argument("--ratio", type=float, required=True)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--mode", choices=("deployed", "ideal", "uniform"),
                   default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    p.add_argument("--handoff", default=None,
                   help="directory for the wire-format message files")
    p.add_argument("--phases", type=int, default=None)
    p.add_argument("--prox", default=None)
    p.add_argument("--rte", choices=("on", "off"), default=None)
    _add_common(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("gamma-sweep",
                       help="deployed quality across the basic-pass fraction")
    p.add_argument("--images", required=True, help="directory of test images")
    p.add_argument("--matrix", required=True)
    p.add_argument("--ratios", required=True, help="comma-separated ratios")
    p.add_argument("--grid", type=int, default=21,
                   help="number of gamma points on [0, 1]")
    p.add_argument("--csv", default=None)
    p.add_argument("--phases", type=int, default=None)
    p.add_argument("--prox", default=None)
    p.add_argument("--rte", choices=("on", "off"), default=None)
    _add_common(p)
    p.set_defaults(func=cmd_gamma_sweep)

    p = sub.add_parser("selfcheck", help="run the property suite")
    p.add_argument("--quick", action="store_true",
                   help="small instance sizes, a few seconds")
    _add_common(p)
    p.set_defaults(func=cmd_selfcheck)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except (FormatError, ConvergenceError, ValueError, OSError) as exc:
        sys.stderr.write("cascs: error: %s\n" % exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
