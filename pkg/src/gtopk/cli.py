"""Command-line harness: training runs, collective benchmarks, cost tables, self checks.

Consumers are scripts and CI. Every subcommand emits CSV (stdout or --out);
the in-process backend is the default so nothing needs a real cluster. Set
GTOPK_LOG=debug for transport-level logging.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import collectives, cost_model, models, optimizer, sparse, transport

log = logging.getLogger("gtopk.cli")

TRAIN_HEADER = (
    "iteration,epoch,loss,rho,k,t_compute_ms,t_compress_ms,t_communicate_ms,lost_mass"
)
BENCH_HEADER = collectives.CollectiveStats.CSV_HEADER + ",wall_ms_std"
COST_HEADER = "algorithm,P,m,rho,predicted_ms"

ALGOS = ("dense", "topk", "gtopk", "gtopk-naive")


@dataclass
class RunConfig:
    algo: str = "gtopk"
    P: int = 4
    backend: str = "local"
    model: str = "least-squares"
    m: int | None = None
    d: int = 64
    hidden: int = 8
    n: int = 1024
    b: int = 16
    lr: float | None = None
    epochs: int | None = None
    iters: int = 100
    rho: float = 0.001
    warmup: tuple[float, ...] = ()
    k: int | None = None
    seed: int = 0
    momentum: float = 0.0
    out: str | None = None
    log_timings: bool = True
    compare_naive: bool = True
    hosts: str | None = None
    rank: int | None = None
    repeats: int = 10
    warmup_reps: int = 3


@dataclass
class TrainRun:
    rows: list[str]
    summary: dict
    weights: np.ndarray

    def summary_line(self) -> str:
        parts = ",".join(f"{k}={v}" for k, v in self.summary.items())
        return f"# summary,{parts}"


def build_model(cfg: RunConfig) -> models.ToyModel:
    if cfg.model == "least-squares":
        c = 1
        if cfg.m is not None:
            if cfg.m % cfg.d != 0:
                raise ValueError(f"--m {cfg.m} must be a multiple of --d {cfg.d}")
            c = cfg.m // cfg.d
        return models.ToyModel("least-squares", cfg.d, c=c)
    if cfg.model == "logistic":
        return models.ToyModel("logistic", cfg.d)
    if cfg.model == "mlp2":
        return models.ToyModel("mlp2", cfg.d, c=2, h=cfg.hidden)
    raise ValueError(f"unknown model {cfg.model!r}")


def default_lr(model: models.ToyModel, ds: models.SyntheticDataset) -> float:
    if model.kind == "least-squares":
        L = models.gram_lipschitz(ds.inputs)
        return 1.0 / L if L > 0 else 0.1
    return 0.1


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def run_training(cfg: RunConfig, dataset: models.SyntheticDataset | None = None) -> TrainRun:
    """Run one S-SGD experiment and return the log rows plus a summary.

    A dataset may be injected (replacing the generated one) for constructed
    experiments; it must match the model's input dimension.
    """
    if cfg.algo not in ALGOS:
        raise ValueError(f"unknown algorithm {cfg.algo!r}")
    model = build_model(cfg)
    ds = dataset if dataset is not None else models.gen_dataset(
        model.kind, cfg.n, cfg.d, cfg.seed, c=model.c
    )
    if ds.d != model.d:
        raise ValueError(f"dataset dim {ds.d} does not match model dim {model.d}")
    per_iter = cfg.b * cfg.P
    if per_iter > ds.n:
        raise ValueError(f"b*P = {per_iter} oversubscribes dataset of {ds.n} samples")
    iters_per_epoch = ds.n // per_iter
    iters = cfg.iters if cfg.epochs is None else cfg.epochs * iters_per_epoch

    lr = cfg.lr if cfg.lr is not None else default_lr(model, ds)
    log.info(
        "train algo=%s P=%d model=%s m=%d iters=%d lr=%g",
        cfg.algo, cfg.P, model.kind, model.m, iters, lr,
    )
    schedule = optimizer.DensitySchedule(cfg.warmup, cfg.rho)
    w0 = models.init_params(model, cfg.seed)
    m = model.m
    measure = cfg.compare_naive and cfg.algo in ("gtopk", "gtopk-naive")
    step_fn = optimizer.STEP_FNS[cfg.algo]

    def worker(ep: transport.Endpoint):
        state = optimizer.make_state(w0, lr, momentum=cfg.momentum)
        reports = []
        for it in range(iters):
            epoch = it // iters_per_epoch
            rho = optimizer.density_at(schedule, epoch)
            k = cfg.k if cfg.k is not None else sparse.k_from_density(rho, m)
            shard = models.shard_batches(ds, cfg.P, cfg.b, it)[ep.rank]
            batch = (ds.inputs[shard], ds.targets[shard])
            t0 = time.perf_counter()
            loss, g = models.grad(model, state.weights, batch)
            t_compute = (time.perf_counter() - t0) * 1e3
            if cfg.algo == "dense":
                rho, k = 1.0, m
                rep = step_fn(state, ep, g, cfg.P, loss=loss, t_compute_ms=t_compute)
            elif cfg.algo == "topk":
                rep = step_fn(
                    state, ep, g, k, cfg.P, loss=loss, t_compute_ms=t_compute
                )
            else:
                rep = step_fn(
                    state,
                    ep,
                    g,
                    k,
                    cfg.P,
                    loss=loss,
                    t_compute_ms=t_compute,
                    measure_divergence=measure,
                )
            reports.append((it, epoch, rho, k, rep))
        return state, reports

    t_start = time.perf_counter()
    if cfg.backend == "local":
        endpoints = transport.create_local_cluster(cfg.P)
        outs = transport.run_workers(endpoints, worker)
    else:
        if cfg.hosts is None or cfg.rank is None:
            raise ValueError("tcp backend needs --hosts and --rank")
        addresses = transport.load_hosts_file(cfg.hosts)
        tcp_cfg = transport.ClusterConfig(cfg.P, "tcp", addresses)
        ep = transport.connect_tcp_cluster(tcp_cfg, cfg.rank)
        try:
            outs = [worker(ep)]
        finally:
            ep.close()
    total_wall = (time.perf_counter() - t_start) * 1e3

    states = [s for s, _ in outs]
    all_reports = [r for _, r in outs]
    for s in states[1:]:
        if not np.array_equal(s.weights, states[0].weights):
            raise RuntimeError("replica weights diverged across ranks")

    rows = []
    timings_on = cfg.log_timings
    for i, (it, epoch, rho, k, rep0) in enumerate(all_reports[0]):
        mean_loss = float(np.mean([reps[i][4].loss for reps in all_reports]))
        tc = rep0.t_compute_ms if timings_on else 0.0
        tz = rep0.t_compress_ms if timings_on else 0.0
        tm = rep0.t_communicate_ms if timings_on else 0.0
        rows.append(
            f"{it},{epoch},{_fmt(mean_loss)},{_fmt(rho)},{k},"
            f"{_fmt(tc)},{_fmt(tz)},{_fmt(tm)},{_fmt(rep0.lost_mass)}"
        )

    final_weights = states[0].weights
    final_loss = models.loss_value(model, final_weights, (ds.inputs, ds.targets))
    divergences = [r[4].divergence for r in all_reports[0] if r[4].divergence is not None]
    summary = {
        "algo": cfg.algo,
        "P": cfg.P,
        "model": model.kind,
        "m": m,
        "iters": iters,
        "final_loss": _fmt(final_loss),
        "divergence_rate": _fmt(float(np.mean(divergences))) if divergences else "",
        "total_wall_ms": _fmt(total_wall) if timings_on else "0",
        "t_compute_total_ms": _fmt(
            sum(r[4].t_compute_ms for r in all_reports[0]) if timings_on else 0.0
        ),
        "t_compress_total_ms": _fmt(
            sum(r[4].t_compress_ms for r in all_reports[0]) if timings_on else 0.0
        ),
        "t_communicate_total_ms": _fmt(
            sum(r[4].t_communicate_ms for r in all_reports[0]) if timings_on else 0.0
        ),
    }
    if model.kind in ("logistic", "mlp2"):
        summary["accuracy"] = _fmt(
            models.predict_accuracy(model, final_weights, ds.inputs, ds.targets)
        )
    return TrainRun(rows, summary, final_weights)


def _emit(lines: list[str], out: str | None) -> None:
    text = "\n".join(lines) + "\n"
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_train(cfg: RunConfig) -> int:
    run = run_training(cfg)
    _emit([TRAIN_HEADER, *run.rows, run.summary_line()], cfg.out)
    if cfg.out:
        sys.stdout.write(run.summary_line() + "\n")
    return 0


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


def run_bench(cfg: RunConfig) -> list[str]:
    """Time each collective over repeats, reporting per-rank stats rows."""
    P, m = cfg.P, cfg.m if cfg.m is not None else 10000
    k = cfg.k if cfg.k is not None else sparse.k_from_density(cfg.rho, m)
    rng = np.random.default_rng(cfg.seed)
    dense_in = [rng.standard_normal(m).astype(sparse.FLOAT) for _ in range(P)]
    sparse_in = [sparse.top_k_select(v, k)[0] for v in dense_in]

    rows = []
    for algo in ("dense", "topk", "gtopk"):
        endpoints = transport.create_local_cluster(P)

        def worker(ep: transport.Endpoint, algo=algo):
            g, s = dense_in[ep.rank], sparse_in[ep.rank]

            def once():
                if algo == "dense":
                    collectives.dense_ring_allreduce(ep, g)
                elif algo == "topk":
                    collectives.topk_allreduce(ep, s, P)
                else:
                    collectives.gtopk_allreduce(ep, s, k, P)

            for _ in range(cfg.warmup_reps):
                once()
            walls = []
            before = ep.stats.snapshot()
            for _ in range(cfg.repeats):
                t0 = time.perf_counter()
                once()
                walls.append((time.perf_counter() - t0) * 1e3)
            delta = ep.stats.snapshot().delta(before)
            stats = collectives.CollectiveStats(
                collective=algo,
                P=P,
                m=m,
                k=k,
                rank=ep.rank,
                bytes_sent=delta.bytes_sent // cfg.repeats,
                bytes_recv=delta.bytes_recv // cfg.repeats,
                msgs=delta.msgs_sent // cfg.repeats,
                rounds=collectives.comm_rounds(algo, P),
                wall_ms=float(np.mean(walls)),
            )
            return stats, float(np.std(walls))

        for stats, std in transport.run_workers(endpoints, worker):
            rows.append(f"{stats.csv_row()},{std:.6f}")
    return rows


def cmd_bench(cfg: RunConfig) -> int:
    rows = run_bench(cfg)
    _emit([BENCH_HEADER, *rows], cfg.out)
    return 0


# ---------------------------------------------------------------------------
# cost model tables
# ---------------------------------------------------------------------------


def run_cost_model(
    alpha: float,
    beta: float,
    sweep: str,
    values: list[int],
    m: int,
    P: int,
    rho: float,
) -> list[str]:
    if sweep == "P":
        table = cost_model.curve_rows(alpha, beta, m, rho, values)
    elif sweep == "m":
        table = cost_model.size_sweep_rows(alpha, beta, P, rho, values)
    else:
        raise ValueError(f"sweep must be 'P' or 'm', got {sweep!r}")
    return [
        f"{r['algorithm']},{r['P']},{r['m']},{_fmt(r['rho'])},{_fmt(r['predicted_ms'])}"
        for r in table
    ]


def cmd_cost_model(args) -> int:
    if args.fit:
        samples = []
        with open(args.fit, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith(("#", "size")):
                    continue
                size_s, time_s = line.split(",")[:2]
                samples.append((float(size_s), float(time_s)))
        fit = cost_model.fit_alpha_beta(samples)
        alpha, beta = fit.alpha, fit.beta
    elif args.alpha is not None and args.beta is not None:
        alpha, beta = args.alpha, args.beta
    else:
        alpha, beta = cost_model.PRESETS[args.preset]
    values = [int(float(v)) for v in args.values.split(",")]
    rows = run_cost_model(
        alpha, beta, args.sweep, values, int(args.m), args.P, args.rho
    )
    _emit([COST_HEADER, *rows], args.out)
    return 0


# ---------------------------------------------------------------------------
# selftest
# ---------------------------------------------------------------------------


def _check_sparse_partition():
    rng = np.random.default_rng(11)
    for _ in range(200):
        m = int(rng.integers(1, 65))
        k = int(rng.integers(1, m + 1))
        g = rng.standard_normal(m).astype(sparse.FLOAT)
        sel, res = sparse.top_k_select(g, k)
        assert np.array_equal(sparse.densify(sel) + res, g)
        assert sel.nnz == k


def _check_top_op_oracle():
    rng = np.random.default_rng(12)
    for _ in range(200):
        m = int(rng.integers(2, 65))
        k = int(rng.integers(1, m + 1))
        a, _ = sparse.top_k_select(rng.standard_normal(m).astype(sparse.FLOAT), k)
        b, _ = sparse.top_k_select(rng.standard_normal(m).astype(sparse.FLOAT), k)
        merged = sparse.top_op(a, b, k)
        dense_sum = sparse.densify(a) + sparse.densify(b)
        want, _ = sparse.top_k_select(dense_sum, k)
        keep = want.values != 0
        assert np.array_equal(merged.indices, want.indices[keep])
        assert np.array_equal(merged.values, want.values[keep])


def _check_serialization():
    rng = np.random.default_rng(13)
    for _ in range(200):
        m = int(rng.integers(1, 200))
        k = int(rng.integers(1, m + 1))
        s, _ = sparse.top_k_select(rng.standard_normal(m).astype(sparse.FLOAT), k)
        assert transport.decode_sparse(transport.encode_sparse(s), m) == s


def _tree_fold(inputs, k):
    acc = dict(enumerate(inputs))
    P = len(inputs)
    for j in range(1, collectives.ceil_log2(P) + 1):
        half = 1 << (j - 1)
        for r in range(0, P, 1 << j):
            if r + half < P:
                acc[r] = sparse.top_op(acc[r + half], acc[r], k)
    return acc[0]


def _check_gtopk_tree():
    rng = np.random.default_rng(14)
    for P in (2, 3, 4, 8):
        endpoints = transport.create_local_cluster(P)
        for _ in range(25):
            m = int(rng.integers(4, 33))
            k = int(rng.integers(1, 5))
            ins = [
                sparse.top_k_select(
                    rng.standard_normal(m).astype(sparse.FLOAT), min(k, m)
                )[0]
                for _ in range(P)
            ]
            want = _tree_fold(ins, min(k, m))
            outs = transport.run_workers(
                endpoints,
                lambda ep: collectives.gtopk_allreduce(
                    ep, ins[ep.rank], min(k, m), P
                ),
            )
            for res in outs:
                assert res.global_topk == want


def _check_topk_allreduce():
    rng = np.random.default_rng(15)
    P = 4
    endpoints = transport.create_local_cluster(P)
    for _ in range(50):
        m = int(rng.integers(4, 33))
        k = int(rng.integers(1, m + 1))
        ins = [
            sparse.top_k_select(rng.standard_normal(m).astype(sparse.FLOAT), k)[0]
            for _ in range(P)
        ]
        want = np.zeros(m, dtype=sparse.FLOAT)
        for s in ins:
            want[s.indices] += s.values
        want /= sparse.FLOAT(P)
        outs = transport.run_workers(
            endpoints, lambda ep: collectives.topk_allreduce(ep, ins[ep.rank], P)
        )
        for res in outs:
            assert np.array_equal(res, want)


def _check_dense_ring():
    rng = np.random.default_rng(16)
    P = 4
    endpoints = transport.create_local_cluster(P)
    for _ in range(25):
        m = int(rng.integers(4, 65))
        ins = [rng.standard_normal(m).astype(sparse.FLOAT) for _ in range(P)]
        want = np.sum(np.stack(ins).astype(np.float64), axis=0)
        outs = transport.run_workers(
            endpoints, lambda ep: collectives.dense_ring_allreduce(ep, ins[ep.rank])
        )
        for res in outs:
            assert np.allclose(res, want, rtol=1e-4, atol=1e-5)


def _check_cost_values():
    p = cost_model.CostParams(0.436, 3.6e-5, 32, 25_000_000, 0.001)
    for fn, want in ((cost_model.t_dense, 1770.78), (cost_model.t_topk, 57.98), (cost_model.t_gtopk, 22.36)):
        got = fn(p)
        assert abs(got - want) / want < 1e-3, (fn.__name__, got, want)


def _check_fit():
    samples = [(s, 0.4 + 1e-5 * s) for s in (100, 1000, 10000, 100000)]
    fit = cost_model.fit_alpha_beta(samples)
    assert abs(fit.alpha - 0.4) < 1e-9 and abs(fit.beta - 1e-5) < 1e-9


def _check_gradients():
    rng = np.random.default_rng(17)
    for model in (
        models.ToyModel("least-squares", 6, c=2),
        models.ToyModel("logistic", 6),
        models.ToyModel("mlp2", 5, c=2, h=4),
    ):
        ds = models.gen_dataset(model.kind, 8, model.d, seed=3, c=model.c)
        batch = (ds.inputs[:1], ds.targets[:1])
        for _ in range(10):
            params = rng.standard_normal(model.m).astype(sparse.FLOAT) * 0.5
            _, g = models.grad(model, params, batch)
            h = 1e-3
            for i in rng.choice(model.m, size=min(4, model.m), replace=False):
                up = params.astype(np.float64).copy()
                dn = up.copy()
                up[i] += h
                dn[i] -= h
                fd = (
                    models.loss_value(model, up, batch)
                    - models.loss_value(model, dn, batch)
                ) / (2 * h)
                assert abs(fd - float(g[i])) <= 1e-5 + 1e-2 * abs(fd), (
                    model.kind,
                    i,
                    fd,
                    float(g[i]),
                )


def _check_residual_invariants():
    rng = np.random.default_rng(18)
    P, m, k = 2, 16, 3
    endpoints = transport.create_local_cluster(P)
    grads = [
        [rng.standard_normal(m).astype(sparse.FLOAT) for _ in range(P)]
        for _ in range(20)
    ]

    def worker(ep):
        state = optimizer.make_state(np.zeros(m, dtype=sparse.FLOAT), lr=0.1)
        for it in range(20):
            before = state.residual + grads[it][ep.rank]
            sel, after_sel = sparse.top_k_select(before, k)
            optimizer.gtopk_step(state, ep, grads[it][ep.rank], k, P)
            # Mass conservation of the local selection.
            assert np.array_equal(sparse.densify(sel) + after_sel, before)
            # Post-step residual differs from after_sel only at selected
            # indices, by exactly the selected value (returned) or zero (kept).
            diff = state.residual - after_sel
            untouched = np.ones(m, dtype=bool)
            untouched[sel.indices] = False
            assert not diff[untouched].any()
            at_sel = diff[sel.indices]
            assert np.all((at_sel == 0) | (at_sel == sel.values))
        return state.weights

    outs = transport.run_workers(endpoints, worker)
    assert np.array_equal(outs[0], outs[1])


SELFTEST_CHECKS = [
    ("sparse_partition", _check_sparse_partition),
    ("top_op_oracle", _check_top_op_oracle),
    ("sparse_serialization", _check_serialization),
    ("gtopk_tree_equivalence", _check_gtopk_tree),
    ("topk_allreduce_exact", _check_topk_allreduce),
    ("dense_ring_allreduce", _check_dense_ring),
    ("cost_model_values", _check_cost_values),
    ("alpha_beta_fit", _check_fit),
    ("gradient_finite_difference", _check_gradients),
    ("residual_invariants", _check_residual_invariants),
]


def cmd_selftest() -> int:
    failed = []
    for name, fn in SELFTEST_CHECKS:
        try:
            fn()
        except Exception as exc:  # noqa: BLE001 - report and continue
            failed.append(name)
            print(f"FAIL {name}: {exc}")
        else:
            print(f"ok {name}")
    if failed:
        print(f"selftest FAILED: {', '.join(failed)}")
        return 1
    print("selftest passed")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _parse_warmup(text: str) -> tuple[float, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(float(x) for x in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gtopk", description="sparse-gradient collectives and S-SGD harness"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run a training experiment")
    train.add_argument("--algo", choices=ALGOS, default="gtopk")
    train.add_argument("--P", type=int, default=4)
    train.add_argument("--backend", choices=("local", "tcp"), default="local")
    train.add_argument("--model", choices=("least-squares", "logistic", "mlp2"),
                       default="least-squares")
    train.add_argument("--m", type=lambda v: int(float(v)), default=None)
    train.add_argument("--d", type=int, default=64)
    train.add_argument("--hidden", type=int, default=8)
    train.add_argument("--n", type=int, default=1024)
    train.add_argument("--b", type=int, default=16)
    train.add_argument("--lr", type=float, default=None)
    train.add_argument("--epochs", type=int, default=None)
    train.add_argument("--iters", type=int, default=100)
    train.add_argument("--rho", type=float, default=0.001)
    train.add_argument("--warmup", type=str, default="")
    train.add_argument("--k", type=int, default=None)
    train.add_argument("--momentum", type=float, default=0.0)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--out", type=str, default=None)
    train.add_argument("--hosts", type=str, default=None)
    train.add_argument("--rank", type=int, default=None)
    train.add_argument("--no-timings", action="store_true",
                       help="write zeros for wall-clock columns (bitwise-reproducible logs)")
    train.add_argument("--no-compare-naive", action="store_true",
                       help="skip the tree-vs-reference divergence diagnostics")

    bench = sub.add_parser("bench", help="benchmark the collectives")
    bench.add_argument("--P", type=int, default=4)
    bench.add_argument("--m", type=lambda v: int(float(v)), default=1_000_000)
    bench.add_argument("--rho", type=float, default=0.001)
    bench.add_argument("--k", type=int, default=None)
    bench.add_argument("--repeats", type=int, default=10)
    bench.add_argument("--warmup-reps", type=int, default=3)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out", type=str, default=None)

    cost = sub.add_parser("cost-model", help="emit predicted-time tables")
    cost.add_argument("--preset", choices=sorted(cost_model.PRESETS), default="paper-1gbe")
    cost.add_argument("--alpha", type=float, default=None)
    cost.add_argument("--beta", type=float, default=None)
    cost.add_argument("--fit", type=str, default=None,
                      help="CSV of size_elements,time_ms point-to-point samples")
    cost.add_argument("--sweep", choices=("P", "m"), default="P")
    cost.add_argument("--values", type=str, default="4,8,16,32,64,128")
    cost.add_argument("--m", type=lambda v: int(float(v)), default=25_000_000)
    cost.add_argument("--P", type=int, default=32)
    cost.add_argument("--rho", type=float, default=0.001)
    cost.add_argument("--out", type=str, default=None)

    sub.add_parser("selftest", help="run oracle and invariant checks")
    return parser


def _train_config(args) -> RunConfig:
    return RunConfig(
        algo=args.algo,
        P=args.P,
        backend=args.backend,
        model=args.model,
        m=args.m,
        d=args.d,
        hidden=args.hidden,
        n=args.n,
        b=args.b,
        lr=args.lr,
        epochs=args.epochs,
        iters=args.iters,
        rho=args.rho,
        warmup=_parse_warmup(args.warmup),
        k=args.k,
        seed=args.seed,
        momentum=args.momentum,
        out=args.out,
        log_timings=not args.no_timings,
        compare_naive=not args.no_compare_naive,
        hosts=args.hosts,
        rank=args.rank,
    )


def main(argv=None) -> int:
    level = os.environ.get("GTOPK_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "train":
            return cmd_train(_train_config(args))
        if args.command == "bench":
            cfg = RunConfig(
                P=args.P,
                m=args.m,
                rho=args.rho,
                k=args.k,
                seed=args.seed,
                out=args.out,
                repeats=args.repeats,
                warmup_reps=args.warmup_reps,
            )
            return cmd_bench(cfg)
        if args.command == "cost-model":
            return cmd_cost_model(args)
        if args.command == "selftest":
            return cmd_selftest()
    except (ValueError, FileNotFoundError) as exc:
        parser.exit(2, f"error: {exc}\n")
    except transport.TransportError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
