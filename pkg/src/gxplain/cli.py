"""Command-line pipeline: generate data, train, explain, evaluate, export.

Exit codes: 0 success, 2 usage or input/output problems, 3 computation
failures (diverging training, missing explanations, incompatible inputs).
"""

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .datasets import generate_ba2motifs, load_dataset, save_dataset
from .errors import (
    GxplainError,
    InvalidBudget,
    InvalidCount,
    ParseError,
    VersionMismatch,
)
from .explain import (
    ExplainConfig,
    HardConcreteConfig,
    explain,
    load_explanation,
    save_explanation,
)
from .metrics import evaluate, save_report, write_eval_csv
from .model import load_model, save_model
from .oracle import MAX_ORACLE_NODES, oracle_report, save_oracle_result
from .training import evaluate_accuracy, train_model

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_COMPUTE = 3

JOBS_ENV_VAR = "GXPLAIN_JOBS"

_USAGE_ERRORS = (ParseError, VersionMismatch, InvalidCount, InvalidBudget)


def _default_jobs() -> int:
    raw = os.environ.get(JOBS_ENV_VAR, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _select_graphs(dataset, split: str, ids: str | None):
    if ids:
        wanted = [s.strip() for s in ids.split(",") if s.strip()]
        by_id = {g.graph_id: g for g in dataset.graphs}
        missing = [w for w in wanted if w not in by_id]
        if missing:
            raise ParseError(f"unknown graph ids: {', '.join(missing)}")
        return [by_id[w] for w in wanted]
    if split == "all":
        return list(dataset.graphs)
    return dataset.split_graphs(split)


def cmd_gen_dataset(args) -> int:
    out = Path(args.out)
    if out.exists() and not args.force:
        print(
            f"refusing to overwrite {out} (use --force)", file=sys.stderr
        )
        return EXIT_USAGE
    dataset = generate_ba2motifs(args.n, args.seed)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(dataset, out)
    avg_nodes = sum(g.node_count for g in dataset.graphs) / len(dataset.graphs)
    print(
        f"dataset kind={args.kind} graphs={len(dataset.graphs)}"
        f" avg_nodes={avg_nodes:.3f} classes={dataset.num_classes}"
        f" out={out}"
    )
    return EXIT_OK


def cmd_train(args) -> int:
    dataset = load_dataset(args.dataset)
    result = train_model(
        dataset,
        hidden_dims=tuple([args.hidden] * args.layers),
        learning_rate=args.lr,
        epochs=args.epochs,
        seed=args.seed,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(result.model, out)
    test_acc = evaluate_accuracy(
        result.model, dataset.split_graphs("test")
    )
    train_acc = result.train_accuracy[-1] if result.train_accuracy else float("nan")
    val_acc = (
        result.validation_accuracy[-1]
        if result.validation_accuracy
        else float("nan")
    )
    print(
        f"accuracy train={train_acc:.6f} val={val_acc:.6f}"
        f" test={test_acc:.6f}"
    )
    return EXIT_OK


def _config_from_args(args) -> ExplainConfig:
    return ExplainConfig(
        epochs=args.epochs,
        learning_rate=args.lr,
        lambda_edge_size=args.lambda_edge_size,
        lambda_attr_size=args.lambda_attr_size,
        lambda_edge_entropy=args.lambda_edge_entropy,
        lambda_attr_entropy=args.lambda_attr_entropy,
        agg1=args.agg1,
        agg2=args.agg2,
        pair_agg=args.pair_agg,
        mode=args.mode,
        sharing=args.sharing,
        hard_concrete=HardConcreteConfig(
            beta=args.beta,
            stochastic=not args.deterministic,
            seed=args.seed,
        ),
    )


def _explain_one(job) -> str:
    model, g, config, out_dir, want_oracle = job
    explanation = explain(model, g, config)
    path = Path(out_dir) / f"{g.graph_id}.json"
    save_explanation(explanation, config, path)
    if want_oracle and g.node_count <= MAX_ORACLE_NODES:
        budget = min(5, g.node_count)
        result = oracle_report(model, g, budget)
        save_oracle_result(
            result, g, Path(out_dir) / f"{g.graph_id}.oracle.json"
        )
    return g.graph_id


def cmd_explain(args) -> int:
    model = load_model(args.model)
    dataset = load_dataset(args.dataset)
    graphs = _select_graphs(dataset, args.split, args.ids)
    config = _config_from_args(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(model, g, config, str(out_dir), args.oracle) for g in graphs]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            done = list(pool.map(_explain_one, jobs))
    else:
        done = [_explain_one(job) for job in jobs]
    print(f"explained graphs={len(done)} out_dir={out_dir}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_model(args.model)
    dataset = load_dataset(args.dataset)
    graphs = _select_graphs(dataset, args.split, None)
    explanations = {}
    missing = []
    for g in graphs:
        path = Path(args.explanations) / f"{g.graph_id}.json"
        if not path.exists():
            missing.append(g.graph_id)
            continue
        explanations[g.graph_id], _ = load_explanation(path)
    if missing:
        print(
            f"missing explanations for: {', '.join(missing)}",
            file=sys.stderr,
        )
        return EXIT_COMPUTE
    report = evaluate(
        model,
        graphs,
        explanations,
        k=args.top_k,
        rate=args.top_r,
        attr_top=args.attr_top,
    )
    sparsity_txt = (
        "nan" if report.sparsity is None else f"{report.sparsity:.6f}"
    )
    line = (
        f"ep_explained={_fmt(report.ep_explained)}"
        f" ep_remaining={_fmt(report.ep_remaining)}"
        f" sparsity={sparsity_txt}"
        f" eligible={report.eligible_count}"
    )
    if args.attr_top is not None:
        line += f" ep_attribute={_fmt(report.ep_attribute)}"
    print(line)
    if args.report:
        save_report(report, args.report)
    if args.csv:
        rows = list(report.per_graph)
        if args.sweep:
            rows = []
            max_n = max((g.node_count for g in graphs), default=0)
            min_k_by_id = {r.graph_id: r.min_k for r in report.per_graph}
            for budget in range(1, max_n + 1):
                swept = evaluate(
                    model,
                    graphs,
                    explanations,
                    k=budget,
                    compute_sparsity=False,
                )
                for row in swept.per_graph:
                    row.min_k = min_k_by_id.get(row.graph_id)
                    rows.append(row)
        write_eval_csv(args.csv, rows)
    return EXIT_OK


def _fmt(value) -> str:
    return "nan" if value is None else f"{value:.6f}"


def _dot_quote(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def render_dot(explanation, attr_top: int = 3) -> str:
    """Deterministic DOT text: darker fill = higher node score, wider
    pen = higher edge score; tooltips carry exact scores."""
    lines = [f'digraph "{_dot_quote(explanation.graph_id)}" {{']
    lines.append(
        f'  graph [label="{_dot_quote(explanation.graph_id)}'
        f' predicted={explanation.original_prediction}'
        f' p={explanation.original_probability:.4f}"];'
    )
    lines.append("  node [shape=circle, style=filled];")
    n_attrs = explanation.attr_score.shape[1] if explanation.node_count else 0
    for i in range(explanation.node_count):
        score = float(explanation.node_score[i])
        bucket = min(9, max(0, int(score * 10.0)))
        gray = 95 - 8 * bucket
        font = "white" if bucket >= 6 else "black"
        top = []
        if n_attrs:
            row = explanation.attr_score[i]
            order = sorted(range(n_attrs), key=lambda j: (-row[j], j))
            top = [f"a{j}={row[j]:.3f}" for j in order[:attr_top]]
        tooltip = f"score={score:.4f}"
        if top:
            tooltip += "; " + ", ".join(top)
        lines.append(
            f'  n{i} [label="{i}", fillcolor="gray{gray}",'
            f' fontcolor="{font}", tooltip="{tooltip}"];'
        )
    for (s, d), score in zip(explanation.arcs, explanation.edge_score):
        width = 0.5 + 3.5 * float(score)
        lines.append(
            f"  n{s} -> n{d} [penwidth={width:.3f},"
            f' tooltip="{float(score):.4f}"];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


def cmd_export_dot(args) -> int:
    in_dir = Path(args.explanations)
    if not in_dir.is_dir():
        print(f"not a directory: {in_dir}", file=sys.stderr)
        return EXIT_USAGE
    files = sorted(
        p
        for p in in_dir.glob("*.json")
        if not p.name.endswith(".oracle.json")
    )
    if not files:
        print(f"no explanation files in {in_dir}", file=sys.stderr)
        return EXIT_USAGE
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for path in files:
        explanation, _ = load_explanation(path)
        text = render_dot(explanation, attr_top=args.attr_top)
        target = out_dir / (path.stem + ".dot")
        tmp = target.with_name(target.name + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, target)
    print(f"exported graphs={len(files)} out_dir={out_dir}")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gxplain",
        description=(
            "Train small graph classifiers and explain their predictions"
            " with learned edge and attribute masks."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-dataset", help="generate a synthetic dataset")
    gen.add_argument("--kind", choices=["ba2motifs"], default="ba2motifs")
    gen.add_argument("--n", type=int, default=1000)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.add_argument("--force", action="store_true")
    gen.set_defaults(func=cmd_gen_dataset)

    train = sub.add_parser("train", help="train a classifier")
    train.add_argument("--dataset", required=True)
    train.add_argument("--out", required=True)
    train.add_argument("--hidden", type=int, default=20)
    train.add_argument("--layers", type=int, default=3)
    train.add_argument("--lr", type=float, default=0.001)
    train.add_argument("--epochs", type=int, default=300)
    train.add_argument("--seed", type=int, default=0)
    train.set_defaults(func=cmd_train)

    exp = sub.add_parser("explain", help="explain predictions")
    exp.add_argument("--model", required=True)
    exp.add_argument("--dataset", required=True)
    exp.add_argument("--out-dir", required=True)
    exp.add_argument(
        "--split",
        choices=["train", "validation", "test", "all"],
        default="test",
    )
    exp.add_argument("--ids", help="comma-separated graph ids")
    exp.add_argument("--epochs", type=int, default=300)
    exp.add_argument("--lr", type=float, default=0.01)
    exp.add_argument("--lambda-edge-size", type=float, default=0.005)
    exp.add_argument("--lambda-attr-size", type=float, default=0.05)
    exp.add_argument("--lambda-edge-entropy", type=float, default=1.0)
    exp.add_argument("--lambda-attr-entropy", type=float, default=0.1)
    exp.add_argument("--agg1", choices=["max", "mean"], default="max")
    exp.add_argument("--agg2", choices=["max", "mean"], default="max")
    exp.add_argument(
        "--pair-agg", choices=["mean", "max", "min"], default="mean"
    )
    exp.add_argument(
        "--mode",
        choices=["full", "edge_only", "attribute_only"],
        default="full",
    )
    exp.add_argument(
        "--sharing",
        choices=[
            "independent",
            "undirected_pair_shared",
            "per_node_attr_shared",
            "global_attr_shared",
        ],
        default="independent",
    )
    exp.add_argument("--beta", type=float, default=0.5)
    exp.add_argument(
        "--deterministic",
        action="store_true",
        help="use u = 0.5 instead of sampled gates",
    )
    exp.add_argument("--seed", type=int, default=0)
    exp.add_argument("--jobs", type=int, default=_default_jobs())
    exp.add_argument(
        "--oracle",
        action="store_true",
        help="also write exhaustive oracle results for small graphs",
    )
    exp.set_defaults(func=cmd_explain)

    ev = sub.add_parser("eval", help="score explanations against the model")
    ev.add_argument("--model", required=True)
    ev.add_argument("--dataset", required=True)
    ev.add_argument("--explanations", required=True)
    ev.add_argument(
        "--split",
        choices=["train", "validation", "test", "all"],
        default="test",
    )
    budget = ev.add_mutually_exclusive_group(required=True)
    budget.add_argument("--top-k", type=int)
    budget.add_argument("--top-r", type=float)
    ev.add_argument("--attr-top", type=int)
    ev.add_argument("--csv")
    ev.add_argument("--report")
    ev.add_argument(
        "--sweep",
        action="store_true",
        help="CSV rows for every node budget from 1 to the largest graph",
    )
    ev.set_defaults(func=cmd_eval)

    dot = sub.add_parser("export-dot", help="render explanations as DOT")
    dot.add_argument("--explanations", required=True)
    dot.add_argument("--out-dir", required=True)
    dot.add_argument("--attr-top", type=int, default=3)
    dot.set_defaults(func=cmd_export_dot)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GxplainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
