"""
pdiff_cli.py - 노이즈 라벨 실험 CLI

사용 예:
    python pdiff_cli.py run --config configs/blobs_sym40_pdiff.env --train.epochs 30
    python pdiff_cli.py drop-curve --config configs/blobs_sym40_pdiff.env --probe-epoch 2 --strategy both
    python pdiff_cli.py summarize runs/pdiff_seed0/metrics.jsonl
    python pdiff_cli.py compare runs/*/metrics.jsonl --out compare.xlsx
    python pdiff_cli.py grad-check --dims 6,5,3 --trials 20
"""

import argparse
import logging
import sys
from dataclasses import asdict
from typing import List, Optional

from components import format_ratio, show_friendly_error
from config import configure_logging
from errors import ArgumentError
from nn import gradient_check
from runner import CONFIG_KEYS, compare, drop_curve, parse_config, run, summarize

logger = logging.getLogger("pdiff")

GRAD_CHECK_TOLERANCE = 1e-4


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    """설정 파일의 모든 키를 --점.표기 플래그로 노출 (파일 값보다 우선)"""
    parser.add_argument("--config", help="key = value 형식의 설정 파일")
    group = parser.add_argument_group("설정 오버라이드")
    for key in CONFIG_KEYS:
        group.add_argument(f"--{key}", dest=f"cfg:{key}", metavar="VALUE", default=None)


def _overrides(args: argparse.Namespace) -> dict:
    return {
        name[len("cfg:"):]: value
        for name, value in vars(args).items()
        if name.startswith("cfg:") and value is not None
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="확률 차이 기반 노이즈 라벨 샘플 선택 실험")
    parser.add_argument("--log-level", default=None, help="DEBUG/INFO/WARNING (기본: PDIFF_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="설정대로 학습 실행")
    _add_config_flags(p_run)

    p_curve = sub.add_parser("drop-curve", help="드롭 비율별 실제 노이즈 비율 곡선")
    _add_config_flags(p_curve)
    p_curve.add_argument("--probe-epoch", type=int, default=2)
    p_curve.add_argument("--strategy", choices=["delta", "py", "both"], default="both")

    p_sum = sub.add_parser("summarize", help="metrics.jsonl 요약")
    p_sum.add_argument("metrics", nargs="+")

    p_cmp = sub.add_parser("compare", help="여러 실행 요약 비교표")
    p_cmp.add_argument("metrics", nargs="+")
    p_cmp.add_argument("--out", default=None, help=".csv 또는 .xlsx 저장 경로")

    p_grad = sub.add_parser("grad-check", help="역전파 유한차분 검증")
    p_grad.add_argument("--dims", default="6,5,3", help="쉼표 구분 레이어 차원")
    p_grad.add_argument("--batch", type=int, default=5)
    p_grad.add_argument("--trials", type=int, default=20)
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--reduction", choices=["mean", "sum"], default="mean")
    return parser


def _cmd_run(args) -> int:
    cfg = parse_config(args.config, _overrides(args))
    summary = run(cfg)
    print(f"mode={summary.mode} 평균 정확도(마지막 {min(10, summary.epochs)} 에포크)="
          f"{summary.avg_test_acc_last10:.4f} τ_est={format_ratio(summary.final_tau_est)} "
          f"결과={summary.output_dir}")
    return 0


def _cmd_drop_curve(args) -> int:
    cfg = parse_config(args.config, _overrides(args))
    strategies = ["delta", "py"] if args.strategy == "both" else [args.strategy]
    for strategy in strategies:
        curve = drop_curve(cfg, args.probe_epoch, strategy)
        print(f"# strategy={strategy} probe_epoch={args.probe_epoch}")
        print(curve.to_string(index=False))
    return 0


def _cmd_summarize(args) -> int:
    for path in args.metrics:
        summary = summarize(path)
        fields = asdict(summary)
        fields["tau_est_error"] = summary.tau_est_error
        print(path)
        for name, value in fields.items():
            print(f"  {name}: {value}")
    return 0


def _cmd_compare(args) -> int:
    summaries = [summarize(path) for path in args.metrics]
    print(compare(summaries, args.out))
    return 0


def _cmd_grad_check(args) -> int:
    try:
        dims = [int(part) for part in args.dims.split(",")]
    except ValueError:
        raise ArgumentError(f"--dims 형식 오류: {args.dims}") from None

    worst = 0.0
    for trial in range(args.trials):
        error = gradient_check(dims, args.batch, args.seed + trial, reduction=args.reduction)
        worst = max(worst, error)
        logger.debug("trial %d: 상대오차 %.3e", trial, error)
    print(f"{args.trials}회 중 최대 상대오차 {worst:.3e} (허용 {GRAD_CHECK_TOLERANCE:.0e})")
    return 0 if worst <= GRAD_CHECK_TOLERANCE else 1


COMMANDS = {
    "run": _cmd_run,
    "drop-curve": _cmd_drop_curve,
    "summarize": _cmd_summarize,
    "compare": _cmd_compare,
    "grad-check": _cmd_grad_check,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except Exception as e:
        return show_friendly_error(e, context=args.command)


if __name__ == "__main__":
    sys.exit(main())
