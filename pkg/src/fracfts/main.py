#!/usr/bin/env python3
"""
FracFTS 命令行工具

子命令 check / simulate / sweep / verify / reproduce。
结果 JSON 写到 stdout，日志写到 stderr。

退出码：0 已证明/检查通过，1 未被充分条件证明或检查失败（不表示不稳定），
2 界无意义（溢出），3 输入错误，4 输出错误。
"""

import argparse
import sys
from pathlib import Path
from typing import Any, Callable, List, Optional, Union

from pydantic import ValidationError

from config.settings import settings
from .core.certificate import certificate_exit_code, compute_certificate, sweep_table
from .core.config_loader import build_query, build_system, load_run_config
from .core.errors import FracFtsError, OutputError, SpecValidationError
from .core.fixedpoint import verify_fixed_point
from .core.simulator import disturbance_envelope_run, integrate
from .utils.logging_config import get_logger, setup_logging
from .utils.output_writer import to_json_text, write_json, write_sweep_csv, write_trajectory_csv

logger = get_logger("cli")

EXIT_OK = 0
EXIT_NOT_CERTIFIED = 1
EXIT_VACUOUS = 2
EXIT_INPUT_ERROR = 3
EXIT_OUTPUT_ERROR = 4

# 仓库自带的两个示例配置
PROJECT_ROOT = Path(__file__).resolve().parents[2]
DEFAULT_CONFIG_DIR = PROJECT_ROOT / "configs"
REPRODUCE_FIXTURES = ("example1.json", "example2.json")


def _emit(data: Any) -> None:
    sys.stdout.write(to_json_text(data))
    sys.stdout.flush()


def _load(config_path: Union[str, Path]):
    config = load_run_config(config_path)
    return config, build_system(config), build_query(config)


def _output_dir(config, out: Optional[str]) -> Path:
    return Path(out) if out else Path(config.output.directory)


def cmd_check(config_path: Union[str, Path]) -> int:
    """计算证书并输出 JSON 报告"""
    _, spec, query = _load(config_path)
    cert = compute_certificate(spec, query)
    _emit(cert.report())
    if cert.certified:
        logger.info(f"Certified: D={cert.D:.6g} <= eps2={query.eps2:g}")
    elif cert.C is not None:
        logger.info(
            f"Not certified by this sufficient condition (C={cert.C:.6g}, D={cert.D:.6g}, "
            f"eps2={query.eps2:g}); this does not mean the system is unstable"
        )
    return certificate_exit_code(cert)


def _parse_step(value: str) -> Optional[float]:
    if value == "auto":
        return None
    try:
        return float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"step must be 'auto' or a number, got {value!r}")


def cmd_simulate(
    config_path: Union[str, Path],
    step: Optional[float] = None,
    samples: Optional[int] = None,
    seed: Optional[int] = None,
    out: Optional[str] = None,
) -> int:
    """
    积分名义系统并运行扰动包络检查，写轨迹 CSV 与摘要 JSON

    Returns:
        int: 所有运行都不超过 ε2 时为 0，否则为 1
    """
    config, spec, query = _load(config_path)
    solver = config.solver
    step = step if step is not None else solver.step
    samples = samples if samples is not None else solver.samples
    seed = seed if seed is not None else solver.seed

    trajectory = integrate(spec, step, solver.corrector_iters)
    envelope = disturbance_envelope_run(spec, query, samples, seed, step, solver.corrector_iters)

    nominal_ok = not trajectory.blow_up and trajectory.sup_norm <= query.eps2
    summary = {
        **trajectory.summary().model_dump(),
        "samples": samples,
        "seed": seed,
        "eps2": query.eps2,
        "within_eps2": nominal_ok,
        "envelope": envelope.model_dump(mode="json"),
    }

    directory = _output_dir(config, out)
    write_trajectory_csv(directory / config.output.trajectory_csv, trajectory)
    write_json(directory / config.output.summary_json, summary)
    _emit(summary)
    return EXIT_OK if nominal_ok and envelope.all_within_eps2 else EXIT_NOT_CERTIFIED


def cmd_sweep(
    config_path: Union[str, Path],
    eta_min: float = 0.1,
    eta_max: float = 10.0,
    points: Optional[int] = None,
    out: Optional[str] = None,
) -> int:
    """η 扫描：写 eta,C,D,verdict_D 表，输出最优行"""
    config, spec, query = _load(config_path)
    points = settings.eta_search_points if points is None else points
    sweep = sweep_table(spec, query, eta_min, eta_max, points)
    best = sweep.certificate

    write_sweep_csv(_output_dir(config, out) / config.output.sweep_csv, sweep.rows)
    _emit({"best": sweep.best_row().model_dump(mode="json"), "certificate": best.report()})
    return certificate_exit_code(best)


def cmd_verify(config_path: Union[str, Path], step: Optional[float] = None) -> int:
    """不动点构造的端到端验证"""
    config, spec, query = _load(config_path)
    solver = config.solver
    report = verify_fixed_point(
        spec,
        query,
        max_iters=solver.picard_max_iters,
        tol=solver.picard_tol,
        step=step if step is not None else solver.step,
        corrector_iters=solver.corrector_iters,
    )
    _emit(report.model_dump(mode="json"))
    if not report.picard.converged:
        logger.warning(f"Picard iteration did not converge (last ratio {report.picard.last_ratio})")
    return EXIT_OK if report.passed else EXIT_NOT_CERTIFIED


def cmd_reproduce(config_dir: Union[str, Path, None] = None) -> int:
    """对两个示例配置运行 check，输出两个证书组成的 JSON 数组"""
    config_dir = Path(config_dir) if config_dir else DEFAULT_CONFIG_DIR
    reports = []
    all_certified = True
    for name in REPRODUCE_FIXTURES:
        _, spec, query = _load(config_dir / name)
        cert = compute_certificate(spec, query)
        reports.append({"config": name, **cert.report()})
        all_certified = all_certified and cert.certified
    _emit(reports)
    return EXIT_OK if all_certified else EXIT_NOT_CERTIFIED


def run_command(func: Callable[..., int], *args, **kwargs) -> int:
    """执行子命令并把异常映射为退出码"""
    try:
        return func(*args, **kwargs)
    except OutputError as e:
        logger.error(f"Output error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_OUTPUT_ERROR
    except (SpecValidationError, ValidationError, OSError) as e:
        logger.error(f"Input error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except FracFtsError as e:
        logger.error(f"Computation failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracfts",
        description="分数阶时滞系统鲁棒有限时间稳定性证书工具",
    )
    parser.add_argument(
        "--log-level",
        type=str.upper,
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        default=None,
        help="日志级别（默认取配置）",
    )
    subparsers = parser.add_subparsers(dest="command", required=True, help="可用命令")

    check_parser = subparsers.add_parser("check", help="计算证书并给出结论")
    check_parser.add_argument("config", help="JSON 配置文件")

    simulate_parser = subparsers.add_parser("simulate", help="数值积分与扰动包络检查")
    simulate_parser.add_argument("config", help="JSON 配置文件")
    simulate_parser.add_argument("--step", type=_parse_step, default=None, help="步长或 auto")
    simulate_parser.add_argument("--samples", type=int, default=None, help="随机样本数")
    simulate_parser.add_argument("--seed", type=int, default=None, help="随机种子")
    simulate_parser.add_argument("--out", default=None, help="输出目录")

    sweep_parser = subparsers.add_parser("sweep", help="扫描 η")
    sweep_parser.add_argument("config", help="JSON 配置文件")
    sweep_parser.add_argument("--eta-min", type=float, default=0.1, help="η 下限")
    sweep_parser.add_argument("--eta-max", type=float, default=10.0, help="η 上限")
    sweep_parser.add_argument("--points", type=int, default=None, help="对数网格点数")
    sweep_parser.add_argument("--out", default=None, help="输出目录")

    verify_parser = subparsers.add_parser("verify", help="Picard 迭代与先验界验证")
    verify_parser.add_argument("config", help="JSON 配置文件")
    verify_parser.add_argument("--step", type=_parse_step, default=None, help="步长或 auto")

    reproduce_parser = subparsers.add_parser("reproduce", help="复现两个示例的证书")
    reproduce_parser.add_argument("config_dir", nargs="?", default=None, help="示例配置目录")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)

    if args.command == "check":
        return run_command(cmd_check, args.config)
    if args.command == "simulate":
        return run_command(cmd_simulate, args.config, args.step, args.samples, args.seed, args.out)
    if args.command == "sweep":
        return run_command(cmd_sweep, args.config, args.eta_min, args.eta_max, args.points, args.out)
    if args.command == "verify":
        return run_command(cmd_verify, args.config, args.step)
    if args.command == "reproduce":
        return run_command(cmd_reproduce, args.config_dir)
    parser.error(f"unknown command {args.command}")
    return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
