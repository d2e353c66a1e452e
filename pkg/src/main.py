"""uklibos 命令行入口"""
import argparse
import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from src.boot.boot import BootContext, BootReport, boot
from src.composer.generators import (
    BuildPlan,
    app_config_from_plan,
    boot_config_from_plan,
    emit_build_plan,
    emit_dot,
    size_report,
)
from src.composer.manifest import Registry, load_registry, parse_selections
from src.composer.resolver import ResolvedGraph, resolve
from src.config import load_config
from src.errors import BenchError, UkError

REPO_ROOT = Path(__file__).resolve().parent.parent
BENCH_KINDS = ("alloc-init", "alloc-work", "net-batch", "dispatch", "fs-open", "kv", "heap")


def _int_list(text: str) -> List[int]:
    return [int(x, 0) for x in text.split(",") if x]


def _str_list(text: str) -> List[str]:
    return [x for x in text.split(",") if x]


class UkLibOS:
    """组合、运行与基准测试的入口"""

    def __init__(self, config: Dict[str, Any]):
        """初始化

        Args:
            config: 完整配置
        """
        self.config = config
        self.logger = self._setup_logger()
        # 相对路径按仓库根目录解析
        self.composer = {
            k: (str(REPO_ROOT / v) if k.endswith("_dir") and not Path(v).is_absolute() else v)
            for k, v in config.get("composer", {}).items()
        }
        self.libs_dir = Path(self.composer.get("libs_dir", REPO_ROOT / "libs"))
        self._registry: Optional[Registry] = None

    def _setup_logger(self) -> logging.Logger:
        """设置日志记录器

        Returns:
            logging.Logger: 日志记录器
        """
        section = self.config.get("logging", {})
        level = getattr(logging, str(section.get("level", "INFO")).upper(), logging.INFO)
        logger = logging.getLogger("src")
        logger.setLevel(level)
        if logger.handlers:
            return logger

        formatter = logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")

        # 控制台处理器走 stderr，stdout 留给命令输出
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(level)
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)

        if section.get("file", True):
            log_dir = Path(section.get("dir", "logs"))
            log_dir.mkdir(parents=True, exist_ok=True)
            log_file = log_dir / f"uklibos_{datetime.now().strftime('%Y%m%d')}.log"
            file_handler = logging.FileHandler(log_file, encoding="utf-8")
            file_handler.setLevel(level)
            file_handler.setFormatter(formatter)
            logger.addHandler(file_handler)
        return logger

    # ---- 组合 ----

    @property
    def registry(self) -> Registry:
        if self._registry is None:
            self._registry = load_registry([self.libs_dir])
        return self._registry

    def resolve(self, selections: str) -> ResolvedGraph:
        try:
            sel = parse_selections(Path(selections), self.registry)
            return resolve(self.registry, sel)
        except UkError as e:
            self.logger.error(f"解析 {selections} 失败: {e}")
            raise

    def compose(self, selections: str) -> BuildPlan:
        return emit_build_plan(self.resolve(selections))

    def graph(self, selections: str) -> str:
        return emit_dot(self.resolve(selections), self.composer)

    def size(self, plan: BuildPlan) -> Dict[str, Any]:
        return size_report(plan, REPO_ROOT)

    def run(self, selections: str, app: Optional[str] = None, extras: Optional[Dict[str, Any]] = None) -> BootReport:
        """组合并启动

        Args:
            selections: 选择文件
            app: 要运行的应用
            extras: 传给应用的附加参数

        Returns:
            BootReport: 启动报告
        """
        plan = self.compose(selections)
        cfg = boot_config_from_plan(plan, self.registry, self.config, app)
        app_config = app_config_from_plan(plan, self.config)

        def hook(ctx: BootContext) -> None:
            ctx.extras["config"] = app_config
            ctx.extras["plan"] = plan
            ctx.extras.update(extras or {})

        try:
            report = boot(cfg, platform_config=self.config.get("platform"), context_hook=hook)
        except UkError as e:
            self.logger.error(f"启动失败: {e}")
            raise
        self.logger.info(f"{cfg.cmdline or selections} 退出, 退出码 {report.exit_code}")
        return report

    # ---- 基准 ----

    def bench(self, kind: str, args: argparse.Namespace) -> List[Any]:
        """运行一类基准测试

        Args:
            kind: 基准种类
            args: 命令行参数

        Returns:
            List[BenchResult]: 结果
        """
        from src.bench.alloc import bench_alloc_init, bench_alloc_workload, bench_heap_provision
        from src.bench.dispatch import bench_dispatch
        from src.bench.fs import bench_fs_open
        from src.bench.kv import kv_compare, kv_demo
        from src.bench.net import bench_net_batch
        from src.bench.results import BenchParams

        section = self.config.get("bench", {})
        params = BenchParams.from_config(
            section, reps=args.reps, heap_bytes=args.heap, duration=args.duration, seed=args.seed, warmup=args.warmup
        )
        progress = not args.quiet
        alloc_cfg = self.config.get("alloc", {})
        netdev_cfg = self.config.get("netdev", {})
        self.logger.info(f"基准 {kind}: {params.model_dump()}")

        if kind == "alloc-init":
            backends = args.backends or section.get("backends", ["region", "buddy", "tlsf", "tinyfree"])
            return bench_alloc_init(
                backends, params.heap_bytes, params.reps, warmup=params.warmup, config=alloc_cfg, progress=progress
            )
        if kind == "alloc-work":
            backends = args.backends or section.get("backends", ["region", "buddy", "tlsf", "tinyfree"])
            return [
                bench_alloc_workload(
                    b, args.pattern, args.ops, heap_bytes=params.heap_bytes, reps=params.reps, warmup=params.warmup,
                    seed=params.seed, check=args.check, config=alloc_cfg, progress=progress,
                )
                for b in backends
            ]
        if kind == "net-batch":
            return bench_net_batch(
                args.batches or [1, 32],
                params.duration,
                reps=params.reps,
                warmup=params.warmup,
                config=netdev_cfg,
                progress=progress,
            )
        if kind == "dispatch":
            return bench_dispatch(
                params.reps, args.invocations, warmup=params.warmup, host_call=args.host_call, progress=progress
            )
        if kind == "fs-open":
            return bench_fs_open(
                args.corpus, args.queries, reps=params.reps, seed=params.seed, warmup=params.warmup, progress=progress
            )
        if kind == "kv":
            if args.mode:
                return [
                    kv_demo(
                        args.mode, args.requests, reps=params.reps, warmup=params.warmup, seed=params.seed,
                        malformed_ratio=args.malformed, config=netdev_cfg, progress=progress,
                    )
                ]
            return kv_compare(
                args.requests, reps=params.reps, warmup=params.warmup, seed=params.seed,
                malformed_ratio=args.malformed, config=netdev_cfg, progress=progress,
            )
        if kind == "heap":
            return bench_heap_provision(
                args.strategies or ["prereserved", "on_demand"],
                args.sizes or [32 << 20, 256 << 20],
                params.reps,
                warmup=params.warmup,
                touch=args.touch,
                progress=progress,
            )
        raise BenchError(BenchError.BAD_PARAMS, f"未知的基准种类: {kind}")

    # ---- SHFS 镜像 ----

    def shfs_build(self, src_dir: str, out: str) -> int:
        """把目录下的普通文件打包成 SHFS 镜像，返回镜像字节数"""
        from src.fs.shfs import save, shfs_build

        root = Path(src_dir)
        files = sorted(p for p in root.iterdir() if p.is_file())
        image = shfs_build((p.name, p.read_bytes()) for p in files)
        size = save(image, out)
        self.logger.info(f"SHFS 镜像已写入 {out}: {len(image)} 个文件, {size} 字节")
        return size

    def shfs_ls(self, path: str) -> List[str]:
        from src.fs.shfs import load

        image = load(path)
        return [f"{e.name}\t{e.length}" for e in image.entries]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uklibos", description="微库组合、启动与基准测试")
    parser.add_argument("--config", default=None, help="配置文件路径")
    parser.add_argument("--log-level", default=None, help="日志级别")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compose", help="解析选择文件并输出构建计划")
    p.add_argument("selections")
    p.add_argument("--out", default=None)
    p.add_argument("--size", action="store_true", help="同时输出按组件的源文件体积")

    p = sub.add_parser("graph", help="输出依赖图 (DOT)")
    p.add_argument("selections")
    p.add_argument("--out", default=None)

    p = sub.add_parser("run", help="组合并启动一个应用")
    p.add_argument("selections")
    p.add_argument("--app", default=None)
    p.add_argument("--requests", type=int, default=None)

    p = sub.add_parser("bench", help="基准测试")
    p.add_argument("kind", choices=BENCH_KINDS)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--warmup", type=int, default=None)
    p.add_argument("--heap", type=lambda s: int(s, 0), default=None)
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--quiet", action="store_true", help="不显示进度条")
    p.add_argument("--backends", type=_str_list, default=None)
    p.add_argument("--pattern", choices=("churn", "ramp", "mixed"), default="churn")
    p.add_argument("--ops", type=int, default=100_000)
    p.add_argument("--check", action="store_true", help="用区间校验器检查每一步")
    p.add_argument("--batches", type=_int_list, default=None)
    p.add_argument("--invocations", type=int, default=1_000_000)
    p.add_argument("--host-call", choices=("fstat", "getppid"), default="fstat", help="host_trap 使用的宿主调用")
    p.add_argument("--corpus", type=int, default=1000)
    p.add_argument("--queries", type=int, default=10_000)
    p.add_argument("--requests", type=int, default=100_000)
    p.add_argument("--mode", choices=("layered", "specialized"), default=None)
    p.add_argument("--malformed", type=float, default=0.0)
    p.add_argument("--strategies", type=_str_list, default=None)
    p.add_argument("--sizes", type=_int_list, default=None)
    p.add_argument("--touch", action="store_true", help="堆准备后再逐页写一遍并单独计时")

    p = sub.add_parser("shfs", help="SHFS 镜像工具")
    shfs_sub = p.add_subparsers(dest="shfs_command", required=True)
    b = shfs_sub.add_parser("build")
    b.add_argument("src_dir")
    b.add_argument("out")
    ls = shfs_sub.add_parser("ls")
    ls.add_argument("image")
    return parser


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def main(argv: Optional[List[str]] = None) -> int:
    """主函数"""
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.log_level:
            config["logging"]["level"] = args.log_level
        system = UkLibOS(config)

        if args.command == "compose":
            plan = system.compose(args.selections)
            _emit(plan.to_json(), args.out)
            if args.size:
                report = system.size(plan)
                for name, nbytes in report["components"].items():
                    sys.stdout.write(f"{name}\t{nbytes}\n")
                sys.stdout.write(f"total\t{report['total']}\n")
        elif args.command == "graph":
            _emit(system.graph(args.selections), args.out)
        elif args.command == "run":
            extras = {"requests": args.requests} if args.requests else {}
            report = system.run(args.selections, args.app, extras)
            sys.stdout.write(report.model_dump_json(indent=2) + "\n")
            return report.exit_code
        elif args.command == "bench":
            from src.bench.results import write_results

            results = system.bench(args.kind, args)
            text = write_results(results, args.out, args.format)
            if not args.out:
                sys.stdout.write(text)
        elif args.command == "shfs":
            if args.shfs_command == "build":
                system.shfs_build(args.src_dir, args.out)
            else:
                for line in system.shfs_ls(args.image):
                    sys.stdout.write(line + "\n")
        return 0
    except UkError as e:
        print(f"uklibos: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
