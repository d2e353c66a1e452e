"""ukboot：分阶段启动

平台初始化 → 堆内存准备 → 启动分配器 → 可选主分配器（在启动分配器
退役后的剩余区域上）→ 可选调度器 → 调用应用 main。
每个阶段的耗时记录在 BootReport 中，跳过的阶段记 0。
"""
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.alloc.base import AllocatorHandle, BackendKind, align_up
from src.alloc.ukalloc import AllocatorRegistry, alloc_init, reset_registry, set_default_allocator
from src.boot.platform import (
    PAGE_SIZE,
    PROCESS_ENTRY_NS,
    MemoryRegion,
    MemoryStrategy,
    Platform,
    monotonic_ns,
)
from src.errors import BootError
from src.sched.scheduler import Scheduler, sched_create

logger = logging.getLogger(__name__)

STAGES = ("platform_init", "heap_provision", "boot_alloc_init", "main_alloc_init", "sched_init")
BOOT_INFO_MAX = 4096


class BootConfig(BaseModel):
    """启动配置"""

    model_config = ConfigDict(arbitrary_types_allowed=True, use_enum_values=False)

    heap_bytes: int = Field(64 * 1024 * 1024, gt=0)
    memory_strategy: MemoryStrategy = MemoryStrategy.ON_DEMAND
    boot_allocator: Optional[BackendKind] = BackendKind.REGION
    main_allocator: Optional[BackendKind] = None
    with_scheduler: bool = False
    main: Optional[Callable[..., Any]] = None
    cmdline: str = ""
    alloc: Dict[str, Any] = Field(default_factory=dict)
    sched: Dict[str, Any] = Field(default_factory=dict)

    @classmethod
    def from_config(cls, section: Dict[str, Any], **overrides: Any) -> "BootConfig":
        """由 boot 配置段构建，校验失败报 bad_config"""
        data = {k: v for k, v in section.items() if k in cls.model_fields}
        data.update(overrides)
        try:
            return cls(**data)
        except ValidationError as e:
            raise BootError(BootError.BAD_CONFIG, f"启动配置无效: {e}")

    def digest(self) -> str:
        data = self.model_dump(mode="json", exclude={"main"})
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode("utf-8")).hexdigest()


class BootReport(BaseModel):
    """各阶段耗时（纳秒）"""

    platform_init: int = 0
    heap_provision: int = 0
    boot_alloc_init: int = 0
    main_alloc_init: int = 0
    sched_init: int = 0
    total_to_main: int = 0
    memory_strategy: str = ""
    boot_allocator: Optional[str] = None
    main_allocator: Optional[str] = None
    with_scheduler: bool = False
    stages: List[str] = Field(default_factory=list)
    exit_code: int = 0

    def stage_sum(self) -> int:
        return sum(getattr(self, s) for s in STAGES)


@dataclass
class BootContext:
    """传给应用 main 的启动上下文"""

    platform: Platform
    region: MemoryRegion
    registry: AllocatorRegistry
    config: BootConfig
    allocator: Optional[AllocatorHandle] = None
    boot_allocator: Optional[AllocatorHandle] = None
    main_allocator: Optional[AllocatorHandle] = None
    scheduler: Optional[Scheduler] = None
    boot_info: Optional[int] = None
    extras: Dict[str, Any] = field(default_factory=dict)


def apply_boot_env(cfg: BootConfig) -> BootConfig:
    """UK_HEAP_BYTES / UK_MEM_STRATEGY 覆盖启动配置"""
    updates: Dict[str, Any] = {}
    heap = os.environ.get("UK_HEAP_BYTES")
    if heap:
        updates["heap_bytes"] = heap
    strategy = os.environ.get("UK_MEM_STRATEGY")
    if strategy:
        updates["memory_strategy"] = strategy
    if not updates:
        return cfg
    data = cfg.model_dump()
    data.update(updates)
    try:
        return BootConfig(**data)
    except ValidationError as e:
        raise BootError(BootError.BAD_CONFIG, f"环境变量覆盖无效: {e}")


def _write_boot_info(ctx: BootContext) -> None:
    """从启动分配器分配启动信息块（命令行和配置摘要）"""
    info = f"{ctx.config.cmdline}\0{ctx.config.digest()}\0".encode("utf-8")[:BOOT_INFO_MAX]
    block = ctx.boot_allocator.allocate(len(info))
    ctx.region.write(block, info)
    ctx.boot_info = block


def boot(
    cfg: BootConfig,
    *,
    platform_config: Optional[Dict[str, Any]] = None,
    apply_env: bool = True,
    context_hook: Optional[Callable[[BootContext], None]] = None,
) -> BootReport:
    """执行启动流程并运行 main

    Args:
        cfg: 启动配置
        platform_config: 平台配置
        apply_env: 是否应用环境变量覆盖
        context_hook: main 之前对上下文的额外准备（装配网络、文件系统等）

    Returns:
        BootReport: main 返回后的启动报告
    """
    if apply_env:
        cfg = apply_boot_env(cfg)
    report = BootReport(
        memory_strategy=cfg.memory_strategy.value,
        boot_allocator=cfg.boot_allocator.value if cfg.boot_allocator else None,
        main_allocator=cfg.main_allocator.value if cfg.main_allocator else None,
        with_scheduler=cfg.with_scheduler,
    )
    registry = reset_registry()

    platform = Platform(platform_config)
    report.platform_init = platform.init()
    report.stages.append("platform_init")

    start = monotonic_ns()
    region = platform.provision_heap(cfg.memory_strategy.value, cfg.heap_bytes)
    report.heap_provision = monotonic_ns() - start
    report.stages.append("heap_provision")

    ctx = BootContext(platform=platform, region=region, registry=registry, config=cfg)

    if cfg.boot_allocator is not None:
        ctx.boot_allocator = alloc_init(cfg.boot_allocator, 0, cfg.heap_bytes, region, config=cfg.alloc, registry=registry)
        report.boot_alloc_init = ctx.boot_allocator.stats.init_ns
        report.stages.append("boot_alloc_init")
        _write_boot_info(ctx)
        ctx.allocator = ctx.boot_allocator

        if cfg.main_allocator is not None:
            mark = align_up(ctx.boot_allocator.watermark(), PAGE_SIZE)
            if mark >= cfg.heap_bytes:
                raise BootError(BootError.HEAP_UNAVAILABLE, "启动分配器退役后没有剩余堆空间")
            ctx.boot_allocator.retire(mark)
            ctx.main_allocator = alloc_init(
                cfg.main_allocator, mark, cfg.heap_bytes - mark, region, config=cfg.alloc, registry=registry
            )
            set_default_allocator(ctx.main_allocator, registry)
            report.main_alloc_init = ctx.main_allocator.stats.init_ns
            report.stages.append("main_alloc_init")
            ctx.allocator = ctx.main_allocator
    elif cfg.main_allocator is not None:
        raise BootError(BootError.BAD_CONFIG, "主分配器需要启动分配器")

    if cfg.with_scheduler:
        start = monotonic_ns()
        ctx.scheduler = sched_create(platform, cfg.sched)
        report.sched_init = monotonic_ns() - start
        report.stages.append("sched_init")

    if context_hook is not None:
        context_hook(ctx)

    logger.info(
        f"启动完成: 堆 {cfg.heap_bytes} 字节 ({cfg.memory_strategy.value}), "
        f"分配器 {report.boot_allocator}/{report.main_allocator}, 调度器 {cfg.with_scheduler}"
    )
    report.total_to_main = monotonic_ns() - PROCESS_ENTRY_NS
    result = _run_main(cfg, ctx)
    report.exit_code = result if isinstance(result, int) and not isinstance(result, bool) else 0
    return report


def _run_main(cfg: BootConfig, ctx: BootContext) -> Any:
    if cfg.main is None:
        return 0
    if ctx.scheduler is None:
        # 运行到完成：main 直接占用启动上下文
        return cfg.main(ctx)
    thread = ctx.scheduler.thread_create(cfg.main, ctx)
    ctx.scheduler.run()
    return thread.result
